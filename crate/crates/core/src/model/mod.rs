//! Axis networks, the factorized model and its file format.

pub mod expand;
pub mod factorized;
pub mod io;
pub mod lipschitz;
pub mod mlp;

pub use expand::{expand_sine_layer, ExpandedSine};
pub use factorized::{
    diagonal_core, forward_factorized, forward_grid, Axis, AxisDomain, FactorizedInr, ParamKind,
};
pub use io::{deserialize, serialize, ModelBundle, ModelKind, FORMAT_VERSION, MAGIC};
pub use lipschitz::{lipschitz_bound, LipschitzBound};
pub use mlp::{
    forward_mlp, init_bound, init_freq_mlp, Activation, FreqMlp, Linear, MlpConfig, SineLayer,
};
