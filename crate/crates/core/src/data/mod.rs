//! Grid fields, sampling, normalization, metrics and synthetic generators.

pub mod csv;
pub mod field;
pub mod metrics;
pub mod normalize;
pub mod observations;
pub mod synth;

pub use csv::{format_grid_csv, load_grid_csv, parse_grid_csv, save_grid_csv, GridLayout};
pub use field::GridField;
pub use metrics::{metrics, metrics_from_pairs, MetricsReport};
pub use normalize::{denormalize, normalize, AxisTransform, Normalizer};
pub use observations::{sample_mask, MaskMode, ObservationSet};
pub use synth::{synth_graph_signal, synth_low_rank, synth_wave_field, WaveParams};
