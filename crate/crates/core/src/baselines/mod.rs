//! Reference completion methods and spectral diagnostics.

pub mod lowrank;
pub mod mean;
pub mod mf;
pub mod spectrum;
pub mod svt;

pub use lowrank::{lowrank_csv, lowrank_point, lowrank_track, LowRankPoint};
pub use mean::column_mean_impute;
pub use mf::{mf_als, MfConfig, MfResult};
pub use spectrum::{dft, fourier_spectrum, Spectrum};
pub use svt::{shrink, svt_complete, SvtConfig, SvtResult};
