//! Synthetic data generators.

mod manufactured;
mod multiscale;
mod noise;
mod spectral;

pub use manufactured::{advection_diffusion_fixture, forcing, manufactured, Fn1, Manufactured, Separable};
pub use multiscale::{fitting_problem, multiscale_1d, multiscale_value};
pub use noise::{add_noise, std_dev};
pub use spectral::{
    band_limited_ic, integrate, simulate_burgers, simulate_ks, spectral_derivative, PeriodicPde, PeriodicRun,
    SpectralGrid,
};
