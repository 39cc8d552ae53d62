//! Phasor-field non-line-of-sight imaging.
//!
//! The crate simulates three-bounce transients from point-scatterer scenes,
//! corrupts them with a SPAD counting model, turns them into band-limited
//! phasor wavefronts at the relay-wall aperture and propagates those back
//! into the hidden volume with Rayleigh-Sommerfeld diffraction.
//!
//! Arrays are time-major (`[T, ny, nx]`) or depth-major (`[nz, ny, nx]`).
//! All arithmetic runs in `f64`.

pub mod axis;
pub mod error;
mod fft;
pub mod grid;
pub mod metrics;
pub mod noise;
pub mod phasor;
pub mod render;
pub mod rsd;
pub mod sampling;
pub mod scene;
pub mod volume;

pub use axis::{frequency_axis, FrequencyAxis};
pub use error::{NlosError, Result};
pub use grid::{make_scan_grid, Lattice, ScanGrid};
pub use volume::{normalize_max, DepthAxis, ReconVolume, TransientVolume};

pub use num_complex::Complex64;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Lateral resolution of a virtual phasor camera, `0.61·λ·L/d`.
pub fn resolution_limit(lambda_m: f64, distance_m: f64, aperture_m: f64) -> Result<f64> {
    for (name, v) in [
        ("wavelength", lambda_m),
        ("imaging distance", distance_m),
        ("aperture diameter", aperture_m),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(NlosError::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(0.61 * lambda_m * distance_m / aperture_m)
}
