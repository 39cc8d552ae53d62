use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{NlosError, Result};
use crate::SPEED_OF_LIGHT;

/// Angular frequencies of a length-`T` DFT over bins of `bin_resolution_ps`.
///
/// `omega[k] = 2πk / (T·Δt)` for every `k` in `0..T`. Indices above `T/2`
/// alias to negative frequencies; [`FrequencyAxis::signed_omega`] applies
/// that map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyAxis {
    len: usize,
    bin_resolution_ps: f64,
    omega: Vec<f64>,
}

impl FrequencyAxis {
    pub fn new(len: usize, bin_resolution_ps: f64) -> Result<Self> {
        if len == 0 {
            return Err(NlosError::Domain("frequency axis needs at least one bin".into()));
        }
        if !(bin_resolution_ps > 0.0) || !bin_resolution_ps.is_finite() {
            return Err(NlosError::Domain(format!(
                "bin resolution must be positive, got {bin_resolution_ps} ps"
            )));
        }
        let step = 2.0 * PI / (len as f64 * bin_resolution_ps * 1e-12);
        let omega = (0..len).map(|k| step * k as f64).collect();
        Ok(Self {
            len,
            bin_resolution_ps,
            omega,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bin_resolution_ps(&self) -> f64 {
        self.bin_resolution_ps
    }

    pub fn bin_seconds(&self) -> f64 {
        self.bin_resolution_ps * 1e-12
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Spacing between adjacent angular frequencies, rad/s.
    pub fn step(&self) -> f64 {
        2.0 * PI / (self.len as f64 * self.bin_seconds())
    }

    /// Frequency of index `k` under the real-signal aliasing convention:
    /// indices above `T/2` are negative.
    pub fn signed_omega(&self, k: usize) -> f64 {
        let k = k % self.len;
        if 2 * k > self.len {
            -(self.step() * (self.len - k) as f64)
        } else {
            self.omega[k]
        }
    }

    /// Index holding the conjugate component of `k` for real signals.
    pub fn conjugate_index(&self, k: usize) -> usize {
        (self.len - k % self.len) % self.len
    }

    /// Index whose frequency is nearest a non-negative `omega`.
    pub fn nearest_index(&self, omega: f64) -> usize {
        let k = (omega / self.step()).round();
        (k.max(0.0) as usize).min(self.len - 1)
    }

    /// Index nearest the carrier of wavelength `lambda_m`,
    /// `round(T·Δt·c / λ)`.
    pub fn index_for_wavelength(&self, lambda_m: f64) -> usize {
        self.nearest_index(2.0 * PI * SPEED_OF_LIGHT / lambda_m)
    }
}

/// Builds the DFT frequency axis for `len` bins of `bin_resolution_ps`.
pub fn frequency_axis(len: usize, bin_resolution_ps: f64) -> Result<FrequencyAxis> {
    FrequencyAxis::new(len, bin_resolution_ps)
}
