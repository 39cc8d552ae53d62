//! Virtual illumination packets and band-limited phasor wavefronts.
//!
//! A packet is a Gaussian-modulated carrier of wavelength `λ`. In the
//! frequency domain it is a Gaussian envelope around the carrier, rescaled
//! to peak 1 and truncated to the contiguous band `S` of indices whose
//! coefficient is at least `γ`. The envelope is centred on the DFT index
//! nearest the carrier, so the retained band is symmetric and has odd size.

use ndarray::{Array3, ArrayView3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::axis::FrequencyAxis;
use crate::error::{NlosError, Result};
use crate::fft;
use crate::grid::ScanGrid;
use crate::volume::TransientVolume;
use crate::SPEED_OF_LIGHT;

/// Default peak ratio.
pub const DEFAULT_GAMMA: f64 = 0.1;

/// Multipliers of `2Δp` giving the wavelengths of the input packets.
pub const INPUT_WAVELENGTH_COEFFS: [f64; 7] = [0.8, 0.9, 1.0, 1.25, 1.5, 2.0, 2.5];

/// Multiplier of `Δp` giving the target wavelength.
pub const TARGET_WAVELENGTH_COEFF: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlluminationPacket {
    lambda_m: f64,
    sigma_s: f64,
    omega_c: f64,
    center_index: usize,
    gamma: f64,
    band: Vec<usize>,
    coeffs: Vec<Complex64>,
    axis: FrequencyAxis,
}

impl IlluminationPacket {
    /// Packet with an explicit pulse width `sigma_s` (seconds).
    pub fn with_sigma(lambda_m: f64, sigma_s: f64, axis: &FrequencyAxis, gamma: f64) -> Result<Self> {
        if !(lambda_m > 0.0) || !lambda_m.is_finite() {
            return Err(NlosError::Configuration(format!(
                "wavelength must be positive, got {lambda_m}"
            )));
        }
        if !(sigma_s > 0.0) || !sigma_s.is_finite() {
            return Err(NlosError::Configuration(format!(
                "pulse width must be positive, got {sigma_s}"
            )));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(NlosError::Configuration(format!(
                "peak ratio must lie in (0, 1], got {gamma}"
            )));
        }
        let omega_c = 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / lambda_m;
        let nyquist = axis.len() / 2;
        let center_index = axis.nearest_index(omega_c);
        if center_index == 0 || omega_c / axis.step() > nyquist as f64 + 0.5 {
            return Err(NlosError::Configuration(format!(
                "wavelength {lambda_m} m puts the carrier at DFT index {:.2}, outside 1..={nyquist}",
                omega_c / axis.step()
            )));
        }
        let half = band_half_width(sigma_s, axis.step(), gamma);
        let lo = center_index.saturating_sub(half);
        let hi = center_index.saturating_add(half).min(nyquist);
        let band: Vec<usize> = (lo..=hi).collect();
        if band.is_empty() {
            return Err(NlosError::Configuration(
                "illumination band is empty; use fewer cycles".into(),
            ));
        }
        let coeffs = band
            .iter()
            .map(|&k| Complex64::new(envelope(sigma_s, axis.step(), k as i64 - center_index as i64), 0.0))
            .collect();
        Ok(Self {
            lambda_m,
            sigma_s,
            omega_c,
            center_index,
            gamma,
            band,
            coeffs,
            axis: axis.clone(),
        })
    }

    /// Flat (unit-coefficient) packet over an arbitrary contiguous index
    /// range; used for band-pass studies.
    pub fn flat(axis: &FrequencyAxis, lo: usize, hi: usize) -> Result<Self> {
        if lo > hi || hi >= axis.len() {
            return Err(NlosError::Configuration(format!(
                "band [{lo}, {hi}] is not inside an axis of {} bins",
                axis.len()
            )));
        }
        let center_index = (lo + hi) / 2;
        let omega_c = axis.signed_omega(center_index);
        let lambda_m = if omega_c > 0.0 {
            2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / omega_c
        } else {
            f64::INFINITY
        };
        Ok(Self {
            lambda_m,
            sigma_s: 0.0,
            omega_c,
            center_index,
            gamma: 1.0,
            band: (lo..=hi).collect(),
            coeffs: vec![Complex64::new(1.0, 0.0); hi - lo + 1],
            axis: axis.clone(),
        })
    }

    pub fn lambda_m(&self) -> f64 {
        self.lambda_m
    }

    pub fn sigma_s(&self) -> f64 {
        self.sigma_s
    }

    /// Carrier angular frequency `2πc/λ` (not snapped to the axis).
    pub fn omega_c(&self) -> f64 {
        self.omega_c
    }

    pub fn center_index(&self) -> usize {
        self.center_index
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn band(&self) -> &[usize] {
        &self.band
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn axis(&self) -> &FrequencyAxis {
        &self.axis
    }

    /// Pulse width expressed as carrier cycles spanned by `±σ`.
    pub fn n_cycles(&self) -> f64 {
        2.0 * SPEED_OF_LIGHT * self.sigma_s / self.lambda_m
    }
}

fn envelope(sigma_s: f64, step: f64, offset: i64) -> f64 {
    let d = sigma_s * step * offset as f64;
    (-0.5 * d * d).exp()
}

/// Largest index distance from the centre whose coefficient is still >= γ.
fn band_half_width(sigma_s: f64, step: f64, gamma: f64) -> usize {
    const LIMIT: f64 = (1u64 << 32) as f64;
    let estimate = (2.0 * (1.0 / gamma).ln()).sqrt() / (sigma_s * step);
    if !(estimate < LIMIT) {
        return LIMIT as usize;
    }
    // The closed form can be off by one at the boundary; settle it on the
    // envelope itself.
    let mut half = estimate.floor() as i64;
    while half > 0 && envelope(sigma_s, step, half) < gamma {
        half -= 1;
    }
    while envelope(sigma_s, step, half + 1) >= gamma {
        half += 1;
    }
    half as usize
}

/// Packet whose pulse spans `n_cycles` carrier periods over `±σ`,
/// i.e. `σ = n_cycles·λ/(2c)`.
pub fn illumination_packet(
    lambda_m: f64,
    n_cycles: f64,
    bins: usize,
    bin_resolution_ps: f64,
    gamma: f64,
) -> Result<IlluminationPacket> {
    if !(n_cycles > 0.0) || !n_cycles.is_finite() {
        return Err(NlosError::Configuration(format!(
            "cycle count must be positive, got {n_cycles}"
        )));
    }
    let axis = FrequencyAxis::new(bins, bin_resolution_ps)?;
    let sigma = n_cycles * lambda_m / (2.0 * SPEED_OF_LIGHT);
    IlluminationPacket::with_sigma(lambda_m, sigma, &axis, gamma)
}

fn band_count(lambda_m: f64, sigma_s: f64, axis: &FrequencyAxis, gamma: f64) -> Result<usize> {
    Ok(IlluminationPacket::with_sigma(lambda_m, sigma_s, axis, gamma)?.band.len())
}

/// Finds the pulse width giving exactly `target_count` band indices.
///
/// Band size never grows with `σ`. For `target_count > 1` this returns the
/// largest such `σ` (to bisection precision); for `target_count == 1`, where
/// every large `σ` qualifies, it returns the smallest.
pub fn calibrate_sigma(
    lambda_m: f64,
    bins: usize,
    bin_resolution_ps: f64,
    gamma: f64,
    target_count: usize,
) -> Result<f64> {
    if target_count == 0 || target_count % 2 == 0 {
        return Err(NlosError::Calibration(format!(
            "target band size must be odd and positive, got {target_count}"
        )));
    }
    let axis = FrequencyAxis::new(bins, bin_resolution_ps)?;
    // Bracket: `small` keeps at least the target, `large` keeps fewer (or,
    // for a single-index target, exactly one).
    let wide_enough = |s: f64| -> Result<bool> {
        let n = band_count(lambda_m, s, &axis, gamma)?;
        Ok(if target_count == 1 { n > 1 } else { n >= target_count })
    };
    let mut small = 1e-3 / axis.step();
    let mut grow = 0;
    while !wide_enough(small)? {
        small /= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(NlosError::Calibration(format!(
                "no pulse width yields {target_count} indices on a {bins}-bin axis"
            )));
        }
    }
    let mut large = small;
    let mut grow = 0;
    while wide_enough(large)? {
        large *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(NlosError::Calibration(format!(
                "band never narrows below {target_count} indices"
            )));
        }
    }
    for _ in 0..200 {
        let mid = (small * large).sqrt();
        if mid <= small || mid >= large {
            break;
        }
        if wide_enough(mid)? {
            small = mid;
        } else {
            large = mid;
        }
    }
    let sigma = if target_count == 1 { large } else { small };
    let got = band_count(lambda_m, sigma, &axis, gamma)?;
    if got != target_count {
        return Err(NlosError::Calibration(format!(
            "band size jumps past {target_count} (nearest reachable: {got}) on this axis"
        )));
    }
    Ok(sigma)
}

/// Band size the reference packet is calibrated to.
pub const REFERENCE_BAND_SIZE: usize = 47;

/// Cycle count of the reference packet: `λ = 3Δp` for a 64x64 scan of a
/// 2 m aperture, calibrated to [`REFERENCE_BAND_SIZE`] indices on a 512-bin,
/// 32 ps axis with the default peak ratio.
pub fn reference_n_cycles() -> Result<f64> {
    let lambda = TARGET_WAVELENGTH_COEFF * 2.0 / 64.0;
    let sigma = calibrate_sigma(lambda, 512, 32.0, DEFAULT_GAMMA, REFERENCE_BAND_SIZE)?;
    Ok(sigma * 2.0 * SPEED_OF_LIGHT / lambda)
}

/// Time-axis spectrum of a measurement, `[T, ny, nx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSpectrum {
    values: Array3<Complex64>,
    axis: FrequencyAxis,
    grid: ScanGrid,
}

impl MeasurementSpectrum {
    pub fn of(volume: &TransientVolume) -> Result<Self> {
        Self::from_signal(volume.data().view(), volume.bin_resolution_ps(), volume.grid())
    }

    /// Spectrum of an arbitrary real signal (e.g. a band-passed measurement,
    /// which may be negative).
    pub fn from_signal(
        data: ArrayView3<'_, f64>,
        bin_resolution_ps: f64,
        grid: &ScanGrid,
    ) -> Result<Self> {
        let (t, ny, nx) = data.dim();
        if ny != grid.ny() || nx != grid.nx() {
            return Err(NlosError::Shape(format!(
                "signal is {ny}x{nx}, grid is {}x{}",
                grid.ny(),
                grid.nx()
            )));
        }
        Ok(Self {
            values: fft::time_spectrum(data),
            axis: FrequencyAxis::new(t, bin_resolution_ps)?,
            grid: grid.clone(),
        })
    }

    pub fn values(&self) -> &Array3<Complex64> {
        &self.values
    }

    pub fn axis(&self) -> &FrequencyAxis {
        &self.axis
    }

    pub fn grid(&self) -> &ScanGrid {
        &self.grid
    }
}

/// Complex aperture wavefront restricted to a frequency band,
/// `[K, ny, nx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasorField {
    values: Array3<Complex64>,
    band: Vec<usize>,
    axis: FrequencyAxis,
    grid: ScanGrid,
    lambda_m: f64,
}

impl PhasorField {
    pub fn new(
        values: Array3<Complex64>,
        band: Vec<usize>,
        axis: FrequencyAxis,
        grid: ScanGrid,
        lambda_m: f64,
    ) -> Result<Self> {
        let (k, ny, nx) = values.dim();
        if k != band.len() || ny != grid.ny() || nx != grid.nx() {
            return Err(NlosError::Shape(format!(
                "field {:?} does not match {} band indices on a {}x{} grid",
                values.dim(),
                band.len(),
                grid.ny(),
                grid.nx()
            )));
        }
        if band.iter().any(|&b| b >= axis.len()) {
            return Err(NlosError::Shape(format!(
                "band index outside a {}-bin axis",
                axis.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(NlosError::Domain("phasor field has non-finite values".into()));
        }
        Ok(Self {
            values,
            band,
            axis,
            grid,
            lambda_m,
        })
    }

    pub fn values(&self) -> &Array3<Complex64> {
        &self.values
    }

    pub fn band(&self) -> &[usize] {
        &self.band
    }

    pub fn axis(&self) -> &FrequencyAxis {
        &self.axis
    }

    pub fn grid(&self) -> &ScanGrid {
        &self.grid
    }

    pub fn lambda_m(&self) -> f64 {
        self.lambda_m
    }

    pub fn with_values(&self, values: Array3<Complex64>) -> Result<Self> {
        Self::new(
            values,
            self.band.clone(),
            self.axis.clone(),
            self.grid.clone(),
            self.lambda_m,
        )
    }

    /// Conjugated field on the mirrored (negative-frequency) band. Carries
    /// the same information for a real measurement.
    pub fn conjugate_mirror(&self) -> Self {
        Self {
            values: self.values.mapv(|v| v.conj()),
            band: self.band.iter().map(|&k| self.axis.conjugate_index(k)).collect(),
            ..self.clone()
        }
    }

    /// Expands to the full spectrum with zeros off-band and returns the
    /// real time-domain signal `[T, ny, nx]`.
    pub fn to_time_domain(&self) -> Array3<f64> {
        let (_, ny, nx) = self.values.dim();
        let mut full = Array3::zeros((self.axis.len(), ny, nx));
        for (slot, &k) in self.band.iter().enumerate() {
            full.index_axis_mut(ndarray::Axis(0), k)
                .assign(&self.values.index_axis(ndarray::Axis(0), slot));
        }
        fft::inverse_time_spectrum(&full).mapv(|v| v.re)
    }
}

fn check_axis(spectrum_axis: &FrequencyAxis, packet: &IlluminationPacket) -> Result<()> {
    if spectrum_axis != packet.axis() {
        return Err(NlosError::Shape(format!(
            "measurement axis ({} bins @ {} ps) differs from packet axis ({} bins @ {} ps)",
            spectrum_axis.len(),
            spectrum_axis.bin_resolution_ps(),
            packet.axis().len(),
            packet.axis().bin_resolution_ps()
        )));
    }
    Ok(())
}

/// Multiplies a measurement spectrum by a packet on the packet's band.
pub fn aperture_field(
    measurement: &MeasurementSpectrum,
    packet: &IlluminationPacket,
) -> Result<PhasorField> {
    check_axis(measurement.axis(), packet)?;
    let (_, ny, nx) = measurement.values.dim();
    let mut values = Array3::zeros((packet.band.len(), ny, nx));
    for (slot, (&k, &c)) in packet.band.iter().zip(packet.coeffs.iter()).enumerate() {
        let src = measurement.values.index_axis(ndarray::Axis(0), k);
        values
            .index_axis_mut(ndarray::Axis(0), slot)
            .zip_mut_with(&src, |dst, s| *dst = s * c);
    }
    PhasorField::new(
        values,
        packet.band.clone(),
        packet.axis.clone(),
        measurement.grid.clone(),
        packet.lambda_m,
    )
}

/// Convolves a measurement with each packet along time, in the frequency
/// domain. One spectrum is computed and shared by all packets.
pub fn convolve_inputs(
    volume: &TransientVolume,
    packets: &[IlluminationPacket],
) -> Result<Vec<PhasorField>> {
    let spectrum = MeasurementSpectrum::of(volume)?;
    packets
        .iter()
        .map(|p| aperture_field(&spectrum, p))
        .collect()
}

/// The seven input packets for sampling distance `delta_p_m`, all with the
/// same cycle count.
pub fn input_packets(
    delta_p_m: f64,
    n_cycles: f64,
    bins: usize,
    bin_resolution_ps: f64,
    gamma: f64,
) -> Result<Vec<IlluminationPacket>> {
    INPUT_WAVELENGTH_COEFFS
        .iter()
        .map(|c| illumination_packet(c * 2.0 * delta_p_m, n_cycles, bins, bin_resolution_ps, gamma))
        .collect()
}

/// Sum over band and pixels of `|Δre| + |Δim|`.
pub fn band_l1(a: &PhasorField, b: &PhasorField) -> Result<f64> {
    if a.band != b.band || a.axis != b.axis {
        return Err(NlosError::Shape("phasor fields cover different bands".into()));
    }
    if a.grid != b.grid {
        return Err(NlosError::Shape("phasor fields live on different grids".into()));
    }
    Ok(a.values
        .iter()
        .zip(b.values.iter())
        .map(|(x, y)| (x.re - y.re).abs() + (x.im - y.im).abs())
        .sum())
}

/// Keeps the frequency components with `|Ω|` in `[omega_lo, omega_hi)` (both
/// conjugate halves) and returns the real time-domain result.
pub fn bandpass_filter(
    volume: &TransientVolume,
    omega_lo: f64,
    omega_hi: f64,
) -> Result<Array3<f64>> {
    bandpass_signal(volume.data().view(), volume.bin_resolution_ps(), omega_lo, omega_hi)
}

pub fn bandpass_signal(
    data: ArrayView3<'_, f64>,
    bin_resolution_ps: f64,
    omega_lo: f64,
    omega_hi: f64,
) -> Result<Array3<f64>> {
    if !(omega_lo >= 0.0) || !(omega_hi > omega_lo) {
        return Err(NlosError::Domain(format!(
            "band-pass range [{omega_lo}, {omega_hi}) is invalid"
        )));
    }
    let axis = FrequencyAxis::new(data.dim().0, bin_resolution_ps)?;
    let mut spec = fft::time_spectrum(data);
    for k in 0..axis.len() {
        let w = axis.signed_omega(k).abs();
        if !(w >= omega_lo && w < omega_hi) {
            spec.index_axis_mut(ndarray::Axis(0), k)
                .fill(Complex64::new(0.0, 0.0));
        }
    }
    Ok(fft::inverse_time_spectrum(&spec).mapv(|v| v.re))
}
