//! Rayleigh-Sommerfeld diffraction from the aperture into the hidden volume.
//!
//! For each depth plane `z` and band frequency `Ω`, the aperture field is
//! convolved with `G(x, y, z, Ω) = A(r)·e^{-iΩr/c}`, `r = √(x²+y²+z²)`, by
//! zero-padded 2D FFTs. The monochromatic planes are then summed over the
//! band with weight `ΔΩ/2π` and phase `e^{iΩt}`, and the intensity is the
//! squared modulus of that sum.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NlosError, Result};
use crate::fft::Fft2;
use crate::grid::ScanGrid;
use crate::phasor::PhasorField;
use crate::volume::{DepthAxis, ReconVolume};
use crate::SPEED_OF_LIGHT;

/// Amplitude factor of the diffraction kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelAmplitude {
    /// `1/r`, with `r` the one-way distance even when the phase is doubled.
    #[default]
    InvR,
    /// No amplitude falloff at all.
    Unit,
}

impl std::str::FromStr for KernelAmplitude {
    type Err = NlosError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inv_r" => Ok(Self::InvR),
            "unit" => Ok(Self::Unit),
            other => Err(NlosError::Configuration(format!(
                "unknown kernel amplitude `{other}` (expected inv_r or unit)"
            ))),
        }
    }
}

/// Operations above this count are refused by [`propagate_direct`] unless a
/// larger budget is passed.
pub const DEFAULT_DIRECT_BUDGET: u128 = 2_000_000_000;

/// Bytes of kernel spectra a plan keeps between calls.
const KERNEL_CACHE_BYTES: usize = 256 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct KernelKey {
    z: u64,
    omega: u64,
    pitch: u64,
    rows: usize,
    cols: usize,
}

/// Depth planes and kernel settings for a reconstruction.
#[derive(Debug)]
pub struct PropagationPlan {
    depth: DepthAxis,
    pad_factor: usize,
    doubling: bool,
    amplitude: KernelAmplitude,
    illumination_point: Option<[f64; 3]>,
    time_offset_s: f64,
    cache: RwLock<HashMap<KernelKey, Arc<Vec<Complex64>>>>,
}

impl Clone for PropagationPlan {
    fn clone(&self) -> Self {
        Self {
            depth: self.depth.clone(),
            pad_factor: self.pad_factor,
            doubling: self.doubling,
            amplitude: self.amplitude,
            illumination_point: self.illumination_point,
            time_offset_s: self.time_offset_s,
            cache: RwLock::new(HashMap::new()),
        }
    }
}

impl PropagationPlan {
    /// `doubling` doubles the path in the kernel phase (confocal two-way
    /// travel). `pad_factor` must be at least 2 for linear convolution.
    pub fn new(depth: DepthAxis, pad_factor: usize, doubling: bool) -> Result<Self> {
        if pad_factor < 2 {
            return Err(NlosError::Configuration(format!(
                "pad factor must be at least 2, got {pad_factor}"
            )));
        }
        Ok(Self {
            depth,
            pad_factor,
            doubling,
            amplitude: KernelAmplitude::default(),
            illumination_point: None,
            time_offset_s: 0.0,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn with_amplitude(mut self, amplitude: KernelAmplitude) -> Self {
        self.amplitude = amplitude;
        self
    }

    /// For non-confocal data: each voxel is read out at the instant the
    /// virtual source's wave reaches it, `t = -|x_ls - x_v|/c`, instead of
    /// `t = 0`.
    pub fn with_illumination_point(mut self, point: Option<[f64; 3]>) -> Self {
        self.illumination_point = point;
        self
    }

    /// Shifts the readout instant by `seconds`. A measurement whose bin 0
    /// was cropped away at bin `s` is read out at `s·Δt`.
    pub fn with_time_offset(mut self, seconds: f64) -> Self {
        self.time_offset_s = seconds;
        self
    }

    pub fn time_offset_s(&self) -> f64 {
        self.time_offset_s
    }

    pub fn depth(&self) -> &DepthAxis {
        &self.depth
    }

    pub fn pad_factor(&self) -> usize {
        self.pad_factor
    }

    pub fn doubling(&self) -> bool {
        self.doubling
    }

    pub fn amplitude(&self) -> KernelAmplitude {
        self.amplitude
    }

    pub fn illumination_point(&self) -> Option<[f64; 3]> {
        self.illumination_point
    }

    fn padded_shape(&self, grid: &ScanGrid) -> (usize, usize) {
        (grid.ny() * self.pad_factor, grid.nx() * self.pad_factor)
    }

    fn kernel_spectrum(
        &self,
        grid: &ScanGrid,
        z: f64,
        omega: f64,
        fft2: &Fft2,
    ) -> Arc<Vec<Complex64>> {
        let (rows, cols) = self.padded_shape(grid);
        let key = KernelKey {
            z: z.to_bits(),
            omega: omega.to_bits(),
            pitch: grid.delta_p_m().to_bits(),
            rows,
            cols,
        };
        if let Some(k) = self.cache.read().ok().and_then(|c| c.get(&key).cloned()) {
            return k;
        }
        let kernel = sample_kernel(grid, rows, cols, z, omega, self.doubling, self.amplitude);
        let mut buf = kernel.into_raw_vec_and_offset().0;
        fft2.forward(&mut buf);
        let buf = Arc::new(buf);
        if let Ok(mut cache) = self.cache.write() {
            let per = rows * cols * std::mem::size_of::<Complex64>();
            if (cache.len() + 1) * per <= KERNEL_CACHE_BYTES {
                cache.insert(key, buf.clone());
            }
        }
        buf
    }
}

fn kernel_value(r: f64, omega: f64, doubling: bool, amplitude: KernelAmplitude) -> Complex64 {
    let path = if doubling { 2.0 * r } else { r };
    let amp = match amplitude {
        KernelAmplitude::InvR => 1.0 / r,
        KernelAmplitude::Unit => 1.0,
    };
    Complex64::from_polar(amp, -omega * path / SPEED_OF_LIGHT)
}

fn wrapped_offset(index: usize, len: usize) -> i64 {
    if index < len.div_ceil(2) {
        index as i64
    } else {
        index as i64 - len as i64
    }
}

fn sample_kernel(
    grid: &ScanGrid,
    rows: usize,
    cols: usize,
    z: f64,
    omega: f64,
    doubling: bool,
    amplitude: KernelAmplitude,
) -> Array2<Complex64> {
    let dp = grid.delta_p_m();
    Array2::from_shape_fn((rows, cols), |(a, b)| {
        let dy = wrapped_offset(a, rows) as f64 * dp;
        let dx = wrapped_offset(b, cols) as f64 * dp;
        let r = (dx * dx + dy * dy + z * z).sqrt();
        kernel_value(r, omega, doubling, amplitude)
    })
}

/// Diffraction kernel for depth `z_m` on the padded lateral offset lattice
/// (`pad_factor` times the grid in each direction). Element `(0, 0)` is the
/// zero offset; offsets wrap circularly.
pub fn diffraction_kernel(
    grid: &ScanGrid,
    z_m: f64,
    omega: f64,
    doubling: bool,
    amplitude: KernelAmplitude,
    pad_factor: usize,
) -> Result<Array2<Complex64>> {
    if !(z_m > 0.0) || !z_m.is_finite() {
        return Err(NlosError::Domain(format!("kernel depth must be > 0, got {z_m}")));
    }
    if pad_factor < 2 {
        return Err(NlosError::Configuration(format!(
            "pad factor must be at least 2, got {pad_factor}"
        )));
    }
    Ok(sample_kernel(
        grid,
        grid.ny() * pad_factor,
        grid.nx() * pad_factor,
        z_m,
        omega,
        doubling,
        amplitude,
    ))
}

/// Per-band-index factors `w·e^{iΩt}` with `t = 0`.
fn band_weights(field: &PhasorField) -> Vec<(f64, Complex64)> {
    let axis = field.axis();
    let w = axis.step() / (2.0 * std::f64::consts::PI);
    field
        .band()
        .iter()
        .map(|&k| (axis.signed_omega(k), Complex64::new(w, 0.0)))
        .collect()
}

/// Readout phase `e^{iΩt}` for voxel `(z, y, x)`.
fn readout_phase(plan: &PropagationPlan, grid: &ScanGrid, z: f64, i: usize, j: usize, omega: f64) -> Complex64 {
    let mut t = plan.time_offset_s;
    if let Some(ls) = plan.illumination_point {
        let p = [grid.x_m(j), grid.y_m(i), z];
        let d = ((p[0] - ls[0]).powi(2) + (p[1] - ls[1]).powi(2) + (p[2] - ls[2]).powi(2)).sqrt();
        t -= d / SPEED_OF_LIGHT;
    }
    if t == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        Complex64::from_polar(1.0, omega * t)
    }
}

/// Reconstructs the hidden volume by FFT-based RSD propagation.
pub fn propagate(field: &PhasorField, plan: &PropagationPlan) -> Result<ReconVolume> {
    let grid = field.grid();
    let (ny, nx) = (grid.ny(), grid.nx());
    let (rows, cols) = plan.padded_shape(grid);
    let fft2 = Fft2::new(rows, cols);
    let norm = 1.0 / (rows * cols) as f64;
    let weights = band_weights(field);

    let spectra: Vec<Vec<Complex64>> = (0..field.band().len())
        .into_par_iter()
        .map(|slot| {
            let mut buf = vec![Complex64::new(0.0, 0.0); rows * cols];
            for i in 0..ny {
                for j in 0..nx {
                    buf[i * cols + j] = field.values()[[slot, i, j]];
                }
            }
            fft2.forward(&mut buf);
            buf
        })
        .collect();

    let planes: Vec<Vec<f64>> = plan
        .depth
        .depths_m
        .par_iter()
        .map(|&z| {
            let mut acc = vec![Complex64::new(0.0, 0.0); ny * nx];
            let mut work = vec![Complex64::new(0.0, 0.0); rows * cols];
            for (slot, &(omega, w)) in weights.iter().enumerate() {
                let kernel = plan.kernel_spectrum(grid, z, omega, &fft2);
                for ((dst, a), b) in work.iter_mut().zip(spectra[slot].iter()).zip(kernel.iter()) {
                    *dst = a * b;
                }
                fft2.inverse(&mut work);
                for i in 0..ny {
                    for j in 0..nx {
                        let phase = readout_phase(plan, grid, z, i, j, omega);
                        acc[i * nx + j] += work[i * cols + j] * (w * norm) * phase;
                    }
                }
            }
            acc.iter().map(|v| v.norm_sqr()).collect()
        })
        .collect();

    assemble(planes, grid, &plan.depth)
}

fn assemble(planes: Vec<Vec<f64>>, grid: &ScanGrid, depth: &DepthAxis) -> Result<ReconVolume> {
    let (ny, nx) = (grid.ny(), grid.nx());
    let mut data = Array3::zeros((depth.len(), ny, nx));
    for (k, plane) in planes.into_iter().enumerate() {
        for (p, v) in plane.into_iter().enumerate() {
            data[[k, p / nx, p % nx]] = v;
        }
    }
    ReconVolume::new(data, grid.clone(), depth.clone())
}

/// Multiply-adds needed by [`propagate_direct`].
pub fn direct_work(field: &PhasorField, plan: &PropagationPlan) -> u128 {
    let pixels = field.grid().pixel_count() as u128;
    pixels * pixels * field.band().len() as u128 * plan.depth.len() as u128
}

/// Reference reconstruction by explicit summation over aperture pixels for
/// every voxel and band index. Independent of the FFT path; refuses inputs
/// whose work exceeds `budget`.
pub fn propagate_direct(
    field: &PhasorField,
    plan: &PropagationPlan,
    budget: u128,
) -> Result<ReconVolume> {
    let work = direct_work(field, plan);
    let grid = field.grid();
    if work > budget {
        return Err(NlosError::Budget {
            work,
            budget,
            detail: format!(
                "{}x{} aperture, {} band indices, {} depth planes",
                grid.ny(),
                grid.nx(),
                field.band().len(),
                plan.depth.len()
            ),
        });
    }
    let (ny, nx) = (grid.ny(), grid.nx());
    let axis = field.axis();
    let w = axis.step() / (2.0 * std::f64::consts::PI);
    let omegas: Vec<f64> = field.band().iter().map(|&k| axis.signed_omega(k)).collect();

    let planes: Vec<Vec<f64>> = plan
        .depth
        .depths_m
        .par_iter()
        .map(|&z| {
            let mut plane = vec![0.0; ny * nx];
            for vi in 0..ny {
                for vj in 0..nx {
                    let (xv, yv) = (grid.x_m(vj), grid.y_m(vi));
                    let mut total = Complex64::new(0.0, 0.0);
                    for (slot, &omega) in omegas.iter().enumerate() {
                        let mut sum = Complex64::new(0.0, 0.0);
                        for ci in 0..ny {
                            for cj in 0..nx {
                                let dx = xv - grid.x_m(cj);
                                let dy = yv - grid.y_m(ci);
                                let r = (dx * dx + dy * dy + z * z).sqrt();
                                let path = if plan.doubling { 2.0 * r } else { r };
                                let amp = match plan.amplitude {
                                    KernelAmplitude::InvR => 1.0 / r,
                                    KernelAmplitude::Unit => 1.0,
                                };
                                let g = Complex64::from_polar(amp, -omega * path / SPEED_OF_LIGHT);
                                sum += field.values()[[slot, ci, cj]] * g;
                            }
                        }
                        total += sum * w * readout_phase(plan, grid, z, vi, vj, omega);
                    }
                    plane[vi * nx + vj] = total.norm_sqr();
                }
            }
            plane
        })
        .collect();

    assemble(planes, grid, &plan.depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axis::FrequencyAxis;
    use crate::make_scan_grid;
    use std::f64::consts::PI;

    fn field(n: usize, band: Vec<usize>, fill: impl Fn(usize, usize, usize) -> Complex64) -> PhasorField {
        let grid = make_scan_grid(2.0, 2.0, n, n, true, None).unwrap();
        let axis = FrequencyAxis::new(512, 32.0).unwrap();
        let values = Array3::from_shape_fn((band.len(), n, n), |(k, i, j)| fill(k, i, j));
        PhasorField::new(values, band, axis, grid, 0.1).unwrap()
    }

    #[test]
    fn kernel_centre_tap() {
        let grid = make_scan_grid(2.0, 2.0, 8, 8, true, None).unwrap();
        let (z, omega) = (0.7, 2.0e10);
        let k = diffraction_kernel(&grid, z, omega, false, KernelAmplitude::InvR, 2).unwrap();
        let expect = Complex64::from_polar(1.0 / z, -omega * z / SPEED_OF_LIGHT);
        assert!((k[[0, 0]] - expect).norm() < 1e-12);
        let k = diffraction_kernel(&grid, z, omega, true, KernelAmplitude::InvR, 2).unwrap();
        let expect = Complex64::from_polar(1.0 / z, -2.0 * omega * z / SPEED_OF_LIGHT);
        assert!((k[[0, 0]] - expect).norm() < 1e-12);
        let k0 = diffraction_kernel(&grid, z, 0.0, true, KernelAmplitude::InvR, 2).unwrap();
        assert!(k0.iter().all(|v| v.im == 0.0 && v.re > 0.0));
        let r = (0.25f64 * 0.25 + z * z).sqrt();
        assert!((k0[[0, 1]].re - 1.0 / r).abs() < 1e-12);
        assert!((k0[[0, 15]].re - 1.0 / r).abs() < 1e-12);
        assert!(diffraction_kernel(&grid, 0.0, omega, false, KernelAmplitude::InvR, 2).is_err());
    }

    #[test]
    fn zero_field_gives_zero_volume() {
        let f = field(8, vec![40, 41, 42], |_, _, _| Complex64::new(0.0, 0.0));
        let plan = PropagationPlan::new(DepthAxis::uniform(0.0, 2.0, 4).unwrap(), 2, true).unwrap();
        assert!(propagate(&f, &plan).unwrap().data().iter().all(|v| *v == 0.0));
        let d = propagate_direct(&f, &plan, DEFAULT_DIRECT_BUDGET).unwrap();
        assert!(d.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn real_scaling_is_quadratic() {
        let f = field(6, vec![30, 31], |k, i, j| {
            Complex64::new((k + i) as f64 * 0.3, (j as f64).sin())
        });
        let plan = PropagationPlan::new(DepthAxis::uniform(0.0, 2.0, 3).unwrap(), 2, true).unwrap();
        let a = propagate(&f, &plan).unwrap();
        let b = propagate(&f.with_values(f.values().mapv(|v| v * 2.0)).unwrap(), &plan).unwrap();
        for (x, y) in a.data().iter().zip(b.data().iter()) {
            assert_eq!(4.0 * x, *y);
        }
    }

    #[test]
    fn single_pixel_aperture_matches_kernel_pattern() {
        let n = 5;
        let f = field(n, vec![50], |_, i, j| {
            if (i, j) == (2, 2) {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let depth = DepthAxis::uniform(0.0, 2.0, 2).unwrap();
        let plan = PropagationPlan::new(depth.clone(), 2, false).unwrap();
        let out = propagate(&f, &plan).unwrap();
        let w = f.axis().step() / (2.0 * PI);
        let dp = f.grid().delta_p_m();
        for (kz, &z) in depth.depths_m.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    let dx = (j as f64 - 2.0) * dp;
                    let dy = (i as f64 - 2.0) * dp;
                    let r2 = dx * dx + dy * dy + z * z;
                    let expect = w * w / r2;
                    assert!((out.data()[[kz, i, j]] - expect).abs() < 1e-9 * expect);
                }
            }
        }
    }

    #[test]
    fn budget_guard() {
        let f = field(8, vec![40], |_, _, _| Complex64::new(1.0, 0.0));
        let plan = PropagationPlan::new(DepthAxis::uniform(0.0, 2.0, 4).unwrap(), 2, true).unwrap();
        let err = propagate_direct(&f, &plan, 100).unwrap_err();
        assert!(matches!(err, NlosError::Budget { work: 16384, .. }));
    }

    #[test]
    fn pad_factor_must_allow_linear_convolution() {
        assert!(PropagationPlan::new(DepthAxis::uniform(0.0, 2.0, 4).unwrap(), 1, true).is_err());
    }
}
