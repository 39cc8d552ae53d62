//! FFT helpers over rustfft.
//!
//! The time-to-frequency transform used throughout is
//! `X[k] = Σ_n x[n]·e^{+iΩ_k t_n}`, so a return delayed by `τ` carries the
//! phase `e^{+iΩτ}` that the diffraction kernel `e^{-iΩr/c}/r` cancels.

use std::sync::Arc;

use ndarray::{Array3, ArrayView3};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

/// Spectrum of every pixel's histogram, laid out `[T, ny, nx]`.
pub(crate) fn time_spectrum(data: ArrayView3<'_, f64>) -> Array3<Complex64> {
    let (t, ny, nx) = data.dim();
    let plan = FftPlanner::new().plan_fft_inverse(t);
    let columns: Vec<Vec<Complex64>> = (0..ny * nx)
        .into_par_iter()
        .map(|p| {
            let (i, j) = (p / nx, p % nx);
            let mut buf: Vec<Complex64> = (0..t)
                .map(|n| Complex64::new(data[[n, i, j]], 0.0))
                .collect();
            plan.process(&mut buf);
            buf
        })
        .collect();
    gather(columns, t, ny, nx)
}

/// Inverse of [`time_spectrum`], including the `1/T` normalisation.
pub(crate) fn inverse_time_spectrum(spec: &Array3<Complex64>) -> Array3<Complex64> {
    let (t, ny, nx) = spec.dim();
    let plan = FftPlanner::new().plan_fft_forward(t);
    let scale = 1.0 / t as f64;
    let columns: Vec<Vec<Complex64>> = (0..ny * nx)
        .into_par_iter()
        .map(|p| {
            let (i, j) = (p / nx, p % nx);
            let mut buf: Vec<Complex64> = (0..t).map(|n| spec[[n, i, j]]).collect();
            plan.process(&mut buf);
            buf.iter_mut().for_each(|v| *v *= scale);
            buf
        })
        .collect();
    gather(columns, t, ny, nx)
}

fn gather(columns: Vec<Vec<Complex64>>, t: usize, ny: usize, nx: usize) -> Array3<Complex64> {
    let mut out = Array3::zeros((t, ny, nx));
    for (p, col) in columns.into_iter().enumerate() {
        let (i, j) = (p / nx, p % nx);
        for (n, v) in col.into_iter().enumerate() {
            out[[n, i, j]] = v;
        }
    }
    out
}

/// Plans for a square-or-rectangular 2D transform of `rows x cols`,
/// row-major storage.
#[derive(Clone)]
pub(crate) struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub(crate) fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            col_fwd: planner.plan_fft_forward(rows),
            row_inv: planner.plan_fft_inverse(cols),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub(crate) fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_fwd, &self.col_fwd);
    }

    /// Unnormalised inverse; callers divide by `rows * cols`.
    pub(crate) fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_inv, &self.col_inv);
    }

    fn run(&self, buf: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(buf.len(), self.rows * self.cols);
        row.process(buf);
        let mut column = vec![Complex64::new(0.0, 0.0); self.rows];
        for c in 0..self.cols {
            for r in 0..self.rows {
                column[r] = buf[r * self.cols + c];
            }
            col.process(&mut column);
            for r in 0..self.rows {
                buf[r * self.cols + c] = column[r];
            }
        }
    }
}
