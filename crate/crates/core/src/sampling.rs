//! Partial-acquisition harness: stride and crop sub-sampling, zero-padding,
//! interpolation back onto a full grid, and temporal windowing.

use ndarray::{s, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{NlosError, Result};
use crate::grid::ScanGrid;
use crate::volume::TransientVolume;

const EXTENT_TOL: f64 = 1e-6;

/// Keeps pixels `0, stride, 2*stride, ...` along both lateral axes.
pub fn subsample_stride(volume: &TransientVolume, stride: usize) -> Result<TransientVolume> {
    let grid = volume.grid().strided(stride)?;
    let step = stride as isize;
    let data = volume.data().slice(s![.., ..;step, ..;step]).to_owned();
    volume.with_grid(data, grid)
}

fn pixels_for(extent_m: f64, pitch: f64, what: &str) -> Result<usize> {
    let n = extent_m / pitch;
    let r = n.round();
    if !(extent_m > 0.0) || (n - r).abs() > EXTENT_TOL || r < 1.0 {
        return Err(NlosError::Geometry(format!(
            "{what} extent {extent_m} m is not a whole number of {pitch} m pixels"
        )));
    }
    Ok(r as usize)
}

/// Centred crop to `extent_m = [width, height]`. Sampling distance is kept.
pub fn crop_aperture(volume: &TransientVolume, extent_m: [f64; 2]) -> Result<TransientVolume> {
    let grid = volume.grid();
    let dp = grid.delta_p_m();
    let nx = pixels_for(extent_m[0], dp, "crop width")?;
    let ny = pixels_for(extent_m[1], dp, "crop height")?;
    if nx > grid.nx() || ny > grid.ny() {
        return Err(NlosError::Geometry(format!(
            "crop {} x {} m exceeds aperture {} x {} m",
            extent_m[0],
            extent_m[1],
            grid.width_m(),
            grid.height_m()
        )));
    }
    let (mx, my) = (grid.nx() - nx, grid.ny() - ny);
    if mx % 2 != 0 || my % 2 != 0 {
        return Err(NlosError::Geometry(format!(
            "crop of {ny}x{nx} pixels cannot be centred in {}x{}",
            grid.ny(),
            grid.nx()
        )));
    }
    crop_window(volume, my / 2, mx / 2, ny, nx)
}

/// Crops the pixel window starting at (`i0`, `j0`).
pub fn crop_window(
    volume: &TransientVolume,
    i0: usize,
    j0: usize,
    ny: usize,
    nx: usize,
) -> Result<TransientVolume> {
    let grid = volume.grid().window(i0, j0, ny, nx)?;
    let data = volume
        .data()
        .slice(s![.., i0..i0 + ny, j0..j0 + nx])
        .to_owned();
    volume.with_grid(data, grid)
}

fn upsample_factor(source: &ScanGrid, target: &ScanGrid) -> Result<usize> {
    let ratio = source.delta_p_m() / target.delta_p_m();
    let f = ratio.round();
    if f < 1.0 || (ratio - f).abs() > EXTENT_TOL {
        return Err(NlosError::Shape(format!(
            "sampling ratio {ratio} between source and target is not an integer"
        )));
    }
    let f = f as usize;
    if source.nx() * f != target.nx() || source.ny() * f != target.ny() {
        return Err(NlosError::Shape(format!(
            "{}x{} source times {f} does not give the {}x{} target",
            source.ny(),
            source.nx(),
            target.ny(),
            target.nx()
        )));
    }
    let dx = (source.x_m(0) - target.x_m(0)) / target.delta_p_m();
    let dy = (source.y_m(0) - target.y_m(0)) / target.delta_p_m();
    if dx.abs() > EXTENT_TOL || dy.abs() > EXTENT_TOL {
        return Err(NlosError::Geometry(
            "source pixel 0 must coincide with target pixel 0".into(),
        ));
    }
    Ok(f)
}

/// Nearest-neighbour upsampling: target pixel `(i, j)` copies source pixel
/// `(i / f, j / f)`.
pub fn upsample_nearest(volume: &TransientVolume, target: &ScanGrid) -> Result<TransientVolume> {
    let f = upsample_factor(volume.grid(), target)?;
    let src = volume.data();
    let data = Array3::from_shape_fn((volume.bins(), target.ny(), target.nx()), |(t, i, j)| {
        src[[t, i / f, j / f]]
    });
    volume.with_grid(data, target.clone())
}

fn linear_taps(n_src: usize, n_dst: usize, factor: usize) -> Vec<(usize, usize, f64)> {
    (0..n_dst)
        .map(|i| {
            let u = (i as f64 / factor as f64).min((n_src - 1) as f64);
            let lo = u.floor() as usize;
            let hi = (lo + 1).min(n_src - 1);
            (lo, hi, u - lo as f64)
        })
        .collect()
}

/// Trilinear upsampling with edge clamping. Source pixel `i` sits at target
/// pixel `f * i`; past the last source sample values are held. A
/// `time_factor` above 1 also refines the time axis.
pub fn upsample_trilinear(
    volume: &TransientVolume,
    target: &ScanGrid,
    time_factor: usize,
) -> Result<TransientVolume> {
    if time_factor == 0 {
        return Err(NlosError::Shape("time factor must be at least 1".into()));
    }
    let f = upsample_factor(volume.grid(), target)?;
    let src = volume.data();
    let (t_src, ny_src, nx_src) = src.dim();
    let tt = linear_taps(t_src, t_src * time_factor, time_factor);
    let ty = linear_taps(ny_src, target.ny(), f);
    let tx = linear_taps(nx_src, target.nx(), f);
    let data = Array3::from_shape_fn((t_src * time_factor, target.ny(), target.nx()), |(t, i, j)| {
        let (t0, t1, wt) = tt[t];
        let (y0, y1, wy) = ty[i];
        let (x0, x1, wx) = tx[j];
        let row = |tk: usize, yk: usize| {
            src[[tk, yk, x0]] * (1.0 - wx) + src[[tk, yk, x1]] * wx
        };
        let plane = |tk: usize| row(tk, y0) * (1.0 - wy) + row(tk, y1) * wy;
        plane(t0) * (1.0 - wt) + plane(t1) * wt
    });
    let bin_res = volume.bin_resolution_ps() / time_factor as f64;
    TransientVolume::new(
        data,
        bin_res,
        volume.t0_offset_bins() * time_factor as i64,
        target.clone(),
    )
}

/// Places the volume inside a zero field on `target`, which must share its
/// lattice and contain it.
pub fn zero_pad_aperture(volume: &TransientVolume, target: &ScanGrid) -> Result<TransientVolume> {
    let src = volume.grid();
    let (oy, ox) = src.offset_in(target)?;
    if oy < 0
        || ox < 0
        || oy as usize + src.ny() > target.ny()
        || ox as usize + src.nx() > target.nx()
    {
        return Err(NlosError::Geometry(format!(
            "{}x{} source at offset ({oy}, {ox}) does not fit in {}x{} target",
            src.ny(),
            src.nx(),
            target.ny(),
            target.nx()
        )));
    }
    let (oy, ox) = (oy as usize, ox as usize);
    let mut data = Array3::zeros((volume.bins(), target.ny(), target.nx()));
    data.slice_mut(s![.., oy..oy + src.ny(), ox..ox + src.nx()])
        .assign(volume.data());
    volume.with_grid(data, target.clone())
}

/// Total padding `(rows, columns)` that [`zero_pad_aperture`] adds.
pub fn pad_widths(source: &ScanGrid, target: &ScanGrid) -> Result<(usize, usize)> {
    source.offset_in(target)?;
    if source.ny() > target.ny() || source.nx() > target.nx() {
        return Err(NlosError::Geometry("target is smaller than source".into()));
    }
    Ok((target.ny() - source.ny(), target.nx() - source.nx()))
}

/// Keeps the `window` consecutive bins holding the most photons. Ties go to
/// the earliest start. Returns the cropped volume and its start bin.
pub fn temporal_crop(volume: &TransientVolume, window: usize) -> Result<(TransientVolume, usize)> {
    let bins = volume.bins();
    if window == 0 || window > bins {
        return Err(NlosError::Shape(format!(
            "temporal window {window} must lie in 1..={bins}"
        )));
    }
    let per_bin: Vec<f64> = volume
        .data()
        .axis_iter(Axis(0))
        .map(|plane| plane.sum())
        .collect();
    let mut best = (0, f64::NEG_INFINITY);
    for start in 0..=bins - window {
        let total: f64 = per_bin[start..start + window].iter().sum();
        if total > best.1 {
            best = (start, total);
        }
    }
    let start = best.0;
    let data = volume
        .data()
        .slice(s![start..start + window, .., ..])
        .to_owned();
    let cropped = volume.with_offset(data, volume.t0_offset_bins() + start as i64)?;
    Ok((cropped, start))
}

/// How a partial scan is taken from a full measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScanPattern {
    Identity,
    Stride { stride: usize },
    Crop { extent_m: [f64; 2] },
    /// Crop first, then stride.
    CropStride { extent_m: [f64; 2], stride: usize },
}

impl ScanPattern {
    pub fn apply(&self, volume: &TransientVolume) -> Result<TransientVolume> {
        match *self {
            ScanPattern::Identity => Ok(volume.clone()),
            ScanPattern::Stride { stride } => subsample_stride(volume, stride),
            ScanPattern::Crop { extent_m } => crop_aperture(volume, extent_m),
            ScanPattern::CropStride { extent_m, stride } => {
                subsample_stride(&crop_aperture(volume, extent_m)?, stride)
            }
        }
    }

    /// Grid the pattern produces from `full`.
    pub fn sub_grid(&self, full: &ScanGrid) -> Result<ScanGrid> {
        let probe = TransientVolume::zeros(1, 1.0, full.clone())?;
        Ok(self.apply(&probe)?.grid().clone())
    }
}
