use ndarray::{Array, Array3, Dimension};
use serde::{Deserialize, Serialize};

use crate::error::{NlosError, Result};
use crate::grid::ScanGrid;

/// Time-resolved photon counts over the scan grid, laid out `[T, ny, nx]`.
///
/// Bin 0 is the instant the laser first hits the relay wall, shifted by
/// `t0_offset_bins` when the volume has been temporally cropped.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientVolume {
    data: Array3<f64>,
    bin_resolution_ps: f64,
    t0_offset_bins: i64,
    grid: ScanGrid,
}

impl TransientVolume {
    pub fn new(
        data: Array3<f64>,
        bin_resolution_ps: f64,
        t0_offset_bins: i64,
        grid: ScanGrid,
    ) -> Result<Self> {
        let (t, ny, nx) = data.dim();
        if t == 0 {
            return Err(NlosError::Shape("transient volume needs at least one bin".into()));
        }
        if ny != grid.ny() || nx != grid.nx() {
            return Err(NlosError::Shape(format!(
                "data is {ny}x{nx} but grid is {}x{}",
                grid.ny(),
                grid.nx()
            )));
        }
        if !(bin_resolution_ps > 0.0) || !bin_resolution_ps.is_finite() {
            return Err(NlosError::Domain(format!(
                "bin resolution must be positive, got {bin_resolution_ps}"
            )));
        }
        if let Some(v) = data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(NlosError::Domain(format!(
                "transient counts must be finite and non-negative, found {v}"
            )));
        }
        Ok(Self {
            data,
            bin_resolution_ps,
            t0_offset_bins,
            grid,
        })
    }

    pub fn zeros(bins: usize, bin_resolution_ps: f64, grid: ScanGrid) -> Result<Self> {
        Self::new(
            Array3::zeros((bins, grid.ny(), grid.nx())),
            bin_resolution_ps,
            0,
            grid,
        )
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    pub fn bins(&self) -> usize {
        self.data.dim().0
    }

    pub fn bin_resolution_ps(&self) -> f64 {
        self.bin_resolution_ps
    }

    pub fn t0_offset_bins(&self) -> i64 {
        self.t0_offset_bins
    }

    pub fn grid(&self) -> &ScanGrid {
        &self.grid
    }

    /// Same metadata, new payload. The payload is validated.
    pub fn with_data(&self, data: Array3<f64>) -> Result<Self> {
        Self::new(data, self.bin_resolution_ps, self.t0_offset_bins, self.grid.clone())
    }

    pub fn with_grid(&self, data: Array3<f64>, grid: ScanGrid) -> Result<Self> {
        Self::new(data, self.bin_resolution_ps, self.t0_offset_bins, grid)
    }

    pub fn with_offset(&self, data: Array3<f64>, t0_offset_bins: i64) -> Result<Self> {
        Self::new(data, self.bin_resolution_ps, t0_offset_bins, self.grid.clone())
    }

    pub fn total(&self) -> f64 {
        self.data.sum()
    }

    pub fn max(&self) -> f64 {
        max_value(self.data.iter().copied())
    }

    /// Scales the counts so the brightest bin is 1.
    pub fn normalized(&self) -> Self {
        Self {
            data: normalize_max(&self.data),
            ..self.clone()
        }
    }
}

/// Depth sampling of a reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthAxis {
    pub depths_m: Vec<f64>,
    pub z_near_m: f64,
    pub z_far_m: f64,
}

impl DepthAxis {
    /// `nz` voxel centres evenly filling `[z_near, z_far]`.
    pub fn uniform(z_near_m: f64, z_far_m: f64, nz: usize) -> Result<Self> {
        if nz == 0 || !(z_far_m > z_near_m) || z_near_m < 0.0 {
            return Err(NlosError::Domain(format!(
                "depth range [{z_near_m}, {z_far_m}] with {nz} planes is invalid"
            )));
        }
        let dz = (z_far_m - z_near_m) / nz as f64;
        let depths_m = (0..nz)
            .map(|k| z_near_m + (k as f64 + 0.5) * dz)
            .collect();
        Self::new(depths_m, z_near_m, z_far_m)
    }

    pub fn new(depths_m: Vec<f64>, z_near_m: f64, z_far_m: f64) -> Result<Self> {
        if depths_m.is_empty() {
            return Err(NlosError::Domain("at least one depth plane is required".into()));
        }
        if depths_m.iter().any(|z| !(*z > 0.0) || !z.is_finite()) {
            return Err(NlosError::Domain("depth planes must be positive".into()));
        }
        if depths_m.windows(2).any(|w| w[1] <= w[0]) {
            return Err(NlosError::Domain("depth planes must be strictly increasing".into()));
        }
        if !(z_far_m > z_near_m) {
            return Err(NlosError::Domain(format!(
                "depth range [{z_near_m}, {z_far_m}] is empty"
            )));
        }
        Ok(Self {
            depths_m,
            z_near_m,
            z_far_m,
        })
    }

    pub fn len(&self) -> usize {
        self.depths_m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths_m.is_empty()
    }

    /// Depth of plane `k` mapped to `[0, 1]` over the range.
    pub fn normalized(&self, k: usize) -> f64 {
        (self.depths_m[k] - self.z_near_m) / (self.z_far_m - self.z_near_m)
    }
}

/// Reconstructed hidden-scene intensity, laid out `[nz, ny, nx]`. Lateral
/// sampling follows the aperture grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconVolume {
    data: Array3<f64>,
    grid: ScanGrid,
    depth: DepthAxis,
}

impl ReconVolume {
    pub fn new(data: Array3<f64>, grid: ScanGrid, depth: DepthAxis) -> Result<Self> {
        let (nz, ny, nx) = data.dim();
        if nz != depth.len() || ny != grid.ny() || nx != grid.nx() {
            return Err(NlosError::Shape(format!(
                "volume {:?} does not match {} planes over a {}x{} grid",
                data.dim(),
                depth.len(),
                grid.ny(),
                grid.nx()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(NlosError::Domain(format!(
                "intensities must be finite and non-negative, found {v}"
            )));
        }
        Ok(Self { data, grid, depth })
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn grid(&self) -> &ScanGrid {
        &self.grid
    }

    pub fn depth(&self) -> &DepthAxis {
        &self.depth
    }

    pub fn max(&self) -> f64 {
        max_value(self.data.iter().copied())
    }

    /// Voxel pitch `[dz, dy, dx]`; dz is the mean plane spacing.
    pub fn voxel_pitch_m(&self) -> [f64; 3] {
        let d = &self.depth;
        let dz = (d.z_far_m - d.z_near_m) / d.len() as f64;
        [dz, self.grid.delta_p_m(), self.grid.delta_p_m()]
    }

    /// Index of the brightest voxel `(z, y, x)`; ties go to the first in
    /// memory order.
    pub fn argmax(&self) -> (usize, usize, usize) {
        argmax3(&self.data)
    }

    pub fn normalized(&self) -> Self {
        Self {
            data: normalize_max(&self.data),
            ..self.clone()
        }
    }
}

pub(crate) fn max_value(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn argmax3(data: &Array3<f64>) -> (usize, usize, usize) {
    let mut best = (0, 0, 0);
    let mut best_v = f64::NEG_INFINITY;
    for (idx, &v) in data.indexed_iter() {
        if v > best_v {
            best_v = v;
            best = idx;
        }
    }
    best
}

/// Divides by the maximum so the peak becomes exactly 1. Arrays whose
/// maximum is not positive (e.g. all zero) are returned unchanged.
pub fn normalize_max<D: Dimension>(data: &Array<f64, D>) -> Array<f64, D> {
    let max = max_value(data.iter().copied());
    if max > 0.0 && max.is_finite() {
        data.mapv(|v| v / max)
    } else {
        data.clone()
    }
}
