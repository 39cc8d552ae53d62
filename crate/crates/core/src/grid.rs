//! Relay-wall scan lattice.
//!
//! A grid is a window onto an integer lattice of wall positions. Pixel
//! centres are always computed as `anchor + (first + j * stride) * pitch`,
//! so any grid derived by striding or cropping a parent reproduces the
//! parent's pixel centres bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{NlosError, Result};

const SQUARE_PIXEL_RTOL: f64 = 1e-12;
const ALIGN_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    nx: usize,
    ny: usize,
    lattice_pitch_m: f64,
    stride: usize,
    first: [i64; 2],
    anchor_m: [f64; 2],
    confocal: bool,
    laser_point_m: Option<[f64; 3]>,
}

/// Lattice description of a grid, as stored in file headers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub pitch_m: f64,
    pub stride: usize,
    pub first: [i64; 2],
    pub anchor_m: [f64; 2],
}

impl ScanGrid {
    /// Builds a grid of `nx * ny` square pixels centred on the wall origin.
    ///
    /// `laser_point_m` is required for non-confocal grids and ignored
    /// (dropped) for confocal ones.
    pub fn new(
        width_m: f64,
        height_m: f64,
        nx: usize,
        ny: usize,
        confocal: bool,
        laser_point_m: Option<[f64; 3]>,
    ) -> Result<Self> {
        if !(width_m > 0.0 && height_m > 0.0) || !width_m.is_finite() || !height_m.is_finite() {
            return Err(NlosError::Geometry(format!(
                "aperture extent must be positive, got {width_m} x {height_m} m"
            )));
        }
        if nx == 0 || ny == 0 {
            return Err(NlosError::Geometry(format!(
                "sampling counts must be at least 1, got {nx} x {ny}"
            )));
        }
        let pitch_x = width_m / nx as f64;
        let pitch_y = height_m / ny as f64;
        if ((pitch_x - pitch_y) / pitch_x).abs() > SQUARE_PIXEL_RTOL {
            return Err(NlosError::Geometry(format!(
                "pixels are not square: {pitch_x} m along x vs {pitch_y} m along y"
            )));
        }
        let laser_point_m = if confocal {
            None
        } else {
            Some(laser_point_m.ok_or_else(|| {
                NlosError::MissingParameter("non-confocal grid requires a laser point".into())
            })?)
        };
        Ok(Self {
            nx,
            ny,
            lattice_pitch_m: pitch_x,
            stride: 1,
            first: [0, 0],
            anchor_m: [
                (0.5 / nx as f64 - 0.5) * width_m,
                (0.5 / ny as f64 - 0.5) * height_m,
            ],
            confocal,
            laser_point_m,
        })
    }

    /// Rebuilds a grid from an explicit lattice description.
    pub fn from_lattice(
        nx: usize,
        ny: usize,
        lattice: Lattice,
        confocal: bool,
        laser_point_m: Option<[f64; 3]>,
    ) -> Result<Self> {
        if nx == 0 || ny == 0 || lattice.stride == 0 {
            return Err(NlosError::Geometry(format!(
                "invalid lattice: {nx} x {ny} pixels, stride {}",
                lattice.stride
            )));
        }
        if !(lattice.pitch_m > 0.0) || !lattice.pitch_m.is_finite() {
            return Err(NlosError::Geometry(format!(
                "lattice pitch must be positive, got {}",
                lattice.pitch_m
            )));
        }
        if !confocal && laser_point_m.is_none() {
            return Err(NlosError::MissingParameter(
                "non-confocal grid requires a laser point".into(),
            ));
        }
        Ok(Self {
            nx,
            ny,
            lattice_pitch_m: lattice.pitch_m,
            stride: lattice.stride,
            first: lattice.first,
            anchor_m: lattice.anchor_m,
            confocal,
            laser_point_m: if confocal { None } else { laser_point_m },
        })
    }

    pub fn lattice(&self) -> Lattice {
        Lattice {
            pitch_m: self.lattice_pitch_m,
            stride: self.stride,
            first: self.first,
            anchor_m: self.anchor_m,
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn pixel_count(&self) -> usize {
        self.nx * self.ny
    }

    /// Sampling distance between neighbouring pixels.
    pub fn delta_p_m(&self) -> f64 {
        self.lattice_pitch_m * self.stride as f64
    }

    pub fn width_m(&self) -> f64 {
        self.delta_p_m() * self.nx as f64
    }

    pub fn height_m(&self) -> f64 {
        self.delta_p_m() * self.ny as f64
    }

    pub fn confocal(&self) -> bool {
        self.confocal
    }

    pub fn laser_point_m(&self) -> Option<[f64; 3]> {
        self.laser_point_m
    }

    pub fn x_m(&self, j: usize) -> f64 {
        self.anchor_m[0] + (self.first[0] + (j * self.stride) as i64) as f64 * self.lattice_pitch_m
    }

    pub fn y_m(&self, i: usize) -> f64 {
        self.anchor_m[1] + (self.first[1] + (i * self.stride) as i64) as f64 * self.lattice_pitch_m
    }

    /// Centre of pixel (row `i`, column `j`) on the wall plane z = 0.
    pub fn pixel_center(&self, i: usize, j: usize) -> [f64; 3] {
        [self.x_m(j), self.y_m(i), 0.0]
    }

    /// Centre of the grid's bounding window.
    pub fn center_m(&self) -> [f64; 2] {
        [
            0.5 * (self.x_m(0) + self.x_m(self.nx - 1)),
            0.5 * (self.y_m(0) + self.y_m(self.ny - 1)),
        ]
    }

    /// Keeps every `stride`-th pixel starting at index 0 along both axes.
    pub fn strided(&self, stride: usize) -> Result<Self> {
        if stride == 0 || self.nx % stride != 0 || self.ny % stride != 0 {
            return Err(NlosError::Shape(format!(
                "stride {stride} does not divide grid {}x{}",
                self.nx, self.ny
            )));
        }
        Ok(Self {
            nx: self.nx / stride,
            ny: self.ny / stride,
            stride: self.stride * stride,
            ..self.clone()
        })
    }

    /// Sub-window starting at pixel (`i0`, `j0`) with the same pitch.
    pub fn window(&self, i0: usize, j0: usize, ny: usize, nx: usize) -> Result<Self> {
        if ny == 0 || nx == 0 || i0 + ny > self.ny || j0 + nx > self.nx {
            return Err(NlosError::Geometry(format!(
                "window {ny}x{nx} at ({i0}, {j0}) exceeds grid {}x{}",
                self.ny, self.nx
            )));
        }
        Ok(Self {
            nx,
            ny,
            first: [
                self.first[0] + (j0 * self.stride) as i64,
                self.first[1] + (i0 * self.stride) as i64,
            ],
            ..self.clone()
        })
    }

    /// Pixel offset (row, column) of this grid's pixel (0, 0) inside `outer`,
    /// provided both sample the same pitch on a common lattice.
    pub fn offset_in(&self, outer: &ScanGrid) -> Result<(i64, i64)> {
        let dp = outer.delta_p_m();
        if ((self.delta_p_m() - dp) / dp).abs() > ALIGN_TOL {
            return Err(NlosError::Geometry(format!(
                "sampling distances differ: {} m vs {} m",
                self.delta_p_m(),
                dp
            )));
        }
        let fx = (self.x_m(0) - outer.x_m(0)) / dp;
        let fy = (self.y_m(0) - outer.y_m(0)) / dp;
        let (rx, ry) = (fx.round(), fy.round());
        if (fx - rx).abs() > ALIGN_TOL || (fy - ry).abs() > ALIGN_TOL {
            return Err(NlosError::Geometry(format!(
                "grids are not lattice-aligned: offset ({fy}, {fx}) pixels"
            )));
        }
        Ok((ry as i64, rx as i64))
    }
}

/// Builds a centred scan grid. See [`ScanGrid::new`].
pub fn make_scan_grid(
    width_m: f64,
    height_m: f64,
    nx: usize,
    ny: usize,
    confocal: bool,
    laser_point_m: Option<[f64; 3]>,
) -> Result<ScanGrid> {
    ScanGrid::new(width_m, height_m, nx, ny, confocal, laser_point_m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_pitch() {
        let g = make_scan_grid(2.0, 2.0, 64, 64, true, None).unwrap();
        assert_eq!(g.delta_p_m(), 0.03125);
        assert_eq!(g.width_m(), 2.0);
    }

    #[test]
    fn single_pixel() {
        let g = make_scan_grid(2.0, 2.0, 1, 1, true, None).unwrap();
        assert_eq!(g.delta_p_m(), 2.0);
        assert_eq!(g.pixel_center(0, 0), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_non_square_pixels() {
        let err = make_scan_grid(1.0, 2.0, 64, 64, true, None).unwrap_err();
        assert!(matches!(err, NlosError::Geometry(_)));
    }

    #[test]
    fn non_confocal_needs_laser() {
        let err = make_scan_grid(2.0, 2.0, 8, 8, false, None).unwrap_err();
        assert!(matches!(err, NlosError::MissingParameter(_)));
        let g = make_scan_grid(2.0, 2.0, 8, 8, true, Some([1.0, 0.0, 0.0])).unwrap();
        assert_eq!(g.laser_point_m(), None);
    }

    #[test]
    fn pixel_centers_are_symmetric() {
        for &(w, h, nx, ny) in &[(2.0, 2.0, 64, 64), (1.8, 1.3, 180, 130), (2.0, 2.0, 7, 7)] {
            let g = make_scan_grid(w, h, nx, ny, true, None).unwrap();
            let (mut sx, mut sy) = (0.0, 0.0);
            for i in 0..ny {
                for j in 0..nx {
                    let p = g.pixel_center(i, j);
                    sx += p[0];
                    sy += p[1];
                }
            }
            assert!(sx.abs() < 1e-9 && sy.abs() < 1e-9, "{sx} {sy}");
        }
    }

    #[test]
    fn pixel_center_formula() {
        let g = make_scan_grid(2.0, 2.0, 64, 64, true, None).unwrap();
        for j in [0, 5, 31, 32, 63] {
            let expected = ((j as f64 + 0.5) / 64.0 - 0.5) * 2.0;
            assert!((g.x_m(j) - expected).abs() < 1e-15);
            assert!((g.y_m(j) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn stride_and_window_reproduce_parent_centres() {
        let g = make_scan_grid(2.0, 2.0, 64, 64, true, None).unwrap();
        let s = g.strided(4).unwrap();
        assert_eq!(s.nx(), 16);
        assert_eq!(s.delta_p_m(), 0.125);
        for j in 0..16 {
            assert_eq!(s.x_m(j).to_bits(), g.x_m(4 * j).to_bits());
        }
        let w = g.window(16, 16, 32, 32).unwrap();
        assert_eq!(w.delta_p_m(), g.delta_p_m());
        assert_eq!(w.offset_in(&g).unwrap(), (16, 16));
        let ws = w.strided(2).unwrap();
        let sw = g.strided(2).unwrap().window(8, 8, 16, 16).unwrap();
        assert_eq!(ws, sw);
    }

    #[test]
    fn misaligned_offset_is_rejected() {
        let g = make_scan_grid(2.0, 2.0, 64, 64, true, None).unwrap();
        let other = make_scan_grid(1.0, 1.0, 31, 31, true, None).unwrap();
        assert!(other.offset_in(&g).is_err());
    }
}
