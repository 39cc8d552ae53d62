//! Forward three-bounce transient renderer for point-scatterer scenes.
//!
//! Each scatterer deposits `albedo · cosines / falloff` photons at its path
//! length, split linearly between the two nearest time bins so that the
//! histogram's centre of mass sits exactly at the analytic time of flight.
//! Scatterers do not occlude each other.

use ndarray::Array3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NlosError, Result};
use crate::grid::ScanGrid;
use crate::scene::Scene;
use crate::volume::TransientVolume;
use crate::SPEED_OF_LIGHT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderOptions {
    /// Foreshortening at the relay wall.
    pub wall_cosine: bool,
    /// Lambertian cosine at the scatterer (only for scatterers with normals).
    pub object_cosine: bool,
    /// Photons per unit of rendered radiance.
    pub gain: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            wall_cosine: true,
            object_cosine: true,
            gain: 1.0,
        }
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Contribution of one scatterer to one scan pixel: path length in metres
/// and deposited weight.
#[derive(Debug, Clone, Copy)]
struct Return {
    path_m: f64,
    weight: f64,
}

fn confocal_return(
    sensor: [f64; 3],
    point: &crate::scene::Scatterer,
    opts: &RenderOptions,
) -> Return {
    let to_point = sub(point.position, sensor);
    let r = norm(to_point);
    let cos_wall = if opts.wall_cosine {
        (to_point[2] / r).max(0.0)
    } else {
        1.0
    };
    let cos_obj = match (opts.object_cosine, point.normal) {
        (true, Some(n)) => (-dot(n, to_point) / r).max(0.0),
        _ => 1.0,
    };
    let r2 = r * r;
    Return {
        path_m: 2.0 * r,
        weight: opts.gain * point.albedo * cos_wall * cos_obj / (r2 * r2),
    }
}

/// Per-surface cosines are geometric means of the illumination-side and
/// sensor-side cosines, so a laser coinciding with the sensor reproduces
/// the confocal model.
fn nonconfocal_return(
    laser: [f64; 3],
    sensor: [f64; 3],
    point: &crate::scene::Scatterer,
    opts: &RenderOptions,
) -> Return {
    let from_laser = sub(point.position, laser);
    let to_sensor = sub(point.position, sensor);
    let r1 = norm(from_laser);
    let r2 = norm(to_sensor);
    let cos_wall = if opts.wall_cosine {
        ((from_laser[2] / r1).max(0.0) * (to_sensor[2] / r2).max(0.0)).sqrt()
    } else {
        1.0
    };
    let cos_obj = match (opts.object_cosine, point.normal) {
        (true, Some(n)) => {
            ((-dot(n, from_laser) / r1).max(0.0) * (-dot(n, to_sensor) / r2).max(0.0)).sqrt()
        }
        _ => 1.0,
    };
    Return {
        path_m: r1 + r2,
        weight: opts.gain * point.albedo * cos_wall * cos_obj / (r1 * r1 * r2 * r2),
    }
}

fn deposit(hist: &mut [f64], pos: f64, weight: f64) {
    let lower = pos.floor();
    let frac = pos - lower;
    let lower = lower as usize;
    hist[lower] += weight * (1.0 - frac);
    if frac > 0.0 {
        hist[lower + 1] += weight * frac;
    }
}

fn render_with<F>(
    scene: &Scene,
    grid: &ScanGrid,
    bins: usize,
    bin_resolution_ps: f64,
    contribution: F,
) -> Result<TransientVolume>
where
    F: Fn([f64; 3], &crate::scene::Scatterer) -> Return + Sync,
{
    if bins == 0 || !(bin_resolution_ps > 0.0) {
        return Err(NlosError::Domain(format!(
            "need at least one bin of positive width, got {bins} x {bin_resolution_ps} ps"
        )));
    }
    for p in scene.points() {
        if !(p.position[2] > 0.0) {
            return Err(NlosError::Geometry(format!(
                "scatterer at {:?} is behind the relay wall",
                p.position
            )));
        }
    }
    let bin_m = SPEED_OF_LIGHT * bin_resolution_ps * 1e-12;
    let (ny, nx) = (grid.ny(), grid.nx());
    let last = (bins - 1) as f64;

    let histograms: Vec<std::result::Result<Vec<f64>, (f64, usize)>> = (0..ny * nx)
        .into_par_iter()
        .map(|pix| {
            let (i, j) = (pix / nx, pix % nx);
            let sensor = grid.pixel_center(i, j);
            let mut hist = vec![0.0; bins];
            let mut worst: Option<f64> = None;
            for point in scene.points() {
                let ret = contribution(sensor, point);
                let pos = ret.path_m / bin_m;
                if pos > last {
                    worst = Some(worst.map_or(pos, |w: f64| w.max(pos)));
                    continue;
                }
                deposit(&mut hist, pos, ret.weight);
            }
            match worst {
                Some(w) => Err((w, pix)),
                None => Ok(hist),
            }
        })
        .collect();

    let mut data = Array3::zeros((bins, ny, nx));
    let mut worst: Option<(f64, usize)> = None;
    for (pix, h) in histograms.into_iter().enumerate() {
        match h {
            Ok(hist) => {
                let (i, j) = (pix / nx, pix % nx);
                for (t, v) in hist.into_iter().enumerate() {
                    data[[t, i, j]] = v;
                }
            }
            Err((pos, p)) => {
                if worst.is_none_or(|(w, _)| pos > w) {
                    worst = Some((pos, p));
                }
            }
        }
    }
    if let Some((pos, pix)) = worst {
        return Err(NlosError::Truncation {
            path_bins: pos,
            pixel_y: pix / nx,
            pixel_x: pix % nx,
            bins,
        });
    }
    TransientVolume::new(data, bin_resolution_ps, 0, grid.clone())
}

/// Confocal render: each scan pixel is both illuminated and observed.
pub fn render_confocal(
    scene: &Scene,
    grid: &ScanGrid,
    bins: usize,
    bin_resolution_ps: f64,
) -> Result<TransientVolume> {
    render_confocal_with(scene, grid, bins, bin_resolution_ps, &RenderOptions::default())
}

pub fn render_confocal_with(
    scene: &Scene,
    grid: &ScanGrid,
    bins: usize,
    bin_resolution_ps: f64,
    opts: &RenderOptions,
) -> Result<TransientVolume> {
    if !grid.confocal() {
        return Err(NlosError::Configuration(
            "confocal render requested on a non-confocal grid".into(),
        ));
    }
    render_with(scene, grid, bins, bin_resolution_ps, |sensor, p| {
        confocal_return(sensor, p, opts)
    })
}

/// Non-confocal render with a single fixed laser point on the wall.
pub fn render_nonconfocal(
    scene: &Scene,
    grid: &ScanGrid,
    bins: usize,
    bin_resolution_ps: f64,
) -> Result<TransientVolume> {
    render_nonconfocal_with(scene, grid, bins, bin_resolution_ps, &RenderOptions::default())
}

pub fn render_nonconfocal_with(
    scene: &Scene,
    grid: &ScanGrid,
    bins: usize,
    bin_resolution_ps: f64,
    opts: &RenderOptions,
) -> Result<TransientVolume> {
    let laser = grid.laser_point_m().ok_or_else(|| {
        NlosError::MissingParameter("non-confocal render needs a laser point".into())
    })?;
    render_with(scene, grid, bins, bin_resolution_ps, |sensor, p| {
        nonconfocal_return(laser, sensor, p, opts)
    })
}

/// Dispatches on the grid's scanning mode.
pub fn render(
    scene: &Scene,
    grid: &ScanGrid,
    bins: usize,
    bin_resolution_ps: f64,
    opts: &RenderOptions,
) -> Result<TransientVolume> {
    if grid.confocal() {
        render_confocal_with(scene, grid, bins, bin_resolution_ps, opts)
    } else {
        render_nonconfocal_with(scene, grid, bins, bin_resolution_ps, opts)
    }
}
