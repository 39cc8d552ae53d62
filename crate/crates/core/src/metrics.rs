//! Evaluation protocol: projections, depth maps, foreground masks and image
//! metrics.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{NlosError, Result};
use crate::volume::{normalize_max, ReconVolume};

/// Depth value assigned to pixels without a confident return.
pub const BACKGROUND_DEPTH: f64 = 1.0;
pub const DEFAULT_DEPTH_THRESHOLD: f64 = 0.1;
pub const DEFAULT_MASK_KERNEL: usize = 5;
pub const PSNR_CAP_DB: f64 = 100.0;

const MSE_FLOOR: f64 = 1e-10;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Per-pixel maximum over depth, scaled so the peak is 1.
pub fn max_intensity_projection(volume: &ReconVolume) -> Array2<f64> {
    let mip = volume
        .data()
        .fold_axis(Axis(0), f64::NEG_INFINITY, |a, &b| a.max(b));
    normalize_max(&mip)
}

/// Normalised depth of the brightest plane per pixel, or
/// [`BACKGROUND_DEPTH`] where that maximum is below `threshold_frac` of the
/// global maximum.
pub fn depth_map(volume: &ReconVolume, threshold_frac: f64) -> Result<Array2<f64>> {
    if !(threshold_frac > 0.0 && threshold_frac <= 1.0) {
        return Err(NlosError::Domain(format!(
            "depth threshold must lie in (0, 1], got {threshold_frac}"
        )));
    }
    let data = volume.data();
    let (nz, ny, nx) = data.dim();
    let global = volume.max();
    let mut out = Array2::from_elem((ny, nx), BACKGROUND_DEPTH);
    if !(global > 0.0) {
        return Ok(out);
    }
    let cut = threshold_frac * global;
    for i in 0..ny {
        for j in 0..nx {
            let mut best = (0, f64::NEG_INFINITY);
            for k in 0..nz {
                let v = data[[k, i, j]];
                if v > best.1 {
                    best = (k, v);
                }
            }
            if best.1 >= cut {
                out[[i, j]] = volume.depth().normalized(best.0);
            }
        }
    }
    Ok(out)
}

/// Foreground (depth below background) dilated by a `kernel`-wide box.
pub fn foreground_mask(depth: &Array2<f64>, kernel: usize) -> Result<Array2<bool>> {
    if kernel == 0 || kernel % 2 == 0 {
        return Err(NlosError::Domain(format!("mask kernel must be odd, got {kernel}")));
    }
    let (ny, nx) = depth.dim();
    let h = kernel / 2;
    Ok(Array2::from_shape_fn((ny, nx), |(i, j)| {
        let (i0, i1) = (i.saturating_sub(h), (i + h).min(ny - 1));
        let (j0, j1) = (j.saturating_sub(h), (j + h).min(nx - 1));
        (i0..=i1).any(|a| (j0..=j1).any(|b| depth[[a, b]] < BACKGROUND_DEPTH))
    }))
}

fn same_shape(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(NlosError::Shape(format!(
            "image shapes differ: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

pub fn mse(pred: &Array2<f64>, gt: &Array2<f64>) -> Result<f64> {
    same_shape(pred, gt)?;
    let n = pred.len() as f64;
    Ok(pred.iter().zip(gt.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n)
}

/// Peak signal-to-noise ratio for unit-range images, capped at
/// [`PSNR_CAP_DB`].
pub fn psnr(pred: &Array2<f64>, gt: &Array2<f64>) -> Result<f64> {
    let e = mse(pred, gt)?;
    if e < MSE_FLOOR {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / e).log10()).min(PSNR_CAP_DB))
}

fn gaussian_window(size: usize) -> Vec<f64> {
    let c = (size / 2) as f64;
    let w: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

fn filter_valid(img: &Array2<f64>, w: &[f64]) -> Array2<f64> {
    let n = w.len();
    let (ny, nx) = img.dim();
    let rows = Array2::from_shape_fn((ny, nx + 1 - n), |(i, j)| {
        (0..n).map(|k| w[k] * img[[i, j + k]]).sum::<f64>()
    });
    Array2::from_shape_fn((ny + 1 - n, nx + 1 - n), |(i, j)| {
        (0..n).map(|k| w[k] * rows[[i + k, j]]).sum::<f64>()
    })
}

/// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5),
/// data range 1, valid-mode filtering. Images smaller than the window use
/// the largest odd window that fits.
pub fn ssim(pred: &Array2<f64>, gt: &Array2<f64>) -> Result<f64> {
    same_shape(pred, gt)?;
    let (ny, nx) = pred.dim();
    let fit = ny.min(nx);
    if fit == 0 {
        return Err(NlosError::Shape("cannot compare empty images".into()));
    }
    let size = SSIM_WINDOW.min(if fit % 2 == 1 { fit } else { fit - 1 });
    let w = gaussian_window(size);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mu_x = filter_valid(pred, &w);
    let mu_y = filter_valid(gt, &w);
    let xx = filter_valid(&(pred * pred), &w);
    let yy = filter_valid(&(gt * gt), &w);
    let xy = filter_valid(&(pred * gt), &w);
    let mut total = 0.0;
    for (idx, &mx) in mu_x.indexed_iter() {
        let my = mu_y[idx];
        let sx = xx[idx] - mx * mx;
        let sy = yy[idx] - my * my;
        let sxy = xy[idx] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * sxy + c2))
            / ((mx * mx + my * my + c1) * (sx + sy + c2));
    }
    Ok(total / mu_x.len() as f64)
}

/// Root-mean-square depth error, over `mask` pixels when given. An empty
/// mask yields 0.
pub fn rmse_depth(
    pred: &Array2<f64>,
    gt: &Array2<f64>,
    mask: Option<&Array2<bool>>,
) -> Result<f64> {
    same_shape(pred, gt)?;
    if let Some(m) = mask {
        if m.dim() != pred.dim() {
            return Err(NlosError::Shape(format!(
                "mask shape {:?} does not match images {:?}",
                m.dim(),
                pred.dim()
            )));
        }
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (idx, &p) in pred.indexed_iter() {
        if mask.is_none_or(|m| m[idx]) {
            sum += (p - gt[idx]).powi(2);
            count += 1;
        }
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok((sum / count as f64).sqrt())
}

/// Scores for one reconstruction against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub rmse_depth: f64,
    pub foreground_psnr_db: Option<f64>,
    pub foreground_rmse_depth: Option<f64>,
    pub depth_units: String,
    pub depth_threshold_frac: f64,
    pub mask_kernel: usize,
    pub provenance: serde_json::Map<String, serde_json::Value>,
}

/// Compares normalised projections and depth maps of `pred` and `gt` with
/// the default threshold and mask kernel.
pub fn evaluate(pred: &ReconVolume, gt: &ReconVolume) -> Result<EvalReport> {
    evaluate_with(pred, gt, DEFAULT_DEPTH_THRESHOLD, DEFAULT_MASK_KERNEL)
}

/// Foreground variants use the ground-truth mask dilated by `mask_kernel`.
pub fn evaluate_with(
    pred: &ReconVolume,
    gt: &ReconVolume,
    threshold_frac: f64,
    mask_kernel: usize,
) -> Result<EvalReport> {
    let mp = max_intensity_projection(pred);
    let mg = max_intensity_projection(gt);
    let dp = depth_map(pred, threshold_frac)?;
    let dg = depth_map(gt, threshold_frac)?;
    let mut report = evaluate_images(&mp, &mg, &dp, &dg, mask_kernel)?;
    report.depth_threshold_frac = threshold_frac;
    Ok(report)
}

/// Scores precomputed projections and depth maps. The reported depth
/// threshold is the default; [`evaluate_with`] overwrites it.
pub fn evaluate_images(
    mip_pred: &Array2<f64>,
    mip_gt: &Array2<f64>,
    depth_pred: &Array2<f64>,
    depth_gt: &Array2<f64>,
    mask_kernel: usize,
) -> Result<EvalReport> {
    let mask = foreground_mask(depth_gt, mask_kernel)?;
    let any_fg = mask.iter().any(|m| *m);
    let foreground_psnr_db = if any_fg {
        let sel: Vec<(f64, f64)> = mip_pred
            .iter()
            .zip(mip_gt.iter())
            .zip(mask.iter())
            .filter(|(_, m)| **m)
            .map(|(p, _)| (*p.0, *p.1))
            .collect();
        let e = sel.iter().map(|(a, b)| (a - b).powi(2)).sum::<f64>() / sel.len() as f64;
        Some(if e < MSE_FLOOR {
            PSNR_CAP_DB
        } else {
            (10.0 * (1.0 / e).log10()).min(PSNR_CAP_DB)
        })
    } else {
        None
    };
    let foreground_rmse_depth = if any_fg {
        Some(rmse_depth(depth_pred, depth_gt, Some(&mask))?)
    } else {
        None
    };
    Ok(EvalReport {
        psnr_db: psnr(mip_pred, mip_gt)?,
        ssim: ssim(mip_pred, mip_gt)?,
        rmse_depth: rmse_depth(depth_pred, depth_gt, None)?,
        foreground_psnr_db,
        foreground_rmse_depth,
        depth_units: "normalized".into(),
        depth_threshold_frac: DEFAULT_DEPTH_THRESHOLD,
        mask_kernel,
        provenance: serde_json::Map::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::make_scan_grid;
    use crate::volume::DepthAxis;
    use ndarray::Array3;

    fn recon(data: Array3<f64>) -> ReconVolume {
        let (nz, ny, nx) = data.dim();
        let grid = make_scan_grid(2.0, 2.0 * ny as f64 / nx as f64, nx, ny, true, None).unwrap();
        ReconVolume::new(data, grid, DepthAxis::uniform(0.0, 2.0, nz).unwrap()).unwrap()
    }

    fn textured(n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, n), |(i, j)| {
            0.5 + 0.4 * ((i as f64 * 0.7).sin() * (j as f64 * 0.4).cos())
        })
    }

    #[test]
    fn projection_of_single_voxel() {
        let mut d = Array3::zeros((4, 5, 6));
        d[[2, 3, 1]] = 7.0;
        let mip = max_intensity_projection(&recon(d));
        assert_eq!(mip[[3, 1]], 1.0);
        assert_eq!(mip.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn depth_of_point_target() {
        let mut d = Array3::zeros((32, 8, 8));
        d[[16, 4, 4]] = 1.0;
        d[[3, 0, 0]] = 0.05;
        let dm = depth_map(&recon(d.clone()), 0.1).unwrap();
        assert!((dm[[4, 4]] - 16.5 / 32.0).abs() < 1e-12);
        assert_eq!(dm[[0, 0]], BACKGROUND_DEPTH);
        assert_eq!(dm[[1, 1]], BACKGROUND_DEPTH);
        let scaled = depth_map(&recon(d.mapv(|v| v * 3.7)), 0.1).unwrap();
        assert_eq!(scaled, dm);
        let zero = depth_map(&recon(Array3::zeros((4, 3, 3))), 0.1).unwrap();
        assert!(zero.iter().all(|v| *v == BACKGROUND_DEPTH));
        assert!(depth_map(&recon(Array3::zeros((4, 3, 3))), 0.0).is_err());
    }

    #[test]
    fn mask_dilates_single_pixel() {
        let mut depth = Array2::from_elem((12, 12), BACKGROUND_DEPTH);
        depth[[6, 5]] = 0.3;
        let m = foreground_mask(&depth, 5).unwrap();
        assert_eq!(m.iter().filter(|v| **v).count(), 25);
        assert!(m[[4, 3]] && m[[8, 7]] && !m[[3, 5]] && !m[[6, 8]]);
        let bg = Array2::from_elem((5, 5), BACKGROUND_DEPTH);
        assert!(foreground_mask(&bg, 5).unwrap().iter().all(|v| !*v));
        assert!(foreground_mask(&bg, 4).is_err());
    }

    #[test]
    fn identical_images_hit_fixed_points() {
        let a = textured(32);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(rmse_depth(&a, &a, None).unwrap(), 0.0);
    }

    #[test]
    fn psnr_arithmetic() {
        let a = Array2::zeros((10, 10));
        let b = Array2::from_elem((10, 10), 0.1);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
    }

    #[test]
    fn negative_image_is_dissimilar() {
        let a = textured(24);
        let neg = a.mapv(|v| 1.0 - v);
        let s = ssim(&a, &neg).unwrap();
        assert!(s < 1.0);
        assert_eq!(s, ssim(&neg, &a).unwrap());
    }

    #[test]
    fn small_images_shrink_the_window() {
        let a = textured(8);
        let b = a.mapv(|v| v * 0.9);
        let s = ssim(&a, &b).unwrap();
        assert!(s > 0.0 && s < 1.0);
    }

    #[test]
    fn masked_rmse() {
        let a = Array2::from_shape_vec((1, 4), vec![0.0, 0.0, 0.0, 0.0]).unwrap();
        let b = Array2::from_shape_vec((1, 4), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let m = Array2::from_shape_vec((1, 4), vec![false, true, true, true]).unwrap();
        assert_eq!(rmse_depth(&a, &b, Some(&m)).unwrap(), 0.0);
        assert_eq!(rmse_depth(&a, &b, None).unwrap(), 0.5);
        assert!(matches!(
            rmse_depth(&a, &Array2::zeros((2, 2)), None),
            Err(NlosError::Shape(_))
        ));
    }

    #[test]
    fn report_for_identical_volumes() {
        let mut d = Array3::zeros((8, 16, 16));
        d[[3, 7, 8]] = 2.0;
        d[[4, 7, 9]] = 1.0;
        let v = recon(d);
        let r = evaluate(&v, &v).unwrap();
        assert_eq!(r.psnr_db, PSNR_CAP_DB);
        assert!((r.ssim - 1.0).abs() < 1e-12);
        assert_eq!(r.rmse_depth, 0.0);
        assert_eq!(r.foreground_rmse_depth, Some(0.0));
        assert_eq!(r.depth_units, "normalized");
    }
}
