//! SPAD measurement corruption.
//!
//! A clean (already subsampled) transient `H` becomes
//!
//! ```text
//! X  = η·(H ∗ g) + d
//! H' ~ Poisson(c·X)
//! ```
//!
//! with detection efficiency `η`, Gaussian timing jitter `g`, a scalar
//! background level `d` and exposure `c`. Steps run in exactly that order.

use ndarray::{Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NlosError, Result};
use crate::volume::{max_value, TransientVolume};

/// How the brightest "histograms" are ranked when estimating detection
/// efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EfficiencyRanking {
    /// Individual time bins ranked over the whole volume.
    #[default]
    Bins,
    /// One value per scan pixel: the maximum of its histogram.
    HistogramMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    pub jitter_fwhm_ps: f64,
    pub background_ratio_range: [f64; 2],
    pub exposure_range: [f64; 2],
    pub topk: usize,
    pub photon_cap: f64,
    pub ranking: EfficiencyRanking,
    /// Fixed exposure `c`, bypassing the random draw.
    pub exposure: Option<f64>,
    /// Fixed background ratio, bypassing the random draw.
    pub background_ratio: Option<f64>,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            jitter_fwhm_ps: 64.0,
            background_ratio_range: [0.1, 0.2],
            exposure_range: [0.1, 1.0],
            topk: 10_000,
            photon_cap: 100.0,
            ranking: EfficiencyRanking::Bins,
            exposure: None,
            background_ratio: None,
        }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        let ordered = |r: [f64; 2]| r[0] >= 0.0 && r[1] >= r[0] && r[1].is_finite();
        if !ordered(self.background_ratio_range) || !ordered(self.exposure_range) {
            return Err(NlosError::Configuration(format!(
                "noise ranges must be ordered and non-negative: background {:?}, exposure {:?}",
                self.background_ratio_range, self.exposure_range
            )));
        }
        if !(self.jitter_fwhm_ps >= 0.0) || !self.jitter_fwhm_ps.is_finite() {
            return Err(NlosError::Configuration(format!(
                "jitter FWHM must be non-negative, got {}",
                self.jitter_fwhm_ps
            )));
        }
        if self.topk == 0 || !(self.photon_cap > 0.0) {
            return Err(NlosError::Configuration(
                "top-k must be at least 1 and the photon cap positive".into(),
            ));
        }
        for (name, v) in [
            ("exposure", self.exposure),
            ("background ratio", self.background_ratio),
        ] {
            if let Some(v) = v {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(NlosError::Configuration(format!(
                        "{name} must be non-negative, got {v}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The random quantities drawn for one corrupted measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseDraw {
    pub efficiency: f64,
    pub background: f64,
    pub background_ratio: f64,
    pub exposure: f64,
}

/// Mean of the `topk` largest values (fewer if there are fewer values).
fn top_mean(mut values: Vec<f64>, topk: usize) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let k = topk.min(values.len());
    if k < values.len() {
        values.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    }
    values[..k].iter().sum::<f64>() / k as f64
}

/// Detection efficiency `η = cap/m` when `m > cap`, else 1, where `m` is the
/// mean of the `topk` brightest histogram values.
pub fn detection_efficiency(
    volume: &TransientVolume,
    topk: usize,
    cap: f64,
    ranking: EfficiencyRanking,
) -> f64 {
    let data = volume.data();
    let values: Vec<f64> = match ranking {
        EfficiencyRanking::Bins => data.iter().copied().collect(),
        EfficiencyRanking::HistogramMax => data
            .lanes(Axis(0))
            .into_iter()
            .map(|h| max_value(h.iter().copied()))
            .collect(),
    };
    let m = top_mean(values, topk.max(1));
    if m > cap {
        cap / m
    } else {
        1.0
    }
}

/// Discrete Gaussian jitter kernel for a FWHM given in bins, truncated at
/// ±3σ and normalised to unit sum.
pub fn jitter_kernel(fwhm_bins: f64) -> Vec<f64> {
    let sigma = fwhm_bins / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
    if !(sigma > 0.0) {
        return vec![1.0];
    }
    let half = (3.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-half..=half)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn convolve_same(hist: &[f64], kernel: &[f64]) -> Vec<f64> {
    let half = (kernel.len() / 2) as i64;
    let n = hist.len() as i64;
    (0..n)
        .map(|t| {
            kernel
                .iter()
                .enumerate()
                .filter_map(|(k, w)| {
                    let src = t + half - k as i64;
                    (0..n).contains(&src).then(|| w * hist[src as usize])
                })
                .sum()
        })
        .collect()
}

/// Convolves every histogram with the Gaussian jitter kernel. A FWHM of 0
/// returns the input unchanged.
pub fn apply_jitter(volume: &TransientVolume, fwhm_ps: f64) -> Result<TransientVolume> {
    if !(fwhm_ps >= 0.0) || !fwhm_ps.is_finite() {
        return Err(NlosError::Domain(format!("jitter FWHM must be >= 0, got {fwhm_ps}")));
    }
    if fwhm_ps == 0.0 {
        return Ok(volume.clone());
    }
    let kernel = jitter_kernel(fwhm_ps / volume.bin_resolution_ps());
    let data = map_histograms(volume.data(), |h| convolve_same(h, &kernel));
    volume.with_data(data)
}

fn map_histograms<F>(data: &Array3<f64>, f: F) -> Array3<f64>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let (t, ny, nx) = data.dim();
    let out: Vec<Vec<f64>> = (0..ny * nx)
        .into_par_iter()
        .map(|p| {
            let h: Vec<f64> = (0..t).map(|n| data[[n, p / nx, p % nx]]).collect();
            f(&h)
        })
        .collect();
    let mut res = Array3::zeros((t, ny, nx));
    for (p, h) in out.into_iter().enumerate() {
        for (n, v) in h.into_iter().enumerate() {
            res[[n, p / nx, p % nx]] = v;
        }
    }
    res
}

fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    if mean > 0.0 {
        // Means are finite and far below the sampler's limit for any
        // physical photon count.
        Poisson::new(mean).map(|d| d.sample(rng)).unwrap_or(f64::NAN)
    } else {
        0.0
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..=range[1])
    } else {
        range[0]
    }
}

/// Applies the full noise model. Deterministic for a given `seed`: the
/// scalar draws use stream 0 and scan pixel `p` samples from stream `p + 1`.
pub fn corrupt(
    volume: &TransientVolume,
    params: &NoiseParams,
    seed: u64,
) -> Result<(TransientVolume, NoiseDraw)> {
    params.validate()?;
    let mut global = ChaCha8Rng::seed_from_u64(seed);
    global.set_stream(0);
    let background_ratio = params
        .background_ratio
        .unwrap_or_else(|| draw(&mut global, params.background_ratio_range));
    let exposure = params
        .exposure
        .unwrap_or_else(|| draw(&mut global, params.exposure_range));

    let efficiency = detection_efficiency(volume, params.topk, params.photon_cap, params.ranking);
    let scaled = volume.with_data(volume.data().mapv(|v| v * efficiency))?;
    let jittered = apply_jitter(&scaled, params.jitter_fwhm_ps)?;
    let background = background_ratio * jittered.max().max(0.0);

    let (t, ny, nx) = jittered.data().dim();
    let src = jittered.data();
    let samples: Vec<Vec<f64>> = (0..ny * nx)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64 + 1);
            (0..t)
                .map(|n| {
                    let x = src[[n, p / nx, p % nx]] + background;
                    poisson(&mut rng, exposure * x)
                })
                .collect()
        })
        .collect();
    let mut data = Array3::zeros((t, ny, nx));
    for (p, h) in samples.into_iter().enumerate() {
        for (n, v) in h.into_iter().enumerate() {
            data[[n, p / nx, p % nx]] = v;
        }
    }
    let noisy = volume.with_data(data)?;
    Ok((
        noisy,
        NoiseDraw {
            efficiency,
            background,
            background_ratio,
            exposure,
        },
    ))
}
