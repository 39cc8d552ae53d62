//! End-to-end acceptance suite. Prints one line per criterion and exits
//! non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ndarray::Array3;
use nlos_cli::config::{Completion, PipelineConfig, SceneConfig};
use nlos_cli::nlt::{self, NltObject};
use nlos_cli::pipeline::{self, RunOptions};
use nlos_core::metrics::{evaluate, psnr, rmse_depth, ssim, PSNR_CAP_DB};
use nlos_core::noise::{corrupt, detection_efficiency, EfficiencyRanking, NoiseParams};
use nlos_core::phasor::{
    aperture_field, calibrate_sigma, illumination_packet, IlluminationPacket, MeasurementSpectrum,
    PhasorField, REFERENCE_BAND_SIZE,
};
use nlos_core::render::{render, RenderOptions};
use nlos_core::rsd::{propagate, propagate_direct, PropagationPlan, DEFAULT_DIRECT_BUDGET};
use nlos_core::sampling::{crop_aperture, ScanPattern};
use nlos_core::scene::{AugmentParams, BaseShape, Scatterer, Scene};
use nlos_core::{
    make_scan_grid, Complex64, DepthAxis, FrequencyAxis, ReconVolume, TransientVolume,
    SPEED_OF_LIGHT,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn point(p: [f64; 3]) -> Scene {
    Scene::new(vec![Scatterer::new(p, 1.0, None).unwrap()])
}

/// Largest per-axis offset, in voxels, between the argmax and `truth`.
fn voxel_error(rec: &ReconVolume, truth: [f64; 3]) -> f64 {
    let (k, i, j) = rec.argmax();
    let g = rec.grid();
    let dz = rec.voxel_pitch_m()[0];
    let dx = (g.x_m(j) - truth[0]) / g.delta_p_m();
    let dy = (g.y_m(i) - truth[1]) / g.delta_p_m();
    let dzv = (rec.depth().depths_m[k] - truth[2]) / dz;
    dx.abs().max(dy.abs()).max(dzv.abs())
}

fn max_rel_diff(a: &ReconVolume, b: &ReconVolume) -> f64 {
    let peak = a.max().max(b.max());
    a.data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / peak
}

fn rsd_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = make_scan_grid(2.0, 2.0, 16, 16, true, None).unwrap();
        let axis = FrequencyAxis::new(512, 32.0).unwrap();
        let first = rng.random_range(20..60);
        let band: Vec<usize> = (first..first + 5).collect();
        let values = Array3::from_shape_fn((5, 16, 16), |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let field = PhasorField::new(values, band, axis, grid, 0.375).unwrap();
        let plan = PropagationPlan::new(DepthAxis::uniform(0.0, 2.0, 16).unwrap(), 2, true).unwrap();
        let fast = propagate(&field, &plan).map_err(|e| e.to_string())?;
        let slow = propagate_direct(&field, &plan, DEFAULT_DIRECT_BUDGET).map_err(|e| e.to_string())?;
        worst = worst.max(max_rel_diff(&fast, &slow));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-4 && secs <= 60.0,
        format!("max relative error {worst:.2e} (<= 1e-4), {secs:.2} s (<= 60 s)"),
    )
}

fn localization_config(pattern: ScanPattern) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        scene: SceneConfig::Point { position: [0.0, 0.0, 1.0], albedo: 1.0 },
        pattern,
        completion: Completion::Nearest,
        ..PipelineConfig::default()
    };
    cfg.acquisition.nx = 32;
    cfg.acquisition.ny = 32;
    cfg.reconstruction.nz = Some(32);
    cfg
}

fn localization() -> Outcome {
    let full = pipeline::run_pipeline(&localization_config(ScanPattern::Identity), &RunOptions::default())
        .map_err(|e| e.to_string())?;
    let strided = pipeline::run_pipeline(
        &localization_config(ScanPattern::Stride { stride: 2 }),
        &RunOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let a = voxel_error(&full.reconstruction, [0.0, 0.0, 1.0]);
    let b = voxel_error(&strided.reconstruction, [0.0, 0.0, 1.0]);
    check(
        a <= 1.0 && b <= 2.0,
        format!("full scan off by {a:.2} voxels (<= 1), stride 2 + nearest off by {b:.2} (<= 2)"),
    )
}

fn lateral_fwhm_m(rec: &ReconVolume) -> f64 {
    let (k, i, j) = rec.argmax();
    let row: Vec<f64> = (0..rec.grid().nx()).map(|x| rec.data()[[k, i, x]]).collect();
    let half = row[j] / 2.0;
    let mut left = j as f64;
    for x in (0..j).rev() {
        if row[x] < half {
            left = x as f64 + (half - row[x]) / (row[x + 1] - row[x]);
            break;
        }
    }
    let mut right = j as f64;
    for x in j + 1..row.len() {
        if row[x] < half {
            right = x as f64 - (half - row[x]) / (row[x - 1] - row[x]);
            break;
        }
    }
    (right - left) * rec.grid().delta_p_m()
}

fn resolution_trend() -> Outcome {
    let grid = make_scan_grid(2.0, 2.0, 64, 64, true, None).unwrap();
    let vol = render(&point([0.0, 0.0, 1.5]), &grid, 512, 32.0, &RenderOptions::default()).unwrap();
    let lambda = 0.375;
    let n = nlos_core::phasor::reference_n_cycles().unwrap();
    let reconstruct = |v: &TransientVolume| {
        let packet = illumination_packet(lambda, n, 512, 32.0, 0.1).unwrap();
        let field = aperture_field(&MeasurementSpectrum::of(v).unwrap(), &packet).unwrap();
        let plan = PropagationPlan::new(DepthAxis::uniform(0.0, 2.0, 64).unwrap(), 2, true).unwrap();
        propagate(&field, &plan).unwrap()
    };
    let wide = lateral_fwhm_m(&reconstruct(&vol));
    let narrow = lateral_fwhm_m(&reconstruct(&crop_aperture(&vol, [1.0, 1.0]).unwrap()));
    let ratio = narrow / wide;
    check(
        (1.4..=2.6).contains(&ratio),
        format!("FWHM 1 m {narrow:.4} m / 2 m {wide:.4} m = {ratio:.3} (in [1.4, 2.6])"),
    )
}

fn band_calibration() -> Outcome {
    let a = calibrate_sigma(0.09375, 512, 32.0, 0.1, REFERENCE_BAND_SIZE).map_err(|e| e.to_string())?;
    let b = calibrate_sigma(0.09375, 512, 32.0, 0.1, REFERENCE_BAND_SIZE).map_err(|e| e.to_string())?;
    let axis = FrequencyAxis::new(512, 32.0).unwrap();
    let packet = IlluminationPacket::with_sigma(0.09375, a, &axis, 0.1).map_err(|e| e.to_string())?;
    let count = packet.band().len();
    check(
        count == 47 && a.to_bits() == b.to_bits(),
        format!(
            "{count} indices ({}..={}), sigma {a:.6e} s, identical across runs: {}",
            packet.band()[0],
            packet.band()[count - 1],
            a.to_bits() == b.to_bits()
        ),
    )
}

fn constant_volume(bins: usize, n: usize, value: f64) -> TransientVolume {
    let grid = make_scan_grid(1.0, 1.0, n, n, true, None).unwrap();
    TransientVolume::new(Array3::from_elem((bins, n, n), value), 32.0, 0, grid).unwrap()
}

fn noise_law() -> Outcome {
    let params = NoiseParams {
        jitter_fwhm_ps: 0.0,
        exposure: Some(1.0),
        background_ratio: Some(0.0),
        ..NoiseParams::default()
    };
    let (noisy, _) = corrupt(&constant_volume(1000, 10, 5.0), &params, 7).map_err(|e| e.to_string())?;
    let n = noisy.data().len() as f64;
    let mean = noisy.data().sum() / n;
    let var = noisy.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let eta = detection_efficiency(&constant_volume(100, 10, 250.0), 10_000, 100.0, EfficiencyRanking::Bins);
    let zero = constant_volume(64, 8, 0.0);
    let zero_ok = (0..5u64).all(|seed| {
        corrupt(&zero, &NoiseParams::default(), seed)
            .map(|(v, _)| v.data().iter().all(|x| *x == 0.0))
            .unwrap_or(false)
    });
    check(
        (mean - 5.0).abs() <= 0.07 && (var - 5.0).abs() <= 0.3 && eta == 0.4 && zero_ok,
        format!(
            "{n} draws: mean {mean:.4} (5 +/- 0.07), variance {var:.4} (5 +/- 0.3); eta {eta}; zero stays zero: {zero_ok}"
        ),
    )
}

fn convolution_theorem() -> Outcome {
    const T: usize = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let axis = FrequencyAxis::new(T, 32.0).unwrap();
    let grid = make_scan_grid(0.1, 0.1, 1, 1, true, None).unwrap();
    let phase = |k: usize, t: usize| 2.0 * std::f64::consts::PI * ((k * t) % T) as f64 / T as f64;
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let x: Vec<f64> = (0..T).map(|_| rng.random_range(0.0..1.0)).collect();
        let packet = if case % 2 == 0 {
            let lo = rng.random_range(1..T / 2 - 1);
            let hi = rng.random_range(lo + 1..T / 2);
            IlluminationPacket::flat(&axis, lo, hi)
        } else {
            let lambda = rng.random_range(0.03..0.1);
            let cycles = rng.random_range(1.0..3.0);
            IlluminationPacket::with_sigma(lambda, cycles * lambda / (2.0 * SPEED_OF_LIGHT), &axis, 0.1)
        }
        .map_err(|e| format!("case {case}: {e}"))?;
        let kernel: Vec<Complex64> = (0..T)
            .map(|t| {
                packet
                    .band()
                    .iter()
                    .zip(packet.coeffs())
                    .map(|(&k, c)| c * Complex64::from_polar(1.0, -phase(k, t)))
                    .sum::<Complex64>()
                    / T as f64
            })
            .collect();
        let y: Vec<Complex64> = (0..T)
            .map(|t| (0..T).map(|s| kernel[(t + T - s) % T] * x[s]).sum())
            .collect();
        let data = Array3::from_shape_fn((T, 1, 1), |(t, _, _)| x[t]);
        let vol = TransientVolume::new(data, 32.0, 0, grid.clone()).unwrap();
        let field = aperture_field(&MeasurementSpectrum::of(&vol).unwrap(), &packet).unwrap();
        let mut reference = Vec::new();
        let mut computed = Vec::new();
        for (slot, &k) in packet.band().iter().enumerate() {
            reference.push((0..T).map(|t| y[t] * Complex64::from_polar(1.0, phase(k, t))).sum::<Complex64>());
            computed.push(field.values()[[slot, 0, 0]]);
        }
        let scale = reference.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let spectral = reference
            .iter()
            .zip(&computed)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
            / scale;
        let time = field.to_time_domain();
        let tscale = y.iter().map(|v| v.re.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let temporal = (0..T).map(|t| (time[[t, 0, 0]] - y[t].re).abs()).fold(0.0, f64::max) / tscale;
        worst = worst.max(spectral).max(temporal);
    }
    check(worst <= 1e-10, format!("100 cases, worst relative error {worst:.2e} (<= 1e-10)"))
}

fn renderer_physics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let bin_s = 32e-12;
    let grid = make_scan_grid(1.0, 1.0, 4, 4, true, None).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let p = [
            rng.random_range(-0.6..0.6),
            rng.random_range(-0.6..0.6),
            rng.random_range(0.3..2.0),
        ];
        let vol = render(&point(p), &grid, 512, 32.0, &RenderOptions::default()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let s = grid.pixel_center(i, j);
                let r = ((p[0] - s[0]).powi(2) + (p[1] - s[1]).powi(2) + (p[2] - s[2]).powi(2)).sqrt();
                let expected = 2.0 * r / SPEED_OF_LIGHT / bin_s;
                let h: Vec<f64> = (0..512).map(|n| vol.data()[[n, i, j]]).collect();
                let total: f64 = h.iter().sum();
                let com = h.iter().enumerate().map(|(n, v)| n as f64 * v).sum::<f64>() / total;
                worst = worst.max((com - expected).abs());
            }
        }
    }
    let single = make_scan_grid(0.01, 0.01, 1, 1, true, None).unwrap();
    let distances = [0.5, 0.75, 1.0, 1.5, 2.0];
    let pts: Vec<(f64, f64)> = distances
        .iter()
        .map(|&z| {
            let v = render(&point([0.0, 0.0, z]), &single, 512, 32.0, &RenderOptions::default()).unwrap();
            (z.ln(), v.total().ln())
        })
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let exponent = -slope;
    check(
        worst <= 0.51 && (3.95..=4.05).contains(&exponent),
        format!("centre of mass within {worst:.3} bins (<= 0.51) over 50 geometries; falloff exponent {exponent:.4} (in [3.95, 4.05])"),
    )
}

fn subsample_matches_render() -> Result<(), String> {
    let cfg = PipelineConfig {
        seed: 4,
        scene: SceneConfig::Shape { shape: BaseShape::Glyph, augment: AugmentParams::default() },
        ..PipelineConfig::default()
    };
    let scene = pipeline::build_scene(&cfg).map_err(|e| e.to_string())?;
    let full = make_scan_grid(2.0, 2.0, 32, 32, true, None).unwrap();
    let opts = RenderOptions::default();
    let clean = render(&scene, &full, 512, 32.0, &opts).unwrap();
    for pattern in [
        ScanPattern::Stride { stride: 2 },
        ScanPattern::Stride { stride: 4 },
        ScanPattern::Crop { extent_m: [1.0, 1.0] },
        ScanPattern::CropStride { extent_m: [1.0, 1.0], stride: 2 },
    ] {
        let a = pattern.apply(&clean).map_err(|e| e.to_string())?;
        let sub = pattern.sub_grid(&full).map_err(|e| e.to_string())?;
        let b = render(&scene, &sub, 512, 32.0, &opts).unwrap();
        if a != b {
            return Err(format!("{pattern:?} differs from rendering the sub-grid"));
        }
    }
    Ok(())
}

fn nlt_round_trip() -> Result<(), String> {
    let grid = make_scan_grid(2.0, 2.0, 8, 8, true, None).unwrap();
    let clean = render(&point([0.2, -0.1, 0.9]), &grid, 512, 32.0, &RenderOptions::default()).unwrap();
    let clean = clean.with_data(clean.data().mapv(|v| v as f32 as f64)).unwrap();
    let packet = illumination_packet(0.375, 1.556, 512, 32.0, 0.1).unwrap();
    let field = aperture_field(&MeasurementSpectrum::of(&clean).unwrap(), &packet).unwrap();
    let plan = PropagationPlan::new(DepthAxis::uniform(0.0, 2.0, 8).unwrap(), 2, true).unwrap();
    let rec = propagate(&field, &plan).unwrap();
    let field = field
        .with_values(field.values().mapv(|v| Complex64::new(v.re as f32 as f64, v.im as f32 as f64)))
        .unwrap();
    let rec = ReconVolume::new(rec.data().mapv(|v| v as f32 as f64), rec.grid().clone(), rec.depth().clone()).unwrap();
    for object in [NltObject::Transient(clean), NltObject::Phasor(field), NltObject::Volume(rec)] {
        let bytes = nlt::encode(&object, Default::default()).map_err(|e| e.to_string())?;
        let (back, _) = nlt::decode(&bytes).map_err(|e| e.to_string())?;
        let again = nlt::encode(&back, Default::default()).map_err(|e| e.to_string())?;
        if back != object || again != bytes {
            return Err(format!("{} does not round-trip", object.kind_name()));
        }
    }
    Ok(())
}

fn pipeline_bytes(config: &Path, dir: &Path) -> Result<Vec<u8>, String> {
    let out = dir.join("report.json");
    let status = Command::new(env!("CARGO_BIN_EXE_nlos"))
        .arg("--config")
        .arg(config)
        .arg("--keep-intermediates")
        .arg(dir.join("kept"))
        .args(["pipeline", "-o"])
        .arg(&out)
        .status()
        .map_err(|e| e.to_string())?;
    if !status.success() {
        return Err(format!("pipeline exited with {status}"));
    }
    let mut bytes = std::fs::read(&out).map_err(|e| e.to_string())?;
    let mut names: Vec<_> = std::fs::read_dir(dir.join("kept"))
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .collect();
    names.sort();
    for name in names {
        bytes.extend(std::fs::read(name).map_err(|e| e.to_string())?);
    }
    Ok(bytes)
}

fn pipeline_determinism() -> Result<(), String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = tmp.path().join("run.toml");
    std::fs::write(
        &config,
        "seed = 12\n\
         [scene]\nsource = \"shape\"\nshape = \"box\"\n\
         [acquisition]\nnx = 16\nny = 16\n\
         [pattern]\nkind = \"stride\"\nstride = 2\n\
         [noise]\n\
         [reconstruction]\nnz = 16\n",
    )
    .map_err(|e| e.to_string())?;
    let a = pipeline_bytes(&config, &tmp.path().join("a"))?;
    let b = pipeline_bytes(&config, &tmp.path().join("b"))?;
    if a != b {
        return Err("two runs with the same seed differ".into());
    }
    Ok(())
}

fn metric_fixed_points() -> Result<(), String> {
    let grid = make_scan_grid(2.0, 2.0, 16, 16, true, None).unwrap();
    let vol = render(&point([0.1, 0.2, 0.8]), &grid, 512, 32.0, &RenderOptions::default()).unwrap();
    let packet = illumination_packet(0.375, 1.556, 512, 32.0, 0.1).unwrap();
    let field = aperture_field(&MeasurementSpectrum::of(&vol).unwrap(), &packet).unwrap();
    let plan = PropagationPlan::new(DepthAxis::uniform(0.0, 2.0, 16).unwrap(), 2, true).unwrap();
    let rec = propagate(&field, &plan).unwrap();
    let r = evaluate(&rec, &rec).map_err(|e| e.to_string())?;
    let img = nlos_core::metrics::max_intensity_projection(&rec);
    let depth = nlos_core::metrics::depth_map(&rec, 0.1).map_err(|e| e.to_string())?;
    let direct = (
        psnr(&img, &img).map_err(|e| e.to_string())?,
        ssim(&img, &img).map_err(|e| e.to_string())?,
        rmse_depth(&depth, &depth, None).map_err(|e| e.to_string())?,
    );
    let ok = r.psnr_db == PSNR_CAP_DB
        && r.ssim == 1.0
        && r.rmse_depth == 0.0
        && direct == (PSNR_CAP_DB, 1.0, 0.0);
    if !ok {
        return Err(format!("psnr {} ssim {} rmse {}", r.psnr_db, r.ssim, r.rmse_depth));
    }
    Ok(())
}

fn protocol_identities() -> Outcome {
    let parts: [(&str, fn() -> Result<(), String>); 4] = [
        ("subsample/render", subsample_matches_render),
        (".nlt round trip", nlt_round_trip),
        ("pipeline determinism", pipeline_determinism),
        ("metric fixed points", metric_fixed_points),
    ];
    let mut failures = Vec::new();
    for (name, f) in parts {
        if let Err(e) = f() {
            failures.push(format!("{name}: {e}"));
        }
    }
    if failures.is_empty() {
        Ok("subsample/render bit-exact, .nlt round trip bit-exact, pipeline byte-identical, metric fixed points hold".into())
    } else {
        Err(failures.join("; "))
    }
}

fn bandpass_study() -> Outcome {
    let truth = [0.0, 0.0, 1.0];
    let grid = make_scan_grid(2.0, 2.0, 32, 32, true, None).unwrap();
    let opts = RenderOptions { gain: 1e4, ..RenderOptions::default() };
    let clean = render(&point(truth), &grid, 512, 32.0, &opts).unwrap();
    let params = NoiseParams {
        exposure: Some(0.1),
        background_ratio: Some(0.15),
        ..NoiseParams::default()
    };
    let axis = FrequencyAxis::new(512, 32.0).unwrap();
    let central = illumination_packet(3.0 * grid.delta_p_m(), 1.556, 512, 32.0, 0.1).unwrap();
    let high = IlluminationPacket::flat(&axis, 200, 256).unwrap();
    let plan = PropagationPlan::new(DepthAxis::uniform(0.0, 2.0, 32).unwrap(), 2, true).unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..3 {
        let noisy = corrupt(&clean, &params, seed).map_err(|e| e.to_string())?.0;
        let spectrum = MeasurementSpectrum::of(&noisy).unwrap();
        let err = |p: &IlluminationPacket| {
            voxel_error(&propagate(&aperture_field(&spectrum, p).unwrap(), &plan).unwrap(), truth)
        };
        let (c, h) = (err(&central), err(&high));
        ok &= c <= 1.0 && h > 2.0;
        lines.push(format!("seed {seed}: central {c:.1}, high {h:.1}"));
    }
    check(ok, format!("{} voxels (central <= 1, high > 2)", lines.join("; ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("RSD oracle equivalence", rsd_oracle),
        ("end-to-end localization", localization),
        ("resolution-limit trend", resolution_trend),
        ("band calibration", band_calibration),
        ("noise law", noise_law),
        ("convolution theorem", convolution_theorem),
        ("renderer physics", renderer_physics),
        ("protocol identities", protocol_identities),
        ("band-pass study", bandpass_study),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
