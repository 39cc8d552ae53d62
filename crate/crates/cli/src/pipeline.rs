//! End-to-end run: render, sub-sample, corrupt, complete, convolve with the
//! target packet, propagate, project and score against the reconstruction
//! of the clean full scan.

use std::path::{Path, PathBuf};
use std::process::Command;

use nlos_core::metrics::{evaluate_with, EvalReport};
use nlos_core::noise::{corrupt, NoiseDraw};
use nlos_core::phasor::{
    aperture_field, illumination_packet, reference_n_cycles, IlluminationPacket,
    MeasurementSpectrum, PhasorField,
};
use nlos_core::render::render;
use nlos_core::rsd::{propagate, PropagationPlan};
use nlos_core::sampling::{temporal_crop, upsample_nearest, upsample_trilinear, zero_pad_aperture};
use nlos_core::scene::{sample_scene, Scatterer, Scene};
use nlos_core::{DepthAxis, FrequencyAxis, NlosError, ReconVolume, ScanGrid, TransientVolume};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::config::{Completion, PipelineConfig, SceneConfig};
use crate::error::{CliError, Result, StageExt};
use crate::nlt::{self, GridHeader, NltObject};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Directory receiving every intermediate file and the report.
    pub keep_intermediates: Option<PathBuf>,
    /// Command run as `<cmd> <in.nlt> <out.nlt>`: reads the corrupted partial
    /// transient and writes a phasor field on the full grid over the target
    /// band.
    pub enhancer: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub report: EvalReport,
    pub reconstruction: ReconVolume,
    pub ground_truth: ReconVolume,
    pub noise: Option<NoiseDraw>,
}

pub fn build_scene(config: &PipelineConfig) -> Result<Scene> {
    match &config.scene {
        SceneConfig::Point { position, albedo } => {
            Ok(Scene::new(vec![Scatterer::new(*position, *albedo, None)?]))
        }
        SceneConfig::Shape { shape, augment } => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            Ok(sample_scene(&mut rng, *shape, augment)?)
        }
        SceneConfig::File { path } => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            Ok(text.parse()?)
        }
    }
}

pub fn full_grid(config: &PipelineConfig) -> Result<ScanGrid> {
    let a = &config.acquisition;
    Ok(ScanGrid::new(a.width_m, a.height_m, a.nx, a.ny, a.confocal, a.laser_point_m)?)
}

/// Packet used for reconstruction on a time axis of `bins` bins.
pub fn target_packet(config: &PipelineConfig, full: &ScanGrid, bins: usize) -> Result<IlluminationPacket> {
    let p = &config.packet;
    let bin_ps = config.acquisition.bin_resolution_ps;
    if let Some([lo, hi]) = p.flat_band {
        return Ok(IlluminationPacket::flat(&FrequencyAxis::new(bins, bin_ps)?, lo, hi)?);
    }
    let lambda = p.lambda_m.unwrap_or(p.wavelength_coeff * full.delta_p_m());
    let n_cycles = match p.n_cycles {
        Some(n) => n,
        None => reference_n_cycles()?,
    };
    Ok(illumination_packet(lambda, n_cycles, bins, bin_ps, p.gamma)?)
}

pub fn depth_axis(config: &PipelineConfig) -> Result<DepthAxis> {
    let r = &config.reconstruction;
    let nz = r.nz.unwrap_or(config.acquisition.nx);
    Ok(DepthAxis::uniform(r.z_near_m, r.z_far_m, nz)?)
}

pub fn propagation_plan(config: &PipelineConfig, grid: &ScanGrid, t0_offset_bins: i64) -> Result<PropagationPlan> {
    let r = &config.reconstruction;
    let doubling = r.doubling.unwrap_or(grid.confocal());
    let illumination = if grid.confocal() { None } else { grid.laser_point_m() };
    let offset_s = t0_offset_bins as f64 * config.acquisition.bin_resolution_ps * 1e-12;
    Ok(PropagationPlan::new(depth_axis(config)?, r.pad_factor, doubling)?
        .with_amplitude(r.kernel_amplitude)
        .with_illumination_point(illumination)
        .with_time_offset(offset_s))
}

fn windowed(config: &PipelineConfig, volume: &TransientVolume) -> Result<TransientVolume> {
    match config.reconstruction.temporal_window {
        Some(w) => Ok(temporal_crop(volume, w)?.0),
        None => Ok(volume.clone()),
    }
}

/// Aperture field of a (complete, full-grid) transient under the target
/// packet, after the optional temporal window.
pub fn phasor_field(config: &PipelineConfig, volume: &TransientVolume) -> Result<(PhasorField, i64)> {
    let v = windowed(config, volume)?;
    let packet = target_packet(config, volume.grid(), v.bins())?;
    let field = aperture_field(&MeasurementSpectrum::of(&v)?, &packet)?;
    Ok((field, v.t0_offset_bins()))
}

/// Brings a partial scan back onto `full`: interpolation to the full
/// sampling distance, then zero-padding to the full extent.
pub fn complete(volume: &TransientVolume, full: &ScanGrid, method: Completion) -> Result<TransientVolume> {
    let src = volume.grid();
    let ratio = src.delta_p_m() / full.delta_p_m();
    let f = ratio.round();
    if f < 1.0 || (ratio - f).abs() > 1e-6 {
        return Err(NlosError::Shape(format!(
            "scan pitch {} m is not a multiple of the full pitch {} m",
            src.delta_p_m(),
            full.delta_p_m()
        ))
        .into());
    }
    let f = f as usize;
    let dense = if f == 1 {
        volume.clone()
    } else {
        let ox = ((src.x_m(0) - full.x_m(0)) / full.delta_p_m()).round();
        let oy = ((src.y_m(0) - full.y_m(0)) / full.delta_p_m()).round();
        if ox < 0.0 || oy < 0.0 {
            return Err(NlosError::Geometry("partial scan lies outside the full grid".into()).into());
        }
        let target = full.window(oy as usize, ox as usize, src.ny() * f, src.nx() * f)?;
        match method {
            Completion::Nearest => upsample_nearest(volume, &target)?,
            Completion::Trilinear => upsample_trilinear(volume, &target, 1)?,
        }
    };
    if dense.grid() == full {
        Ok(dense)
    } else {
        Ok(zero_pad_aperture(&dense, full)?)
    }
}

fn keep(dir: Option<&Path>, name: &str, object: &NltObject, files: &mut Vec<String>) -> Result<()> {
    if let Some(dir) = dir {
        nlt::write_nlt(&dir.join(name), object, Map::new())?;
        files.push(name.to_string());
    }
    Ok(())
}

fn run_enhancer(
    cmd: &str,
    input: &TransientVolume,
    packet: &IlluminationPacket,
    full: &ScanGrid,
    workdir: &Path,
) -> Result<PhasorField> {
    let in_path = workdir.join("enhancer_in.nlt");
    let out_path = workdir.join("enhancer_out.nlt");
    let mut extra = Map::new();
    extra.insert("target_band_indices".into(), json!(packet.band()));
    extra.insert("target_lambda_m".into(), json!(packet.lambda_m()));
    extra.insert("target_grid".into(), serde_json::to_value(GridHeader::of(full)).unwrap_or(Value::Null));
    nlt::write_nlt(&in_path, &NltObject::Transient(input.clone()), extra)?;
    let mut parts = cmd.split_whitespace();
    let program = parts
        .next()
        .ok_or_else(|| CliError::Enhancer("empty enhancer command".into()))?;
    let status = Command::new(program)
        .args(parts)
        .arg(&in_path)
        .arg(&out_path)
        .status()
        .map_err(|e| CliError::Enhancer(format!("cannot start `{program}`: {e}")))?;
    if !status.success() {
        return Err(CliError::Enhancer(format!("`{cmd}` exited with {status}")));
    }
    let field = nlt::read_phasor(&out_path)?;
    if field.band() != packet.band() {
        return Err(CliError::Enhancer(format!(
            "enhancer band {:?}..{:?} does not match the target band {:?}..{:?}",
            field.band().first(),
            field.band().last(),
            packet.band().first(),
            packet.band().last()
        )));
    }
    if (field.grid().ny(), field.grid().nx()) != (full.ny(), full.nx()) {
        return Err(CliError::Enhancer(format!(
            "enhancer output is {}x{}, expected the full {}x{} grid",
            field.grid().ny(),
            field.grid().nx(),
            full.ny(),
            full.nx()
        )));
    }
    Ok(field)
}

/// Runs every stage. Deterministic for a given configuration.
pub fn run_pipeline(config: &PipelineConfig, options: &RunOptions) -> Result<PipelineRun> {
    let dir = options.keep_intermediates.as_deref();
    if let Some(d) = dir {
        std::fs::create_dir_all(d).map_err(|e| CliError::io(d, e))?;
    }
    let mut files = Vec::new();
    let a = &config.acquisition;

    let scene = build_scene(config).stage("scene")?;
    if let Some(d) = dir {
        let path = d.join("scene.txt");
        std::fs::write(&path, scene.to_string()).map_err(|e| CliError::io(&path, e))?;
        files.push("scene.txt".into());
    }
    let full = full_grid(config).stage("render")?;
    let clean = render(&scene, &full, a.bins, a.bin_resolution_ps, &a.render).stage("render")?;
    keep(dir, "clean.nlt", &NltObject::Transient(clean.clone()), &mut files)?;

    let partial = config.pattern.apply(&clean).stage("subsample")?;
    keep(dir, "subsampled.nlt", &NltObject::Transient(partial.clone()), &mut files)?;

    let (measured, draw) = match &config.noise {
        Some(params) => {
            let (v, d) = corrupt(&partial, params, config.seed).stage("corrupt")?;
            (v, Some(d))
        }
        None => (partial, None),
    };
    keep(dir, "measured.nlt", &NltObject::Transient(measured.clone()), &mut files)?;

    let (field, t0) = match &options.enhancer {
        Some(cmd) => {
            let scratch;
            let workdir = match dir {
                Some(d) => d,
                None => {
                    scratch = tempdir().stage("enhance")?;
                    scratch.as_path()
                }
            };
            let input = windowed(config, &measured.normalized()).stage("enhance")?;
            let packet = target_packet(config, &full, input.bins()).stage("enhance")?;
            let field = run_enhancer(cmd, &input, &packet, &full, workdir).stage("enhance")?;
            if dir.is_none() {
                let _ = std::fs::remove_dir_all(workdir);
            }
            (field, input.t0_offset_bins())
        }
        None => {
            let completed = complete(&measured, &full, config.completion).stage("complete")?;
            let normalized = completed.normalized();
            keep(dir, "completed.nlt", &NltObject::Transient(normalized.clone()), &mut files)?;
            phasor_field(config, &normalized).stage("aperture field")?
        }
    };
    if let Some(d) = dir {
        nlt::write_nlt_with_offset(&d.join("field.nlt"), &NltObject::Phasor(field.clone()), Map::new(), t0)?;
        files.push("field.nlt".into());
    }

    let plan = propagation_plan(config, &full, t0).stage("reconstruct")?;
    let reconstruction = propagate(&field, &plan).stage("reconstruct")?;
    keep(dir, "volume.nlt", &NltObject::Volume(reconstruction.clone()), &mut files)?;

    let (gt_field, gt_t0) = phasor_field(config, &clean.normalized()).stage("ground truth")?;
    let gt_plan = propagation_plan(config, &full, gt_t0).stage("ground truth")?;
    let ground_truth = propagate(&gt_field, &gt_plan).stage("ground truth")?;
    keep(dir, "ground_truth.nlt", &NltObject::Volume(ground_truth.clone()), &mut files)?;

    let e = &config.evaluation;
    let mut report = evaluate_with(&reconstruction, &ground_truth, e.depth_threshold, e.mask_kernel)
        .stage("evaluate")?;
    report.provenance = provenance(config, &field, draw.as_ref(), &scene, files);
    if let Some(d) = dir {
        let path = d.join("report.json");
        std::fs::write(&path, report_json(&report)).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(PipelineRun {
        report,
        reconstruction,
        ground_truth,
        noise: draw,
    })
}

fn tempdir() -> Result<PathBuf> {
    let base = std::env::temp_dir().join(format!("nlos-enhance-{}", std::process::id()));
    std::fs::create_dir_all(&base).map_err(|e| CliError::io(&base, e))?;
    Ok(base)
}

fn provenance(
    config: &PipelineConfig,
    field: &PhasorField,
    draw: Option<&NoiseDraw>,
    scene: &Scene,
    files: Vec<String>,
) -> Map<String, Value> {
    let band = field.band();
    let mut m = Map::new();
    m.insert("seed".into(), json!(config.seed));
    m.insert("scene_points".into(), json!(scene.len()));
    m.insert("pattern".into(), serde_json::to_value(config.pattern).unwrap_or(Value::Null));
    m.insert("stride_anchor_index".into(), json!(0));
    m.insert("completion".into(), serde_json::to_value(config.completion).unwrap_or(Value::Null));
    m.insert("noise".into(), serde_json::to_value(draw).unwrap_or(Value::Null));
    m.insert("lambda_m".into(), json!(field.lambda_m()));
    m.insert("band".into(), json!([band.first(), band.last()]));
    m.insert("band_size".into(), json!(band.len()));
    m.insert("time_bins".into(), json!(field.axis().len()));
    m.insert(
        "n_cycles_source".into(),
        json!(if config.packet.n_cycles.is_some() {
            "configured"
        } else {
            "reference calibration: 47 indices, 512 bins x 32 ps, lambda 9.375 cm"
        }),
    );
    m.insert(
        "ground_truth".into(),
        json!("reconstruction of the clean full scan"),
    );
    m.insert("files".into(), json!(files));
    m
}

/// Pretty JSON with fields in declaration order.
pub fn report_json(report: &EvalReport) -> String {
    let mut s = serde_json::to_string_pretty(report).unwrap_or_default();
    s.push('\n');
    s
}

