use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use nlos_cli::config::{Completion, PipelineConfig, SceneConfig};
use nlos_cli::error::{CliError, ExitStatus, Result};
use nlos_cli::nlt::{self, NltObject};
use nlos_cli::pipeline::{self, RunOptions};
use nlos_core::metrics::{depth_map, evaluate_with, max_intensity_projection};
use nlos_core::noise::{corrupt, EfficiencyRanking};
use nlos_core::phasor::{
    aperture_field, bandpass_signal, calibrate_sigma, IlluminationPacket, MeasurementSpectrum,
};
use nlos_core::render::render;
use nlos_core::rsd::{propagate, propagate_direct, KernelAmplitude, DEFAULT_DIRECT_BUDGET};
use nlos_core::sampling::{crop_aperture, subsample_stride, temporal_crop, zero_pad_aperture};
use nlos_core::scene::{AugmentParams, BaseShape};
use nlos_core::{FrequencyAxis, ScanGrid, TransientVolume, SPEED_OF_LIGHT};
use serde_json::{json, Map, Value};

/// Phasor-field NLOS simulation, reconstruction and evaluation.
#[derive(Debug, Parser)]
#[command(name = "nlos", version)]
struct Cli {
    /// Pipeline configuration (TOML, or JSON by extension) supplying
    /// defaults for every subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for scene augmentation and noise; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for intermediate files (pipeline only).
    #[arg(long, global = true)]
    keep_intermediates: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Render a clean transient of a hidden scene.
    Render(RenderArgs),
    /// Apply the SPAD noise model to a clean transient.
    Corrupt(CorruptArgs),
    /// Stride, crop, pad or temporally window a transient.
    Subsample(SubsampleArgs),
    /// Convolve a transient with a packet (phasor field) or band-pass it.
    Filter(FilterArgs),
    /// Propagate a phasor field into the hidden volume by FFT.
    Reconstruct(ReconstructArgs),
    /// Propagate by direct summation (small inputs only).
    Oracle(OracleArgs),
    /// Maximum-intensity projection and depth map of a volume.
    Project(ProjectArgs),
    /// Score a reconstruction against ground truth.
    Evaluate(EvaluateArgs),
    /// Run every stage from scene to report.
    Pipeline(PipelineArgs),
}

fn parse_floats<const N: usize>(s: &str) -> std::result::Result<[f64; N], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

fn parse_triple(s: &str) -> std::result::Result<[f64; 3], String> {
    parse_floats::<3>(s)
}

fn parse_pair(s: &str) -> std::result::Result<[f64; 2], String> {
    parse_floats::<2>(s)
}

/// `W` for a square extent or `W,H`.
fn parse_extent(s: &str) -> std::result::Result<[f64; 2], String> {
    if s.contains(',') {
        parse_pair(s)
    } else {
        let w: f64 = s.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
        Ok([w, w])
    }
}

fn parse_index_pair(s: &str) -> std::result::Result<[usize; 2], String> {
    let [a, b] = parse_pair(s)?;
    if a < 0.0 || b < 0.0 || a.fract() != 0.0 || b.fract() != 0.0 {
        return Err(format!("`{s}` is not a pair of indices"));
    }
    Ok([a as usize, b as usize])
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AugmentPreset {
    Train,
    Validation,
    Identity,
}

#[derive(Debug, Args)]
struct RenderArgs {
    /// Scene text file (`x y z albedo [nx ny nz]` per line).
    #[arg(long, conflicts_with_all = ["shape", "point"])]
    scene_file: Option<PathBuf>,
    /// Procedural shape: point, plane_patch, box, sphere_shell, glyph.
    #[arg(long, conflicts_with = "point")]
    shape: Option<String>,
    /// Augmentation ranges for `--shape`.
    #[arg(long, value_enum, default_value = "train")]
    augment: AugmentPreset,
    /// Single scatterer at `x,y,z`.
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
    point: Option<[f64; 3]>,
    #[arg(long)]
    width_m: Option<f64>,
    #[arg(long)]
    height_m: Option<f64>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    /// Fixed laser point `x,y,z`; switches to non-confocal scanning.
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
    laser: Option<[f64; 3]>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    bin_ps: Option<f64>,
    /// Photons per unit of rendered radiance.
    #[arg(long)]
    gain: Option<f64>,
    /// Also write the scene as text.
    #[arg(long)]
    scene_out: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Ranking {
    Bins,
    HistogramMax,
}

#[derive(Debug, Args)]
struct CorruptArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Fixed exposure `c` instead of a random draw.
    #[arg(long)]
    exposure: Option<f64>,
    /// Fixed background ratio instead of a random draw.
    #[arg(long = "background", alias = "background-ratio")]
    background_ratio: Option<f64>,
    #[arg(long = "jitter-fwhm-ps", alias = "jitter-ps")]
    jitter_ps: Option<f64>,
    #[arg(long)]
    topk: Option<usize>,
    #[arg(long)]
    photon_cap: Option<f64>,
    #[arg(long, value_enum)]
    ranking: Option<Ranking>,
}

#[derive(Debug, Args)]
struct SubsampleArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Centred crop to `W` or `W,H` metres (applied before striding).
    #[arg(long, value_parser = parse_extent)]
    crop_m: Option<[f64; 2]>,
    #[arg(long)]
    stride: Option<usize>,
    /// Zero-pad into a centred `W` or `W,H` metre aperture at the same pitch.
    #[arg(long, value_parser = parse_extent)]
    pad_to: Option<[f64; 2]>,
    /// Keep the brightest window of this many bins.
    #[arg(long)]
    temporal_window: Option<usize>,
    /// Interpolate back onto the input grid after cropping and striding.
    #[arg(long, value_enum)]
    complete: Option<CompletionArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CompletionArg {
    Nearest,
    Trilinear,
}

#[derive(Debug, Args)]
struct FilterArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Packet wavelength; defaults to the configured multiple of the input
    /// sampling distance.
    #[arg(long)]
    lambda_m: Option<f64>,
    #[arg(long)]
    n_cycles: Option<f64>,
    /// Calibrate the pulse width to this many band indices.
    #[arg(long, conflicts_with = "n_cycles")]
    band_size: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Flat packet over DFT indices `lo,hi`.
    #[arg(long, value_parser = parse_index_pair, conflicts_with_all = ["lambda_m", "n_cycles", "band_size"])]
    flat_band: Option<[usize; 2]>,
    /// Band-pass to `|Ω|` in `[lo, hi)` rad/s and write the signed
    /// time-domain result instead of a phasor field.
    #[arg(long, value_parser = parse_pair, conflicts_with_all = ["lambda_m", "n_cycles", "band_size", "flat_band"])]
    omega_range: Option<[f64; 2]>,
    /// Also write the packet (band, coefficients, sigma) as JSON.
    #[arg(long, conflicts_with = "omega_range")]
    calibration_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PropagationArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Depth range `near,far` in metres.
    #[arg(long, value_parser = parse_pair)]
    depths: Option<[f64; 2]>,
    /// Number of depth planes.
    #[arg(long)]
    volume_dims: Option<usize>,
    /// Two-way kernel phase; defaults to on for confocal data.
    #[arg(long)]
    doubling: Option<bool>,
    #[arg(long, value_enum)]
    kernel_amplitude: Option<AmplitudeArg>,
    #[arg(long)]
    pad_factor: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AmplitudeArg {
    InvR,
    Unit,
}

#[derive(Debug, Args)]
struct ReconstructArgs {
    #[command(flatten)]
    common: PropagationArgs,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    common: PropagationArgs,
    /// Largest number of multiply-adds accepted.
    #[arg(long, default_value_t = DEFAULT_DIRECT_BUDGET)]
    budget: u128,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    depth_threshold: Option<f64>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    prediction: PathBuf,
    ground_truth: PathBuf,
    /// Report path; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    depth_threshold: Option<f64>,
    #[arg(long)]
    mask_kernel: Option<usize>,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Report path; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// External program run as `<cmd> <in.nlt> <out.nlt>` in place of
    /// interpolation.
    #[arg(long)]
    enhancer: Option<String>,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn provenance(pairs: &[(&str, Value)]) -> Map<String, Value> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

fn cmd_render(cli: &Cli, args: &RenderArgs) -> Result<()> {
    let mut cfg = load_config(cli)?;
    let a = &mut cfg.acquisition;
    set(&mut a.width_m, args.width_m);
    set(&mut a.height_m, args.height_m);
    set(&mut a.nx, args.nx);
    set(&mut a.ny, args.ny);
    set(&mut a.bins, args.bins);
    set(&mut a.bin_resolution_ps, args.bin_ps);
    set(&mut a.render.gain, args.gain);
    if args.laser.is_some() {
        a.confocal = false;
        a.laser_point_m = args.laser;
    }
    if let Some(path) = &args.scene_file {
        cfg.scene = SceneConfig::File { path: path.clone() };
    } else if let Some(name) = &args.shape {
        let augment = match args.augment {
            AugmentPreset::Train => AugmentParams::default(),
            AugmentPreset::Validation => AugmentParams::validation(),
            AugmentPreset::Identity => AugmentParams::identity(),
        };
        cfg.scene = SceneConfig::Shape {
            shape: name.parse::<BaseShape>()?,
            augment,
        };
    } else if let Some(p) = args.point {
        cfg.scene = SceneConfig::Point {
            position: p,
            albedo: 1.0,
        };
    }
    let scene = pipeline::build_scene(&cfg)?;
    let grid = pipeline::full_grid(&cfg)?;
    let a = &cfg.acquisition;
    let vol = render(&scene, &grid, a.bins, a.bin_resolution_ps, &a.render)?;
    if let Some(path) = &args.scene_out {
        std::fs::write(path, scene.to_string()).map_err(|e| CliError::io(path, e))?;
    }
    let extra = provenance(&[
        ("seed", json!(cfg.seed)),
        ("scene_points", json!(scene.len())),
        ("render", serde_json::to_value(a.render).unwrap_or(Value::Null)),
    ]);
    nlt::write_nlt(&args.output, &NltObject::Transient(vol), extra)
}

fn cmd_corrupt(cli: &Cli, args: &CorruptArgs) -> Result<()> {
    let cfg = load_config(cli)?;
    let vol = nlt::read_transient(&args.input)?;
    let mut params = cfg.noise.unwrap_or_default();
    if args.exposure.is_some() {
        params.exposure = args.exposure;
    }
    if args.background_ratio.is_some() {
        params.background_ratio = args.background_ratio;
    }
    set(&mut params.jitter_fwhm_ps, args.jitter_ps);
    set(&mut params.topk, args.topk);
    set(&mut params.photon_cap, args.photon_cap);
    if let Some(r) = args.ranking {
        params.ranking = match r {
            Ranking::Bins => EfficiencyRanking::Bins,
            Ranking::HistogramMax => EfficiencyRanking::HistogramMax,
        };
    }
    let (noisy, draw) = corrupt(&vol, &params, cfg.seed)?;
    let extra = provenance(&[
        ("seed", json!(cfg.seed)),
        ("noise_params", serde_json::to_value(params).unwrap_or(Value::Null)),
        ("noise_draw", serde_json::to_value(draw).unwrap_or(Value::Null)),
    ]);
    nlt::write_nlt(&args.output, &NltObject::Transient(noisy), extra)
}

fn centred_grid(like: &ScanGrid, extent: [f64; 2]) -> Result<ScanGrid> {
    let dp = like.delta_p_m();
    let nx = (extent[0] / dp).round() as usize;
    let ny = (extent[1] / dp).round() as usize;
    Ok(ScanGrid::new(
        nx as f64 * dp,
        ny as f64 * dp,
        nx,
        ny,
        like.confocal(),
        like.laser_point_m(),
    )?)
}

fn cmd_subsample(_cli: &Cli, args: &SubsampleArgs) -> Result<()> {
    let mut vol: TransientVolume = nlt::read_transient(&args.input)?;
    let full = vol.grid().clone();
    let mut steps = Vec::new();
    if let Some(extent) = args.crop_m {
        vol = crop_aperture(&vol, extent)?;
        steps.push(json!({"crop_m": extent}));
    }
    if let Some(s) = args.stride {
        vol = subsample_stride(&vol, s)?;
        steps.push(json!({"stride": s, "anchor_index": 0}));
    }
    if let Some(method) = args.complete {
        let m = match method {
            CompletionArg::Nearest => Completion::Nearest,
            CompletionArg::Trilinear => Completion::Trilinear,
        };
        vol = pipeline::complete(&vol, &full, m)?;
        steps.push(json!({"complete": serde_json::to_value(m).unwrap_or(Value::Null)}));
    }
    if let Some(extent) = args.pad_to {
        let target = centred_grid(vol.grid(), extent)?;
        vol = zero_pad_aperture(&vol, &target)?;
        steps.push(json!({"pad_to_m": extent}));
    }
    if let Some(w) = args.temporal_window {
        let (cropped, start) = temporal_crop(&vol, w)?;
        vol = cropped;
        steps.push(json!({"temporal_window": w, "start_bin": start}));
    }
    let extra = provenance(&[("sampling", Value::Array(steps))]);
    nlt::write_nlt(&args.output, &NltObject::Transient(vol), extra)
}

fn cmd_filter(cli: &Cli, args: &FilterArgs) -> Result<()> {
    let cfg = load_config(cli)?;
    let (object, header) = nlt::read_nlt(&args.input)?;
    let (data, bin_ps, t0, grid) = match object {
        NltObject::Transient(v) => (
            v.data().clone(),
            v.bin_resolution_ps(),
            v.t0_offset_bins(),
            v.grid().clone(),
        ),
        NltObject::Signal {
            data,
            bin_resolution_ps,
            t0_offset_bins,
            grid,
        } => (data, bin_resolution_ps, t0_offset_bins, grid),
        other => {
            return Err(CliError::Config(format!(
                "{} holds a {}, expected a transient",
                args.input.display(),
                other.kind_name()
            )))
        }
    };
    let _ = header;
    if let Some([lo, hi]) = args.omega_range {
        let filtered = bandpass_signal(data.view(), bin_ps, lo, hi)?;
        let obj = NltObject::Signal {
            data: filtered,
            bin_resolution_ps: bin_ps,
            t0_offset_bins: t0,
            grid,
        };
        let extra = provenance(&[("omega_range_rad_s", json!([lo, hi]))]);
        return nlt::write_nlt(&args.output, &obj, extra);
    }
    let bins = data.dim().0;
    let axis = FrequencyAxis::new(bins, bin_ps)?;
    let spectrum = MeasurementSpectrum::from_signal(data.view(), bin_ps, &grid)?;
    let p = &cfg.packet;
    let gamma = args.gamma.unwrap_or(p.gamma);
    let packet = if let Some([lo, hi]) = args.flat_band.or(p.flat_band) {
        IlluminationPacket::flat(&axis, lo, hi)?
    } else {
        let lambda = args
            .lambda_m
            .or(p.lambda_m)
            .unwrap_or(p.wavelength_coeff * grid.delta_p_m());
        let sigma = match (args.band_size, args.n_cycles.or(p.n_cycles)) {
            (Some(count), _) => calibrate_sigma(lambda, bins, bin_ps, gamma, count)?,
            (None, Some(n)) => n * lambda / (2.0 * SPEED_OF_LIGHT),
            (None, None) => {
                nlos_core::phasor::reference_n_cycles()? * lambda / (2.0 * SPEED_OF_LIGHT)
            }
        };
        IlluminationPacket::with_sigma(lambda, sigma, &axis, gamma)?
    };
    let field = aperture_field(&spectrum, &packet)?;
    if let Some(path) = &args.calibration_out {
        let doc = json!({
            "lambda_m": packet.lambda_m(),
            "sigma_s": packet.sigma_s(),
            "n_cycles": packet.n_cycles(),
            "gamma": packet.gamma(),
            "time_bins": bins,
            "bin_resolution_ps": bin_ps,
            "band_indices": packet.band(),
            "coeffs": packet.coeffs().iter().map(|c| [c.re, c.im]).collect::<Vec<_>>(),
        });
        let text = serde_json::to_string_pretty(&doc).unwrap_or_default() + "\n";
        write_text(Some(path), &text)?;
    }
    let extra = provenance(&[
        ("sigma_s", json!(packet.sigma_s())),
        ("n_cycles", json!(packet.n_cycles())),
        ("gamma", json!(packet.gamma())),
        ("band_size", json!(packet.band().len())),
        (
            "calibration",
            json!({
                "reference_bins": 512,
                "reference_bin_ps": 32.0,
                "reference_lambda_m": 0.09375,
                "reference_band_size": nlos_core::phasor::REFERENCE_BAND_SIZE,
            }),
        ),
    ]);
    nlt::write_nlt_with_offset(&args.output, &NltObject::Phasor(field), extra, t0)
}

fn propagation_setup(
    cli: &Cli,
    args: &PropagationArgs,
) -> Result<(nlos_core::phasor::PhasorField, nlos_core::rsd::PropagationPlan)> {
    let mut cfg = load_config(cli)?;
    let (object, header) = nlt::read_nlt(&args.input)?;
    let field = match object {
        NltObject::Phasor(f) => f,
        other => {
            return Err(CliError::Config(format!(
                "{} holds a {}, expected a phasor field",
                args.input.display(),
                other.kind_name()
            )))
        }
    };
    let r = &mut cfg.reconstruction;
    if let Some([near, far]) = args.depths {
        r.z_near_m = near;
        r.z_far_m = far;
    }
    if args.volume_dims.is_some() {
        r.nz = args.volume_dims;
    } else if r.nz.is_none() {
        r.nz = Some(field.grid().nx());
    }
    if args.doubling.is_some() {
        r.doubling = args.doubling;
    }
    if let Some(a) = args.kernel_amplitude {
        r.kernel_amplitude = match a {
            AmplitudeArg::InvR => KernelAmplitude::InvR,
            AmplitudeArg::Unit => KernelAmplitude::Unit,
        };
    }
    set(&mut r.pad_factor, args.pad_factor);
    cfg.acquisition.bin_resolution_ps = field.axis().bin_resolution_ps();
    let t0 = header.t0_offset_bins.unwrap_or(0);
    let plan = pipeline::propagation_plan(&cfg, field.grid(), t0)?;
    Ok((field, plan))
}

fn cmd_reconstruct(cli: &Cli, args: &ReconstructArgs) -> Result<()> {
    let (field, plan) = propagation_setup(cli, &args.common)?;
    let vol = propagate(&field, &plan)?;
    nlt::write_nlt(&args.common.output, &NltObject::Volume(vol), Map::new())
}

fn cmd_oracle(cli: &Cli, args: &OracleArgs) -> Result<()> {
    let (field, plan) = propagation_setup(cli, &args.common)?;
    let vol = propagate_direct(&field, &plan, args.budget)?;
    let extra = provenance(&[("method", json!("direct summation"))]);
    nlt::write_nlt(&args.common.output, &NltObject::Volume(vol), extra)
}

fn image_json(img: &Array2<f64>) -> Value {
    Value::Array(
        img.rows()
            .into_iter()
            .map(|row| Value::Array(row.iter().map(|v| json!(v)).collect()))
            .collect(),
    )
}

fn cmd_project(cli: &Cli, args: &ProjectArgs) -> Result<()> {
    let cfg = load_config(cli)?;
    let vol = nlt::read_volume(&args.input)?;
    let threshold = args.depth_threshold.unwrap_or(cfg.evaluation.depth_threshold);
    let mip = max_intensity_projection(&vol);
    let depth = depth_map(&vol, threshold)?;
    let out = json!({
        "depth_threshold_frac": threshold,
        "depth_units": "normalized",
        "mip": image_json(&mip),
        "depth": image_json(&depth),
    });
    let text = serde_json::to_string_pretty(&out).unwrap_or_default() + "\n";
    write_text(Some(&args.output), &text)
}

fn cmd_evaluate(cli: &Cli, args: &EvaluateArgs) -> Result<()> {
    let cfg = load_config(cli)?;
    let pred = nlt::read_volume(&args.prediction)?;
    let gt = nlt::read_volume(&args.ground_truth)?;
    let threshold = args.depth_threshold.unwrap_or(cfg.evaluation.depth_threshold);
    let kernel = args.mask_kernel.unwrap_or(cfg.evaluation.mask_kernel);
    let mut report = evaluate_with(&pred, &gt, threshold, kernel)?;
    report.provenance = provenance(&[
        ("prediction", json!(args.prediction.display().to_string())),
        ("ground_truth", json!(args.ground_truth.display().to_string())),
    ]);
    write_text(args.output.as_deref(), &pipeline::report_json(&report))
}

fn cmd_pipeline(cli: &Cli, args: &PipelineArgs) -> Result<()> {
    let cfg = load_config(cli)?;
    let options = RunOptions {
        keep_intermediates: cli.keep_intermediates.clone(),
        enhancer: args.enhancer.clone(),
    };
    let run = pipeline::run_pipeline(&cfg, &options)?;
    write_text(args.output.as_deref(), &pipeline::report_json(&run.report))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Cmd::Render(a) => cmd_render(cli, a),
        Cmd::Corrupt(a) => cmd_corrupt(cli, a),
        Cmd::Subsample(a) => cmd_subsample(cli, a),
        Cmd::Filter(a) => cmd_filter(cli, a),
        Cmd::Reconstruct(a) => cmd_reconstruct(cli, a),
        Cmd::Oracle(a) => cmd_oracle(cli, a),
        Cmd::Project(a) => cmd_project(cli, a),
        Cmd::Evaluate(a) => cmd_evaluate(cli, a),
        Cmd::Pipeline(a) => cmd_pipeline(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { ExitStatus::Validation } else { ExitStatus::Ok };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_status() as u8)
        }
    }
}
