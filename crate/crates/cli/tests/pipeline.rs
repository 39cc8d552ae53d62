use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};

use nlos_cli::config::{ConfigFormat, PipelineConfig, SceneConfig};
use nlos_cli::error::ExitStatus;
use nlos_cli::nlt;
use nlos_cli::pipeline::{report_json, run_pipeline, RunOptions};
use nlos_cli::CliError;
use nlos_core::metrics::PSNR_CAP_DB;
use nlos_core::sampling::ScanPattern;
use nlos_core::ReconVolume;

fn small(pattern: ScanPattern) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        scene: SceneConfig::Point { position: [0.1, 0.0, 1.0], albedo: 1.0 },
        pattern,
        ..PipelineConfig::default()
    };
    cfg.acquisition.nx = 32;
    cfg.acquisition.ny = 32;
    cfg.reconstruction.nz = Some(32);
    cfg
}

fn voxel_error(rec: &ReconVolume, truth: [f64; 3]) -> f64 {
    let (k, i, j) = rec.argmax();
    let g = rec.grid();
    let dx = (g.x_m(j) - truth[0]) / g.delta_p_m();
    let dy = (g.y_m(i) - truth[1]) / g.delta_p_m();
    let dz = (rec.depth().depths_m[k] - truth[2]) / rec.voxel_pitch_m()[0];
    dx.abs().max(dy.abs()).max(dz.abs())
}

#[test]
fn identity_without_noise_hits_the_psnr_cap() {
    let run = run_pipeline(&small(ScanPattern::Identity), &RunOptions::default()).unwrap();
    assert_eq!(run.report.psnr_db, PSNR_CAP_DB);
    assert_eq!(run.report.ssim, 1.0);
    assert_eq!(run.report.rmse_depth, 0.0);
    assert!(run.noise.is_none());
}

#[test]
fn conf16_point_target_localizes() {
    let run = run_pipeline(&small(ScanPattern::Stride { stride: 2 }), &RunOptions::default()).unwrap();
    assert!(voxel_error(&run.reconstruction, [0.1, 0.0, 1.0]) <= 1.0);
    assert!(run.report.psnr_db < PSNR_CAP_DB);
}

#[test]
fn same_seed_gives_identical_reports() {
    let text = r#"
        seed = 5
        [scene]
        source = "shape"
        shape = "sphere_shell"
        [acquisition]
        nx = 16
        ny = 16
        [pattern]
        kind = "stride"
        stride = 2
        [noise]
        [reconstruction]
        nz = 16
    "#;
    let cfg = PipelineConfig::parse(text, ConfigFormat::Toml).unwrap();
    let a = run_pipeline(&cfg, &RunOptions::default()).unwrap();
    let b = run_pipeline(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(report_json(&a.report), report_json(&b.report));
    assert_eq!(a.noise, b.noise);

    let mut other = cfg.clone();
    other.seed = 6;
    let c = run_pipeline(&other, &RunOptions::default()).unwrap();
    assert_ne!(report_json(&a.report), report_json(&c.report));
}

#[test]
fn intermediates_are_written_and_readable() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(ScanPattern::Identity);
    cfg.reconstruction.temporal_window = Some(256);
    let opts = RunOptions { keep_intermediates: Some(dir.path().to_path_buf()), enhancer: None };
    let run = run_pipeline(&cfg, &opts).unwrap();
    for name in [
        "scene.txt",
        "clean.nlt",
        "subsampled.nlt",
        "measured.nlt",
        "completed.nlt",
        "field.nlt",
        "volume.nlt",
        "ground_truth.nlt",
        "report.json",
    ] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let (_, header) = nlt::read_nlt(&dir.path().join("field.nlt")).unwrap();
    assert!(header.t0_offset_bins.unwrap() > 0);
    let vol = nlt::read_volume(&dir.path().join("volume.nlt")).unwrap();
    assert_eq!(vol.argmax(), run.reconstruction.argmax());
    assert!(voxel_error(&run.reconstruction, [0.1, 0.0, 1.0]) <= 1.0);
}

#[test]
fn stage_errors_name_the_stage() {
    let cfg = small(ScanPattern::Crop { extent_m: [3.0, 3.0] });
    let err = run_pipeline(&cfg, &RunOptions::default()).unwrap_err();
    assert!(err.to_string().contains("subsample"), "{err}");
    assert_eq!(err.exit_status(), ExitStatus::Validation);
}

fn script(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("enhance.sh");
    std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
    path
}

fn filter_script(dir: &Path) -> PathBuf {
    script(dir, &format!("exec {} filter \"$1\" -o \"$2\"", env!("CARGO_BIN_EXE_nlos")))
}

#[test]
fn external_enhancer_slots_into_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        keep_intermediates: None,
        enhancer: Some(filter_script(dir.path()).display().to_string()),
    };
    let run = run_pipeline(&small(ScanPattern::Identity), &opts).unwrap();
    assert_eq!(run.report.psnr_db, PSNR_CAP_DB);
}

#[test]
fn enhancer_on_the_wrong_grid_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        keep_intermediates: None,
        enhancer: Some(filter_script(dir.path()).display().to_string()),
    };
    let err = run_pipeline(&small(ScanPattern::Stride { stride: 2 }), &opts).unwrap_err();
    assert!(err.to_string().contains("enhance"), "{err}");
}

#[test]
fn failing_enhancer_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        keep_intermediates: None,
        enhancer: Some(script(dir.path(), "exit 7").display().to_string()),
    };
    let err = run_pipeline(&small(ScanPattern::Identity), &opts).unwrap_err();
    match &err {
        CliError::Stage { stage, source } => {
            assert_eq!(*stage, "enhance");
            assert!(matches!(**source, CliError::Enhancer(_)));
        }
        other => panic!("unexpected error {other}"),
    }
    assert_eq!(err.exit_status(), ExitStatus::Failure);
}
