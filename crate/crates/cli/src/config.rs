//! Pipeline configuration, read from TOML or JSON.
//!
//! Every table is optional. A minimal file is empty; a typical one:
//!
//! ```toml
//! seed = 3
//!
//! [scene]
//! source = "shape"
//! shape = "glyph"
//!
//! [acquisition]
//! nx = 32
//! ny = 32
//!
//! [pattern]
//! kind = "stride"
//! stride = 2
//!
//! [noise]
//! exposure = 0.5
//!
//! [reconstruction]
//! nz = 32
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use nlos_core::noise::NoiseParams;
use nlos_core::render::RenderOptions;
use nlos_core::rsd::KernelAmplitude;
use nlos_core::sampling::ScanPattern;
use nlos_core::scene::{AugmentParams, BaseShape};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub scene: SceneConfig,
    pub acquisition: AcquisitionConfig,
    pub pattern: ScanPattern,
    /// Absent means a clean (noise-free) measurement.
    pub noise: Option<NoiseParams>,
    pub completion: Completion,
    pub packet: PacketConfig,
    pub reconstruction: ReconstructionConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scene: SceneConfig::default(),
            acquisition: AcquisitionConfig::default(),
            pattern: ScanPattern::Identity,
            noise: None,
            completion: Completion::Nearest,
            packet: PacketConfig::default(),
            reconstruction: ReconstructionConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneConfig {
    Point {
        position: [f64; 3],
        #[serde(default = "unit_albedo")]
        albedo: f64,
    },
    /// A procedural shape with random augmentation drawn from the seed.
    Shape {
        shape: BaseShape,
        #[serde(default)]
        augment: AugmentParams,
    },
    /// A scene text file (`x y z albedo [nx ny nz]` per line).
    File { path: PathBuf },
}

fn unit_albedo() -> f64 {
    1.0
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig::Point {
            position: [0.0, 0.0, 1.0],
            albedo: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionConfig {
    pub width_m: f64,
    pub height_m: f64,
    pub nx: usize,
    pub ny: usize,
    pub confocal: bool,
    pub laser_point_m: Option<[f64; 3]>,
    pub bins: usize,
    pub bin_resolution_ps: f64,
    pub render: RenderOptions,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            width_m: 2.0,
            height_m: 2.0,
            nx: 64,
            ny: 64,
            confocal: true,
            laser_point_m: None,
            bins: 512,
            bin_resolution_ps: 32.0,
            render: RenderOptions {
                gain: 1e4,
                ..RenderOptions::default()
            },
        }
    }
}

/// How a partial scan is brought back onto the full grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Completion {
    Nearest,
    Trilinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PacketConfig {
    /// Target wavelength as a multiple of the full grid's sampling distance.
    pub wavelength_coeff: f64,
    /// Explicit wavelength; overrides `wavelength_coeff`.
    pub lambda_m: Option<f64>,
    /// Pulse width in carrier cycles; defaults to the reference calibration.
    pub n_cycles: Option<f64>,
    pub gamma: f64,
    /// Flat band `[lo, hi]` of DFT indices instead of a Gaussian packet.
    pub flat_band: Option<[usize; 2]>,
}

impl Default for PacketConfig {
    fn default() -> Self {
        Self {
            wavelength_coeff: nlos_core::phasor::TARGET_WAVELENGTH_COEFF,
            lambda_m: None,
            n_cycles: None,
            gamma: nlos_core::phasor::DEFAULT_GAMMA,
            flat_band: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionConfig {
    pub z_near_m: f64,
    pub z_far_m: f64,
    /// Depth planes; defaults to the full grid's `nx`.
    pub nz: Option<usize>,
    pub pad_factor: usize,
    /// Defaults to on for confocal scans.
    pub doubling: Option<bool>,
    pub kernel_amplitude: KernelAmplitude,
    /// Keep only this many bins around the brightest window before
    /// reconstructing.
    pub temporal_window: Option<usize>,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            z_near_m: 0.0,
            z_far_m: 2.0,
            nz: None,
            pad_factor: 2,
            doubling: None,
            kernel_amplitude: KernelAmplitude::InvR,
            temporal_window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub depth_threshold: f64,
    pub mask_kernel: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            depth_threshold: nlos_core::metrics::DEFAULT_DEPTH_THRESHOLD,
            mask_kernel: nlos_core::metrics::DEFAULT_MASK_KERNEL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigFormat {
    Toml,
    Json,
}

impl PipelineConfig {
    pub fn parse(text: &str, format: ConfigFormat) -> Result<Self> {
        match format {
            ConfigFormat::Toml => toml::from_str(text).map_err(|e| CliError::Config(e.to_string())),
            ConfigFormat::Json => {
                serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
            }
        }
    }

    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => ConfigFormat::Json,
            _ => ConfigFormat::Toml,
        };
        Self::parse(&text, format)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }
}
