use thiserror::Error;

/// Errors raised by the simulation and reconstruction routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NlosError {
    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("missing parameter: {0}")]
    MissingParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error(
        "time axis truncation: path of {path_bins:.2} bins at scan pixel ({pixel_y}, {pixel_x}) \
         does not fit in {bins} bins"
    )]
    Truncation {
        path_bins: f64,
        pixel_y: usize,
        pixel_x: usize,
        bins: usize,
    },

    #[error("budget exceeded: {work} multiply-adds requested, budget is {budget} ({detail})")]
    Budget {
        work: u128,
        budget: u128,
        detail: String,
    },
}

pub type Result<T> = std::result::Result<T, NlosError>;
