use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter out of domain: {0}")]
    Parameter(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("phase domain error: {0}")]
    PhaseDomain(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("saturation: {electrode} concentration {value} outside (0, {max})")]
    Saturation {
        electrode: &'static str,
        value: f64,
        max: f64,
    },
    #[error("phase transition broke mass balance: relative error {rel:.3e} > {tol:.1e}")]
    Transition { rel: f64, tol: f64 },
    #[error("numerical blowup after t = {last_good_time} s: {detail}")]
    Blowup { last_good_time: f64, detail: String },
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("file not found: {0}")]
    MissingFile(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

impl From<std::io::Error> for ModelError {
    fn from(e: std::io::Error) -> Self {
        ModelError::Io(e.to_string())
    }
}

impl From<csv::Error> for ModelError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            ModelError::Io(e.to_string())
        } else {
            ModelError::Config(e.to_string())
        }
    }
}

impl ModelError {
    /// Stable machine-readable class name.
    pub fn kind(&self) -> &'static str {
        match self {
            ModelError::Usage(_) => "usage",
            ModelError::MissingFile(_) => "missing_file",
            ModelError::Config(_) | ModelError::Parameter(_) => "invalid_config",
            ModelError::PhaseDomain(_)
            | ModelError::Domain(_)
            | ModelError::Saturation { .. }
            | ModelError::Transition { .. }
            | ModelError::Blowup { .. }
            | ModelError::Numerical(_) => "simulation",
            ModelError::Io(_) => "io",
        }
    }

    /// Process exit status for the error class.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "usage" => 2,
            "missing_file" => 3,
            "invalid_config" => 4,
            "simulation" => 5,
            _ => 6,
        }
    }
}

impl From<serde_json::Error> for ModelError {
    fn from(e: serde_json::Error) -> Self {
        ModelError::Config(e.to_string())
    }
}
