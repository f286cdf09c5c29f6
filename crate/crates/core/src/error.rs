use thiserror::Error;

/// Errors raised by the geometry, solver, inversion and I/O layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("fault endpoint ({x}, {y}) is closer than {delta_min} to the domain boundary")]
    FaultOutsideAdmissibleRegion { x: f64, y: f64, delta_min: f64 },

    #[error("fault segment is degenerate (length {length:e})")]
    DegenerateFault { length: f64 },

    #[error("inconsistent mesh topology: {0}")]
    InconsistentTopology(String),

    #[error("mesh quality: minimum angle {min_angle_deg:.2} deg is below the floor {floor_deg:.2} deg")]
    MeshQuality { min_angle_deg: f64, floor_deg: f64 },

    #[error("vertex {0} lies on the domain boundary")]
    BoundaryVertex(usize),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("sample layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("the boundary shape derivative requires a constant elasticity tensor")]
    VariableCoefficients,

    #[error("reference norm is zero")]
    ZeroNorm,

    #[error("invalid elasticity parameters: {0}")]
    InvalidElasticity(String),

    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
}

impl Error {
    pub fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { path: path.into(), reason: reason.into() }
    }

    pub fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        Error::Io { path: path.display().to_string(), reason: err.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
