use std::fmt;

use thiserror::Error;

/// Which stage of the composed leg-wheel inverse kinematics failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IkPass {
    /// Tip distance outside the mechanism's declared extension band.
    ExtensionBand,
    /// Outer hub + wheel arc (first two-link solve).
    OuterArm,
    /// Inner hub + link member (second two-link solve).
    InnerArm,
}

impl fmt::Display for IkPass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IkPass::ExtensionBand => write!(f, "extension band"),
            IkPass::OuterArm => write!(f, "outer arm pass"),
            IkPass::InnerArm => write!(f, "inner arm pass"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("target out of workspace ({pass}): reach deficit {deficit:.3e} m")]
    OutOfWorkspace { pass: IkPass, deficit: f64 },

    #[error("phase offset profile unreachable at x = {x:.6} m ({source})")]
    ProfileUnreachable { x: f64, source: Box<Error> },

    #[error("singular configuration: {0}")]
    Singular(String),

    #[error("oscillator phase undefined at the origin of the state plane")]
    UndefinedPhase,

    #[error("numerical divergence at step {step}")]
    Divergence { step: usize },

    #[error("unsupported feature: {0}")]
    Unsupported(String),

    #[error("invalid scenario: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("metrics undefined: {0}")]
    UndefinedMetrics(String),

    #[error("at t = {t:.3} s: {source}")]
    AtTime { t: f64, source: Box<Error> },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Strips time-stamp wrapping to expose the underlying failure.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtTime { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_divergence(&self) -> bool {
        matches!(self.root(), Error::Divergence { .. })
    }

    pub fn is_validation(&self) -> bool {
        matches!(
            self.root(),
            Error::Validation(_) | Error::Unsupported(_) | Error::Domain(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
