use thiserror::Error;

/// Errors raised by geometry, kinematics, the nonlinear solver and the CLI layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter {u} outside knot range [{lo}, {hi}]")]
    Domain { u: f64, lo: f64, hi: f64 },

    #[error("invalid knot vector: {0}")]
    Knots(String),

    #[error("invalid curve: {0}")]
    Curve(String),

    #[error("singular geometry: {0}")]
    SingularGeometry(String),

    #[error("curve fit failed: {0}")]
    Fit(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("prescribed rotation is ambiguous (relative angle {angle} rad is too close to pi)")]
    BranchAmbiguity { angle: f64 },

    #[error("Newton iteration did not converge at step {step} (t = {time}); residual trail {residuals:?}")]
    Nonconvergence {
        step: usize,
        time: f64,
        residuals: Vec<f64>,
    },

    #[error("linear solve failed: {0}")]
    Solve(String),

    #[error("invalid scene: {0}")]
    Scene(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
