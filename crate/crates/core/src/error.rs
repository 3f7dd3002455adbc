use thiserror::Error;

/// How an ODE integration stopped short of its end point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrationFailure {
    StepUnderflow,
    MaxSteps,
    NonFinite,
    BlowUp,
}

impl std::fmt::Display for IntegrationFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            IntegrationFailure::StepUnderflow => "step-size underflow",
            IntegrationFailure::MaxSteps => "max steps exceeded",
            IntegrationFailure::NonFinite => "non-finite state",
            IntegrationFailure::BlowUp => "trajectory blow-up",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration failed ({kind}) at r = {r:e} after {steps} steps")]
    Integration {
        kind: IntegrationFailure,
        r: f64,
        steps: usize,
    },

    #[error("fit quality: rms residual {rms:e} exceeds 5% of amplitude {amplitude:e}")]
    FitQuality { rms: f64, amplitude: f64 },

    #[error("degenerate signal: amplitude {0:e} below 1e-12")]
    DegenerateSignal(f64),

    #[error("divergent tail: fitted decay exponent {0:.3} is too slow")]
    DivergentTail(f64),

    #[error("precision: {0}")]
    Precision(String),

    #[error("iteration did not converge: {0}")]
    Convergence(String),

    #[error("series did not converge within {0} terms")]
    SeriesNonConvergence(usize),

    #[error("pole of the gamma function at {0}")]
    Pole(String),

    #[error("matching failed at a = {a:e}: {reason}")]
    Matching { a: f64, reason: String },

    #[error("no sign change in scan; predictor expects brackets near log(lambda) = {expected:?}")]
    ScanRange { expected: Vec<f64> },

    #[error("bracket lost its sign change during refinement at lambda = {0:e}")]
    Refinement(f64),

    #[error("assembly rejected: C1 gap {0:e} above 1e-8")]
    Assembly(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
