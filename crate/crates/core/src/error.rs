use thiserror::Error;

/// Errors raised by the geometry, quadrature and intertwining pipelines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    /// The two skew matrices have different singular spectra, so no
    /// orthogonal conjugator exists.
    #[error("spectra differ by {deviation:e} (tolerance {tol:e}); no orthogonal conjugator exists")]
    SpectraMismatch { deviation: f64, tol: f64 },

    /// A polar radius is too close to an axis for the orthonormal polar frame.
    #[error("degenerate point: r = {r:e} is below r_min = {r_min:e}")]
    DegeneratePoint { r: f64, r_min: f64 },

    #[error("ill-conditioned metric: {0}")]
    IllConditioned(String),

    #[error("curvature sign convention mismatch: {0}")]
    ConventionMismatch(String),

    #[error("every sample of the probed family vanished")]
    AllZeroSamples,

    #[error("integrand depends on the torus angles (relative deviation {deviation:e})")]
    ThetaDependenceDetected { deviation: f64 },

    #[error("{degenerate} of {total} quadrature nodes sit on a polar axis")]
    DegenerateNodes { degenerate: usize, total: usize },

    #[error("scaling fit is ill-conditioned: {0}")]
    FitIllConditioned(String),

    #[error("invalid cutoff profile: {0}")]
    InvalidProfile(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
