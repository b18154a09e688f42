use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid polytope: {0}")]
    InvalidPolytope(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown builtin `{0}`")]
    UnknownBuiltin(String),

    #[error("point {point:?} is within {margin:e} of the boundary (min facet value {min_facet_value:e})")]
    BoundaryProximity {
        point: Vec<f64>,
        margin: f64,
        min_facet_value: f64,
    },

    #[error("point {0:?} lies outside the closure of the gradient range")]
    OutsideGradientRange(Vec<f64>),

    #[error("Newton solve did not converge for query {query:?}; last iterate {last:?} (gradient residual {residual:e})")]
    NewtonNonConvergence {
        query: Vec<f64>,
        last: Vec<f64>,
        residual: f64,
    },

    #[error("quadrature did not reach tolerance: estimate {estimate:e} with error {error:e}")]
    QuadratureNonConvergence { estimate: f64, error: f64 },

    #[error("non-finite boundary sample on facet {facet} at {point:?}")]
    NonFiniteBoundarySample { facet: usize, point: Vec<f64> },

    #[error("lattice point {0:?} is not in the norming table")]
    MissingLatticePoint(Vec<i64>),

    #[error("empty norming table")]
    EmptyTable,

    #[error("tables use inconsistent gauges")]
    GaugeMismatch,

    #[error("level {k} exceeds the exact-convolution cap {cap}")]
    LevelTooLarge { k: u32, cap: u32 },

    #[error("optimizer did not converge after {iterations} iterations; last iterate {last:?}")]
    OptimizerNonConvergence { iterations: usize, last: Vec<f64> },

    #[error("degenerate probability vector: {0}")]
    DegenerateProbabilities(String),

    #[error("point {0:?} is outside the domain of the rate function")]
    OutOfDomain(Vec<f64>),

    #[error("not Kähler–Einstein within tolerance (residual {residual:e} > {tolerance:e})")]
    NotKahlerEinstein { residual: f64, tolerance: f64 },

    #[error("{0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
