use thiserror::Error;

/// Errors raised while building lattices or running the analysis.
///
/// Variants split into two families: input validation problems (bad lattice
/// descriptions, invalid kernels, malformed configurations) and numerical
/// failures (solver residuals, non-convergence, overflow). The CLI maps the
/// first family to exit code 2 and the second to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("lattice description: {0}")]
    Description(String),

    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),

    #[error("duplicate identifier `{0}`")]
    DuplicateId(String),

    #[error("dart `{dart}` has voltage of length {found}, expected rank {rank}")]
    VoltageLength {
        dart: String,
        found: usize,
        rank: usize,
    },

    #[error("quotient graph is disconnected: vertex `{0}` is unreachable from the first vertex")]
    Disconnected(String),

    #[error("cycle voltages do not generate Z^{rank} (index {index})")]
    NotSurjective { rank: usize, index: String },

    #[error("dart `{dart}` has non-positive probability {value}")]
    NonPositive { dart: String, value: f64 },

    #[error("outgoing probabilities at vertex `{vertex}` sum to {sum}")]
    RowSum { vertex: String, sum: f64 },

    #[error("cannot parse probability `{0}`")]
    BadProbability(String),

    #[error("unknown builtin lattice `{0}`")]
    UnknownBuiltin(String),

    #[error("dart `{dart}` does not leave vertex `{vertex}`")]
    DartNotOutgoing { dart: String, vertex: String },

    #[error("path is broken between positions {0} and {1}")]
    BrokenPath(usize, usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("quotient graph is not a bouquet ({0} vertices)")]
    NotBouquet(usize),

    #[error("linear solve for {what} failed (residual {residual:e})")]
    Solve { what: &'static str, residual: f64 },

    #[error("Gram matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("exponent {0} exceeds the overflow guard")]
    Overflow(f64),

    #[error("Newton minimization at vertex `{vertex}` did not converge (gradient norm {gradient_norm:e})")]
    NoConvergence { vertex: String, gradient_norm: f64 },

    #[error("free energy at vertex `{vertex}` has no minimizer: zero is not interior to the convex hull of its increments")]
    Unbounded { vertex: String },

    #[error("transition table exceeds the support budget of {0} entries")]
    SupportBudget(usize),
}

impl Error {
    /// True for solver and convergence failures, false for bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Solve { .. }
                | Error::NotPositiveDefinite
                | Error::Overflow(_)
                | Error::NoConvergence { .. }
                | Error::Unbounded { .. }
                | Error::SupportBudget(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
