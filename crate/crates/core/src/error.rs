use num_complex::Complex64;
use thiserror::Error;

/// Coarse grouping used by the command line for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Domain,
    Tolerance,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("eigenvalue iteration did not converge")]
    NonConvergence,
    #[error("matrix is near defective (eigenvector condition {0:.3e})")]
    NearDefective(f64),
    #[error("leading minor {0} vanishes; unpivoted LU does not exist")]
    SingularMinor(usize),
    #[error("direction {d} is anti-Stokes for the pair ({i}, {j})")]
    AntiStokesDirection { d: f64, i: usize, j: usize },
    #[error("gamma pole at {0}")]
    PoleAt(Complex64),
    #[error("uncancelled gamma pole at {0}")]
    UncancelledPole(Complex64),
    #[error("resonant ladder at level {level}: difference {diff}")]
    ResonantLadder { level: usize, diff: Complex64 },
    #[error("LDU diagonal differs from exp(2 pi i deltaA) by {0:.3e}")]
    DiagonalMismatch(f64),
    #[error("repeated eigenvalue (gap {0:.3e})")]
    RepeatedEigenvalue(f64),
    #[error("eigenvalue of level n-1 collides with level n")]
    LadderCollision,
    #[error("zero radicand in connection factor {k}, entry ({i}, {j})")]
    ZeroRadicand { k: usize, i: usize, j: usize },
    #[error("alpha + beta vanishes")]
    DegenerateAlphaBeta,
    #[error("step size underflow at parameter {0}")]
    StepUnderflow(f64),
    #[error("non-finite state during integration")]
    NonFiniteState,
    #[error("anchor unstable: doubling the radius moved the result by {0:.3e}")]
    AnchorUnstable(f64),
    #[error("Stokes matrix violates triangularity by {0:.3e}")]
    TriangularityViolated(f64),
    #[error("resonant residue: eigenvalues differ by integer {0}")]
    ResonantResidue(Complex64),
    #[error("eigenvalue spread {0:.6} is not below 1")]
    SpreadTooLarge(f64),
    #[error("Picard iteration diverged (ratio {0:.3})")]
    DivergentIteration(f64),
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("rank {0} not supported here")]
    UnsupportedRank(usize),
    #[error("trace target inconsistent with eigenvalue product (residual {0:.3e})")]
    InconsistentTrace(f64),
    #[error("monodromy data not strictly log-confined")]
    NotLogConfined,
    #[error("Newton iteration stalled at residual {0:.3e}")]
    NewtonStall(f64),
    #[error("(U, V, d) outside the required chamber: {0}")]
    ChamberMismatch(String),
    #[error("tabulated Stokes file missing: {0}")]
    TabulatedFileMissing(String),
    #[error("invalid input: {0}")]
    Input(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            Input(_) | TabulatedFileMissing(_) => ErrorClass::Input,
            NonConvergence
            | StepUnderflow(_)
            | NonFiniteState
            | AnchorUnstable(_)
            | TriangularityViolated(_)
            | DiagonalMismatch(_)
            | NewtonStall(_)
            | QuadratureFailure(_) => ErrorClass::Tolerance,
            _ => ErrorClass::Domain,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
