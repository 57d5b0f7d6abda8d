use std::fmt;

use thiserror::Error;

/// One Chern number of a Bloch bundle, labelled by the plane of the
/// Brillouin torus it was measured on (`"k1k2"`, `"k1k3"`, `"k2k3"`).
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct ChernNumber {
    pub plane: &'static str,
    pub value: i64,
}

impl fmt::Display for ChernNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.plane, self.value)
    }
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (asymmetry {asymmetry:.3e})")]
    NonHermitian { asymmetry: f64 },

    #[error("matrix is not unitary (deviation {deviation:.3e})")]
    NonUnitary { deviation: f64 },

    #[error("matrix is not anti-Hermitian (deviation {deviation:.3e})")]
    NonAntiHermitian { deviation: f64 },

    #[error("eigensolver did not converge")]
    NoConvergence,

    #[error("non-finite matrix entry")]
    NonFinite,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("rank deficient overlap: smallest singular value {sigma_min:.3e} (grid too coarse?)")]
    RankDeficient { sigma_min: f64 },

    #[error("eigenphase {phase:.6} lies on the logarithm branch cut")]
    BranchCut { phase: f64 },

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("spectral gap closed at k = {k:?} (gap {gap:.3e})")]
    GapClosed { k: Vec<f64>, gap: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("phase step {step:.4} is too close to pi (grid too coarse)")]
    AliasedPhase { step: f64 },

    #[error("winding number is not an integer (residual {residual:.3e})")]
    NonIntegerResidual { residual: f64 },

    #[error("eigenvalue tracking is ambiguous at k index {index}")]
    EigenvalueCollision { index: usize },

    #[error("eigenvalues wind individually ({}): no continuous logarithm", join(.0))]
    EigenvalueWinding(Vec<i64>),

    #[error("nonzero winding of the determinant ({}): loop cannot be contracted", join(.0))]
    WindingObstruction(Vec<i64>),

    #[error("no reference vector with margin above the floor (best margin {margin:.3e})")]
    NoSafeVector { margin: f64 },

    #[error("phase unwrapping over the surface is inconsistent (surface under-resolved)")]
    PhaseUnwrapInconsistent,

    #[error("nonzero Chern number ({}): no continuous periodic frame exists", join(.0))]
    ChernObstruction(Vec<ChernNumber>),

    #[error("method {0} is not available here")]
    UnsupportedMethod(String),

    #[error("b-vector shells are incomplete (residual {residual:.3e})")]
    IncompleteShells { residual: f64 },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("expected {expected} blocks, found {found}")]
    CountMismatch { expected: usize, found: usize },

    #[error("overlap data has no neighbor along axis {axis}")]
    MissingNeighbor { axis: usize },

    #[error("overlap data has no neighbor at offset {offset:?}")]
    MissingOffset { offset: Vec<i32> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable variant name, used in machine-readable run summaries.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonHermitian { .. } => "NonHermitian",
            Error::NonUnitary { .. } => "NonUnitary",
            Error::NonAntiHermitian { .. } => "NonAntiHermitian",
            Error::NoConvergence => "NoConvergence",
            Error::NonFinite => "NonFinite",
            Error::Shape(_) => "Shape",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::BranchCut { .. } => "BranchCut",
            Error::InvalidParams(_) => "InvalidParams",
            Error::GapClosed { .. } => "GapClosed",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::AliasedPhase { .. } => "AliasedPhase",
            Error::NonIntegerResidual { .. } => "NonIntegerResidual",
            Error::EigenvalueCollision { .. } => "EigenvalueCollision",
            Error::EigenvalueWinding(_) => "EigenvalueWinding",
            Error::WindingObstruction(_) => "WindingObstruction",
            Error::NoSafeVector { .. } => "NoSafeVector",
            Error::PhaseUnwrapInconsistent => "PhaseUnwrapInconsistent",
            Error::ChernObstruction(_) => "ChernObstruction",
            Error::UnsupportedMethod(_) => "UnsupportedMethod",
            Error::IncompleteShells { .. } => "IncompleteShells",
            Error::Parse { .. } => "ParseError",
            Error::CountMismatch { .. } => "CountMismatch",
            Error::MissingNeighbor { .. } => "MissingNeighbor",
            Error::MissingOffset { .. } => "MissingOffset",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
        }
    }

    /// Topological obstructions are expected physical outcomes, not failures
    /// of the numerics.
    pub fn is_obstruction(&self) -> bool {
        matches!(
            self,
            Error::ChernObstruction(_) | Error::WindingObstruction(_) | Error::EigenvalueWinding(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
