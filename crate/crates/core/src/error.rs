use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid truncation {0}: at least 2 modes are required")]
    InvalidTruncation(usize),

    #[error("basis construction failed: {0}")]
    BasisConstruction(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("eigensolver did not converge after {iterations} QR sweeps ({unconverged} eigenvalues left)")]
    Solver { iterations: usize, unconverged: usize },

    #[error("spectrum at g = {g} has near-defective modes {modes:?}; use the jordan module")]
    DefectiveSpectrum { g: Complex64, modes: Vec<usize> },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("sheet matching still ambiguous at g = {g} after {depth} bisections")]
    TrackingAmbiguity { g: Complex64, depth: usize },

    #[error("refinement lost the branch point near g = {g}: no child contour shows monodromy")]
    RefinementInconsistency { g: Complex64 },

    #[error("not a simple branch point at g = {g}: singular values {sigma:?}")]
    NotSimpleBranchPoint { g: Complex64, sigma: [f64; 2] },

    #[error("2x2 matrix is defective (d = 0); use jordan2")]
    Defective2x2,

    #[error("unknown {kind} '{name}' (known: {known})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
