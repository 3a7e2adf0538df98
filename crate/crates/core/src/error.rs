use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("spectrum did not converge at basis size {basis_size} (last delta {last_delta:e} GHz)")]
    NotConverged { basis_size: usize, last_delta: f64 },

    #[error("charge cutoff {cutoff} too small: edge population {edge_population:e}")]
    CutoffTooSmall { cutoff: usize, edge_population: f64 },

    #[error("flux {flux} outside the transmon domain (effective E_J <= 0)")]
    FluxDomain { flux: f64 },

    #[error("finite-difference step underflow: |difference| = {difference:e}")]
    Precision { difference: f64 },

    #[error("operator dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("ambiguous state labels: {labels:?}")]
    AmbiguousLabels { labels: Vec<[usize; 3]> },

    #[error("label {label:?} is not in the truncated basis")]
    MissingLabel { label: [usize; 3] },

    #[error("idle-point search failed: every grid point is ambiguous")]
    SearchFailed,

    #[error("integration failure: norm drift {drift:e} exceeds {limit:e}")]
    Integration { drift: f64, limit: f64 },

    /// `gaps` holds the scanned `(ω_p, gap)` curve.
    #[error("no avoided crossing found in window [{lo}, {hi}] GHz")]
    NoCrossing { lo: f64, hi: f64, gaps: Vec<(f64, f64)> },

    /// `trace` holds every evaluated `[ω_p, δ_Φ, Φ_interaction, objective]`.
    #[error("optimizer stagnated: best objective {objective:e} after {evaluations} evaluations")]
    Stagnation { objective: f64, evaluations: usize, trace: Vec<[f64; 4]> },
}

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { field, reason: reason.into() }
}
