use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes surfaced by the library. The CLI maps these onto its exit
/// codes: `Domain` → usage (2), `Io`/`Input` → ingestion (3), `NoCertificate`/
/// `Convergence`/`SolverStall` → solver (4), `CertificationFailed` → verification (5).
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("bad input in {path}: {detail}")]
    Input { path: String, detail: String },

    #[error("no certificate: {0}")]
    NoCertificate(String),

    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("solver stalled at iteration cap (best t = {t_star:.6e} after {iterations} steps)")]
    SolverStall { t_star: f64, iterations: usize },

    #[error("certificate not verified: {0}")]
    CertificationFailed(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
