use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("atlas configuration: {0}")]
    AtlasConfig(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("synthetic dataset specification: {0}")]
    SynthSpec(String),
    #[error("transport solve failed on edge ({u},{v}): {reason}")]
    TransportSolve { u: usize, v: usize, reason: String },
    #[error("graph structure: {0}")]
    GraphStructure(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("certificate input: {0}")]
    CertificateInput(String),
    #[error("internal invariant violated: {0}")]
    InternalInvariant(String),
}

pub type Result<T> = core::result::Result<T, Error>;
