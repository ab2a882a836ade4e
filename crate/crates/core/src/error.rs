use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("size mismatch: expected {expected}, got {got}")]
    Size { expected: usize, got: usize },

    #[error("not enough input bits: need {needed}, got {got}")]
    InsufficientBits { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported modulation order {0}")]
    UnsupportedModulation(u32),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate channel: all combining gains are zero")]
    DegenerateChannel,
}
