use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite value in {stage} (layer {layer})")]
    NonFinite { stage: &'static str, layer: usize },

    #[error("invalid reference: {0}")]
    InvalidReference(String),

    #[error("corrupt stream: {0}")]
    CorruptStream(String),

    #[error("weight file: {0}")]
    WeightFormat(String),

    #[error("architecture spec: {0}")]
    Spec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::ContractViolation(msg()))
    }
}
