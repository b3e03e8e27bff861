use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("value {value} outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unknown schedule entity {0}")]
    UnknownEntity(usize),
    #[error("non-finite loss for feature {feature} at t = {t}")]
    NonFiniteLoss { feature: String, t: f64 },
    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: u64, loss: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("metric error: {0}")]
    Metric(String),
}
