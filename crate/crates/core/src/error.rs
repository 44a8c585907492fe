use crate::label::Label;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("every component weight is zero")]
    AllZeroWeights,
    #[error("label universe of size {size} exceeds the enumeration limit {limit}")]
    UniverseTooLarge { size: usize, limit: usize },
    #[error("approximating density assigns zero mass where the reference has mass")]
    SupportMismatch,
    #[error("innovation covariance is not invertible")]
    SingularInnovation,
    #[error("problem too large for exhaustive enumeration: {labels} labels, {measurements} measurements")]
    ProblemTooLarge { labels: usize, measurements: usize },
    #[error("label {0} present in both operands of a product")]
    LabelCollision(Label),
    #[error("partition does not cover the same labels as the factored density")]
    PartitionMismatch,
    #[error("update of group {group} at scan {scan} failed: {source}")]
    GroupUpdate {
        group: usize,
        scan: u32,
        #[source]
        source: Box<Error>,
    },
    #[error("scan {got} received but scan {expected} was expected")]
    ScanOrder { expected: u32, got: u32 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed input at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
