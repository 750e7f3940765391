use crate::session::DatasetId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("incompatible bundles: {0}")]
    Incompatible(String),
    #[error("neuron {0} is dead (never positive on the in-distribution set)")]
    DeadNeuron(usize),
    #[error("{what} {index} out of range (size {len})")]
    OutOfBounds {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("unknown dataset {0}")]
    UnknownDataset(String),
    #[error("image selection is empty")]
    EmptySelection,
    #[error("category {category:?} has no images in dataset {dataset}")]
    EmptyCategory { dataset: DatasetId, category: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("correlation undefined for a constant vector")]
    UndefinedCorrelation,
    #[error("insufficient data: need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },
}
