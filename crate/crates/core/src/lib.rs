//! Activation analytics for comparing a network's in-distribution and
//! out-of-distribution behaviour, neuron by neuron.
//!
//! * [`bundle`]: the `.dphb` on-disk format.
//! * [`synth`]: analytic colour-shift fixture bundles.
//! * [`session`]: normalization and the neuron, image and category views.
//! * [`metrics`]: category profiles, novelty and spurious scores.
//! * [`report`]: the self-describing JSON report.

pub mod bundle;
pub mod error;
pub mod json;
pub mod metrics;
pub mod report;
pub mod select;
pub mod session;
pub mod stats;
pub mod synth;

pub use bundle::{
    encode_bundle, load_bundle, parse_bundle, read_bundle, save_bundle, write_bundle, BundleError,
    BundleHeader, DatasetBundle, LayerSpec, Matrix,
};
pub use error::AnalysisError;
pub use metrics::{
    category_profile, novelty_scores, shift_report, spurious_scores, ExcludedNeuron,
    ExclusionReason, NeuronCategoryProfile, NeuronScore, ShiftReport,
};
pub use report::ReportDocument;
pub use session::{AnalysisSession, ConfusionSet, DatasetId, ImageView, NeuronView, DEFAULT_TOP_K};
pub use stats::{density_curve, spearman_rho, DensityPoint};
pub use synth::{
    generate_synthetic_bundle, random_bundle, RandomBundleShape, ShiftKind, SyntheticShiftSpec,
};
