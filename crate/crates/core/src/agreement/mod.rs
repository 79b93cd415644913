//! Inter-rater agreement and classification metrics.
//!
//! Agreement is measured with Krippendorff's alpha over a [`ReliabilityMatrix`]
//! (units × raters, missing cells allowed). Three distance metrics are
//! supported: nominal, ordinal and interval. Rubric scores default to ordinal.
//!
//! ```
//! use judgekit_core::agreement::{krippendorff_alpha, Metric, ReliabilityMatrix};
//!
//! let m = ReliabilityMatrix::from_rows(
//!     vec!["u1".into(), "u2".into()],
//!     vec!["a".into(), "b".into()],
//!     &[vec![Some(1), Some(1)], vec![Some(2), Some(2)]],
//!     vec![-2, -1, 0, 1, 2],
//! )
//! .unwrap();
//! assert_eq!(krippendorff_alpha(&m, Metric::Ordinal).unwrap().alpha, 1.0);
//! ```

mod alpha;
mod classification;
mod matrix;

pub use alpha::{
    coincidence_matrix, krippendorff_alpha, AgreementResult, CoincidenceMatrix, Metric,
};
pub use classification::{classification_metrics, ClassificationMetrics, Prediction};
pub use matrix::{build_reliability_matrix, CriterionPooling, ReliabilityMatrix};
