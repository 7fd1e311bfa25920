//! Data quality measurement for k-anonymized tabular datasets.
//!
//! The crate answers three questions an analyst faces when a dataset has been
//! k-anonymized before analysis:
//!
//! 1. *How much data quality survived?* — four per-column / dataset-level
//!    metrics: Pearson correlation (`RHO`), the Revised Information Loss
//!    Metric (`RILM`) for numerical and categorical columns, sampled and
//!    scaled Normalized Mutual Information (`NMIv1`), and the percent of
//!    non-suppressed records (`PCTNS`). See [`quality`] and [`info_theory`].
//! 2. *Are the metric thresholds justified?* — a simulation pipeline that
//!    treats each metric as a binary classifier over (original, anonymized)
//!    dataset pairs labeled by statistical-test agreement, then evaluates
//!    ROC/PR curves and recommends thresholds. See [`stat_tests`] and
//!    [`justification`].
//! 3. *How little data is enough?* — a sensitivity analysis over sub-sample
//!    sizes in `[n, 2n]` that finds the minimum sample size meeting all
//!    thresholds. See [`minimization`].
//!
//! A reference micro-aggregation anonymizer ([`anonymizer`]) is included so
//! the pipeline runs end to end; production systems substitute their own and
//! feed the resulting dataset pairs in.

pub mod anonymizer;
pub mod error;
pub mod gtree;
pub mod info_theory;
pub mod justification;
pub mod minimization;
pub mod quality;
pub mod tabular;

pub use error::{Error, Result};
pub use tabular::{ColumnKind, ColumnRole, ColumnSchema, DatasetPair, Table};
