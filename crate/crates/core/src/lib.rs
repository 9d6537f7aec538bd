//! Auditing and fairness-constrained learning for naive Bayes classifiers.
//!
//! A *discrimination pattern* is a pair of partial assignments `(x, y)`, with
//! `x` over sensitive attributes, where disclosing `x` on top of `y` moves the
//! probability of the positive decision by more than a threshold `δ`. This
//! crate mines such patterns with branch and bound, ranks them, and learns
//! maximum-likelihood parameters under constraints that rule them out.
//!
//! * [`model`]: the classifier and its probabilistic queries.
//! * [`bounds`]: scores and admissible bounds for pruning.
//! * [`miner`]: exhaustive and top-k pattern search.
//! * [`spsolver`]: local solver for signomial programs.
//! * [`learner`]: the cutting-plane fair learning loop.
//! * [`data`]: CSV ingestion, counting, fitting and evaluation.

pub mod bounds;
pub mod data;
pub mod learner;
pub mod math;
pub mod miner;
pub mod model;
pub mod spsolver;
pub mod synthetic;

pub use data::{Dataset, SchemaConfig, SufficientStatistics};
pub use model::{Assignment, DecisionValue, NaiveBayesModel, Schema};
