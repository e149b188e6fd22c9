//! Semi-supervised bug triage.
//!
//! A multinomial naive Bayes classifier recommends developers for bug
//! reports. Expectation-maximization folds unlabeled reports into training
//! with a weight factor, optionally spreading each pseudo-label over a
//! rank-weighted top-n recommendation list.

pub mod classifier;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
mod numfmt;
pub mod preprocess;
pub mod semisupervised;
pub mod synthetic;

pub use classifier::{train_nb, NBModel, Posterior};
pub use error::{Error, Result};
pub use preprocess::{ProcessedDataset, TokenizedReport, Vocabulary};
pub use semisupervised::{gamma, train_semisupervised, EMConfig};
