//! Fairness-aware tabular binary classification toolkit.
//!
//! Trains logistic-regression and small feed-forward networks on tabular
//! data, audits equality-of-opportunity violations across a protected
//! group (FNR/FPR/F1 gaps, weighted accuracy), and mitigates them with an
//! absolute-correlation regularization term added to the training loss.
//! Includes a synthetic data generator with a controllable protected/
//! predictor correlation and a trials-by-folds experiment harness for
//! parameter sweeps.

pub mod cli;
pub mod error;
pub mod fairness;
pub mod harness;
pub mod mitigation;
pub mod models;
pub mod rng;
pub mod synthgen;
pub mod tabular;

pub use error::{Error, Result};
