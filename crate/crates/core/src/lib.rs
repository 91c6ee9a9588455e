//! Belief-state recommender training.
//!
//! The pipeline ingests timestamped rating logs, partitions them into time
//! windows, learns latent-factor belief states per window, estimates a
//! logistic belief-transition model, and solves for a value function over
//! belief transitions with a neural fitted-Q loop. The learned value
//! function scores perturbed matrix-factorization candidates so the best
//! one can be adopted for future predictions. A synthetic-world simulator
//! reproduces the deterioration that recurrent retraining on positive-only
//! feedback causes, for comparing retraining strategies.

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod fitted_q;
pub mod pipeline;
pub mod pmf;
pub mod policy;
pub mod reward;
pub mod sim;
pub mod transition;

pub use error::{Error, Result};
