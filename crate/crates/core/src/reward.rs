//! Immediate reward: a logistic transform of the RMSE between an action's
//! predicted values and the belief-inferred interactions, bounded in
//! (0, 0.5] with 0.5 only at zero error.

use crate::data::{PairMap, PairSet};
use crate::error::{Error, Result};
use crate::eval;

/// Reward scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig {
    /// Scaling constant applied to the RMSE before the logistic transform.
    pub scaling: f64,
}

impl RewardConfig {
    pub fn new(scaling: f64) -> Result<Self> {
        if !(scaling > 0.0) || !scaling.is_finite() {
            return Err(Error::Config(format!(
                "reward scaling must be a positive finite number, got {scaling}"
            )));
        }
        Ok(Self { scaling })
    }

    /// Default scaling for a rating scale, keeping scaling * range constant:
    /// 0.1 on a 0-100 scale, 2.5 on a 1-5 scale.
    pub fn for_scale(scale: &crate::data::RatingScale) -> Self {
        Self {
            scaling: 10.0 / scale.range(),
        }
    }
}

/// Reward of a known RMSE: `1 / (1 + exp(scaling * rmse))`.
pub fn reward_from_rmse(rmse: f64, config: &RewardConfig) -> f64 {
    1.0 / (1.0 + (config.scaling * rmse).exp())
}

/// Reward of an action over the masked pairs. `action_values` holds the
/// predicted ratings a(i, j); `belief_values` the belief-inferred
/// interactions serving as ground truth.
pub fn reward(
    action_values: &PairMap,
    belief_values: &PairMap,
    mask: &PairSet,
    config: &RewardConfig,
) -> Result<f64> {
    let rmse = eval::rmse(action_values, belief_values, mask)?;
    Ok(reward_from_rmse(rmse, config))
}
