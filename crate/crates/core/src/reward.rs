//! Verifiable task reward: Gaussian decay over ordinal score error, with a
//! hard zero on any format violation.

use serde::{Deserialize, Serialize};

use crate::parse::ParseOutcome;
use crate::schema::Score;

/// Reward shape parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    /// Width of the Gaussian over score error.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
}

fn default_sigma() -> f64 {
    1.2
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec { sigma: default_sigma() }
    }
}

/// `exp(-(p-y)^2 / (2 sigma^2))`: 1 exactly on a correct prediction,
/// decaying smoothly with squared error.
pub fn gaussian_reward(p: Score, y: Score, spec: &RewardSpec) -> f64 {
    debug_assert!(spec.sigma > 0.0);
    let d = p.value() as f64 - y.value() as f64;
    (-d * d / (2.0 * spec.sigma * spec.sigma)).exp()
}

/// Reward for a full two-stage trajectory: zero if either stage failed
/// format checks, otherwise the Gaussian reward of the parsed score.
pub fn trajectory_reward(
    stage1: &ParseOutcome<String>,
    stage2: &ParseOutcome<Score>,
    y: Score,
    spec: &RewardSpec,
) -> f64 {
    match (stage1, stage2) {
        (ParseOutcome::Valid(_), ParseOutcome::Valid(p)) => gaussian_reward(*p, y, spec),
        _ => 0.0,
    }
}
