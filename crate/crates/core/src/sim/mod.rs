//! Deterministic 2D kinematic driving simulator: executes a scenario
//! genome as an episode on one of four synthetic route layouts and
//! reports minimum distance, collision flag, route completion,
//! infraction score, and driving score.

mod episode;
pub mod layout;
pub mod replay;

pub use episode::{
    detection_range, featurize, fitness, infraction_score, run_episode, EnvState, EpisodeMode,
    InfractionCounts, Kinematic, ObjectDistances, Pose, SimConfig, SimError, SimOutcome, Weather,
    PENALTY_NPC, PENALTY_PED, PENALTY_STATIC,
};
pub use layout::{all_layouts, layout, LayoutId, RouteLayout, UnknownLayout, LANE_WIDTH};

use crate::epiga::{Evaluation, EvaluatorError, FitnessEvaluator};
use crate::scalar::Real;
use crate::scenario::ScenarioGenome;

/// Fitness evaluator backed by the simulator: one evaluation runs one
/// episode and reports the minimum distance plus the initial-state
/// features.
pub struct SimEvaluator {
    pub layout: RouteLayout,
    pub config: SimConfig,
    pub mode: EpisodeMode,
}

impl SimEvaluator {
    pub fn new(layout: RouteLayout, mode: EpisodeMode) -> Self {
        Self { layout, config: SimConfig::default(), mode }
    }
}

impl<S: Real> FitnessEvaluator<S> for SimEvaluator {
    fn evaluate(
        &self,
        genome: &ScenarioGenome<S>,
        episode_seed: u64,
    ) -> Result<Evaluation<S>, EvaluatorError> {
        let outcome =
            run_episode(&self.layout, genome, &self.config, episode_seed, self.mode, false)
                .map_err(|e| EvaluatorError(e.to_string()))?;
        Ok(Evaluation { fitness: outcome.md, features: outcome.feature_vector })
    }
}
