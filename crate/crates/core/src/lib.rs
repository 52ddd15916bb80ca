//! Epigenetic search for critical driving scenarios.
//!
//! The crate hosts the four pillars of the search pipeline:
//!
//! - [`scenario`]: the 10-gene test-input encoding and its repair logic;
//! - [`epiga`] / [`ga`]: the epigenetic GA engine and the classical GA
//!   baseline, both reporting through [`trace`];
//! - [`sim`]: a deterministic 2D kinematic driving simulator producing
//!   the five safety metrics;
//! - [`model`]: the attention-based epigenetic model generating
//!   gene-silencing probabilities, with in-crate training and backprop.
//!
//! All numeric code is generic over [`scalar::Real`] (f32 or f64); the
//! aliases below fix the default `f64` instantiation used by binaries
//! and experiments.

pub mod epiga;
pub mod ga;
pub mod model;
pub mod provider;
pub mod scalar;
pub mod scenario;
pub mod sim;
pub mod trace;

/// Length of the environment-state feature vector consumed by the
/// epigenetic model.
pub const FEATURE_LEN: usize = 16;

/// Fixed-length environment-state features, scaled to [-1, 1].
pub type FeatureVec<S> = [S; FEATURE_LEN];

pub use scalar::Real;

/// Default `f64` instantiations.
pub type Genome = scenario::ScenarioGenome<f64>;
pub type Cell = epiga::Cell<f64>;
pub type Individual = epiga::Individual<f64>;
pub type Population = epiga::Population<f64>;
pub type GsProbabilities = epiga::GsProbabilities<f64>;
pub type SearchTrace = trace::SearchTrace<f64>;
pub type SimOutcome = sim::SimOutcome<f64>;
pub type EnvState = sim::EnvState<f64>;
pub type ModelParams = model::ModelParams<f64>;
pub type TrainingSample = model::TrainingSample<f64>;
pub type ModelProvider = provider::ModelProvider<f64>;
pub type Features = FeatureVec<f64>;
