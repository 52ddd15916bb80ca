//! Silencing-probability providers: the equal-probability baseline and
//! the trained-model adapter.

use crate::epiga::{GsProbabilities, GsProvider};
use crate::model::ModelParams;
use crate::scalar::{real, Real};
use crate::scenario::GENOME_LEN;
use crate::FeatureVec;

/// Stateless provider returning 0.5 for every gene regardless of the
/// environment state.
#[derive(Debug, Clone, Copy, Default)]
pub struct EqualProvider;

impl<S: Real> GsProvider<S> for EqualProvider {
    fn gs_probabilities(&self, _features: &FeatureVec<S>) -> GsProbabilities<S> {
        GsProbabilities::equal(real(0.5))
    }
}

/// Adapter turning the epigenetic model's attention weights into
/// silencing probabilities: `Pr_gs(j) = 1 - A(j)`, so high-attention
/// genes are the ones expressed. No re-scaling is applied; the expression
/// probability reported downstream equals the attention weight exactly.
pub struct ModelProvider<S: Real> {
    params: ModelParams<S>,
}

impl<S: Real> ModelProvider<S> {
    pub fn new(params: ModelParams<S>) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &ModelParams<S> {
        &self.params
    }
}

impl<S: Real> GsProvider<S> for ModelProvider<S> {
    fn gs_probabilities(&self, features: &FeatureVec<S>) -> GsProbabilities<S> {
        let attention = self.params.attention_weights(features);
        let mut probs = [S::zero(); GENOME_LEN];
        for (p, a) in probs.iter_mut().zip(attention.iter()) {
            *p = S::one() - *a;
        }
        GsProbabilities::new(probs).expect("sigmoid output is inside [0, 1]")
    }
}
