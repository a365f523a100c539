use serde::{Deserialize, Serialize};

use super::TuneError;
use crate::config::RunConfig;
use crate::rng::SplitMix64;

/// Hyperparameter search space. `l_rate` is sampled log-uniformly between
/// its two endpoints; batch size and layer sizes are categorical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub batch_size: Vec<usize>,
    pub l_rate: [f64; 2],
    pub n_layers: [usize; 2],
    pub layer_sizes: Vec<usize>,
    pub max_epochs: usize,
    pub n_trials: usize,
    pub seed: u64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            batch_size: vec![256, 512, 1024],
            l_rate: [1e-4, 1e-3],
            n_layers: [2, 6],
            layer_sizes: vec![128, 256, 512, 1024, 2048],
            max_epochs: 10,
            n_trials: 3,
            seed: 42,
        }
    }
}

impl SearchSpace {
    pub fn from_config(config: &RunConfig) -> Self {
        Self {
            batch_size: config.batch_size.clone(),
            l_rate: config.l_rate,
            n_layers: config.n_layers,
            layer_sizes: config.layer_sizes.clone(),
            max_epochs: config.max_epochs,
            n_trials: config.n_trials,
            seed: config.seed,
        }
    }

    pub fn validate(&self) -> Result<(), TuneError> {
        let bad = |m: &str| Err(TuneError::InvalidSpace(m.to_string()));
        if self.batch_size.is_empty() || self.batch_size.contains(&0) {
            return bad("batch_size choices must be positive");
        }
        if self.layer_sizes.is_empty() || self.layer_sizes.contains(&0) {
            return bad("layer_sizes choices must be positive");
        }
        if !(self.l_rate[0] > 0.0 && self.l_rate[0] <= self.l_rate[1] && self.l_rate[1].is_finite()) {
            return bad("l_rate must satisfy 0 < low <= high");
        }
        if !(self.n_layers[0] >= 1 && self.n_layers[0] <= self.n_layers[1]) {
            return bad("n_layers must satisfy 1 <= low <= high");
        }
        if self.max_epochs == 0 || self.n_trials == 0 {
            return bad("max_epochs and n_trials must be at least 1");
        }
        Ok(())
    }

    pub fn contains(&self, p: &TrialParams) -> bool {
        self.batch_size.contains(&p.batch_size)
            && p.l_rate >= self.l_rate[0]
            && p.l_rate <= self.l_rate[1]
            && (self.n_layers[0]..=self.n_layers[1]).contains(&p.n_layers)
            && p.layer_sizes.len() == p.n_layers
            && p.layer_sizes.iter().all(|s| self.layer_sizes.contains(s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialParams {
    pub batch_size: usize,
    pub l_rate: f64,
    pub n_layers: usize,
    pub layer_sizes: Vec<usize>,
}

/// Draws one configuration: batch size, learning rate, depth, then one
/// size per hidden layer, in that order.
pub fn sample_params(space: &SearchSpace, rng: &mut SplitMix64) -> TrialParams {
    let batch_size = *rng.choose(&space.batch_size);
    let [lo, hi] = space.l_rate;
    let l_rate = if lo == hi {
        lo
    } else {
        rng.uniform(lo.ln(), hi.ln()).exp().clamp(lo, hi)
    };
    let span = (space.n_layers[1] - space.n_layers[0]) as u64 + 1;
    let n_layers = space.n_layers[0] + rng.below(span) as usize;
    let layer_sizes = (0..n_layers).map(|_| *rng.choose(&space.layer_sizes)).collect();
    TrialParams {
        batch_size,
        l_rate,
        n_layers,
        layer_sizes,
    }
}
