use ndarray::{Axis, Zip};

use super::model::{Dense, Gradients, LossKind, MlpModel};
use super::NeuralError;
use crate::ingest::Matrices;
use crate::rng::SplitMix64;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moment accumulators and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Dense>,
    pub second_moment: Vec<Dense>,
    pub step: u64,
}

impl AdamState {
    pub fn new(model: &MlpModel) -> Self {
        let zeros = || {
            model
                .layers
                .iter()
                .map(|l| Dense::zeros(l.weights.nrows(), l.weights.ncols()))
                .collect::<Vec<_>>()
        };
        Self {
            first_moment: zeros(),
            second_moment: zeros(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step(
    model: &mut MlpModel,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
) -> Result<(), NeuralError> {
    if !(lr > 0.0) {
        return Err(NeuralError::InvalidConfig(format!("learning rate {lr} must be positive")));
    }
    if grads.len() != model.layers.len()
        || grads.iter().zip(&model.layers).any(|(g, l)| g.shape() != l.shape())
        || state.first_moment.len() != model.layers.len()
    {
        return Err(NeuralError::ShapeMismatch {
            expected: "gradients shaped like the model".into(),
            found: format!("{} gradient layers", grads.len()),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
    };
    for (((layer, g), m), v) in model
        .layers
        .iter_mut()
        .zip(grads)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        Zip::from(&mut layer.weights)
            .and(&mut m.weights)
            .and(&mut v.weights)
            .and(&g.weights)
            .for_each(|p, m, v, &g| update(p, m, v, g));
        Zip::from(&mut layer.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .and(&g.bias)
            .for_each(|p, m, v, &g| update(p, m, v, g));
    }
    Ok(())
}

/// Outcome of one pass over the training rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub steps: usize,
}

/// Shuffles the rows with `shuffle_seed`, then takes one Adam step per
/// sequential mini-batch (the last may be short). Returns the mean of the
/// batch losses.
pub fn train_epoch(
    model: &mut MlpModel,
    state: &mut AdamState,
    data: &Matrices,
    batch_size: usize,
    lr: f64,
    kind: LossKind,
    shuffle_seed: u64,
) -> Result<EpochStats, NeuralError> {
    if data.is_empty() {
        return Err(NeuralError::EmptyDataset);
    }
    if batch_size == 0 {
        return Err(NeuralError::InvalidConfig("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    SplitMix64::new(shuffle_seed).shuffle(&mut order);
    let mut total = 0.0;
    let mut steps = 0;
    for batch in order.chunks(batch_size) {
        let x = data.x.select(Axis(0), batch);
        let y = data.y.select(Axis(0), batch);
        let (batch_loss, grads) = model.gradients(x.view(), y.view(), kind)?;
        adam_step(model, &grads, state, lr)?;
        total += batch_loss;
        steps += 1;
    }
    Ok(EpochStats {
        mean_loss: total / steps as f64,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{init_model, MlpConfig, OutputHead};
    use ndarray::Array2;

    fn small_model() -> MlpModel {
        init_model(&MlpConfig::new(2, vec![4, 4], 1, OutputHead::Sigmoid).unwrap(), 3).unwrap()
    }

    fn filled(model: &MlpModel, value: f64) -> Gradients {
        model
            .layers
            .iter()
            .map(|l| {
                let mut d = Dense::zeros(l.weights.nrows(), l.weights.ncols());
                d.weights.fill(value);
                d.bias.fill(value);
                d
            })
            .collect()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut m = small_model();
        let before = m.clone();
        let mut s = AdamState::new(&m);
        let g = filled(&m, 0.0);
        adam_step(&mut m, &g, &mut s, 0.001).unwrap();
        assert_eq!(m, before);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_with_unit_gradient() {
        let mut m = small_model();
        let before = m.clone();
        let mut s = AdamState::new(&m);
        let g = filled(&m, 1.0);
        adam_step(&mut m, &g, &mut s, 0.001).unwrap();
        // Bias-corrected moments are both exactly 1 after the first step.
        let expected = -0.001 / (1.0 + EPSILON);
        for (a, b) in m.layers.iter().zip(&before.layers) {
            for (x, y) in a.weights.iter().zip(b.weights.iter()) {
                assert!(((x - y) - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_gradient_moves_against_sign() {
        let mut m = small_model();
        let start = m.layers[0].weights[[0, 0]];
        let mut s = AdamState::new(&m);
        let g = filled(&m, -0.3);
        for _ in 0..50 {
            adam_step(&mut m, &g, &mut s, 0.01).unwrap();
        }
        assert!(m.layers[0].weights[[0, 0]] > start);
        assert_eq!(s.step, 50);
    }

    #[test]
    fn rejects_bad_lr_and_shapes() {
        let mut m = small_model();
        let mut s = AdamState::new(&m);
        let g = filled(&m, 0.0);
        assert!(adam_step(&mut m, &g, &mut s, 0.0).is_err());
        assert!(adam_step(&mut m, &g[..1].to_vec(), &mut s, 0.1).is_err());
    }

    #[test]
    fn full_batch_takes_one_step() {
        let mut m = small_model();
        let mut s = AdamState::new(&m);
        let data = Matrices {
            x: Array2::from_shape_fn((10, 2), |(i, j)| (i + j) as f64 / 10.0),
            y: Array2::from_shape_fn((10, 1), |(i, _)| (i % 2) as f64),
        };
        let stats = train_epoch(&mut m, &mut s, &data, 256, 0.001, LossKind::Bce, 1).unwrap();
        assert_eq!(stats.steps, 1);
        let stats = train_epoch(&mut m, &mut s, &data, 3, 0.001, LossKind::Bce, 1).unwrap();
        assert_eq!(stats.steps, 4);
        assert_eq!(s.step, 5);
    }

    #[test]
    fn empty_dataset() {
        let mut m = small_model();
        let mut s = AdamState::new(&m);
        let data = Matrices {
            x: Array2::zeros((0, 2)),
            y: Array2::zeros((0, 1)),
        };
        assert_eq!(
            train_epoch(&mut m, &mut s, &data, 4, 0.001, LossKind::Bce, 1),
            Err(NeuralError::EmptyDataset)
        );
    }
}
