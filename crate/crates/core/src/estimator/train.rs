use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::estimator::model::{Dense, EstimatorModel, Normalization};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Lower bound on the output-activation slope in the backward pass, so
    /// samples stuck on a saturated output still pull on the weights.
    pub output_slope_floor: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            learning_rate: 1e-3,
            batch_size: 64,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            output_slope_floor: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean absolute training error per epoch (measured during the epoch).
    pub epoch_losses: Vec<f64>,
    pub train_mae: f64,
    pub test_mae: f64,
    /// Not serialized, so saved reports stay reproducible.
    #[serde(skip)]
    pub wall_clock_secs: f64,
    pub seed: u64,
}

struct Adam {
    m: Vec<Dense>,
    v: Vec<Dense>,
    step: i32,
}

impl Adam {
    fn new(layers: &[Dense]) -> Self {
        Adam {
            m: zeroed(layers),
            v: zeroed(layers),
            step: 0,
        }
    }

    fn update(&mut self, layers: &mut [Dense], grads: &[Dense], cfg: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        for (li, layer) in layers.iter_mut().enumerate() {
            let g = &grads[li];
            let (m, v) = (&mut self.m[li], &mut self.v[li]);
            let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
            let gs = g.weights.iter().chain(g.biases.iter());
            let ms = m.weights.iter_mut().chain(m.biases.iter_mut());
            let vs = v.weights.iter_mut().chain(v.biases.iter_mut());
            for (((p, &g), m), v) in params.zip(gs).zip(ms).zip(vs) {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                *p -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
            }
        }
    }
}

fn zeroed(layers: &[Dense]) -> Vec<Dense> {
    layers
        .iter()
        .map(|l| Dense {
            inputs: l.inputs,
            outputs: l.outputs,
            weights: vec![0.0; l.weights.len()],
            biases: vec![0.0; l.biases.len()],
        })
        .collect()
}

/// Mean and standard deviation per feature; constant features keep scale 1.
fn fit_normalization(samples: &[Sample], width: usize) -> Normalization {
    let n = samples.len() as f64;
    let mut shift = vec![0.0; width];
    for s in samples {
        shift[0] += s.input.x;
        shift[1..].iter_mut().zip(&s.input.z).for_each(|(a, v)| *a += v);
    }
    shift.iter_mut().for_each(|v| *v /= n);
    let mut var = vec![0.0; width];
    for s in samples {
        var[0] += (s.input.x - shift[0]).powi(2);
        var[1..]
            .iter_mut()
            .zip(&s.input.z)
            .zip(&shift[1..])
            .for_each(|((a, v), m)| *a += (v - m).powi(2));
    }
    let scale = var
        .iter()
        .map(|v| {
            let sd = (v / n).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    Normalization { shift, scale }
}

/// Mean absolute error of `model` on `samples`.
pub fn mean_absolute_error(model: &EstimatorModel, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut total = 0.0;
    for s in samples {
        total += (model.forward(s.input.x, &s.input.z)? - s.label).abs();
    }
    Ok(total / samples.len() as f64)
}

impl EstimatorModel {
    /// Minimises MAE with mini-batch Adam. Normalisation statistics are fit
    /// on `train` only and frozen into the model.
    pub fn train(
        &mut self,
        train: &[Sample],
        test: &[Sample],
        cfg: &TrainConfig,
    ) -> Result<TrainReport> {
        if train.is_empty() {
            return Err(Error::Empty("training set"));
        }
        if test.is_empty() {
            return Err(Error::Empty("test set"));
        }
        if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("batch size and learning rate must be positive".into()));
        }
        let width = self.input_width();
        if let Some(s) = train.iter().chain(test).find(|s| s.input.dim() != width) {
            return Err(Error::Dimension {
                expected: width,
                actual: s.input.dim(),
            });
        }
        let started = Instant::now();
        self.normalization = fit_normalization(train, width);
        let inputs: Vec<Vec<f64>> = train
            .iter()
            .map(|s| self.normalized_input(s.input.x, &s.input.z))
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut adam = Adam::new(&self.layers);
        let mut grads = zeroed(&self.layers);
        let mut epoch_losses = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                for g in grads.iter_mut() {
                    g.weights.iter_mut().for_each(|v| *v = 0.0);
                    g.biases.iter_mut().for_each(|v| *v = 0.0);
                }
                let scale = 1.0 / batch.len() as f64;
                for &i in batch {
                    let trace = self.trace(inputs[i].clone());
                    let y = trace.outputs[self.layers.len()][0];
                    let residual = y - train[i].label;
                    epoch_loss += residual.abs();
                    // subgradient of |r| is 0 at r = 0
                    let d = if residual > 0.0 {
                        scale
                    } else if residual < 0.0 {
                        -scale
                    } else {
                        0.0
                    };
                    if d != 0.0 {
                        self.backward(&trace, d, cfg.output_slope_floor, Some(&mut grads));
                    }
                }
                adam.update(&mut self.layers, &grads, cfg);
            }
            let loss = epoch_loss / train.len() as f64;
            if !loss.is_finite() || self.layers.iter().any(|l| l.weights.iter().any(|w| !w.is_finite())) {
                return Err(Error::Diverged { epoch });
            }
            epoch_losses.push(loss);
        }

        let train_mae = mean_absolute_error(self, train)?;
        let test_mae = mean_absolute_error(self, test)?;
        self.metadata.epochs_run += cfg.epochs;
        self.metadata.train_mae = Some(train_mae);
        self.metadata.test_mae = Some(test_mae);
        self.metadata.seed = cfg.seed;
        Ok(TrainReport {
            epoch_losses,
            train_mae,
            test_mae,
            wall_clock_secs: started.elapsed().as_secs_f64(),
            seed: cfg.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ObservationVector, Provenance};
    use crate::domain::QosOutcome;

    fn samples(n: usize, label: impl Fn(f64, f64) -> f64) -> Vec<Sample> {
        (0..n)
            .map(|i| {
                let x = (i as f64 * 0.618_033_988_7).fract();
                let u = (i as f64 * 0.414_213_562_3).fract() * 10.0;
                Sample {
                    input: ObservationVector {
                        x,
                        z: vec![u, u + 1.0, 7.0, 8.0, 2.0, 10.0],
                    },
                    label: label(x, u),
                    provenance: Provenance::Raw,
                    parent: i as u64,
                    achieved: QosOutcome {
                        throughput: 1.0,
                        delay: 1.0,
                    },
                }
            })
            .collect()
    }

    #[test]
    fn learns_constant_label() {
        let data = samples(400, |_, _| 0.3);
        let (train, test) = data.split_at(300);
        let mut m = EstimatorModel::new(2, &[8, 8], 3).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            ..TrainConfig::default()
        };
        let r = m.train(train, test, &cfg).unwrap();
        assert!(r.test_mae < 1e-3, "mae {}", r.test_mae);
        assert_eq!(m.metadata().epochs_run, 200);
    }

    #[test]
    fn learns_monotone_threshold() {
        let data = samples(800, |x, u| ((x * 12.0) / (u + 1.0)).min(1.0));
        let (train, test) = data.split_at(600);
        let mut m = EstimatorModel::new(2, &[16, 16], 5).unwrap();
        let cfg = TrainConfig {
            epochs: 150,
            ..TrainConfig::default()
        };
        let r = m.train(train, test, &cfg).unwrap();
        assert!(r.test_mae < 0.05, "mae {}", r.test_mae);
        assert!(r.epoch_losses.last().unwrap() < &r.epoch_losses[0]);
    }

    #[test]
    fn training_is_deterministic() {
        let data = samples(200, |x, _| x);
        let (train, test) = data.split_at(150);
        let cfg = TrainConfig {
            epochs: 5,
            seed: 11,
            ..TrainConfig::default()
        };
        let mut a = EstimatorModel::new(2, &[8], 1).unwrap();
        let mut b = a.clone();
        a.train(train, test, &cfg).unwrap();
        b.train(train, test, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn normalisation_uses_train_statistics() {
        let data = samples(100, |x, _| x);
        let (train, test) = data.split_at(80);
        let mut m = EstimatorModel::new(2, &[4], 1).unwrap();
        m.train(train, test, &TrainConfig { epochs: 1, ..TrainConfig::default() }).unwrap();
        let mean_x = train.iter().map(|s| s.input.x).sum::<f64>() / 80.0;
        assert!((m.normalization().shift[0] - mean_x).abs() < 1e-12);
        // constant feature keeps unit scale
        assert_eq!(m.normalization().scale[3], 1.0);
    }

    #[test]
    fn empty_sets_rejected() {
        let data = samples(10, |_, _| 0.5);
        let mut m = EstimatorModel::new(2, &[4], 1).unwrap();
        assert!(m.train(&[], &data, &TrainConfig::default()).is_err());
        assert!(m.train(&data, &[], &TrainConfig::default()).is_err());
    }
}
