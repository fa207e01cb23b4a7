use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::net::{Dense, LossParts, LossWeights, MtlNet};
use super::{evaluate, Dataset, MtlModel};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::system::{PowerConfig, RadioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// Tail of the training split held out for early stopping.
    pub validation_fraction: f64,
    pub xi_c: f64,
    pub xi_r: f64,
    /// Wrap regression errors onto the unit circle.
    pub circular_loss: bool,
    pub dataset_size: usize,
    pub train_fraction: f64,
    /// Draw fresh positions for every dataset instance.
    pub randomize_positions: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 64,
            max_epochs: 200,
            patience: 10,
            validation_fraction: 0.1,
            xi_c: 0.5,
            xi_r: 0.5,
            circular_loss: false,
            dataset_size: 5000,
            train_fraction: 0.9,
            randomize_positions: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::config("mtl.hidden", "layer widths must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("mtl.learning_rate", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("mtl.momentum", "must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("mtl.batch_size", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config("mtl.validation_fraction", "must lie in [0, 1)"));
        }
        if !(self.xi_c >= 0.0 && self.xi_r >= 0.0) {
            return Err(Error::config("mtl.xi_c", "loss weights must be >= 0"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::config("mtl.train_fraction", "must lie in (0, 1]"));
        }
        Ok(())
    }

    fn weights(&self) -> LossWeights {
        LossWeights {
            xi_c: self.xi_c,
            xi_r: self.xi_r,
            circular: self.circular_loss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: f64,
    pub cls: f64,
    pub reg: f64,
    pub validation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLoss>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Measured on the validation split, or the training split when there is none.
    pub final_accuracy: f64,
    pub final_mse: f64,
    pub wall_clock_s: f64,
}

struct Matrices {
    x: Array2<f64>,
    cls: Array2<f64>,
    reg: Array2<f64>,
}

fn matrices(model: &MtlModel, data: &Dataset) -> Matrices {
    let rows: Vec<&[f64]> = data.samples.iter().map(|s| s.features.as_slice()).collect();
    let k = data.num_pairs().max(model.num_pairs());
    let mut cls = Array2::zeros((data.len(), k));
    let mut reg = Array2::zeros((data.len(), k));
    for (i, s) in data.samples.iter().enumerate() {
        for j in 0..k {
            cls[[i, j]] = s.cls[j] as f64;
            reg[[i, j]] = s.reg[j];
        }
    }
    Matrices {
        x: model.standardize(&rows),
        cls,
        reg,
    }
}

fn batch_loss(net: &MtlNet, m: &Matrices, w: LossWeights) -> LossParts {
    net.loss(&net.forward(&m.x), &m.cls, &m.reg, w)
}

fn fit_standardization(data: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let d = data.feature_dim();
    let n = data.len() as f64;
    let mut mean = vec![0.0; d];
    for s in &data.samples {
        for (m, v) in mean.iter_mut().zip(&s.features) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; d];
    for s in &data.samples {
        for ((q, v), m) in var.iter_mut().zip(&s.features).zip(&mean) {
            *q += (v - m) * (v - m) / n;
        }
    }
    // Constant features pass through centered but unscaled.
    let scale = var.into_iter().map(|q| if q.sqrt() > 1e-12 { q.sqrt() } else { 1.0 }).collect();
    (mean, scale)
}

/// Mini-batch momentum SGD with early stopping on the tail validation split.
pub fn train(
    dataset: &Dataset,
    config: &TrainConfig,
    seed: u64,
    radio: &RadioConfig,
    power: &PowerConfig,
) -> Result<(MtlModel, TrainReport)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::domain("cannot train on an empty dataset"));
    }
    if dataset.num_pairs() != radio.num_pairs {
        return Err(Error::domain(format!(
            "dataset has {} pairs, radio has {}",
            dataset.num_pairs(),
            radio.num_pairs
        )));
    }
    let timer = Instant::now();
    let (train_set, val_set) = dataset.split(1.0 - config.validation_fraction);
    let train_set = if train_set.is_empty() { dataset.clone() } else { train_set };

    let (feature_mean, feature_scale) = fit_standardization(&train_set);
    let mut init_rng = rng::keyed(seed, 0, 0, Stream::Init);
    let mut model = MtlModel {
        net: MtlNet::init(train_set.feature_dim(), &config.hidden, radio.num_pairs, &mut init_rng),
        feature_mean,
        feature_scale,
        xi_c: config.xi_c,
        xi_r: config.xi_r,
    };
    let weights = config.weights();
    let train_m = matrices(&model, &train_set);
    let val_m = (!val_set.is_empty()).then(|| matrices(&model, &val_set));

    let mut velocity: Vec<Dense> = model
        .net
        .layers()
        .iter()
        .map(|d| Dense::zeros(d.inputs(), d.outputs()))
        .collect();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, MtlNet)> = None;
    let mut last_finite: Option<(usize, f64)> = None;
    let mut stopped_early = false;
    let d = train_m.x.ncols();
    let k = radio.num_pairs;

    for epoch in 0..config.max_epochs {
        let mut shuffle = rng::keyed(seed, epoch as u64, 0, Stream::Training);
        order.shuffle(&mut shuffle);
        for chunk in order.chunks(config.batch_size) {
            let mut x = Array2::zeros((chunk.len(), d));
            let mut yc = Array2::zeros((chunk.len(), k));
            let mut yr = Array2::zeros((chunk.len(), k));
            for (row, &i) in chunk.iter().enumerate() {
                x.row_mut(row).assign(&train_m.x.row(i));
                yc.row_mut(row).assign(&train_m.cls.row(i));
                yr.row_mut(row).assign(&train_m.reg.row(i));
            }
            let grads = model.net.backward(&model.net.forward(&x), &yc, &yr, weights);
            for ((layer, v), g) in model.net.layers_mut().into_iter().zip(&mut velocity).zip(&grads) {
                v.w *= config.momentum;
                v.w.scaled_add(-config.learning_rate, &g.w);
                v.b *= config.momentum;
                v.b.scaled_add(-config.learning_rate, &g.b);
                layer.w += &v.w;
                layer.b += &v.b;
            }
        }

        let parts = batch_loss(&model.net, &train_m, weights);
        let validation = val_m.as_ref().map(|m| batch_loss(&model.net, m, weights).total);
        if !parts.total.is_finite() || validation.is_some_and(|v| !v.is_finite()) || !model.net.is_finite() {
            return Err(Error::Divergence {
                epoch,
                last_finite_epoch: last_finite.map(|(e, _)| e),
                last_finite_loss: last_finite.map(|(_, l)| l),
            });
        }
        last_finite = Some((epoch, parts.total));
        epochs.push(EpochLoss {
            epoch,
            total: parts.total,
            cls: parts.cls,
            reg: parts.reg,
            validation,
        });

        let monitored = validation.unwrap_or(parts.total);
        let improved = best.as_ref().is_none_or(|(b, _, _)| monitored < *b);
        if improved {
            best = Some((monitored, epoch, model.net.clone()));
        } else if val_m.is_some() && epoch - best.as_ref().map_or(0, |b| b.1) >= config.patience {
            stopped_early = true;
            break;
        }
    }

    let best_epoch = match best {
        Some((_, epoch, net)) if val_m.is_some() => {
            model.net = net;
            epoch
        }
        _ => epochs.len().saturating_sub(1),
    };
    let scored = if val_set.is_empty() { &train_set } else { &val_set };
    let eval = evaluate(&model, scored, radio, power);
    Ok((
        model,
        TrainReport {
            epochs,
            best_epoch,
            stopped_early,
            final_accuracy: eval.accuracy,
            final_mse: eval.mse,
            wall_clock_s: timer.elapsed().as_secs_f64(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mtl::{collect_dataset, Sample};
    use crate::scenario::Scenario;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset {
            samples: (0..n)
                .map(|_| {
                    let features: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let cls = vec![(features[0] > 0.0) as u8, (features[1] + features[2] > 0.0) as u8];
                    let reg = vec![0.5 + 0.3 * features[3], 0.25];
                    Sample { features, cls, reg }
                })
                .collect(),
        }
    }

    fn radio2() -> RadioConfig {
        Scenario {
            geometry: crate::scenario::GeometrySection { num_pairs: 2, ..Default::default() },
            ..Scenario::default()
        }
        .resolve()
        .unwrap()
        .radio
    }

    #[test]
    fn overfits_ten_samples() {
        let cfg = TrainConfig {
            hidden: vec![32, 32],
            learning_rate: 0.05,
            batch_size: 10,
            max_epochs: 3000,
            validation_fraction: 0.0,
            ..TrainConfig::default()
        };
        let r = radio2();
        let (_, report) = train(&toy(10, 3), &cfg, 7, &r, &PowerConfig::for_elements(512)).unwrap();
        assert!(report.epochs.last().unwrap().total < 1e-2, "{:?}", report.epochs.last());
        assert_eq!(report.final_accuracy, 1.0);
    }

    #[test]
    fn loss_trends_down_and_training_is_reproducible() {
        let cfg = TrainConfig { hidden: vec![16], max_epochs: 40, learning_rate: 0.01, ..TrainConfig::default() };
        let r = radio2();
        let p = PowerConfig::for_elements(512);
        let ds = toy(400, 1);
        let (m1, a) = train(&ds, &cfg, 3, &r, &p).unwrap();
        let (m2, b) = train(&ds, &cfg, 3, &r, &p).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(a.epochs, b.epochs);
        let avg = |s: &[EpochLoss]| s.iter().map(|e| e.total).sum::<f64>() / s.len() as f64;
        let n = a.epochs.len();
        assert!(n >= 10);
        assert!(avg(&a.epochs[n - 5..]) < avg(&a.epochs[..5]));
    }

    #[test]
    fn divergence_reports_last_finite_epoch() {
        let cfg = TrainConfig {
            hidden: vec![8],
            learning_rate: 1e200,
            max_epochs: 50,
            validation_fraction: 0.0,
            ..TrainConfig::default()
        };
        let ds = toy(50, 2);
        match train(&ds, &cfg, 1, &radio2(), &PowerConfig::for_elements(512)) {
            Err(Error::Divergence { epoch, last_finite_epoch, .. }) => {
                assert!(last_finite_epoch.map_or(true, |e| e < epoch));
            }
            other => panic!("expected divergence, got {:?}", other.map(|r| r.1.epochs.len())),
        }
    }

    #[test]
    fn rejects_empty_and_mismatched_data() {
        let r = radio2();
        let p = PowerConfig::for_elements(512);
        assert!(train(&Dataset::default(), &TrainConfig::default(), 0, &r, &p).is_err());
        let mut ds = toy(5, 0);
        ds.samples.iter_mut().for_each(|s| {
            s.cls.push(0);
            s.reg.push(0.0)
        });
        assert!(train(&ds, &TrainConfig::default(), 0, &r, &p).is_err());
    }

    #[test]
    fn learns_small_solver_dataset() {
        let mut s = Scenario::default();
        s.geometry.num_pairs = 2;
        s.geometry.ris_rows = 8;
        s.geometry.ris_cols = 8;
        let r = s.resolve().unwrap();
        let ds = collect_dataset(&r, 600);
        let (train_set, test_set) = ds.split(0.8);
        let cfg = TrainConfig { hidden: vec![32, 32], max_epochs: 60, learning_rate: 0.01, ..TrainConfig::default() };
        let (model, _) = train(&train_set, &cfg, 5, &r.radio, &r.power).unwrap();
        let trained = evaluate(&model, &test_set, &r.radio, &r.power);
        let mut most = std::collections::HashMap::new();
        for smp in &test_set.samples {
            *most.entry(smp.cls.clone()).or_insert(0usize) += 1;
        }
        let majority = *most.values().max().unwrap() as f64 / test_set.len() as f64;
        assert!(trained.accuracy >= majority - 0.02, "{} vs majority {}", trained.accuracy, majority);
    }
}
