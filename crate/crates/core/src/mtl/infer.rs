use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::{Dataset, MtlModel};
use crate::error::{Error, Result};
use crate::optimizer::{occupation_from_decision, wrap_phase};
use crate::system::{overall_power, PowerConfig, RadioConfig, Strategy};

/// Feasible `F` from per-pair assist probabilities: the pairs above 0.5, highest
/// first (ties to the lower index), cut to the largest admissible group count and
/// cut further until the power budget holds.
pub fn project(probs: &[f64], radio: &RadioConfig, power: &PowerConfig) -> Vec<u8> {
    let k = probs.len();
    let mut order: Vec<usize> = (0..k).filter(|&i| probs[i] > 0.5).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut admissible: Vec<usize> = radio
        .admissible_group_counts()
        .into_iter()
        .filter(|&l| l <= order.len())
        .collect();
    admissible.insert(0, 0);
    for &l in admissible.iter().rev() {
        let mut f = vec![0u8; k];
        for &i in &order[..l] {
            f[i] = 1;
        }
        if l == 0 || overall_power(&occupation_from_decision(&f), power, radio.tx_power_w) <= power.max_total_w {
            return f;
        }
    }
    vec![0; k]
}

fn strategy_from(decision: Vec<u8>, reg: &[f64], radio: &RadioConfig) -> Strategy {
    let occupation = occupation_from_decision(&decision);
    let groups = occupation.iter().filter(|&&u| u != 0).count();
    let size = if groups == 0 { 0 } else { radio.num_elements / groups };
    let phases = occupation
        .iter()
        .zip(reg)
        .map(|(&u, &r)| (u != 0).then(|| vec![wrap_phase(TAU * r); size]))
        .collect();
    Strategy {
        groups,
        occupation,
        phases,
    }
}

/// Strategy predicted for one raw feature vector. Always feasible except possibly
/// for the power budget when even the direct-only allocation exceeds it.
pub fn infer(model: &MtlModel, features: &[f64], radio: &RadioConfig, power: &PowerConfig) -> Result<Strategy> {
    if features.len() != model.input_dim() || model.num_pairs() != radio.num_pairs {
        return Err(Error::domain(format!(
            "model expects {} features for {} pairs, got {} features for {} pairs",
            model.input_dim(),
            model.num_pairs(),
            features.len(),
            radio.num_pairs
        )));
    }
    let (probs, reg) = model.predict(&[features]).pop().expect("one row");
    Ok(strategy_from(project(&probs, radio, power), &reg, radio))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Fraction of samples whose projected `F` equals the label exactly.
    pub accuracy: f64,
    /// Mean squared phase error over the label's assisted pairs.
    pub mse: f64,
}

/// Accuracy and MSE for predicted `(F, normalized phases)` against the dataset labels.
pub fn score(predicted: &[(Vec<u8>, Vec<f64>)], dataset: &Dataset) -> Evaluation {
    assert_eq!(predicted.len(), dataset.len());
    if dataset.is_empty() {
        return Evaluation { accuracy: 0.0, mse: 0.0 };
    }
    let mut hits = 0usize;
    let mut sq = 0.0;
    let mut count = 0usize;
    for ((f, r), s) in predicted.iter().zip(&dataset.samples) {
        if *f == s.cls {
            hits += 1;
        }
        for k in 0..s.cls.len() {
            if s.cls[k] == 1 {
                sq += (r[k] - s.reg[k]).powi(2);
                count += 1;
            }
        }
    }
    Evaluation {
        accuracy: hits as f64 / dataset.len() as f64,
        mse: if count == 0 { 0.0 } else { sq / count as f64 },
    }
}

pub fn evaluate(model: &MtlModel, dataset: &Dataset, radio: &RadioConfig, power: &PowerConfig) -> Evaluation {
    let rows: Vec<&[f64]> = dataset.samples.iter().map(|s| s.features.as_slice()).collect();
    let predicted: Vec<(Vec<u8>, Vec<f64>)> = model
        .predict(&rows)
        .into_iter()
        .map(|(p, r)| (project(&p, radio, power), r))
        .collect();
    score(&predicted, dataset)
}
