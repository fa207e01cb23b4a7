//! Multi-task surrogate for the exhaustive solver.
//!
//! One model covers one pair count `K`. The classification head predicts each pair's
//! assist flag, the regression head its group phase over `2π`; inference projects the
//! flags onto a feasible allocation.

mod dataset;
mod features;
mod infer;
mod io;
pub mod loss;
pub mod net;
mod train;

use ndarray::Array2;
use rand::Rng;

pub use dataset::{collect_dataset, label, sample_instance, Dataset, Sample};
pub use features::{feature_dim, features, group_starts};
pub use infer::{evaluate, infer, project, score, Evaluation};
pub use io::{MODEL_MAGIC, MODEL_VERSION};
pub use train::{train, EpochLoss, TrainConfig, TrainReport};

use net::MtlNet;

#[derive(Debug, Clone, PartialEq)]
pub struct MtlModel {
    pub net: MtlNet,
    /// Standardization applied to raw features before the trunk.
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub xi_c: f64,
    pub xi_r: f64,
}

impl MtlModel {
    /// Untrained model with identity standardization.
    pub fn random<R: Rng + ?Sized>(inputs: usize, hidden: &[usize], num_pairs: usize, rng: &mut R) -> Self {
        Self {
            net: MtlNet::init(inputs, hidden, num_pairs, rng),
            feature_mean: vec![0.0; inputs],
            feature_scale: vec![1.0; inputs],
            xi_c: 0.5,
            xi_r: 0.5,
        }
    }

    pub fn num_pairs(&self) -> usize {
        self.net.num_pairs()
    }

    pub fn input_dim(&self) -> usize {
        self.feature_mean.len()
    }

    fn standardize_into(&self, raw: &[f64], out: &mut [f64]) {
        for (((o, x), m), s) in out.iter_mut().zip(raw).zip(&self.feature_mean).zip(&self.feature_scale) {
            *o = (x - m) / s;
        }
    }

    pub fn standardize(&self, rows: &[&[f64]]) -> Array2<f64> {
        let mut x = Array2::zeros((rows.len(), self.input_dim()));
        for (mut dst, raw) in x.rows_mut().into_iter().zip(rows) {
            self.standardize_into(raw, dst.as_slice_mut().expect("standard layout"));
        }
        x
    }

    /// Per-pair assist probability and normalized phase for each row.
    pub fn predict(&self, rows: &[&[f64]]) -> Vec<(Vec<f64>, Vec<f64>)> {
        let fwd = self.net.forward(&self.standardize(rows));
        let k = self.num_pairs();
        fwd.probs
            .rows()
            .into_iter()
            .zip(fwd.reg.rows())
            .map(|(p, r)| ((0..k).map(|j| p[2 * j + 1]).collect(), r.to_vec()))
            .collect()
    }
}
