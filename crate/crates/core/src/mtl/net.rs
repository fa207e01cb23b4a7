//! Shared ReLU trunk with a per-pair 2-way softmax head and a sigmoid regression head.
//!
//! Class logits are laid out pair-major: columns `2k` (direct) and `2k+1` (assisted).

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::loss::{circular_diff, sigmoid};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            w: Array2::zeros((outputs, inputs)),
            b: Array1::zeros(outputs),
        }
    }

    fn random<R: Rng + ?Sized>(inputs: usize, outputs: usize, gain: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, (gain / inputs as f64).sqrt()).expect("positive std");
        Self {
            w: Array2::from_shape_fn((outputs, inputs), |_| normal.sample(rng)),
            b: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.w.nrows()
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        if x.nrows() == 1 {
            // gemv over contiguous weight rows; the batched path transposes
            let y = self.w.dot(&x.row(0)) + &self.b;
            return y.insert_axis(ndarray::Axis(0));
        }
        x.dot(&self.w.t()) + &self.b
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub xi_c: f64,
    pub xi_r: f64,
    pub circular: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub cls: f64,
    pub reg: f64,
}

#[derive(Debug, Clone)]
pub struct Forward {
    /// Input followed by each trunk layer's post-ReLU output.
    pub activations: Vec<Array2<f64>>,
    /// `M × 2K` softmax probabilities.
    pub probs: Array2<f64>,
    /// `M × 2K` log-probabilities.
    pub log_probs: Array2<f64>,
    /// `M × K` sigmoid outputs.
    pub reg: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MtlNet {
    pub trunk: Vec<Dense>,
    pub cls: Dense,
    pub reg: Dense,
}

impl MtlNet {
    /// He-initialized trunk, variance-1/fan-in heads, zero biases.
    pub fn init<R: Rng + ?Sized>(inputs: usize, hidden: &[usize], num_pairs: usize, rng: &mut R) -> Self {
        let mut trunk = Vec::with_capacity(hidden.len());
        let mut width = inputs;
        for &h in hidden {
            trunk.push(Dense::random(width, h, 2.0, rng));
            width = h;
        }
        Self {
            trunk,
            cls: Dense::random(width, 2 * num_pairs, 1.0, rng),
            reg: Dense::random(width, num_pairs, 1.0, rng),
        }
    }

    pub fn num_pairs(&self) -> usize {
        self.reg.outputs()
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.first().unwrap_or(&self.cls).inputs()
    }

    /// Trunk layers, then the classification head, then the regression head.
    pub fn layers(&self) -> Vec<&Dense> {
        self.trunk.iter().chain([&self.cls, &self.reg]).collect()
    }

    pub fn layers_mut(&mut self) -> Vec<&mut Dense> {
        self.trunk.iter_mut().chain([&mut self.cls, &mut self.reg]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers()
            .iter()
            .all(|d| d.w.iter().chain(d.b.iter()).all(|v| v.is_finite()))
    }

    pub fn forward(&self, x: &Array2<f64>) -> Forward {
        let mut activations = Vec::with_capacity(self.trunk.len() + 1);
        activations.push(x.clone());
        for layer in &self.trunk {
            let z = layer.forward(activations.last().expect("input present"));
            activations.push(z.mapv(|v| v.max(0.0)));
        }
        let top = activations.last().expect("input present");
        let logits = self.cls.forward(top);
        let mut probs = logits.clone();
        let mut log_probs = logits;
        for (mut p, mut lp) in probs.rows_mut().into_iter().zip(log_probs.rows_mut()) {
            for k in 0..self.num_pairs() {
                let (a, b) = (lp[2 * k], lp[2 * k + 1]);
                let m = a.max(b);
                let lse = m + ((a - m).exp() + (b - m).exp()).ln();
                lp[2 * k] = a - lse;
                lp[2 * k + 1] = b - lse;
                p[2 * k] = lp[2 * k].exp();
                p[2 * k + 1] = lp[2 * k + 1].exp();
            }
        }
        let reg = self.reg.forward(top).mapv(sigmoid);
        Forward {
            activations,
            probs,
            log_probs,
            reg,
        }
    }

    /// `ι_c` averages over samples and pairs, `ι_r` over samples and regression outputs.
    pub fn loss(&self, fwd: &Forward, y_cls: &Array2<f64>, y_reg: &Array2<f64>, weights: LossWeights) -> LossParts {
        let m = y_cls.nrows();
        let k = self.num_pairs();
        if m == 0 {
            return LossParts { total: 0.0, cls: 0.0, reg: 0.0 };
        }
        let slots = (m * k) as f64;
        let mut cls = 0.0;
        for (lp, y) in fwd.log_probs.rows().into_iter().zip(y_cls.rows()) {
            for j in 0..k {
                cls -= y[j] * lp[2 * j + 1] + (1.0 - y[j]) * lp[2 * j];
            }
        }
        cls /= slots;
        let reg = fwd
            .reg
            .iter()
            .zip(y_reg.iter())
            .map(|(&r, &y)| {
                let d = if weights.circular { circular_diff(r, y) } else { r - y };
                d * d
            })
            .sum::<f64>()
            / slots;
        LossParts {
            total: weights.xi_c * cls + weights.xi_r * reg,
            cls,
            reg,
        }
    }

    /// Gradients of `ι` for every layer, in [`layers`](Self::layers) order.
    pub fn backward(&self, fwd: &Forward, y_cls: &Array2<f64>, y_reg: &Array2<f64>, weights: LossWeights) -> Vec<Dense> {
        let m = y_cls.nrows();
        let k = self.num_pairs();
        let slots = (m * k).max(1) as f64;

        let mut d_cls = fwd.probs.clone();
        for (mut d, y) in d_cls.rows_mut().into_iter().zip(y_cls.rows()) {
            for j in 0..k {
                d[2 * j] -= 1.0 - y[j];
                d[2 * j + 1] -= y[j];
            }
        }
        d_cls *= weights.xi_c / slots;

        let mut d_reg = fwd.reg.clone();
        for (d, &y) in d_reg.iter_mut().zip(y_reg.iter()) {
            let r = *d;
            let diff = if weights.circular { circular_diff(r, y) } else { r - y };
            *d = weights.xi_r * 2.0 * diff / slots * r * (1.0 - r);
        }

        let top = fwd.activations.last().expect("input present");
        let g_cls = Dense {
            w: d_cls.t().dot(top),
            b: d_cls.sum_axis(Axis(0)),
        };
        let g_reg = Dense {
            w: d_reg.t().dot(top),
            b: d_reg.sum_axis(Axis(0)),
        };
        let mut d_act = d_cls.dot(&self.cls.w) + d_reg.dot(&self.reg.w);

        let mut trunk_grads = Vec::with_capacity(self.trunk.len());
        for (i, layer) in self.trunk.iter().enumerate().rev() {
            let out = &fwd.activations[i + 1];
            let d_z = d_act * &out.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            let input = &fwd.activations[i];
            trunk_grads.push(Dense {
                w: d_z.t().dot(input),
                b: d_z.sum_axis(Axis(0)),
            });
            d_act = d_z.dot(&layer.w);
        }
        trunk_grads.reverse();
        trunk_grads.push(g_cls);
        trunk_grads.push(g_reg);
        trunk_grads
    }
}

/// Largest relative discrepancy between analytic gradients and central finite
/// differences of step `h`, over every parameter. Each entry's error is
/// `|a − n| / max(|a| + |n|, floor)`.
pub fn gradient_check(
    net: &MtlNet,
    x: &Array2<f64>,
    y_cls: &Array2<f64>,
    y_reg: &Array2<f64>,
    weights: LossWeights,
    h: f64,
    floor: f64,
) -> f64 {
    let analytic = net.backward(&net.forward(x), y_cls, y_reg, weights);
    let mut probe = net.clone();
    let loss = |n: &MtlNet| n.loss(&n.forward(x), y_cls, y_reg, weights).total;
    let mut worst: f64 = 0.0;
    for (li, grad) in analytic.iter().enumerate() {
        for idx in 0..grad.w.len() {
            let (r, c) = (idx / grad.w.ncols(), idx % grad.w.ncols());
            let orig = probe.layers()[li].w[[r, c]];
            probe.layers_mut()[li].w[[r, c]] = orig + h;
            let up = loss(&probe);
            probe.layers_mut()[li].w[[r, c]] = orig - h;
            let down = loss(&probe);
            probe.layers_mut()[li].w[[r, c]] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = grad.w[[r, c]];
            worst = worst.max((a - numeric).abs() / (a.abs() + numeric.abs()).max(floor));
        }
        for j in 0..grad.b.len() {
            let orig = probe.layers()[li].b[j];
            probe.layers_mut()[li].b[j] = orig + h;
            let up = loss(&probe);
            probe.layers_mut()[li].b[j] = orig - h;
            let down = loss(&probe);
            probe.layers_mut()[li].b[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = grad.b[j];
            worst = worst.max((a - numeric).abs() / (a.abs() + numeric.abs()).max(floor));
        }
    }
    worst
}
