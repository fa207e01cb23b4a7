//! Input features for one instance.
//!
//! Per pair: direct rate, rates of an aligned group of each admissible size (using the
//! pair's mean per-element cascade amplitude), cos/sin of the aligning phase at each
//! possible group start, UAV x and user x. Then globals `N`, `K` and a one-hot `L_max`.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use crate::channel::{ChannelRealization, Complex, Geometry};
use crate::system::RadioConfig;

/// Element indices where some admissible group can start.
pub fn group_starts(radio: &RadioConfig) -> Vec<usize> {
    let mut starts = BTreeSet::new();
    for l in radio.admissible_group_counts() {
        let size = radio.num_elements / l;
        starts.extend((0..l).map(|i| i * size));
    }
    if starts.is_empty() {
        starts.insert(0);
    }
    starts.into_iter().collect()
}

/// `Σ |h_n||g_n|` with independent lanes so the loop vectorizes.
fn cascade_amplitude_sum(h: &[Complex], g: &[Complex]) -> f64 {
    let mut lanes = [0.0f64; 4];
    let (hc, gc) = (h.chunks_exact(4), g.chunks_exact(4));
    let tail: f64 = hc
        .remainder()
        .iter()
        .zip(gc.remainder())
        .map(|(a, b)| (a.norm_sqr() * b.norm_sqr()).sqrt())
        .sum();
    for (a, b) in hc.zip(gc) {
        for l in 0..4 {
            lanes[l] += (a[l].norm_sqr() * b[l].norm_sqr()).sqrt();
        }
    }
    lanes.iter().sum::<f64>() + tail
}

pub fn feature_dim(radio: &RadioConfig) -> usize {
    let per_pair = 1 + radio.admissible_group_counts().len() + 2 * group_starts(radio).len() + 2;
    radio.num_pairs * per_pair + 2 + radio.num_pairs + 1
}

pub fn features(geometry: &Geometry, channels: &ChannelRealization, radio: &RadioConfig) -> Vec<f64> {
    let n = channels.num_elements();
    let k = channels.num_pairs();
    let snr_scale = radio.tx_power_w / radio.noise_power_w;
    let counts = radio.admissible_group_counts();
    let starts = group_starts(radio);
    let mut out = Vec::with_capacity(feature_dim(radio));
    for pair in 0..k {
        let pc = channels.pair(pair);
        let d = pc.direct.norm();
        out.push((1.0 + snr_scale * d * d).log2());
        let mean_amp = cascade_amplitude_sum(pc.ris_to_user, pc.uav_to_ris) / n as f64;
        for &l in &counts {
            let amp = d + mean_amp * (n / l) as f64;
            out.push((1.0 + snr_scale * amp * amp).log2());
        }
        let reference = pc.direct.arg();
        for &s in &starts {
            let theta = (reference - pc.ris_to_user[s].arg() - pc.uav_to_ris[s].arg()).rem_euclid(TAU);
            out.push(theta.cos());
            out.push(theta.sin());
        }
        out.push(geometry.uav_positions[pair][0]);
        out.push(geometry.user_positions[pair][0]);
    }
    out.push(n as f64);
    out.push(k as f64);
    out.extend((0..=k).map(|l| if l == radio.max_groups { 1.0 } else { 0.0 }));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::realize;
    use crate::scenario::Scenario;

    #[test]
    fn dimension_matches_layout() {
        let mut s = Scenario::default();
        s.geometry.num_pairs = 2;
        let r = s.resolve().unwrap();
        assert_eq!(group_starts(&r.radio), vec![0, 256]);
        let ch = realize(&r.geometry, &r.fading, 0).unwrap();
        let f = features(&r.geometry, &ch, &r.radio);
        assert_eq!(f.len(), feature_dim(&r.radio));
        // 2 pairs × (1 + 2 + 4 + 2) + N, K + one-hot over 0..=2
        assert_eq!(f.len(), 23);
        assert!(f.iter().all(|v| v.is_finite()));
        assert_eq!(&f[18..], &[512.0, 2.0, 0.0, 0.0, 1.0]);
        assert_eq!(f[7], 20.0);
        assert_eq!(f[8], 10.0);
    }

    #[test]
    fn starts_cover_every_group() {
        let mut s = Scenario::default();
        s.geometry.num_pairs = 6;
        s.geometry.ris_rows = 4;
        s.geometry.ris_cols = 6;
        let r = s.resolve().unwrap();
        // admissible L for N = 24: 1, 2, 3, 4, 6
        assert_eq!(group_starts(&r.radio), vec![0, 4, 6, 8, 12, 16, 18, 20]);
    }
}
