//! Occupation vectors, bandwidth shares, SNR, capacity and power.

use std::f64::consts::TAU;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::channel::{Complex, ChannelRealization, PairChannel};
use crate::error::{Constraint, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig {
    pub num_pairs: usize,
    pub num_elements: usize,
    pub num_subcarriers: usize,
    pub bandwidth_hz: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub tx_power_w: f64,
    pub noise_power_w: f64,
    pub max_groups: usize,
    /// Scale each pair's noise by its bandwidth share instead of using the full-band
    /// `σ²` for everyone.
    pub noise_scales_with_bandwidth: bool,
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_pairs == 0 {
            return Err(Error::config("radio.num_pairs", "must be >= 1"));
        }
        if self.num_elements == 0 {
            return Err(Error::config("radio.num_elements", "must be >= 1"));
        }
        if self.num_subcarriers < self.num_pairs {
            return Err(Error::config(
                "radio.num_subcarriers",
                format!("{} sub-carriers cannot host {} pairs", self.num_subcarriers, self.num_pairs),
            ));
        }
        if !(0.0..=1.0).contains(&self.omega1) || !(0.0..=1.0).contains(&self.omega2) {
            return Err(Error::config("radio.omega1", "bandwidth weights must lie in [0, 1]"));
        }
        if (self.omega1 + self.omega2 - 1.0).abs() > 1e-12 {
            return Err(Error::config("radio.omega2", "omega1 + omega2 must equal 1"));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::config("radio.bandwidth_hz", "must be positive"));
        }
        if !(self.tx_power_w >= 0.0) {
            return Err(Error::config("radio.tx_power_w", "must be >= 0"));
        }
        if !(self.noise_power_w > 0.0) {
            return Err(Error::config("radio.noise_power_w", "must be positive"));
        }
        if self.max_groups > self.num_pairs.min(self.num_elements) {
            return Err(Error::config(
                "radio.max_groups",
                format!("L_max = {} exceeds min(K, N)", self.max_groups),
            ));
        }
        Ok(())
    }

    /// Group counts `L ≥ 1` that divide `N` and respect `L_max`.
    pub fn admissible_group_counts(&self) -> Vec<usize> {
        (1..=self.max_groups.min(self.num_pairs))
            .filter(|l| self.num_elements % l == 0)
            .collect()
    }

    pub fn is_admissible(&self, groups: usize) -> bool {
        groups == 0
            || (groups <= self.max_groups.min(self.num_pairs) && self.num_elements % groups == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    /// `μ = 1/ν`, inverse power-amplifier efficiency.
    pub amp_inv_efficiency: f64,
    pub uav_static_w: f64,
    pub user_static_ris_w: f64,
    pub user_static_direct_w: f64,
    pub ris_total_w: f64,
    pub max_total_w: f64,
}

impl PowerConfig {
    /// Defaults with the RIS drawing 1 mW per element.
    pub fn for_elements(num_elements: usize) -> Self {
        Self {
            amp_inv_efficiency: 1.25,
            uav_static_w: 0.5,
            user_static_ris_w: 0.1,
            user_static_direct_w: 0.05,
            ris_total_w: num_elements as f64 * 1e-3,
            max_total_w: 100.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amp_inv_efficiency >= 1.0) {
            return Err(Error::config("power.amp_inv_efficiency", "must be >= 1"));
        }
        for (path, v) in [
            ("power.uav_static_w", self.uav_static_w),
            ("power.user_static_ris_w", self.user_static_ris_w),
            ("power.user_static_direct_w", self.user_static_direct_w),
            ("power.ris_total_w", self.ris_total_w),
            ("power.max_total_w", self.max_total_w),
        ] {
            if !(v >= 0.0) {
                return Err(Error::config(path, "must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Allocation `U` plus phase matrix `Ψ` for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    /// Announced number of RIS groups `L`.
    pub groups: usize,
    /// `u_k`: 0 for direct-only, otherwise the 1-based group id.
    pub occupation: Vec<usize>,
    /// Phase vector of length `N/L` for each assisted pair, `None` otherwise.
    pub phases: Vec<Option<Vec<f64>>>,
}

impl Strategy {
    pub fn direct_only(num_pairs: usize) -> Self {
        Self {
            groups: 0,
            occupation: vec![0; num_pairs],
            phases: vec![None; num_pairs],
        }
    }

    pub fn decision(&self) -> Vec<u8> {
        decision_vector(&self.occupation)
    }

    /// Element range of pair `k`'s group on an `n`-element surface.
    pub fn element_range(&self, k: usize, n: usize) -> Option<Range<usize>> {
        match self.occupation[k] {
            0 => None,
            l => Some(group_elements(l, self.groups, n)),
        }
    }

    pub fn validate(&self, radio: &RadioConfig, power: &PowerConfig) -> Result<()> {
        let k = radio.num_pairs;
        if self.occupation.len() != k || self.phases.len() != k {
            return Err(Error::infeasible(
                Constraint::Structure,
                format!("strategy covers {} pairs, expected {k}", self.occupation.len()),
            ));
        }
        let l = self.groups;
        if let Some(pos) = self.occupation.iter().position(|&u| u > l) {
            return Err(Error::infeasible(
                Constraint::GroupRange,
                format!("pair {pos} uses group {} but L = {l}", self.occupation[pos]),
            ));
        }
        let mut seen = vec![false; l + 1];
        for (pos, &u) in self.occupation.iter().enumerate() {
            if u != 0 {
                if seen[u] {
                    return Err(Error::infeasible(
                        Constraint::DistinctGroups,
                        format!("group {u} assigned twice (again at pair {pos})"),
                    ));
                }
                seen[u] = true;
            }
        }
        let assisted = self.occupation.iter().filter(|&&u| u != 0).count();
        if assisted != l {
            return Err(Error::infeasible(
                Constraint::GroupCount,
                format!("{assisted} assisted pairs but L = {l}"),
            ));
        }
        if l > radio.max_groups {
            return Err(Error::infeasible(
                Constraint::MaxGroups,
                format!("L = {l} exceeds L_max = {}", radio.max_groups),
            ));
        }
        if l > 0 && radio.num_elements % l != 0 {
            return Err(Error::infeasible(
                Constraint::Structure,
                format!("L = {l} does not divide N = {}", radio.num_elements),
            ));
        }
        for (pos, (u, ph)) in self.occupation.iter().zip(&self.phases).enumerate() {
            match (u, ph) {
                (0, None) => {}
                (0, Some(_)) => {
                    return Err(Error::infeasible(
                        Constraint::Structure,
                        format!("direct-only pair {pos} carries phases"),
                    ))
                }
                (_, None) => {
                    return Err(Error::infeasible(
                        Constraint::Structure,
                        format!("assisted pair {pos} has no phases"),
                    ))
                }
                (_, Some(p)) => {
                    let want = radio.num_elements / l;
                    if p.len() != want {
                        return Err(Error::infeasible(
                            Constraint::Structure,
                            format!("pair {pos} has {} phases, group size is {want}", p.len()),
                        ));
                    }
                    if let Some(bad) = p.iter().find(|t| !(t.is_finite() && **t >= 0.0 && **t < TAU)) {
                        return Err(Error::infeasible(
                            Constraint::PhaseRange,
                            format!("pair {pos} phase {bad} outside [0, 2π)"),
                        ));
                    }
                }
            }
        }
        let p_o = overall_power(&self.occupation, power, radio.tx_power_w);
        if p_o > power.max_total_w {
            return Err(Error::infeasible(
                Constraint::PowerBudget,
                format!("P_o = {p_o} W exceeds P_max = {} W", power.max_total_w),
            ));
        }
        Ok(())
    }
}

/// Elements `[(l−1)·N/L, l·N/L)` of group `l` (1-based).
pub fn group_elements(group: usize, groups: usize, num_elements: usize) -> Range<usize> {
    let size = num_elements / groups;
    (group - 1) * size..group * size
}

/// `f(u_k)`: 1 when the pair is RIS-assisted.
pub fn decision_vector(occupation: &[usize]) -> Vec<u8> {
    occupation.iter().map(|&u| u8::from(u != 0)).collect()
}

/// `p_k`: `1/L` for assisted pairs, else 0.
pub fn element_share(occupation: &[usize]) -> Vec<f64> {
    let l = occupation.iter().filter(|&&u| u != 0).count();
    occupation
        .iter()
        .map(|&u| if u != 0 { 1.0 / l as f64 } else { 0.0 })
        .collect()
}

/// Bandwidth weights after the all-assisted / none-assisted reassignment.
pub fn effective_omegas(groups: usize, num_pairs: usize, omega1: f64, omega2: f64) -> (f64, f64) {
    if groups == 0 {
        (0.0, 1.0)
    } else if groups == num_pairs {
        (1.0, 0.0)
    } else {
        (omega1, omega2)
    }
}

/// `c_k`: `p_k·ω1` for assisted pairs, `ω2/(K−L)` for the rest.
pub fn bandwidth_share(occupation: &[usize], omega1: f64, omega2: f64) -> Vec<f64> {
    let k = occupation.len();
    let l = occupation.iter().filter(|&&u| u != 0).count();
    let (w1, w2) = effective_omegas(l, k, omega1, omega2);
    let p = element_share(occupation);
    occupation
        .iter()
        .zip(p)
        .map(|(&u, pk)| if u != 0 { pk * w1 } else { w2 / (k - l) as f64 })
        .collect()
}

/// `Σ_n e^{jθ_n} h_n g_n`.
pub fn reflected_sum(pc: &PairChannel<'_>, phases: &[f64]) -> Complex {
    pc.ris_to_user
        .iter()
        .zip(pc.uav_to_ris)
        .zip(phases)
        .map(|((h, g), &t)| Complex::from_polar(1.0, t) * h * g)
        .sum()
}

pub fn snr(pc: &PairChannel<'_>, phases: Option<&[f64]>, tx_power_w: f64, noise_power_w: f64) -> Result<f64> {
    if !(noise_power_w > 0.0) {
        return Err(Error::domain(format!("noise power must be positive, got {noise_power_w}")));
    }
    let total = match phases {
        Some(p) => {
            if p.len() != pc.ris_to_user.len() || p.len() != pc.uav_to_ris.len() {
                return Err(Error::domain(format!(
                    "{} phases for {} reflected elements",
                    p.len(),
                    pc.ris_to_user.len()
                )));
            }
            pc.direct + reflected_sum(pc, p)
        }
        None => pc.direct,
    };
    Ok(total.norm_sqr() * tx_power_w / noise_power_w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub snr_per_pair: Vec<f64>,
    pub rate_per_pair: Vec<f64>,
    pub r_ris: f64,
    pub r_dl: f64,
    pub r_overall: f64,
    pub p_overall: f64,
    /// Throughput after negotiation overhead; equals `r_overall` until a frame
    /// protocol applies its overhead.
    pub s_overall: f64,
}

/// SNR, per-pair rates and the RIS / direct capacity split for a feasible strategy.
pub fn overall_capacity(
    channels: &ChannelRealization,
    strategy: &Strategy,
    radio: &RadioConfig,
    power: &PowerConfig,
) -> Result<Metrics> {
    if channels.num_pairs() != radio.num_pairs || channels.num_elements() != radio.num_elements {
        return Err(Error::infeasible(
            Constraint::Structure,
            format!(
                "channels are {}x{}, radio expects {}x{}",
                channels.num_pairs(),
                channels.num_elements(),
                radio.num_pairs,
                radio.num_elements
            ),
        ));
    }
    strategy.validate(radio, power)?;
    Ok(capacity_unchecked(channels, strategy, radio, power))
}

/// [`overall_capacity`] without re-validating; the caller guarantees feasibility.
pub(crate) fn capacity_unchecked(
    channels: &ChannelRealization,
    strategy: &Strategy,
    radio: &RadioConfig,
    power: &PowerConfig,
) -> Metrics {
    let n = radio.num_elements;
    let shares = bandwidth_share(&strategy.occupation, radio.omega1, radio.omega2);
    let mut snrs = Vec::with_capacity(radio.num_pairs);
    let mut rates = Vec::with_capacity(radio.num_pairs);
    let (mut r_ris, mut r_dl) = (0.0, 0.0);
    for k in 0..radio.num_pairs {
        let noise = if radio.noise_scales_with_bandwidth {
            radio.noise_power_w * shares[k]
        } else {
            radio.noise_power_w
        };
        let s = match strategy.element_range(k, n) {
            Some(range) => {
                let pc = channels.pair_elements(k, range);
                let phases = strategy.phases[k].as_deref();
                let total = pc.direct + reflected_sum(&pc, phases.unwrap_or(&[]));
                total.norm_sqr() * radio.tx_power_w / noise
            }
            None => channels.direct[k].norm_sqr() * radio.tx_power_w / noise,
        };
        let rate = shares[k] * radio.bandwidth_hz * (1.0 + s).log2();
        if strategy.occupation[k] != 0 {
            r_ris += rate;
        } else {
            r_dl += rate;
        }
        snrs.push(s);
        rates.push(rate);
    }
    let r_overall = r_ris + r_dl;
    Metrics {
        snr_per_pair: snrs,
        rate_per_pair: rates,
        r_ris,
        r_dl,
        r_overall,
        p_overall: overall_power(&strategy.occupation, power, radio.tx_power_w),
        s_overall: r_overall,
    }
}

/// `P_o = K·μ·ρ² + Σ_k (P_{k,U} + f(u_k)·P_{k,u} + (1−f(u_k))·P'_{k,u} + p_k·P_R)`.
pub fn overall_power(occupation: &[usize], power: &PowerConfig, tx_power_w: f64) -> f64 {
    let shares = element_share(occupation);
    let k = occupation.len() as f64;
    let statics: f64 = occupation
        .iter()
        .zip(&shares)
        .map(|(&u, &p)| {
            let user = if u != 0 {
                power.user_static_ris_w
            } else {
                power.user_static_direct_w
            };
            power.uav_static_w + user + p * power.ris_total_w
        })
        .sum();
    k * power.amp_inv_efficiency * tx_power_w + statics
}

/// `S = (1 − T_N/T_F)·R*`.
pub fn protocol_throughput(r_overall_star: f64, t_negotiation: f64, t_frame: f64) -> Result<f64> {
    if !(t_negotiation >= 0.0) || !(t_negotiation < t_frame) {
        return Err(Error::domain(format!(
            "negotiation time {t_negotiation} must lie in [0, T_F = {t_frame})"
        )));
    }
    Ok((1.0 - t_negotiation / t_frame) * r_overall_star)
}
