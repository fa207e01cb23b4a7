//! Joint RIS element allocation and phase configuration.
//!
//! For a fixed allocation the phases have a closed form (align every reflected term
//! with the direct path), so the search runs over decision vectors `F` only. Groups
//! are contiguous blocks of `N/L` elements handed to the flagged pairs in ascending
//! pair order.

use std::cmp::Reverse;
use std::collections::HashMap;
use std::f64::consts::TAU;
use std::ops::Range;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, Complex, PairChannel};
use crate::error::{Error, Result};
use crate::system::{self, group_elements, PowerConfig, RadioConfig, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseMode {
    /// One phase per element.
    #[default]
    PerElement,
    /// One phase for the whole group, taken from the group's first element.
    PerGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Exhaustive,
    Alternating,
    ClosedFormAllRis,
    ClosedFormNoRis,
    Mtl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub phase_mode: PhaseMode,
    pub parallel: bool,
    /// Objectives closer than this (bits/s) are treated as tied.
    pub tie_quantum_bps: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            phase_mode: PhaseMode::PerElement,
            parallel: false,
            tie_quantum_bps: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub best: Strategy,
    pub objective: f64,
    pub evaluated: usize,
    pub iterations: usize,
    pub elapsed_s: f64,
    pub method: Method,
    /// Objective after each completed iteration, starting with the initial point.
    pub history: Vec<f64>,
    /// Some assisted pair had a zero direct gain; its phases align the reflected
    /// terms with each other.
    pub degenerate_direct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationCandidate {
    pub decision: Vec<u8>,
    pub groups: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSolution {
    pub phases: Vec<f64>,
    pub direct_was_zero: bool,
}

pub fn wrap_phase(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Phases maximizing `|ℏ + Σ_n e^{jθ_n} h_n g_n|`.
pub fn optimal_phases(
    direct: Complex,
    uav_to_ris: &[Complex],
    ris_to_user: &[Complex],
    mode: PhaseMode,
) -> Result<PhaseSolution> {
    if uav_to_ris.len() != ris_to_user.len() {
        return Err(Error::domain(format!(
            "g has {} entries but h has {}",
            uav_to_ris.len(),
            ris_to_user.len()
        )));
    }
    let direct_was_zero = direct.norm_sqr() == 0.0;
    let reference = if direct_was_zero { 0.0 } else { direct.arg() };
    let phases = match mode {
        PhaseMode::PerElement => uav_to_ris
            .iter()
            .zip(ris_to_user)
            .map(|(g, h)| wrap_phase(reference - h.arg() - g.arg()))
            .collect(),
        PhaseMode::PerGroup => match (uav_to_ris.first(), ris_to_user.first()) {
            (Some(g), Some(h)) => vec![wrap_phase(reference - h.arg() - g.arg()); uav_to_ris.len()],
            _ => Vec::new(),
        },
    };
    Ok(PhaseSolution {
        phases,
        direct_was_zero,
    })
}

fn pair_phases(pc: &PairChannel<'_>, mode: PhaseMode) -> PhaseSolution {
    optimal_phases(pc.direct, pc.uav_to_ris, pc.ris_to_user, mode)
        .expect("pair channel slices share a length")
}

/// Every `F ∈ {0,1}^K` with `ΣF ≤ L_max`, in lexicographic order (`f_1` most significant).
pub fn enumerate_allocations(num_pairs: usize, max_groups: usize) -> Vec<AllocationCandidate> {
    assert!(num_pairs >= 1 && num_pairs < 64, "K must be in 1..64");
    (0u64..1 << num_pairs)
        .filter(|bits| bits.count_ones() as usize <= max_groups)
        .map(|bits| {
            let decision: Vec<u8> = (0..num_pairs)
                .map(|i| ((bits >> (num_pairs - 1 - i)) & 1) as u8)
                .collect();
            AllocationCandidate {
                groups: bits.count_ones() as usize,
                decision,
            }
        })
        .collect()
}

/// Group ids `1..=L` handed to flagged pairs in ascending pair order.
pub fn occupation_from_decision(decision: &[u8]) -> Vec<usize> {
    let mut next = 0;
    decision
        .iter()
        .map(|&f| {
            if f != 0 {
                next += 1;
                next
            } else {
                0
            }
        })
        .collect()
}

/// Strategy for `decision` with closed-form phases on every assisted pair.
pub fn strategy_for_decision(
    channels: &ChannelRealization,
    decision: &[u8],
    mode: PhaseMode,
) -> (Strategy, bool) {
    let occupation = occupation_from_decision(decision);
    let groups = occupation.iter().filter(|&&u| u != 0).count();
    let n = channels.num_elements();
    let mut degenerate = false;
    let phases = occupation
        .iter()
        .enumerate()
        .map(|(k, &u)| {
            (u != 0).then(|| {
                let sol = pair_phases(&channels.pair_elements(k, group_elements(u, groups, n)), mode);
                degenerate |= sol.direct_was_zero;
                sol.phases
            })
        })
        .collect();
    (
        Strategy {
            groups,
            occupation,
            phases,
        },
        degenerate,
    )
}

fn check_shapes(channels: &ChannelRealization, radio: &RadioConfig) -> Result<()> {
    radio.validate()?;
    if channels.num_pairs() != radio.num_pairs || channels.num_elements() != radio.num_elements {
        return Err(Error::domain(format!(
            "channels are {}x{}, radio expects {}x{}",
            channels.num_pairs(),
            channels.num_elements(),
            radio.num_pairs,
            radio.num_elements
        )));
    }
    Ok(())
}

/// Total order used to pick a winner: larger (quantized) objective, then fewer groups,
/// then lexicographically smaller `F`.
type RankKey = (i64, Reverse<usize>, Reverse<Vec<u8>>);

fn rank_key(objective: f64, decision: &[u8], quantum: f64) -> RankKey {
    let groups = decision.iter().filter(|&&f| f != 0).count();
    (
        (objective / quantum).round() as i64,
        Reverse(groups),
        Reverse(decision.to_vec()),
    )
}

fn power_ok(decision: &[u8], radio: &RadioConfig, power: &PowerConfig) -> bool {
    let occupation = occupation_from_decision(decision);
    system::overall_power(&occupation, power, radio.tx_power_w) <= power.max_total_w
}

/// Exhaustive search over all admissible decision vectors.
pub fn solve_exhaustive(
    channels: &ChannelRealization,
    radio: &RadioConfig,
    power: &PowerConfig,
    config: &SolverConfig,
) -> Result<SolveReport> {
    let start = Instant::now();
    check_shapes(channels, radio)?;
    let candidates: Vec<AllocationCandidate> = enumerate_allocations(radio.num_pairs, radio.max_groups)
        .into_iter()
        .filter(|c| radio.is_admissible(c.groups))
        .filter(|c| power_ok(&c.decision, radio, power))
        .collect();
    if candidates.is_empty() {
        return Err(Error::NoFeasibleCandidate);
    }
    let evaluate = |c: &AllocationCandidate| {
        let (strategy, degenerate) = strategy_for_decision(channels, &c.decision, config.phase_mode);
        let objective = system::capacity_unchecked(channels, &strategy, radio, power).r_overall;
        (rank_key(objective, &c.decision, config.tie_quantum_bps), objective, strategy, degenerate)
    };
    let best = if config.parallel {
        candidates
            .par_iter()
            .map(evaluate)
            .max_by(|a, b| a.0.cmp(&b.0))
    } else {
        candidates.iter().map(evaluate).max_by(|a, b| a.0.cmp(&b.0))
    }
    .expect("nonempty candidate set");
    let (_, objective, strategy, degenerate_direct) = best;
    Ok(SolveReport {
        best: strategy,
        objective,
        evaluated: candidates.len(),
        iterations: 1,
        elapsed_s: start.elapsed().as_secs_f64(),
        method: Method::Exhaustive,
        history: vec![objective],
        degenerate_direct,
    })
}

/// Phases selected so far, by pair and element range.
struct PhaseBook {
    mode: PhaseMode,
    entries: HashMap<(usize, usize, usize), Vec<f64>>,
}

impl PhaseBook {
    fn strategy(&self, channels: &ChannelRealization, decision: &[u8]) -> Strategy {
        let occupation = occupation_from_decision(decision);
        let groups = occupation.iter().filter(|&&u| u != 0).count();
        let n = channels.num_elements();
        let phases = occupation
            .iter()
            .enumerate()
            .map(|(k, &u)| {
                (u != 0).then(|| {
                    let r = group_elements(u, groups, n);
                    match self.entries.get(&(k, r.start, r.end)) {
                        Some(p) => p.clone(),
                        None => pair_phases(&channels.pair_elements(k, r), self.mode).phases,
                    }
                })
            })
            .collect();
        Strategy {
            groups,
            occupation,
            phases,
        }
    }

    fn record(&mut self, strategy: &Strategy, n: usize) {
        self.entries.clear();
        for k in 0..strategy.occupation.len() {
            if let (Some(r), Some(p)) = (strategy.element_range(k, n), &strategy.phases[k]) {
                self.entries.insert((k, r.start, r.end), p.clone());
            }
        }
    }
}

fn neighbors(decision: &[u8], radio: &RadioConfig) -> Vec<Vec<u8>> {
    let k = decision.len();
    let mut out = Vec::new();
    let mut push = |f: Vec<u8>| {
        let l = f.iter().filter(|&&x| x != 0).count();
        if radio.is_admissible(l) && !out.contains(&f) {
            out.push(f);
        }
    };
    for i in 0..k {
        let mut f = decision.to_vec();
        f[i] ^= 1;
        let single_ok = radio.is_admissible(f.iter().filter(|&&x| x != 0).count());
        push(f.clone());
        // An inadmissible group count is repaired by a second flip in the same direction.
        if !single_ok {
            for j in i + 1..k {
                if f[j] == f[i] ^ 1 {
                    let mut g = f.clone();
                    g[j] ^= 1;
                    push(g);
                }
            }
        }
    }
    // Swaps keep L fixed and move one group to another pair.
    for i in 0..k {
        for j in 0..k {
            if decision[i] == 1 && decision[j] == 0 {
                let mut f = decision.to_vec();
                f[i] = 0;
                f[j] = 1;
                push(f);
            }
        }
    }
    out
}

fn repair(decision: &[u8], radio: &RadioConfig) -> Vec<u8> {
    let mut f = decision.to_vec();
    while !radio.is_admissible(f.iter().filter(|&&x| x != 0).count()) {
        let last = f.iter().rposition(|&x| x != 0).expect("L = 0 is always admissible");
        f[last] = 0;
    }
    f
}

/// Alternate between a flip/swap hill-climb on `F` with phases held fixed and a
/// closed-form phase update with `F` held fixed.
///
/// `tol` is relative: the loop stops once an iteration improves the objective by less
/// than `tol · objective`. Starts from `start` (repaired to an admissible group count)
/// or from the direct-only allocation.
pub fn solve_alternating(
    channels: &ChannelRealization,
    radio: &RadioConfig,
    power: &PowerConfig,
    config: &SolverConfig,
    max_iter: usize,
    tol: f64,
    start: Option<&[u8]>,
) -> Result<SolveReport> {
    let timer = Instant::now();
    check_shapes(channels, radio)?;
    if max_iter == 0 {
        return Err(Error::domain("alternating solver needs max_iter >= 1"));
    }
    let n = radio.num_elements;
    let mut decision = match start {
        Some(f) if f.len() == radio.num_pairs => repair(f, radio),
        Some(f) => {
            return Err(Error::domain(format!(
                "start vector has {} entries, expected {}",
                f.len(),
                radio.num_pairs
            )))
        }
        None => vec![0; radio.num_pairs],
    };
    if !power_ok(&decision, radio, power) {
        decision = vec![0; radio.num_pairs];
        if !power_ok(&decision, radio, power) {
            return Err(Error::NoFeasibleCandidate);
        }
    }
    let objective_of = |s: &Strategy| system::capacity_unchecked(channels, s, radio, power).r_overall;

    let mut book = PhaseBook {
        mode: config.phase_mode,
        entries: HashMap::new(),
    };
    let (mut current, mut degenerate) = strategy_for_decision(channels, &decision, config.phase_mode);
    book.record(&current, n);
    let mut objective = objective_of(&current);
    let mut history = vec![objective];
    let mut evaluated = 1;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let before = objective;

        // Allocation step with the current phases.
        let mut best: Option<(RankKey, f64, Vec<u8>, Strategy)> = None;
        for f in neighbors(&decision, radio) {
            if !power_ok(&f, radio, power) {
                continue;
            }
            evaluated += 1;
            let s = book.strategy(channels, &f);
            let obj = objective_of(&s);
            let key = rank_key(obj, &f, config.tie_quantum_bps);
            if best.as_ref().map_or(true, |b| key > b.0) {
                best = Some((key, obj, f, s));
            }
        }
        if let Some((key, obj, f, s)) = best {
            if key > rank_key(objective, &decision, config.tie_quantum_bps) && obj > objective {
                decision = f;
                current = s;
                objective = obj;
            }
        }

        // Phase step with the allocation fixed.
        let (proposal, deg) = strategy_for_decision(channels, &decision, config.phase_mode);
        let proposed = objective_of(&proposal);
        if proposed >= objective {
            current = proposal;
            objective = proposed;
            degenerate = deg;
        }
        book.record(&current, n);
        history.push(objective);

        if objective - before < tol * objective.abs() {
            break;
        }
    }

    Ok(SolveReport {
        best: current,
        objective,
        evaluated,
        iterations,
        elapsed_s: timer.elapsed().as_secs_f64(),
        method: Method::Alternating,
        history,
        degenerate_direct: degenerate,
    })
}

fn closed_form_noise(radio: &RadioConfig) -> f64 {
    if radio.noise_scales_with_bandwidth {
        radio.noise_power_w / radio.num_pairs as f64
    } else {
        radio.noise_power_w
    }
}

fn aligned_sum(pc: &PairChannel<'_>) -> f64 {
    pc.ris_to_user
        .iter()
        .zip(pc.uav_to_ris)
        .map(|(h, g)| h.norm() * g.norm())
        .sum()
}

/// Capacity with every pair assisted by its own `N/K` group and aligned phases.
pub fn closed_form_all_ris(channels: &ChannelRealization, radio: &RadioConfig) -> Result<f64> {
    check_shapes(channels, radio)?;
    let k = radio.num_pairs;
    if radio.num_elements % k != 0 {
        return Err(Error::domain(format!("K = {k} does not divide N = {}", radio.num_elements)));
    }
    let size = radio.num_elements / k;
    let noise = closed_form_noise(radio);
    let total: f64 = (0..k)
        .map(|i| {
            let pc = channels.pair_elements(i, i * size..(i + 1) * size);
            let amp = pc.direct.norm() + aligned_sum(&pc);
            (1.0 + radio.tx_power_w * amp * amp / noise).log2()
        })
        .sum();
    Ok(radio.bandwidth_hz / k as f64 * total)
}

/// Capacity with every pair on its direct link.
pub fn closed_form_no_ris(channels: &ChannelRealization, radio: &RadioConfig) -> Result<f64> {
    check_shapes(channels, radio)?;
    let k = radio.num_pairs;
    let noise = closed_form_noise(radio);
    let total: f64 = channels
        .direct
        .iter()
        .map(|d| (1.0 + d.norm_sqr() * radio.tx_power_w / noise).log2())
        .sum();
    Ok(radio.bandwidth_hz / k as f64 * total)
}

/// Report wrapper for the closed forms, reconstructing the matching strategy.
pub fn solve_closed_form(
    channels: &ChannelRealization,
    radio: &RadioConfig,
    method: Method,
) -> Result<SolveReport> {
    let timer = Instant::now();
    let (objective, decision) = match method {
        Method::ClosedFormAllRis => (closed_form_all_ris(channels, radio)?, vec![1; radio.num_pairs]),
        Method::ClosedFormNoRis => (closed_form_no_ris(channels, radio)?, vec![0; radio.num_pairs]),
        other => return Err(Error::domain(format!("{other:?} is not a closed form"))),
    };
    let (best, degenerate_direct) = strategy_for_decision(channels, &decision, PhaseMode::PerElement);
    Ok(SolveReport {
        best,
        objective,
        evaluated: 1,
        iterations: 1,
        elapsed_s: timer.elapsed().as_secs_f64(),
        method,
        history: vec![objective],
        degenerate_direct,
    })
}

/// Transmit power `ρ²` needed for `target_snr` under the given phases. This is one
/// reading of a power-control rule; it is not part of the capacity objective.
pub fn required_tx_power(pc: &PairChannel<'_>, phases: Option<&[f64]>, target_snr: f64, noise_power_w: f64) -> f64 {
    let total = match phases {
        Some(p) => pc.direct + system::reflected_sum(pc, p),
        None => pc.direct,
    };
    target_snr * noise_power_w / total.norm_sqr()
}

/// Same allocation as `strategy`, phases drawn uniformly from `[0, 2π)`.
pub fn randomize_phases<R: Rng + ?Sized>(strategy: &Strategy, rng: &mut R) -> Strategy {
    let phases = strategy
        .phases
        .iter()
        .map(|p| p.as_ref().map(|v| v.iter().map(|_| rng.gen_range(0.0..TAU)).collect()))
        .collect();
    Strategy {
        phases,
        ..strategy.clone()
    }
}

/// `Σ_{l admissible} C(K, l)` plus the zero vector.
pub fn admissible_candidate_count(radio: &RadioConfig) -> usize {
    let k = radio.num_pairs;
    let binom = |n: usize, r: usize| -> usize {
        (0..r).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
    };
    1 + radio
        .admissible_group_counts()
        .into_iter()
        .map(|l| binom(k, l))
        .sum::<usize>()
}

/// Element range of group `l` (1-based) among `groups` groups.
pub fn group_range(group: usize, groups: usize, num_elements: usize) -> Range<usize> {
    group_elements(group, groups, num_elements)
}
