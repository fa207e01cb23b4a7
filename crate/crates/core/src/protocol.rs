//! Frame loop: mobility step, fresh channels, solve, negotiation overhead.

use std::ops::Range;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelRealization, Geometry, Point};
use crate::error::{Error, Result};
use crate::mtl::{self, MtlModel};
use crate::optimizer::{self, Method, SolveReport};
use crate::rng::{self, Stream};
use crate::scenario::Resolved;
use crate::system::{self, group_elements, Metrics, Strategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub frame_duration_s: f64,
    pub sync_duration_s: f64,
    pub estimation_duration_s: f64,
    pub optimization_duration_s: f64,
    pub num_frames: usize,
    /// Charge the measured solver wall-clock as the optimization time instead of
    /// `optimization_duration_s`.
    pub measured_optimization_time: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            frame_duration_s: 1e-3,
            sync_duration_s: 0.02e-3,
            estimation_duration_s: 0.05e-3,
            optimization_duration_s: 0.03e-3,
            num_frames: 10,
            measured_optimization_time: false,
        }
    }
}

impl ProtocolConfig {
    pub fn negotiation_s(&self) -> f64 {
        self.sync_duration_s + self.estimation_duration_s + self.optimization_duration_s
    }

    pub fn validate(&self) -> Result<()> {
        for (path, v) in [
            ("protocol.sync_duration_s", self.sync_duration_s),
            ("protocol.estimation_duration_s", self.estimation_duration_s),
            ("protocol.optimization_duration_s", self.optimization_duration_s),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(path, "must be finite and >= 0"));
            }
        }
        if !(self.frame_duration_s > 0.0 && self.frame_duration_s.is_finite()) {
            return Err(Error::config("protocol.frame_duration_s", "must be positive"));
        }
        if !(self.negotiation_s() < self.frame_duration_s) {
            return Err(Error::config(
                "protocol",
                format!(
                    "negotiation time {} s must be shorter than the frame {} s",
                    self.negotiation_s(),
                    self.frame_duration_s
                ),
            ));
        }
        Ok(())
    }
}

/// Constant velocities along `+x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilityConfig {
    pub uav_velocity: f64,
    pub user_velocity: f64,
    /// Time between frames; defaults to the frame duration.
    pub step_s: Option<f64>,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            uav_velocity: 25.0,
            user_velocity: 0.5,
            step_s: None,
        }
    }
}

impl MobilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.uav_velocity.is_finite() && self.user_velocity.is_finite()) {
            return Err(Error::config("mobility", "velocities must be finite"));
        }
        if let Some(dt) = self.step_s {
            if !(dt >= 0.0 && dt.is_finite()) {
                return Err(Error::config("mobility.step_s", "must be finite and >= 0"));
            }
        }
        Ok(())
    }

    pub fn stationary() -> Self {
        Self {
            uav_velocity: 0.0,
            user_velocity: 0.0,
            step_s: None,
        }
    }
}

pub fn step_mobility(geometry: &Geometry, mobility: &MobilityConfig, dt: f64) -> Result<Geometry> {
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(Error::domain(format!("time step {dt} must be finite and >= 0")));
    }
    let shift = |p: &Point, v: f64| [p[0] + v * dt, p[1], p[2]];
    Ok(Geometry {
        uav_positions: geometry.uav_positions.iter().map(|p| shift(p, mobility.uav_velocity)).collect(),
        user_positions: geometry.user_positions.iter().map(|p| shift(p, mobility.user_velocity)).collect(),
        ..geometry.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment {
    /// 1-based group id.
    pub group: usize,
    /// 0-based pair index.
    pub pair: usize,
    pub elements: Range<usize>,
}

/// Group `l` goes to the `l`-th flagged pair, covering elements `[(l−1)·N/L, l·N/L)`.
pub fn group_partition_of(
    decision: &[u8],
    num_elements: usize,
    max_groups: usize,
) -> Result<Vec<GroupAssignment>> {
    let flagged: Vec<usize> = decision
        .iter()
        .enumerate()
        .filter(|(_, &f)| f != 0)
        .map(|(k, _)| k)
        .collect();
    let l = flagged.len();
    if l > max_groups || (l > 0 && num_elements % l != 0) {
        return Err(Error::domain(format!(
            "{l} groups is not admissible for N = {num_elements}, L_max = {max_groups}"
        )));
    }
    Ok(flagged
        .into_iter()
        .enumerate()
        .map(|(i, pair)| GroupAssignment {
            group: i + 1,
            pair,
            elements: group_elements(i + 1, l, num_elements),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SolverChoice {
    #[default]
    Exhaustive,
    Alternating,
    Mtl,
    /// Every pair on its direct link.
    None,
    /// Alternating allocation with uniformly random phases.
    RandomPhase,
}

impl SolverChoice {
    pub fn label(self) -> &'static str {
        match self {
            SolverChoice::Exhaustive => "exhaustive",
            SolverChoice::Alternating => "alternating",
            SolverChoice::Mtl => "mtl",
            SolverChoice::None => "none",
            SolverChoice::RandomPhase => "random-phase",
        }
    }
}

/// A solver plus whatever state it needs.
#[derive(Debug, Clone, Copy)]
pub enum Solver<'a> {
    Exhaustive,
    Alternating,
    Mtl(&'a MtlModel),
    None,
    RandomPhase,
}

impl Solver<'_> {
    pub fn choice(&self) -> SolverChoice {
        match self {
            Solver::Exhaustive => SolverChoice::Exhaustive,
            Solver::Alternating => SolverChoice::Alternating,
            Solver::Mtl(_) => SolverChoice::Mtl,
            Solver::None => SolverChoice::None,
            Solver::RandomPhase => SolverChoice::RandomPhase,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub solver: SolverChoice,
    pub objective: f64,
    pub evaluated: usize,
    pub iterations: usize,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTrace {
    pub frame_index: usize,
    pub uav_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
    pub strategy: Strategy,
    pub metrics: Metrics,
    pub solver: SolverSummary,
    pub negotiation_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub frames: usize,
    pub mean_s_overall: f64,
    pub p10_s_overall: f64,
    pub p50_s_overall: f64,
    pub p90_s_overall: f64,
    pub mean_r_overall: f64,
    pub mean_p_overall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub frames: Vec<FrameTrace>,
    pub aggregate: Aggregate,
}

/// Linear-interpolated percentile of an ascending slice, `q ∈ [0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => 0.0,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

fn aggregate(frames: &[FrameTrace]) -> Aggregate {
    let n = frames.len();
    let mean = |f: &dyn Fn(&FrameTrace) -> f64| {
        if n == 0 {
            0.0
        } else {
            frames.iter().map(f).sum::<f64>() / n as f64
        }
    };
    let mut s: Vec<f64> = frames.iter().map(|f| f.metrics.s_overall).collect();
    s.sort_by(f64::total_cmp);
    Aggregate {
        frames: n,
        mean_s_overall: mean(&|f| f.metrics.s_overall),
        p10_s_overall: percentile(&s, 0.1),
        p50_s_overall: percentile(&s, 0.5),
        p90_s_overall: percentile(&s, 0.9),
        mean_r_overall: mean(&|f| f.metrics.r_overall),
        mean_p_overall: mean(&|f| f.metrics.p_overall),
    }
}

/// Solve one frame. Returns the strategy plus a report whose `objective` is the
/// capacity of that strategy.
pub fn solve_frame(
    scenario: &Resolved,
    geometry: &Geometry,
    channels: &ChannelRealization,
    solver: Solver<'_>,
    frame: usize,
) -> Result<SolveReport> {
    let cfg = scenario.optimizer.solver_config();
    let radio = &scenario.radio;
    let power = &scenario.power;
    match solver {
        Solver::Exhaustive => optimizer::solve_exhaustive(channels, radio, power, &cfg),
        Solver::Alternating => optimizer::solve_alternating(
            channels,
            radio,
            power,
            &cfg,
            scenario.optimizer.alternating_max_iter,
            scenario.optimizer.alternating_tol,
            None,
        ),
        Solver::None => {
            let start = Instant::now();
            let best = Strategy::direct_only(radio.num_pairs);
            let objective = system::overall_capacity(channels, &best, radio, power)?.r_overall;
            Ok(SolveReport {
                best,
                objective,
                evaluated: 1,
                iterations: 1,
                elapsed_s: start.elapsed().as_secs_f64(),
                method: Method::ClosedFormNoRis,
                history: vec![objective],
                degenerate_direct: false,
            })
        }
        Solver::RandomPhase => {
            let mut report = optimizer::solve_alternating(
                channels,
                radio,
                power,
                &cfg,
                scenario.optimizer.alternating_max_iter,
                scenario.optimizer.alternating_tol,
                None,
            )?;
            let mut rng = rng::keyed(scenario.seed, frame as u64, 0, Stream::RandomPhase);
            report.best = optimizer::randomize_phases(&report.best, &mut rng);
            report.objective = system::overall_capacity(channels, &report.best, radio, power)?.r_overall;
            Ok(report)
        }
        Solver::Mtl(model) => {
            let start = Instant::now();
            let features = mtl::features(geometry, channels, radio);
            let mut best = mtl::infer(model, &features, radio, power)?;
            if scenario.optimizer.mtl_closed_form_phases {
                best = optimizer::strategy_for_decision(channels, &best.decision(), cfg.phase_mode).0;
            }
            let elapsed_s = start.elapsed().as_secs_f64();
            let objective = system::overall_capacity(channels, &best, radio, power)?.r_overall;
            Ok(SolveReport {
                best,
                objective,
                evaluated: 1,
                iterations: 1,
                elapsed_s,
                method: Method::Mtl,
                history: vec![objective],
                degenerate_direct: false,
            })
        }
    }
}

/// Run `num_frames` frames. Frame 0 uses the initial geometry; each later frame first
/// advances every node by one mobility step.
pub fn run_episode(scenario: &Resolved, solver: Solver<'_>) -> Result<Episode> {
    let proto = &scenario.protocol;
    let dt = scenario.mobility.step_s.unwrap_or(proto.frame_duration_s);
    let mut geometry = scenario.geometry.clone();
    let mut frames = Vec::with_capacity(proto.num_frames);
    for i in 0..proto.num_frames {
        let wrap = |e: Error| Error::Frame {
            frame: i,
            source: Box::new(e),
        };
        if i > 0 {
            geometry = step_mobility(&geometry, &scenario.mobility, dt)?;
        }
        let channels = channel::realize(&geometry, &scenario.fading, i as u64).map_err(wrap)?;
        let report = solve_frame(scenario, &geometry, &channels, solver, i).map_err(wrap)?;
        report.best.validate(&scenario.radio, &scenario.power).map_err(wrap)?;
        let mut metrics =
            system::overall_capacity(&channels, &report.best, &scenario.radio, &scenario.power).map_err(wrap)?;
        let negotiation_s = if proto.measured_optimization_time {
            proto.sync_duration_s + proto.estimation_duration_s + report.elapsed_s
        } else {
            proto.negotiation_s()
        };
        // A negotiation phase that eats the whole frame leaves no time to transmit.
        metrics.s_overall = if negotiation_s < proto.frame_duration_s {
            system::protocol_throughput(metrics.r_overall, negotiation_s, proto.frame_duration_s)
                .map_err(wrap)?
        } else {
            0.0
        };
        frames.push(FrameTrace {
            frame_index: i,
            uav_positions: geometry.uav_positions.clone(),
            user_positions: geometry.user_positions.clone(),
            strategy: report.best.clone(),
            solver: SolverSummary {
                solver: solver.choice(),
                objective: report.objective,
                evaluated: report.evaluated,
                iterations: report.iterations,
                elapsed_s: report.elapsed_s,
            },
            metrics,
            negotiation_s,
        });
    }
    let aggregate = aggregate(&frames);
    Ok(Episode { frames, aggregate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;
    use approx::assert_relative_eq;

    fn small() -> Scenario {
        let mut s = Scenario::default();
        s.geometry.num_pairs = 3;
        s.geometry.ris_rows = 4;
        s.geometry.ris_cols = 8;
        s.protocol.num_frames = 4;
        s
    }

    #[test]
    fn mobility_examples() {
        let geo = Scenario::default().resolve().unwrap().geometry;
        let mob = MobilityConfig::default();
        assert_eq!(step_mobility(&geo, &mob, 0.0).unwrap(), geo);
        let two = step_mobility(&geo, &mob, 2.0).unwrap();
        assert_eq!(two.uav_positions[0], [70.0, 80.0, 280.0]);
        let ten = step_mobility(&geo, &mob, 10.0).unwrap();
        assert_eq!(ten.user_positions[0], [15.0, 30.0, 1.0]);
        assert!(step_mobility(&geo, &mob, -1.0).is_err());
    }

    #[test]
    fn partition_examples() {
        let pairs = |d: &[u8]| -> Vec<usize> {
            group_partition_of(d, 24, 6).unwrap().iter().map(|g| g.pair + 1).collect()
        };
        assert_eq!(pairs(&[0, 1, 1, 1, 0, 0]), vec![2, 3, 4]);
        assert_eq!(pairs(&[1, 0, 0, 1, 1, 1]), vec![1, 4, 5, 6]);
        assert_eq!(pairs(&[0, 0, 0, 0, 1, 1]), vec![5, 6]);
        let g = group_partition_of(&[1, 0, 0, 1, 1, 1], 24, 6).unwrap();
        assert_eq!(g[2], GroupAssignment { group: 3, pair: 4, elements: 12..18 });
        assert!(group_partition_of(&[1, 1, 1, 0, 0, 0], 32, 6).is_err());
        assert!(group_partition_of(&[1, 1, 1, 1, 0, 0], 32, 3).is_err());
    }

    #[test]
    fn single_frame_without_overhead_equals_objective() {
        let mut s = small();
        s.protocol.num_frames = 1;
        s.protocol.sync_duration_s = 0.0;
        s.protocol.estimation_duration_s = 0.0;
        s.protocol.optimization_duration_s = 0.0;
        let r = s.resolve().unwrap();
        let ep = run_episode(&r, Solver::Exhaustive).unwrap();
        let ch = channel::realize(&r.geometry, &r.fading, 0).unwrap();
        let rep = optimizer::solve_exhaustive(&ch, &r.radio, &r.power, &r.optimizer.solver_config()).unwrap();
        assert_relative_eq!(ep.aggregate.mean_s_overall, rep.objective, max_relative = 1e-12);
        assert_eq!(ep.aggregate.p50_s_overall, ep.aggregate.mean_s_overall);
    }

    #[test]
    fn overhead_scales_throughput() {
        let r = small().resolve().unwrap();
        let ep = run_episode(&r, Solver::Exhaustive).unwrap();
        for f in &ep.frames {
            assert_relative_eq!(f.metrics.s_overall, 0.9 * f.metrics.r_overall, max_relative = 1e-12);
        }
    }

    #[test]
    fn stationary_frozen_fading_repeats_frames() {
        let mut s = small();
        s.mobility = MobilityConfig::stationary();
        s.fading.redraw_per_frame = false;
        let r = s.resolve().unwrap();
        let ep = run_episode(&r, Solver::Exhaustive).unwrap();
        for f in &ep.frames[1..] {
            assert_eq!(f.strategy, ep.frames[0].strategy);
            assert_eq!(f.metrics, ep.frames[0].metrics);
            assert_eq!(f.uav_positions, ep.frames[0].uav_positions);
        }
    }

    #[test]
    fn episodes_are_deterministic() {
        let r = small().resolve().unwrap();
        for solver in [Solver::Exhaustive, Solver::Alternating, Solver::None, Solver::RandomPhase] {
            let a = run_episode(&r, solver).unwrap();
            let b = run_episode(&r, solver).unwrap();
            assert_eq!(a.frames.len(), b.frames.len());
            for (x, y) in a.frames.iter().zip(&b.frames) {
                assert_eq!(x.strategy, y.strategy);
                assert_eq!(x.metrics, y.metrics);
            }
        }
    }

    #[test]
    fn zero_frames_and_frame_errors() {
        let mut s = small();
        s.protocol.num_frames = 0;
        let ep = run_episode(&s.resolve().unwrap(), Solver::Exhaustive).unwrap();
        assert!(ep.frames.is_empty());
        assert_eq!(ep.aggregate.frames, 0);

        let mut s = small();
        s.power.max_total_w = 0.5;
        let err = run_episode(&s.resolve().unwrap(), Solver::Exhaustive).unwrap_err();
        assert!(matches!(err, Error::Frame { frame: 0, .. }), "{err:?}");
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.5), 3.0);
        assert_relative_eq!(percentile(&[0.0, 10.0], 0.1), 1.0);
        assert_eq!(percentile(&[], 0.5), 0.0);
    }
}
