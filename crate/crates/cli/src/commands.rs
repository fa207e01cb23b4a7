use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use risuav::channel::{self, linear_to_db, Geometry};
use risuav::mtl::{self, Dataset, MtlModel};
use risuav::optimizer;
use risuav::protocol::{self, run_episode, solve_frame, Solver, SolverChoice};
use risuav::rng::{keyed, Stream};
use risuav::scenario::{Resolved, Scenario};
use risuav::system::{self, Metrics};
use risuav::{Error, Result};
use serde::Serialize;

use crate::output::{self, FrameRow, ResultRow, FRAME_COLUMNS, RESULT_COLUMNS};
use crate::{load_model, Context};

/// User displacement per metre of UAV displacement in the distance sweep.
pub const USER_DISTANCE_RATIO: f64 = 0.1;

const BENCH_REPEATS: usize = 5;

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    seed: u64,
    config_hash: &'a str,
    #[serde(flatten)]
    body: T,
}

fn stamped<'a, T: Serialize>(r: &'a Resolved, body: T) -> Stamped<'a, T> {
    Stamped {
        seed: r.seed,
        config_hash: &r.config_hash,
        body,
    }
}

/// Row factory for one experiment.
struct Rows<'a> {
    experiment: &'a str,
    sweep_var: &'a str,
    seed: u64,
    config_hash: &'a str,
}

impl Rows<'_> {
    fn row(&self, x: f64, scheme: &str, frame: Option<usize>, pair: Option<usize>, metric: &str, value: f64) -> ResultRow {
        ResultRow {
            experiment: self.experiment.to_string(),
            sweep_var: self.sweep_var.to_string(),
            sweep_value: x,
            scheme: scheme.to_string(),
            frame,
            pair,
            metric: metric.to_string(),
            value,
            seed: self.seed,
            config_hash: self.config_hash.to_string(),
        }
    }

    fn pair_metrics(&self, x: f64, scheme: &str, frame: Option<usize>, m: &Metrics, out: &mut Vec<ResultRow>) {
        for (k, (&snr, &rate)) in m.snr_per_pair.iter().zip(&m.rate_per_pair).enumerate() {
            out.push(self.row(x, scheme, frame, Some(k), "snr", snr));
            out.push(self.row(x, scheme, frame, Some(k), "snr_db", linear_to_db(snr)));
            out.push(self.row(x, scheme, frame, Some(k), "rate_bps", rate));
        }
    }

    fn totals(&self, x: f64, scheme: &str, frame: Option<usize>, m: &Metrics, out: &mut Vec<ResultRow>) {
        out.push(self.row(x, scheme, frame, None, "r_overall", m.r_overall));
        out.push(self.row(x, scheme, frame, None, "p_overall", m.p_overall));
        out.push(self.row(x, scheme, frame, None, "s_overall", m.s_overall));
    }
}

fn write_results(ctx: &Context, stem: &str, mut rows: Vec<ResultRow>) -> Result<()> {
    output::sort_rows(&mut rows);
    let path = output::write_table(&ctx.out, stem, ctx.format, RESULT_COLUMNS, &rows)?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

fn solver_for<'m>(choice: SolverChoice, model: Option<&'m MtlModel>) -> Result<Solver<'m>> {
    Ok(match choice {
        SolverChoice::Exhaustive => Solver::Exhaustive,
        SolverChoice::Alternating => Solver::Alternating,
        SolverChoice::None => Solver::None,
        SolverChoice::RandomPhase => Solver::RandomPhase,
        SolverChoice::Mtl => Solver::Mtl(
            model.ok_or_else(|| Error::config("--model", "the mtl solver needs a trained model file"))?,
        ),
    })
}

fn load_model_for(choice: SolverChoice, path: Option<&Path>, r: &Resolved) -> Result<Option<MtlModel>> {
    match (choice, path) {
        (SolverChoice::Mtl, Some(p)) => load_model(p, r).map(Some),
        _ => Ok(None),
    }
}

fn integer_values(values: &[f64], flag: &str) -> Result<Vec<usize>> {
    values
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 && v.is_finite() {
                Ok(v as usize)
            } else {
                Err(Error::config(flag, format!("{v} is not a non-negative integer")))
            }
        })
        .collect()
}

/// Throughput with the configured protocol overhead.
fn with_throughput(r: &Resolved, mut m: Metrics) -> Result<Metrics> {
    m.s_overall = system::protocol_throughput(m.r_overall, r.protocol.negotiation_s(), r.protocol.frame_duration_s)?;
    Ok(m)
}

pub fn simulate(ctx: &Context, solver: Option<SolverChoice>, model_path: Option<&Path>) -> Result<()> {
    let r = &ctx.resolved;
    let choice = solver.unwrap_or(r.optimizer.solver);
    let model = load_model_for(choice, model_path, r)?;
    let episode = run_episode(r, solver_for(choice, model.as_ref())?)?;
    let mut rows = Vec::new();
    for f in &episode.frames {
        for pair in 0..r.radio.num_pairs {
            let (uav, user) = (f.uav_positions[pair], f.user_positions[pair]);
            let group = f.strategy.occupation[pair];
            rows.push(FrameRow {
                seed: r.seed,
                config_hash: r.config_hash.clone(),
                solver: choice.label().to_string(),
                frame: f.frame_index,
                pair,
                uav_x: uav[0],
                uav_y: uav[1],
                uav_z: uav[2],
                user_x: user[0],
                user_y: user[1],
                user_z: user[2],
                assisted: (group != 0) as u8,
                group,
                snr: f.metrics.snr_per_pair[pair],
                rate_bps: f.metrics.rate_per_pair[pair],
                r_overall: f.metrics.r_overall,
                p_overall: f.metrics.p_overall,
                s_overall: f.metrics.s_overall,
                negotiation_s: f.negotiation_s,
                evaluated: f.solver.evaluated,
                iterations: f.solver.iterations,
            });
        }
    }
    let path = output::write_table(&ctx.out, "frames", ctx.format, FRAME_COLUMNS, &rows)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        solver: &'a str,
        aggregate: &'a protocol::Aggregate,
    }
    output::write_json(
        &ctx.out.join("aggregate.json"),
        &stamped(r, Summary { solver: choice.label(), aggregate: &episode.aggregate }),
    )?;
    println!(
        "{} frames, mean throughput {:.6e} b/s; trace in {}",
        episode.aggregate.frames,
        episode.aggregate.mean_s_overall,
        path.display()
    );
    Ok(())
}

/// Per-frame geometries of the scenario's mobility model.
fn trajectory(r: &Resolved) -> Result<Vec<Geometry>> {
    let dt = r.mobility.step_s.unwrap_or(r.protocol.frame_duration_s);
    let mut out: Vec<Geometry> = Vec::with_capacity(r.protocol.num_frames);
    for _ in 0..r.protocol.num_frames {
        let g = match out.last() {
            Some(prev) => protocol::step_mobility(prev, &r.mobility, dt)?,
            None => r.geometry.clone(),
        };
        out.push(g);
    }
    Ok(out)
}

pub fn sweep_groups(ctx: &Context, values: Option<&[f64]>) -> Result<()> {
    let r = &ctx.resolved;
    let groups = match values {
        Some(v) => integer_values(v, "--values")?,
        None => vec![1, 2, 4, 8],
    };
    let (k, n) = (r.radio.num_pairs, r.radio.num_elements);
    if let Some(&l) = groups.iter().find(|&&l| l == 0 || l > k || n % l != 0) {
        return Err(Error::config(
            "--values",
            format!("{l} groups: need 1 <= L <= K = {k} with L dividing N = {n}"),
        ));
    }
    let rows = Rows { experiment: "snr-vs-groups", sweep_var: "groups", seed: r.seed, config_hash: &r.config_hash };
    let geometries = trajectory(r)?;
    let channels: Vec<_> = geometries
        .iter()
        .enumerate()
        .map(|(i, g)| channel::realize(g, &r.fading, i as u64))
        .collect::<Result<_>>()?;
    let parts: Vec<Vec<ResultRow>> = groups
        .par_iter()
        .map(|&l| {
            let mut out = Vec::new();
            // pair 0 always holds group 1, so its element range shrinks as L grows
            let decision: Vec<u8> = (0..k).map(|i| (i < l) as u8).collect();
            for (i, ch) in channels.iter().enumerate() {
                let (strategy, _) = optimizer::strategy_for_decision(ch, &decision, r.optimizer.phase_mode);
                let m = with_throughput(r, system::overall_capacity(ch, &strategy, &r.radio, &r.power)?)?;
                rows.pair_metrics(l as f64, "first-l-pairs", Some(i), &m, &mut out);
                rows.totals(l as f64, "first-l-pairs", Some(i), &m, &mut out);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    write_results(ctx, "sweep_groups", parts.concat())
}

/// Scenario with `k` pairs, keeping at most `k` explicit positions.
fn with_pairs(s: &mut Scenario, k: usize) {
    s.geometry.num_pairs = k;
    s.geometry.uav_positions.truncate(k);
    s.geometry.user_positions.truncate(k);
}

fn trained_model(r: &Resolved) -> Result<MtlModel> {
    let data = mtl::collect_dataset(r, r.mtl.dataset_size);
    log::info!("trained surrogate for K = {} on {} samples", r.radio.num_pairs, data.len());
    mtl::train(&data, &r.mtl, r.seed, &r.radio, &r.power).map(|(m, _)| m)
}

pub fn sweep_pairs(ctx: &Context, values: Option<&[f64]>, model_dir: Option<&Path>) -> Result<()> {
    let ks = match values {
        Some(v) => integer_values(v, "--values")?,
        None => (2..=8).collect(),
    };
    if ks.contains(&0) {
        return Err(Error::config("--values", "pair counts must be >= 1"));
    }
    let r0 = &ctx.resolved;
    let rows = Rows { experiment: "throughput-vs-pairs", sweep_var: "pairs", seed: r0.seed, config_hash: &r0.config_hash };
    let parts: Vec<Vec<ResultRow>> = ks
        .par_iter()
        .map(|&k| {
            let r = ctx.with(|s| with_pairs(s, k))?;
            let model = match model_dir {
                Some(dir) => load_model(&dir.join(format!("model_k{k}.bin")), &r)?,
                None => trained_model(&r)?,
            };
            let mut out = Vec::new();
            for solver in [Solver::None, Solver::RandomPhase, Solver::Alternating, Solver::Mtl(&model)] {
                let episode = run_episode(&r, solver)?;
                let scheme = solver.choice().label();
                for f in &episode.frames {
                    rows.totals(k as f64, scheme, Some(f.frame_index), &f.metrics, &mut out);
                }
                out.push(rows.row(k as f64, scheme, None, None, "mean_s_overall", episode.aggregate.mean_s_overall));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    write_results(ctx, "sweep_pairs", parts.concat())
}

pub fn sweep_distance(
    ctx: &Context,
    values: Option<&[f64]>,
    solver: Option<SolverChoice>,
    model_path: Option<&Path>,
) -> Result<()> {
    let r = &ctx.resolved;
    let offsets = values.map_or_else(|| (0..6).map(|i| 50.0 * i as f64).collect(), <[f64]>::to_vec);
    if let Some(v) = offsets.iter().find(|v| !v.is_finite()) {
        return Err(Error::config("--values", format!("{v} is not a finite distance")));
    }
    let choice = solver.unwrap_or(r.optimizer.solver);
    let model = load_model_for(choice, model_path, r)?;
    let solver = solver_for(choice, model.as_ref())?;
    let rows = Rows { experiment: "throughput-vs-distance", sweep_var: "uav_offset_m", seed: r.seed, config_hash: &r.config_hash };
    let parts: Vec<Vec<ResultRow>> = offsets
        .par_iter()
        .map(|&d| {
            let mut geometry = r.geometry.clone();
            for p in &mut geometry.uav_positions {
                p[0] += d;
            }
            for p in &mut geometry.user_positions {
                p[0] += USER_DISTANCE_RATIO * d;
            }
            let ch = channel::realize(&geometry, &r.fading, 0)?;
            let report = solve_frame(r, &geometry, &ch, solver, 0)?;
            let m = with_throughput(r, system::overall_capacity(&ch, &report.best, &r.radio, &r.power)?)?;
            let mut out = Vec::new();
            rows.pair_metrics(d, choice.label(), None, &m, &mut out);
            rows.totals(d, choice.label(), None, &m, &mut out);
            out.push(rows.row(d, choice.label(), None, None, "groups", report.best.groups as f64));
            Ok(out)
        })
        .collect::<Result<_>>()?;
    write_results(ctx, "sweep_distance", parts.concat())
}

#[derive(Serialize)]
struct DatasetMeta {
    num_features: usize,
    num_pairs: usize,
    samples: usize,
}

fn dataset_for(ctx: &Context, data: Option<&Path>, size: Option<usize>) -> Result<Dataset> {
    let r = &ctx.resolved;
    let Some(path) = data else {
        return Ok(mtl::collect_dataset(r, size.unwrap_or(r.mtl.dataset_size)));
    };
    let file = File::open(path).map_err(|e| Error::config("--data", format!("{}: {e}", path.display())))?;
    let (ds, nf, nc) = Dataset::read_csv(BufReader::new(file))?;
    let want = mtl::feature_dim(&r.radio);
    if nf != want || nc != r.radio.num_pairs {
        return Err(Error::config(
            "--data",
            format!(
                "{} has {nf} features for {nc} pairs; scenario needs {want} features for {} pairs",
                path.display(),
                r.radio.num_pairs
            ),
        ));
    }
    Ok(ds)
}

pub fn mtl_dataset(ctx: &Context, size: Option<usize>) -> Result<()> {
    let r = &ctx.resolved;
    let ds = dataset_for(ctx, None, size)?;
    std::fs::create_dir_all(&ctx.out)?;
    let path = ctx.out.join("dataset.csv");
    let (nf, k) = (mtl::feature_dim(&r.radio), r.radio.num_pairs);
    ds.write_csv(std::io::BufWriter::new(File::create(&path)?), nf, k)?;
    output::write_json(
        &ctx.out.join("dataset.meta.json"),
        &stamped(r, DatasetMeta { num_features: nf, num_pairs: k, samples: ds.len() }),
    )?;
    println!("wrote {} samples to {}", ds.len(), path.display());
    Ok(())
}

pub fn mtl_train(ctx: &Context, data: Option<&Path>, size: Option<usize>) -> Result<()> {
    let r = &ctx.resolved;
    let ds = dataset_for(ctx, data, size)?;
    let (model, report) = mtl::train(&ds, &r.mtl, r.seed, &r.radio, &r.power)?;
    std::fs::create_dir_all(&ctx.out)?;
    let path = ctx.out.join("model.bin");
    model.save(&path)?;
    #[derive(Serialize)]
    struct ModelMeta<'a> {
        num_features: usize,
        num_pairs: usize,
        hidden: &'a [usize],
        samples: usize,
    }
    output::write_json(
        &ctx.out.join("model.meta.json"),
        &stamped(
            r,
            ModelMeta {
                num_features: model.input_dim(),
                num_pairs: model.num_pairs(),
                hidden: &r.mtl.hidden,
                samples: ds.len(),
            },
        ),
    )?;
    output::write_json(&ctx.out.join("train_report.json"), &stamped(r, &report))?;
    println!(
        "trained {} epochs (best {}), accuracy {:.4}, mse {:.4}; model in {}",
        report.epochs.len(),
        report.best_epoch,
        report.final_accuracy,
        report.final_mse,
        path.display()
    );
    Ok(())
}

pub fn mtl_eval(ctx: &Context, data: Option<&Path>, size: Option<usize>, values: Option<&[f64]>) -> Result<()> {
    let r = &ctx.resolved;
    let fractions = values.map_or_else(|| (1..=9).map(|i| i as f64 / 10.0).collect(), <[f64]>::to_vec);
    if let Some(f) = fractions.iter().find(|&&f| !(f > 0.0 && f <= 0.9)) {
        return Err(Error::config("--values", format!("training fraction {f} is outside (0, 0.9]")));
    }
    let ds = dataset_for(ctx, data, size)?;
    let n = ds.len();
    // the last tenth is held out, so every fraction up to 0.9 trains on disjoint data
    let test = ds.slice(n - n / 10..n);
    if test.is_empty() {
        return Err(Error::config("--size", format!("{n} samples leave no held-out test set")));
    }
    let rows = Rows { experiment: "mtl-eval", sweep_var: "train_fraction", seed: r.seed, config_hash: &r.config_hash };
    let parts: Vec<Vec<ResultRow>> = fractions
        .par_iter()
        .map(|&f| {
            let train = ds.slice(0..((n as f64 * f) as usize).min(n - test.len()));
            let (model, _) = mtl::train(&train, &r.mtl, r.seed, &r.radio, &r.power)?;
            let e = mtl::evaluate(&model, &test, &r.radio, &r.power);
            Ok(vec![
                rows.row(f, "mtl", None, None, "accuracy", e.accuracy),
                rows.row(f, "mtl", None, None, "mse", e.mse),
                rows.row(f, "mtl", None, None, "train_samples", train.len() as f64),
            ])
        })
        .collect::<Result<_>>()?;
    write_results(ctx, "mtl_eval", parts.concat())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

pub fn mtl_bench(ctx: &Context, values: Option<&[f64]>, instances: usize) -> Result<()> {
    let ks = match values {
        Some(v) => integer_values(v, "--values")?,
        None => (2..=8).collect(),
    };
    if ks.contains(&0) {
        return Err(Error::config("--values", "pair counts must be >= 1"));
    }
    if instances == 0 {
        return Err(Error::config("--size", "need at least one instance"));
    }
    let r0 = &ctx.resolved;
    let rows = Rows { experiment: "mtl-bench", sweep_var: "pairs", seed: r0.seed, config_hash: &r0.config_hash };
    let mut out = Vec::new();
    // timings run sequentially; a worker pool would distort them
    for &k in &ks {
        let r = ctx.with(|s| with_pairs(s, k))?;
        let cases: Vec<_> = (0..instances).map(|j| mtl::sample_instance(&r, j)).collect::<Result<_>>()?;
        // inference cost depends only on the architecture, so untrained weights suffice
        let mut rng = keyed(r.seed, 0, 0, Stream::Init);
        let model = MtlModel::random(mtl::feature_dim(&r.radio), &r.mtl.hidden, k, &mut rng);
        let cfg = r.optimizer.solver_config();
        let (mut exhaustive, mut inference) = (Vec::new(), Vec::new());
        for _ in 0..BENCH_REPEATS {
            let t = Instant::now();
            for (_, ch) in &cases {
                std::hint::black_box(optimizer::solve_exhaustive(ch, &r.radio, &r.power, &cfg)?);
            }
            exhaustive.push(t.elapsed().as_secs_f64() / instances as f64);
            let t = Instant::now();
            for (geo, ch) in &cases {
                let f = mtl::features(geo, ch, &r.radio);
                std::hint::black_box(mtl::infer(&model, &f, &r.radio, &r.power)?);
            }
            inference.push(t.elapsed().as_secs_f64() / instances as f64);
        }
        let (e, i) = (median(exhaustive), median(inference));
        let x = k as f64;
        out.push(rows.row(x, "exhaustive", None, None, "seconds_per_sample", e));
        out.push(rows.row(x, "mtl", None, None, "seconds_per_sample", i));
        out.push(rows.row(x, "mtl", None, None, "time_ratio", i / e));
        out.push(rows.row(
            x,
            "exhaustive",
            None,
            None,
            "candidates",
            optimizer::admissible_candidate_count(&r.radio) as f64,
        ));
    }
    write_results(ctx, "mtl_bench", out)
}

/// Resolved scenario as TOML, headed by its hash.
pub fn resolved_dump(ctx: &Context) -> String {
    format!(
        "# config_hash = {}\n# pairs = {}, elements = {}, max_groups = {}\n{}",
        ctx.resolved.config_hash,
        ctx.resolved.radio.num_pairs,
        ctx.resolved.radio.num_elements,
        ctx.resolved.radio.max_groups,
        ctx.scenario.to_toml_string()
    )
}
