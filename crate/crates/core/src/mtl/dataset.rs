//! Solver-labeled training data.

use std::f64::consts::TAU;
use std::io::{Read, Write};

use rayon::prelude::*;

use super::features::features;
use crate::channel::{self, ChannelRealization, Geometry};
use crate::error::{Error, Result};
use crate::optimizer::{self, PhaseMode, SolverConfig};
use crate::rng::{self, Stream};
use crate::scenario::Resolved;
use crate::system::{PowerConfig, RadioConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    /// Per-pair assist flag `f(u_k)`.
    pub cls: Vec<u8>,
    /// Per-pair group phase over `2π`; zero for direct-only pairs.
    pub reg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_pairs(&self) -> usize {
        self.samples.first().map_or(0, |s| s.cls.len())
    }

    pub fn feature_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    /// First `⌊fraction·len⌋` samples and the rest.
    pub fn split(&self, fraction: f64) -> (Dataset, Dataset) {
        let cut = ((self.len() as f64) * fraction.clamp(0.0, 1.0)).floor() as usize;
        (
            Dataset { samples: self.samples[..cut].to_vec() },
            Dataset { samples: self.samples[cut..].to_vec() },
        )
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset { samples: self.samples[range].to_vec() }
    }

    pub fn write_csv<W: Write>(&self, out: W, num_features: usize, num_pairs: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<String> = (0..num_features)
            .map(|i| format!("feat_{i}"))
            .chain((0..num_pairs).map(|i| format!("cls_{i}")))
            .chain((0..num_pairs).map(|i| format!("reg_{i}")))
            .collect();
        w.write_record(&header)?;
        for s in &self.samples {
            if s.features.len() != num_features || s.cls.len() != num_pairs || s.reg.len() != num_pairs {
                return Err(Error::domain("sample shape does not match the CSV header"));
            }
            let row: Vec<String> = s
                .features
                .iter()
                .map(|v| v.to_string())
                .chain(s.cls.iter().map(|v| v.to_string()))
                .chain(s.reg.iter().map(|v| v.to_string()))
                .collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<(Dataset, usize, usize)> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let count = |prefix: &str| header.iter().filter(|h| h.starts_with(prefix)).count();
        let (nf, nc, nr) = (count("feat_"), count("cls_"), count("reg_"));
        if nc != nr || nf + nc + nr != header.len() {
            return Err(Error::Format(format!(
                "dataset header has {nf} feature, {nc} class and {nr} regression columns out of {}",
                header.len()
            )));
        }
        for (i, h) in header.iter().enumerate() {
            let want = if i < nf {
                format!("feat_{i}")
            } else if i < nf + nc {
                format!("cls_{}", i - nf)
            } else {
                format!("reg_{}", i - nf - nc)
            };
            if h != want {
                return Err(Error::Format(format!("column {i} is `{h}`, expected `{want}`")));
            }
        }
        let mut samples = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("row {}, column {i}: {e}", line + 1)))
            };
            let features = (0..nf).map(num).collect::<Result<Vec<_>>>()?;
            let cls = (nf..nf + nc)
                .map(|i| match &rec[i] {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    other => Err(Error::Format(format!("row {}, column {i}: class `{other}`", line + 1))),
                })
                .collect::<Result<Vec<u8>>>()?;
            let reg = (nf + nc..nf + 2 * nc).map(num).collect::<Result<Vec<_>>>()?;
            samples.push(Sample { features, cls, reg });
        }
        Ok((Dataset { samples }, nf, nc))
    }
}

/// Geometry and channels of dataset instance `index`.
pub fn sample_instance(scenario: &Resolved, index: usize) -> Result<(Geometry, ChannelRealization)> {
    let mut geometry = scenario.geometry.clone();
    if scenario.mtl.randomize_positions {
        for pair in 0..geometry.num_pairs() {
            let mut rng = rng::keyed(scenario.seed, index as u64 + 1, pair as u64, Stream::Placement);
            let (uav, user) = scenario.placement.sample(&mut rng);
            geometry.uav_positions[pair] = uav;
            geometry.user_positions[pair] = user;
        }
    }
    let channels = channel::realize(&geometry, &scenario.fading, index as u64)?;
    Ok((geometry, channels))
}

/// Optimal `F` and per-group phases over `2π`, from the exhaustive solver.
pub fn label(
    channels: &ChannelRealization,
    radio: &RadioConfig,
    power: &PowerConfig,
    config: &SolverConfig,
) -> Result<(Vec<u8>, Vec<f64>)> {
    let cfg = SolverConfig {
        phase_mode: PhaseMode::PerElement,
        ..config.clone()
    };
    let report = optimizer::solve_exhaustive(channels, radio, power, &cfg)?;
    report.best.validate(radio, power)?;
    let reg = report
        .best
        .phases
        .iter()
        .map(|p| p.as_ref().map_or(0.0, |v| v[0] / TAU))
        .collect();
    Ok((report.best.decision(), reg))
}

/// `size` instances labeled in parallel. Instances the solver cannot label are
/// skipped with a warning, so the result may be shorter than `size`.
pub fn collect_dataset(scenario: &Resolved, size: usize) -> Dataset {
    let cfg = scenario.optimizer.solver_config();
    let samples: Vec<Option<Sample>> = (0..size)
        .into_par_iter()
        .map(|j| {
            let labeled = sample_instance(scenario, j).and_then(|(geometry, channels)| {
                let (cls, reg) = label(&channels, &scenario.radio, &scenario.power, &cfg)?;
                Ok(Sample {
                    features: features(&geometry, &channels, &scenario.radio),
                    cls,
                    reg,
                })
            });
            match labeled {
                Ok(s) => Some(s),
                Err(e) => {
                    log::warn!("dataset sample {j} skipped: {e}");
                    None
                }
            }
        })
        .collect();
    Dataset {
        samples: samples.into_iter().flatten().collect(),
    }
}
