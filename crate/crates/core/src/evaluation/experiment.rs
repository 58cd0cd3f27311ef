//! The experiment suite: KL-error of approximate posteriors against the
//! discretized exact reference, swept over passes, sample counts, the
//! regularization coefficient, and against likelihood weighting.

use std::time::Instant;

use super::networks::{benchmark, scenario, Benchmark, Scenario, ScenarioKind};
use super::{kl_error, reference_marginal, DiscretizationSpec};
use crate::approx::{calibrate_initial, run_approx, ApproxState, PropagationConfig};
use crate::clique_tree::build_clique_tree;
use crate::error::{Error, Result};
use crate::network::{Domain, HybridNetwork};
use crate::rng::stream;
use crate::sampler::{likelihood_weighting, weighted_histogram};

/// Likelihood-weighting samples used to time one sample before sizing the
/// wall-clock-matched run.
pub const LW_PILOT_SAMPLES: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Iterations,
    Samples,
    Lambda,
    LwComparison,
}

impl ExperimentKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "iterations" => Ok(ExperimentKind::Iterations),
            "samples" => Ok(ExperimentKind::Samples),
            "lambda" => Ok(ExperimentKind::Lambda),
            "lw-comparison" => Ok(ExperimentKind::LwComparison),
            other => Err(Error::Contract(format!("unknown experiment '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Iterations => "iterations",
            ExperimentKind::Samples => "samples",
            ExperimentKind::Lambda => "lambda",
            ExperimentKind::LwComparison => "lw-comparison",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub network: Benchmark,
    pub seeds: Vec<u64>,
    /// Base settings; the swept parameter and the seed override it.
    pub propagation: PropagationConfig,
    pub sample_levels: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub discretization: DiscretizationSpec,
    /// Fixed likelihood-weighting budget; `None` matches the approximate
    /// engine's measured wall-clock time.
    pub lw_samples: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, network: Benchmark, seeds: Vec<u64>) -> Self {
        ExperimentConfig {
            kind,
            network,
            seeds,
            propagation: PropagationConfig::default(),
            sample_levels: vec![100, 1000, 3000],
            lambdas: vec![0.001, 0.1, 10.0, 1000.0],
            discretization: DiscretizationSpec::default(),
            lw_samples: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRow {
    pub experiment: String,
    /// Pass index, sample count, lambda or evidence count.
    pub parameter: f64,
    pub seed: u64,
    pub kl_error: f64,
    pub seconds: f64,
}

struct Prepared {
    scenario: Scenario,
    reference: Vec<f64>,
}

fn prepare(net: &HybridNetwork, which: Benchmark, kind: ScenarioKind, spec: &DiscretizationSpec) -> Result<Prepared> {
    let scenario = scenario(which, kind);
    let reference = reference_marginal(net, &scenario.evidence, scenario.query, spec)?;
    Ok(Prepared { scenario, reference })
}

fn approx_kl(state: &ApproxState, prepared: &Prepared) -> Result<f64> {
    kl_error(&prepared.reference, state.query_marginal(prepared.scenario.query)?.probs())
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    if config.seeds.is_empty() {
        return Err(Error::Contract("an experiment needs at least one seed".into()));
    }
    let net = benchmark(config.network);
    let spec = config.discretization;
    let mut base = config.propagation.clone();
    base.bins = spec.bins;
    base.check()?;
    let main_kind = match config.network {
        Benchmark::Thermostat => ScenarioKind::Easy,
        Benchmark::Traffic => ScenarioKind::Full,
    };
    let mut rows = vec![];
    match config.kind {
        ExperimentKind::Iterations => {
            let tree = build_clique_tree(&net, base.max_continuous_per_clique)?;
            for kind in [ScenarioKind::Easy, ScenarioKind::Conflicting] {
                let prepared = prepare(&net, config.network, kind, &spec)?;
                let label = format!("iterations:{}", kind.name());
                for &seed in &config.seeds {
                    let cfg = PropagationConfig {
                        seed,
                        convergence: 0.0,
                        ..base.clone()
                    };
                    let start = Instant::now();
                    let mut state = calibrate_initial(&net, &tree, &prepared.scenario.evidence, &cfg)?;
                    rows.push(ExperimentRow {
                        experiment: label.clone(),
                        parameter: 0.0,
                        seed,
                        kl_error: approx_kl(&state, &prepared)?,
                        seconds: start.elapsed().as_secs_f64(),
                    });
                    state.iterate_with(cfg.passes, |s| {
                        rows.push(ExperimentRow {
                            experiment: label.clone(),
                            parameter: s.passes_done as f64,
                            seed,
                            kl_error: approx_kl(s, &prepared)?,
                            seconds: start.elapsed().as_secs_f64(),
                        });
                        Ok(())
                    })?;
                }
            }
        }
        ExperimentKind::Samples | ExperimentKind::Lambda => {
            let prepared = prepare(&net, config.network, main_kind, &spec)?;
            let levels: Vec<(f64, PropagationConfig)> = if config.kind == ExperimentKind::Samples {
                config
                    .sample_levels
                    .iter()
                    .map(|&m| (m as f64, PropagationConfig { samples: m, ..base.clone() }))
                    .collect()
            } else {
                config
                    .lambdas
                    .iter()
                    .map(|&l| {
                        let mut cfg = base.clone();
                        cfg.tree.em.lambda = l;
                        (l, cfg)
                    })
                    .collect()
            };
            for (parameter, cfg) in levels {
                for &seed in &config.seeds {
                    let cfg = PropagationConfig { seed, ..cfg.clone() };
                    let start = Instant::now();
                    let state = run_approx(&net, &prepared.scenario.evidence, &cfg)?;
                    let seconds = start.elapsed().as_secs_f64();
                    rows.push(ExperimentRow {
                        experiment: config.kind.name().into(),
                        parameter,
                        seed,
                        kl_error: approx_kl(&state, &prepared)?,
                        seconds,
                    });
                }
            }
        }
        ExperimentKind::LwComparison => {
            for kind in [ScenarioKind::Single, main_kind] {
                let prepared = prepare(&net, config.network, kind, &spec)?;
                let evidence = &prepared.scenario.evidence;
                let parameter = evidence.len() as f64;
                for &seed in &config.seeds {
                    let cfg = PropagationConfig { seed, ..base.clone() };
                    let start = Instant::now();
                    let state = run_approx(&net, evidence, &cfg)?;
                    let approx_seconds = start.elapsed().as_secs_f64();
                    rows.push(ExperimentRow {
                        experiment: "lw-comparison:approx".into(),
                        parameter,
                        seed,
                        kl_error: approx_kl(&state, &prepared)?,
                        seconds: approx_seconds,
                    });
                    let budget = match config.lw_samples {
                        Some(m) => m,
                        None => {
                            let pilot = Instant::now();
                            likelihood_weighting(&net, evidence, LW_PILOT_SAMPLES, &mut stream(seed, 1))?;
                            let per_sample = pilot.elapsed().as_secs_f64() / LW_PILOT_SAMPLES as f64;
                            ((approx_seconds / per_sample.max(1e-12)) as usize).max(LW_PILOT_SAMPLES)
                        }
                    };
                    let start = Instant::now();
                    let run = likelihood_weighting(&net, evidence, budget, &mut stream(seed, 0))?;
                    let query = prepared.scenario.query;
                    let (bins, range) = match net.domain(query) {
                        Domain::Discrete { cardinality } => (cardinality, None),
                        Domain::Continuous { low, high } => (spec.bins, Some((low, high))),
                    };
                    let kl = match weighted_histogram(&run.samples, query, bins, range) {
                        Ok(h) => kl_error(&prepared.reference, &h)?,
                        Err(Error::ZeroWeight) => kl_error(&prepared.reference, &vec![0.0; bins])?,
                        Err(e) => return Err(e),
                    };
                    rows.push(ExperimentRow {
                        experiment: "lw-comparison:lw".into(),
                        parameter,
                        seed,
                        kl_error: kl,
                        seconds: start.elapsed().as_secs_f64(),
                    });
                }
            }
        }
    }
    Ok(rows)
}
