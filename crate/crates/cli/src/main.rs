mod table;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hybrid_bn::approx::{calibrate_initial, ApproxState, PropagationConfig, Target, DEFENSIVE_SHARE};
use hybrid_bn::clique_tree::{build_clique_tree, DEFAULT_MAX_CONTINUOUS};
use hybrid_bn::density_tree::{dt_learn, TreeConfig};
use hybrid_bn::evaluation::{
    discretize_network, kl_error, run_experiment, Benchmark, DiscretizationSpec, ExperimentConfig, ExperimentKind,
};
use hybrid_bn::exact::shafer_shenoy_propagate;
use hybrid_bn::gmm::EmConfig;
use hybrid_bn::network::{parse_evidence, parse_network, serialize_network, Domain, Evidence, HybridNetwork, VarId, VariableKind};
use hybrid_bn::rng::stream;
use hybrid_bn::sampler::{likelihood_weighting, weighted_histogram};
use hybrid_bn::Error;

use table::{emit_csv, sig6, Cell};

#[derive(Parser, Debug)]
#[command(name = "hbn", version, about = "Inference in hybrid Bayesian networks")]
struct Cli {
    /// Seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and validate a network file.
    Validate {
        #[arg(long)]
        net: PathBuf,
    },
    /// Print the clique tree built for a network.
    ShowTree {
        #[arg(long)]
        net: PathBuf,
        /// Most continuous variables allowed in one clique.
        #[arg(long, default_value_t = DEFAULT_MAX_CONTINUOUS)]
        max_continuous: usize,
    },
    /// Learn a density tree from likelihood-weighted samples and print it.
    ShowDensity {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        evidence: Option<PathBuf>,
        /// Comma-separated variables of the tree's scope.
        #[arg(long, value_delimiter = ',', required = true)]
        vars: Vec<String>,
        #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
        samples: u64,
        #[command(flatten)]
        tree: TreeArgs,
    },
    /// Exact marginals of a purely discrete network.
    InferExact {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        evidence: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        query: Vec<String>,
    },
    /// Likelihood-weighting marginals.
    InferLw {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        evidence: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        query: Vec<String>,
        #[arg(long, default_value_t = 10000, value_parser = clap::value_parser!(u64).range(1..))]
        samples: u64,
        /// Histogram bins for continuous queries.
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(2..))]
        bins: u64,
    },
    /// Approximate propagation of density-tree potentials.
    InferApprox {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        evidence: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        query: Vec<String>,
        #[command(flatten)]
        propagation: PropagationArgs,
        /// Per-refinement diagnostics CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Reference marginal CSV (variable,state,probability) of the first
        /// query, used for per-pass KL-error in the trace.
        #[arg(long, requires = "trace")]
        reference: Option<PathBuf>,
    },
    /// Replace continuous variables by equal-width bins.
    Discretize {
        #[arg(long)]
        net: PathBuf,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(2..))]
        bins: u64,
    },
    /// Run an experiment sweep on a bundled benchmark network.
    Experiment {
        /// iterations, samples, lambda or lw-comparison.
        #[arg(long)]
        kind: String,
        /// thermostat or traffic.
        #[arg(long)]
        net: String,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[command(flatten)]
        propagation: PropagationArgs,
        /// Fixed likelihood-weighting budget; wall-clock matched when absent.
        #[arg(long)]
        lw_samples: Option<usize>,
    },
}

#[derive(Args, Debug, Clone)]
struct TreeArgs {
    /// Regularization coefficient of the mixture variances.
    #[arg(long, default_value_t = 10.0)]
    lambda: f64,
    /// Mixture components per leaf.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    components: u64,
    /// Smallest sample count a node needs to be split.
    #[arg(long, default_value_t = 25)]
    min_leaf: usize,
}

impl TreeArgs {
    fn config(&self) -> Result<TreeConfig, Failure> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Failure::Usage("--lambda must be a nonnegative number".into()));
        }
        Ok(TreeConfig {
            min_leaf_samples: self.min_leaf,
            components: self.components as usize,
            pseudocount: 1.0,
            em: EmConfig {
                lambda: self.lambda,
                ..EmConfig::default()
            },
        })
    }
}

#[derive(Args, Debug, Clone)]
struct PropagationArgs {
    /// Samples per refinement.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    samples: u64,
    /// Upward-downward passes after calibration.
    #[arg(long, default_value_t = 6)]
    passes: usize,
    /// Histogram bins for continuous marginals.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(2..))]
    bins: u64,
    /// Share of refinement samples drawn from each clique's prior fit.
    #[arg(long, default_value_t = DEFENSIVE_SHARE)]
    defensive: f64,
    #[command(flatten)]
    tree: TreeArgs,
}

impl PropagationArgs {
    fn config(&self, seed: u64) -> Result<PropagationConfig, Failure> {
        if !(0.0..=1.0).contains(&self.defensive) {
            return Err(Failure::Usage("--defensive must lie in [0, 1]".into()));
        }
        Ok(PropagationConfig {
            samples: self.samples as usize,
            passes: self.passes,
            tree: self.tree.config()?,
            bins: self.bins as usize,
            defensive: self.defensive,
            seed,
            ..PropagationConfig::default()
        })
    }
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn usage(e: Error) -> Failure {
    match e {
        Error::Contract(m) => Failure::Usage(m),
        other => Failure::Data(other.to_string()),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn load(net: &Path, evidence: Option<&Path>) -> Result<(HybridNetwork, Evidence), Failure> {
    let network = parse_network(&read(net)?).map_err(|e| Failure::Data(format!("{}: {e}", net.display())))?;
    let ev = match evidence {
        Some(p) => parse_evidence(&read(p)?, &network).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?,
        None => Evidence::new(),
    };
    Ok((network, ev))
}

fn resolve(net: &HybridNetwork, names: &[String]) -> Result<Vec<VarId>, Failure> {
    names
        .iter()
        .map(|n| net.find(n).ok_or_else(|| Failure::Usage(format!("unknown variable '{n}'"))))
        .collect()
}

const MARGINAL_HEADER: [&str; 3] = ["variable", "state", "probability"];

/// Labels for the states or bin midpoints of `var`.
fn state_labels(net: &HybridNetwork, var: VarId, bins: usize) -> Vec<String> {
    match &net.variables[var].kind {
        VariableKind::Discrete { states } => states.clone(),
        VariableKind::Continuous { low, high } => (0..bins)
            .map(|b| sig6(low + (high - low) * (b as f64 + 0.5) / bins as f64))
            .collect(),
    }
}

fn marginal_rows(net: &HybridNetwork, var: VarId, probs: &[f64]) -> Vec<Vec<Cell>> {
    state_labels(net, var, probs.len())
        .into_iter()
        .zip(probs)
        .map(|(label, p)| vec![Cell::Text(net.variables[var].name.clone()), Cell::Text(label), Cell::Real(*p)])
        .collect()
}

fn csv(header: &[&str], rows: &[Vec<Cell>]) -> Result<String, Failure> {
    emit_csv(header, rows).map_err(|e| Failure::Data(format!("internal: {e}")))
}

fn read_reference(path: &Path, name: &str) -> Result<Vec<f64>, Failure> {
    let text = read(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut probs = vec![];
    for record in reader.records() {
        let record = record.map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        if record.get(0) == Some(name) {
            let p = record
                .get(2)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Failure::Data(format!("{}: bad probability in {record:?}", path.display())))?;
            probs.push(p);
        }
    }
    if probs.is_empty() {
        return Err(Failure::Data(format!("{}: no rows for {name}", path.display())));
    }
    Ok(probs)
}

fn run(cli: Cli) -> Result<String, Failure> {
    let seed = cli.seed;
    match cli.command {
        Command::Validate { net } => {
            let text = read(&net)?;
            match parse_network(&text) {
                Ok(n) => Ok(format!(
                    "ok: {} variables ({} continuous), {} CPDs\n",
                    n.len(),
                    n.continuous_count(),
                    n.cpds.len()
                )),
                Err(e) => Err(Failure::Data(format!("{}: {e}", net.display()))),
            }
        }
        Command::ShowTree { net, max_continuous } => {
            let (n, _) = load(&net, None)?;
            let tree = build_clique_tree(&n, max_continuous)?;
            Ok(tree.dump(&n))
        }
        Command::ShowDensity {
            net,
            evidence,
            vars,
            samples,
            tree,
        } => {
            let (n, ev) = load(&net, evidence.as_deref())?;
            let ids = resolve(&n, &vars)?;
            let mut config = tree.config()?;
            config.em.seed = seed;
            let run = likelihood_weighting(&n, &ev, samples as usize, &mut stream(seed, 0))?;
            let data = run.samples.project(&ids)?;
            let dt = dt_learn(&data, &config, &mut stream(seed, 1))?;
            Ok(dt.dump(Some(&n)))
        }
        Command::InferExact { net, evidence, query } => {
            let (n, ev) = load(&net, evidence.as_deref())?;
            let ids = resolve(&n, &query)?;
            let tree = build_clique_tree(&n, usize::MAX)?;
            let post = shafer_shenoy_propagate(&tree, &n, &ev)?;
            let mut rows = vec![];
            for v in ids {
                rows.extend(marginal_rows(&n, v, &post.marginal(v)?));
            }
            csv(&MARGINAL_HEADER, &rows)
        }
        Command::InferLw {
            net,
            evidence,
            query,
            samples,
            bins,
        } => {
            let (n, ev) = load(&net, evidence.as_deref())?;
            let ids = resolve(&n, &query)?;
            let run = likelihood_weighting(&n, &ev, samples as usize, &mut stream(seed, 0))?;
            if run.degenerate {
                return Err(Failure::Data("every likelihood weight is zero".into()));
            }
            let mut rows = vec![];
            for v in ids {
                let (b, range) = match n.domain(v) {
                    Domain::Discrete { cardinality } => (cardinality, None),
                    Domain::Continuous { low, high } => (bins as usize, Some((low, high))),
                };
                rows.extend(marginal_rows(&n, v, &weighted_histogram(&run.samples, v, b, range)?));
            }
            csv(&MARGINAL_HEADER, &rows)
        }
        Command::InferApprox {
            net,
            evidence,
            query,
            propagation,
            trace,
            reference,
        } => {
            let (n, ev) = load(&net, evidence.as_deref())?;
            let ids = resolve(&n, &query)?;
            let config = propagation.config(seed)?;
            let reference = match &reference {
                Some(p) => Some(read_reference(p, &n.variables[ids[0]].name)?),
                None => None,
            };
            let tree = build_clique_tree(&n, config.max_continuous_per_clique)?;
            let mut state = calibrate_initial(&n, &tree, &ev, &config)?;
            let mut pass_kl = vec![];
            let kl_of = |s: &ApproxState| -> Result<Option<f64>, Error> {
                match &reference {
                    Some(r) => Ok(Some(kl_error(r, s.query_marginal(ids[0])?.probs())?)),
                    None => Ok(None),
                }
            };
            pass_kl.push(kl_of(&state)?);
            state.iterate_with(config.passes, |s| {
                pass_kl.push(kl_of(s)?);
                Ok(())
            })?;
            if let Some(path) = trace {
                let rows: Vec<Vec<Cell>> = state
                    .diagnostics
                    .iter()
                    .map(|d| {
                        let target = match d.target {
                            Target::Potential => "potential".to_string(),
                            Target::Message { to } => format!("message->{to}"),
                        };
                        vec![
                            Cell::Int(d.pass as u64),
                            Cell::Int(d.clique as u64),
                            Cell::Text(target),
                            Cell::Real(d.ess),
                            Cell::Int(d.clipped as u64),
                            pass_kl[d.pass].map_or(Cell::Empty, Cell::Real),
                        ]
                    })
                    .collect();
                let text = csv(&["pass", "clique", "target", "ess", "clipped", "kl_error"], &rows)?;
                fs::write(&path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
            }
            for w in &state.warnings {
                eprintln!("warning: {w}");
            }
            let mut rows = vec![];
            for v in ids {
                rows.extend(marginal_rows(&n, v, state.query_marginal(v)?.probs()));
            }
            csv(&MARGINAL_HEADER, &rows)
        }
        Command::Discretize { net, bins } => {
            let (n, _) = load(&net, None)?;
            let d = discretize_network(&n, &DiscretizationSpec { bins: bins as usize })?;
            Ok(serialize_network(&d))
        }
        Command::Experiment {
            kind,
            net,
            seeds,
            propagation,
            lw_samples,
        } => {
            let kind = ExperimentKind::parse(&kind).map_err(usage)?;
            let network = Benchmark::parse(&net).map_err(usage)?;
            let mut config = ExperimentConfig::new(kind, network, seeds);
            config.propagation = propagation.config(0)?;
            config.discretization = DiscretizationSpec {
                bins: propagation.bins as usize,
            };
            config.lw_samples = lw_samples;
            let rows: Vec<Vec<Cell>> = run_experiment(&config)?
                .into_iter()
                .map(|r| {
                    vec![
                        Cell::Text(r.experiment),
                        Cell::Real(r.parameter),
                        Cell::Int(r.seed),
                        Cell::Real(r.kl_error),
                        Cell::Real(r.seconds),
                    ]
                })
                .collect();
            csv(&["experiment", "parameter", "seed", "kl_error", "seconds"], &rows)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let out = cli.out.clone();
    match run(cli) {
        Ok(text) => {
            let written = match &out {
                Some(path) => fs::write(path, &text).map_err(|e| format!("{}: {e}", path.display())),
                None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| e.to_string()),
            };
            match written {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
