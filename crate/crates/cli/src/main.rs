use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use qst_core::bayes::{run_chain, BayesModel};
use qst_core::circuit::{build_ghz, run_circuit, AnsatzKind, AnsatzTag};
use qst_core::classical::{linear_inversion, mle_iterate, MLE_DEFAULT_MAX_ITER, MLE_DEFAULT_TOL};
use qst_core::harness::{
    run_experiment, write_outputs, ExperimentConfig, ExperimentKind, ReconMethod, ResultRecord, TargetKind,
};
use qst_core::measurement::{all_pauli_bases, simulate_dataset, MeasurementDataset};
use qst_core::result::ReconstructionResult;
use qst_core::state::{random_pure_state, StateVector};
use qst_core::variational::{optimize_qvcs, OptimizerConfig};
use qst_core::QstError;

#[derive(Parser)]
#[command(name = "qst", version, about = "Quantum state tomography experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// GHZ tomography with linear inversion and MLE
    Ghz(GhzArgs),
    /// Variational purification tomography: loss against depth and iteration
    Vqc(VqcArgs),
    /// qPCA fidelity sweep over the evolution time
    Qpca(QpcaArgs),
    /// Bayesian chains over random targets
    Bayes(BayesArgs),
    /// QVCS benchmark over random pure targets
    Qvcs(QvcsArgs),
    /// Simulate an all-Pauli dataset and write it as JSON
    Simulate(SimulateArgs),
    /// Reconstruct a state from a dataset file
    Reconstruct(ReconstructArgs),
}

#[derive(Args)]
struct Common {
    /// JSON config file; flags take precedence over its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV file or directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    qubits: Option<usize>,
    /// Shots per basis, 0 for exact probabilities
    #[arg(long)]
    shots: Option<u64>,
}

#[derive(Args)]
struct GhzArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Number of repetitions
    #[arg(long)]
    seeds: Option<usize>,
}

#[derive(Args)]
struct VqcArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    depth_min: Option<usize>,
    #[arg(long)]
    depth_max: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Rank of the random target
    #[arg(long)]
    rank: Option<usize>,
}

#[derive(Args)]
struct QpcaArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_hyphen_values = true)]
    t_start: Option<f64>,
    #[arg(long)]
    t_step: Option<f64>,
    #[arg(long)]
    t_count: Option<usize>,
    /// Reconstructions per grid point
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    ancilla: Option<usize>,
    /// Phase-estimation rounds per reconstruction
    #[arg(long)]
    qpe_shots: Option<u64>,
    /// Fresh random state for every iteration
    #[arg(long)]
    resample: bool,
}

#[derive(Args)]
struct BayesArgs {
    #[command(flatten)]
    common: Common,
    /// Total chain length, burn-in included
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    states: Option<usize>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long)]
    rank: Option<usize>,
}

#[derive(Args)]
struct QvcsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    circuit: Option<CircuitArg>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    depth_min: Option<usize>,
    #[arg(long)]
    depth_max: Option<usize>,
    #[arg(long)]
    states: Option<usize>,
    #[arg(long)]
    maxiter: Option<usize>,
    #[arg(long)]
    rhobeg: Option<f64>,
    #[arg(long, value_enum)]
    target: Option<TargetArg>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 2)]
    qubits: usize,
    #[arg(long, default_value_t = 1000)]
    shots: u64,
    #[arg(long, value_enum, default_value_t = StateArg::Ghz)]
    state: StateArg,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Dataset JSON file
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = ReconArg::Mle)]
    method: ReconArg,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// QVCS circuit
    #[arg(long, value_enum, default_value_t = CircuitArg::A)]
    circuit: CircuitArg,
    /// QVCS depth
    #[arg(long, default_value_t = 3)]
    depth: usize,
    /// Result JSON; printed to stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Linear,
    Mle,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Mixture,
    Angles,
}

#[derive(Clone, Copy, ValueEnum)]
enum CircuitArg {
    #[value(name = "A", alias = "a")]
    A,
    #[value(name = "B", alias = "b")]
    B,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Random,
    Disentangled,
}

#[derive(Clone, Copy, ValueEnum)]
enum StateArg {
    Ghz,
    Random,
    Zero,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReconArg {
    Linear,
    Mle,
    Bayes,
    Qvcs,
}

impl From<CircuitArg> for AnsatzTag {
    fn from(c: CircuitArg) -> Self {
        match c {
            CircuitArg::A => AnsatzTag::CircuitA,
            CircuitArg::B => AnsatzTag::CircuitB,
        }
    }
}

enum CliError {
    Config(String),
    Numeric(String),
}

impl From<QstError> for CliError {
    fn from(e: QstError) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Experiment defaults, overlaid by the config file, overlaid by flags.
fn base_config(kind: ExperimentKind, c: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::for_experiment(kind);
    if let Some(path) = &c.config {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut merged = serde_json::to_value(&cfg).map_err(config_err)?;
        merge(&mut merged, file);
        cfg = serde_json::from_value(merged).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        cfg.experiment = kind;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = Some(o.clone());
    }
    if let Some(q) = c.qubits {
        cfg.qubits = q;
    }
    if c.shots.is_some() {
        cfg.shots = c.shots;
    }
    Ok(cfg)
}

fn depth_range(
    lo: Option<usize>,
    hi: Option<usize>,
    current: Option<(usize, usize)>,
) -> CliResult<Option<(usize, usize)>> {
    match (lo, hi) {
        (None, None) => Ok(current),
        (Some(a), Some(b)) => Ok(Some((a, b))),
        _ => Err(config_err("--depth-min and --depth-max go together")),
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn build_config(cmd: &Command) -> CliResult<ExperimentConfig> {
    Ok(match cmd {
        Command::Ghz(a) => {
            let mut cfg = base_config(ExperimentKind::Ghz, &a.common)?;
            set(
                &mut cfg.method,
                a.method.map(|m| match m {
                    MethodArg::Linear => ReconMethod::Linear,
                    MethodArg::Mle => ReconMethod::Mle,
                    MethodArg::Both => ReconMethod::Both,
                }),
            );
            set(&mut cfg.seeds, a.seeds);
            cfg
        }
        Command::Vqc(a) => {
            let mut cfg = base_config(ExperimentKind::Vqc, &a.common)?;
            set(&mut cfg.depth, a.depth);
            cfg.depth_range = depth_range(a.depth_min, a.depth_max, cfg.depth_range)?;
            set(&mut cfg.optimizer.max_iters, a.iters);
            set(&mut cfg.optimizer.learning_rate, a.lr);
            if a.rank.is_some() {
                cfg.rank = a.rank;
            }
            cfg
        }
        Command::Qpca(a) => {
            let mut cfg = base_config(ExperimentKind::Qpca, &a.common)?;
            set(&mut cfg.sweep.t_start, a.t_start);
            set(&mut cfg.sweep.t_step, a.t_step);
            set(&mut cfg.sweep.t_count, a.t_count);
            set(&mut cfg.sweep.iterations, a.iters);
            set(&mut cfg.qpe.ancilla_qubits, a.ancilla);
            set(&mut cfg.qpe.shots, a.qpe_shots);
            if a.resample {
                cfg.sweep.resample_state = true;
            }
            cfg
        }
        Command::Bayes(a) => {
            let mut cfg = base_config(ExperimentKind::Bayes, &a.common)?;
            set(&mut cfg.chain.n_samples, a.samples);
            set(&mut cfg.chain.burn_in, a.burn_in);
            set(&mut cfg.chain.prior.pcn_beta, a.beta);
            set(&mut cfg.chain.prior.proposal_step, a.step);
            set(&mut cfg.chain.thin, a.thin);
            set(&mut cfg.states, a.states);
            set(
                &mut cfg.chain.model,
                a.model.map(|m| match m {
                    ModelArg::Mixture => BayesModel::Mixture,
                    ModelArg::Angles => BayesModel::Angles,
                }),
            );
            if a.rank.is_some() {
                cfg.rank = a.rank;
            }
            cfg
        }
        Command::Qvcs(a) => {
            let mut cfg = base_config(ExperimentKind::Qvcs, &a.common)?;
            set(&mut cfg.circuit, a.circuit.map(Into::into));
            set(&mut cfg.depth, a.depth);
            cfg.depth_range = depth_range(a.depth_min, a.depth_max, cfg.depth_range)?;
            set(&mut cfg.states, a.states);
            set(&mut cfg.optimizer.maxiter, a.maxiter);
            set(&mut cfg.optimizer.rhobeg, a.rhobeg);
            set(
                &mut cfg.target,
                a.target.map(|t| match t {
                    TargetArg::Random => TargetKind::Random,
                    TargetArg::Disentangled => TargetKind::Disentangled,
                }),
            );
            cfg
        }
        Command::Simulate(_) | Command::Reconstruct(_) => unreachable!("not an experiment"),
    })
}

fn report(rec: &ResultRecord) {
    println!("experiment: {}", rec.experiment.name());
    for (label, a) in &rec.aggregates {
        println!("{label}: mean fidelity {:.6} std {:.6} over {} rows", a.mean, a.std, a.count);
    }
    for (k, v) in &rec.summary {
        println!("{k}: {v}");
    }
    for w in &rec.warnings {
        println!("warning: {w}");
    }
    println!("wall time: {:.1} ms", rec.wall_ms);
}

fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let psi = match a.state {
        StateArg::Ghz => {
            let c = build_ghz(a.qubits)?;
            run_circuit(&c, &[], &StateVector::zero(a.qubits))?
        }
        StateArg::Random => random_pure_state(a.qubits, a.seed)?,
        StateArg::Zero => {
            if a.qubits == 0 {
                return Err(config_err("qubits must be >= 1"));
            }
            StateVector::zero(a.qubits)
        }
    };
    let data = simulate_dataset(&psi, &all_pauli_bases(a.qubits)?, a.shots, a.seed)?;
    fs::write(&a.out, data.to_json()?).map_err(|e| CliError::Numeric(e.to_string()))?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn reconstruct(a: &ReconstructArgs) -> CliResult<()> {
    let text = fs::read_to_string(&a.data).map_err(|e| config_err(format!("{}: {e}", a.data.display())))?;
    let data = MeasurementDataset::from_json(&text)?;
    let start = Instant::now();
    let ms = |s: Instant| s.elapsed().as_secs_f64() * 1e3;
    let result = match a.method {
        ReconArg::Linear => ReconstructionResult {
            method: "linear".into(),
            rho: linear_inversion(&data)?,
            fidelity: None,
            loss_trace: Vec::new(),
            iterations: 1,
            wall_ms: ms(start),
        },
        ReconArg::Mle => {
            let out = mle_iterate(&data, MLE_DEFAULT_MAX_ITER, MLE_DEFAULT_TOL)?;
            ReconstructionResult {
                method: "mle".into(),
                rho: out.rho,
                fidelity: None,
                loss_trace: out.loss_trace,
                iterations: out.iterations,
                wall_ms: ms(start),
            }
        }
        ReconArg::Bayes => {
            let cfg = ExperimentConfig::for_experiment(ExperimentKind::Bayes).chain;
            let out = run_chain(&data, &cfg, None, a.seed)?;
            ReconstructionResult {
                method: "bayes".into(),
                rho: out.mean,
                fidelity: None,
                loss_trace: out.diagnostics.trace.iter().map(|r| -r.log_posterior).collect(),
                iterations: cfg.n_samples,
                wall_ms: ms(start),
            }
        }
        ReconArg::Qvcs => {
            let kind = AnsatzKind::new(a.circuit.into(), a.depth)?;
            optimize_qvcs(&data, kind, &OptimizerConfig::cobyla(30.0, 150), None, a.seed)?.result
        }
    };
    let json = result.to_json()?;
    match &a.out {
        Some(p) => {
            fs::write(p, json).map_err(|e| CliError::Numeric(e.to_string()))?;
            println!("wrote {}", p.display());
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Reconstruct(a) => reconstruct(a),
        cmd => {
            let cfg = build_config(cmd)?;
            cfg.validate()?;
            let rec = run_experiment(&cfg)?;
            report(&rec);
            if let Some(out) = &cfg.out {
                for p in write_outputs(&rec, out)? {
                    println!("wrote {}", p.display());
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(3)
        }
    }
}
