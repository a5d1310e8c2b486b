//! Experiment orchestration: prepare targets, simulate data, reconstruct,
//! score, and emit CSV tables plus a run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{run_chain, ChainConfig};
use crate::circuit::{build_ghz, run_circuit, AnsatzKind, AnsatzTag, ParameterizedCircuit};
use crate::classical::{linear_inversion, mle_iterate, MLE_DEFAULT_MAX_ITER, MLE_DEFAULT_TOL};
use crate::error::{QstError, Result};
use crate::measurement::{all_pauli_bases, simulate_dataset, MAX_PAULI_QUBITS};
use crate::qpca::{fidelity_sweep, find_optimal_t, mean_std, QpeConfig, SweepConfig};
use crate::rng::{derive_seed, tag};
use crate::state::{
    random_density_matrix, random_pure_state, uhlmann_fidelity, DensityMatrix, StateVector,
};
use crate::variational::{optimize_qvcs, optimize_vqc, OptimizerConfig, OptimizerMethod, VqcProblem};

pub const MAX_BAYES_QUBITS: usize = 4;
pub const MAX_QPCA_QUBITS: usize = 3;
pub const DEFAULT_GHZ_SHOTS: u64 = 2000;
pub const DEFAULT_QVCS_SHOTS: u64 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Ghz,
    Vqc,
    Qpca,
    Bayes,
    Qvcs,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Ghz => "ghz",
            ExperimentKind::Vqc => "vqc",
            ExperimentKind::Qpca => "qpca",
            ExperimentKind::Bayes => "bayes",
            ExperimentKind::Qvcs => "qvcs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconMethod {
    Linear,
    Mle,
    Both,
}

/// Target family for the QVCS benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Random,
    /// Qubit 0 in a product with the rest.
    Disentangled,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub qubits: usize,
    pub depth: usize,
    /// Inclusive depth sweep for the VQC and QVCS experiments.
    pub depth_range: Option<(usize, usize)>,
    /// Shots per basis, 0 for exact probabilities. `None` picks the
    /// experiment default.
    pub shots: Option<u64>,
    pub seed: u64,
    /// Independent repetitions (GHZ).
    pub seeds: usize,
    /// Random targets (Bayes, QVCS).
    pub states: usize,
    pub method: ReconMethod,
    pub circuit: AnsatzTag,
    pub target: TargetKind,
    /// Rank of random mixed targets; `None` picks the experiment default.
    pub rank: Option<usize>,
    pub optimizer: OptimizerConfig,
    pub chain: ChainConfig,
    pub qpe: QpeConfig,
    pub sweep: SweepConfig,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Ghz,
            qubits: 3,
            depth: 3,
            depth_range: None,
            shots: None,
            seed: 42,
            seeds: 10,
            states: 25,
            method: ReconMethod::Both,
            circuit: AnsatzTag::CircuitA,
            target: TargetKind::Random,
            rank: None,
            optimizer: OptimizerConfig::default(),
            chain: ChainConfig::default(),
            qpe: QpeConfig::default(),
            sweep: SweepConfig::default(),
            out: None,
        }
    }
}

fn invalid(msg: impl Into<String>) -> QstError {
    QstError::InvalidArgument(msg.into())
}

impl ExperimentConfig {
    pub fn for_experiment(experiment: ExperimentKind) -> Self {
        let mut cfg = Self {
            experiment,
            ..Self::default()
        };
        match experiment {
            ExperimentKind::Ghz => {}
            ExperimentKind::Vqc => {
                cfg.depth = 10;
            }
            ExperimentKind::Qpca => cfg.qubits = 1,
            ExperimentKind::Bayes => {
                cfg.qubits = 2;
                cfg.states = 10;
            }
            ExperimentKind::Qvcs => cfg.optimizer = OptimizerConfig::cobyla(30.0, 150),
        }
        cfg
    }

    pub fn shots(&self) -> u64 {
        self.shots.unwrap_or(match self.experiment {
            ExperimentKind::Ghz => DEFAULT_GHZ_SHOTS,
            ExperimentKind::Qvcs => DEFAULT_QVCS_SHOTS,
            _ => 0,
        })
    }

    pub fn depths(&self) -> Vec<usize> {
        match self.depth_range {
            Some((lo, hi)) => (lo..=hi).collect(),
            None => vec![self.depth],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.qubits == 0 {
            return Err(invalid("qubits must be >= 1"));
        }
        let max_qubits = match self.experiment {
            ExperimentKind::Bayes => MAX_BAYES_QUBITS,
            ExperimentKind::Qpca => MAX_QPCA_QUBITS,
            _ => MAX_PAULI_QUBITS,
        };
        if self.qubits > max_qubits {
            return Err(invalid(format!(
                "{} experiment supports at most {max_qubits} qubits, got {}",
                self.experiment.name(),
                self.qubits
            )));
        }
        if self.depth == 0 {
            return Err(invalid("depth must be >= 1"));
        }
        if let Some((lo, hi)) = self.depth_range {
            if lo == 0 || lo > hi {
                return Err(invalid(format!("invalid depth range {lo}..={hi}")));
            }
        }
        if self.seeds == 0 || self.states == 0 {
            return Err(invalid("seeds and states must be >= 1"));
        }
        if let Some(r) = self.rank {
            if r == 0 || r > 1 << self.qubits {
                return Err(invalid(format!("rank {r} outside 1..={}", 1usize << self.qubits)));
            }
        }
        match self.experiment {
            ExperimentKind::Ghz if self.qubits < 2 => Err(invalid("GHZ needs >= 2 qubits")),
            ExperimentKind::Qvcs => {
                if self.circuit == AnsatzTag::VqcLayered {
                    return Err(invalid("QVCS circuit must be A or B"));
                }
                if self.target == TargetKind::Disentangled && self.qubits < 2 {
                    return Err(invalid("disentangled targets need >= 2 qubits"));
                }
                self.optimizer.validate()
            }
            ExperimentKind::Vqc => self.optimizer.validate(),
            ExperimentKind::Bayes => self.chain.validate(),
            ExperimentKind::Qpca => {
                self.qpe.validate()?;
                self.sweep.validate()
            }
            _ => Ok(()),
        }
    }

    fn run_seed(&self, labels: &[u64]) -> u64 {
        let mut all = vec![tag(self.experiment.name())];
        all.extend_from_slice(labels);
        derive_seed(self.seed, &all)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub run: usize,
    pub label: String,
    pub fidelity: f64,
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.header.join(","))?;
        for r in &self.rows {
            writeln!(out, "{}", r.join(","))?;
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }
}

macro_rules! cells {
    ($($x:expr),* $(,)?) => { vec![$($x.to_string()),*] };
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub rows: Vec<RunRow>,
    /// Keyed by row label.
    pub aggregates: BTreeMap<String, Aggregate>,
    pub summary: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub tables: Vec<Table>,
    pub wall_ms: f64,
}

impl ResultRecord {
    fn new(config: &ExperimentConfig) -> Self {
        Self {
            experiment: config.experiment,
            config: config.clone(),
            rows: Vec::new(),
            aggregates: BTreeMap::new(),
            summary: BTreeMap::new(),
            warnings: Vec::new(),
            tables: Vec::new(),
            wall_ms: 0.0,
        }
    }

    pub fn compute_aggregates(rows: &[RunRow]) -> BTreeMap<String, Aggregate> {
        let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in rows {
            groups.entry(r.label.clone()).or_default().push(r.fidelity);
        }
        groups
            .into_iter()
            .map(|(k, v)| {
                let (mean, std) = mean_std(&v);
                (
                    k,
                    Aggregate {
                        count: v.len(),
                        mean,
                        std,
                    },
                )
            })
            .collect()
    }

    fn finish(mut self, start: Instant) -> Self {
        self.aggregates = Self::compute_aggregates(&self.rows);
        self.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        for w in &self.warnings {
            log::warn!("{w}");
        }
        self
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn mean(&self, label: &str) -> Option<f64> {
        self.aggregates.get(label).map(|a| a.mean)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub version: String,
    pub wall_ms: f64,
    pub aggregates: BTreeMap<String, Aggregate>,
    pub summary: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub outputs: Vec<PathBuf>,
}

/// Writes every table and a manifest. A path ending in `.csv` receives the
/// first table, the others going next to it as `<stem>_<table>.csv`; any
/// other path is treated as a directory.
pub fn write_outputs(record: &ResultRecord, out: &Path) -> Result<Vec<PathBuf>> {
    let is_file = out.extension().is_some_and(|e| e == "csv");
    let (dir, stem) = if is_file {
        let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
        let stem = out.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        (dir, Some(stem))
    } else {
        (out.to_path_buf(), None)
    };
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(&dir)?;
    }
    let mut written = Vec::new();
    for (i, t) in record.tables.iter().enumerate() {
        let path = match &stem {
            Some(_) if i == 0 => out.to_path_buf(),
            Some(s) => dir.join(format!("{s}_{}.csv", t.name)),
            None => dir.join(format!("{}.csv", t.name)),
        };
        t.write_csv(fs::File::create(&path)?)?;
        written.push(path);
    }
    let manifest_path = match &stem {
        Some(s) => dir.join(format!("{s}_manifest.json")),
        None => dir.join("manifest.json"),
    };
    written.push(manifest_path.clone());
    let manifest = RunManifest {
        experiment: record.experiment,
        config: record.config.clone(),
        seed: record.config.seed,
        version: env!("CARGO_PKG_VERSION").into(),
        wall_ms: record.wall_ms,
        aggregates: record.aggregates.clone(),
        summary: record.summary.clone(),
        warnings: record.warnings.clone(),
        outputs: written.clone(),
    };
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(written)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    match cfg.experiment {
        ExperimentKind::Ghz => run_ghz_experiment(cfg),
        ExperimentKind::Vqc => run_vqc_experiment(cfg),
        ExperimentKind::Qpca => run_qpca_experiment(cfg),
        ExperimentKind::Bayes => run_bayes_experiment(cfg),
        ExperimentKind::Qvcs => run_qvcs_experiment(cfg),
    }
}

fn prepare(c: &ParameterizedCircuit) -> Result<StateVector> {
    run_circuit(c, &[], &StateVector::zero(c.num_qubits()))
}

fn tomography(
    truth: &DensityMatrix,
    method: ReconMethod,
    shots: u64,
    seed: u64,
) -> Result<Vec<(&'static str, f64, Option<f64>, usize)>> {
    let bases = all_pauli_bases(truth.num_qubits().unwrap_or(1))?;
    let data = simulate_dataset(truth, &bases, shots, seed)?;
    let mut out = Vec::new();
    if matches!(method, ReconMethod::Linear | ReconMethod::Both) {
        let rho = linear_inversion(&data)?;
        out.push(("linear", uhlmann_fidelity(&rho, truth)?, None, 0));
    }
    if matches!(method, ReconMethod::Mle | ReconMethod::Both) {
        let mle = mle_iterate(&data, MLE_DEFAULT_MAX_ITER, MLE_DEFAULT_TOL)?;
        out.push((
            "mle",
            uhlmann_fidelity(&mle.rho, truth)?,
            mle.loss_trace.last().copied(),
            mle.iterations,
        ));
    }
    Ok(out)
}

/// GHZ tomography over `seeds` repetitions plus tomography after every
/// prefix of the preparation circuit.
pub fn run_ghz_experiment(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let circuit = build_ghz(cfg.qubits)?;
    let truth = prepare(&circuit)?.to_density();
    let shots = cfg.shots();
    let runs: Vec<_> = (0..cfg.seeds)
        .into_par_iter()
        .map(|r| {
            let t = Instant::now();
            let res = tomography(&truth, cfg.method, shots, cfg.run_seed(&[r as u64]))?;
            Ok((res, t.elapsed().as_secs_f64() * 1e3))
        })
        .collect::<Result<_>>()?;
    let mut rec = ResultRecord::new(cfg);
    let mut table = Table::new("runs", &["run", "method", "fidelity", "final_loss", "iterations", "wall_ms"]);
    for (r, (res, ms)) in runs.into_iter().enumerate() {
        for (method, f, loss, iters) in res {
            table.push(cells![r, method, f, opt(loss), iters, ms]);
            rec.rows.push(RunRow {
                run: r,
                label: method.into(),
                fidelity: f,
                loss,
            });
        }
    }
    rec.tables.push(table);

    let prefix_method = match cfg.method {
        ReconMethod::Linear => ReconMethod::Linear,
        _ => ReconMethod::Mle,
    };
    let gates = circuit.gates().len();
    let prefix: Vec<_> = (0..=gates)
        .into_par_iter()
        .map(|len| {
            let c = circuit.prefix(len);
            let state = prepare(&c)?.to_density();
            let res = tomography(&state, prefix_method, shots, cfg.run_seed(&[tag("prefix"), len as u64]))?;
            let label = if len == 0 {
                "init".to_string()
            } else {
                format!("{:?}", c.gates()[len - 1]).replace(',', ";")
            };
            Ok((label, res[0].1))
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new("prefix", &["prefix_len", "last_gate", "fidelity"]);
    for (len, (label, f)) in prefix.into_iter().enumerate() {
        table.push(cells![len, label, f]);
    }
    rec.tables.push(table);
    Ok(rec.finish(start))
}

/// Loss against depth and against iteration count for one random target.
pub fn run_vqc_experiment(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let rank = cfg.rank.unwrap_or(2.min(1 << cfg.qubits));
    let target = random_density_matrix(cfg.qubits, rank, cfg.run_seed(&[tag("target")]))?;
    let mut depths = cfg.depths();
    if !depths.contains(&cfg.depth) {
        depths.push(cfg.depth);
    }
    let opt_cfg = OptimizerConfig {
        method: OptimizerMethod::GradientDescent,
        ..cfg.optimizer.clone()
    };
    let outcomes: Vec<_> = depths
        .par_iter()
        .map(|&d| {
            let kind = AnsatzKind::new(AnsatzTag::VqcLayered, d)?;
            let s = cfg.run_seed(&[d as u64]);
            let problem = VqcProblem::random(target.clone(), kind, s)?;
            let out = optimize_vqc(&problem, &opt_cfg, s)?;
            let f = uhlmann_fidelity(&out.result.rho, &target)?;
            Ok((d, out, f))
        })
        .collect::<Result<_>>()?;
    let mut rec = ResultRecord::new(cfg);
    let mut by_depth = Table::new("depth", &["depth", "final_loss", "overlap", "fidelity", "iterations"]);
    for (d, out, f) in &outcomes {
        if cfg.depths().contains(d) {
            let loss = *out.loss_trace.last().expect("trace holds the initial loss");
            by_depth.push(cells![d, loss, out.fidelity, f, out.result.iterations]);
            rec.rows.push(RunRow {
                run: *d,
                label: "vqc".into(),
                fidelity: *f,
                loss: Some(loss),
            });
        }
    }
    rec.tables.push(by_depth);
    let (_, main, _) = outcomes
        .iter()
        .find(|(d, _, _)| *d == cfg.depth)
        .expect("configured depth was run");
    let mut by_iter = Table::new("iterations", &["iteration", "loss"]);
    for (i, l) in padded_trace(&main.loss_trace, opt_cfg.max_iters).into_iter().enumerate() {
        by_iter.push(cells![i + 1, l]);
    }
    rec.tables.push(by_iter);
    rec.summary.insert("lambda_max".into(), target.eigenvalues()[0]);
    Ok(rec.finish(start))
}

/// Loss after each of `len` iterations; an early stop repeats the last value.
pub fn padded_trace(trace: &[f64], len: usize) -> Vec<f64> {
    let last = *trace.last().unwrap_or(&f64::NAN);
    (0..len).map(|i| *trace.get(i + 1).unwrap_or(&last)).collect()
}

/// Fidelity-vs-`t` sweep on a random pure state.
pub fn run_qpca_experiment(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let rho = random_pure_state(cfg.qubits, cfg.run_seed(&[tag("target")]))?.to_density();
    let sweep = fidelity_sweep(&rho, &cfg.sweep, &cfg.qpe, cfg.run_seed(&[tag("sweep")]))?;
    let best = find_optimal_t(&sweep)?;
    let mut rec = ResultRecord::new(cfg);
    let mut table = Table::new("sweep", &["t", "mean_fidelity", "std_fidelity", "n_iterations"]);
    for (i, p) in sweep.points.iter().enumerate() {
        table.push(cells![p.t, p.mean_fidelity, p.std_fidelity, p.fidelities.len()]);
        rec.rows.push(RunRow {
            run: i,
            label: "sweep".into(),
            fidelity: p.mean_fidelity,
            loss: None,
        });
    }
    rec.tables.push(table);
    let mut opt_table = Table::new(
        "optimum",
        &[
            "t_opt",
            "mean_fidelity",
            "std_fidelity",
            "n_iterations",
            "ci_sigma_low",
            "ci_sigma_high",
            "ci_se_low",
            "ci_se_high",
        ],
    );
    opt_table.push(cells![
        best.t,
        best.mean_fidelity,
        best.std_fidelity,
        best.n_iterations,
        best.ci_sigma.0,
        best.ci_sigma.1,
        best.ci_standard_error.0,
        best.ci_standard_error.1
    ]);
    rec.tables.push(opt_table);
    for (k, v) in [
        ("t_opt", best.t),
        ("mean_fidelity_max", best.mean_fidelity),
        ("std_at_opt", best.std_fidelity),
        ("ci_sigma_low", best.ci_sigma.0),
        ("ci_sigma_high", best.ci_sigma.1),
        ("ci_se_low", best.ci_standard_error.0),
        ("ci_se_high", best.ci_standard_error.1),
    ] {
        rec.summary.insert(k.into(), v);
    }
    rec.summary.insert("interior_maximum".into(), sweep.has_interior_maximum() as u8 as f64);
    Ok(rec.finish(start))
}

/// Posterior-mean fidelity over random targets, plus the trace of the first chain.
pub fn run_bayes_experiment(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let bases = all_pauli_bases(cfg.qubits)?;
    let rank = cfg.rank.unwrap_or(1 << cfg.qubits);
    let shots = cfg.shots();
    let outcomes: Vec<_> = (0..cfg.states)
        .into_par_iter()
        .map(|i| {
            let target = random_density_matrix(cfg.qubits, rank, cfg.run_seed(&[tag("target"), i as u64]))?;
            let data = simulate_dataset(&target, &bases, shots, cfg.run_seed(&[tag("data"), i as u64]))?;
            let out = run_chain(&data, &cfg.chain, Some(&target), cfg.run_seed(&[tag("chain"), i as u64]))?;
            let f = uhlmann_fidelity(&out.mean, &target)?;
            Ok((f, out))
        })
        .collect::<Result<_>>()?;
    let mut rec = ResultRecord::new(cfg);
    let mut table = Table::new("fidelity", &["state_index", "fidelity", "acceptance_rate"]);
    for (i, (f, out)) in outcomes.iter().enumerate() {
        let acc = out.diagnostics.acceptance_rate;
        table.push(cells![i, f, acc]);
        rec.rows.push(RunRow {
            run: i,
            label: "posterior_mean".into(),
            fidelity: *f,
            loss: None,
        });
        if !(0.05..=0.8).contains(&acc) {
            rec.warnings.push(format!("state {i}: acceptance rate {acc:.3} outside [0.05, 0.8]"));
        }
    }
    rec.tables.push(table);
    let mut trace = Table::new("trace", &["step", "log_posterior", "accepted", "fidelity_to_truth"]);
    for r in &outcomes[0].1.diagnostics.trace {
        trace.push(cells![r.step, r.log_posterior, r.accepted as u8, opt(r.fidelity_to_truth)]);
    }
    rec.tables.push(trace);
    let rates: Vec<f64> = outcomes.iter().map(|(_, o)| o.diagnostics.acceptance_rate).collect();
    rec.summary.insert("mean_acceptance_rate".into(), mean_std(&rates).0);
    Ok(rec.finish(start))
}

pub fn qvcs_target(n: usize, kind: TargetKind, seed: u64) -> Result<StateVector> {
    match kind {
        TargetKind::Random => random_pure_state(n, seed),
        TargetKind::Disentangled => {
            let a = random_pure_state(1, derive_seed(seed, &[1]))?;
            let b = random_pure_state(n - 1, derive_seed(seed, &[2]))?;
            Ok(a.tensor(&b))
        }
    }
}

fn circuit_name(tag: AnsatzTag) -> &'static str {
    match tag {
        AnsatzTag::CircuitA => "A",
        AnsatzTag::CircuitB => "B",
        AnsatzTag::VqcLayered => "vqc",
    }
}

/// COBYLA-trained QVCS over random pure targets, for every configured depth.
pub fn run_qvcs_experiment(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let bases = all_pauli_bases(cfg.qubits)?;
    let shots = cfg.shots();
    let opt_cfg = OptimizerConfig {
        method: OptimizerMethod::Cobyla,
        ..cfg.optimizer.clone()
    };
    let jobs: Vec<(usize, usize)> = cfg
        .depths()
        .into_iter()
        .flat_map(|d| (0..cfg.states).map(move |i| (d, i)))
        .collect();
    let outcomes: Vec<_> = jobs
        .par_iter()
        .map(|&(d, i)| {
            // Targets and data depend on the state index only, so every depth
            // sees the same ensemble.
            let target = qvcs_target(cfg.qubits, cfg.target, cfg.run_seed(&[tag("target"), i as u64]))?;
            let data = simulate_dataset(&target, &bases, shots, cfg.run_seed(&[tag("data"), i as u64]))?;
            let kind = AnsatzKind::new(cfg.circuit, d)?;
            optimize_qvcs(&data, kind, &opt_cfg, Some(&target), cfg.run_seed(&[tag("init"), i as u64]))
        })
        .collect::<Result<_>>()?;
    let mut rec = ResultRecord::new(cfg);
    let circuit = circuit_name(cfg.circuit);
    let mut table = Table::new(
        "benchmark",
        &["state_index", "method", "circuit", "qubits", "depth", "final_loss", "fidelity", "evals", "wall_ms"],
    );
    for (&(d, i), out) in jobs.iter().zip(&outcomes) {
        let f = out.result.fidelity.expect("truth was supplied");
        table.push(cells![i, "qvcs", circuit, cfg.qubits, d, out.final_loss, f, out.evals, out.result.wall_ms]);
        rec.rows.push(RunRow {
            run: i,
            label: format!("depth{d}"),
            fidelity: f,
            loss: Some(out.final_loss),
        });
    }
    rec.tables.push(table);
    let mut rec = rec.finish(start);
    let mut by_depth = Table::new("depth", &["depth", "mean_fidelity", "std_fidelity"]);
    for d in cfg.depths() {
        let a = rec.aggregates[&format!("depth{d}")];
        by_depth.push(cells![d, a.mean, a.std]);
    }
    rec.tables.push(by_depth);
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ghz_cfg() -> ExperimentConfig {
        ExperimentConfig {
            seeds: 2,
            shots: Some(0),
            ..ExperimentConfig::for_experiment(ExperimentKind::Ghz)
        }
    }

    #[test]
    fn ghz_noiseless_is_exact() {
        let rec = run_ghz_experiment(&ghz_cfg()).unwrap();
        for r in &rec.rows {
            assert!((r.fidelity - 1.0).abs() < 1e-8, "{r:?}");
        }
        let gates = build_ghz(3).unwrap().gates().len();
        assert_eq!(rec.table("prefix").unwrap().rows.len(), gates + 1);
    }

    #[test]
    fn guards_fire_before_compute() {
        let bad = [
            ExperimentConfig { qubits: 1, ..ghz_cfg() },
            ExperimentConfig { qubits: 6, ..ghz_cfg() },
            ExperimentConfig {
                qubits: 5,
                ..ExperimentConfig::for_experiment(ExperimentKind::Bayes)
            },
            ExperimentConfig {
                circuit: AnsatzTag::VqcLayered,
                ..ExperimentConfig::for_experiment(ExperimentKind::Qvcs)
            },
            ExperimentConfig {
                depth_range: Some((4, 2)),
                ..ExperimentConfig::for_experiment(ExperimentKind::Vqc)
            },
            ExperimentConfig { seeds: 0, ..ghz_cfg() },
        ];
        for cfg in &bad {
            let err = run_experiment(cfg).unwrap_err();
            assert!(err.is_config(), "{err}");
        }
    }

    #[test]
    fn aggregates_match_rows() {
        let rec = run_ghz_experiment(&ExperimentConfig {
            shots: Some(200),
            ..ghz_cfg()
        })
        .unwrap();
        assert_eq!(rec.aggregates, ResultRecord::compute_aggregates(&rec.rows));
        let mle: Vec<f64> = rec.rows.iter().filter(|r| r.label == "mle").map(|r| r.fidelity).collect();
        let mean = mle.iter().sum::<f64>() / mle.len() as f64;
        assert!((rec.mean("mle").unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn padded_trace_repeats_last_value() {
        assert_eq!(padded_trace(&[3.0, 2.0, 1.0], 4), vec![2.0, 1.0, 1.0, 1.0]);
        assert_eq!(padded_trace(&[3.0], 2), vec![3.0, 3.0]);
    }

    #[test]
    fn disentangled_target_is_a_product() {
        let psi = qvcs_target(3, TargetKind::Disentangled, 5).unwrap();
        let rho = psi.to_density();
        let reduced = crate::numeric::partial_trace(rho.matrix(), (2, 4), crate::numeric::Keep::A).unwrap();
        let purity = (&reduced * &reduced).trace().re;
        assert!((purity - 1.0).abs() < 1e-10);
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ExperimentConfig::for_experiment(ExperimentKind::Qvcs);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
        let partial: ExperimentConfig =
            serde_json::from_str(r#"{"experiment":"bayes","qubits":2,"chain":{"burn_in":10}}"#).unwrap();
        assert_eq!(partial.chain.burn_in, 10);
        assert_eq!(partial.chain.n_samples, ChainConfig::default().n_samples);
    }

    #[test]
    fn outputs_written_next_to_csv_path() {
        let dir = std::env::temp_dir().join(format!("qst-harness-{}", std::process::id()));
        let rec = run_ghz_experiment(&ghz_cfg()).unwrap();
        let paths = write_outputs(&rec, &dir.join("ghz.csv")).unwrap();
        assert_eq!(paths[0], dir.join("ghz.csv"));
        assert!(dir.join("ghz_prefix.csv").exists());
        let manifest: RunManifest =
            serde_json::from_str(&fs::read_to_string(dir.join("ghz_manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest.seed, 42);
        fs::remove_dir_all(&dir).unwrap();
    }
}
