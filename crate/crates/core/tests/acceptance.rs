//! Acceptance checks. Runs as a plain binary so every line is printed.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use qst_core::bayes::{density_from_mixture, run_chain, ChainConfig, GammaGaussianParams};
use qst_core::circuit::{build_ansatz, run_circuit, AnsatzKind, AnsatzTag, Angle, Gate, ParameterizedCircuit};
use qst_core::classical::{cholesky_to_density, linear_inversion, mle_iterate, CholeskyParams};
use qst_core::harness::{
    run_ghz_experiment, run_qvcs_experiment, ExperimentConfig, ExperimentKind, ReconMethod, TargetKind,
};
use qst_core::measurement::{all_pauli_bases, simulate_dataset};
use qst_core::numeric::{CMatrix, I};
use qst_core::qpca::{
    fidelity_sweep, find_optimal_t, reconstruct_from_qpe, swap_exponentiation_step, QpeConfig, SweepConfig,
};
use qst_core::rng::rng_from;
use qst_core::state::{
    embed_to_dimension, pure_fidelity, random_density_matrix, random_pure_state, uhlmann_fidelity,
    DensityMatrix, StateVector,
};
use qst_core::tolerance;
use qst_core::variational::{
    parameter_shift_gradient, vqc_fidelity, vqc_fidelity_gradient, vqc_reduced_state, VqcProblem,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn noiseless_oracle() -> Outcome {
    let start = Instant::now();
    let (mut worst_li, mut worst_mle) = (0.0f64, 0.0f64);
    for k in 0..100u64 {
        let n = 1 + (k % 3) as usize;
        let d = 1usize << n;
        let rank = [1, 2, d][(k / 3 % 3) as usize].min(d);
        let truth = random_density_matrix(n, rank, 10_000 + k).unwrap();
        let data = simulate_dataset(&truth, &all_pauli_bases(n).unwrap(), 0, k).unwrap();
        let li = linear_inversion(&data).unwrap();
        worst_li = worst_li.max(li.trace_distance(&truth).unwrap());
        let mle = mle_iterate(&data, 5000, 1e-12).unwrap();
        worst_mle = worst_mle.max(mle.rho.trace_distance(&truth).unwrap());
    }
    let t = start.elapsed();
    outcome(
        worst_li < 1e-8 && worst_mle < 1e-6 && within(t, 30),
        format!("worst trace distance linear {worst_li:.2e} (< 1e-8), MLE {worst_mle:.2e} (< 1e-6), {t:.2?}"),
    )
}

fn ghz_tomography() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        qubits: 3,
        shots: Some(2000),
        seeds: 10,
        method: ReconMethod::Mle,
        ..ExperimentConfig::for_experiment(ExperimentKind::Ghz)
    };
    let rec = run_ghz_experiment(&cfg).unwrap();
    let f = rec.mean("mle").unwrap();
    let t = start.elapsed();
    outcome(
        f >= 0.97 && within(t, 60),
        format!("mean MLE fidelity {f:.4} over 10 seeds at 2000 shots/basis (>= 0.97), {t:.2?}"),
    )
}

fn central_difference(f: impl Fn(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    (0..theta.len())
        .map(|i| {
            let mut x = theta.to_vec();
            x[i] = theta[i] + h;
            let plus = f(&x);
            x[i] = theta[i] - h;
            (plus - f(&x)) / (2.0 * h)
        })
        .collect()
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let h = 1e-5;
    let mut worst_vqc = 0.0f64;
    let mut worst_born = 0.0f64;
    for k in 0..100u64 {
        // Even: A(θ) on the 2-qubit purification circuit of a 1-qubit target.
        // Odd: a Born probability of a 3-qubit ansatz.
        if k % 2 == 0 {
            let target = random_density_matrix(1, 1 + (k / 2 % 2) as usize, k).unwrap();
            let kind = AnsatzKind::new(AnsatzTag::VqcLayered, 1 + (k % 5) as usize).unwrap();
            let problem = VqcProblem::random(target, kind, 500 + k).unwrap();
            let g = vqc_fidelity_gradient(&problem).unwrap();
            let a = |theta: &[f64]| {
                let p = VqcProblem::new(problem.target.clone(), problem.ansatz.clone(), theta.to_vec()).unwrap();
                vqc_fidelity(&p).unwrap()
            };
            let fd = central_difference(a, &problem.theta, h);
            worst_vqc = g.iter().zip(&fd).fold(worst_vqc, |w, (x, y)| w.max((x - y).abs()));
        } else {
            let tag = if k % 4 == 1 { AnsatzTag::CircuitA } else { AnsatzTag::CircuitB };
            let c = build_ansatz(AnsatzKind::new(tag, 1 + (k % 3) as usize).unwrap(), 3).unwrap();
            let theta: Vec<f64> =
                (0..c.num_parameters()).map(|i| ((k * 31 + i as u64) as f64 * 0.77).sin() * 3.0).collect();
            let outcome = (k % 8) as usize;
            let p = |x: &[f64]| run_circuit(&c, x, &StateVector::zero(3)).map(|s| s.probabilities()[outcome]);
            let g = parameter_shift_gradient(p, &theta).unwrap();
            let fd = central_difference(|x| p(x).unwrap(), &theta, h);
            worst_born = g.iter().zip(&fd).fold(worst_born, |w, (x, y)| w.max((x - y).abs()));
        }
    }
    let t = start.elapsed();
    let worst = worst_vqc.max(worst_born);
    outcome(
        worst < 1e-6 && within(t, 60),
        format!(
            "max |parameter-shift - central difference| {worst_vqc:.2e} for A(theta) on 2 qubits, \
             {worst_born:.2e} for 3-qubit Born probabilities, 100 instances (< 1e-6), {t:.2?}"
        ),
    )
}

fn qpca_sweep() -> Outcome {
    let start = Instant::now();
    let rho = random_pure_state(1, 2024).unwrap().to_density();
    let reduced = SweepConfig {
        t_start: 2.0,
        t_step: 0.5,
        t_count: 57,
        iterations: 20,
        resample_state: false,
    };
    let qpe = QpeConfig::default();
    let r = fidelity_sweep(&rho, &reduced, &qpe, 7).unwrap();
    let best = find_optimal_t(&r).unwrap();
    let reduced_time = start.elapsed();
    let full_start = Instant::now();
    let full = fidelity_sweep(&rho, &SweepConfig::default(), &qpe, 7).unwrap();
    let full_best = find_optimal_t(&full).unwrap();
    let full_time = full_start.elapsed();
    let ci_ok = full_best.ci_sigma.0 <= full_best.ci_standard_error.0
        && full_best.ci_standard_error.1 <= full_best.ci_sigma.1;
    outcome(
        r.has_interior_maximum()
            && (0.80..=1.0).contains(&best.mean_fidelity)
            && full.points.len() == 280
            && ci_ok
            && within(reduced_time, 300),
        format!(
            "reduced grid F_max {:.4} at t={} (interior {}), {reduced_time:.2?}; full grid t_opt {} F_max {:.4} \
             sigma {:.4} CI(1.96 sigma) ({:.4}, {:.4}) CI(1.96 sigma/sqrt N) ({:.4}, {:.4}), {full_time:.2?}",
            best.mean_fidelity,
            best.t,
            r.has_interior_maximum(),
            full_best.t,
            full_best.mean_fidelity,
            full_best.std_fidelity,
            full_best.ci_sigma.0,
            full_best.ci_sigma.1,
            full_best.ci_standard_error.0,
            full_best.ci_standard_error.1,
        ),
    )
}

fn qvcs_benchmark() -> Outcome {
    let start = Instant::now();
    let base = ExperimentConfig {
        qubits: 3,
        depth: 3,
        states: 25,
        circuit: AnsatzTag::CircuitA,
        ..ExperimentConfig::for_experiment(ExperimentKind::Qvcs)
    };
    let random = run_qvcs_experiment(&base).unwrap().mean("depth3").unwrap();
    let disentangled = run_qvcs_experiment(&ExperimentConfig {
        target: TargetKind::Disentangled,
        ..base.clone()
    })
    .unwrap()
    .mean("depth3")
    .unwrap();
    let t = start.elapsed();
    outcome(
        (0.60..=0.90).contains(&random) && disentangled > random && within(t, 600),
        format!(
            "mean fidelity random {random:.4} (in [0.60, 0.90]), disentangled {disentangled:.4} (> random), {t:.2?}"
        ),
    )
}

fn bayes_chain() -> Outcome {
    let start = Instant::now();
    let bases = all_pauli_bases(2).unwrap();
    let cfg = ChainConfig {
        n_samples: 10_000,
        burn_in: 2_000,
        ..ChainConfig::default()
    };
    let mut fids = Vec::new();
    let mut rates = Vec::new();
    let mut all_valid = true;
    for k in 0..10u64 {
        let truth = random_density_matrix(2, 4, 300 + k).unwrap();
        let data = simulate_dataset(&truth, &bases, 0, k).unwrap();
        let out = run_chain(&data, &cfg, None, 900 + k).unwrap();
        all_valid &= out.mean.is_physical(tolerance::PHYSICAL_EIGENVALUE);
        fids.push(uhlmann_fidelity(&out.mean, &truth).unwrap());
        rates.push(out.diagnostics.acceptance_rate);
    }
    let t = start.elapsed();
    let f = mean(&fids);
    let (lo, hi) = rates.iter().fold((1.0f64, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    outcome(
        f >= 0.90 && lo >= 0.05 && hi <= 0.8 && all_valid && within(t, 300),
        format!(
            "mean posterior-mean fidelity {f:.4} (>= 0.90), acceptance in [{lo:.3}, {hi:.3}] (within [0.05, 0.8]), \
             means valid {all_valid}, {t:.2?}"
        ),
    )
}

fn swap_order() -> Outcome {
    let start = Instant::now();
    let residual = |rho: &DensityMatrix, sigma: &DensityMatrix, dt: f64| {
        let out = swap_exponentiation_step(rho, sigma, dt).unwrap();
        let comm = rho.matrix().commutator(sigma.matrix()).unwrap();
        let first = sigma.matrix() - &comm.scale(I * dt);
        (out.matrix() - &first).frobenius_norm()
    };
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for k in 0..100u64 {
        let n = 1 + (k % 2) as usize;
        let rho = random_density_matrix(n, 1 + (k % 3) as usize % (1 << n), 40 + k).unwrap();
        let sigma = random_density_matrix(n, 1 + (k / 3 % 2) as usize, 4000 + k).unwrap();
        let ratio = residual(&rho, &sigma, 0.02) / residual(&rho, &sigma, 0.01);
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    let t = start.elapsed();
    outcome(
        lo >= 4.0 / 1.5 && hi <= 4.0 * 1.5 && within(t, 30),
        format!("residual ratio on halving dt in [{lo:.3}, {hi:.3}] (within [2.667, 6]), {t:.2?}"),
    )
}

fn suite<S: Strategy>(name: &str, strategy: S, check: impl Fn(S::Value) -> Result<(), TestCaseError>) -> (bool, String)
where
    S::Value: std::fmt::Debug,
{
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    match runner.run(&strategy, check) {
        Ok(()) => (true, format!("{name} ok")),
        Err(e) => (false, format!("{name} FAILED: {e}")),
    }
}

fn physical(rho: &DensityMatrix) -> bool {
    rho.is_physical(tolerance::PHYSICAL_EIGENVALUE)
}

fn random_gate(n: usize, choice: u8, a: usize, b: usize, angle: f64) -> Gate {
    let q = a % n;
    let r = (q + 1 + b % n.max(2)) % n;
    match choice % 7 {
        0 => Gate::H(q),
        1 => Gate::X(q),
        2 => Gate::Rx(q, Angle::Fixed(angle)),
        3 => Gate::Ry(q, Angle::Fixed(angle)),
        4 => Gate::Rz(q, Angle::Fixed(angle)),
        5 if n > 1 && r != q => Gate::Cnot { control: q, target: r },
        6 if n > 1 && r != q => Gate::ControlledU {
            control: q,
            targets: vec![r],
            matrix: qst_core::numeric::unitary_evolution(
                &CMatrix::from_real_rows(&[&[angle, 0.3], &[0.3, -angle]]),
                1.0,
            )
            .unwrap(),
        },
        _ => Gate::H(q),
    }
}

fn property_suites() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();

    lines.push(suite(
        "fidelity axioms",
        (1usize..=2, 1usize..=4, 1usize..=4, any::<u64>(), any::<u64>()),
        |(n, ra, rb, sa, sb)| {
            let d = 1 << n;
            let rho = random_density_matrix(n, ra.min(d), sa).unwrap();
            let sigma = random_density_matrix(n, rb.min(d), sb).unwrap();
            let f1 = uhlmann_fidelity(&rho, &sigma).unwrap();
            let f2 = uhlmann_fidelity(&sigma, &rho).unwrap();
            prop_assert!((f1 - f2).abs() < 1e-8, "asymmetric {f1} {f2}");
            prop_assert!((0.0..=1.0).contains(&f1));
            let own = uhlmann_fidelity(&rho, &rho).unwrap();
            prop_assert!((own - 1.0).abs() < 1e-8, "self fidelity {own}");
            let psi = random_pure_state(n, sa).unwrap();
            let phi = random_pure_state(n, sb).unwrap();
            let fp = uhlmann_fidelity(&psi.to_density(), &phi.to_density()).unwrap();
            prop_assert!((fp - pure_fidelity(&psi, &phi)).abs() < 1e-8, "pure {fp}");
            Ok(())
        },
    ));

    lines.push(suite(
        "density-matrix constructors",
        (1usize..=2, 1usize..=4, any::<u64>(), -3.0f64..3.0),
        |(n, r, seed, x)| {
            let d = 1usize << n;
            let rank = r.min(d);
            let mut rng = rng_from(seed);
            let rho = random_density_matrix(n, rank, seed).unwrap();
            prop_assert!(physical(&rho));
            let psi = random_pure_state(n, seed).unwrap();
            prop_assert!(physical(&psi.to_density()));
            prop_assert!(physical(&DensityMatrix::maximally_mixed(d)));
            let validated = DensityMatrix::new(rho.matrix().clone()).unwrap();
            prop_assert!(physical(&validated));
            let (a, b) = embed_to_dimension(&rho, &random_density_matrix(1, 1, seed ^ 1).unwrap()).unwrap();
            prop_assert!(physical(&a) && physical(&b));
            let mix = GammaGaussianParams::sample_prior(d, d, 1.0, &mut rng).unwrap();
            prop_assert!(physical(&density_from_mixture(&mix).unwrap()));
            let t: Vec<f64> = (0..d * d).map(|i| x + (i as f64 * 0.7 + seed as f64).sin()).collect();
            prop_assert!(physical(&cholesky_to_density(&CholeskyParams(t)).unwrap()));
            let sigma = random_density_matrix(n, 1, seed ^ 2).unwrap();
            prop_assert!(physical(&swap_exponentiation_step(&rho, &sigma, x / 30.0).unwrap()));
            let cfg = QpeConfig {
                t: x.abs() * 5.0,
                shots: 20,
                ..QpeConfig::default()
            };
            prop_assert!(physical(&reconstruct_from_qpe(&rho, &cfg, seed).unwrap()));
            if n == 1 {
                let data = simulate_dataset(&rho, &all_pauli_bases(1).unwrap(), 50, seed).unwrap();
                prop_assert!(physical(&linear_inversion(&data).unwrap()));
                let kind = AnsatzKind::new(AnsatzTag::VqcLayered, 2).unwrap();
                let p = VqcProblem::random(rho.clone(), kind, seed).unwrap();
                prop_assert!(physical(&vqc_reduced_state(&p).unwrap()));
            }
            Ok(())
        },
    ));

    lines.push(suite(
        "circuit norm preservation",
        (
            1usize..=5,
            any::<u64>(),
            proptest::collection::vec((any::<u8>(), 0usize..5, 0usize..5, -7.0f64..7.0), 100),
        ),
        |(n, seed, gates)| {
            let mut c = ParameterizedCircuit::new(n);
            for (choice, a, b, angle) in gates {
                c.push(random_gate(n, choice, a, b, angle)).unwrap();
            }
            let input = random_pure_state(n, seed).unwrap();
            let out = run_circuit(&c, &[], &input).unwrap();
            prop_assert!((out.norm() - 1.0).abs() < 1e-10, "norm {}", out.norm());
            let ansatz = build_ansatz(AnsatzKind::new(AnsatzTag::CircuitA, 2).unwrap(), n).unwrap();
            let theta: Vec<f64> = (0..ansatz.num_parameters()).map(|i| (seed as f64 + i as f64).cos() * 3.0).collect();
            let out = run_circuit(&ansatz, &theta, &StateVector::zero(n)).unwrap();
            prop_assert!((out.norm() - 1.0).abs() < 1e-10);
            Ok(())
        },
    ));

    lines.push(suite(
        "dataset determinism",
        (1usize..=3, 0u64..5000, any::<u64>(), any::<u64>()),
        |(n, shots, state_seed, seed)| {
            let rho = random_density_matrix(n, 1 + (state_seed % 2) as usize, state_seed).unwrap();
            let bases = all_pauli_bases(n).unwrap();
            let a = simulate_dataset(&rho, &bases, shots, seed).unwrap();
            let b = simulate_dataset(&rho, &bases, shots, seed).unwrap();
            prop_assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
            for f in a.freqs() {
                let s: f64 = f.iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
            Ok(())
        },
    ));

    let t = start.elapsed();
    let pass = lines.iter().all(|(ok, _)| *ok) && within(t, 120);
    let detail = lines.into_iter().map(|(_, l)| l).collect::<Vec<_>>().join("; ");
    outcome(pass, format!("1000 cases each: {detail}, {t:.2?}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("noiseless oracle equivalence", noiseless_oracle),
        ("GHZ tomography", ghz_tomography),
        ("gradient correctness", gradient_check),
        ("qPCA sweep", qpca_sweep),
        ("QVCS benchmark", qvcs_benchmark),
        ("Bayesian chain", bayes_chain),
        ("swap-exponentiation order", swap_order),
        ("property suites", property_suites),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {} [{}] {name}: {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
