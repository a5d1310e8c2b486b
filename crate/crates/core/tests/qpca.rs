use qst_core::qpca::{
    eigenvalue_from_outcome, find_optimal_t, fidelity_sweep, qpe_table, reconstruct_from_qpe, QpeConfig, SweepConfig,
};
use qst_core::numeric::unitary_evolution;
use qst_core::state::{random_density_matrix, random_pure_state, uhlmann_fidelity};

#[test]
fn reduced_grid_sweep() {
    let rho = random_pure_state(1, 7).unwrap().to_density();
    let sweep = SweepConfig { t_start: 0.5, t_step: 0.5, t_count: 20, iterations: 20, resample_state: false };
    let qpe = QpeConfig::default();
    let res = fidelity_sweep(&rho, &sweep, &qpe, 1).unwrap();
    assert_eq!(res.points.len(), 20);
    let best = find_optimal_t(&res).unwrap();
    assert!(best.mean_fidelity > 0.9);
    assert!(res.points.iter().any(|p| p.mean_fidelity < best.mean_fidelity - 0.05));
    let mut csv = Vec::new();
    res.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("t,mean_fidelity,std_fidelity,n_iterations"));
    assert_eq!(text.lines().count(), 21);
}

#[test]
fn qpe_outcome_distribution_is_normalized() {
    let rho = random_density_matrix(2, 3, 5).unwrap();
    let u = unitary_evolution(rho.matrix(), 4.0).unwrap();
    let table = qpe_table(&rho, &u, 3).unwrap();
    assert_eq!(table.probabilities.len(), 8);
    assert!((table.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-10);
}

#[test]
fn exact_phases_are_recovered() {
    use std::f64::consts::PI;
    for m in 1..=6 {
        let n = 1usize << m;
        for j in 0..n {
            let t = 7.5;
            // e^{-iλt} with λt = 2πj/n lands exactly on outcome (n - j) mod n.
            let lambda = 2.0 * PI * j as f64 / (n as f64 * t);
            let k = (n - j) % n;
            assert!((eigenvalue_from_outcome(k, m, t) - lambda).abs() < 1e-12);
            assert!(eigenvalue_from_outcome(j, m, t) >= 0.0);
        }
    }
}

#[test]
fn reconstruction_is_seeded() {
    let rho = random_density_matrix(1, 2, 2).unwrap();
    let cfg = QpeConfig { ancilla_qubits: 3, t: 3.0, shots: 100 };
    let a = reconstruct_from_qpe(&rho, &cfg, 9).unwrap();
    let b = reconstruct_from_qpe(&rho, &cfg, 9).unwrap();
    assert_eq!(a.matrix().max_abs_diff(b.matrix()), 0.0);
    assert!(uhlmann_fidelity(&a, &rho).unwrap() > 0.5);
}
