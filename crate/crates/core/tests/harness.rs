use qst_core::harness::{run_experiment, write_outputs, ExperimentConfig, ExperimentKind};

fn small(kind: ExperimentKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::for_experiment(kind);
    cfg.seeds = 3;
    cfg.states = 3;
    cfg.optimizer.max_iters = 30;
    cfg.optimizer.maxiter = 60;
    cfg.chain.n_samples = 600;
    cfg.chain.burn_in = 100;
    cfg.sweep.t_count = 6;
    cfg.sweep.iterations = 4;
    match kind {
        ExperimentKind::Ghz | ExperimentKind::Qvcs => cfg.qubits = 2,
        ExperimentKind::Vqc => {
            cfg.qubits = 1;
            cfg.depth = 2;
        }
        _ => {}
    }
    cfg
}

#[test]
fn every_experiment_produces_consistent_records() {
    for kind in [ExperimentKind::Ghz, ExperimentKind::Vqc, ExperimentKind::Qpca, ExperimentKind::Bayes, ExperimentKind::Qvcs] {
        let rec = run_experiment(&small(kind)).unwrap();
        assert_eq!(rec.experiment, kind);
        assert!(!rec.rows.is_empty(), "{}", kind.name());
        for row in &rec.rows {
            assert!((0.0..=1.0).contains(&row.fidelity), "{}: {}", kind.name(), row.fidelity);
        }
        for (label, agg) in &rec.aggregates {
            let fs: Vec<f64> = rec.rows.iter().filter(|r| &r.label == label).map(|r| r.fidelity).collect();
            assert_eq!(agg.count, fs.len());
            let mean = fs.iter().sum::<f64>() / fs.len() as f64;
            assert!((agg.mean - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn outputs_land_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let rec = run_experiment(&small(ExperimentKind::Ghz)).unwrap();
    write_outputs(&rec, &dir.path().join("g.csv")).unwrap();
    assert!(dir.path().join("g.csv").exists());
    assert!(dir.path().join("g_manifest.json").exists());
    let sub = dir.path().join("run");
    write_outputs(&rec, &sub).unwrap();
    assert!(sub.join("manifest.json").exists());
    assert!(sub.join("runs.csv").exists());
}

#[test]
fn same_seed_same_record() {
    let cfg = small(ExperimentKind::Qvcs);
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    let fa: Vec<f64> = a.rows.iter().map(|r| r.fidelity).collect();
    let fb: Vec<f64> = b.rows.iter().map(|r| r.fidelity).collect();
    assert_eq!(fa, fb);
}
