use std::fs;

use ldqd::harness::checkpoint::Checkpoint;
use ldqd::harness::engine::{frame_hash, Engine};
use ldqd::harness::output::Table;
use ldqd::harness::{
    propagate, revert, revert_cells, run, sweep, unitarity, unitarity_cells, CellSpec, Method, RunConfig,
};
use ldqd::linalg;
use num_complex::Complex64 as C64;

fn quick(n_g: usize, t_final: f64) -> RunConfig {
    RunConfig {
        n_g,
        t_final: Some(t_final),
        ..RunConfig::default()
    }
}

#[test]
fn exact_run_keeps_energy_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        method: Method::Exact,
        out_dir: dir.path().to_path_buf(),
        ..quick(1, 6.0)
    };
    let rep = run(&cfg).unwrap();
    let e = rep.cells[0].column(|s| s.energy);
    assert_eq!(rep.cells[0].samples.last().unwrap().t, 6.0);
    assert!((e[0] - 0.5975).abs() < 1e-12);
    assert!(e.iter().all(|x| (x - e[0]).abs() <= 1e-12 * e[0]));
    let table = Table::read(&dir.path().join("doublewell_exact.csv")).unwrap();
    let col = table.column("energy").unwrap();
    assert_eq!(col.len(), 601);
    assert!(col.iter().all(|x| (x - e[0]).abs() <= 1e-12 * e[0]));
    assert!(dir.path().join("doublewell_exact.plot.py").exists());
    assert!(dir.path().join("doublewell_exact.ckpt").exists());
}

#[test]
fn frozen_single_gaussian_keeps_unit_autocorrelation() {
    let dir = tempfile::tempdir().unwrap();
    let ic = dir.path().join("one.txt");
    fs::write(&ic, format!("{:.17} 0\n", -(0.4f64).sqrt())).unwrap();
    let cfg = RunConfig {
        frozen: true,
        ic_file: Some(ic),
        out_dir: dir.path().to_path_buf(),
        ..quick(1, 2.0)
    };
    let rep = run(&cfg).unwrap();
    let s = &rep.cells[0].samples;
    assert!(s.iter().all(|x| (x.autocorr.norm() - 1.0).abs() < 1e-12));
    // A phase that turns at the energy of the Gaussian.
    assert!(s.last().unwrap().autocorr.im.abs() > 0.1);
    let initial_position = s[0].position;
    assert!((initial_position + (0.4f64).sqrt()).abs() < 1e-12);
}

#[test]
fn identical_configs_give_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mk = |d: &std::path::Path| RunConfig {
        out_dir: d.to_path_buf(),
        name: Some("det".into()),
        ..quick(20, 0.5)
    };
    run(&mk(a.path())).unwrap();
    run(&mk(b.path())).unwrap();
    for f in ["det.csv", "det.ckpt", "det.plot.py"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn frames_do_not_depend_on_the_method() {
    let cfg = quick(25, 0.3);
    let z0 = cfg.initial_z().unwrap();
    let together = propagate(
        &cfg,
        25,
        &[CellSpec::new(Method::Var, 1e-10), CellSpec::new(Method::Reg1, 1e-7)],
        &[z0],
    )
    .unwrap();
    let var = propagate(&cfg, 25, &[CellSpec::new(Method::Var, 1e-10)], &[z0]).unwrap();
    let reg = propagate(&cfg, 25, &[CellSpec::new(Method::Reg2, 1e-9)], &[z0]).unwrap();
    assert_eq!(together.frame_hash, var.frame_hash);
    assert_eq!(together.frame_hash, reg.frame_hash);
    let var_alone = &var.cells[0].samples;
    let var_shared = &together.cells[0].samples;
    for (a, b) in var_alone.iter().zip(var_shared) {
        assert_eq!(a.position.to_bits(), b.position.to_bits());
    }
}

#[test]
fn checkpoint_resume_matches_uninterrupted_run() {
    let cfg = quick(15, 0.2);
    let z0 = cfg.initial_z().unwrap();
    let specs = [
        CellSpec::new(Method::Var, 1e-10),
        CellSpec::new(Method::Reg2, 1e-8),
        CellSpec::new(Method::Exact, 0.0),
    ];
    let (frame0, _) = ldqd::harness::experiments::initial_frame(&cfg, 15).unwrap();
    let params = cfg.engine_params().unwrap();

    let mut straight = Engine::new(params.clone(), frame0.clone(), &[z0], &specs).unwrap();
    for _ in 0..200 {
        straight.advance().unwrap();
    }

    let mut first = Engine::new(params.clone(), frame0, &[z0], &specs).unwrap();
    for _ in 0..100 {
        first.advance().unwrap();
    }
    let cp = Checkpoint {
        model: cfg.model.clone(),
        rng: None,
        engine: first.snapshot(),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.ckpt");
    cp.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded.to_bytes(), cp.to_bytes());
    let mut resumed = Engine::from_snapshot(params, &loaded.engine).unwrap();
    for _ in 0..100 {
        resumed.advance().unwrap();
    }
    assert_eq!(frame_hash(resumed.frame()), frame_hash(straight.frame()));
    assert!((resumed.time() - straight.time()).abs() < 1e-12);
    for (a, b) in resumed.cells().iter().zip(straight.cells()) {
        let d = linalg::vec_norm(&(&a.states[0] - &b.states[0]));
        assert!(d < 1e-12, "{}: {d:e}", a.spec.label());
    }
}

#[test]
fn regularized_methods_retrace_their_path() {
    let cfg = quick(30, 1.0);
    let specs = [CellSpec::new(Method::Reg1, 1e-7), CellSpec::new(Method::Reg2, 1e-7)];
    for dt in [1e-3, 5e-4] {
        let cfg = RunConfig { dt, ..cfg.clone() };
        for r in revert_cells(&cfg, 30, &specs).unwrap() {
            assert!(r.failure.is_none());
            assert!(r.points.len() > 50);
            assert!(
                r.max_discrepancy() <= 1e-9,
                "{} dt={dt}: {:e}",
                r.spec.label(),
                r.max_discrepancy()
            );
        }
    }
}

#[test]
fn revert_reads_a_saved_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        method: Method::Reg1,
        eps_s: 1e-7,
        out_dir: dir.path().to_path_buf(),
        ..quick(10, 0.3)
    };
    run(&cfg).unwrap();
    let from_file = RunConfig {
        checkpoint: Some(dir.path().join(format!("{}.ckpt", cfg.run_name()))),
        ..cfg.clone()
    };
    let r = revert(&from_file).unwrap();
    assert!(r.max_discrepancy() <= 1e-9);
    assert!(dir.path().join(format!("{}_revert.csv", cfg.run_name())).exists());
    let missing = RunConfig {
        checkpoint: Some(dir.path().join("nope.ckpt")),
        ..cfg
    };
    assert!(revert(&missing).is_err());
}

#[test]
fn two_state_errors_start_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        out_dir: dir.path().to_path_buf(),
        ..quick(20, 0.2)
    };
    let r = unitarity(&cfg).unwrap();
    let first = r.points[0];
    assert_eq!((first.1, first.2, first.3), (0.0, 0.0, 0.0));
    assert!(r.max_norm_error() < 1e-10);
    let cells = unitarity_cells(
        &cfg,
        20,
        &[CellSpec::new(Method::Exact, 0.0), CellSpec::new(Method::Reg1, 1e-7)],
    )
    .unwrap();
    assert!(cells[0].max_error() < 1e-12);
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        out_dir: dir.path().to_path_buf(),
        sweep_ng: vec![3, 6],
        sweep_eps: vec![1e-7, 1e-10],
        dt_check: true,
        jobs: 2,
        ..quick(3, 0.1)
    };
    let rep = sweep(&cfg).unwrap();
    assert_eq!(rep.rows.len(), 2 * 2 * 3);
    let check = rep.dt_check.as_ref().unwrap();
    assert_eq!(check.n_g, 3);
    assert!(check.passed, "{}", check.max_change);
    let table = Table::read(&dir.path().join("doublewell_sweep.csv")).unwrap();
    assert_eq!(table.rows.len(), 12);
    let var = rep.row(Method::Var, 6, 1e-10).unwrap();
    assert!(!var.diverged);
    assert!(var.norm_err < 1e-12);
}

#[test]
fn initial_conditions_can_come_from_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let ic = dir.path().join("ic.txt");
    fs::write(&ic, "# q p\n-0.6 0.1\n-0.7 -0.2\n-0.5 0.0\n0.2 0.3\n").unwrap();
    let cfg = RunConfig {
        ic_file: Some(ic),
        ..quick(3, 0.1)
    };
    let rep = propagate(&cfg, 3, &[CellSpec::new(Method::Var, 1e-10)], &[C64::new(-0.44, 0.0)]).unwrap();
    assert_eq!(rep.checkpoint.engine.frame0.len(), 3);
    assert!(rep.checkpoint.rng.is_none());
    assert!(propagate(&cfg, 5, &[CellSpec::new(Method::Var, 1e-10)], &[C64::new(-0.44, 0.0)]).is_err());
}
