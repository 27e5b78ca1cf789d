use std::fs;
use std::path::Path;
use std::process::Command;

use nlch_cli::commands::{self, parse_axis};
use nlch_cli::output::{read_diagnostics, CSV_COLUMNS, DIAGNOSTICS_FILE, MANIFEST_FILE};
use nlch_cli::{parse_config, snapshot, CliError};
use nlch_core::{Error, Field, Grid, Potential, Variant};

const BASIC: &str = "grid.dim=1\ngrid.n=256\ngrid.length=1.0\nkernel.type=gaussian\nkernel.xi=100\nkernel.cj=auto\npotential.type=double_well\ndynamics.variant=A\ndynamics.dt=1e-4\ndynamics.t_end=1.0\n";

fn small(extra: &str) -> String {
    format!(
        "grid.n = 48\nkernel.xi = 100\npotential.type = logarithmic\npotential.lambda = 1.5\ndynamics.variant = B\ndynamics.dt = 1e-2\ndynamics.t_end = 0.2\n{extra}"
    )
}

fn nlch(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_nlch")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn basic_config_resolves_defaults() {
    let cfg = parse_config(BASIC).unwrap();
    assert_eq!(cfg.grid.counts(), &[256]);
    assert_eq!(cfg.model.variant, Variant::A);
    assert_eq!(cfg.model.dt, 1e-4);
    assert_eq!(cfg.model.newton_tol, 1e-10);
    assert_eq!(cfg.potential, Potential::DoubleWell);
    let k = cfg.build_kernel().unwrap();
    assert!((k.l1_norm() - 1.0).abs() <= 1e-12);
    let text = cfg.resolved_text();
    assert!(text.contains("dynamics.alpha = 0\n"));
    assert!(text.contains("solver.max_outer = 500\n"));
}

#[test]
fn config_errors_name_the_problem() {
    let missing = BASIC.replace("dynamics.dt=1e-4\n", "");
    match parse_config(&missing) {
        Err(CliError::MissingKey(k)) => assert_eq!(k, "dynamics.dt"),
        other => panic!("{other:?}"),
    }
    match parse_config(&format!("{BASIC}grid.color = blue\n")) {
        Err(CliError::Parse { line: 11, message }) => assert!(message.contains("grid.color")),
        other => panic!("{other:?}"),
    }
    match parse_config(&BASIC.replace("grid.n=256", "grid.n=lots")) {
        Err(CliError::Parse { line: 2, .. }) => {}
        other => panic!("{other:?}"),
    }
    match parse_config(&format!("{BASIC}grid.n = 8\n")) {
        Err(CliError::Parse { line: 11, message }) => assert!(message.contains("duplicate")),
        other => panic!("{other:?}"),
    }
    let inviscid = small("dynamics.alpha = 0\n");
    match parse_config(&inviscid) {
        Err(CliError::Core(Error::Config(m))) => assert!(m.contains("alpha"), "{m}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn snapshot_round_trip_is_bit_exact() {
    let g = Grid::new_2d([1.5, 0.5], [7, 3]).unwrap();
    let f = Field::from_fn(g, |x| (x[0] * 13.0).sin() / 3.0 + x[1] * 1e-300);
    let bytes = snapshot::encode(&f, 0.125);
    assert_eq!(&bytes[..5], b"NLCH1");
    let (back, t) = snapshot::decode(&bytes).unwrap();
    assert_eq!(t, 0.125);
    assert_eq!(back.grid(), f.grid());
    for (a, b) in back.values().iter().zip(f.values()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert!(snapshot::decode(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(snapshot::decode(&bad).is_err());
}

#[test]
fn constant_run_has_flat_energy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(&small("init.type = constant\ninit.mean = 0.2\n")).unwrap();
    let traj = commands::run_command(&cfg, dir.path()).unwrap();
    assert_eq!(traj.ledger.len(), 20);
    let rows = read_diagnostics(&fs::read_to_string(dir.path().join(DIAGNOSTICS_FILE)).unwrap()).unwrap();
    assert_eq!(rows.len(), 21);
    assert!(rows.iter().all(|r| r[3] == rows[0][3]));
    let manifest = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
    assert!(manifest.contains("potential.lambda = 1.5") && manifest.contains("status = completed"));
    assert!(dir.path().join("snapshots/snap_00000020.nlch").exists());
}

#[test]
fn binary_run_writes_non_increasing_energy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small("init.type = noise\ninit.mean = 0\ninit.amplitude = 0.3\ninit.seed = 4\n"));
    let out = dir.path().join("quench");
    let o = nlch(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join(DIAGNOSTICS_FILE)).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
    let rows = read_diagnostics(&text).unwrap();
    for w in rows.windows(2) {
        assert!(w[1][3] <= w[0][3] + 1e-12);
    }

    let csv = dir.path().join("final.csv");
    let snap = out.join("snapshots/snap_00000020.nlch");
    let o = nlch(&["export", snap.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert!(o.status.success());
    let dump = fs::read_to_string(csv).unwrap();
    assert_eq!(dump.lines().count(), 2 + 48);
}

#[test]
fn unwritable_output_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small(""));
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = nlch(&["run", "--config", &cfg, "--out", blocker.join("sub").to_str().unwrap()]);
    assert!(!o.status.success());
    let o = nlch(&["run", "--config", dir.path().join("absent.cfg").to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn verify_presets() {
    let dir = tempfile::tempdir().unwrap();
    let oracle = write_config(dir.path(), &BASIC.replace("grid.n=256", "grid.n=64"));
    let o = nlch(&["verify", "--config", &oracle, "--preset", "kernel-oracle"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{stdout}");
    assert!(stdout.contains("PASS convolution: max relative deviation"));

    let cfg = parse_config(&small("")).unwrap();
    let report = commands::verify(&cfg, "hypotheses").unwrap();
    let h10 = report.checks.iter().find(|c| c.name == "H10").unwrap();
    assert!(h10.detail.starts_with("margin"));
    assert!(report.checks.iter().any(|c| c.name == "viscosity" && c.pass));

    let a = parse_config(BASIC).unwrap();
    assert!(matches!(commands::verify(&a, "separation"), Err(CliError::Usage(_))));
    assert!(matches!(commands::verify(&a, "bogus"), Err(CliError::Usage(_))));
    let o = nlch(&["verify", "--config", &oracle, "--preset", "separation"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn equilibrate_examples() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(&small("init.type = constant\ninit.mean = 0.3\n")).unwrap();
    let r = commands::equilibrate(&cfg, dir.path()).unwrap();
    assert!(r.converged);
    let expected = cfg.potential.eval(0.3).unwrap().df;
    assert!((r.mu_star - expected).abs() <= 1e-13);
    let (phi, _) = snapshot::read(&dir.path().join("equilibrium.nlch")).unwrap();
    assert!(phi.values().iter().all(|&v| (v - 0.3).abs() <= 1e-15));

    let endpoint = parse_config(&small("init.type = constant\ninit.mean = 1\n")).unwrap();
    let err = commands::equilibrate(&endpoint, dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}

#[test]
fn equilibrate_from_a_run_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let text = small("init.type = cosine\ninit.mean = 0\ninit.amplitude = 0.3\ndynamics.snapshot_every = 100000\nsolver.newton_tol = 1e-11\n")
        .replace("dynamics.t_end = 0.2", "dynamics.t_end = 300");
    let run_cfg = parse_config(&text).unwrap();
    let traj = commands::run_command(&run_cfg, &dir.path().join("run")).unwrap();
    let last = traj.final_snapshot();
    let snap = dir.path().join("run/snapshots").join(nlch_cli::output::snapshot_name(last.step));
    let eq_cfg = parse_config(&small(&format!("init.type = file\ninit.path = {}\n", snap.display()))).unwrap();
    let r = commands::equilibrate(&eq_cfg, &dir.path().join("eq")).unwrap();
    assert!(r.converged && r.residual <= 1e-10);
    assert!(r.iterations <= 10);
}

#[test]
fn sweep_layout_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(&small("init.type = noise\ninit.mean = 0\ninit.amplitude = 0.2\n")).unwrap();
    let (key, values) = parse_axis("potential.lambda=1.0,1.25,1.5").unwrap();
    let jobs = commands::sweep(&cfg, &key, &values, dir.path(), Some(2)).unwrap();
    assert_eq!(jobs.len(), 3);
    for j in &jobs {
        assert!(j.dir.join(DIAGNOSTICS_FILE).exists());
        assert_eq!(j.status, "completed");
    }
    let index = fs::read_to_string(dir.path().join(commands::INDEX_FILE)).unwrap();
    assert_eq!(index.lines().count(), 4);
    assert!(index.starts_with("job,potential.lambda,dir,status"));

    assert!(matches!(parse_axis("grid.dim=1,2"), Err(CliError::Usage(_))));
    assert!(matches!(parse_axis("potential.lambda="), Err(CliError::Usage(_))));
    assert!(matches!(commands::sweep(&cfg, "grid.dim", &values, dir.path(), None), Err(CliError::Usage(_))));
    assert!(matches!(commands::sweep(&cfg, "potential.lambda", &[], dir.path(), None), Err(CliError::Usage(_))));

    let cfg_path = write_config(dir.path(), &small(""));
    let o = nlch(&["sweep", "--config", &cfg_path, "--axis", "grid.dim=2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn threads_fall_back_to_the_environment() {
    assert_eq!(commands::resolve_threads(Some(3)).unwrap(), Some(3));
}
