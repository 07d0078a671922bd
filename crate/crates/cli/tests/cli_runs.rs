use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use prion_cli::config::{parse_config, Experiment};
use prion_cli::record::{ErrorReport, ExperimentRecord, Results, RunStatus};
use prion_cli::{execute, ExitKind, RunArgs};
use prion_core::sweep::{SweepAxis, SweepMode};

fn examples() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples")
}

fn prion(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_prion")).args(args).env("RUST_LOG", "off").output().unwrap()
}

const CONSTANT_MODEL: &str = r#"
[model]
lambda = 2400
gamma = 4
tau = 0.001
beta = { kind = "affine", c0 = 0, c1 = 0.03 }
mu = 0.05
"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn args(config: &Path, out: &Path) -> RunArgs {
    RunArgs {
        config: Some(config.to_path_buf()),
        out: Some(out.to_path_buf()),
        ..Default::default()
    }
}

#[test]
fn every_shipped_example_parses() {
    let mut n = 0;
    for entry in fs::read_dir(examples()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            let text = fs::read_to_string(&path).unwrap();
            parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 7);
}

#[test]
fn amplitude_example_is_a_dynamics_sweep() {
    let cfg = parse_config(&fs::read_to_string(examples().join("sweep_amplitude.cfg")).unwrap()).unwrap();
    assert_eq!(cfg.experiment, Experiment::Sweep);
    let s = cfg.sweep.unwrap();
    assert_eq!(s.axis, SweepAxis::BellAmplitude);
    assert_eq!(s.mode, SweepMode::Dynamics);
    assert_eq!(s.values, vec![0.001, 0.01, 0.1]);
    assert_eq!(s.probe_time, 96.0);
}

#[test]
fn negative_gamma_exits_with_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("experiment = \"eigen\"\n{}", CONSTANT_MODEL.replace("gamma = 4", "gamma = -4"));
    let cfg = write(tmp.path(), "bad.cfg", &text);
    let out = tmp.path().join("out");
    let o = prion(&["eigen", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("model.gamma"), "{stderr}");
    let report: ErrorReport = serde_json::from_str(&fs::read_to_string(out.join("eigen-invalid/error.json")).unwrap()).unwrap();
    assert_eq!(report.kind, "config");
    assert_eq!(report.issues.len(), 1);
    assert_eq!(report.issues[0].field, "model.gamma");
    assert_eq!(report.issues[0].line, Some(5));
}

#[test]
fn summary_round_trips_through_json() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "e.cfg", &format!("experiment = \"eigen\"\n{CONSTANT_MODEL}\n[grid]\nn = 200\n[eigen]\nv = [10, 600]\n"));
    let report = execute(Experiment::Eigen, &args(&cfg, &tmp.path().join("out")));
    assert_eq!(report.exit, ExitKind::Ok);
    let text = fs::read_to_string(report.dir.join("summary.json")).unwrap();
    let parsed: ExperimentRecord = serde_json::from_str(&text).unwrap();
    assert_eq!(Some(parsed.clone()), report.record);
    assert_eq!(serde_json::to_string_pretty(&parsed).unwrap() + "\n", text);
    let Some(Results::Eigen(e)) = parsed.results else { panic!("not an eigen record") };
    assert_eq!(e.rows.len(), 2);
    assert!(e.decreasing && e.bounded_by_mu);
    for r in &e.rows {
        assert!((r.lambda / r.closed_form.unwrap() - 1.0).abs() < 0.01);
    }
    assert_eq!(parsed.provenance.config_digest.len(), 64);
    assert!(report.dir.file_name().unwrap().to_string_lossy().starts_with("eigen-"));
    assert!(report.dir.join("eigenvalues.csv").exists());
}

#[test]
fn digest_names_the_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let base = format!("experiment = \"eigen\"\n{CONSTANT_MODEL}\n[grid]\nn = 100\n");
    let a = write(tmp.path(), "a.cfg", &base);
    let b = write(tmp.path(), "b.cfg", &base.replace("n = 100", "n = 120"));
    let out = tmp.path().join("out");
    let ra = execute(Experiment::Eigen, &args(&a, &out));
    let ra2 = execute(Experiment::Eigen, &args(&a, &out));
    let rb = execute(Experiment::Eigen, &args(&b, &out));
    assert_eq!(ra.dir, ra2.dir);
    assert_ne!(ra.dir, rb.dir);
    // the seed is part of the digest
    let seeded = RunArgs { seed: Some(5), ..args(&a, &out) };
    assert_ne!(execute(Experiment::Eigen, &seeded).dir, ra.dir);
}

#[test]
fn sweep_records_failed_values_and_continues() {
    let tmp = tempfile::tempdir().unwrap();
    // a zero dose has no inoculation to measure incubation against
    let text = format!(
        "experiment = \"sweep\"\n{CONSTANT_MODEL}\n[grid]\nxmax = 20\nn = 100\n[sweep]\naxis = \"dose\"\nvalues = [0, 1]\nt_end = 20\nprobe_time = 10\n"
    );
    let cfg = write(tmp.path(), "s.cfg", &text);
    let report = execute(Experiment::Sweep, &args(&cfg, &tmp.path().join("out")));
    assert_eq!(report.exit, ExitKind::Ok);
    let record = report.record.unwrap();
    assert_eq!(record.status, RunStatus::Partial);
    let Some(Results::Sweep(s)) = record.results else { panic!() };
    assert_eq!(s.failures, 1);
    assert!(s.rows[0].error.is_some() && s.rows[0].result.is_none());
    assert!(s.rows[1].result.is_some());
    let csv = fs::read_to_string(report.dir.join("sweep.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains(",failed,"), "{csv}");
}

#[test]
fn runtime_failure_still_writes_a_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("experiment = \"eigen\"\n{CONSTANT_MODEL}\n[grid]\nn = 200\n[eigen]\nv = [600]\nmax_iterations = 1\ntol_factor = 1e-16\n");
    let cfg = write(tmp.path(), "e.cfg", &text);
    let out = tmp.path().join("out");
    let o = prion(&["eigen", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let dir = fs::read_dir(&out).unwrap().next().unwrap().unwrap().path();
    let record: ExperimentRecord = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(record.status, RunStatus::Failed);
    assert!(record.results.is_none());
    assert!(!record.errors.is_empty());
    assert!(dir.join("error.json").exists());
}

#[test]
fn operator_dump_lists_the_generator() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "e.cfg", &format!("experiment = \"eigen\"\n{CONSTANT_MODEL}\n[grid]\nn = 20\n[eigen]\nv = [600]\nadjoint = false\n"));
    let report = execute(Experiment::Eigen, &RunArgs { dump_operator: true, ..args(&cfg, &tmp.path().join("out")) });
    let text = fs::read_to_string(report.dir.join("operator_0.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("row,col,value"));
    let entries: Vec<(usize, usize, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    // upper Hessenberg with a nonnegative off-diagonal part
    assert!(entries.iter().all(|&(i, j, _)| i <= j + 1));
    assert!(entries.iter().filter(|&&(i, j, _)| i != j).all(|&(_, _, a)| a >= 0.0));
}

#[test]
fn validate_runs_without_a_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = prion(&["validate", "--out", out.to_str().unwrap(), "--seed", "3", "--threads", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("PASS duality") && !stdout.contains("FAIL"), "{stdout}");
    let dir = fs::read_dir(&out).unwrap().next().unwrap().unwrap().path();
    let record: ExperimentRecord = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(record.provenance.seed, 3);
    let Some(Results::Validate(v)) = record.results else { panic!() };
    assert!(v.all_passed && v.discrete.is_none());
}

#[test]
fn failing_checks_exit_with_status_three() {
    let tmp = tempfile::tempdir().unwrap();
    // a discrete truncation far too short for the overflow bound
    let cfg = write(tmp.path(), "v.cfg", "experiment = \"validate\"\n[validate.discrete]\nn_max = 40\nt_end = 5\nxmax = 40\nn = 40\n");
    let out = tmp.path().join("out");
    let o = prion(&["validate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL discrete_overflow"));
}
