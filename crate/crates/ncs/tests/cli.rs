//! The command line end to end: exit codes, written artifacts and their
//! readers.

use std::path::{Path, PathBuf};

use ncs::summary::Summary;
use ncs::traces::read_samples;
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

/// A copy of the waypoint scenario with `edit` applied to its config text.
fn waypoints_with(edit: impl Fn(String) -> String) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("waypoints.toml")).unwrap();
    std::fs::copy(
        configs().join("waypoints_spec.toml"),
        dir.path().join("waypoints_spec.toml"),
    )
    .unwrap();
    let path = dir.path().join("waypoints.toml");
    std::fs::write(&path, edit(text)).unwrap();
    (dir, path)
}

fn run(args: &[&str], config: &Path, out: &Path) -> i32 {
    let mut v: Vec<std::ffi::OsString> = vec!["ncs".into(), "--out".into(), out.into()];
    v.extend(args.iter().map(Into::into));
    v.push(config.into());
    ncs::app::run(v)
}

fn summary(dir: &Path, name: &str) -> Summary {
    let text = std::fs::read_to_string(dir.join(format!("{}.summary", name))).unwrap();
    Summary::parse(&text).unwrap()
}

#[test]
fn validate_accepts_the_shipped_scenarios() {
    for name in ["waypoints.toml", "vehicle.toml", "vehicle_grid21.toml"] {
        let out = tempfile::tempdir().unwrap();
        let code = run(&["validate"], &configs().join(name), out.path());
        assert_eq!(code, 0, "{}", name);
        assert_eq!(summary(out.path(), "validate").get("status"), Some("ok"));
    }
}

#[test]
fn coarse_quantization_is_rejected_by_name() {
    let (dir, cfg) = waypoints_with(|t| t.replace("theta = 0.025", "theta = 0.01"));
    let out = dir.path().join("out");
    assert_eq!(run(&["validate"], &cfg, &out), 2);
    let s = summary(&out, "validate");
    assert_eq!(s.get("exit_code"), Some("2"));
    assert!(s.get("status").unwrap().contains("mu_x <= min(mu_hat, theta)"));
    // Synthesis refuses the same parameters before doing any work.
    assert_eq!(run(&["synthesize"], &cfg, &out), 2);
}

#[test]
fn configuration_errors_exit_with_two() {
    let out = tempfile::tempdir().unwrap();
    let missing = out.path().join("nope.toml");
    assert_eq!(run(&["validate"], &missing, out.path()), 2);

    let (dir, cfg) = waypoints_with(|t| t.replace("tau = 1.0", "tau = -1.0"));
    assert_eq!(run(&["validate"], &cfg, dir.path()), 2);

    let (dir, cfg) = waypoints_with(|t| t.replace("[network]", "[network\n"));
    assert_eq!(run(&["validate"], &cfg, dir.path()), 2);

    let (dir, cfg) = waypoints_with(|t| t.replace("u_ref = 0", "u_ref = 9"));
    assert_eq!(run(&["validate"], &cfg, dir.path()), 2);

    assert_eq!(ncs::app::run(["ncs", "no-such-command"]), 2);
}

#[test]
fn simulate_is_repeatable_and_its_files_read_back() {
    let (dir, cfg) = waypoints_with(|t| t);
    let args = ["simulate", "--runs", "3", "--horizon", "30", "--seed", "11"];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&args, &cfg, &a), 0);
    assert_eq!(run(&args, &cfg, &b), 0);
    for run in 0..3 {
        for kind in ["samples", "iterations"] {
            let name = format!("run_{:03}_{}.csv", run, kind);
            let (x, y) = (std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap());
            assert_eq!(x, y, "{}", name);
        }
    }
    assert_eq!(
        std::fs::read(a.join("controller.txt")).unwrap(),
        std::fs::read(b.join("controller.txt")).unwrap()
    );

    let s = summary(&a, "simulate");
    assert_eq!(s.get("runs"), Some("3"));
    assert_eq!(s.get("horizon"), Some("30"));
    assert_eq!(s.get("spec_satisfied"), Some("3/3"));
    assert_eq!(Summary::parse(&s.to_text()).unwrap(), s);

    let t = read_samples(std::fs::File::open(a.join("run_000_samples.csv")).unwrap()).unwrap();
    assert_eq!(t.y_tilde.len(), 31);
    assert_eq!(t.held.len(), 30);
    assert!(t.y_tilde.iter().all(|x| x.len() == 1 && x[0].abs() <= 1.0));
    // Markers cover the horizon burst by burst.
    let covered: u32 = t.markers.iter().map(|&(_, n)| n).sum();
    assert!(covered as usize >= 30);

    // A different seed changes the delays and so the traces.
    let c = dir.path().join("c");
    let args = ["simulate", "--runs", "3", "--horizon", "30", "--seed", "12"];
    assert_eq!(run(&args, &cfg, &c), 0);
    assert_ne!(
        std::fs::read(a.join("run_000_samples.csv")).unwrap(),
        std::fs::read(c.join("run_000_samples.csv")).unwrap()
    );
}
