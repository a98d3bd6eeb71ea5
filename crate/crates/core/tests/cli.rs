use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use stackelberg::io::ParsedCsv;

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stackelberg"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(path: &Path) -> ParsedCsv {
    ParsedCsv::parse(&fs::read_to_string(path).unwrap()).unwrap()
}

fn field<'a>(csv: &'a ParsedCsv, kind: &str, column: &str) -> &'a str {
    let k = csv.column("kind").unwrap();
    let j = csv.column(column).unwrap();
    let row = csv.rows.iter().find(|r| r[k] == kind).unwrap();
    &row[j]
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path.to_string_lossy().into_owned()
}

/// Least-squares slope of `ys` against `xs`.
fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[test]
fn closed_forms_for_the_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fresh/nested");
    assert!(run(&out, &["closed-forms"]).status.success());
    let text = fs::read_to_string(out.join("values.csv")).unwrap();
    assert!(text.starts_with("# schema=1\n"));
    let csv = ParsedCsv::parse(&text).unwrap();
    let expect = [
        ("FB", "3.5", "-0.5"),
        ("AOL", "1.5", "1.5"),
        ("AF", "1.5", "1.5"),
        ("ACLM", "2.32047845", "1"),
        ("ACL", "3.5", "-0.5"),
    ];
    for (kind, leader, follower) in expect {
        assert_eq!(field(&csv, kind, "leader_value"), leader, "{kind}");
        assert_eq!(field(&csv, kind, "follower_value"), follower, "{kind}");
        assert_eq!(field(&csv, kind, "status"), "certified");
    }
}

#[test]
fn small_action_bound_drops_the_aclm_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"params": {"a_max": 5}}"#);
    assert!(run(dir.path(), &["--config", &config, "closed-forms"]).status.success());
    let csv = read(&dir.path().join("values.csv"));
    assert_eq!(field(&csv, "ACLM", "status"), "not-certified");
    assert_eq!(field(&csv, "ACLM", "leader_value"), "");
    // the punishment threshold is 1, so a_max = 5 still supports it
    assert_eq!(field(&csv, "ACL", "status"), "certified");
}

#[test]
fn follower_cost_moves_only_the_follower_value() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(dir.path(), &["closed-forms"]).status.success());
    let base = read(&dir.path().join("values.csv"));
    let other = dir.path().join("cf");
    let config = write_config(dir.path(), r#"{"params": {"c_F": 1.25}}"#);
    assert!(run(&other, &["--config", &config, "closed-forms"]).status.success());
    let cf = read(&other.join("values.csv"));
    assert_eq!(field(&cf, "FB", "leader_value"), "3.5");
    let f = |csv: &ParsedCsv| field(csv, "FB", "follower_value").parse::<f64>().unwrap();
    assert!(f(&cf) < f(&base));
}

#[test]
fn bad_configs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"params": {"cf": 1.25}}"#);
    let o = run(dir.path(), &["--config", &config, "closed-forms"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown parameter"));
    let config = write_config(dir.path(), r#"{"params": {"sigma": 0}}"#);
    assert!(!run(dir.path(), &["--config", &config, "closed-forms"]).status.success());
}

#[test]
fn coarse_leader_grid_warns_but_runs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["leader", "--nu", "5", "--nt", "40"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    for name in ["surface.csv", "boundaries.csv", "summary.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn leader_value_lies_between_the_bounds() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(dir.path(), &["leader", "--nt", "400", "--nu", "81"]).status.success());
    let v: f64 = field(&read(&dir.path().join("summary.csv")), "CL", "leader_value").parse().unwrap();
    assert!((1.5..=3.5).contains(&v), "{v}");
    let band = read(&dir.path().join("boundaries.csv"));
    assert_eq!(band.numbers("v_minus").unwrap()[0], -59.0);
    assert_eq!(band.numbers("v_plus").unwrap()[0], -39.0);
}

#[test]
fn closed_loop_simulation_needs_a_surface() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["simulate", "--kind", "cl", "--paths", "100"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--solve"));
    let o = run(
        dir.path(),
        &["simulate", "--kind", "cl", "--paths", "2000", "--solve", "--nt", "400", "--nu", "81"],
    );
    assert!(o.status.success());
    let sim = read(&dir.path().join("sim.csv"));
    assert!(field(&sim, "CL", "target_gap_mean").parse::<f64>().unwrap() < 0.05);
}

#[test]
fn first_best_simulation_hits_its_value() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--kind", "fb", "--paths", "100000", "--steps", "500", "--seed", "42"];
    assert!(run(dir.path(), &args).status.success());
    let first = fs::read(dir.path().join("sim.csv")).unwrap();
    let sim = read(&dir.path().join("sim.csv"));
    let m: f64 = field(&sim, "FB", "JL_mean").parse().unwrap();
    let se: f64 = field(&sim, "FB", "JL_se").parse().unwrap();
    assert!((m - 3.5).abs() <= 3.0 * se, "{m} ± {se}");
    assert_eq!(field(&sim, "FB", "target_gap_mean"), "");
    assert!(run(dir.path(), &args).status.success());
    assert_eq!(fs::read(dir.path().join("sim.csv")).unwrap(), first);
}

#[test]
fn sweep_values_move_one_for_one_with_x0() {
    let dir = tempfile::tempdir().unwrap();
    let grid = ["--nt", "200", "--nu", "41"];
    let mut args = vec!["sweep", "--x0-min", "-1", "--x0-max", "1", "--n", "21"];
    args.extend(grid);
    assert!(run(dir.path(), &args).status.success());
    let shifted = read(&dir.path().join("sweep.csv"));
    let solo = dir.path().join("solo");
    args.push("--no-shift");
    assert!(run(&solo, &args).status.success());
    let solved = read(&solo.join("sweep.csv"));

    let series = |csv: &ParsedCsv, kind: &str| -> (Vec<f64>, Vec<f64>) {
        let (k, x, v) = (csv.column("kind").unwrap(), csv.column("x0").unwrap(), csv.column("leader_value").unwrap());
        csv.rows
            .iter()
            .filter(|r| r[k] == kind)
            .map(|r| (r[x].parse::<f64>().unwrap(), r[v].parse::<f64>().unwrap()))
            .unzip()
    };
    for kind in ["FB", "AOL", "AF", "ACLM", "ACL"] {
        let (xs, ys) = series(&shifted, kind);
        assert_eq!(xs.len(), 21);
        assert!((slope(&xs, &ys) - 1.0).abs() < 1e-6, "{kind}");
    }
    let (xs, ys) = series(&solved, "CL");
    assert!((slope(&xs, &ys) - 1.0).abs() < 1e-2);
    let (_, ys_shifted) = series(&shifted, "CL");
    for (a, b) in ys.iter().zip(&ys_shifted) {
        assert!((a - b).abs() < 1e-2, "{a} vs {b}");
    }
}

#[test]
fn sweep_rejects_a_single_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["sweep", "--x0-min", "0", "--x0-max", "1", "--n", "1"]);
    assert!(!o.status.success());
    assert!(!dir.path().join("sweep.csv").exists());
}

#[test]
fn boundaries_command_reports_the_exact_edges() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["boundaries", "--nt", "51", "--nx", "41"]);
    assert!(o.status.success());
    let csv = read(&dir.path().join("boundaries.csv"));
    let (t, x) = (csv.numbers("t").unwrap(), csv.numbers("x").unwrap());
    let w = csv.numbers("w_minus").unwrap();
    for i in 0..t.len() {
        assert!((w[i] - (x[i] - 9.5 * (1.0 - t[i]))).abs() < 1e-6);
    }
}
