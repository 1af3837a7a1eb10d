use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use semimix::cli::{fmt_num, FitReport};
use semimix::model::{sample_mixture, MixtureSpec, ParametricDensity};

fn semimix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semimix"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_normal_gamma(path: &Path, n: usize) {
    let spec = MixtureSpec::new(
        0.5,
        ParametricDensity::normal(6.0, 1.0).unwrap(),
        ParametricDensity::gamma(2.0, 1.0).unwrap(),
    )
    .unwrap();
    let s = sample_mixture(&spec, n, 123).unwrap();
    let text: String = std::iter::once("value".to_string())
        .chain(s.points.iter().map(|&x| fmt_num(x)))
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(path, text).unwrap();
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect()
}

#[test]
fn empty_file_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("empty.txt");
    fs::write(&data, "").unwrap();
    let o = semimix(&["fit", data.to_str().unwrap(), "--f0", "normal:0,1"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no data values"), "{}", stderr(&o));
}

#[test]
fn bad_line_is_reported_with_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.txt");
    fs::write(&data, "1.0\n2.0\nthree\n").unwrap();
    let o = semimix(&["fit", data.to_str().unwrap(), "--f0", "normal:0,1"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("bad.txt:3"), "{}", stderr(&o));

    fs::write(&data, "10\n-60\n").unwrap();
    let o = semimix(&[
        "fit",
        data.to_str().unwrap(),
        "--f0",
        "normal:0,1",
        "--transform",
        "log+50",
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains(":2"), "{}", stderr(&o));
}

#[test]
fn fit_is_reproducible_and_emits_curves() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("x.csv");
    write_normal_gamma(&data, 500);
    let mut reports = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("out{run}"));
        let o = semimix(&[
            "fit",
            data.to_str().unwrap(),
            "--f0",
            "normal:6,1",
            "--p-init",
            "0.2",
            "--f-init",
            "gamma:4,2",
            "--emit-curves",
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("p_hat"));
        reports.push(fs::read(out.join("fit_report.json")).unwrap());
        for name in ["mixture_curve.csv", "component_curve.csv"] {
            let csv = fs::read_to_string(out.join(name)).unwrap();
            assert!(csv.starts_with("# semimix fit "));
            assert_eq!(csv.lines().nth(1), Some("x,density"));
            assert_eq!(data_rows(&csv).len(), 1024);
        }
    }
    assert_eq!(reports[0], reports[1]);
    let report = FitReport::from_json(std::str::from_utf8(&reports[0]).unwrap()).unwrap();
    assert_eq!(report.schema_version, 1);
    assert_eq!(report.config.n, 500);
    let g = report.config.grid;
    assert!((g.integrate(&report.f_hat) - 1.0).abs() < 1e-6);
}

#[test]
fn fixed_bandwidth_and_grid_are_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("x.txt");
    write_normal_gamma(&data, 200);
    let o = semimix(&[
        "fit",
        data.to_str().unwrap(),
        "--f0",
        "normal:6,1",
        "--bandwidth",
        "fixed=0.5",
        "--kernel",
        "gaussian",
        "--grid=-5,15,300",
        "--tol",
        "1e-4",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = FitReport::from_json(&fs::read_to_string(dir.path().join("fit_report.json")).unwrap())
        .unwrap();
    assert_eq!(r.config.bandwidth, 0.5);
    assert_eq!(r.config.grid.n_points, 300);
    assert_eq!(r.x.len(), 300);
}

const SPEC: &str = r#"{
  "mixture": {
    "p": 0.3,
    "known": {"family": "normal", "mu": 0, "sigma": 1},
    "unknown": {"family": "normal", "mu": 6, "sigma": 1}
  },
  "n": 200,
  "reps": 1,
  "master_seed": 5,
  "mm": {"grid_points": 256, "tol": 1e-4}
}"#;

#[test]
fn single_rep_simulation_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, SPEC).unwrap();
    let o = semimix(&[
        "simulate",
        spec.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let reps = fs::read_to_string(dir.path().join("reps.csv")).unwrap();
    assert!(reps.starts_with('#'));
    assert!(reps
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("rep,seed,p_hat,ise,mu_hat"));
    let rows = data_rows(&reps);
    assert_eq!(rows.len(), 1);
    // MSE of a single replication is its squared error
    let p_hat: f64 = rows[0].split(',').nth(2).unwrap().parse().unwrap();
    let agg = fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    let mse: f64 = data_rows(&agg)[0]
        .split(',')
        .nth(6)
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(mse, (p_hat - 0.3) * (p_hat - 0.3));
    assert!(stdout(&o).contains("Silverman"));
}

#[test]
fn curve_mode_writes_one_row_per_proportion() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, SPEC).unwrap();
    let o = semimix(&[
        "simulate",
        spec.to_str().unwrap(),
        "--p-values",
        "0.3,0.6",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let curve = fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert_eq!(data_rows(&curve).len(), 2);
}

#[test]
fn bad_family_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        SPEC.replace(
            "\"family\": \"normal\", \"mu\": 6",
            "\"family\": \"weibull\", \"mu\": 6",
        ),
    )
    .unwrap();
    let o = semimix(&[
        "simulate",
        spec.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("mixture.unknown"), "{}", stderr(&o));
}

#[test]
fn bandwidth_command() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("x.txt");
    write_normal_gamma(&data, 100);
    let d = data.to_str().unwrap();
    let out = dir.path().to_str().unwrap();

    let o = semimix(&["bandwidth", d, "--f0", "normal:6,1", "--silverman-only"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("h_silverman = "));

    let o = semimix(&[
        "bandwidth",
        d,
        "--f0",
        "normal:6,1",
        "--grid-steps",
        "0",
        "--folds",
        "5",
        "--out-dir",
        out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let curve = fs::read_to_string(dir.path().join("cv_curve.csv")).unwrap();
    assert_eq!(data_rows(&curve).len(), 1);

    let o = semimix(&[
        "bandwidth",
        d,
        "--f0",
        "normal:6,1",
        "--half-range",
        "50",
        "--out-dir",
        out,
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("half range"), "{}", stderr(&o));
}

#[test]
fn identifiability_command() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let o = semimix(&[
        "check-identifiability",
        "--power",
        "2",
        "--mu-f0",
        "0",
        "--domain",
        "0.1,10",
        "--json",
        json.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("condition holds"));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["condition_holds"], true);

    let o = semimix(&[
        "check-identifiability",
        "--power",
        "0",
        "--mu-f0",
        "0",
        "--domain",
        "0.1,10",
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("witness"));

    let table = dir.path().join("v.csv");
    let rows: Vec<String> = (0..=90)
        .map(|i| {
            let m = 1.0 + i as f64 * 0.05;
            format!("{m},{}", 1.0 + m * m)
        })
        .collect();
    fs::write(&table, format!("mu,v\n{}\n", rows.join("\n"))).unwrap();
    let o = semimix(&[
        "check-identifiability",
        "--table",
        table.to_str().unwrap(),
        "--mu-f0",
        "0",
        "--domain",
        "1,5.5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("condition holds"));

    let o = semimix(&[
        "check-identifiability",
        "--power",
        "2",
        "--mu-f0",
        "1",
        "--domain",
        "0.1,10",
    ]);
    assert!(!o.status.success());
}
