use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Output};

fn cape(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cape"))
        .args(args)
        .env("CAPE_LOG", "warn")
        .output()
        .expect("cape runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn last_line(s: &str) -> &str {
    s.lines().last().unwrap_or("")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "simulate", "--p", "20", "--window", "40", "--stages", "2", "--replicates", "3", "--seed", "5",
        "--out-dir", s(dir),
    ];
    args.extend_from_slice(extra);
    cape(&args)
}

fn generate(dir: &Path, p: &str, window: &str, stages: &str) -> std::path::PathBuf {
    let o = cape(&["generate", "--p", p, "--window", window, "--stages", stages, "--seed", "3", "--out-dir", s(dir)]);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join("returns.csv")
}

#[test]
fn defaults_are_the_documented_values() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(simulate(&a, &[]).status.success());
    let o = simulate(&b, &["--beta", "0.15", "--gamma", "0.3333333333333333", "--scad-a", "3.7", "--cost-kind", "quadratic"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["replicates.csv", "summary.csv", "universe.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = tmp.path().join("c");
    assert!(simulate(&c, &["--beta", "0.3"]).status.success());
    assert_ne!(std::fs::read(a.join("summary.csv")).unwrap(), std::fs::read(c.join("summary.csv")).unwrap());
}

#[test]
fn summary_recomputes_from_replicates() {
    let tmp = tempfile::tempdir().unwrap();
    let o = simulate(tmp.path(), &["--strategy", "1/n,mv,cape-s"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let reps = std::fs::read_to_string(tmp.path().join("replicates.csv")).unwrap();
    let mut groups: HashMap<(String, String), Vec<f64>> = HashMap::new();
    for line in reps.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let sharpe: f64 = f[7].parse().unwrap_or(f64::NAN);
        groups.entry((f[1].to_string(), f[2].to_string())).or_default().push(sharpe);
    }
    let summary = std::fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
    let mut checked = 0;
    for line in summary.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let v = &groups[&(f[0].to_string(), f[1].to_string())];
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let got_mean: f64 = f[10].parse().unwrap();
        let got_se: f64 = f[11].parse().unwrap();
        assert!((got_mean - mean).abs() < 1e-12 * mean.abs().max(1.0), "{line}");
        assert!((got_se - sd / n.sqrt()).abs() < 1e-12 * got_se.abs().max(1.0), "{line}");
        assert_eq!(f[12], "3");
        checked += 1;
    }
    assert_eq!(checked, 3 * 3);
}

#[test]
fn backtest_writes_the_report_to_file_and_stdout() {
    let tmp = tempfile::tempdir().unwrap();
    let returns = generate(tmp.path(), "15", "60", "2");
    let out = tmp.path().join("bt");
    let o = cape(&[
        "backtest", "--returns", s(&returns), "--window", "60", "--stages", "2", "--strategy", "1/n,cmv,cape-s",
        "--lambda-grid", "0.01,0.1", "--out-dir", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let file = std::fs::read_to_string(out.join("backtest.csv")).unwrap();
    assert_eq!(file, stdout(&o));
    let lines: Vec<&str> = file.lines().collect();
    assert_eq!(lines[0], "stage,method,return_pct,cost_pct,turnover,leverage,sharpe");
    assert_eq!(lines.len(), 1 + 2 * 3 + 3);
    let ew: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&ew[..2], ["1", "1/N"]);
    assert_eq!(format!("{:.3}", ew[4].parse::<f64>().unwrap()), "1.000");
    assert_eq!(format!("{:.3}", ew[5].parse::<f64>().unwrap()), "0.000");
    assert!(lines[7].starts_with("overall,1/N,,,,,"));
    let notes = std::fs::read_to_string(out.join("backtest_notes.csv")).unwrap();
    assert!(notes.lines().any(|l| l.starts_with("CAPE-S,1,0.")));
}

#[test]
fn tune_echoes_a_singleton_grid_and_reports_the_curve_argmax() {
    let tmp = tempfile::tempdir().unwrap();
    let returns = generate(tmp.path(), "12", "80", "1");
    let o = cape(&["tune", "--returns", s(&returns), "--window", "80", "--lambda-grid", "0.1", "--out-dir", s(tmp.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "lambda_opt=0.1");

    let o = cape(&[
        "tune", "--returns", s(&returns), "--window", "80", "--strategy", "cape-s", "--lambda-grid",
        "0.001,0.01,0.05,0.2,1", "--out-dir", s(tmp.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let printed: f64 = stdout(&o).trim().strip_prefix("lambda_opt=").unwrap().parse().unwrap();
    let curve = std::fs::read_to_string(tmp.path().join("tune_curve.csv")).unwrap();
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    for line in curve.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if let Ok(sr) = f[1].parse::<f64>() {
            if sr > best.0 {
                best = (sr, f[0].parse().unwrap());
            }
        }
    }
    assert_eq!(printed, best.1);
}

#[test]
fn missing_cost_assets_are_named() {
    let tmp = tempfile::tempdir().unwrap();
    let returns = generate(tmp.path(), "3", "30", "1");
    let costs = tmp.path().join("costs.csv");
    std::fs::write(&costs, "asset,proportional_cost\na0000,0.001\n").unwrap();
    let o = cape(&["backtest", "--returns", s(&returns), "--cost-file", s(&costs), "--window", "30", "--stages", "1", "--out-dir", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(1));
    let line = last_line(&stderr(&o)).to_string();
    assert!(line.starts_with("cape-error code=invalid_input message="), "{line}");
    assert!(line.contains("lacks 2 asset(s): a0001, a0002"), "{line}");
}

#[test]
fn non_finite_rows_are_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("r.csv");
    std::fs::write(&path, "date,A,B\nd1,0.01,0.02\nd2,NaN,0.01\nd3,0.0,0.0\nd4,0.01,inf\n").unwrap();
    let o = cape(&["backtest", "--returns", s(&path), "--window", "2", "--stages", "1", "--out-dir", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(1));
    let line = last_line(&stderr(&o)).to_string();
    assert!(line.contains("non-finite returns in 2 row(s): line 3 (d2), line 5 (d4)"), "{line}");
}

#[test]
fn error_lines_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cape(&["simulate", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(last_line(&stderr(&o)).starts_with("cape-error code=usage message="));

    let o = cape(&["simulate", "--beta", "-1", "--out-dir", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(last_line(&stderr(&o)).starts_with("cape-error code=parse line=0 field=beta message="), "{}", stderr(&o));

    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "# comment\nseed = 4\nestimator = ols\n").unwrap();
    let o = cape(&["simulate", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(last_line(&stderr(&o)).starts_with("cape-error code=parse line=3 field=estimator"), "{}", stderr(&o));

    let o = cape(&["backtest", "--returns", "/nonexistent/returns.csv"]);
    assert_eq!(o.status.code(), Some(1));
    let line = last_line(&stderr(&o)).to_string();
    assert!(line.starts_with("cape-error code=io message=reading /nonexistent/returns.csv"), "{line}");

    let o = cape(&["backtest"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(last_line(&stderr(&o)).contains("--returns is required"));

    let o = cape(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn config_file_values_yield_to_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "p = 20\nwindow = 40\nstages = 2\nreplicates = 3\nseed = 99\n").unwrap();
    let a = tmp.path().join("a");
    let o = cape(&["simulate", "--config", s(&cfg), "--seed", "5", "--out-dir", s(&a)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let b = tmp.path().join("b");
    assert!(simulate(&b, &[]).status.success());
    assert_eq!(std::fs::read(a.join("summary.csv")).unwrap(), std::fs::read(b.join("summary.csv")).unwrap());
}

#[test]
fn moment_unit_rescales_gamma() {
    let tmp = tempfile::tempdir().unwrap();
    let returns = generate(tmp.path(), "15", "30", "2");
    let run = |dir: &str, unit: &str, gamma: &str| {
        let out = tmp.path().join(dir);
        let o = cape(&[
            "backtest", "--returns", s(&returns), "--window", "30", "--stages", "2", "--strategy", "mv",
            "--beta", "0", "--moment-unit", unit, "--gamma", gamma, "--out-dir", s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
    };
    let pct = run("pct", "percent", "0.5");
    let dec = run("dec", "decimal", "0.005");
    let values = |t: &str| -> Vec<f64> {
        t.lines()
            .skip(1)
            .flat_map(|l| l.split(',').skip(2).filter_map(|v| v.parse::<f64>().ok()).collect::<Vec<_>>())
            .collect()
    };
    let (a, b) = (values(&pct), values(&dec));
    assert_eq!(a.len(), b.len());
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-6 * (1.0 + x.abs())), "{pct}\n{dec}");
    assert_ne!(pct, run("raw", "decimal", "0.5"));

    let o = cape(&["backtest", "--returns", s(&returns), "--moment-unit", "basis"]);
    assert!(last_line(&stderr(&o)).starts_with("cape-error code=parse line=0 field=moment_unit"));
}
