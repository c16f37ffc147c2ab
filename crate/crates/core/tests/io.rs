use cape_core::backtest::StageReport;
use cape_core::config::{parse_entries, parse_lambda_grid, RunConfig};
use cape_core::io::{
    parse_cost_csv, parse_report_csv, parse_returns_csv, read_tune_curve_csv, read_universe_csv, write_cost_csv,
    write_report_csv, write_returns_csv, write_tune_curve_csv, write_universe_csv, CostTable, MethodReport,
};
use cape_core::moments::{ReturnPanel, ReturnUnit};
use cape_core::simgen::{build_universe, default_params};
use cape_core::strategy::{CostKind, StrategyKind, TunePoint};
use cape_core::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn report(method: &str, values: &[f64]) -> MethodReport {
    MethodReport {
        method: method.into(),
        stages: values
            .chunks(5)
            .enumerate()
            .map(|(i, c)| StageReport {
                stage: i + 1,
                gross_return_pct: c[0],
                cost_pct: c[1],
                turnover: c[2],
                leverage: c[3],
                sharpe: c[4],
            })
            .collect(),
        overall_sharpe: values.iter().sum(),
    }
}

#[test]
fn cost_table_derives_quadratic_coefficients_exactly() {
    let table = parse_cost_csv("asset,proportional_cost\nB,0.002\nA,0.0015\nC,0\n").unwrap();
    let assets: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
    let q = table.cost_model(&assets, CostKind::Quadratic).unwrap();
    assert_eq!(q.coefficients()[0], 2.0 * 0.0015 * 0.0015);
    assert_eq!(q.coefficients()[1], 2.0 * 0.002 * 0.002);
    assert_eq!(q.coefficients()[2], 0.0);
    let pr = table.cost_model(&assets, CostKind::Proportional).unwrap();
    assert_eq!(pr.coefficients().as_slice(), &[0.0015, 0.002, 0.0]);
    let more: Vec<String> = ["A", "Z", "Y"].iter().map(|s| s.to_string()).collect();
    let err = table.cost_model(&more, CostKind::Quadratic).unwrap_err().to_string();
    assert!(err.contains("lacks 2 asset(s)") && err.contains('Z') && err.contains('Y'), "{err}");
}

#[test]
fn cost_table_rejects_bad_rows() {
    assert!(parse_cost_csv("asset,proportional_cost\nA,-0.1\n").is_err());
    assert!(parse_cost_csv("asset,proportional_cost\nA,0.1\nA,0.2\n").is_err());
    assert!(parse_cost_csv("asset,cost\nA,0.1\n").is_err());
    assert!(matches!(
        parse_cost_csv("asset,proportional_cost\nA,abc\n"),
        Err(Error::Parse { line: 2, .. })
    ));
}

#[test]
fn returns_errors_name_the_line_and_field() {
    match parse_returns_csv("date,A,B\nd1,0.1,0.2\nd2,0.1,x\n") {
        Err(Error::Parse { line, field, .. }) => {
            assert_eq!(line, 3);
            assert_eq!(field, "B");
        }
        other => panic!("{other:?}"),
    }
    let err = parse_returns_csv("date,A\nd1,NaN\nd2,0.1\nd3,inf\n").unwrap_err().to_string();
    assert!(err.contains("2 row(s)") && err.contains("line 2 (d1)") && err.contains("line 4 (d3)"), "{err}");
    assert!(parse_returns_csv("date,A,A\nd1,0,0\nd2,0,0\n").is_err());
    assert!(parse_returns_csv("date,A,B\nd1,0\nd2,0,0\n").is_err());
    assert!(parse_returns_csv("").is_err());
}

#[test]
fn percent_panel_is_written_as_decimals() {
    let m = DMatrix::from_row_slice(2, 2, &[1.0, -2.5, 0.5, 3.0]);
    let panel = ReturnPanel::from_matrix(m, ReturnUnit::Percent).unwrap();
    let mut buf = Vec::new();
    write_returns_csv(&panel, &mut buf).unwrap();
    let back = parse_returns_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
    assert_eq!(back.unit(), ReturnUnit::Decimal);
    assert!((back.returns() * 100.0 - panel.returns()).amax() < 1e-12);
}

#[test]
fn universe_roundtrip() {
    let u = build_universe(12, &default_params(), 3).unwrap();
    let mut buf = Vec::new();
    write_universe_csv(&u, &mut buf).unwrap();
    let (assets, back) = read_universe_csv(buf.as_slice(), 3).unwrap();
    assert_eq!(assets.len(), 12);
    assert_eq!(back, u);
}

#[test]
fn tune_curve_roundtrip_keeps_failures() {
    let curve = vec![
        TunePoint { lambda: 0.01, sharpe: Ok(1.25) },
        TunePoint { lambda: 0.1, sharpe: Err("solver did not converge".into()) },
    ];
    let mut buf = Vec::new();
    write_tune_curve_csv(&curve, &mut buf).unwrap();
    assert_eq!(read_tune_curve_csv(buf.as_slice()).unwrap(), curve);
}

#[test]
fn report_layout() {
    let reports = vec![report("MV", &[1.0; 10]), report("CAPE-S", &[2.0; 10])];
    let mut buf = Vec::new();
    write_report_csv(&reports, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "stage,method,return_pct,cost_pct,turnover,leverage,sharpe");
    assert!(lines[1].starts_with("1,MV,") && lines[2].starts_with("1,CAPE-S,") && lines[3].starts_with("2,MV,"));
    assert_eq!(lines[5], "overall,MV,,,,,10");
    let back = parse_report_csv(&text).unwrap();
    assert!(back.iter().zip(&reports).all(|(a, b)| a.same_as(b)));
}

#[test]
fn config_file_and_overrides() {
    let text = "# run\nstrategy = mv, cape-s\ncost-kind = proportional\nalpha = 0.002\nlambda_grid = 0.3, 0.1\nSEED=9\n";
    let mut cfg = RunConfig::from_text(text).unwrap();
    assert_eq!(cfg.strategies, vec![StrategyKind::Mv, StrategyKind::CapeS]);
    assert_eq!(cfg.cost_kind, CostKind::Proportional);
    assert_eq!(cfg.cost_value(), 0.002);
    assert_eq!(cfg.lambda_grid, Some(vec![0.1, 0.3]));
    assert_eq!(cfg.seed, 9);
    cfg.set("seed", "4", 0).unwrap();
    assert_eq!(cfg.seed, 4);
    let d = RunConfig::default();
    assert_eq!(d.beta, 0.15);
    assert!((d.gamma - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(d.scad_a, 3.7);
    match RunConfig::from_text("seed = 1\nbeta = -2\n") {
        Err(Error::Parse { line, field, .. }) => assert_eq!((line, field.as_str()), (2, "beta")),
        other => panic!("{other:?}"),
    }
    assert!(RunConfig::from_text("seed = 1\nseed = 2\n").is_err());
    assert!(RunConfig::from_text("nonsense = 1\n").is_err());
    assert!(RunConfig::from_text("just text\n").is_err());
    assert!(parse_lambda_grid("0.1,0.1").is_err());
    assert!(parse_lambda_grid("0.1,-1").is_err());
    assert!(parse_entries("a = 1 # trailing\n").unwrap()[0].value == "1");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn returns_csv_roundtrip(n in 2usize..8, p in 1usize..6, vals in prop::collection::vec(-1.0f64..1.0, 48)) {
        let m = DMatrix::from_fn(n, p, |i, j| vals[(i * p + j) % vals.len()]);
        let dates: Vec<String> = (0..n).map(|i| format!("2020-01-{:02}", i + 1)).collect();
        let assets: Vec<String> = (0..p).map(|j| format!("S{j}")).collect();
        let panel = ReturnPanel::new(dates, assets, m, ReturnUnit::Decimal).unwrap();
        let mut buf = Vec::new();
        write_returns_csv(&panel, &mut buf).unwrap();
        let back = parse_returns_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(back, panel);
    }

    #[test]
    fn cost_csv_roundtrip(alphas in prop::collection::vec(0.0f64..0.05, 1..20)) {
        let table = CostTable::new(alphas.iter().enumerate().map(|(i, a)| (format!("x{i}"), *a)).collect()).unwrap();
        let mut buf = Vec::new();
        write_cost_csv(&table, &mut buf).unwrap();
        prop_assert_eq!(parse_cost_csv(std::str::from_utf8(&buf).unwrap()).unwrap(), table);
    }

    #[test]
    fn report_csv_roundtrip(vals in prop::collection::vec(prop_oneof![-1e6f64..1e6, Just(f64::NAN)], 15)) {
        let reports = vec![report("PMV", &vals), report("CMV", &vals.iter().map(|v| v * 2.0).collect::<Vec<_>>())];
        let mut buf = Vec::new();
        write_report_csv(&reports, &mut buf).unwrap();
        let back = parse_report_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(back.len(), 2);
        prop_assert!(back.iter().zip(&reports).all(|(a, b)| a.same_as(b)));
    }

    #[test]
    fn parsers_never_panic(text in "\\PC{0,200}") {
        let _ = parse_returns_csv(&text);
        let _ = parse_cost_csv(&text);
        let _ = parse_report_csv(&text);
        let _ = read_universe_csv(text.as_bytes(), 0);
        let _ = read_tune_curve_csv(text.as_bytes());
        let _ = RunConfig::from_text(&text);
    }
}

fn fuzz_seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut seeds: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            (path.display().to_string(), std::fs::read(&path).unwrap())
        })
        .collect();
    seeds.sort();
    assert!(!seeds.is_empty(), "no seeds for {target}");
    seeds
}

#[test]
fn fuzz_seeds_round_trip() {
    let mut parsed = 0;
    for (name, data) in fuzz_seeds("returns_csv") {
        if let Ok(panel) = cape_core::io::read_returns_csv(data.as_slice()) {
            let mut out = Vec::new();
            write_returns_csv(&panel, &mut out).unwrap();
            let again = cape_core::io::read_returns_csv(out.as_slice()).unwrap();
            assert_eq!(again.assets(), panel.assets(), "{name}");
            parsed += 1;
        }
    }
    for (name, data) in fuzz_seeds("cost_csv") {
        if let Ok(table) = cape_core::io::read_cost_csv(data.as_slice()) {
            let mut out = Vec::new();
            write_cost_csv(&table, &mut out).unwrap();
            assert_eq!(cape_core::io::read_cost_csv(out.as_slice()).unwrap(), table, "{name}");
            parsed += 1;
        }
    }
    for (_, data) in fuzz_seeds("report_csv") {
        parsed += usize::from(cape_core::io::read_report_csv(data.as_slice()).is_ok());
    }
    for (name, data) in fuzz_seeds("universe_csv") {
        if let Ok((_, universe)) = read_universe_csv(data.as_slice(), 0) {
            let mut out = Vec::new();
            write_universe_csv(&universe, &mut out).unwrap();
            read_universe_csv(out.as_slice(), 0).unwrap_or_else(|e| panic!("{name}: {e}"));
            parsed += 1;
        }
    }
    for (name, data) in fuzz_seeds("tune_curve_csv") {
        if let Ok(curve) = read_tune_curve_csv(data.as_slice()) {
            let mut out = Vec::new();
            write_tune_curve_csv(&curve, &mut out).unwrap();
            assert_eq!(read_tune_curve_csv(out.as_slice()).unwrap().len(), curve.len(), "{name}");
            parsed += 1;
        }
    }
    for (_, data) in fuzz_seeds("run_config") {
        if let Ok(cfg) = RunConfig::from_text(std::str::from_utf8(&data).unwrap()) {
            let _ = cfg.simulation();
            parsed += 1;
        }
    }
    assert!(parsed >= 9, "only {parsed} seeds parsed");
}
