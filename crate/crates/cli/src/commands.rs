use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use cape_core::backtest::{run_backtest, BacktestPlan};
use cape_core::config::{RunConfig, BACKTEST_WINDOW, SIMULATION_WINDOW};
use cape_core::experiment::{aggregate, run_simulation};
use cape_core::io::{self, MethodReport};
use cape_core::moments::{MomentEstimate, ReturnPanel};
use cape_core::simgen::{build_universe, generate_panel, FactorModelParams};
use cape_core::strategy::{tune_lambda, CostModel, RebalanceProblem, StrategyKind};

fn pool(cfg: &RunConfig) -> anyhow::Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        b = b.num_threads(n);
    }
    Ok(b.build()?)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn out_path(cfg: &RunConfig, name: &str) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    Ok(cfg.out_dir.join(name))
}

fn load_returns(cfg: &RunConfig) -> anyhow::Result<ReturnPanel> {
    let Some(path) = &cfg.returns else {
        bail!(cape_core::Error::InvalidInput("--returns is required".into()));
    };
    io::read_returns_file(path).with_context(|| format!("reading {}", path.display()))
}

fn cost_model(cfg: &RunConfig, panel: &ReturnPanel) -> anyhow::Result<CostModel> {
    Ok(match &cfg.cost_file {
        Some(path) => {
            let table = io::read_cost_file(path)
                .with_context(|| format!("reading {}", path.display()))?;
            table.cost_model(panel.assets(), cfg.cost_kind)?
        }
        None => CostModel::uniform(cfg.cost_kind, cfg.cost_value(), panel.p())?,
    })
}

pub fn simulate(cfg: &RunConfig) -> anyhow::Result<()> {
    let sim = cfg.simulation()?;
    log::info!(
        "simulating p={} n={} m={} replicates={} cost={} {} seed={}",
        sim.p,
        sim.window_n,
        sim.stages_m,
        sim.replicates,
        sim.cost_kind,
        sim.cost_value,
        sim.seed
    );
    let out = pool(cfg)?.install(|| run_simulation(&sim))?;
    for rec in &out.replicates {
        for run in &rec.runs {
            if let Err(e) = &run.result {
                log::warn!("replicate {} {} failed: {e}", rec.replicate, run.kind.label());
            }
        }
    }
    let rows = aggregate(&out.replicates, &sim.strategies, sim.stages_m);

    let path = out_path(cfg, "replicates.csv")?;
    let mut w = create(&path)?;
    io::write_replicates_csv(&out.replicates, &mut w)?;
    w.flush()?;
    let summary = out_path(cfg, "summary.csv")?;
    let mut w = create(&summary)?;
    io::write_aggregate_csv(&rows, &mut w)?;
    w.flush()?;
    let uni = out_path(cfg, "universe.csv")?;
    let mut w = create(&uni)?;
    io::write_universe_csv(&out.universe, &mut w)?;
    w.flush()?;
    for r in rows.iter().filter(|r| r.stage.is_none()) {
        log::info!("{}: {} / {} replicates succeeded", r.method, r.successes, sim.replicates);
    }
    log::info!("wrote {}, {}, {}", path.display(), summary.display(), uni.display());
    Ok(())
}

pub fn backtest(cfg: &RunConfig) -> anyhow::Result<()> {
    let panel = load_returns(cfg)?;
    let cost = cost_model(cfg, &panel)?;
    let window = cfg.window.unwrap_or(BACKTEST_WINDOW);
    let plans = cfg
        .strategies
        .iter()
        .map(|&kind| {
            let mut plan = BacktestPlan::new(window, cfg.stages, cfg.spec(kind)?, cost.clone());
            plan.rebalance_every = cfg.rebalance_every.unwrap_or(window);
            plan.estimator = cfg.estimator;
            plan.moment_unit = Some(cfg.moment_unit);
            plan.tune = cfg.tune();
            plan.solver = cfg.solver();
            if kind.penalized() {
                plan.lambda_grid = Some(cfg.grid_for(panel.p(), window, cfg.moment_unit));
            }
            plan.validate(&panel)?;
            Ok(plan)
        })
        .collect::<cape_core::Result<Vec<_>>>()?;
    log::info!(
        "backtesting {} assets, {} rows: window {window}, {} stages every {} days",
        panel.p(),
        panel.n(),
        cfg.stages,
        plans.first().map_or(window, |p| p.rebalance_every)
    );
    let results = pool(cfg)?.install(|| {
        use rayon::prelude::*;
        plans
            .par_iter()
            .map(|plan| run_backtest(&panel, plan))
            .collect::<cape_core::Result<Vec<_>>>()
    })?;

    let reports: Vec<MethodReport> = results.iter().map(MethodReport::from).collect();
    let path = out_path(cfg, "backtest.csv")?;
    let mut w = create(&path)?;
    io::write_report_csv(&reports, &mut w)?;
    w.flush()?;
    let stdout = std::io::stdout();
    io::write_report_csv(&reports, stdout.lock())?;

    let notes = out_path(cfg, "backtest_notes.csv")?;
    let mut w = create(&notes)?;
    writeln!(w, "method,stage,lambda,error")?;
    for r in &results {
        for (t, note) in r.notes.iter().enumerate() {
            let lambda = note.lambda.map(|l| l.to_string()).unwrap_or_default();
            let error = note.error.clone().unwrap_or_default().replace([',', '\n'], ";");
            writeln!(w, "{},{},{lambda},{error}", r.method, t + 1)?;
            if let Some(e) = &note.error {
                log::warn!("{} stage {}: {e}", r.method, t + 1);
            }
        }
    }
    w.flush()?;
    log::info!("wrote {} and {}", path.display(), notes.display());
    Ok(())
}

pub fn tune(cfg: &RunConfig) -> anyhow::Result<()> {
    let panel = load_returns(cfg)?;
    let window = cfg.window.unwrap_or(BACKTEST_WINDOW);
    if panel.n() < window {
        bail!(cape_core::Error::InvalidInput(format!(
            "panel has {} rows, window needs {window}",
            panel.n()
        )));
    }
    // CAPE-S when selected, otherwise the first penalized strategy
    let kind = if cfg.strategies.contains(&StrategyKind::CapeS) {
        Some(StrategyKind::CapeS)
    } else {
        cfg.strategies.iter().copied().find(|k| k.penalized())
    };
    let Some(kind) = kind else {
        bail!(cape_core::Error::InvalidInput(
            "tune needs a penalized strategy (pmv, cape-l or cape-s)".into()
        ));
    };
    let est = panel.window(panel.n() - window..panel.n())?.converted(cfg.moment_unit);
    let cost = cost_model(cfg, &panel)?;
    let moments = MomentEstimate::estimate(&est, cfg.estimator)?;
    let problem = RebalanceProblem::initial(moments, cost)?;
    let grid = cfg.grid_for(panel.p(), window, cfg.moment_unit);
    let result = tune_lambda(&est, &problem, &cfg.spec(kind)?, &grid, &cfg.solver(), &cfg.tune())?;

    let path = out_path(cfg, "tune_curve.csv")?;
    let mut w = create(&path)?;
    io::write_tune_curve_csv(&result.curve, &mut w)?;
    w.flush()?;
    log::info!(
        "{}: {} of {} grid points fitted; curve in {}",
        kind.label(),
        result.curve.iter().filter(|p| p.sharpe.is_ok()).count(),
        result.curve.len(),
        path.display()
    );
    println!("lambda_opt={}", result.lambda);
    Ok(())
}

pub fn generate(cfg: &RunConfig, replicate: u64, days: Option<usize>) -> anyhow::Result<()> {
    let window = cfg.window.unwrap_or(SIMULATION_WINDOW);
    let days = days.unwrap_or(window * (cfg.stages + 1));
    let params = FactorModelParams::default();
    let universe = build_universe(cfg.p, &params, cfg.seed)?;
    let panel = generate_panel(&universe, days, &params, cfg.seed, replicate)?;
    let path = out_path(cfg, "returns.csv")?;
    let mut w = create(&path)?;
    io::write_returns_csv(&panel, &mut w)?;
    w.flush()?;
    let uni = out_path(cfg, "universe.csv")?;
    let mut w = create(&uni)?;
    io::write_universe_csv(&universe, &mut w)?;
    w.flush()?;
    log::info!("wrote {} ({} days × {} assets) and {}", path.display(), days, cfg.p, uni.display());
    Ok(())
}
