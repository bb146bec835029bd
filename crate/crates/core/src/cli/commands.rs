use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, OutputFormat, RunMethod};
use super::selfcheck::{default_matrix, run_selfcheck, CheckResult, SelfcheckOptions};
use super::{Cli, CliError, Command, ExitCode, FormatArg};
use crate::hedging::{
    backtest, lrm_put_nested, lrm_put_t0, BacktestOptions, BacktestSummary, EstimateMethod, HedgeEstimate, HedgeMethod,
    OptionKind, OptionSpec, RegressionHedger,
};
use crate::model::{simulate_path, validate_assumptions, BnsParams, Constraint, TimeGrid};
use crate::rng::{Purpose, Streams};
use crate::stats::par_collect;

/// One line of the hedge table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HedgeRow {
    pub t: f64,
    #[serde(rename = "S")]
    pub s: f64,
    pub sigma_sq_left: f64,
    pub xi: f64,
    pub stderr: f64,
    pub method: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidateReport {
    pub family: &'static str,
    pub feasible: bool,
    pub kappa_min: Option<f64>,
    pub kappa_min_closed: Option<bool>,
    pub kappa_max: Option<f64>,
    pub binding_constraint: Constraint,
    pub boundary: bool,
    pub drift_bound: f64,
    pub square_bound: f64,
    pub moment_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestCheck {
    pub name: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    /// SHA-256 of the effective configuration (seed override applied).
    pub config_hash: String,
    pub engine_version: &'static str,
    pub seed: u64,
    pub wall_time_s: f64,
    pub checks: Vec<ManifestCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SimulateRow {
    path: usize,
    #[serde(rename = "S_T")]
    s_t: f64,
    sigma_sq_t: f64,
    int_var: f64,
    jump_count: usize,
    jump_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct BacktestRow {
    steps: usize,
    n_paths: usize,
    method: &'static str,
    initial_value: f64,
    terminal_error_mean: f64,
    terminal_error_std: f64,
    cost_drift: f64,
    cost_drift_stderr: f64,
    cost_drift_contains_zero: bool,
    orthogonality: f64,
    orthogonality_low: f64,
    orthogonality_high: f64,
    orthogonality_contains_zero: bool,
    hedge_out_of_range: usize,
}

impl From<&BacktestSummary> for BacktestRow {
    fn from(s: &BacktestSummary) -> Self {
        BacktestRow {
            steps: s.steps,
            n_paths: s.n_paths,
            method: s.method.as_str(),
            initial_value: s.initial_value,
            terminal_error_mean: s.terminal_error_mean,
            terminal_error_std: s.terminal_error_std,
            cost_drift: s.cost_drift.estimate,
            cost_drift_stderr: s.cost_drift.stderr,
            cost_drift_contains_zero: s.cost_drift.contains_zero,
            orthogonality: s.orthogonality.estimate,
            orthogonality_low: s.orthogonality.low,
            orthogonality_high: s.orthogonality.high,
            orthogonality_contains_zero: s.orthogonality.contains_zero,
            hedge_out_of_range: s.hedge_out_of_range,
        }
    }
}

struct Context {
    config: Option<ExperimentConfig>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    format: Option<OutputFormat>,
    started: Instant,
}

impl Context {
    fn config(&self) -> Result<&ExperimentConfig, CliError> {
        self.config
            .as_ref()
            .ok_or_else(|| CliError::input("this command needs --config"))
    }

    fn format(&self) -> OutputFormat {
        self.format
            .or_else(|| self.config.as_ref().map(|c| c.output.format))
            .unwrap_or_default()
    }

    fn out_path(&self) -> Option<PathBuf> {
        self.out.clone().or_else(|| {
            self.config
                .as_ref()
                .and_then(|c| c.output.path.clone())
                .map(PathBuf::from)
        })
    }

    fn emit(&self, bytes: &[u8]) -> Result<(), CliError> {
        match self.out_path() {
            Some(p) => {
                std::fs::write(&p, bytes).map_err(|e| CliError::input(format!("cannot write {}: {e}", p.display())))
            }
            None => {
                std::io::stdout().write_all(bytes)?;
                Ok(())
            }
        }
    }

    fn emit_table<R: Serialize>(&self, rows: &[R]) -> Result<(), CliError> {
        let bytes = match self.format() {
            OutputFormat::Csv => to_csv(rows)?,
            OutputFormat::Json => to_json(&rows),
        };
        self.emit(&bytes)
    }

    fn manifest(&self, command: &'static str, checks: Vec<ManifestCheck>) -> Result<(), CliError> {
        let seed = self
            .seed
            .or_else(|| self.config.as_ref().map(|c| c.run.seed))
            .unwrap_or_default();
        let hash = match &self.config {
            Some(c) => {
                let mut h = Sha256::new();
                h.update(serde_json::to_vec(c).expect("config serializes"));
                hex::encode(h.finalize())
            }
            None => hex::encode(Sha256::digest(format!("default-matrix:{seed}").as_bytes())),
        };
        let m = RunManifest {
            command,
            config_hash: hash,
            engine_version: env!("CARGO_PKG_VERSION"),
            seed,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            checks,
        };
        if let Some(p) = self.out_path() {
            std::fs::write(manifest_path(&p), to_json(&m))?;
        }
        Ok(())
    }
}

/// `<out>.manifest.json` next to the report.
pub(crate) fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn to_json<T: Serialize + ?Sized>(v: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(v).expect("report serializes");
    bytes.push(b'\n');
    bytes
}

fn to_csv<R: Serialize>(rows: &[R]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::input(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::input(e.to_string()))
}

pub(super) fn dispatch(cli: &Cli) -> Result<ExitCode, CliError> {
    let mut config = match &cli.common.config {
        Some(p) => Some(ExperimentConfig::load(p)?),
        None => None,
    };
    if let (Some(c), Some(seed)) = (config.as_mut(), cli.common.seed) {
        c.run.seed = seed;
    }
    let ctx = Context {
        config,
        seed: cli.common.seed,
        out: cli.common.out.clone(),
        format: cli.common.format.map(|f| match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }),
        started: Instant::now(),
    };
    match &cli.command {
        Command::Validate => cmd_validate(&ctx),
        Command::Simulate => cmd_simulate(&ctx),
        Command::Hedge => cmd_hedge(&ctx),
        Command::Backtest => cmd_backtest(&ctx),
        Command::Selfcheck { inject_bug } => cmd_selfcheck(&ctx, *inject_bug),
    }
}

fn cmd_validate(ctx: &Context) -> Result<ExitCode, CliError> {
    let params = &ctx.config()?.model;
    let c = validate_assumptions(params);
    let report = ValidateReport {
        family: params.subordinator.family_name(),
        feasible: c.feasible,
        kappa_min: c.kappa_interval.map(|i| i.lower),
        kappa_min_closed: c.kappa_interval.map(|i| i.lower_closed),
        kappa_max: c.kappa_interval.map(|i| i.upper),
        binding_constraint: c.binding_constraint,
        boundary: c.boundary,
        drift_bound: c.drift_bound,
        square_bound: c.square_bound,
        moment_bound: c.moment_bound,
    };
    match ctx.format() {
        OutputFormat::Json => ctx.emit(&to_json(&report))?,
        OutputFormat::Csv => ctx.emit(&to_csv(&[report])?)?,
    }
    Ok(if c.feasible { ExitCode::Ok } else { ExitCode::Infeasible })
}

fn grid(params: &BnsParams<f64>, steps: usize) -> Result<TimeGrid<f64>, CliError> {
    Ok(TimeGrid::uniform(params.maturity, steps)?)
}

fn cmd_simulate(ctx: &Context) -> Result<ExitCode, CliError> {
    let cfg = ctx.config()?;
    let params = &cfg.model;
    let g = grid(params, cfg.run.grid_steps)?;
    let streams = Streams::new(cfg.run.seed);
    let rows: Vec<Result<SimulateRow, CliError>> = par_collect(cfg.run.n_paths, |i| {
        let p = simulate_path(
            params,
            cfg.run.measure,
            &g,
            &mut streams.stream(Purpose::Path, i as u64),
        )?;
        Ok(SimulateRow {
            path: i,
            s_t: p.terminal_price(),
            sigma_sq_t: *p.sigma_sq_right.last().expect("nonempty"),
            int_var: p.total_variance(),
            jump_count: p.jumps.len(),
            jump_total: p.jumps.terminal(),
        })
    });
    let rows: Vec<SimulateRow> = rows.into_iter().collect::<Result<_, _>>()?;
    ctx.emit_table(&rows)?;
    ctx.manifest("simulate", Vec::new())?;
    Ok(ExitCode::Ok)
}

fn option_of(cfg: &ExperimentConfig) -> Result<OptionSpec<f64>, CliError> {
    cfg.option
        .ok_or_else(|| CliError::input("config needs an `option` section for this command"))
}

fn row(e: &HedgeEstimate<f64>, s: f64, sigma_sq_left: f64, kind: OptionKind) -> HedgeRow {
    let (xi, method) = match kind {
        OptionKind::Put => (e.xi, e.method),
        OptionKind::Call => (1.0 + e.xi, EstimateMethod::Parity),
    };
    HedgeRow {
        t: e.t,
        s,
        sigma_sq_left,
        xi,
        stderr: e.stderr,
        method: method.as_str(),
    }
}

fn cmd_hedge(ctx: &Context) -> Result<ExitCode, CliError> {
    let cfg = ctx.config()?;
    let params = &cfg.model;
    let option = option_of(cfg)?;
    let run = &cfg.run;
    let streams = Streams::new(run.seed);
    let t0 = lrm_put_t0(params, option.strike, run.n_paths, &streams, run.sampling)?;
    let mut rows = vec![row(&t0, params.s0, params.sigma0_sq, option.kind)];

    if run.report_paths > 0 {
        let g = grid(params, run.grid_steps)?;
        let method = run.method.unwrap_or(RunMethod::Terminal);
        let hedger = match method {
            RunMethod::Terminal => {
                return Err(CliError::input(
                    "report_paths needs run.method = \"nested\" or \"regression\"",
                ))
            }
            RunMethod::Regression => Some(RegressionHedger::fit(
                params,
                option.strike,
                &g,
                cfg.n_train(),
                run.basis_degree,
                &streams,
                run.sampling,
            )?),
            RunMethod::Nested => None,
        };
        for i in 0..run.report_paths {
            let path = simulate_path(
                params,
                crate::model::MeasureKind::Physical,
                &g,
                &mut streams.stream(Purpose::Path, i as u64),
            )?;
            for k in 0..path.steps() {
                let (s, left, t) = (path.price(k), path.sigma_sq_left[k], path.grid[k]);
                let e = match &hedger {
                    Some(h) => {
                        let (xi, stderr) = h.xi(k, s, left);
                        HedgeEstimate {
                            xi,
                            stderr,
                            method: EstimateMethod::Regression,
                            n_outer: h.n_train,
                            n_inner: 0,
                            t,
                        }
                    }
                    None => lrm_put_nested(
                        params,
                        option.strike,
                        t,
                        (s, left),
                        run.n_inner,
                        &streams.child(Purpose::Inner, i as u64, k as u64),
                        run.sampling,
                    )
                    .map_err(|e| e.at_path(i))?,
                };
                rows.push(row(&e, s, left, option.kind));
            }
        }
    }
    ctx.emit_table(&rows)?;
    let in_range = rows.iter().all(|r| {
        let slack = 3.0 * r.stderr;
        match option.kind {
            OptionKind::Put => r.xi >= -1.0 - slack && r.xi <= slack,
            OptionKind::Call => r.xi >= -slack && r.xi <= 1.0 + slack,
        }
    });
    ctx.manifest(
        "hedge",
        vec![ManifestCheck {
            name: "hedge_range".into(),
            pass: in_range,
        }],
    )?;
    Ok(ExitCode::Ok)
}

fn cmd_backtest(ctx: &Context) -> Result<ExitCode, CliError> {
    let cfg = ctx.config()?;
    let params = &cfg.model;
    let option = option_of(cfg)?;
    let run = &cfg.run;
    let method = match run.method.unwrap_or(RunMethod::Regression) {
        RunMethod::Nested => HedgeMethod::Nested,
        RunMethod::Regression => HedgeMethod::Regression,
        RunMethod::Terminal => {
            return Err(CliError::input(
                "backtest needs run.method = \"nested\" or \"regression\"",
            ))
        }
    };
    let opts = BacktestOptions {
        method,
        n_inner: run.n_inner,
        n_train: cfg.n_train(),
        basis_degree: run.basis_degree,
        sampling: run.sampling,
    };
    let streams = Streams::new(run.seed);
    let mut summaries = Vec::new();
    for steps in cfg.grid_sweep() {
        let g = grid(params, steps)?;
        summaries.push(backtest(params, &option, &g, run.n_paths, &opts, &streams)?.summary);
    }
    match ctx.format() {
        OutputFormat::Json => ctx.emit(&to_json(&summaries))?,
        OutputFormat::Csv => {
            let rows: Vec<BacktestRow> = summaries.iter().map(BacktestRow::from).collect();
            ctx.emit(&to_csv(&rows)?)?
        }
    }
    let mut checks = Vec::new();
    for s in &summaries {
        checks.push(ManifestCheck {
            name: format!("orthogonality_ci_contains_zero_{}", s.steps),
            pass: s.orthogonality.contains_zero,
        });
        checks.push(ManifestCheck {
            name: format!("cost_drift_ci_contains_zero_{}", s.steps),
            pass: s.cost_drift.contains_zero,
        });
    }
    ctx.manifest("backtest", checks)?;
    Ok(ExitCode::Ok)
}

fn cmd_selfcheck(ctx: &Context, inject_bug: bool) -> Result<ExitCode, CliError> {
    let mut opts = SelfcheckOptions {
        inject_bug,
        ..SelfcheckOptions::default()
    };
    let entries = match &ctx.config {
        Some(c) => {
            opts.seed = c.run.seed;
            opts.n_paths = c.run.n_paths;
            opts.grid_steps = c.run.grid_steps;
            vec![("config".to_string(), c.model)]
        }
        None => {
            if let Some(s) = ctx.seed {
                opts.seed = s;
            }
            default_matrix()
        }
    };
    let results: Vec<CheckResult> = run_selfcheck(&entries, &opts)?;
    let fmt = ctx.format.unwrap_or(OutputFormat::Csv);
    let bytes = match fmt {
        OutputFormat::Csv => to_csv(&results)?,
        OutputFormat::Json => to_json(&results),
    };
    ctx.emit(&bytes)?;
    let passed = results.iter().filter(|r| r.pass).count();
    eprintln!("{passed}/{} checks passed", results.len());
    ctx.manifest(
        "selfcheck",
        results
            .iter()
            .map(|r| ManifestCheck {
                name: format!("{}/{}", r.entry, r.name),
                pass: r.pass,
            })
            .collect(),
    )?;
    Ok(if passed == results.len() {
        ExitCode::Ok
    } else {
        ExitCode::CheckFailed
    })
}
