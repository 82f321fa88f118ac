//! `liquidate`: optimal liquidation quotes, simulation and backtests from the
//! command line.
//!
//! Exit status is 0 on success, 2 for usage or config errors, 3 when the
//! model rejects the parameters, and 4 for bad or missing data.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use liquidation_core::backtester::{audit, run_backtest, summarize};
use liquidation_core::closed_forms::{
    asymptotic_quote, binf_quote, binf_trading_curve, nodrift_novol_quote, risk_neutral_quote,
};
use liquidation_core::config::Config;
use liquidation_core::export::{
    write_json, write_quotes_csv, write_quotes_json, write_sweep_csv, write_w_csv, Format,
};
use liquidation_core::market_data::{calibrate, load_tape};
use liquidation_core::ode::SolverRegistry;
use liquidation_core::simulator::{simulate_ensemble, simulate_path, PolicyRegistry};
use liquidation_core::sweep::{parse_sweep_spec, sweep};
use liquidation_core::{quote_surface, Error, ModelParams, QuoteSurface, Result, WGrid};

const CONFIG_DIR_VAR: &str = "LIQUIDATE_CONFIG_DIR";

#[derive(Parser)]
#[command(name = "liquidate", version, about = "Optimal limit-order liquidation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file. A bare name is also looked up in $LIQUIDATE_CONFIG_DIR,
    /// where `default.toml` is used when no config is given.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file, or directory for `simulate` and `backtest`. Stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Config override, e.g. `--set sigma=0.6` or `--set sim.dt=0.01`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed for simulation and randomized rounding
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of Monte Carlo paths
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Time steps of the solver grid
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Solver name: rk, spectral or quadrature.
    #[arg(long, global = true)]
    solver: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve for w_q(t) on the time grid.
    Solve,
    /// Optimal quotes delta*(t, q).
    Quotes,
    /// Initial quotes delta*(0, q) as one parameter varies.
    Sweep {
        /// `param=v1,v2,...` with param one of mu, sigma, A, k, gamma, b.
        #[arg(long)]
        sweep: String,
    },
    /// Evaluate a closed-form special case.
    ClosedForm {
        #[arg(long, value_enum)]
        kind: ClosedKind,
    },
    /// Monte Carlo of the controlled execution.
    Simulate,
    /// Estimate sigma, (A, k) per spread bucket and gamma from a trade tape.
    Calibrate {
        #[arg(long)]
        tape: Option<PathBuf>,
    },
    /// Replay the strategy against a trade tape.
    Backtest {
        #[arg(long)]
        tape: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ClosedKind {
    /// Long-horizon quotes, one per q.
    Asymptotic,
    /// sigma = mu = 0.
    NodriftNovol,
    /// gamma -> 0 with sigma = mu = 0.
    RiskNeutral,
    /// Large liquidation cost, sigma = 0.
    Binf,
    /// Expected inventory under the large-cost quotes, from `sim.q0`.
    BinfCurve,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("liquidate: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_usage_error() {
        2
    } else if e.is_data_error() {
        4
    } else {
        3
    }
}

fn resolve_config(arg: Option<&Path>) -> Result<Option<PathBuf>> {
    let dir = std::env::var_os(CONFIG_DIR_VAR).map(PathBuf::from);
    let Some(arg) = arg else {
        return Ok(dir.map(|d| d.join("default.toml")).filter(|p| p.is_file()));
    };
    if arg.is_file() {
        return Ok(Some(arg.to_path_buf()));
    }
    if let Some(d) = dir.filter(|_| arg.is_relative()) {
        for candidate in [d.join(arg), d.join(arg).with_extension("toml")] {
            if candidate.is_file() {
                return Ok(Some(candidate));
            }
        }
    }
    Err(Error::Config(format!("config `{}` not found", arg.display())))
}

fn load_config(c: &Common) -> Result<Config> {
    let path = resolve_config(c.config.as_deref())?;
    let mut overrides = c.overrides.clone();
    if let Some(s) = c.seed {
        overrides.push(format!("sim.seed={s}"));
        overrides.push(format!("backtest.seed={s}"));
    }
    if let Some(n) = c.paths {
        overrides.push(format!("sim.n_paths={n}"));
    }
    if let Some(n) = c.steps {
        overrides.push(format!("n_steps={n}"));
    }
    if let Some(s) = &c.solver {
        overrides.push(format!("solver=\"{s}\""));
    }
    Config::load(path.as_deref(), &overrides)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            Box::new(BufWriter::new(File::create(p)?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn out_dir(path: &Path) -> Result<PathBuf> {
    fs::create_dir_all(path)?;
    Ok(path.to_path_buf())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn solve(cfg: &Config, p: &ModelParams) -> Result<WGrid> {
    SolverRegistry::builtin().get(&cfg.solver)?.solve(p, cfg.n_steps)
}

fn surface(cfg: &Config, p: &ModelParams) -> Result<QuoteSurface> {
    quote_surface(&solve(cfg, p)?)
}

fn tape_path(cfg: &Config, flag: Option<PathBuf>) -> Result<PathBuf> {
    flag.or_else(|| cfg.tape_path())
        .ok_or_else(|| Error::Config("no tape: pass --tape or set backtest.tape".into()))
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    let cfg = load_config(c)?;
    let format = Format::from(c.format);
    let p = cfg.params()?;
    match cli.command {
        Command::Solve => {
            let w = solve(&cfg, &p)?;
            let mut out = output(c.out.as_deref())?;
            match format {
                Format::Csv => write_w_csv(&w, &mut out)?,
                Format::Json => {
                    let values: Vec<Vec<f64>> = (0..=w.n_steps())
                        .map(|n| (0..=w.q_max()).map(|q| w.value(n, q)).collect())
                        .collect();
                    write_json(&json!({ "params": p, "times": w.times(), "w": values }), &mut out)?;
                }
            }
            out.flush()?;
        }
        Command::Quotes => {
            let s = surface(&cfg, &p)?;
            let mut out = output(c.out.as_deref())?;
            match format {
                Format::Csv => write_quotes_csv(&s, &mut out)?,
                Format::Json => write_quotes_json(&s, &p, &mut out)?,
            }
            out.flush()?;
        }
        Command::Sweep { sweep: spec } => {
            let (param, values) = parse_sweep_spec(&spec)?;
            let table = sweep(&p, param, &values, &SolverRegistry::builtin(), &cfg.solver, cfg.n_steps)?;
            let mut out = output(c.out.as_deref())?;
            match format {
                Format::Csv => write_sweep_csv(&table, &mut out)?,
                Format::Json => write_json(&table, &mut out)?,
            }
            out.flush()?;
        }
        Command::ClosedForm { kind } => closed_form(&cfg, &p, kind, c.out.as_deref(), format)?,
        Command::Simulate => {
            let policy = PolicyRegistry::builtin().build(&cfg.policy_spec(), &|| surface(&cfg, &p))?;
            let sim = cfg.sim_config(policy)?;
            let summary = simulate_ensemble(&sim)?;
            match &c.out {
                Some(path) => {
                    let dir = out_dir(path)?;
                    let mut f = create(&dir, "curve.csv")?;
                    summary.write_curve_csv(&mut f)?;
                    f.flush()?;
                    let mut f = create(&dir, "summary.json")?;
                    write_json(&summary.stats_json(), &mut f)?;
                    f.flush()?;
                    let first = simulate_path(&sim, 0)?;
                    let mut f = create(&dir, "path.csv")?;
                    first.write_csv(&mut f)?;
                    f.flush()?;
                    let mut f = create(&dir, "events.csv")?;
                    first.write_events_csv(&mut f)?;
                    f.flush()?;
                }
                None => {
                    let mut out = output(None)?;
                    match format {
                        Format::Csv => summary.write_curve_csv(&mut out)?,
                        Format::Json => write_json(&summary.stats_json(), &mut out)?,
                    }
                    out.flush()?;
                }
            }
        }
        Command::Calibrate { tape } => {
            let tape = load_tape(&tape_path(&cfg, tape)?, cfg.backtest.tick_size)?;
            let result = calibrate(&tape, &cfg.calibration, &p)?;
            let mut out = output(c.out.as_deref())?;
            match format {
                Format::Json => write_json(&result, &mut out)?,
                Format::Csv => {
                    writeln!(out, "bucket,A,k,n_obs,exposure")?;
                    for (b, f) in &result.buckets {
                        writeln!(out, "{b},{:.16e},{:.16e},{},{:.16e}", f.a_hat, f.k_hat, f.n_obs, f.exposure)?;
                    }
                }
            }
            out.flush()?;
            if format == Format::Csv {
                eprintln!(
                    "sigma_hat = {:.6}, gamma_hat = {:.6} (bucket {})",
                    result.sigma_hat, result.gamma_hat, result.reference_bucket
                );
            }
        }
        Command::Backtest { tape } => {
            let tape = load_tape(&tape_path(&cfg, tape)?, cfg.backtest.tick_size)?;
            let bt = cfg.backtest_config()?;
            let ledger = run_backtest(&tape, &bt)?;
            let report = audit(&ledger, &tape, &bt);
            let summary = summarize(&ledger);
            let stats = json!({ "summary": summary, "audit_violations": report.violations });
            match &c.out {
                Some(path) => {
                    let dir = out_dir(path)?;
                    let mut f = create(&dir, "orders.csv")?;
                    ledger.write_orders_csv(&mut f)?;
                    f.flush()?;
                    let mut f = create(&dir, "fills.csv")?;
                    ledger.write_fills_csv(&mut f)?;
                    f.flush()?;
                    let mut f = create(&dir, "series.csv")?;
                    ledger.write_series_csv(&mut f)?;
                    f.flush()?;
                    let mut f = create(&dir, "summary.json")?;
                    write_json(&stats, &mut f)?;
                    f.flush()?;
                }
                None => {
                    let mut out = output(None)?;
                    write_json(&stats, &mut out)?;
                    out.flush()?;
                }
            }
            if !report.is_clean() {
                return Err(Error::Domain(format!("ledger audit failed: {}", report.violations.join("; "))));
            }
        }
    }
    Ok(())
}

fn closed_form(cfg: &Config, p: &ModelParams, kind: ClosedKind, out: Option<&Path>, format: Format) -> Result<()> {
    let n = cfg.n_steps;
    let times: Vec<f64> = (0..=n).map(|i| i as f64 * (p.horizon / n as f64)).collect();
    let mut out = output(out)?;
    match kind {
        ClosedKind::Asymptotic => {
            let quotes = (1..=p.q_max).map(|q| asymptotic_quote(p, q)).collect::<Result<Vec<_>>>()?;
            match format {
                Format::Csv => {
                    writeln!(out, "q,quote")?;
                    for (i, d) in quotes.iter().enumerate() {
                        writeln!(out, "{},{d:.16e}", i + 1)?;
                    }
                }
                Format::Json => write_json(&json!({ "kind": "asymptotic", "quotes": quotes }), &mut out)?,
            }
        }
        ClosedKind::BinfCurve => {
            let q0 = cfg.sim.q0.unwrap_or(p.q_max);
            let curve = binf_trading_curve(p, q0, &times)?;
            match format {
                Format::Csv => curve.write_csv(&mut out)?,
                Format::Json => write_json(&curve, &mut out)?,
            }
        }
        ClosedKind::NodriftNovol | ClosedKind::RiskNeutral | ClosedKind::Binf => {
            let (name, f): (&str, fn(&ModelParams, f64, usize) -> Result<f64>) = match kind {
                ClosedKind::NodriftNovol => ("nodrift_novol", nodrift_novol_quote),
                ClosedKind::RiskNeutral => ("risk_neutral", risk_neutral_quote),
                _ => ("binf", binf_quote),
            };
            // the large-cost quote is unbounded below at t = T
            let times = match kind {
                ClosedKind::Binf => &times[..n],
                _ => &times[..],
            };
            let quotes = times
                .iter()
                .map(|&t| (1..=p.q_max).map(|q| f(p, t, q)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            match format {
                Format::Csv => {
                    writeln!(out, "t,q,quote")?;
                    for (t, row) in times.iter().zip(&quotes) {
                        for (i, d) in row.iter().enumerate() {
                            writeln!(out, "{t:.16e},{},{d:.16e}", i + 1)?;
                        }
                    }
                }
                Format::Json => {
                    write_json(&json!({ "kind": name, "times": times, "quotes": quotes }), &mut out)?
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}
