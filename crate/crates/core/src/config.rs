//! Run configuration: model parameters as flat keys plus `[sim]`,
//! `[backtest]` and `[calibration]` tables.
//!
//! ```toml
//! mu = 0.0
//! sigma = 0.3
//! A = 0.1
//! k = 0.3
//! gamma = 0.05
//! b = 3.0
//! T = 300.0
//! q_max = 6
//!
//! [sim]
//! dt = 0.05
//! n_paths = 100000
//! ```
//!
//! Overrides of the form `key=value` or `section.key=value` are applied to
//! the parsed document before it is checked, so they obey the same rules as
//! the file (unknown keys are rejected).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backtester::{BacktestConfig, GammaRule, Reference, Rounding};
use crate::error::{Error, Result};
use crate::market_data::CalibrationConfig;
use crate::model::ModelParams;
use crate::ode::DEFAULT_STEPS;
use crate::simulator::{PolicySpec, QuotePolicy, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub mu: f64,
    pub sigma: f64,
    #[serde(rename = "A")]
    pub big_a: f64,
    pub k: f64,
    pub gamma: f64,
    pub b: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub q_max: usize,
    #[serde(default = "default_solver")]
    pub solver: String,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub backtest: BacktestSection,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_solver() -> String {
    "rk".into()
}

fn default_steps() -> usize {
    DEFAULT_STEPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    /// Defaults to `q_max`.
    pub q0: Option<usize>,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub policy: String,
    pub delta: Option<f64>,
    pub threshold: Option<f64>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            q0: None,
            dt: 0.05,
            n_paths: 10_000,
            seed: 0,
            policy: "optimal".into(),
            delta: None,
            threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktestSection {
    pub tape: Option<PathBuf>,
    pub tick_size: f64,
    pub delta_t: f64,
    pub q0: usize,
    /// Defaults to the model's `T`.
    pub horizon: Option<f64>,
    /// `nearest` or `randomized`.
    pub rounding: String,
    pub seed: u64,
    pub recalib_window: f64,
    /// Fixed risk aversion; when absent `gamma` is set from `target_quote`.
    pub gamma: Option<f64>,
    pub target_quote: f64,
    pub fallback_threshold: Option<f64>,
    /// `mid` or `best_bid`.
    pub reference: String,
    pub start: Option<f64>,
}

impl Default for BacktestSection {
    fn default() -> Self {
        let d = BacktestConfig::default();
        Self {
            tape: None,
            tick_size: 1.0,
            delta_t: d.delta_t,
            q0: d.q0,
            horizon: None,
            rounding: "nearest".into(),
            seed: 0,
            recalib_window: d.recalib_window,
            gamma: None,
            target_quote: 1.0,
            fallback_threshold: None,
            reference: "mid".into(),
            start: None,
        }
    }
}

impl Default for Config {
    /// The reference fixture (`T = 300 s`, six units).
    fn default() -> Self {
        let p = ModelParams::reference();
        Self {
            mu: p.mu,
            sigma: p.sigma,
            big_a: p.big_a,
            k: p.k,
            gamma: p.gamma,
            b: p.b,
            horizon: p.horizon,
            q_max: p.q_max,
            solver: default_solver(),
            n_steps: DEFAULT_STEPS,
            sim: SimSection::default(),
            backtest: BacktestSection::default(),
            calibration: CalibrationConfig::default(),
            base_dir: PathBuf::new(),
        }
    }
}

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `key=value` overrides to a parsed document.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
        let path: Vec<&str> = key.trim().split('.').collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(Error::Config(format!("bad override key `{key}`")));
        }
        let (last, parents) = path.split_last().expect("non-empty");
        let mut cur = &mut *table;
        for p in parents {
            let entry = cur
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            cur = entry
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("`{p}` in `{key}` is not a section")))?;
        }
        cur.insert(last.to_string(), parse_value(value.trim()));
    }
    Ok(())
}

impl Config {
    pub fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.params()?;
        Ok(cfg)
    }

    pub fn from_str_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        apply_overrides(&mut table, overrides)?;
        Self::from_table(table)
    }

    /// Loads `path`, or the reference fixture when `path` is `None`, then
    /// applies `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                let mut cfg = Self::from_str_with(&text, overrides).map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("{}: {m}", p.display())),
                    other => other,
                })?;
                cfg.base_dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
                Ok(cfg)
            }
            None => {
                let mut table = toml::Table::try_from(Config::default())
                    .map_err(|e| Error::Config(e.to_string()))?;
                apply_overrides(&mut table, overrides)?;
                Self::from_table(table)
            }
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn params(&self) -> Result<ModelParams> {
        let p = ModelParams {
            mu: self.mu,
            sigma: self.sigma,
            big_a: self.big_a,
            k: self.k,
            gamma: self.gamma,
            b: self.b,
            horizon: self.horizon,
            q_max: self.q_max,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn policy_spec(&self) -> PolicySpec {
        PolicySpec {
            name: self.sim.policy.clone(),
            delta: self.sim.delta,
            threshold: self.sim.threshold,
        }
    }

    pub fn sim_config(&self, policy: Arc<dyn QuotePolicy>) -> Result<SimConfig> {
        let cfg = SimConfig {
            params: self.params()?,
            q0: self.sim.q0.unwrap_or(self.q_max),
            dt: self.sim.dt,
            n_paths: self.sim.n_paths,
            seed: self.sim.seed,
            policy,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Tape path resolved against the config file's directory.
    pub fn tape_path(&self) -> Option<PathBuf> {
        self.backtest.tape.as_ref().map(|t| {
            if t.is_absolute() {
                t.clone()
            } else {
                self.base_dir.join(t)
            }
        })
    }

    pub fn backtest_config(&self) -> Result<BacktestConfig> {
        let s = &self.backtest;
        let rounding = match s.rounding.as_str() {
            "nearest" | "nearest_tick" => Rounding::NearestTick,
            "randomized" => Rounding::Randomized { seed: s.seed },
            other => {
                return Err(Error::UnknownName {
                    kind: "rounding mode",
                    name: other.into(),
                })
            }
        };
        let reference = match s.reference.as_str() {
            "mid" => Reference::Mid,
            "best_bid" | "bid" => Reference::BestBid,
            other => {
                return Err(Error::UnknownName {
                    kind: "reference price",
                    name: other.into(),
                })
            }
        };
        let cfg = BacktestConfig {
            delta_t: s.delta_t,
            q0: s.q0,
            horizon: s.horizon.unwrap_or(self.horizon),
            rounding,
            recalib_window: s.recalib_window,
            gamma_rule: match s.gamma {
                Some(g) => GammaRule::Fixed(g),
                None => GammaRule::QuoteTarget(s.target_quote),
            },
            market_order_fallback: s.fallback_threshold,
            liquidation_cost_b: self.b,
            reference,
            start: s.start,
            sampling_dt: self.calibration.sampling_dt,
            distance_grid: self.calibration.distance_grid.clone(),
            n_min: self.calibration.n_min,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "mu = 0.0\nsigma = 0.3\nA = 0.1\nk = 0.3\ngamma = 0.05\nb = 3.0\nT = 300.0\nq_max = 6\n";

    #[test]
    fn parses_flat_model_keys() {
        let c = Config::from_str_with(FIXTURE, &[]).unwrap();
        assert_eq!(c.params().unwrap(), ModelParams::reference());
        assert_eq!(c.sim, SimSection::default());
        assert_eq!(c.solver, "rk");
    }

    #[test]
    fn overrides_apply_after_load() {
        let c = Config::from_str_with(
            FIXTURE,
            &["sigma=0.6".into(), "sim.n_paths=7".into(), "sim.policy=fixed".into(), "T=7200".into()],
        )
        .unwrap();
        assert_eq!(c.sigma, 0.6);
        assert_eq!(c.horizon, 7200.0);
        assert_eq!(c.sim.n_paths, 7);
        assert_eq!(c.sim.policy, "fixed");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            Config::from_str_with(FIXTURE, &["sim.paths=3".into()]),
            Err(Error::Config(_))
        ));
        let text = format!("{FIXTURE}volatility = 1\n");
        assert!(matches!(Config::from_str_with(&text, &[]), Err(Error::Config(_))));
        assert!(matches!(
            Config::from_str_with(FIXTURE, &["no_equals".into()]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn invalid_values_fail_validation() {
        assert!(matches!(
            Config::from_str_with(FIXTURE, &["k=-1".into()]),
            Err(Error::InvalidParams { name: "k", .. })
        ));
    }

    #[test]
    fn default_round_trips_through_toml() {
        let c = Config::default();
        let back = Config::from_str_with(&c.to_toml_string(), &[]).unwrap();
        assert_eq!(back, c);
        let none = Config::load(None, &["b=20".into()]).unwrap();
        assert_eq!(none.b, 20.0);
    }

    #[test]
    fn backtest_section_maps_to_config() {
        let c = Config::from_str_with(
            FIXTURE,
            &["backtest.rounding=randomized".into(), "backtest.seed=9".into(), "backtest.gamma=0.2".into()],
        )
        .unwrap();
        let bt = c.backtest_config().unwrap();
        assert_eq!(bt.rounding, Rounding::Randomized { seed: 9 });
        assert_eq!(bt.gamma_rule, GammaRule::Fixed(0.2));
        assert_eq!(bt.horizon, 300.0);
        assert_eq!(bt.liquidation_cost_b, 3.0);
        let bad = Config::from_str_with(FIXTURE, &["backtest.rounding=up".into()]).unwrap();
        assert!(matches!(bad.backtest_config(), Err(Error::UnknownName { .. })));
    }
}
