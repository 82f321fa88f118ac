//! Comparative statics: the initial quotes `delta*(0, q)` as one parameter
//! varies.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::ode::{quote_surface, SolverRegistry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepParam {
    Mu,
    Sigma,
    BigA,
    K,
    Gamma,
    B,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Mu => "mu",
            SweepParam::Sigma => "sigma",
            SweepParam::BigA => "A",
            SweepParam::K => "k",
            SweepParam::Gamma => "gamma",
            SweepParam::B => "b",
        }
    }

    pub fn apply(self, p: &ModelParams, v: f64) -> ModelParams {
        let mut out = *p;
        match self {
            SweepParam::Mu => out.mu = v,
            SweepParam::Sigma => out.sigma = v,
            SweepParam::BigA => out.big_a = v,
            SweepParam::K => out.k = v,
            SweepParam::Gamma => out.gamma = v,
            SweepParam::B => out.b = v,
        }
        out
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mu" => SweepParam::Mu,
            "sigma" => SweepParam::Sigma,
            "A" => SweepParam::BigA,
            "k" => SweepParam::K,
            "gamma" => SweepParam::Gamma,
            "b" => SweepParam::B,
            other => {
                return Err(Error::UnknownName {
                    kind: "sweep parameter",
                    name: other.into(),
                })
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub q_max: usize,
    /// `quotes[i][q - 1]` is `delta*(0, q)` at `values[i]`.
    pub quotes: Vec<Vec<f64>>,
}

impl SweepTable {
    pub fn quote(&self, i: usize, q: usize) -> f64 {
        self.quotes[i][q - 1]
    }
}

pub fn sweep(
    base: &ModelParams,
    param: SweepParam,
    values: &[f64],
    solvers: &SolverRegistry,
    solver: &str,
    n_steps: usize,
) -> Result<SweepTable> {
    let s = solvers.get(solver)?;
    let quotes = values
        .iter()
        .map(|&v| {
            let p = param.apply(base, v);
            let surface = quote_surface(&s.solve(&p, n_steps)?)?;
            Ok((1..=p.q_max).map(|q| surface.quote(0, q)).collect())
        })
        .collect::<Result<_>>()?;
    Ok(SweepTable {
        param,
        values: values.to_vec(),
        q_max: base.q_max,
        quotes,
    })
}

/// Parses `param=v1,v2,...`.
pub fn parse_sweep_spec(spec: &str) -> Result<(SweepParam, Vec<f64>)> {
    let (name, list) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("sweep `{spec}` is not param=v1,v2,...")))?;
    let param = name.trim().parse()?;
    let values = list
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("sweep value `{v}` is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    Ok((param, values))
}
