//! Market and preference parameters, the coefficients of the reduced ODE
//! system, and the optimal-quote formula.
//!
//! Prices are in Ticks and time in seconds throughout. The reference price
//! follows `dS = mu dt + sigma dW`, a resting ask at premium `delta` over `S`
//! is hit with intensity `A exp(-k delta)`, and the trader maximises
//! `E[-exp(-gamma (X_T + q_T (S_T - b)))]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::WGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Price drift, Tick/s.
    pub mu: f64,
    /// Price volatility, Tick/s^0.5.
    pub sigma: f64,
    /// Intensity scale, 1/s.
    #[serde(rename = "A")]
    pub big_a: f64,
    /// Intensity decay, 1/Tick.
    pub k: f64,
    /// Absolute risk aversion, 1/Tick.
    pub gamma: f64,
    /// Per-share liquidation cost at the horizon, Tick.
    pub b: f64,
    /// Horizon, s.
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Largest inventory solved for, in unit bunches.
    pub q_max: usize,
}

impl ModelParams {
    /// The reference desk fixture: five minutes, sigma 0.3, A 0.1, k 0.3,
    /// gamma 0.05, b 3, inventory up to 6.
    pub fn reference() -> Self {
        Self {
            mu: 0.0,
            sigma: 0.3,
            big_a: 0.1,
            k: 0.3,
            gamma: 0.05,
            b: 3.0,
            horizon: 300.0,
            q_max: 6,
        }
    }

    /// Checks every invariant except `gamma > 0`, which only the quote
    /// formula needs (see [`ModelParams::require_risk_averse`]).
    pub fn validate(&self) -> Result<()> {
        fn finite(name: &'static str, v: f64) -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("{v} is not finite")))
            }
        }
        finite("mu", self.mu)?;
        finite("sigma", self.sigma)?;
        finite("A", self.big_a)?;
        finite("k", self.k)?;
        finite("gamma", self.gamma)?;
        finite("b", self.b)?;
        finite("T", self.horizon)?;
        if self.sigma < 0.0 {
            return Err(Error::invalid("sigma", "must be >= 0"));
        }
        if self.big_a <= 0.0 {
            return Err(Error::invalid("A", "must be > 0"));
        }
        if self.k <= 0.0 {
            return Err(Error::invalid("k", "must be > 0"));
        }
        if self.gamma < 0.0 {
            return Err(Error::invalid("gamma", "must be >= 0"));
        }
        if self.b < 0.0 {
            return Err(Error::invalid("b", "must be >= 0"));
        }
        if self.horizon <= 0.0 {
            return Err(Error::invalid("T", "must be > 0"));
        }
        if self.q_max < 1 {
            return Err(Error::invalid("q_max", "must be >= 1"));
        }
        Ok(())
    }

    pub fn require_risk_averse(&self) -> Result<()> {
        if self.gamma > 0.0 {
            Ok(())
        } else {
            Err(Error::Regime {
                required: "gamma > 0 (use the risk-neutral closed form for gamma = 0)",
                got: format!("gamma = {}", self.gamma),
            })
        }
    }

    pub fn coefficients(&self) -> DerivedCoefficients {
        derive_coefficients(self)
    }

    /// Common value of every inventory row at the horizon:
    /// `-b + ln(1 + gamma/k) / gamma`.
    pub fn terminal_quote(&self) -> f64 {
        -self.b + premium_term(self.gamma, self.k)
    }

    /// Parses the flat `key = value` form produced by [`ModelParams::to_config_string`].
    pub fn from_config_str(s: &str) -> Result<Self> {
        let p: Self = toml::from_str(s).map_err(|e| Error::Config(e.message().to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_config_string(&self) -> String {
        toml::to_string(self).expect("flat struct of numbers always serialises")
    }
}

/// `ln(1 + gamma/k) / gamma`, with its `1/k` limit at `gamma = 0`.
pub(crate) fn premium_term(gamma: f64, k: f64) -> f64 {
    if gamma == 0.0 {
        1.0 / k
    } else {
        (gamma / k).ln_1p() / gamma
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedCoefficients {
    /// `k gamma sigma^2 / 2`, 1/s.
    pub alpha: f64,
    /// `k mu`, 1/s.
    pub beta: f64,
    /// `A (1 + gamma/k)^-(1 + k/gamma)`, 1/s.
    pub eta: f64,
}

impl DerivedCoefficients {
    /// Diagonal entry of the system matrix for row `q`.
    pub fn lambda(&self, q: usize) -> f64 {
        let q = q as f64;
        self.alpha * q * q - self.beta * q
    }
}

pub fn derive_coefficients(p: &ModelParams) -> DerivedCoefficients {
    let alpha = 0.5 * p.k * p.gamma * p.sigma * p.sigma;
    let beta = p.k * p.mu;
    let eta = if p.gamma == 0.0 {
        p.big_a * (-1.0f64).exp()
    } else {
        let r = p.gamma / p.k;
        p.big_a * (-(1.0 + 1.0 / r) * r.ln_1p()).exp()
    };
    DerivedCoefficients { alpha, beta, eta }
}

/// Optimal ask premium from two adjacent components of the ODE solution:
/// `ln(w_q / w_{q-1}) / k + ln(1 + gamma/k) / gamma`.
///
/// Negative results are returned unchanged.
pub fn quote_from_w(w_q: f64, w_qm1: f64, p: &ModelParams) -> Result<f64> {
    if !(w_q > 0.0 && w_qm1 > 0.0) {
        return Err(Error::Domain(format!(
            "quote needs positive w, got w_q={w_q}, w_(q-1)={w_qm1}"
        )));
    }
    quote_from_log_ratio(w_q.ln() - w_qm1.ln(), p)
}

pub(crate) fn quote_from_log_ratio(log_ratio: f64, p: &ModelParams) -> Result<f64> {
    p.require_risk_averse()?;
    Ok(log_ratio / p.k + premium_term(p.gamma, p.k))
}

/// Evaluates `w'_q + k mu q w_q - k gamma sigma^2 q^2 w_q / 2 + eta w_{q-1}`
/// at the grid point nearest `t`, with `w'_q` from finite differences.
///
/// The value vanishes when the grid solves the ODE system exactly.
pub fn hjb_residual(w: &WGrid, p: &ModelParams, t: f64, q: usize) -> Result<f64> {
    if q == 0 || q > w.q_max() {
        return Err(Error::Domain(format!(
            "residual needs 1 <= q <= {}, got {q}",
            w.q_max()
        )));
    }
    let n = w.index_of(t)?;
    let h = w.step();
    let last = w.n_steps();
    // second-order differences everywhere, one-sided at the ends
    let dw = if last < 2 {
        (w.value(last, q) - w.value(0, q)) / h
    } else if n == 0 {
        (-3.0 * w.value(0, q) + 4.0 * w.value(1, q) - w.value(2, q)) / (2.0 * h)
    } else if n == last {
        (3.0 * w.value(n, q) - 4.0 * w.value(n - 1, q) + w.value(n - 2, q)) / (2.0 * h)
    } else {
        (w.value(n + 1, q) - w.value(n - 1, q)) / (2.0 * h)
    };
    let c = p.coefficients();
    Ok(dw - c.lambda(q) * w.value(n, q) + c.eta * w.value(n, q - 1))
}

/// Optimal premia `delta(t_n, q)` on a time grid, for `q = 1..=q_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteSurface {
    times: Vec<f64>,
    q_max: usize,
    /// Row-major by time index, `q_max` entries per row.
    quotes: Vec<f64>,
}

impl QuoteSurface {
    pub(crate) fn new(times: Vec<f64>, q_max: usize, quotes: Vec<f64>) -> Self {
        debug_assert_eq!(times.len() * q_max, quotes.len());
        Self {
            times,
            q_max,
            quotes,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn q_max(&self) -> usize {
        self.q_max
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("surface has at least two times")
    }

    /// Quote at grid index `n` for inventory `q` (1-based).
    pub fn quote(&self, n: usize, q: usize) -> f64 {
        assert!(q >= 1 && q <= self.q_max, "q={q} outside 1..={}", self.q_max);
        self.quotes[n * self.q_max + q - 1]
    }

    /// Quote in force at time `t`: the value at the latest grid time `<= t`.
    pub fn quote_at(&self, t: f64, q: usize) -> f64 {
        self.quote(self.index_at_or_before(t), q)
    }

    pub fn index_at_or_before(&self, t: f64) -> usize {
        match self.times.partition_point(|&s| s <= t) {
            0 => 0,
            i => i - 1,
        }
    }
}
