//! Closed-form solutions in the special regimes of the model: long horizon,
//! no price risk, risk neutrality, and the large-liquidation-cost limit.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{premium_term, ModelParams};

/// Expected inventory `V(t) = E[q_t]` on a set of times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradingCurve {
    pub times: Vec<f64>,
    pub expected_inventory: Vec<f64>,
    pub q0: usize,
}

impl TradingCurve {
    /// Writes `t,V` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,V")?;
        for (t, v) in self.times.iter().zip(&self.expected_inventory) {
            writeln!(out, "{t:.16e},{v:.16e}")?;
        }
        Ok(())
    }
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn tau_of(p: &ModelParams, t: f64) -> Result<f64> {
    if !(0.0..=p.horizon).contains(&t) {
        return Err(Error::OutOfRange {
            t,
            lo: 0.0,
            hi: p.horizon,
        });
    }
    Ok(p.horizon - t)
}

fn require_positive_q(q: usize) -> Result<()> {
    if q == 0 {
        Err(Error::Domain("quotes are defined for q >= 1".into()))
    } else {
        Ok(())
    }
}

fn require_no_price_risk(p: &ModelParams) -> Result<()> {
    if p.sigma == 0.0 && p.mu == 0.0 {
        Ok(())
    } else {
        Err(Error::Regime {
            required: "sigma = 0 and mu = 0",
            got: format!("sigma = {}, mu = {}", p.sigma, p.mu),
        })
    }
}

fn require_no_volatility(p: &ModelParams) -> Result<()> {
    if p.sigma == 0.0 {
        Ok(())
    } else {
        Err(Error::Regime {
            required: "sigma = 0",
            got: format!("sigma = {}", p.sigma),
        })
    }
}

fn require_asymptote(p: &ModelParams) -> Result<()> {
    p.require_risk_averse()?;
    let bound = 0.5 * p.gamma * p.sigma * p.sigma;
    if p.mu < bound {
        Ok(())
    } else {
        Err(Error::NoAsymptote { mu: p.mu, bound })
    }
}

/// Limit of `delta(0, q)` as `T -> infinity`:
/// `ln(A / (k + gamma) / (gamma sigma^2 q^2 / 2 - mu q)) / k`.
///
/// Independent of `b` and `T`. Requires `mu < gamma sigma^2 / 2`.
pub fn asymptotic_quote(p: &ModelParams, q: usize) -> Result<f64> {
    require_asymptote(p)?;
    require_positive_q(q)?;
    let q = q as f64;
    let denom = 0.5 * p.gamma * p.sigma * p.sigma * q * q - p.mu * q;
    Ok((p.big_a / (p.k + p.gamma) / denom).ln() / p.k)
}

/// Limit of `w_q(0)` as `T -> infinity`: `eta^q / q! prod_{j=1..q} 1/(alpha j - beta)`.
pub fn asymptotic_w(p: &ModelParams, q: usize) -> Result<f64> {
    require_asymptote(p)?;
    let c = p.coefficients();
    let mut w = 1.0;
    for j in 1..=q {
        w *= c.eta / (j as f64) / (c.alpha * j as f64 - c.beta);
    }
    Ok(w)
}

fn nodrift_novol_log_terms(p: &ModelParams, eta: f64, tau: f64, q: usize) -> Vec<f64> {
    (0..=q)
        .map(|j| {
            let jf = j as f64;
            let power = if j == 0 { 0.0 } else { jf * (eta * tau).ln() };
            power - ln_factorial(j) - p.k * p.b * (q - j) as f64
        })
        .collect()
}

/// `w_q(t) = sum_{j=0..q} eta^j / j! exp(-k b (q-j)) (T-t)^j` when `sigma = mu = 0`.
pub fn nodrift_novol_w(p: &ModelParams, t: f64, q: usize) -> Result<f64> {
    require_no_price_risk(p)?;
    let tau = tau_of(p, t)?;
    let terms = nodrift_novol_log_terms(p, p.coefficients().eta, tau, q);
    Ok(log_sum_exp(terms.into_iter()).exp())
}

/// `-b + ln(1 + X/Y)/k + premium`, with `X` the top term of the no-price-risk
/// sum and `Y` the sum of the others, evaluated from their logarithms.
fn no_risk_quote(p: &ModelParams, eta: f64, tau: f64, q: usize, premium: f64) -> f64 {
    if tau == 0.0 {
        return -p.b + premium;
    }
    let terms = nodrift_novol_log_terms(p, eta, tau, q);
    let top = terms[q];
    let rest = log_sum_exp(terms[..q].iter().copied());
    let d = top - rest;
    // ln(1 + e^d) without overflow
    let softplus = if d > 0.0 { d + (-d).exp().ln_1p() } else { d.exp().ln_1p() };
    -p.b + softplus / p.k + premium
}

/// Optimal quote when `sigma = mu = 0`; never below `-b + ln(1 + gamma/k)/gamma`.
pub fn nodrift_novol_quote(p: &ModelParams, t: f64, q: usize) -> Result<f64> {
    require_no_price_risk(p)?;
    p.require_risk_averse()?;
    require_positive_q(q)?;
    let tau = tau_of(p, t)?;
    Ok(no_risk_quote(
        p,
        p.coefficients().eta,
        tau,
        q,
        premium_term(p.gamma, p.k),
    ))
}

/// The `gamma -> 0` limit of the no-price-risk quote: `eta` becomes `A/e` and
/// the premium term becomes `1/k`. `gamma` is ignored.
///
/// The formula is derived with `sigma = 0`, but the same limit holds for any
/// volatility, so only `mu = 0` is enforced.
pub fn risk_neutral_quote(p: &ModelParams, t: f64, q: usize) -> Result<f64> {
    if p.mu != 0.0 {
        return Err(Error::Regime {
            required: "mu = 0",
            got: format!("mu = {}", p.mu),
        });
    }
    require_positive_q(q)?;
    let tau = tau_of(p, t)?;
    let eta = p.big_a * (-1.0f64).exp();
    Ok(no_risk_quote(p, eta, tau, q, 1.0 / p.k))
}

/// `(exp(beta tau) - 1) / beta`, or `tau` on the `mu = 0` branch.
fn growth_factor(p: &ModelParams, tau: f64) -> f64 {
    let beta = p.k * p.mu;
    if beta.abs() < 1e-12 / p.horizon {
        tau
    } else {
        (beta * tau).exp_m1() / beta
    }
}

/// `lim_{b -> inf} w_q(t) = eta^q / q! ((exp(beta (T-t)) - 1) / beta)^q` when `sigma = 0`.
///
/// Returns 0 at `t = T` for `q >= 1`, where the limit loses positivity.
pub fn binf_w(p: &ModelParams, t: f64, q: usize) -> Result<f64> {
    require_no_volatility(p)?;
    let tau = tau_of(p, t)?;
    if q == 0 {
        return Ok(1.0);
    }
    let g = growth_factor(p, tau);
    let eta = p.coefficients().eta;
    Ok((q as f64 * (eta * g).ln() - ln_factorial(q)).exp())
}

/// `lim_{b -> inf} delta(t, q) = ln(A / (1 + gamma/k) / q * (exp(beta (T-t)) - 1) / beta) / k`.
///
/// Unbounded below as `t -> T`; `t = T` is an error.
pub fn binf_quote(p: &ModelParams, t: f64, q: usize) -> Result<f64> {
    require_no_volatility(p)?;
    require_positive_q(q)?;
    let tau = tau_of(p, t)?;
    if tau == 0.0 {
        return Err(Error::Unbounded);
    }
    let g = growth_factor(p, tau);
    Ok((p.big_a / (1.0 + p.gamma / p.k) / q as f64 * g).ln() / p.k)
}

/// Limit trading curve as `b -> inf` with `sigma = 0`:
/// `V(t) = q0 ((1 - exp(-beta (T-t))) / (1 - exp(-beta T)))^(1 + gamma/k)`,
/// or `q0 (1 - t/T)^(1 + gamma/k)` when `mu = 0`. Does not depend on `A`.
pub fn binf_trading_curve(p: &ModelParams, q0: usize, times: &[f64]) -> Result<TradingCurve> {
    require_no_volatility(p)?;
    if q0 == 0 {
        return Err(Error::invalid("q0", "must be >= 1"));
    }
    let exponent = 1.0 + p.gamma / p.k;
    let beta = p.k * p.mu;
    let zero_drift = beta.abs() < 1e-12 / p.horizon;
    let expected_inventory = times
        .iter()
        .map(|&t| {
            let tau = tau_of(p, t)?;
            let ratio = if zero_drift {
                tau / p.horizon
            } else {
                (-beta * tau).exp_m1() / (-beta * p.horizon).exp_m1()
            };
            Ok(q0 as f64 * ratio.powf(exponent))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TradingCurve {
        times: times.to_vec(),
        expected_inventory,
        q0,
    })
}
