//! Backward solution of the triangular linear system
//! `w'_q = (alpha q^2 - beta q) w_q - eta w_{q-1}`, `w_q(T) = exp(-k q b)`, `w_0 = 1`.
//!
//! Three independent solvers are provided and cross-checked in tests:
//! fixed-step RK4 ([`solve_rk`]), eigen-decomposition ([`solve_spectral`]) and
//! integrating-factor quadrature ([`solve_quadrature`]). They are also
//! available by name through [`SolverRegistry`].

mod quadrature;
mod registry;
mod rk;
mod spectral;

use serde::{Serialize, Serializer};

pub use quadrature::solve_quadrature;
pub use registry::{QuadratureSolver, RungeKuttaSolver, SolverRegistry, SpectralSolver, WSolver};
pub use rk::{solve_rk, solve_rk_with, RkMode};
pub use spectral::{solve_spectral, SpectralDecomposition};

use crate::error::{Error, Result};
use crate::model::{quote_from_log_ratio, quote_from_w, ModelParams, QuoteSurface};

/// Default number of RK steps for horizons up to two hours.
pub const DEFAULT_STEPS: usize = 10_000;

/// Solution `w_q(t_n)` on a uniform grid `t_n = n T / N`.
///
/// Values are held as logarithms so that grids with extreme liquidation
/// costs (terminal values below the smallest `f64`) stay representable.
#[derive(Debug, Clone, PartialEq)]
pub struct WGrid {
    params: ModelParams,
    n_steps: usize,
    q_max: usize,
    /// Row-major by time index, `q_max + 1` entries per row.
    log_w: Vec<f64>,
}

impl WGrid {
    /// Builds a grid from plain values, rejecting any non-positive entry.
    pub(crate) fn from_values(
        params: ModelParams,
        n_steps: usize,
        q_max: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let width = q_max + 1;
        debug_assert_eq!(values.len(), (n_steps + 1) * width);
        let step = params.horizon / n_steps as f64;
        let log_w = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v > 0.0 && v.is_finite() {
                    Ok(v.ln())
                } else {
                    Err(Error::SolverFailure {
                        t: (i / width) as f64 * step,
                        q: i % width,
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            params,
            n_steps,
            q_max,
            log_w,
        })
    }

    pub(crate) fn from_log_values(
        params: ModelParams,
        n_steps: usize,
        q_max: usize,
        log_w: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(log_w.len(), (n_steps + 1) * (q_max + 1));
        Self {
            params,
            n_steps,
            q_max,
            log_w,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn q_max(&self) -> usize {
        self.q_max
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn step(&self) -> f64 {
        self.params.horizon / self.n_steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.n_steps {
            self.params.horizon
        } else {
            n as f64 * self.step()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|n| self.time(n)).collect()
    }

    pub fn value(&self, n: usize, q: usize) -> f64 {
        self.log_value(n, q).exp()
    }

    pub fn log_value(&self, n: usize, q: usize) -> f64 {
        self.log_w[n * (self.q_max + 1) + q]
    }

    /// Index of the grid time nearest `t`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let horizon = self.params.horizon;
        let slack = 1e-9 * horizon;
        if !(t >= -slack && t <= horizon + slack) {
            return Err(Error::OutOfRange {
                t,
                lo: 0.0,
                hi: horizon,
            });
        }
        Ok(((t / self.step()).round() as usize).min(self.n_steps))
    }

    /// Largest relative difference `|a - b| / b` over the shared grid points.
    pub fn max_relative_diff(&self, other: &WGrid) -> f64 {
        assert_eq!(self.n_steps, other.n_steps, "grids differ in length");
        let q_max = self.q_max.min(other.q_max);
        let mut worst = 0.0f64;
        for n in 0..=self.n_steps {
            for q in 0..=q_max {
                let rel = (self.log_value(n, q) - other.log_value(n, q)).exp_m1().abs();
                worst = worst.max(rel);
            }
        }
        worst
    }
}

impl Serialize for WGrid {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            params: &'a ModelParams,
            times: Vec<f64>,
            values: Vec<Vec<f64>>,
        }
        let values = (0..=self.n_steps)
            .map(|n| (0..=self.q_max).map(|q| self.value(n, q)).collect())
            .collect();
        Repr {
            params: &self.params,
            times: self.times(),
            values,
        }
        .serialize(s)
    }
}

/// Applies the optimal-quote formula to every grid point, `q = 1..=q_max`.
pub fn quote_surface(w: &WGrid) -> Result<QuoteSurface> {
    let p = w.params();
    p.require_risk_averse()?;
    let mut quotes = Vec::with_capacity((w.n_steps() + 1) * w.q_max());
    for n in 0..=w.n_steps() {
        for q in 1..=w.q_max() {
            quotes.push(quote_from_log_ratio(
                w.log_value(n, q) - w.log_value(n, q - 1),
                p,
            )?);
        }
    }
    Ok(QuoteSurface::new(w.times(), w.q_max(), quotes))
}

/// Modal cancellation beyond which the spectral start quote is not trusted:
/// about 1e-10 relative error in `w`.
const SPECTRAL_MAX_CONDITION: f64 = 1e6;

/// Optimal premium `delta*(0, q_max)` at the start of the horizon.
///
/// The spectral form is exact at a single time and cheap for small
/// inventories; stiff or degenerate cases go to a log-domain Runge-Kutta
/// pass with a step count scaled to the fastest rate.
pub fn start_quote(p: &ModelParams) -> Result<f64> {
    let q = p.q_max;
    if q == 0 {
        return Err(Error::Domain("quotes are defined for q >= 1".into()));
    }
    p.require_risk_averse()?;
    if let Ok(s) = SpectralDecomposition::new(p, q) {
        let w = s.evaluate_at(0.0);
        let cond = s.condition_at(0.0);
        let usable = |i: usize| w[i].is_finite() && w[i] > f64::MIN_POSITIVE && cond[i] < SPECTRAL_MAX_CONDITION;
        if usable(q) && usable(q - 1) {
            return quote_from_w(w[q], w[q - 1], p);
        }
    }
    let c = p.coefficients();
    let fastest = (1..=q).map(|i| c.lambda(i).abs()).fold(0.0, f64::max);
    // stability of the stiff modes, and accuracy of the eta coupling
    let n = 1000usize.max(((2.0 * fastest + 20.0 * c.eta) * p.horizon).ceil() as usize);
    let log_w = rk::log_w_at_start(p, n)?;
    quote_from_log_ratio(log_w[q] - log_w[q - 1], p)
}

/// Terminal vector `exp(-k q b)` for `q = 0..=q_max`.
pub(crate) fn terminal_values(p: &ModelParams, q_max: usize) -> Vec<f64> {
    (0..=q_max).map(|q| (-p.k * q as f64 * p.b).exp()).collect()
}

pub(crate) fn check_steps(name: &'static str, n: usize, min: usize) -> Result<()> {
    if n < min {
        Err(Error::invalid(name, format!("must be >= {min}, got {n}")))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_start_quote_matches_rk() {
        let p = ModelParams {
            gamma: 0.5,
            horizon: 1800.0,
            q_max: 12,
            ..ModelParams::reference()
        };
        let fast = start_quote(&p).unwrap();
        let slow = quote_surface(&solve_rk(&p, 200_000).unwrap()).unwrap().quote(0, 12);
        assert!((fast - slow).abs() < 1e-7, "{fast} vs {slow}");
        let short = ModelParams { horizon: 5.0, ..p };
        let slow = quote_surface(&solve_rk(&short, 20_000).unwrap()).unwrap().quote(0, 12);
        assert!((start_quote(&short).unwrap() - slow).abs() < 1e-7);
    }

    #[test]
    fn degenerate_start_quote_falls_back_to_rk() {
        // lambda_1 = lambda_2 when k mu = 3 gamma sigma^2 / 2
        let base = ModelParams::reference();
        let p = ModelParams {
            mu: 1.5 * base.gamma * base.sigma.powi(2) / base.k,
            ..base
        };
        assert!(matches!(solve_spectral(&p), Err(Error::Degenerate { .. })));
        let got = start_quote(&p).unwrap();
        let want = quote_surface(&solve_rk(&p, 100_000).unwrap()).unwrap().quote(0, 6);
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}
