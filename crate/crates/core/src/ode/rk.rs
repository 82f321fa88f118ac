use super::{check_steps, terminal_values, WGrid};
use crate::error::{Error, Result};
use crate::model::{DerivedCoefficients, ModelParams};

/// Below this terminal value the solver switches to log-domain stepping.
const UNDERFLOW_GUARD: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RkMode {
    /// Classical four-stage RK4 on the plain values.
    Linear,
    /// The same RK4 propagator applied to `ln w`, with each row combined by a
    /// signed log-sum-exp.
    Log,
}

/// Fixed-step RK4 integration from `T` back to `0`.
///
/// Log-domain stepping is selected automatically when `exp(-k q_max b)`
/// would underflow.
pub fn solve_rk(p: &ModelParams, n_steps: usize) -> Result<WGrid> {
    let mode = if (-p.k * p.q_max as f64 * p.b) < UNDERFLOW_GUARD.ln() {
        RkMode::Log
    } else {
        RkMode::Linear
    };
    solve_rk_with(p, n_steps, mode)
}

pub fn solve_rk_with(p: &ModelParams, n_steps: usize, mode: RkMode) -> Result<WGrid> {
    p.validate()?;
    check_steps("n_steps", n_steps, 1)?;
    match mode {
        RkMode::Linear => solve_linear(p, n_steps),
        RkMode::Log => Ok(solve_log(p, n_steps)?),
    }
}

fn apply(c: &DerivedCoefficients, lambdas: &[f64], w: &[f64], out: &mut [f64]) {
    out[0] = 0.0;
    for q in 1..w.len() {
        out[q] = lambdas[q] * w[q] - c.eta * w[q - 1];
    }
}

fn solve_linear(p: &ModelParams, n_steps: usize) -> Result<WGrid> {
    let q_max = p.q_max;
    let width = q_max + 1;
    let c = p.coefficients();
    let lambdas: Vec<f64> = (0..width).map(|q| c.lambda(q)).collect();
    // integrating backwards in time
    let h = -p.horizon / n_steps as f64;
    let coupling = ln_coupling(p, h);

    let mut values = vec![0.0; (n_steps + 1) * width];
    let mut w = terminal_values(p, q_max);
    values[n_steps * width..].copy_from_slice(&w);

    let mut k1 = vec![0.0; width];
    let mut k2 = vec![0.0; width];
    let mut k3 = vec![0.0; width];
    let mut k4 = vec![0.0; width];
    let mut tmp = vec![0.0; width];
    for n in (0..n_steps).rev() {
        let m = substeps(coupling, q_max, n_steps - n);
        let hs = h / m as f64;
        for _ in 0..m {
            apply(&c, &lambdas, &w, &mut k1);
            for q in 0..width {
                tmp[q] = w[q] + 0.5 * hs * k1[q];
            }
            apply(&c, &lambdas, &tmp, &mut k2);
            for q in 0..width {
                tmp[q] = w[q] + 0.5 * hs * k2[q];
            }
            apply(&c, &lambdas, &tmp, &mut k3);
            for q in 0..width {
                tmp[q] = w[q] + hs * k3[q];
            }
            apply(&c, &lambdas, &tmp, &mut k4);
            for q in 1..width {
                w[q] += hs / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
            }
        }
        for q in 1..width {
            if !(w[q] > 0.0) {
                return Err(Error::SolverFailure {
                    t: n as f64 * p.horizon / n_steps as f64,
                    q,
                });
            }
        }
        values[n * width..(n + 1) * width].copy_from_slice(&w);
    }
    WGrid::from_values(*p, n_steps, q_max, values)
}

/// `ln(eta exp(k b) |h|)`: the per-step coupling once `w_q` is rescaled by
/// its terminal value `exp(-k q b)`.
fn ln_coupling(p: &ModelParams, h: f64) -> f64 {
    p.coefficients().eta.ln() + p.k * p.b + h.abs().ln()
}

/// RK4 substeps for the interval `i` steps back from `T`.
///
/// Near `T` the rescaled solution is a truncated exponential series in
/// `x = eta exp(k b) (T - t)`; RK4 drops its terms of degree 5 and up, which
/// dominate when the coupling per step is large. The relative size of the
/// dropped terms is about `(min(coupling, q / i) / m)^5`, so `m` is chosen to
/// keep that near 1e-12. Far from `T`, or with a small coupling, `m = 1`.
fn substeps(ln_coupling: f64, q_max: usize, i: usize) -> usize {
    let scale = ln_coupling.exp().min(q_max as f64 / i as f64);
    (SUBSTEP_DENSITY * scale).ceil().max(1.0) as usize
}

const SUBSTEP_DENSITY: f64 = 250.0;

/// Row `q` of the RK4 propagator `I + hM + (hM)^2/2 + (hM)^3/6 + (hM)^4/24`.
/// Entry `i` multiplies `w_{q-i}`; the matrix is lower bidiagonal so at most
/// five entries are non-zero.
fn propagator_row(c: &DerivedCoefficients, lambdas: &[f64], h: f64, q: usize) -> [f64; 5] {
    let mut row = [0.0; 5];
    let mut v = [0.0; 5];
    v[0] = 1.0;
    row[0] = 1.0;
    let mut factorial = 1.0;
    for power in 1..=4 {
        factorial *= power as f64;
        // (v hM)_c = h (v_c lambda_c - eta v_{c+1}), offsets measured from q
        let mut next = [0.0; 5];
        for i in 0..5.min(q + 1) {
            let col = q - i;
            let above = if i >= 1 { v[i - 1] } else { 0.0 };
            next[i] = h * (v[i] * lambdas[col] - c.eta * above);
        }
        v = next;
        for i in 0..5 {
            row[i] += v[i] / factorial;
        }
    }
    row
}

/// Log-domain propagation with rows rebuilt whenever the substep count
/// changes (it only falls as the integration moves away from `T`).
struct LogStepper<'a> {
    p: &'a ModelParams,
    c: DerivedCoefficients,
    lambdas: Vec<f64>,
    h: f64,
    coupling: f64,
    m: usize,
    rows: Vec<[f64; 5]>,
    next: Vec<f64>,
}

impl<'a> LogStepper<'a> {
    fn new(p: &'a ModelParams, n_steps: usize) -> Self {
        let width = p.q_max + 1;
        let c = p.coefficients();
        let lambdas = (0..width).map(|q| c.lambda(q)).collect();
        let h = -p.horizon / n_steps as f64;
        Self {
            p,
            c,
            lambdas,
            h,
            coupling: ln_coupling(p, h),
            m: 0,
            rows: Vec::new(),
            next: vec![0.0; width],
        }
    }

    /// Advances `cur` over grid interval `n` (counted from 0 at `t = 0`).
    fn step(&mut self, cur: &mut Vec<f64>, n: usize, n_steps: usize) -> Result<()> {
        let width = cur.len();
        let m = substeps(self.coupling, self.p.q_max, n_steps - n);
        if m != self.m {
            let hs = self.h / m as f64;
            self.rows = (0..width)
                .map(|q| propagator_row(&self.c, &self.lambdas, hs, q))
                .collect();
            self.m = m;
        }
        for _ in 0..m {
            self.next[0] = 0.0;
            for q in 1..width {
                let terms = (0..5.min(q + 1)).map(|i| (self.rows[q][i], cur[q - i]));
                self.next[q] = signed_log_sum(terms).ok_or(Error::SolverFailure {
                    t: n as f64 * self.p.horizon / n_steps as f64,
                    q,
                })?;
            }
            std::mem::swap(cur, &mut self.next);
        }
        Ok(())
    }
}

fn solve_log(p: &ModelParams, n_steps: usize) -> Result<WGrid> {
    let q_max = p.q_max;
    let width = q_max + 1;
    let mut stepper = LogStepper::new(p, n_steps);
    let mut log_w = vec![0.0; (n_steps + 1) * width];
    let mut cur: Vec<f64> = (0..width).map(|q| -p.k * q as f64 * p.b).collect();
    log_w[n_steps * width..].copy_from_slice(&cur);
    for n in (0..n_steps).rev() {
        stepper.step(&mut cur, n, n_steps)?;
        log_w[n * width..(n + 1) * width].copy_from_slice(&cur);
    }
    Ok(WGrid::from_log_values(*p, n_steps, q_max, log_w))
}

/// `ln w_q(0)` for `q = 0..=q_max` by log-domain RK4, keeping only the
/// current row. For stiff single-time evaluations where a full grid would not
/// fit in memory.
pub(crate) fn log_w_at_start(p: &ModelParams, n_steps: usize) -> Result<Vec<f64>> {
    p.validate()?;
    check_steps("n_steps", n_steps, 1)?;
    let mut stepper = LogStepper::new(p, n_steps);
    let mut cur: Vec<f64> = (0..=p.q_max).map(|q| -p.k * q as f64 * p.b).collect();
    for n in (0..n_steps).rev() {
        stepper.step(&mut cur, n, n_steps)?;
    }
    Ok(cur)
}

/// `ln(sum_i c_i exp(x_i))`, or `None` when the sum is not positive.
fn signed_log_sum(terms: impl Iterator<Item = (f64, f64)> + Clone) -> Option<f64> {
    let pivot = terms
        .clone()
        .filter(|(c, _)| *c != 0.0)
        .map(|(c, x)| c.abs().ln() + x)
        .fold(f64::NEG_INFINITY, f64::max);
    if !pivot.is_finite() {
        return None;
    }
    let sum: f64 = terms
        .filter(|(c, _)| *c != 0.0)
        .map(|(c, x)| c.signum() * (c.abs().ln() + x - pivot).exp())
        .sum();
    (sum > 0.0).then(|| pivot + sum.ln())
}
