//! Monte Carlo of the controlled execution process.
//!
//! Time is discretised on `N = ceil(T / dt)` equal steps. In each step the
//! resting ask is hit with probability `1 - exp(-A exp(-k delta) dt)`, at most
//! once; a fill during step `n` is booked at `t_{n+1}` at `S_{n+1} + delta`.
//!
//! Rather than drawing a uniform per step, the kernel draws one `Exp(1)`
//! variable per inventory level and locates the step in which the cumulative
//! hazard crosses it. This has exactly the same law as the per-step
//! Bernoulli scheme and costs `O(q0 log N)` per path. The price is sampled
//! only where it is needed (fill times and `T`); [`simulate_path`] fills in
//! the rest of the grid with Brownian bridges.

mod policy;

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

pub use policy::{
    Action, FixedQuote, MarketOrderFallback, OptimalSurface, PolicyRegistry, PolicySpec, QuotePolicy,
};

use crate::closed_forms::TradingCurve;
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Paths per work unit. Fixed so that reductions do not depend on threads.
const CHUNK: usize = 1024;

/// Mixed into the seed of the stream used for bridge interpolation.
const BRIDGE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub params: ModelParams,
    pub q0: usize,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub policy: Arc<dyn QuotePolicy>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let p = &self.params;
        if self.q0 == 0 {
            return Err(Error::Config("q0 must be at least 1".into()));
        }
        if self.q0 > p.q_max {
            return Err(Error::Config(format!("q0={} exceeds q_max={}", self.q0, p.q_max)));
        }
        if let Some(m) = self.policy.max_inventory() {
            if self.q0 > m {
                return Err(Error::Config(format!(
                    "policy `{}` quotes up to q={m}, below q0={}",
                    self.policy.name(),
                    self.q0
                )));
            }
        }
        if !(self.dt > 0.0) || self.dt > p.horizon / 100.0 {
            return Err(Error::Config(format!(
                "dt={} must lie in (0, T/100] with T={}",
                self.dt, p.horizon
            )));
        }
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.params.horizon / self.dt - 1e-9).ceil() as usize
    }

    pub fn times(&self) -> Vec<f64> {
        grid_times(self.params.horizon, self.n_steps())
    }
}

fn grid_times(horizon: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| if i == n { horizon } else { i as f64 * (horizon / n as f64) })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FillEvent {
    pub time: f64,
    /// Execution price `S + delta`.
    pub price: f64,
    pub premium: f64,
    pub market: bool,
    pub q_after: usize,
}

/// One trajectory on the simulation grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimPath {
    pub times: Vec<f64>,
    pub price: Vec<f64>,
    pub inventory: Vec<usize>,
    pub cash: Vec<f64>,
    pub fills: Vec<FillEvent>,
}

impl SimPath {
    /// Event log with columns `t,price,event`.
    pub fn write_events_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,price,event")?;
        writeln!(out, "{:.16e},{:.16e},start", self.times[0], self.price[0])?;
        for f in &self.fills {
            let kind = if f.market { "market" } else { "fill" };
            writeln!(out, "{:.16e},{:.16e},{kind}", f.time, f.price)?;
        }
        let n = self.times.len() - 1;
        writeln!(out, "{:.16e},{:.16e},end", self.times[n], self.price[n])?;
        Ok(())
    }

    /// Full grid with columns `t,price,inventory,cash`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,price,inventory,cash")?;
        for i in 0..self.times.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{},{:.16e}",
                self.times[i], self.price[i], self.inventory[i], self.cash[i]
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimSummary {
    pub n_paths: usize,
    pub dt: f64,
    pub trading_curve: TradingCurve,
    pub mc_stderr_curve: Vec<f64>,
    /// Terminal mark `X_T + q_T (S_T - b)` relative to `q0 S_0`.
    pub pnl_mean: f64,
    pub pnl_std: f64,
    pub pnl_stderr: f64,
    pub utility_mean: f64,
    pub utility_stderr: f64,
    pub price_change_mean: f64,
    pub price_change_stderr: f64,
    pub mean_fills: f64,
    pub terminal_inventory_hist: BTreeMap<usize, u64>,
}

impl SimSummary {
    /// Trading curve with columns `t,mean_q,stderr`.
    pub fn write_curve_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,mean_q,stderr")?;
        let c = &self.trading_curve;
        for i in 0..c.times.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e}",
                c.times[i], c.expected_inventory[i], self.mc_stderr_curve[i]
            )?;
        }
        Ok(())
    }

    /// Scalar statistics as JSON (the curve is left to the CSV).
    pub fn stats_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n_paths": self.n_paths,
            "dt": self.dt,
            "q0": self.trading_curve.q0,
            "pnl_mean": self.pnl_mean,
            "pnl_std": self.pnl_std,
            "pnl_stderr": self.pnl_stderr,
            "utility_mean": self.utility_mean,
            "utility_stderr": self.utility_stderr,
            "price_change_mean": self.price_change_mean,
            "price_change_stderr": self.price_change_stderr,
            "mean_fills": self.mean_fills,
            "terminal_inventory_hist": self.terminal_inventory_hist,
        })
    }
}

/// Per-inventory hazard schedule.
struct Schedule {
    n_steps: usize,
    /// `cum[q - 1][n]` is the summed finite hazard of steps `0..n`.
    cum: Vec<Vec<f64>>,
    /// Steps where a fill is certain (market orders, overflowing hazards).
    certain: Vec<Vec<usize>>,
    premium: Vec<Vec<f64>>,
    market: Vec<Vec<bool>>,
}

impl Schedule {
    fn build(cfg: &SimConfig) -> Self {
        let p = &cfg.params;
        let n_steps = cfg.n_steps();
        let times = cfg.times();
        let dt = p.horizon / n_steps as f64;
        let mut s = Schedule {
            n_steps,
            cum: Vec::with_capacity(cfg.q0),
            certain: Vec::with_capacity(cfg.q0),
            premium: Vec::with_capacity(cfg.q0),
            market: Vec::with_capacity(cfg.q0),
        };
        for q in 1..=cfg.q0 {
            let mut cum = Vec::with_capacity(n_steps + 1);
            let mut certain = Vec::new();
            let mut premium = Vec::with_capacity(n_steps);
            let mut market = Vec::with_capacity(n_steps);
            let mut acc = 0.0;
            cum.push(acc);
            for (n, &t) in times[..n_steps].iter().enumerate() {
                let (h, d, m) = match cfg.policy.action(t, q) {
                    Action::Market => (f64::INFINITY, 0.0, true),
                    Action::Limit(d) => (p.big_a * (-p.k * d).exp() * dt, d, false),
                };
                // beyond ~700 the survival probability is below f64 resolution
                if h > 700.0 {
                    certain.push(n);
                } else {
                    acc += h;
                }
                cum.push(acc);
                premium.push(d);
                market.push(m);
            }
            s.cum.push(cum);
            s.certain.push(certain);
            s.premium.push(premium);
            s.market.push(market);
        }
        s
    }

    /// Step in which the next fill happens, starting the search at `from`
    /// with exponential budget `e`.
    fn next_fill(&self, q: usize, from: usize, e: f64) -> Option<usize> {
        let cum = &self.cum[q - 1];
        let certain = &self.certain[q - 1];
        let stop = certain
            .get(certain.partition_point(|&c| c < from))
            .copied()
            .unwrap_or(self.n_steps);
        let level = cum[from] + e;
        // smallest m >= from with cum[m + 1] >= level
        let m = from + cum[from + 1..=stop].partition_point(|&h| h < level);
        if m < stop {
            Some(m)
        } else if stop < self.n_steps {
            Some(stop)
        } else {
            None
        }
    }
}

/// Raw outcome of one path: fill steps and prices, terminal state.
struct Outcome {
    /// `(step, price at t_{step+1})` per fill, in order.
    fills: Vec<(usize, f64)>,
    cash: f64,
    q_end: usize,
    s_end: f64,
}

fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn run_path(cfg: &SimConfig, sched: &Schedule, times: &[f64], index: u64) -> Outcome {
    let p = &cfg.params;
    let mut rng = path_rng(cfg.seed, index);
    let advance = |s: f64, from: f64, to: f64, rng: &mut ChaCha8Rng| {
        let z: f64 = rng.sample(StandardNormal);
        let dt = to - from;
        s + p.mu * dt + p.sigma * dt.sqrt() * z
    };

    let mut q = cfg.q0;
    let mut n = 0;
    let mut s = 0.0;
    let mut t_s = 0.0;
    let mut cash = 0.0;
    let mut fills = Vec::with_capacity(cfg.q0);
    while q > 0 && n < sched.n_steps {
        let e: f64 = rng.sample(Exp1);
        let Some(m) = sched.next_fill(q, n, e) else {
            break;
        };
        let t = times[m + 1];
        s = advance(s, t_s, t, &mut rng);
        t_s = t;
        cash += s + sched.premium[q - 1][m];
        fills.push((m, s));
        q -= 1;
        n = m + 1;
    }
    let s_end = advance(s, t_s, p.horizon, &mut rng);
    Outcome {
        fills,
        cash,
        q_end: q,
        s_end,
    }
}

/// Simulates path number `path_index` of the ensemble defined by `cfg`.
pub fn simulate_path(cfg: &SimConfig, path_index: u64) -> Result<SimPath> {
    cfg.validate()?;
    let sched = Schedule::build(cfg);
    let times = cfg.times();
    let out = run_path(cfg, &sched, &times, path_index);
    let p = &cfg.params;

    let mut fills = Vec::with_capacity(out.fills.len());
    let mut anchors = vec![(0usize, 0.0)];
    for (i, &(m, s)) in out.fills.iter().enumerate() {
        let q = cfg.q0 - i;
        let premium = sched.premium[q - 1][m];
        fills.push(FillEvent {
            time: times[m + 1],
            price: s + premium,
            premium,
            market: sched.market[q - 1][m],
            q_after: q - 1,
        });
        anchors.push((m + 1, s));
    }
    if anchors.last().map(|a| a.0) != Some(sched.n_steps) {
        anchors.push((sched.n_steps, out.s_end));
    }

    let mut bridge = path_rng(cfg.seed ^ BRIDGE_SALT, path_index);
    let mut price = vec![0.0; times.len()];
    for w in anchors.windows(2) {
        let ((a, sa), (b, sb)) = (w[0], w[1]);
        price[a] = sa;
        let mut s = sa;
        for i in a + 1..b {
            let (t0, t, t1) = (times[i - 1], times[i], times[b]);
            let z: f64 = bridge.sample(StandardNormal);
            let frac = (t - t0) / (t1 - t0);
            s += (sb - s) * frac + p.sigma * ((t - t0) * (t1 - t) / (t1 - t0)).sqrt() * z;
            price[i] = s;
        }
        price[b] = sb;
    }

    let mut inventory = vec![cfg.q0; times.len()];
    let mut cash = vec![0.0; times.len()];
    let mut q = cfg.q0;
    let mut x = 0.0;
    let mut next = fills.iter().peekable();
    for i in 0..times.len() {
        while let Some(f) = next.peek() {
            if f.time <= times[i] {
                q -= 1;
                x += f.price;
                next.next();
            } else {
                break;
            }
        }
        inventory[i] = q;
        cash[i] = x;
    }

    Ok(SimPath {
        times,
        price,
        inventory,
        cash,
        fills,
    })
}

/// Count, mean and centred sum of squares, mergeable across chunks.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0.0 {
            return o;
        }
        if o.n == 0.0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n / n,
            m2: self.m2 + o.m2 + d * d * self.n * o.n / n,
        }
    }

    fn std(&self) -> f64 {
        if self.n > 1.0 {
            (self.m2 / (self.n - 1.0)).sqrt()
        } else {
            0.0
        }
    }

    fn stderr(&self) -> f64 {
        if self.n > 0.0 {
            self.std() / self.n.sqrt()
        } else {
            0.0
        }
    }
}

struct Partial {
    /// Changes of `sum q` and `sum q^2` at each grid index; integers, so the
    /// totals are exact whatever the order of accumulation.
    dq: Vec<i64>,
    dq2: Vec<i64>,
    pnl: Moments,
    utility: Moments,
    price_change: Moments,
    fills: u64,
    hist: BTreeMap<usize, u64>,
}

fn run_chunk(cfg: &SimConfig, sched: &Schedule, times: &[f64], chunk: usize) -> Partial {
    let p = &cfg.params;
    let lo = chunk * CHUNK;
    let hi = (lo + CHUNK).min(cfg.n_paths);
    let mut part = Partial {
        dq: vec![0; times.len()],
        dq2: vec![0; times.len()],
        pnl: Moments::default(),
        utility: Moments::default(),
        price_change: Moments::default(),
        fills: 0,
        hist: BTreeMap::new(),
    };
    for i in lo..hi {
        let out = run_path(cfg, sched, times, i as u64);
        for (j, &(m, _)) in out.fills.iter().enumerate() {
            let q = (cfg.q0 - j) as i64;
            part.dq[m + 1] -= 1;
            part.dq2[m + 1] -= 2 * q - 1;
        }
        let pnl = out.cash + out.q_end as f64 * (out.s_end - p.b);
        part.pnl.push(pnl);
        part.utility.push(-(-p.gamma * pnl).exp());
        part.price_change.push(out.s_end);
        part.fills += out.fills.len() as u64;
        *part.hist.entry(out.q_end).or_default() += 1;
    }
    part
}

/// Runs `n_paths` independent paths and aggregates them. Path `i` always
/// uses stream `i` of the seeded generator, so the result does not depend on
/// the number of worker threads.
pub fn simulate_ensemble(cfg: &SimConfig) -> Result<SimSummary> {
    cfg.validate()?;
    let sched = Schedule::build(cfg);
    let times = cfg.times();
    let n_chunks = cfg.n_paths.div_ceil(CHUNK);
    let parts: Vec<Partial> = (0..n_chunks)
        .into_par_iter()
        .map(|c| run_chunk(cfg, &sched, &times, c))
        .collect();

    let len = times.len();
    let mut dq = vec![0i64; len];
    let mut dq2 = vec![0i64; len];
    let mut pnl = Moments::default();
    let mut utility = Moments::default();
    let mut price_change = Moments::default();
    let mut fills = 0u64;
    let mut hist = BTreeMap::new();
    for part in parts {
        for i in 0..len {
            dq[i] += part.dq[i];
            dq2[i] += part.dq2[i];
        }
        pnl = pnl.merge(part.pnl);
        utility = utility.merge(part.utility);
        price_change = price_change.merge(part.price_change);
        fills += part.fills;
        for (k, v) in part.hist {
            *hist.entry(k).or_default() += v;
        }
    }

    let n = cfg.n_paths as f64;
    let q0 = cfg.q0 as i64;
    let mut sum_q = q0 * cfg.n_paths as i64;
    let mut sum_q2 = q0 * q0 * cfg.n_paths as i64;
    let mut mean = Vec::with_capacity(len);
    let mut stderr = Vec::with_capacity(len);
    for i in 0..len {
        sum_q += dq[i];
        sum_q2 += dq2[i];
        let m = sum_q as f64 / n;
        mean.push(m);
        let var = if cfg.n_paths > 1 {
            ((sum_q2 as f64 - sum_q as f64 * m) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        stderr.push((var / n).sqrt());
    }

    Ok(SimSummary {
        n_paths: cfg.n_paths,
        dt: cfg.params.horizon / cfg.n_steps() as f64,
        trading_curve: TradingCurve {
            times,
            expected_inventory: mean,
            q0: cfg.q0,
        },
        mc_stderr_curve: stderr,
        pnl_mean: pnl.mean,
        pnl_std: pnl.std(),
        pnl_stderr: pnl.stderr(),
        utility_mean: utility.mean,
        utility_stderr: utility.stderr(),
        price_change_mean: price_change.mean,
        price_change_stderr: price_change.stderr(),
        mean_fills: fills as f64 / n,
        terminal_inventory_hist: hist,
    })
}
