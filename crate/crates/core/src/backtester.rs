//! Replay of the discrete quoting protocol on a trade tape.
//!
//! At each re-quote the strategy recalibrates `(A, k)` for the current spread
//! bucket and `sigma` on a trailing window, solves for the optimal premium
//! over the remaining horizon, rounds it to a whole number of ticks and rests
//! an ask at `reference + premium`. The order is neither modified nor
//! cancelled for `delta_t` seconds. It is filled in full by the first later
//! print at or above its price; otherwise it expires and a new one is sent.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{calibrate_gamma_at, fit_intensity, sigma_between, spread_bucket, TradeTape};
use crate::model::ModelParams;
use crate::ode::start_quote;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    NearestTick,
    /// Floor or ceiling with probabilities given by proximity.
    Randomized { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaRule {
    Fixed(f64),
    /// Pick `gamma` once, at the first quote, so that this quote (for the
    /// full inventory `q0` over the full horizon) equals this many ticks.
    QuoteTarget(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    Mid,
    BestBid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    /// Order lifetime, seconds.
    pub delta_t: f64,
    /// Units to sell (in ATS bunches).
    pub q0: usize,
    pub horizon: f64,
    pub rounding: Rounding,
    /// Trailing calibration window, seconds.
    pub recalib_window: f64,
    pub gamma_rule: GammaRule,
    /// Sell at the best bid whenever the raw quote is below this.
    pub market_order_fallback: Option<f64>,
    pub liquidation_cost_b: f64,
    pub reference: Reference,
    /// Session time of the first quote. Defaults to one calibration window
    /// after the start of the tape.
    pub start: Option<f64>,
    pub sampling_dt: f64,
    pub distance_grid: Vec<f64>,
    pub n_min: usize,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            delta_t: 30.0,
            q0: 3,
            horizon: 3600.0,
            rounding: Rounding::NearestTick,
            recalib_window: 1800.0,
            gamma_rule: GammaRule::QuoteTarget(1.0),
            market_order_fallback: None,
            liquidation_cost_b: 3.0,
            reference: Reference::Mid,
            start: None,
            sampling_dt: 1.0,
            distance_grid: (0..=8).map(f64::from).collect(),
            n_min: 50,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("backtest: {what}")));
        if !(self.delta_t > 0.0) || !self.delta_t.is_finite() {
            return bad("delta_t must be > 0");
        }
        if self.q0 == 0 {
            return bad("q0 must be >= 1");
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return bad("horizon must be > 0");
        }
        if !(self.recalib_window > 0.0) {
            return bad("recalib_window must be > 0");
        }
        if !(self.liquidation_cost_b >= 0.0) {
            return bad("liquidation_cost_b must be >= 0");
        }
        if let GammaRule::Fixed(g) = self.gamma_rule {
            if !(g > 0.0) {
                return bad("fixed gamma must be > 0");
            }
        }
        Ok(())
    }
}

/// One resting order, with the inputs that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderRecord {
    pub t_insert: f64,
    /// Fill or expiry time.
    pub t_end: f64,
    pub quote_raw: f64,
    pub quote_ticks: i64,
    pub price: f64,
    pub mid: f64,
    pub q_before: usize,
    pub filled: bool,
    pub market: bool,
    pub elapsed: f64,
    pub remaining: f64,
    pub bucket: i64,
    pub big_a: f64,
    pub k: f64,
    pub sigma: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FillRecord {
    pub t: f64,
    pub price: f64,
    pub q_after: usize,
    /// Index into the order list.
    pub order: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub t: f64,
    pub mid: f64,
    pub inventory: usize,
    pub cash: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestLedger {
    pub q0: usize,
    pub start: f64,
    pub end: f64,
    pub arrival_mid: f64,
    pub b: f64,
    pub orders: Vec<OrderRecord>,
    pub fills: Vec<FillRecord>,
    pub series: Vec<SeriesPoint>,
    pub final_cash: f64,
    pub final_q: usize,
    pub final_mid: f64,
    /// `final_cash + final_q (final_mid - b)`.
    pub mark: f64,
}

impl BacktestLedger {
    pub fn write_orders_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,quote,q")?;
        for o in &self.orders {
            writeln!(out, "{:.16e},{},{}", o.t_insert, o.quote_ticks, o.q_before)?;
        }
        Ok(())
    }

    pub fn write_fills_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,price,q_after")?;
        for f in &self.fills {
            writeln!(out, "{:.16e},{:.16e},{}", f.t, f.price, f.q_after)?;
        }
        Ok(())
    }

    pub fn write_series_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,mid,inventory,cash")?;
        for s in &self.series {
            writeln!(out, "{:.16e},{:.16e},{},{:.16e}", s.t, s.mid, s.inventory, s.cash)?;
        }
        Ok(())
    }
}

/// Rounds a premium to whole ticks. `NearestTick` breaks ties away from
/// zero; `Randomized` draws from `rng`.
pub fn round_quote<R: Rng>(raw: f64, mode: Rounding, rng: &mut R) -> i64 {
    match mode {
        Rounding::NearestTick => raw.round() as i64,
        Rounding::Randomized { .. } => {
            let lo = raw.floor();
            if lo == raw {
                return lo as i64;
            }
            // floor with probability ceil - raw
            if rng.gen::<f64>() < lo + 1.0 - raw {
                lo as i64
            } else {
                lo as i64 + 1
            }
        }
    }
}

pub fn run_backtest(tape: &TradeTape, cfg: &BacktestConfig) -> Result<BacktestLedger> {
    cfg.validate()?;
    let recs = tape.records();
    let start = cfg.start.unwrap_or(tape.start() + cfg.recalib_window);
    if start < tape.start() || start >= tape.end() {
        return Err(Error::Calibration(format!(
            "start {start} s outside the tape [{}, {}) s",
            tape.start(),
            tape.end()
        )));
    }
    let end = start + cfg.horizon;
    let mid_at = |t: f64| recs[tape.index_at_or_before(t).unwrap_or(0)].mid();
    let seed = match cfg.rounding {
        Rounding::Randomized { seed } => seed,
        Rounding::NearestTick => 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut ledger = BacktestLedger {
        q0: cfg.q0,
        start,
        end,
        arrival_mid: mid_at(start),
        b: cfg.liquidation_cost_b,
        orders: Vec::new(),
        fills: Vec::new(),
        series: Vec::new(),
        final_cash: 0.0,
        final_q: cfg.q0,
        final_mid: 0.0,
        mark: 0.0,
    };
    let mut gamma_cache = match cfg.gamma_rule {
        GammaRule::Fixed(g) => Some(g),
        GammaRule::QuoteTarget(_) => None,
    };
    let mut t = start;
    let mut q = cfg.q0;
    let mut cash = 0.0;
    ledger.series.push(SeriesPoint {
        t,
        mid: mid_at(t),
        inventory: q,
        cash,
    });

    while q > 0 && t < end && t < tape.end() {
        let rec = recs[tape.index_at_or_before(t).expect("t >= tape start")];
        let mid = rec.mid();
        let w0 = (t - cfg.recalib_window).max(tape.start());
        let fit = fit_intensity(tape, w0, t, &cfg.distance_grid, cfg.n_min)?;
        let (bucket, bf) = fit.nearest(spread_bucket(&rec)).ok_or_else(|| {
            Error::Calibration(format!(
                "no usable spread bucket in [{w0}, {t}): {:?}",
                fit.unusable
            ))
        })?;
        let sigma = sigma_between(tape, w0, t, cfg.sampling_dt)?;
        let gamma = match (gamma_cache, cfg.gamma_rule) {
            (Some(g), _) => g,
            (None, GammaRule::QuoteTarget(target)) => {
                // the first order of the run, for the whole inventory, is the one pinned
                let g = calibrate_gamma_at(
                    bf.a_hat,
                    bf.k_hat,
                    sigma,
                    0.0,
                    cfg.liquidation_cost_b,
                    cfg.horizon,
                    cfg.q0,
                    target,
                )?;
                gamma_cache = Some(g);
                g
            }
            (None, GammaRule::Fixed(g)) => g,
        };
        let remaining = end - t;
        let params = ModelParams {
            mu: 0.0,
            sigma,
            big_a: bf.a_hat,
            k: bf.k_hat,
            gamma,
            b: cfg.liquidation_cost_b,
            horizon: remaining,
            q_max: q,
        };
        let raw = start_quote(&params)?;
        let mut order = OrderRecord {
            t_insert: t,
            t_end: t,
            quote_raw: raw,
            quote_ticks: 0,
            price: 0.0,
            mid,
            q_before: q,
            filled: false,
            market: false,
            elapsed: t - start,
            remaining,
            bucket,
            big_a: bf.a_hat,
            k: bf.k_hat,
            sigma,
            gamma,
        };

        if cfg.market_order_fallback.is_some_and(|th| raw < th) {
            order.market = true;
            order.filled = true;
            order.price = rec.bid;
            order.quote_ticks = (rec.bid - mid).round() as i64;
        } else {
            order.quote_ticks = round_quote(raw, cfg.rounding, &mut rng);
            let reference = match cfg.reference {
                Reference::Mid => mid,
                Reference::BestBid => rec.bid,
            };
            order.price = reference + order.quote_ticks as f64;
            let expiry = (t + cfg.delta_t).min(end);
            let from = recs.partition_point(|r| r.ts <= t);
            let hit = recs[from..]
                .iter()
                .take_while(|r| r.ts <= expiry)
                .find(|r| r.price >= order.price);
            match hit {
                Some(r) => {
                    order.filled = true;
                    order.t_end = r.ts;
                }
                None => order.t_end = expiry,
            }
        }

        let idx = ledger.orders.len();
        ledger.orders.push(order);
        t = order.t_end;
        if order.filled {
            q -= 1;
            cash += order.price;
            ledger.fills.push(FillRecord {
                t,
                price: order.price,
                q_after: q,
                order: idx,
            });
        }
        ledger.series.push(SeriesPoint {
            t,
            mid: mid_at(t),
            inventory: q,
            cash,
        });
    }

    ledger.final_cash = cash;
    ledger.final_q = q;
    ledger.final_mid = mid_at(end.min(tape.end()));
    ledger.mark = cash + q as f64 * (ledger.final_mid - ledger.b);
    Ok(ledger)
}

/// Breaches of the protocol found by [`audit`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a ledger against the tape it was produced from: order lifetimes,
/// the fill rule, inventory and cash conservation.
pub fn audit(ledger: &BacktestLedger, tape: &TradeTape, cfg: &BacktestConfig) -> AuditReport {
    let mut v = Vec::new();
    let recs = tape.records();
    let eps = 1e-9;

    if ledger.q0 != ledger.fills.len() + ledger.final_q {
        v.push(format!(
            "inventory: q0={} but {} fills and {} left",
            ledger.q0,
            ledger.fills.len(),
            ledger.final_q
        ));
    }
    let cash: f64 = ledger.fills.iter().map(|f| f.price).sum();
    if (cash - ledger.final_cash).abs() > eps * (1.0 + cash.abs()) {
        v.push(format!("cash {} != sum of fill prices {cash}", ledger.final_cash));
    }

    let mut q = ledger.q0;
    let mut prev_end = ledger.start;
    let mut fills = ledger.fills.iter().peekable();
    for (i, o) in ledger.orders.iter().enumerate() {
        if o.t_insert != prev_end {
            v.push(format!("order {i}: inserted at {} but previous order ended at {prev_end}", o.t_insert));
        }
        if o.q_before != q {
            v.push(format!("order {i}: q_before={} but inventory is {q}", o.q_before));
        }
        if (o.elapsed - (o.t_insert - ledger.start)).abs() > eps || (o.remaining - (ledger.end - o.t_insert)).abs() > eps {
            v.push(format!("order {i}: solver horizon does not match elapsed time"));
        }
        prev_end = o.t_end;
        if o.market {
            if cfg.market_order_fallback.is_none() {
                v.push(format!("order {i}: market order without fallback"));
            }
        } else {
            if o.t_end - o.t_insert > cfg.delta_t + eps {
                v.push(format!("order {i}: lived {} s > delta_t", o.t_end - o.t_insert));
            }
            if o.price < o.mid + o.quote_ticks as f64 - eps && cfg.reference == Reference::Mid {
                v.push(format!("order {i}: price below mid + quote"));
            }
            let lo = recs.partition_point(|r| r.ts <= o.t_insert);
            let first = recs[lo..]
                .iter()
                .take_while(|r| r.ts <= o.t_end)
                .find(|r| r.price >= o.price);
            match (o.filled, first) {
                (true, Some(r)) if r.ts == o.t_end => {}
                (true, _) => v.push(format!("order {i}: filled at {} without a qualifying print", o.t_end)),
                (false, Some(r)) => v.push(format!("order {i}: print at {} should have filled it", r.ts)),
                (false, None) => {
                    if o.t_end < (o.t_insert + cfg.delta_t).min(ledger.end) - eps {
                        v.push(format!("order {i}: expired early at {}", o.t_end));
                    }
                }
            }
        }
        if o.filled {
            q -= 1;
            match fills.next() {
                Some(f) if f.order == i && f.t == o.t_end && f.price == o.price && f.q_after == q => {}
                other => v.push(format!("order {i}: fill record mismatch {other:?}")),
            }
        }
    }
    if fills.next().is_some() {
        v.push("fills without a matching order".into());
    }
    AuditReport { violations: v }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestSummary {
    pub n_orders: usize,
    pub n_fills: usize,
    /// Mean of `fill price - arrival mid`; absent without fills.
    pub avg_fill_premium: Option<f64>,
    pub completed: bool,
    /// Seconds from start to the last unit sold.
    pub completion_time: Option<f64>,
    pub terminal_mark: f64,
    /// `q0 * arrival mid`: selling everything at once, without cost.
    pub benchmark: f64,
    pub slippage_vs_benchmark: f64,
}

pub fn summarize(ledger: &BacktestLedger) -> BacktestSummary {
    let n = ledger.fills.len();
    let avg_fill_premium = (n > 0)
        .then(|| ledger.fills.iter().map(|f| f.price - ledger.arrival_mid).sum::<f64>() / n as f64);
    let completed = ledger.final_q == 0;
    let benchmark = ledger.q0 as f64 * ledger.arrival_mid;
    BacktestSummary {
        n_orders: ledger.orders.len(),
        n_fills: n,
        avg_fill_premium,
        completed,
        completion_time: completed.then(|| ledger.fills.last().map_or(0.0, |f| f.t - ledger.start)),
        terminal_mark: ledger.mark,
        benchmark,
        slippage_vs_benchmark: ledger.mark - benchmark,
    }
}
