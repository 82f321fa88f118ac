use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{TradeRecord, TradeTape};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::ode::start_quote;

/// Bracket for the risk-aversion search.
const GAMMA_LO: f64 = 1e-6;
const GAMMA_HI: f64 = 1e2;
const GAMMA_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    /// Mid sampling interval for the volatility estimate, seconds.
    pub sampling_dt: f64,
    /// Premia over the mid at which arrival rates are measured, ticks.
    pub distance_grid: Vec<f64>,
    /// Trailing window in seconds; `None` uses the whole tape.
    pub window: Option<f64>,
    /// Buckets with fewer trades are not fitted.
    pub n_min: usize,
    /// Quote at `(t, q) = (0, 1)` that fixes `gamma`, ticks.
    pub target_quote: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            sampling_dt: 1.0,
            distance_grid: (0..=8).map(f64::from).collect(),
            window: None,
            n_min: 50,
            target_quote: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BucketFit {
    pub a_hat: f64,
    pub k_hat: f64,
    pub n_obs: usize,
    /// Seconds spent with the spread in this bucket.
    pub exposure: f64,
}

/// Outcome of the intensity regression, split by spread bucket (integer
/// ticks).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntensityFit {
    pub buckets: BTreeMap<i64, BucketFit>,
    /// Buckets that could not be fitted, with the reason.
    pub unusable: BTreeMap<i64, String>,
}

impl IntensityFit {
    /// Fit for `bucket`, or for the nearest usable bucket (ties go to the
    /// narrower spread).
    pub fn nearest(&self, bucket: i64) -> Option<(i64, &BucketFit)> {
        self.buckets
            .iter()
            .min_by_key(|(b, _)| ((*b - bucket).abs(), **b))
            .map(|(b, f)| (*b, f))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub sigma_hat: f64,
    pub buckets: BTreeMap<i64, BucketFit>,
    pub unusable: BTreeMap<i64, String>,
    /// Bucket whose `(A, k)` fixed `gamma_hat`: the one with most trades.
    pub reference_bucket: i64,
    pub gamma_hat: f64,
}

pub fn spread_bucket(r: &TradeRecord) -> i64 {
    r.spread().round() as i64
}

fn mid_at(records: &[TradeRecord], t: f64) -> f64 {
    let i = records.partition_point(|r| r.ts <= t);
    records[i.saturating_sub(1)].mid()
}

/// Realised volatility of the previous-tick mid sampled every `sampling_dt`
/// over `[t0, t1]`, in ticks per root second.
pub fn sigma_between(tape: &TradeTape, t0: f64, t1: f64, sampling_dt: f64) -> Result<f64> {
    if !(sampling_dt > 0.0) {
        return Err(Error::Config(format!("sampling_dt {sampling_dt} must be > 0")));
    }
    let span = t1 - t0;
    if !(span >= 100.0 * sampling_dt) {
        return Err(Error::Calibration(format!(
            "span {span} s is shorter than 100 sampling intervals of {sampling_dt} s"
        )));
    }
    let n = (span / sampling_dt).floor() as usize;
    let records = tape.records();
    let mut prev = mid_at(records, t0);
    let mut sum_sq = 0.0;
    for i in 1..=n {
        let m = mid_at(records, t0 + i as f64 * sampling_dt);
        sum_sq += (m - prev) * (m - prev);
        prev = m;
    }
    Ok((sum_sq / (n as f64 * sampling_dt)).sqrt())
}

pub fn calibrate_sigma(tape: &TradeTape, sampling_dt: f64) -> Result<f64> {
    sigma_between(tape, tape.start(), tape.end(), sampling_dt)
}

/// Arrival-rate regression on records with `t0 <= ts < t1`.
///
/// The spread state between records is that of the latest record, so time
/// in each bucket is measured from inter-record intervals. For each offset
/// `d` of the grid the rate of prints with `price - mid >= d` is
/// regressed as `ln rate = ln A - k d`, dropping empty offsets.
pub fn fit_intensity(tape: &TradeTape, t0: f64, t1: f64, grid: &[f64], n_min: usize) -> Result<IntensityFit> {
    if grid.len() < 3 {
        return Err(Error::Config(format!(
            "distance grid needs at least 3 offsets, got {}",
            grid.len()
        )));
    }
    let recs = tape.records();
    let lo = recs.partition_point(|r| r.ts < t0);
    let hi = recs.partition_point(|r| r.ts < t1);

    struct Acc {
        exposure: f64,
        n_obs: usize,
        counts: Vec<u64>,
    }
    let mut acc: BTreeMap<i64, Acc> = BTreeMap::new();
    fn entry<'a>(acc: &'a mut BTreeMap<i64, Acc>, b: i64, width: usize) -> &'a mut Acc {
        acc.entry(b).or_insert_with(|| Acc {
            exposure: 0.0,
            n_obs: 0,
            counts: vec![0; width],
        })
    }
    let mut state = lo.checked_sub(1).map(|i| (t0, spread_bucket(&recs[i])));
    for r in &recs[lo..hi] {
        if let Some((since, b)) = state {
            entry(&mut acc, b, grid.len()).exposure += r.ts - since;
        }
        let b = spread_bucket(r);
        let a = entry(&mut acc, b, grid.len());
        a.n_obs += 1;
        let premium = r.price - r.mid();
        for (c, d) in a.counts.iter_mut().zip(grid) {
            if premium >= *d {
                *c += 1;
            }
        }
        state = Some((r.ts, b));
    }
    if let Some((since, b)) = state {
        let end = t1.min(tape.end()).max(since);
        entry(&mut acc, b, grid.len()).exposure += end - since;
    }

    let mut fit = IntensityFit {
        buckets: BTreeMap::new(),
        unusable: BTreeMap::new(),
    };
    for (b, a) in acc {
        if a.n_obs < n_min {
            fit.unusable.insert(b, format!("{} trades < n_min = {n_min}", a.n_obs));
            continue;
        }
        if !(a.exposure > 0.0) {
            fit.unusable.insert(b, "no time spent in bucket".into());
            continue;
        }
        let pts: Vec<(f64, f64)> = grid
            .iter()
            .zip(&a.counts)
            .filter(|(_, &c)| c > 0)
            .map(|(&d, &c)| (d, (c as f64 / a.exposure).ln()))
            .collect();
        if pts.len() < 3 {
            fit.unusable.insert(b, format!("{} offsets with trades, need 3", pts.len()));
            continue;
        }
        let (slope, intercept) = ols(&pts);
        let k_hat = -slope;
        if !(k_hat > 0.0) {
            fit.unusable.insert(b, format!("fitted k = {k_hat} is not positive"));
            continue;
        }
        fit.buckets.insert(
            b,
            BucketFit {
                a_hat: intercept.exp(),
                k_hat,
                n_obs: a.n_obs,
                exposure: a.exposure,
            },
        );
    }
    Ok(fit)
}

fn ols(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Intensity fit over the trailing `window` seconds of the tape (the whole
/// tape when `window` is `None`).
pub fn calibrate_intensity(tape: &TradeTape, grid: &[f64], window: Option<f64>, n_min: usize) -> Result<IntensityFit> {
    let t0 = match window {
        Some(w) => (tape.end() - w).max(tape.start()),
        None => tape.start(),
    };
    fit_intensity(tape, t0, tape.end(), grid, n_min)
}

/// Risk aversion giving `delta*(0, 1) = target`, by bisection in `ln gamma`
/// over `[1e-6, 1e2]`.
pub fn calibrate_gamma(big_a: f64, k: f64, sigma: f64, mu: f64, b: f64, horizon: f64, target: f64) -> Result<f64> {
    calibrate_gamma_at(big_a, k, sigma, mu, b, horizon, 1, target)
}

/// As [`calibrate_gamma`], for the quote `delta*(0, q)` of a larger inventory.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_gamma_at(
    big_a: f64,
    k: f64,
    sigma: f64,
    mu: f64,
    b: f64,
    horizon: f64,
    q: usize,
    target: f64,
) -> Result<f64> {
    if q == 0 {
        return Err(Error::Domain("quotes are defined for q >= 1".into()));
    }
    let at = |gamma: f64| {
        start_quote(&ModelParams {
            mu,
            sigma,
            big_a,
            k,
            gamma,
            b,
            horizon,
            q_max: q,
        })
    };
    // The quote falls with gamma. Grow the bracket from below so that the
    // stiff large-gamma end is only evaluated when the target needs it.
    let f_lo = at(GAMMA_LO)?;
    if target > f_lo {
        return Err(Error::NoSolution {
            target,
            lo: at(GAMMA_HI)?,
            hi: f_lo,
        });
    }
    let mut lo_g = GAMMA_LO;
    let mut hi_g = GAMMA_LO;
    loop {
        hi_g = (hi_g * 10.0).min(GAMMA_HI);
        let f = at(hi_g)?;
        if f <= target {
            break;
        }
        if hi_g >= GAMMA_HI {
            return Err(Error::NoSolution {
                target,
                lo: f,
                hi: f_lo,
            });
        }
        lo_g = hi_g;
    }
    let (mut lo, mut hi) = (lo_g.ln(), hi_g.ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = at(mid.exp())?;
        if (f - target).abs() <= GAMMA_TOL || hi - lo < 1e-12 {
            return Ok(mid.exp());
        }
        // quote decreases in gamma
        if f > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Full calibration: volatility, per-bucket intensity, then `gamma` from the
/// most populated bucket. `model` supplies `mu`, `b` and `T`.
pub fn calibrate(tape: &TradeTape, cfg: &CalibrationConfig, model: &ModelParams) -> Result<CalibrationResult> {
    let t0 = match cfg.window {
        Some(w) => (tape.end() - w).max(tape.start()),
        None => tape.start(),
    };
    let sigma_hat = sigma_between(tape, t0, tape.end(), cfg.sampling_dt)?;
    let fit = fit_intensity(tape, t0, tape.end(), &cfg.distance_grid, cfg.n_min)?;
    let (&reference_bucket, main) = fit
        .buckets
        .iter()
        .max_by_key(|(b, f)| (f.n_obs, -**b))
        .ok_or_else(|| Error::Calibration(format!("no usable spread bucket: {:?}", fit.unusable)))?;
    let gamma_hat = calibrate_gamma(
        main.a_hat,
        main.k_hat,
        sigma_hat,
        model.mu,
        model.b,
        model.horizon,
        cfg.target_quote,
    )?;
    Ok(CalibrationResult {
        sigma_hat,
        reference_bucket,
        buckets: fit.buckets,
        unusable: fit.unusable,
        gamma_hat,
    })
}
