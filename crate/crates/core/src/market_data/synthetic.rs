use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{TradeRecord, TradeTape};
use crate::error::{Error, Result};

/// Generator for tapes whose statistics are known in closed form.
///
/// The mid is a Brownian motion with drift `mu` and volatility `sigma`.
/// Buy trades arrive at rate `big_a` and print at `mid + D` with
/// `D ~ Exp(k)`, so prints at or above `mid + delta` arrive at rate
/// `A exp(-k delta)`. Sell trades mirror them below the mid. The spread is
/// constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub mu: f64,
    pub sigma: f64,
    #[serde(rename = "A")]
    pub big_a: f64,
    pub k: f64,
    /// Seconds.
    pub duration: f64,
    pub spread: f64,
    pub s0: f64,
    pub tick_size: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            mu: 0.0,
            sigma: 0.3,
            big_a: 0.1,
            k: 0.3,
            duration: 36_000.0,
            spread: 1.0,
            s0: 1000.0,
            tick_size: 1.0,
        }
    }
}

pub fn synthetic_tape(spec: &SyntheticSpec, seed: u64) -> Result<TradeTape> {
    let positive = [spec.big_a, spec.k, spec.duration, spec.spread, spec.tick_size];
    if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || !(spec.sigma >= 0.0) {
        return Err(Error::Config(format!("invalid synthetic tape spec {spec:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaps = Exp::new(2.0 * spec.big_a).expect("positive rate");
    let premia = Exp::new(spec.k).expect("positive k");
    let half = 0.5 * spec.spread;

    let mut records = Vec::new();
    let mut t = 0.0;
    let mut mid = spec.s0;
    loop {
        let gap: f64 = rng.sample(gaps);
        if t + gap > spec.duration {
            break;
        }
        t += gap;
        let z: f64 = rng.sample(StandardNormal);
        mid += spec.mu * gap + spec.sigma * gap.sqrt() * z;
        let d: f64 = rng.sample(premia);
        let price = if rng.gen::<bool>() { mid + d } else { mid - d };
        let size = 100.0 * rng.gen_range(1..=5) as f64;
        records.push(TradeRecord {
            ts: t,
            price,
            size,
            bid: mid - half,
            ask: mid + half,
        });
    }
    TradeTape::from_records(records, spec.tick_size)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_match_the_spec() {
        let spec = SyntheticSpec::default();
        let tape = synthetic_tape(&spec, 1).unwrap();
        let n = tape.len() as f64;
        // 2 A T = 7200 records, Poisson
        assert!((n - 7200.0).abs() < 4.0 * 7200f64.sqrt(), "{n}");
        let above = tape.records().iter().filter(|r| r.price >= r.mid() + 2.0).count() as f64;
        let want = spec.big_a * (-2.0 * spec.k).exp() * spec.duration;
        assert!((above - want).abs() < 4.0 * want.sqrt(), "{above} vs {want}");
        assert!(tape.records().iter().all(|r| (r.spread() - 1.0).abs() < 1e-9));
    }

    #[test]
    fn same_seed_same_tape() {
        let spec = SyntheticSpec {
            duration: 600.0,
            ..SyntheticSpec::default()
        };
        assert_eq!(synthetic_tape(&spec, 9).unwrap(), synthetic_tape(&spec, 9).unwrap());
        assert_ne!(synthetic_tape(&spec, 9).unwrap(), synthetic_tape(&spec, 10).unwrap());
    }
}
