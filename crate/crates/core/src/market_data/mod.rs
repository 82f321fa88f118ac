//! Trade-by-trade data: ingestion, a synthetic generator, and calibration of
//! the model parameters.
//!
//! Prices inside a [`TradeTape`] are in ticks; files carry currency units and
//! are divided by `tick_size` on load.

mod calibrate;
mod synthetic;

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use calibrate::{
    calibrate, calibrate_gamma, calibrate_gamma_at, calibrate_intensity, calibrate_sigma, fit_intensity, sigma_between,
    spread_bucket, BucketFit, CalibrationConfig, CalibrationResult, IntensityFit,
};
pub use synthetic::{synthetic_tape, SyntheticSpec};

use crate::error::{Error, Result};

/// One printed trade with the prevailing quotes, prices in ticks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub ts: f64,
    pub price: f64,
    pub size: f64,
    pub bid: f64,
    pub ask: f64,
}

impl TradeRecord {
    pub fn mid(&self) -> f64 {
        0.5 * (self.bid + self.ask)
    }

    pub fn spread(&self) -> f64 {
        self.ask - self.bid
    }

    fn check(&self) -> std::result::Result<(), String> {
        let fields = [self.ts, self.price, self.size, self.bid, self.ask];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err("non-finite value".into());
        }
        if self.price <= 0.0 {
            return Err(format!("price {} must be > 0", self.price));
        }
        if self.size <= 0.0 {
            return Err(format!("size {} must be > 0", self.size));
        }
        if self.bid >= self.ask {
            return Err(format!("bid {} >= ask {}", self.bid, self.ask));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeTape {
    records: Vec<TradeRecord>,
    tick_size: f64,
    ats: f64,
}

impl TradeTape {
    /// Validates records already expressed in ticks.
    pub fn from_records(records: Vec<TradeRecord>, tick_size: f64) -> Result<Self> {
        let origin = PathBuf::from("<memory>");
        if !(tick_size > 0.0) || !tick_size.is_finite() {
            return Err(Error::Config(format!("tick_size {tick_size} must be > 0")));
        }
        if records.is_empty() {
            return Err(Error::EmptyTape(origin));
        }
        for (i, r) in records.iter().enumerate() {
            let line = i + 1;
            r.check().map_err(|reason| Error::Data {
                path: origin.clone(),
                line,
                reason,
            })?;
            if i > 0 && r.ts < records[i - 1].ts {
                return Err(Error::Data {
                    path: origin.clone(),
                    line,
                    reason: format!("timestamp {} precedes {}", r.ts, records[i - 1].ts),
                });
            }
        }
        let ats = records.iter().map(|r| r.size).sum::<f64>() / records.len() as f64;
        Ok(Self {
            records,
            tick_size,
            ats,
        })
    }

    pub fn records(&self) -> &[TradeRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn tick_size(&self) -> f64 {
        self.tick_size
    }

    /// Average trade size.
    pub fn ats(&self) -> f64 {
        self.ats
    }

    pub fn start(&self) -> f64 {
        self.records[0].ts
    }

    pub fn end(&self) -> f64 {
        self.records[self.records.len() - 1].ts
    }

    /// Index of the last record with `ts <= t`, if any.
    pub fn index_at_or_before(&self, t: f64) -> Option<usize> {
        self.records.partition_point(|r| r.ts <= t).checked_sub(1)
    }

    /// Writes the tape in file units (currency prices).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let tick = self.tick_size;
        for r in &self.records {
            w.serialize(TradeRecord {
                price: r.price * tick,
                bid: r.bid * tick,
                ask: r.ask * tick,
                ..*r
            })
            .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::new(std::io::ErrorKind::Other, e))
}

/// Reads a delimited file with header `ts,price,size,bid,ask` (any column
/// order) and converts prices to ticks.
pub fn load_tape(path: &Path, tick_size: f64) -> Result<TradeTape> {
    let data_err = |line: usize, reason: String| Error::Data {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => data_err(1, format!("{other:?}")),
        })?;
    let mut records: Vec<TradeRecord> = Vec::new();
    for row in reader.deserialize::<TradeRecord>() {
        let r = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            data_err(line, e.to_string())
        })?;
        let line = records.len() + 2;
        r.check().map_err(|reason| data_err(line, reason))?;
        if let Some(prev) = records.last() {
            if r.ts < prev.ts {
                return Err(data_err(
                    line,
                    format!("timestamp {} precedes {}", r.ts, prev.ts),
                ));
            }
        }
        records.push(TradeRecord {
            price: r.price / tick_size,
            bid: r.bid / tick_size,
            ask: r.ask / tick_size,
            ..r
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyTape(path.to_path_buf()));
    }
    TradeTape::from_records(records, tick_size)
}
