//! Tabular exports. Floating-point columns carry 17 significant digits so
//! that files round-trip exactly.

use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ModelParams, QuoteSurface};
use crate::ode::WGrid;
use crate::sweep::SweepTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::UnknownName {
                kind: "format",
                name: other.into(),
            }),
        }
    }
}

/// Long format: one `t,q,value` row per grid point.
pub fn write_w_csv<W: Write>(w: &WGrid, mut out: W) -> Result<()> {
    writeln!(out, "t,q,value")?;
    for n in 0..=w.n_steps() {
        let t = w.time(n);
        for q in 0..=w.q_max() {
            writeln!(out, "{t:.16e},{q},{:.16e}", w.value(n, q))?;
        }
    }
    Ok(())
}

/// Long format: one `t,q,quote` row per grid point, `q >= 1`.
pub fn write_quotes_csv<W: Write>(s: &QuoteSurface, mut out: W) -> Result<()> {
    writeln!(out, "t,q,quote")?;
    for (n, t) in s.times().iter().enumerate() {
        for q in 1..=s.q_max() {
            writeln!(out, "{t:.16e},{q},{:.16e}", s.quote(n, q))?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SurfaceJson<'a> {
    params: &'a ModelParams,
    times: &'a [f64],
    /// `quotes[n][q - 1]`.
    quotes: Vec<Vec<f64>>,
}

pub fn write_quotes_json<W: Write>(s: &QuoteSurface, p: &ModelParams, out: W) -> Result<()> {
    let quotes = (0..s.times().len())
        .map(|n| (1..=s.q_max()).map(|q| s.quote(n, q)).collect())
        .collect();
    serde_json::to_writer_pretty(
        out,
        &SurfaceJson {
            params: p,
            times: s.times(),
            quotes,
        },
    )?;
    Ok(())
}

pub fn write_json<W: Write, T: Serialize + ?Sized>(value: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Wide format in the layout of a comparative-statics table: one row per
/// `q`, one column per parameter value.
pub fn write_sweep_csv<W: Write>(t: &SweepTable, mut out: W) -> Result<()> {
    write!(out, "q")?;
    for v in &t.values {
        write!(out, ",{}={v}", t.param.name())?;
    }
    writeln!(out)?;
    for q in 1..=t.q_max {
        write!(out, "{q}")?;
        for row in &t.quotes {
            write!(out, ",{:.16e}", row[q - 1])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{quote_surface, solve_rk};

    #[test]
    fn csv_values_round_trip_exactly() {
        let w = solve_rk(&ModelParams::reference(), 10).unwrap();
        let mut buf = Vec::new();
        write_w_csv(&w, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,q,value"));
        let row: Vec<&str> = lines.nth(7 * 3 + 2).unwrap().split(',').collect();
        assert_eq!(row[1], "2");
        assert_eq!(row[2].parse::<f64>().unwrap(), w.value(3, 2));
        assert_eq!(row[0].parse::<f64>().unwrap(), w.time(3));
    }

    #[test]
    fn quote_exports_have_expected_shape() {
        let p = ModelParams::reference();
        let s = quote_surface(&solve_rk(&p, 4).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_quotes_csv(&s, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 5 * 6);
        let mut buf = Vec::new();
        write_quotes_json(&s, &p, &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["quotes"].as_array().unwrap().len(), 5);
        assert_eq!(v["params"]["A"], 0.1);
    }

    #[test]
    fn format_names() {
        assert_eq!("csv".parse::<Format>().unwrap(), Format::Csv);
        assert!(matches!("xml".parse::<Format>(), Err(Error::UnknownName { .. })));
    }
}
