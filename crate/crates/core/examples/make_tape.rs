//! Regenerates the bundled synthetic tape:
//!
//! ```text
//! cargo run -p liquidation-core --example make_tape -- data/synthetic_tape.csv
//! ```

use std::fs::File;
use std::io::BufWriter;

use liquidation_core::market_data::{synthetic_tape, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "data/synthetic_tape.csv".into());
    // two hours, prices around 10.00 with a 0.01 tick
    let spec = SyntheticSpec {
        duration: 7200.0,
        tick_size: 0.01,
        ..SyntheticSpec::default()
    };
    let tape = synthetic_tape(&spec, 42)?;
    tape.write_csv(BufWriter::new(File::create(&out)?))?;
    eprintln!("wrote {} records to {out}", tape.len());
    Ok(())
}
