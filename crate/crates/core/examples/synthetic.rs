//! Generate a trend-plus-seasonality fixture and inject a level shift.

use excessmort::calendar::YearMonth;
use excessmort::ingest::{apply_level_shift, generate_synthetic, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = generate_synthetic(&SyntheticSpec::national_like(108), 7)?;
    let shifted = apply_level_shift(&base, YearMonth::new(2020, 1).expect("valid month"), 900.0);
    println!("month     base  shifted");
    for ((m, a), b) in base.months().zip(base.values()).zip(shifted.values()).skip(54).take(12) {
        println!("{m}  {a:>7.0}  {b:>7.0}");
    }
    Ok(())
}
