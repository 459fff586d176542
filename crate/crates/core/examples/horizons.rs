//! Accuracy over the first 12, 24, 36 and 48 projected months.

use excessmort::forecasters::{Family, ModelConfig};
use excessmort::ingest::{generate_synthetic, SyntheticSpec};
use excessmort::series::{split, SplitSpec};
use excessmort::trials::{horizon_table, horizons_csv, run_trials, TrialOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let series = generate_synthetic(&SyntheticSpec::national_like(108), 2)?;
    let s = split(&series, &SplitSpec::national_main())?;
    let ensemble = run_trials(&ModelConfig::default_for(Family::Sarima), &s, 1, 42, &TrialOptions::default())?;
    let rows = horizon_table(&ensemble, s.projection.as_ref().expect("projection segment"), &[12, 24, 36, 48])?;
    print!("{}", horizons_csv(&rows));
    Ok(())
}
