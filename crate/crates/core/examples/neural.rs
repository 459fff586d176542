//! Train each neural forecaster family on the same series and roll it
//! forward twelve months.

use excessmort::forecasters::{train, Family, ModelConfig};
use excessmort::ingest::{generate_synthetic, SyntheticSpec};
use excessmort::series::{split, SplitSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let series = generate_synthetic(&SyntheticSpec::national_like(60), 3)?;
    let s = split(&series, &SplitSpec::national_main().masked())?;
    for family in Family::ALL.into_iter().filter(Family::is_neural) {
        let model = train(&ModelConfig::default_for(family), &s.train, 42)?;
        let curve = model.loss_curve();
        let path = model.forecast(12)?;
        let mape = path.iter().zip(s.validation.values()).map(|(p, o)| ((o - p) / o).abs()).sum::<f64>() / 12.0 * 100.0;
        println!(
            "{:<13} loss {:.4} -> {:.4}  first month {:>6.0}  validation MAPE {mape:.2}%",
            family.name(),
            curve[0],
            curve[curve.len() - 1],
            path[0]
        );
    }
    Ok(())
}
