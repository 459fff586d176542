//! Repeat training over seeded trials, aggregate the metrics and check how
//! the confidence interval narrows with the trial count.

use excessmort::evalkit::Metric;
use excessmort::forecasters::ModelConfig;
use excessmort::ingest::{generate_synthetic, SyntheticSpec};
use excessmort::series::{split, SplitSpec};
use excessmort::trials::{convergence, TrialOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let series = generate_synthetic(&SyntheticSpec::national_like(60), 5)?;
    let s = split(&series, &SplitSpec::national_main().masked())?;
    let config = ModelConfig::Lstm { lookback: 3, batch_size: 32, epochs: 50, hidden: 64 };
    let (curve, ensemble) = convergence(&config, &s, &[10, 20, 40], 42, &TrialOptions::default())?;
    let rmse = ensemble.validation.get(Metric::Rmse);
    println!("validation RMSE {:.1} +- {:.1} over {} trials", rmse.mean, rmse.sd, ensemble.trials.len());
    for p in &curve.points {
        let s = p.metrics[&Metric::Rmse];
        println!("N={:<3} mean {:>7.2}  ci width {:>6.2}  converged {}", p.n, s.mean, s.ci_width, p.converged);
    }
    Ok(())
}
