//! Fit the seasonal ARIMA baseline, forecast with analytic intervals and
//! run a small order search on the validation year.

use excessmort::ingest::{generate_synthetic, SyntheticSpec};
use excessmort::sarima::{fit_sarima, forecast_sarima, grid_search_sarima_with, SarimaFitOptions, SarimaGrid, SarimaOrder};
use excessmort::series::{split, SplitSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let series = generate_synthetic(&SyntheticSpec::national_like(60), 3)?;
    let s = split(&series, &SplitSpec::national_main().masked())?;

    let model = fit_sarima(&s.train, SarimaOrder::new(1, 0, 0, 1, 1, 1))?;
    println!("coefficients {:?}, sigma2 {:.1}", model.coefficients.flat(), model.sigma2);
    let f = forecast_sarima(&model, 12)?;
    for i in 0..12 {
        println!("{}  {:>7.0}  [{:>7.0}, {:>7.0}]  observed {:>5.0}", f.month_at(i), f.points[i], f.lower[i], f.upper[i], s.validation.values()[i]);
    }

    let grid = SarimaGrid { p: vec![0, 1], d: vec![0, 1], q: vec![0, 1], seasonal_p: vec![0, 1], seasonal_d: vec![1], seasonal_q: vec![0, 1] };
    let search = grid_search_sarima_with(&s.tuning(), &grid, &SarimaFitOptions::default())?;
    println!("best of {} orders: {}", search.leaderboard.len(), search.best);
    Ok(())
}
