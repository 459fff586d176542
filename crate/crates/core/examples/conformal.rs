//! Split-conformal intervals: the 95% radius comes from absolute
//! validation residuals and is applied symmetrically to a projection.

use excessmort::calendar::YearMonth;
use excessmort::evalkit::{apply_intervals, conformal_radius, pi_coverage};
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let q = conformal_radius(&(1..=20).map(f64::from).collect::<Vec<_>>(), 0.05)?;
    println!("radius on residuals 1..20: {q}");

    let noise = Normal::new(0.0, 50.0)?;
    let mut rng = excessmort::rng::seeded(1);
    let residuals: Vec<f64> = (0..100).map(|_| f64::abs(noise.sample(&mut rng))).collect();
    let q = conformal_radius(&residuals, 0.05)?;
    let points = vec![4000.0; 1000];
    let observed: Vec<f64> = points.iter().map(|p| p + noise.sample(&mut rng)).collect();
    let bands = apply_intervals(YearMonth::new(2020, 1).expect("valid month"), &points, q);
    println!("radius {q:.1}, coverage on 1000 fresh months {:.1}%", pi_coverage(&observed, &bands)?);
    Ok(())
}
