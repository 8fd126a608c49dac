//! Likelihood-ratio interval for f(t): simulate the null table once, then
//! invert the pinned-value test.
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use shapereg::inference::{lrs_ci, lrs_statistic, simulate_lrs_null};
use shapereg::projection::Series;

fn main() -> Result<(), shapereg::ShapeError> {
    let table = simulate_lrs_null(2000, 500, 11)?;
    println!("null table: {} draws, q0.95 = {:.3}", table.len(), table.quantile(0.95));

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 500;
    let x: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
    let y: Vec<f64> = x.iter().map(|t| t * t + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
    let s = Series::new(x, y)?;
    println!("L_n(0.25) = {:.3}, L_n(0.4) = {:.3}", lrs_statistic(&s, 0.5, 0.25)?, lrs_statistic(&s, 0.5, 0.4)?);
    let ci = lrs_ci(&s, 0.5, 0.05, &table)?;
    println!("95% interval for f(0.5) = 0.25: [{:.4}, {:.4}]", ci.lower, ci.upper);
    Ok(())
}
