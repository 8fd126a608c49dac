//! Pointwise bootstrap intervals for a monotone regression function:
//! smoothed residual bootstrap, naive LSE bootstrap and pairs bootstrap.
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use shapereg::inference::{bootstrap_ci, BootstrapScheme};
use shapereg::projection::Series;

fn main() -> Result<(), shapereg::ShapeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 500;
    let x: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
    let y: Vec<f64> = x.iter().map(|t| t + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
    let s = Series::new(x, y)?;
    for scheme in [BootstrapScheme::Smoothed, BootstrapScheme::NaiveLse, BootstrapScheme::Pairs] {
        let ci = bootstrap_ci(&s, 0.5, 0.05, 1000, scheme, None, 9)?;
        println!("{scheme:?}: [{:.4}, {:.4}] width {:.4}", ci.lower, ci.upper, ci.width());
    }
    Ok(())
}
