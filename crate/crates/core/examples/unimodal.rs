//! Valley-shaped (nonincreasing then nondecreasing) least squares fit.
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use shapereg::shapes::fit_unimodal;

fn main() -> Result<(), shapereg::ShapeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 40;
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let x = i as f64 / (n - 1) as f64;
            (2.0 * x - 1.0).abs() + 0.2 * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    let fit = fit_unimodal(&y)?;
    println!("mode index {} (1-based), sse {:.4}", fit.mode, fit.sse);
    for (i, v) in fit.values.iter().enumerate().step_by(5) {
        println!("{i:>3} y={:+.3} fit={v:+.3}", y[i]);
    }
    Ok(())
}
