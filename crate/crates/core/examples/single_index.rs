//! Monotone single-index model y = ψ(x·β) + ε with unit-norm β.
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use shapereg::additive::fit_monotone_single_index;

fn main() -> Result<(), shapereg::ShapeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let beta = [0.6, 0.8];
    let x: Vec<Vec<f64>> = (0..300).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|r| (r[0] * beta[0] + r[1] * beta[1]).powi(3) + 0.05 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let fit = fit_monotone_single_index(&x, &y, 64, 30)?;
    println!("true beta {beta:?}, estimate [{:.3}, {:.3}], sse {:.4}", fit.beta_hat[0], fit.beta_hat[1], fit.sse);
    Ok(())
}
