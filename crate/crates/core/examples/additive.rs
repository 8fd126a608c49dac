//! Additive model with one nondecreasing and one convex component, fitted
//! by backfitting.
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use shapereg::additive::{backfit_additive_default, ComponentShape};

fn main() -> Result<(), shapereg::ShapeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|r| 1.0 + r[0].sqrt() + 3.0 * (r[1] - 0.5).powi(2) + 0.1 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let fit = backfit_additive_default(&x, &y, &[ComponentShape::Nondecreasing, ComponentShape::Convex])?;
    println!("mu {:.3}, sse {:.3}, cycles {}", fit.mu_hat, fit.sse, fit.backfit_iterations);
    for (k, c) in fit.components.iter().enumerate() {
        println!("component {k} ({:?}): design mean {:.1e}, range [{:.3}, {:.3}]", c.shape, c.design_mean(), c.values[0], c.values[c.values.len() - 1]);
    }
    Ok(())
}
