//! k-monotone fits (k-th differences nonnegative) for k = 1, 2, 3.
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use shapereg::projection::ConeSpec;
use shapereg::shapes::fit_k_monotone;

fn main() -> Result<(), shapereg::ShapeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 30;
    let y: Vec<f64> = (0..n)
        .map(|i| (i as f64 / n as f64).powi(3) + 0.05 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    for k in 1..=3 {
        let fit = fit_k_monotone(&y, k)?;
        let viol = ConeSpec::k_monotone(n, k)?.max_violation(&fit.theta_hat);
        println!("k={k} sse {:.5} max violation {viol:.1e} kkt {:.1e}", fit.sse, fit.kkt_residual);
    }
    Ok(())
}
