//! Bivariate isotonic fit on a grid, certified by the upper-quadrant
//! residual sums.
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use shapereg::shapes::{fit_matrix_isotonic, matrix_kkt};

fn main() -> Result<(), shapereg::ShapeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (n1, n2) = (6, 8);
    let y: Vec<Vec<f64>> = (0..n1)
        .map(|i| (0..n2).map(|j| (i + j) as f64 / 12.0 + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let fit = fit_matrix_isotonic(&y)?;
    for row in &fit.theta_hat {
        println!("{}", row.iter().map(|v| format!("{v:+.2}")).collect::<Vec<_>>().join(" "));
    }
    let flat: Vec<f64> = y.concat();
    println!("kkt {:.1e}", matrix_kkt(&flat, &fit.theta_hat.concat(), n1, n2));
    Ok(())
}
