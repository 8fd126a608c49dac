//! Convex least squares on an uneven design, with its knots and the
//! certificate of the cumulative-residual characterization.
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use shapereg::projection::Series;
use shapereg::shapes::{fit_convex1d, verify_convex_characterization};

fn main() -> Result<(), shapereg::ShapeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut x: Vec<f64> = (0..60).map(|_| rng.gen::<f64>()).collect();
    x.sort_by(f64::total_cmp);
    let y: Vec<f64> = x.iter().map(|t| 4.0 * (t - 0.4).powi(2) + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
    let s = Series::new(x, y)?;
    let fit = fit_convex1d(&s)?;
    println!("knots {:?}", fit.knots);
    println!("sse {:.5}, certificate residual {:.1e}", fit.sse, verify_convex_characterization(&s, &fit));
    Ok(())
}
