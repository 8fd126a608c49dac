//! Isotonic regression under the coordinatewise and weak-majorization
//! orders, and the monotone extension of a fit to new points.
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use shapereg::partial_order::{extend_fit, fit_isotonic_po, OrderRelation};

fn main() -> Result<(), shapereg::ShapeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let points: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
    let y: Vec<f64> = points.iter().map(|p| p[0] + p[1] + 0.2 * rng.sample::<f64, _>(StandardNormal)).collect();
    for (name, order) in [("coordinatewise", OrderRelation::coordinatewise()), ("weak majorization", OrderRelation::weak_majorization())] {
        let fit = fit_isotonic_po(&points, &y, &order)?;
        let at = extend_fit(&fit, &[0.5, 0.5])?;
        println!("{name}: {} constraints, kkt {:.1e}, f(0.5, 0.5) = {at:.3}", fit.constraints.len(), fit.kkt_residual);
    }
    let explicit = OrderRelation::explicit(vec![(0, 1), (1, 2), (0, 3)]);
    let fit = fit_isotonic_po(&[], &[2.0, 1.0, 0.0, 5.0], &explicit)?;
    println!("explicit DAG: {:?}", fit.theta_hat);
    Ok(())
}
