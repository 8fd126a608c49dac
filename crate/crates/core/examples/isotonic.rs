//! Isotonic regression by PAVA, checked against the min-max formula and
//! the slopes of the greatest convex minorant, plus a pinned fit.
use shapereg::isotonic::{constrained_pava, isotonic, minmax_value, slope_fit};
use shapereg::projection::Series;

fn main() -> Result<(), shapereg::ShapeError> {
    let y = vec![1.0, 3.0, 2.0, 4.0, 3.5, 3.0, 6.0, 5.0];
    let fit = isotonic(&y)?;
    let theta = fit.fitted();
    println!("y      {y:?}");
    println!("pava   {theta:?}");

    let mm: Vec<f64> = (1..=y.len()).map(|j| minmax_value(&y, j)).collect::<Result<_, _>>()?;
    let gcm = slope_fit(&Series::equispaced(y.clone())?).fitted();
    println!("minmax {mm:?}");
    println!("gcm    {gcm:?}");

    let pinned = constrained_pava(&y, 4, 3.0)?.fitted();
    println!("pinned at l=4, phi0=3: {pinned:?}");
    Ok(())
}
