//! Empirical worst-case rate: log-log slope of LSE risk against n for a
//! ramp truth, next to the n^{-2/3} target.
use shapereg::risklab::{mc_risk, rate_slope, ErrorLaw, Estimator, Family, Scenario, Truth};

fn main() -> Result<(), shapereg::ShapeError> {
    let base = Scenario::new("ramp", Family::Isotonic, Truth::Ramp { v: 1.0 }, 100, 0.3, ErrorLaw::Gaussian);
    let mut pairs = Vec::new();
    for n in [100, 300, 1000, 3000, 10_000] {
        let est = mc_risk(&base.with_n(n), Estimator::Lse, 2.0, 200, 15)?;
        println!("n={n:<5} risk {:.5} (se {:.1e})", est.risk, est.se);
        pairs.push((n as f64, est.risk));
    }
    println!("slope {:.3} (target -0.667)", rate_slope(&pairs)?);
    Ok(())
}
