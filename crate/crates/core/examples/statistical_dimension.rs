//! Statistical dimension of the monotone cone, E||Π(Z)||², against the
//! harmonic number.
use shapereg::risklab::{statistical_dimension, ConeTag};

fn main() -> Result<(), shapereg::ShapeError> {
    for n in [1usize, 5, 20, 100] {
        let est = statistical_dimension(ConeTag::Isotonic, n, 20_000, n as u64)?;
        let h: f64 = (1..=n).map(|j| 1.0 / j as f64).sum();
        println!("n={n:<4} estimate {:.4} ± {:.4}, harmonic {h:.4}", est.risk, est.se);
    }
    Ok(())
}
