//! Projection onto a user-defined polyhedral cone {θ : Aθ ≤ 0}.
use shapereg::projection::{project_cone, ConeSpec, SparseRow};

fn main() -> Result<(), shapereg::ShapeError> {
    // θ0 ≤ θ1, θ0 ≤ θ2 and θ1 + θ2 ≤ 2·θ3
    let rows = vec![
        SparseRow::leq(0, 1),
        SparseRow::leq(0, 2),
        SparseRow::new(vec![1, 2, 3], vec![1.0, 1.0, -2.0]),
    ];
    let cone = ConeSpec::new(4, rows)?;
    let y = [3.0, 1.0, 2.0, 0.0];
    let fit = project_cone(&y, &cone, 1e-12, 100_000)?;
    println!("theta {:?}", fit.theta_hat);
    println!("max violation {:.1e}, kkt {:.1e}", cone.max_violation(&fit.theta_hat), fit.kkt_residual);
    Ok(())
}
