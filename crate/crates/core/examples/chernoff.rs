//! Chernoff's distribution by simulation, compared with the pointwise law
//! of the isotonic estimator.
use shapereg::inference::simulate_chernoff;

fn main() -> Result<(), shapereg::ShapeError> {
    let table = simulate_chernoff(20_000, 0.002, 3.0, 13)?;
    println!("draws {}, mean {:.4}", table.len(), table.mean());
    for p in [0.025, 0.25, 0.5, 0.75, 0.975] {
        println!("q{p:<5} {:+.4}", table.quantile(p));
    }
    Ok(())
}
