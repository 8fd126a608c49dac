//! A Monte Carlo risk experiment described in JSON, written as CSV rows.
use shapereg::risklab::{write_rows, Experiment};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = r#"{
        "scenarios": [
            {"id": "ramp", "family": "isotonic", "truth": {"kind": "ramp", "v": 1.0}, "n": 200, "sigma": 1.0},
            {"id": "blocks", "family": "isotonic", "truth": {"kind": "blocks", "k": 3}, "n": 200, "sigma": 1.0, "error_law": "t5"},
            {"id": "valley", "family": "unimodal", "truth": {"kind": "unimodal_valley", "v": 1.0}, "n": 200, "sigma": 0.5}
        ],
        "estimators": ["lse", "oracle"],
        "p": [2.0],
        "reps": 300,
        "seed": 14
    }"#;
    let exp: Experiment = serde_json::from_str(spec)?;
    write_rows(std::io::stdout(), &exp.run()?)?;
    Ok(())
}
