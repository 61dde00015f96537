//! The reduced null Hamiltonian of a stationary bundle spacetime and its model file.

use chargeflow::geometry::{Model, ModelFile, PhasePoint};

fn main() -> chargeflow::Result<()> {
    let model = Model::variable_lapse_u1(1.0, 0.1);
    for x in [0.0, 1.5, std::f64::consts::PI] {
        let pt = PhasePoint::new(x, 0.4, vec![1.0]);
        let h = model.hamiltonian(&pt);
        // tau = -H is a null root of the full inverse metric.
        println!(
            "x = {x:.3}  N = {:.4}  H = {h:.10}  null defect = {:.1e}",
            model.lapse(x),
            model.null_defect(-h, pt.p, &pt.q, x),
        );
    }

    let text = model.to_file().to_toml()?;
    println!("\n{text}");
    let back = ModelFile::parse(&text)?.build(None)?;
    assert_eq!(back.geometry, model.geometry);
    Ok(())
}
