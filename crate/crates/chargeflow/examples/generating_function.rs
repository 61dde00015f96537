//! Abel-damped generating function and the degree of its singularities.

use chargeflow::geometry::Model;
use chargeflow::trace::{self, TestFunction};

fn main() -> chargeflow::Result<()> {
    let phi = TestFunction::gaussian(0.0, 1.0);
    let ms: Vec<u32> = (1..=1500).collect();
    let grid = trace::angle_grid(8192);
    let xis: Vec<f64> = (0..6).map(|i| 300.0 + 150.0 * i as f64).collect();
    for (name, model) in [
        ("U(1)", Model::flat_u1(1.0, 0.0, 0.0)),
        ("SU(2)", Model::flat_su2(0.0, 0.0)),
    ] {
        let series = trace::flat_series(&model, 2.0, &phi, &ms)?;
        let y = trace::generating_function(&series, &grid, 0.999)?;
        let s = trace::extract_singularity(&grid, &y, 0.999, 0.0, 0.05, &xis)?;
        let k = trace::r_sweep_exponent(&series, 0.0, &[0.9, 0.95, 0.99])?;
        println!(
            "{name:6} degree {:.3} (r-sweep {:.3}), c0 = {:.4}, classical = {}",
            s.degree, k, s.leading_coefficient, s.classical
        );
    }
    Ok(())
}
