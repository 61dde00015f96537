//! Weyl growth of mu(E, m, phi) and the calibrated constant C.

use chargeflow::geometry::Model;
use chargeflow::reduction;
use chargeflow::trace::{self, TestFunction};

fn main() -> chargeflow::Result<()> {
    let phi = TestFunction::gaussian(0.0, 1.0);
    let ms: Vec<u32> = (50..=400).collect();
    for (name, model, e) in [
        ("U(1) q0=1", Model::flat_u1(1.0, 0.0, 0.0), 2.0),
        ("U(1) q0=2", Model::flat_u1(2.0, 0.0, 0.0), 3.0),
        ("SU(2)", Model::flat_su2(0.0, 0.0), 2.0),
    ] {
        let series = trace::flat_series(&model, e, &phi, &ms)?;
        let fit = trace::weyl_fit(&series)?;
        let vol = reduction::flat_volume(&model, e).unwrap();
        let cal = trace::calibrate_cnd(&series, vol, &phi)?;
        println!(
            "{name:10} exponent {:.4} +- {:.1e} (expected {}), Vol {vol:.4}, C = {:.6}",
            fit.exponent,
            fit.exponent_half_width,
            series.weyl_exponent(),
            cal.c
        );
    }
    Ok(())
}
