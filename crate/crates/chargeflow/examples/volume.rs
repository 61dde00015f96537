//! Liouville volume of an energy surface by seeded Monte Carlo.

use chargeflow::geometry::Model;
use chargeflow::reduction::{self, SamplerConfig};

fn main() -> chargeflow::Result<()> {
    let cfg = SamplerConfig {
        seed: 42,
        ..Default::default()
    };
    for (name, model, e) in [
        ("flat U(1)", Model::flat_u1(1.0, 0.0, 0.0), 2.0),
        ("flat SU(2)", Model::flat_su2(0.0, 0.0), 2.0),
        ("variable lapse", Model::variable_lapse_u1(1.0, 0.1), 1.5),
    ] {
        let v = reduction::energy_surface_volume(&model, e, &cfg)?;
        let closed = reduction::flat_volume(&model, e)
            .map(|c| format!("{c:.6}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{name:15} E = {e}: {:.6} +- {:.1e} ({} samples), closed form {closed}",
            v.value, v.std_error, v.samples
        );
    }
    Ok(())
}
