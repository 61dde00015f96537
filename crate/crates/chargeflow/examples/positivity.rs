//! Threshold m0 above which every mode is real with positive energy, for V = -10.

use chargeflow::geometry::{BaseGeometry, ConnectionSpec, Model, TrigSeries};
use chargeflow::lie::GroupData;
use chargeflow::spectrum;

fn main() -> chargeflow::Result<()> {
    let mut g = BaseGeometry::flat(0.0);
    g.potential = TrigSeries::constant(-10.0);
    for (group, dim) in [(GroupData::u1(), 1), (GroupData::su2(), 3)] {
        let name = group.name.clone();
        let model = Model::new(g.clone(), ConnectionSpec::zero(dim), group, vec![1.0])?;
        let report = spectrum::positivity_threshold(&model, 8, 33)?;
        println!("{name}: m0 = {}", report.m0);
        for c in &report.levels {
            println!(
                "  m = {}: {} non-real, min Q = {:.4e}{}",
                c.m,
                c.non_real,
                c.min_energy,
                if c.passes { "" } else { "  <-" }
            );
        }
    }
    Ok(())
}
