//! Closed-form isotypic spectra of flat models, written as CSV.

use chargeflow::geometry::Model;
use chargeflow::spectrum;

fn main() -> chargeflow::Result<()> {
    let u1 = Model::flat_u1(1.0, 0.5, 0.0);
    let su2 = Model::flat_su2(0.0, 0.0);
    let mut tables = Vec::new();
    for m in 1..=3 {
        tables.push(spectrum::flat_spectrum(&u1, m, (-6.0, 6.0), 1000)?);
        tables.push(spectrum::flat_spectrum(&su2, m, (-6.0, 6.0), 1000)?);
    }
    for t in &tables {
        println!("m = {}: {} eigenvalues in {:?}", t.m, t.total(), t.window);
    }
    spectrum::write_spectrum_csv(&tables, std::io::stdout())?;
    Ok(())
}
