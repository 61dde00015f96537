//! Isotypic multiplicities against d_m times the scalar bundle multiplicities.

use chargeflow::geometry::Model;
use chargeflow::spectrum;

fn main() -> chargeflow::Result<()> {
    let model = Model::flat_su2(0.0, 0.0);
    for m in 1..=8 {
        let r = spectrum::factorization_check(&model, m, (-20.0, 20.0), 61)?;
        let first = &r.entries[r.entries.len() / 2];
        println!(
            "m = {m}: d_m = {}, {} eigenvalues, exact = {}  (e.g. {:.6}: {} = {} x {})",
            r.dimension,
            r.entries.len(),
            r.exact,
            first.lambda,
            first.isotypic,
            r.dimension,
            first.bundle
        );
    }
    Ok(())
}
