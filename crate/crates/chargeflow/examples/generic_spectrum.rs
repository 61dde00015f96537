//! Fourier collocation for variable coefficients: a Hermitian problem without
//! shift, the companion linearization with one.

use chargeflow::geometry::{Model, TrigSeries};
use chargeflow::spectrum::{self, CollocationOptions};

fn main() -> chargeflow::Result<()> {
    let lapse = Model::variable_lapse_u1(1.0, 0.1);
    let t = spectrum::generic_spectrum_1d_with(&lapse, 5, (4.0, 7.0), &CollocationOptions::new(63))?;
    println!("lapse model, m = 5, window (4, 7):");
    for e in &t.eigenvalues {
        println!("  {:.12} x{}", e.lambda, e.multiplicity);
    }
    println!("  refinement error {:?}", t.resolution.refinement_error);

    let mut shifted = Model::variable_lapse_u1(1.0, 0.1);
    shifted.geometry.shift = TrigSeries::with_cos(0.2, vec![0.05]);
    let t = spectrum::generic_spectrum_1d(&shifted, 5, (4.0, 7.0), 63)?;
    println!("with shift 0.2 + 0.05 cos x:");
    for e in &t.eigenvalues {
        println!("  {:.12} x{}", e.lambda, e.multiplicity);
    }
    Ok(())
}
