//! det(I - P) of the linearized Poincare map, on a synthetic monodromy and
//! on an orbit of a model with a two-dimensional charge orbit.

use chargeflow::geometry::Model;
use chargeflow::reduction::{self, ShootingConfig};
use nalgebra::{DMatrix, DVector};

fn main() -> chargeflow::Result<()> {
    // Flow direction (1,0,0,0), energy gradient (0,1,0,0), a rotation by `a`
    // in the transverse symplectic plane.
    let omega = DMatrix::from_row_slice(
        4,
        4,
        &[0., 1., 0., 0., -1., 0., 0., 0., 0., 0., 0., 1., 0., 0., -1., 0.],
    );
    let flow = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
    let grad = DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0]);
    for a in [std::f64::consts::FRAC_PI_3, std::f64::consts::FRAC_PI_2, 2.0] {
        let mut m = DMatrix::identity(4, 4);
        m[(0, 1)] = 0.5;
        m[(2, 2)] = a.cos();
        m[(2, 3)] = -a.sin();
        m[(3, 2)] = a.sin();
        m[(3, 3)] = a.cos();
        let d = reduction::poincare_det(&m, &omega, &flow, &grad)?;
        println!(
            "a = {a:.4}: det = {:.12} (2 - 2cos a = {:.12}), alternative {:.12}",
            d.det,
            2.0 - 2.0 * a.cos(),
            d.det_alternative
        );
    }

    let su2 = Model::flat_su2(0.3, 0.0);
    let cfg = ShootingConfig {
        windings: vec![1],
        section_grid: 2,
        ..Default::default()
    };
    for o in reduction::find_periodic_orbits(&su2, 2.0, &cfg)? {
        println!(
            "SU(2) orbit T = {:.8}: det(I - P) = {:.3e} ({:?})",
            o.period, o.det_i_minus_p, o.component_kind
        );
    }
    Ok(())
}
