//! Integrates the Wong flow with its monodromy and dumps the trajectory as CSV.

use chargeflow::dynamics;
use chargeflow::geometry::{Model, PhasePoint};

fn main() -> chargeflow::Result<()> {
    let model = Model::flat_su2(0.4, 0.1);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let start = PhasePoint::new(0.2, 0.9, vec![0.6 * s, 0.0, 0.8 * s]);

    let out = dynamics::integrate(&model, &start, 100.0, 1e-12, true)?;
    let r = &out.report;
    println!(
        "energy drift {:.2e}, charge drift {:.2e} (bound {:.1e}), {} steps",
        r.energy_drift, r.charge_drift, r.bound, r.steps
    );
    let m = out.state.monodromy.as_ref().unwrap();
    let z0 = start.to_vec();
    let z1 = out.state.point.to_vec();
    println!("symplectic defect {:.2e}", dynamics::symplectic_defect(&model, &z0, &z1, m));

    let back = dynamics::integrate(&model, &out.state.point, -100.0, 1e-12, false)?;
    let err = z0
        .iter()
        .zip(back.state.point.to_vec())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("time-reversal return error {err:.2e}\n");

    let times: Vec<f64> = (1..=10).map(|i| i as f64).collect();
    let states = dynamics::sample_trajectory(&model, &start, &times, 1e-12)?;
    dynamics::write_trajectory_csv(&model, &states, std::io::stdout())?;
    Ok(())
}
