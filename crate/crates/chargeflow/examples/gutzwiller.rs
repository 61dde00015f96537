//! Periodic-orbit peaks in the level dependence of mu, matched to holonomies.

use chargeflow::geometry::Model;
use chargeflow::reduction::{self, OrbitAtlas, ShootingConfig};
use chargeflow::trace::{self, TestFunction};

fn main() -> chargeflow::Result<()> {
    let model = Model::flat_u1(1.0, 1.0 / 3.0, 0.0);
    let e = 2.0;
    let atlas = OrbitAtlas {
        energy: e,
        orbits: reduction::find_periodic_orbits(&model, e, &ShootingConfig::default())?,
    };
    // Centre the test function on the winding orbits' period.
    let phi = TestFunction::gaussian(atlas.orbits[0].period, 1.0);
    let ms: Vec<u32> = (100..356).collect();
    let series = trace::flat_series(&model, e, &phi, &ms)?;
    let weyl = trace::smooth_part(&series, 1);
    let fit = trace::gutzwiller_fit(&series, &weyl, &atlas, 0.3)?;
    for p in &fit.peaks {
        println!(
            "peak {:.5} rad: orbit {:?} {:?}, amplitude {:.5} vs predicted {:.5}",
            p.angle,
            p.matched_orbit,
            p.orientation,
            p.fitted_amplitude.unwrap_or(p.dft_amplitude),
            p.predicted_amplitude.unwrap_or(f64::NAN)
        );
    }
    fit.write_csv(std::io::stdout())?;
    Ok(())
}
