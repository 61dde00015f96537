//! Newton shooting for relative periodic orbits; prints the orbit atlas as JSON.

use chargeflow::geometry::Model;
use chargeflow::reduction::{self, OrbitAtlas, ShootingConfig};

fn main() -> chargeflow::Result<()> {
    let e = 2.0;
    let flux = Model::flat_u1(1.0, 1.0 / 3.0, 0.0);
    let orbits = reduction::find_periodic_orbits(&flux, e, &ShootingConfig::default())?;
    for o in &orbits {
        println!(
            "winding {:2}  T = {:.10}  arg Hol = {:+.6}",
            o.winding,
            o.period,
            o.holonomy.arg()
        );
    }

    // A librating loop in the lapse well.
    let lapse = Model::variable_lapse_u1(1.0, 0.1);
    let cfg = ShootingConfig {
        windings: vec![0],
        ..Default::default()
    };
    let atlas = OrbitAtlas {
        energy: 1.0,
        orbits: reduction::find_periodic_orbits(&lapse, 1.0, &cfg)?,
    };
    println!("{}", atlas.to_json()?);
    Ok(())
}
