//! Dimensions, Casimirs and characters of the level-m representations.

use chargeflow::lie::{self, GroupData, OrbitWeight};

fn main() -> chargeflow::Result<()> {
    for g in [GroupData::u1(), GroupData::su2(), GroupData::su3()] {
        let lambda0 = if g.rank == 2 {
            g.weight_from_dynkin(&[1, 0])?
        } else {
            vec![1.0]
        };
        println!("{} (rank {}, dim {})", g.name, g.rank, g.dim);
        for m in 1..=4 {
            let w = OrbitWeight::new(lambda0.clone(), m);
            let angles = vec![0.3; g.rank];
            println!(
                "  m = {m}: d_m = {:3}  casimir = {:8.4}  chi(0.3) = {:.6}",
                lie::weyl_dimension(&g, &w)?,
                lie::casimir_eigenvalue(&g, &w)?,
                lie::character(&g, &w, &angles)?,
            );
        }
    }

    // Root data can also come from a file.
    let g2 = GroupData::parse_root_data(
        r#"
name = "su2-from-file"
rank = 1
roots = [[2.0]]
inner_norm = 0.5
"#,
    )?;
    let w = OrbitWeight::new(vec![1.0], 3);
    println!("{}: d_3 = {}", g2.name, lie::weyl_dimension(&g2, &w)?);
    Ok(())
}
