//! Closed-form reference values: the Bures distance and geodesic between
//! matrices, and explicit geodesics between constant measures.

use kb_core::closed_form::{
    bures_distance, bures_geodesic_point, commuting_distance, commuting_geodesic_point,
    geodesic_to_zero, ConstantPair,
};
use kb_core::linalg::PsdMatrix;
use kb_core::{GridSpec, MatrixMeasure, Result};

fn main() -> Result<()> {
    let p0 = PsdMatrix::from_rows(&[&[2.0, 0.5], &[0.5, 1.0]])?;
    let p1 = PsdMatrix::from_rows(&[&[1.0, -0.3], &[-0.3, 3.0]])?;
    let d = bures_distance(&p0, &p1)?;
    println!("bures distance        {d:.6}");
    for t in [0.25, 0.5, 0.75] {
        let pt = bures_geodesic_point(&p0, &p1, t)?;
        println!(
            "  t = {t:.2}  d(P0, Pt) / d = {:.6}",
            bures_distance(&p0, &pt)? / d
        );
    }

    let grid = GridSpec::new(2, 8)?;
    let gstar = MatrixMeasure::constant(grid, PsdMatrix::identity(2))?;
    let pair = ConstantPair::new(
        PsdMatrix::diag(&[1.0, 2.0])?,
        PsdMatrix::diag(&[3.0, 0.5])?,
        gstar,
    )?;
    println!(
        "commuting pair        d = {:.6}",
        commuting_distance(&pair)?
    );
    let mid = commuting_geodesic_point(&pair, 0.5)?;
    println!("  midpoint mass       {:.6}", mid.total_mass());

    let (half, d0) = geodesic_to_zero(&pair.end(), 0.5)?;
    println!(
        "distance to zero      {d0:.6} (mass {:.3})",
        pair.end().total_mass()
    );
    println!("  halfway mass        {:.6}", half.total_mass());
    Ok(())
}
