//! Cone structure: split measures into radius and unit-mass base, compute the
//! spherical distance, and check the scaling law.

use kb_core::cone::{
    cone_distance_formula, scaling_identity_residual, spherical_distance, ConePoint,
};
use kb_core::measure::{synth_measure, Generator};
use kb_core::{solve, GridSpec, Result, SolverConfig};

fn main() -> Result<()> {
    let grid = GridSpec::new(1, 16)?;
    let a = synth_measure(
        grid,
        &Generator::Smooth {
            floor: 0.5,
            amplitude: 1.0,
        },
        3,
    )?;
    let b = synth_measure(
        grid,
        &Generator::Bump {
            center: vec![0.3],
            width: 0.1,
            matrix: vec![vec![2.0]],
        },
        0,
    )?;
    let cfg = SolverConfig {
        nt: 8,
        ..SolverConfig::default()
    };

    let (pa, pb) = (ConePoint::from_measure(&a)?, ConePoint::from_measure(&b)?);
    println!("radii               {:.4} {:.4}", pa.radius(), pb.radius());
    let (theta, rep) = spherical_distance(&a, &b, &cfg)?;
    println!("spherical distance  {theta:.6}");
    println!("unit-mass distance  {:.6}", rep.distance);
    // d/2 is the cone distance over the angle θ/2
    let half = cone_distance_formula(pa.radius(), pb.radius(), theta / 2.0)?;
    let (direct, _) = solve(&a, &b, &cfg)?;
    println!("cone prediction     {:.6}", 2.0 * half);
    println!("direct solve        {:.6}", direct.distance);

    let (ua, ub) = (pa.base().unwrap(), pb.base().unwrap());
    let check = scaling_identity_residual(ua, ub, 1.5, 0.5, &cfg)?;
    println!(
        "scaling law         lhs {:.6} rhs {:.6} residual {:.2e}",
        check.lhs, check.rhs, check.residual
    );
    Ok(())
}
