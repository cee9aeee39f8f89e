//! Transport distance between two smooth random fields on the 2-torus.

use kb_core::measure::{synth_measure, Generator};
use kb_core::{solve, GridSpec, Result, SolverConfig};

fn main() -> Result<()> {
    let grid = GridSpec::new(2, 8)?;
    let smooth = Generator::Smooth {
        floor: 0.4,
        amplitude: 1.0,
    };
    let g0 = synth_measure(grid, &smooth, 1)?;
    let g1 = synth_measure(grid, &smooth, 2)?;

    let cfg = SolverConfig {
        nt: 8,
        ..SolverConfig::default()
    };
    let (report, _) = solve(&g0, &g1, &cfg)?;
    println!("masses     {:.4} {:.4}", g0.total_mass(), g1.total_mass());
    println!("distance   {:.6}", report.distance);
    println!("residual   {:.2e}", report.residual);
    println!(
        "iterations {} (converged: {})",
        report.iterations, report.converged
    );

    // the distance never exceeds the one to the zero measure and back
    let bound = 2.0 * (g0.total_mass().sqrt() + g1.total_mass().sqrt());
    println!("bound      {bound:.6}");
    Ok(())
}
