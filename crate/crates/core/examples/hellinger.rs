//! Reaction-only distance: with transport switched off the problem decouples
//! into one Bures distance per cell.

use kb_core::closed_form::pointwise_hellinger_distance;
use kb_core::measure::{synth_measure, Generator};
use kb_core::solver::Mode;
use kb_core::{solve, GridSpec, Result, SolverConfig};

fn main() -> Result<()> {
    let grid = GridSpec::new(1, 16)?;
    let smooth = Generator::Smooth {
        floor: 0.3,
        amplitude: 1.0,
    };
    let g0 = synth_measure(grid, &smooth, 11)?;
    let g1 = synth_measure(grid, &smooth, 12)?;

    let cfg = SolverConfig {
        mode: Mode::Hellinger,
        nt: 8,
        ..SolverConfig::default()
    };
    let (hell, _) = solve(&g0, &g1, &cfg)?;
    let exact = pointwise_hellinger_distance(&g0, &g1)?;
    let (kb, _) = solve(
        &g0,
        &g1,
        &SolverConfig {
            nt: 8,
            ..SolverConfig::default()
        },
    )?;
    println!("hellinger (solver)     {:.6}", hell.distance);
    println!("hellinger (pointwise)  {exact:.6}");
    println!("with transport         {:.6}", kb.distance);
    Ok(())
}
