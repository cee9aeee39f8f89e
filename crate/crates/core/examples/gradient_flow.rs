//! Entropy and volume gradient flows from the same initial field.

use kb_core::flows::{flow_evolve, functional_value, stability_cap, Functional};
use kb_core::measure::{synth_measure, Generator};
use kb_core::{GridSpec, Result};

fn main() -> Result<()> {
    let grid = GridSpec::new(2, 8)?;
    let g0 = synth_measure(
        grid,
        &Generator::Smooth {
            floor: 0.5,
            amplitude: 0.5,
        },
        4,
    )?;
    let cap = stability_cap(&g0);
    println!("stability cap {cap:.3e}");

    for (f, steps) in [(Functional::Entropy, 400), (Functional::Volume, 200)] {
        let traj = flow_evolve(&g0, f, 0.5 * cap, steps, steps / 4)?;
        println!(
            "{f:?}: F {:.5} -> {:.5}",
            functional_value(&g0, f)?,
            traj.values.last().unwrap()
        );
        for (t, g) in traj.times.iter().zip(&traj.frames) {
            println!("  t = {t:.4}  mass {:.5}", g.total_mass());
        }
        println!("  dissipative: {}", traj.is_dissipative(1e-8));
    }
    Ok(())
}
