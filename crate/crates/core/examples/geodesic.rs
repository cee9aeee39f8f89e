//! Geodesic between a bump and a rotated anisotropic field: sample slices and
//! check that the energy is spread evenly over time.

use kb_core::measure::{synth_measure, Generator};
use kb_core::solver::sample_path;
use kb_core::{solve, GridSpec, Result, SolverConfig};

fn main() -> Result<()> {
    let grid = GridSpec::new(2, 8)?;
    let g0 = synth_measure(
        grid,
        &Generator::Bump {
            center: vec![0.25, 0.25],
            width: 0.12,
            matrix: vec![vec![1.0, 0.0], vec![0.0, 0.5]],
        },
        0,
    )?;
    let g1 = synth_measure(
        grid,
        &Generator::Rotating {
            matrix: vec![vec![1.5, 0.0], vec![0.0, 0.3]],
            profile: 1.0,
        },
        5,
    )?;
    let cfg = SolverConfig {
        nt: 10,
        ..SolverConfig::default()
    };
    let (report, path) = solve(&g0, &g1, &cfg)?;
    println!(
        "distance {:.6}  residual {:.2e}",
        report.distance, report.residual
    );

    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let g = sample_path(&path, t);
        let peak = g.values().iter().map(|v| v.trace()).fold(0.0, f64::max);
        println!(
            "t = {t:.2}  mass {:.4}  max trace {peak:.4}",
            g.total_mass()
        );
    }
    if let Some(e) = path.interval_energies() {
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        let spread = e.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max) / mean;
        println!(
            "interval energies vary by {:.2}% around the mean",
            100.0 * spread
        );
    }
    Ok(())
}
