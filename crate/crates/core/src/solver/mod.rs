//! Dynamic computation of the distance by convex optimization over discrete
//! paths `(G, q, R)` subject to the continuity equation.

mod path;
mod pdhg;
mod projection;
mod prox;
mod quadrature;

use serde::{Deserialize, Serialize};

use crate::error::{KbError, Result};
use crate::linalg::{lyapunov_solve, psd_apply_fn, SpectralFn, SymMatrix};
use crate::measure::MatrixMeasure;

pub use path::{continuity_residual, path_energy, sample_path, TransportPath};
pub use projection::{project_onto_continuity, ContinuityProjector, DualField};
pub use prox::{cell_prox, cell_prox_from, prox_kkt_residual, ProxPoint};
pub use quadrature::{perspective_value, TimeQuadrature};

/// Which distance the solver computes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Transport and reaction.
    #[default]
    Kb,
    /// Reaction only (`q ≡ 0`).
    Hellinger,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Number of time intervals.
    pub nt: usize,
    pub max_iter: usize,
    /// Primal step; `None` picks a value from the operator norm and the data scale.
    pub tau: Option<f64>,
    /// Dual step; `None` picks `0.95² / (τ ‖K‖²)`.
    pub sigma: Option<f64>,
    /// Over-relaxation of the primal extrapolation.
    pub theta: f64,
    /// Stop when the relative energy change per iteration falls below this...
    pub tol_energy: f64,
    /// ...and the relative primal gap falls below this.
    pub tol_residual: f64,
    pub mode: Mode,
    /// Seed of the power iteration estimating the operator norm.
    pub seed: u64,
    pub quadrature: TimeQuadrature,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            nt: 16,
            max_iter: 5000,
            tau: None,
            sigma: None,
            theta: 1.0,
            tol_energy: 1e-7,
            tol_residual: 1e-5,
            mode: Mode::Kb,
            seed: 0,
            quadrature: TimeQuadrature::Gauss2,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nt < 2 {
            return Err(KbError::Input(format!("nt must be >= 2, got {}", self.nt)));
        }
        if self.max_iter == 0 {
            return Err(KbError::Input("max_iter must be positive".into()));
        }
        for (name, v) in [("tau", self.tau), ("sigma", self.sigma)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(KbError::Input(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(KbError::Input(format!(
                "theta must lie in [0, 1], got {}",
                self.theta
            )));
        }
        if !(self.tol_energy > 0.0 && self.tol_residual > 0.0) {
            return Err(KbError::Input("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// One line of the iteration log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Energy of the prox point.
    pub energy: f64,
    /// Relative distance between the prox point and the feasible iterate.
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    /// `√energy`.
    pub distance: f64,
    /// Discrete energy of the returned path.
    pub energy: f64,
    /// Continuity residual of the returned path.
    pub residual: f64,
    /// Final relative gap between the prox point and the feasible iterate.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Step sizes actually used.
    pub tau: f64,
    pub sigma: f64,
    pub log: Vec<IterationRecord>,
}

/// Check shapes and the mode requirements shared by `discretize` and `solve`.
fn check_problem(g0: &MatrixMeasure, g1: &MatrixMeasure, cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    g0.check_same_shape(g1)?;
    if cfg.mode == Mode::Kb && !g0.grid().is_point() && g0.size() != g0.grid().dim() {
        return Err(KbError::Input(
            "transport requires the matrix size to equal the spatial dimension".into(),
        ));
    }
    for m in [g0, g1] {
        if m.values().iter().any(|v| !v.mat().is_finite()) {
            return Err(KbError::Input("measure has non-finite entries".into()));
        }
    }
    Ok(())
}

/// Initial iterate: nodes on the square-root interpolation
/// `G_t = ((1-t)√G0 + t√G1)²`, `q = 0`, and `R = P U` with `U` the Lyapunov
/// potential of the node increments (`P` the interval coefficient), so the
/// continuity equation holds exactly.
pub fn discretize(
    g0: &MatrixMeasure,
    g1: &MatrixMeasure,
    cfg: &SolverConfig,
) -> Result<TransportPath> {
    check_problem(g0, g1, cfg)?;
    sqrt_interpolation_path(g0, g1, cfg.nt, cfg.quadrature)
}

pub(crate) fn sqrt_interpolation_path(
    g0: &MatrixMeasure,
    g1: &MatrixMeasure,
    nt: usize,
    quadrature: TimeQuadrature,
) -> Result<TransportPath> {
    let mut path = TransportPath::with_endpoints(g0, g1, nt, quadrature)?;
    let cells = g0.grid().cells();
    let roots = |m: &MatrixMeasure| -> Result<Vec<SymMatrix>> {
        m.values()
            .iter()
            .map(|v| psd_apply_fn(v.sym(), SpectralFn::Sqrt))
            .collect()
    };
    let (r0, r1) = (roots(g0)?, roots(g1)?);
    for k in 1..nt {
        let t = k as f64 / nt as f64;
        for c in 0..cells {
            if g0.value(c) == g1.value(c) {
                path.set_node(k, c, g0.value(c).sym());
                continue;
            }
            let s = r0[c].scale(1.0 - t).add(&r1[c].scale(t));
            path.set_node(k, c, &SymMatrix::from_mat_sym(&(*s.mat() * *s.mat())));
        }
    }
    let top = path.scale();
    let eps = 1e-9 * top.max(f64::MIN_POSITIVE);
    let inv_dt = nt as f64;
    for k in 0..nt {
        for c in 0..cells {
            let a = path.node(k, c);
            let b = path.node(k + 1, c);
            let d = b.sub(&a).scale(inv_dt);
            if d.frob_norm() == 0.0 {
                continue;
            }
            let p = quadrature
                .effective_coefficient(&a, &b, eps)
                .ok_or_else(|| KbError::Numeric("degenerate interval coefficient".into()))?;
            let u = lyapunov_solve(&p, &d)?;
            path.set_reaction(k, c, &(*p.mat() * *u.mat()));
        }
    }
    Ok(path)
}

/// Minimize the discrete energy between `g0` and `g1`.
///
/// The pair is solved in a fixed order (lexicographic on the cell data) and the
/// path reversed when needed, so swapping the arguments gives the same report.
/// Returns a non-converged report (not an error) when `max_iter` is reached.
pub fn solve(
    g0: &MatrixMeasure,
    g1: &MatrixMeasure,
    cfg: &SolverConfig,
) -> Result<(SolverReport, TransportPath)> {
    check_problem(g0, g1, cfg)?;
    let (a, b) = (g0.to_upper_vec(), g1.to_upper_vec());
    let swap = a
        .iter()
        .zip(&b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .is_some_and(|o| o.is_gt());
    if swap {
        let (report, path) = solve_ordered(g1, g0, cfg)?;
        return Ok((report, path.reversed()));
    }
    solve_ordered(g0, g1, cfg)
}

fn solve_ordered(
    g0: &MatrixMeasure,
    g1: &MatrixMeasure,
    cfg: &SolverConfig,
) -> Result<(SolverReport, TransportPath)> {
    let init = sqrt_interpolation_path(g0, g1, cfg.nt, cfg.quadrature)?;
    if g0.total_mass() == 0.0 && g1.total_mass() == 0.0 {
        let report = SolverReport {
            distance: 0.0,
            energy: 0.0,
            residual: 0.0,
            gap: 0.0,
            iterations: 0,
            converged: true,
            tau: 0.0,
            sigma: 0.0,
            log: Vec::new(),
        };
        return Ok((report, init));
    }
    pdhg::run(init, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::linalg::PsdMatrix;

    #[test]
    fn discretize_constant_pair_is_static() {
        let grid = GridSpec::new(1, 8).unwrap();
        let g = MatrixMeasure::constant(grid, PsdMatrix::diag(&[2.0]).unwrap()).unwrap();
        let path = discretize(&g, &g, &SolverConfig::default()).unwrap();
        assert!(path.q.iter().all(|v| *v == 0.0));
        assert!(path.r.iter().all(|v| *v == 0.0));
        assert_eq!(path_energy(&path).unwrap(), 0.0);
    }

    #[test]
    fn discretize_is_feasible() {
        let grid = GridSpec::new(2, 4).unwrap();
        let a = MatrixMeasure::from_fn(grid, |x| {
            SymMatrix::from_rows(&[&[1.0 + x[0], 0.2], &[0.2, 1.0 + x[1]]]).unwrap()
        })
        .unwrap();
        let b = a.scale_measure(0.5);
        let cfg = SolverConfig {
            nt: 4,
            ..Default::default()
        };
        let path = discretize(&a, &b, &cfg).unwrap();
        assert!(continuity_residual(&path) < 1e-12);
        assert_eq!(path.slice(0), a);
        assert_eq!(path.slice(4), b);
    }

    #[test]
    fn rejects_bad_configs() {
        let grid = GridSpec::new(1, 4).unwrap();
        let g = MatrixMeasure::zeros(grid, 1);
        for cfg in [
            SolverConfig {
                nt: 1,
                ..Default::default()
            },
            SolverConfig {
                tau: Some(-1.0),
                ..Default::default()
            },
            SolverConfig {
                theta: 2.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(solve(&g, &g, &cfg), Err(KbError::Input(_))));
        }
        let other = MatrixMeasure::zeros(GridSpec::new(1, 8).unwrap(), 1);
        assert!(solve(&g, &other, &SolverConfig::default()).is_err());
    }

    #[test]
    fn swapped_arguments_give_the_same_report() {
        let grid = GridSpec::new(1, 8).unwrap();
        let a =
            MatrixMeasure::from_fn(grid, |x| SymMatrix::diag(&[1.0 + 0.5 * (6.0 * x[0]).sin()]))
                .unwrap();
        let b = a.scale_measure(1.3);
        let cfg = SolverConfig {
            nt: 4,
            max_iter: 50,
            ..Default::default()
        };
        let (r0, p0) = solve(&a, &b, &cfg).unwrap();
        let (r1, p1) = solve(&b, &a, &cfg).unwrap();
        assert_eq!(r0, r1);
        assert_eq!(p0.reversed(), p1);
        assert_eq!(p1.start(), &b);
        assert!(continuity_residual(&p1) < 1e-10);
    }

    #[test]
    fn zero_endpoints_short_circuit() {
        let grid = GridSpec::new(2, 4).unwrap();
        let z = MatrixMeasure::zeros(grid, 2);
        let (rep, _) = solve(&z, &z, &SolverConfig::default()).unwrap();
        assert_eq!(rep.distance, 0.0);
        assert_eq!(rep.iterations, 0);
    }
}
