//! Cone structure: every nonzero measure is `r²·Ĝ` with `Ĝ` of unit mass, and
//! `d_KB / 2` is the cone metric over the unit-mass sphere with `d_S / 2`.

use std::f64::consts::PI;

use crate::error::{KbError, Result};
use crate::measure::MatrixMeasure;
use crate::solver::{solve, SolverConfig};

/// A point of the cone: unit-mass base and radius, or the apex.
#[derive(Clone, Debug, PartialEq)]
pub struct ConePoint {
    base: Option<MatrixMeasure>,
    radius: f64,
}

impl ConePoint {
    /// Split `G = r² Ĝ`; the zero measure becomes the apex.
    pub fn from_measure(g: &MatrixMeasure) -> Result<Self> {
        if g.total_mass() == 0.0 {
            return Ok(ConePoint::apex());
        }
        let (base, radius) = g.normalize_to_unit_mass()?;
        Ok(ConePoint {
            base: Some(base),
            radius,
        })
    }

    pub fn apex() -> Self {
        ConePoint {
            base: None,
            radius: 0.0,
        }
    }

    pub fn base(&self) -> Option<&MatrixMeasure> {
        self.base.as_ref()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// `√(r0² + r1² - 2 r0 r1 cos θ)` for `θ ∈ [0, π]`.
pub fn cone_distance_formula(r0: f64, r1: f64, sphere_dist: f64) -> Result<f64> {
    if !(0.0..=PI).contains(&sphere_dist) {
        return Err(KbError::Input(format!(
            "angle {sphere_dist} outside [0, π]"
        )));
    }
    if r0 < 0.0 || r1 < 0.0 {
        return Err(KbError::Input("cone radii must be nonnegative".into()));
    }
    Ok((r0 * r0 + r1 * r1 - 2.0 * r0 * r1 * sphere_dist.cos())
        .max(0.0)
        .sqrt())
}

/// Spherical distance recovered from the transport distance `d` between unit-mass
/// measures: `2 arccos(1 - d²/8)`. Unit masses satisfy `d² ≤ 8`; larger
/// discrete values are clamped so the result stays in `[0, π]`.
pub fn spherical_from_unit_distance(d: f64) -> f64 {
    2.0 * (1.0 - d * d / 8.0).clamp(0.0, 1.0).acos()
}

/// Spherical distance between the unit-mass normalizations of `g0` and `g1`.
///
/// Returns the value and the solver report of the embedded solve.
pub fn spherical_distance(
    g0: &MatrixMeasure,
    g1: &MatrixMeasure,
    cfg: &SolverConfig,
) -> Result<(f64, crate::solver::SolverReport)> {
    let (b0, _) = g0.normalize_to_unit_mass()?;
    let (b1, _) = g1.normalize_to_unit_mass()?;
    let (report, _) = solve(&b0, &b1, cfg)?;
    Ok((spherical_from_unit_distance(report.distance), report))
}

/// Both sides of `d²(r0² G0, r1² G1) = r0 r1 d²(G0, G1) + 4 (r0 - r1)²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs - rhs| / (1 + rhs)`.
    pub residual: f64,
    pub converged: bool,
}

/// Check the cone scaling law with two solver runs. `g0`, `g1` must have unit
/// mass; radii are nonnegative (a zero radius gives the zero measure).
pub fn scaling_identity_residual(
    g0: &MatrixMeasure,
    g1: &MatrixMeasure,
    r0: f64,
    r1: f64,
    cfg: &SolverConfig,
) -> Result<ScalingCheck> {
    for (g, name) in [(g0, "G0"), (g1, "G1")] {
        let m = g.total_mass();
        if (m - 1.0).abs() > 1e-10 {
            return Err(KbError::domain(format!("{name} has mass {m}, expected 1")));
        }
    }
    if !(r0 >= 0.0 && r1 >= 0.0 && r0.is_finite() && r1.is_finite()) {
        return Err(KbError::Input(
            "radii must be finite and nonnegative".into(),
        ));
    }
    let (base, _) = solve(g0, g1, cfg)?;
    let (scaled, _) = solve(&g0.scale_measure(r0), &g1.scale_measure(r1), cfg)?;
    let lhs = scaled.energy;
    let rhs = r0 * r1 * base.energy + 4.0 * (r0 - r1) * (r0 - r1);
    Ok(ScalingCheck {
        lhs,
        rhs,
        residual: (lhs - rhs).abs() / (1.0 + rhs),
        converged: base.converged && scaled.converged,
    })
}
