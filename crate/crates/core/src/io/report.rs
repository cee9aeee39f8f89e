//! JSON reports. Key order follows field order, so identical runs give
//! identical bytes.

use std::path::Path;

use serde::Serialize;

use crate::error::{KbError, Result};
use crate::flows::Functional;
use crate::solver::{Mode, SolverConfig, SolverReport};

#[derive(Clone, Debug, Serialize)]
pub struct DistanceReport {
    pub command: &'static str,
    pub version: &'static str,
    pub a: String,
    pub b: String,
    pub mode: Mode,
    pub mass_a: f64,
    pub mass_b: f64,
    pub distance: f64,
    pub energy: f64,
    pub residual: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub tau: f64,
    pub sigma: f64,
    pub config: SolverConfig,
}

impl DistanceReport {
    pub fn new(
        a: &str,
        b: &str,
        masses: (f64, f64),
        rep: &SolverReport,
        cfg: &SolverConfig,
    ) -> Self {
        DistanceReport {
            command: "distance",
            version: env!("CARGO_PKG_VERSION"),
            a: a.into(),
            b: b.into(),
            mode: cfg.mode,
            mass_a: masses.0,
            mass_b: masses.1,
            distance: rep.distance,
            energy: rep.energy,
            residual: rep.residual,
            gap: rep.gap,
            iterations: rep.iterations,
            converged: rep.converged,
            tau: rep.tau,
            sigma: rep.sigma,
            config: *cfg,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SphericalReport {
    pub command: &'static str,
    pub version: &'static str,
    pub a: String,
    pub b: String,
    pub radius_a: f64,
    pub radius_b: f64,
    pub spherical_distance: f64,
    /// Distance between the unit-mass normalizations.
    pub unit_distance: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub config: SolverConfig,
}

#[derive(Clone, Debug, Serialize)]
pub struct FrameEntry {
    pub index: usize,
    pub t: f64,
    pub file: String,
    pub mass: f64,
}

/// Index document written next to the geodesic frames.
#[derive(Clone, Debug, Serialize)]
pub struct GeodesicIndex {
    pub command: &'static str,
    pub version: &'static str,
    pub a: String,
    pub b: String,
    pub distance: f64,
    pub energy: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Energy of each time interval; constant along a geodesic.
    pub interval_energies: Vec<f64>,
    pub frames: Vec<FrameEntry>,
    pub config: SolverConfig,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowReport {
    pub command: &'static str,
    pub version: &'static str,
    pub a: String,
    pub functional: Functional,
    pub dt: f64,
    pub steps: usize,
    pub stability_cap: f64,
    pub dissipative: bool,
    /// Steps at which at least one cell hit the eigenvalue floor.
    pub floored_steps: usize,
    pub initial_value: f64,
    pub final_value: f64,
    pub frames: Vec<FrameEntry>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidateReport {
    pub command: &'static str,
    pub version: &'static str,
    pub a: String,
    pub valid: bool,
    pub dim: usize,
    pub n: usize,
    pub mass: Option<f64>,
    pub first_invalid_cell: Option<usize>,
    pub lambda_min: Option<f64>,
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| KbError::Numeric(format!("report: {e}")))
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut text = to_json(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
