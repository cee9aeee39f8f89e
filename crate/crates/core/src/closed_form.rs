//! Closed-form distances and geodesics: the Bures metric between matrices,
//! explicit geodesics between commuting constant pairs, the geodesic to the
//! zero measure, and the square-root interpolation upper bound.

use crate::error::{KbError, Result};
use crate::linalg::{psd_apply_fn, riccati_solve, Mat, PsdMatrix, SpectralFn, SymMatrix};
use crate::measure::MatrixMeasure;
use crate::solver::{path_energy, sqrt_interpolation_path, TimeQuadrature, TransportPath};

/// Bures distance with the normalization of the transport problem:
/// `d² = 4 (Tr P0 + Tr P1 - 2 Tr (√P0 P1 √P0)^{1/2})`.
pub fn bures_distance(p0: &PsdMatrix, p1: &PsdMatrix) -> Result<f64> {
    if p0.n() != p1.n() {
        return Err(KbError::Input(format!(
            "bures: size mismatch {} vs {}",
            p0.n(),
            p1.n()
        )));
    }
    // Tr (√P0 P1 √P0)^{1/2} is the nuclear norm of √P0 √P1; singular values
    // keep full precision where a second square root would lose half of it.
    let r0 = psd_apply_fn(p0.sym(), SpectralFn::Sqrt)?;
    let r1 = psd_apply_fn(p1.sym(), SpectralFn::Sqrt)?;
    let prod = *r0.mat() * *r1.mat();
    let n = p0.n();
    let fidelity: f64 = nalgebra::DMatrix::from_fn(n, n, |i, j| prod[(i, j)])
        .singular_values()
        .sum();
    let mut rad = p0.trace() + p1.trace() - 2.0 * fidelity;
    let scale = 1.0 + p0.trace() + p1.trace();
    if rad < 0.0 {
        if rad < -1e-12 * scale {
            return Err(KbError::Numeric(format!(
                "bures radicand {rad:e} is negative"
            )));
        }
        rad = 0.0;
    }
    Ok(2.0 * rad.sqrt())
}

/// Point at time `t` on the Bures geodesic `((1-t)I + tX) P0 ((1-t)I + tX)`,
/// `X P0 X = P1`.
pub fn bures_geodesic_point(p0: &PsdMatrix, p1: &PsdMatrix, t: f64) -> Result<PsdMatrix> {
    if !(0.0..=1.0).contains(&t) {
        return Err(KbError::Input(format!("time {t} outside [0, 1]")));
    }
    if t == 0.0 {
        return Ok(*p0);
    }
    let x = riccati_solve(p0.sym(), p1.sym())?;
    let n = p0.n();
    let m = Mat::identity(n) * (1.0 - t) + *x.mat() * t;
    Ok(PsdMatrix::assume(p0.sym().congruence(&m)))
}

/// Spatially constant matrices `A0`, `A1` acting on a reference measure `G*`
/// through `g(A) = A G* A`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantPair {
    pub a0: PsdMatrix,
    pub a1: PsdMatrix,
    pub gstar: MatrixMeasure,
}

impl ConstantPair {
    pub fn new(a0: PsdMatrix, a1: PsdMatrix, gstar: MatrixMeasure) -> Result<Self> {
        if a0.n() != gstar.size() || a1.n() != gstar.size() {
            return Err(KbError::Input(
                "constant pair: matrix sizes differ from G*".into(),
            ));
        }
        Ok(ConstantPair { a0, a1, gstar })
    }

    /// `|A0 A1 - A1 A0| ≤ 1e-12 |A0| |A1|`.
    pub fn is_commuting(&self) -> bool {
        let (a, b) = (*self.a0.mat(), *self.a1.mat());
        let comm = (a * b - b * a).frob_norm();
        comm <= 1e-12 * a.frob_norm() * b.frob_norm()
    }

    fn require_commuting(&self) -> Result<()> {
        if self.is_commuting() {
            Ok(())
        } else {
            Err(KbError::Precondition("A0 and A1 do not commute".into()))
        }
    }

    /// `g(A) = A G* A` cell by cell.
    pub fn embed(&self, a: &PsdMatrix) -> MatrixMeasure {
        let vals = self
            .gstar
            .values()
            .iter()
            .map(|g| PsdMatrix::assume(g.sym().congruence(a.mat())))
            .collect();
        MatrixMeasure::from_psd_unchecked(*self.gstar.grid(), vals)
    }

    pub fn start(&self) -> MatrixMeasure {
        self.embed(&self.a0)
    }

    pub fn end(&self) -> MatrixMeasure {
        self.embed(&self.a1)
    }
}

/// `d² = 4 ∫ dG* : (A1 - A0)²` for commuting `A0`, `A1`.
pub fn commuting_distance(pair: &ConstantPair) -> Result<f64> {
    pair.require_commuting()?;
    let diff = *pair.a1.mat() - *pair.a0.mat();
    let sq = diff * diff;
    let h = pair.gstar.grid().cell_volume();
    let total: f64 = pair
        .gstar
        .values()
        .iter()
        .map(|g| g.mat().frob_dot(&sq))
        .sum();
    Ok((4.0 * total * h).max(0.0).sqrt())
}

/// `g(t A1 + (1-t) A0)`.
pub fn commuting_geodesic_point(pair: &ConstantPair, t: f64) -> Result<MatrixMeasure> {
    pair.require_commuting()?;
    if !(0.0..=1.0).contains(&t) {
        return Err(KbError::Input(format!("time {t} outside [0, 1]")));
    }
    if t == 0.0 {
        return Ok(pair.start());
    }
    if t == 1.0 {
        return Ok(pair.end());
    }
    let a = SymMatrix::from_mat_sym(&(*pair.a0.mat() * (1.0 - t) + *pair.a1.mat() * t));
    Ok(pair.embed(&PsdMatrix::assume(a)))
}

/// The geodesic `(1-t)² G` to the zero measure and the distance `2√m`.
pub fn geodesic_to_zero(g: &MatrixMeasure, t: f64) -> Result<(MatrixMeasure, f64)> {
    if !(0.0..=1.0).contains(&t) {
        return Err(KbError::Input(format!("time {t} outside [0, 1]")));
    }
    let point = g.scale_measure(1.0 - t);
    Ok((point, 2.0 * g.total_mass().sqrt()))
}

/// Energy of the square-root interpolation `G_t = ((1-t)√G0 + t√G1)²`.
#[derive(Clone, Debug)]
pub struct SqrtPathEnergy {
    pub energy: f64,
    /// Shift added to singular interval coefficients before the Lyapunov solves.
    pub epsilon: f64,
    /// The discrete path; frames via [`crate::solver::sample_path`].
    pub path: TransportPath,
}

/// Discrete energy of the square-root interpolation path with `nt` steps,
/// an upper bound for the squared distance (up to discretization).
pub fn sqrt_path_energy(
    g0: &MatrixMeasure,
    g1: &MatrixMeasure,
    nt: usize,
) -> Result<SqrtPathEnergy> {
    g0.check_same_shape(g1)?;
    if nt == 0 {
        return Err(KbError::Input("need at least one time step".into()));
    }
    let path = sqrt_interpolation_path(g0, g1, nt, TimeQuadrature::default())?;
    let energy = path_energy(&path)?;
    let epsilon = 1e-9 * path.scale();
    Ok(SqrtPathEnergy {
        energy,
        epsilon,
        path,
    })
}

/// `√(Σ_cells d_B(G0, G1)² h)`: the reaction-only distance if the problem
/// decouples pointwise.
pub fn pointwise_hellinger_distance(g0: &MatrixMeasure, g1: &MatrixMeasure) -> Result<f64> {
    g0.check_same_shape(g1)?;
    let h = g0.grid().cell_volume();
    let mut total = 0.0;
    for (a, b) in g0.values().iter().zip(g1.values()) {
        total += bures_distance(a, b)?.powi(2);
    }
    Ok((total * h).sqrt())
}
