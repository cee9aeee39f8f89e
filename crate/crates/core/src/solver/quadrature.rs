use serde::{Deserialize, Serialize};

use crate::linalg::{psd_apply_fn, Mat, SpectralFn, SymMatrix};

/// How the energy coefficient of a time interval is sampled from the two
/// node values `G_k`, `G_{k+1}` of the linear-in-time interpolant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeQuadrature {
    /// One sample at the average `½(G_k + G_{k+1})`.
    Midpoint,
    /// Two Gauss-Legendre samples of the interpolant.
    #[default]
    Gauss2,
}

const GAUSS_OFFSET: f64 = 0.288_675_134_594_812_9; // 1/(2√3)

impl TimeQuadrature {
    /// `(s, w)` pairs: sample `(1-s) G_k + s G_{k+1}` with weight `w`.
    pub fn points(&self) -> &'static [(f64, f64)] {
        const MID: [(f64, f64); 1] = [(0.5, 1.0)];
        const GAUSS: [(f64, f64); 2] = [(0.5 - GAUSS_OFFSET, 0.5), (0.5 + GAUSS_OFFSET, 0.5)];
        match self {
            TimeQuadrature::Midpoint => &MID,
            TimeQuadrature::Gauss2 => &GAUSS,
        }
    }

    pub fn len(&self) -> usize {
        self.points().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Effective coefficient `P` with `Σ w_i Tr(G_i⁻¹ X Xᵀ) = Tr(P⁻¹ X Xᵀ)`,
    /// i.e. the weighted harmonic mean of the samples. Samples are shifted by
    /// `eps·I` before inversion.
    pub fn effective_coefficient(
        &self,
        g0: &SymMatrix,
        g1: &SymMatrix,
        eps: f64,
    ) -> Option<SymMatrix> {
        let n = g0.n();
        if let [(s, _)] = self.points() {
            return Some(sample(g0, g1, *s).add(&SymMatrix::identity(n).scale(eps)));
        }
        let mut acc = Mat::zeros(n);
        for &(s, w) in self.points() {
            let gi = sample(g0, g1, s).add(&SymMatrix::identity(n).scale(eps));
            let inv = psd_apply_fn(&gi, SpectralFn::Inv).ok()?;
            acc += *inv.mat() * w;
        }
        psd_apply_fn(&SymMatrix::from_mat_sym(&acc), SpectralFn::Inv).ok()
    }
}

/// `(1-s) a + s b`.
#[inline]
pub(crate) fn sample(a: &SymMatrix, b: &SymMatrix, s: f64) -> SymMatrix {
    a.scale(1.0 - s).add(&b.scale(s))
}

/// Relative eigenvalue level below which a direction of `G` counts as null.
pub(crate) const NULL_REL: f64 = 1e-13;

/// `Tr(G⁺ (q qᵀ + R Rᵀ))` with `G` pseudo-inverted on its null space. Returns
/// `None` when momentum has a component along a null direction beyond
/// `null_tol` (infinite energy). Negative eigenvalues count as null.
pub fn perspective_value(g: &SymMatrix, q: &[f64], r: &Mat, null_tol: f64) -> Option<f64> {
    let n = g.n();
    let e = g.eigen();
    let vals = e.values();
    let lmax = vals[0].max(0.0);
    let v = &e.vectors;
    let mut total = 0.0;
    for i in 0..n {
        // component of the momentum along eigenvector i
        let mut mass = 0.0;
        let pq: f64 = (0..q.len()).map(|a| v[(a, i)] * q[a]).sum();
        mass += pq * pq;
        for c in 0..n {
            let pr: f64 = (0..n).map(|a| v[(a, i)] * r[(a, c)]).sum();
            mass += pr * pr;
        }
        let lam = vals[i];
        if lam <= NULL_REL * lmax || lam <= 0.0 {
            if mass.sqrt() > null_tol {
                return None;
            }
        } else {
            total += mass / lam;
        }
    }
    Some(total)
}
