use crate::error::{KbError, Result};
use crate::grid::{GridSpec, Spectral};
use crate::linalg::{sym_len, Mat, SymMatrix};
use crate::measure::MatrixMeasure;

use super::quadrature::{perspective_value, sample, TimeQuadrature};

/// A discrete curve of matrix measures with its momenta.
///
/// `G` lives on the `nt + 1` time nodes, the transport momentum `q = G u` and
/// the reaction momentum `R = G U` live on the `nt` interval midpoints. Node
/// values are stored in Frobenius-orthonormal symmetric coordinates, `R` as a
/// full matrix (only its symmetric part enters the continuity equation).
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPath {
    pub(crate) grid: GridSpec,
    pub(crate) size: usize,
    pub(crate) nt: usize,
    pub(crate) quadrature: TimeQuadrature,
    pub(crate) g: Vec<f64>,
    pub(crate) q: Vec<f64>,
    pub(crate) r: Vec<f64>,
    /// Exact endpoint measures; node slices 0 and `nt` mirror them.
    pub(crate) start: MatrixMeasure,
    pub(crate) end: MatrixMeasure,
}

impl TransportPath {
    /// Path with pinned endpoints, zero interior nodes and zero momenta.
    pub fn with_endpoints(
        start: &MatrixMeasure,
        end: &MatrixMeasure,
        nt: usize,
        quadrature: TimeQuadrature,
    ) -> Result<Self> {
        start.check_same_shape(end)?;
        if nt == 0 {
            return Err(KbError::Input("need at least one time interval".into()));
        }
        let grid = *start.grid();
        let size = start.size();
        let cells = grid.cells();
        let mut path = TransportPath {
            grid,
            size,
            nt,
            quadrature,
            g: vec![0.0; (nt + 1) * cells * sym_len(size)],
            q: vec![0.0; nt * cells * grid.dim()],
            r: vec![0.0; nt * cells * size * size],
            start: start.clone(),
            end: end.clone(),
        };
        path.set_slice(0, start);
        path.set_slice(nt, end);
        Ok(path)
    }

    pub fn start(&self) -> &MatrixMeasure {
        &self.start
    }

    pub fn end(&self) -> &MatrixMeasure {
        &self.end
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.nt as f64
    }

    pub fn quadrature(&self) -> TimeQuadrature {
        self.quadrature
    }

    #[inline]
    pub(crate) fn s(&self) -> usize {
        sym_len(self.size)
    }

    #[inline]
    pub(crate) fn p(&self) -> usize {
        self.grid.dim()
    }

    pub fn node(&self, k: usize, cell: usize) -> SymMatrix {
        let s = self.s();
        let off = (k * self.grid.cells() + cell) * s;
        SymMatrix::from_coords(self.size, &self.g[off..off + s])
    }

    pub fn set_node(&mut self, k: usize, cell: usize, v: &SymMatrix) {
        let s = self.s();
        let off = (k * self.grid.cells() + cell) * s;
        v.write_coords(&mut self.g[off..off + s]);
    }

    pub fn transport(&self, k: usize, cell: usize) -> &[f64] {
        let p = self.p();
        let off = (k * self.grid.cells() + cell) * p;
        &self.q[off..off + p]
    }

    pub fn transport_mut(&mut self, k: usize, cell: usize) -> &mut [f64] {
        let p = self.p();
        let off = (k * self.grid.cells() + cell) * p;
        &mut self.q[off..off + p]
    }

    pub fn reaction(&self, k: usize, cell: usize) -> Mat {
        let m = self.size;
        let off = (k * self.grid.cells() + cell) * m * m;
        Mat::from_fn(m, |i, j| self.r[off + i * m + j])
    }

    pub fn set_reaction(&mut self, k: usize, cell: usize, v: &Mat) {
        let m = self.size;
        let off = (k * self.grid.cells() + cell) * m * m;
        for i in 0..m {
            for j in 0..m {
                self.r[off + i * m + j] = v[(i, j)];
            }
        }
    }

    /// Node slice `k` as a measure (clamped onto the PSD cone). The endpoint
    /// slices are returned exactly as given.
    pub fn slice(&self, k: usize) -> MatrixMeasure {
        if k == 0 {
            return self.start.clone();
        }
        if k == self.nt {
            return self.end.clone();
        }
        let vals = (0..self.grid.cells()).map(|c| self.node(k, c)).collect();
        MatrixMeasure::from_sym_clamped(self.grid, vals)
    }

    pub(crate) fn set_slice(&mut self, k: usize, m: &MatrixMeasure) {
        for c in 0..self.grid.cells() {
            self.set_node(k, c, m.value(c).sym());
        }
    }

    /// The same curve run backwards: nodes in reverse order, momenta negated.
    pub fn reversed(&self) -> TransportPath {
        let cells = self.grid.cells();
        let (s, p, m2) = (self.s(), self.p(), self.size * self.size);
        let mut out = self.clone();
        std::mem::swap(&mut out.start, &mut out.end);
        for k in 0..=self.nt {
            let (src, dst) = (k * cells * s, (self.nt - k) * cells * s);
            out.g[dst..dst + cells * s].copy_from_slice(&self.g[src..src + cells * s]);
        }
        for k in 0..self.nt {
            let j = self.nt - 1 - k;
            for (from, to, w) in [(&self.q, &mut out.q, p), (&self.r, &mut out.r, m2)] {
                let (src, dst) = (k * cells * w, j * cells * w);
                for i in 0..cells * w {
                    to[dst + i] = -from[src + i];
                }
            }
        }
        out
    }

    /// Clamp every interior node onto the PSD cone.
    pub fn clamp_psd(&mut self) {
        for k in 1..self.nt {
            for c in 0..self.grid.cells() {
                let v = self.node(k, c);
                self.set_node(k, c, v.psd_projection().sym());
            }
        }
    }

    /// Largest trace over nodes, used as the natural scale of the path.
    pub fn scale(&self) -> f64 {
        let mut m: f64 = 0.0;
        for k in 0..=self.nt {
            for c in 0..self.grid.cells() {
                m = m.max(self.node(k, c).trace().abs());
            }
        }
        m
    }

    /// Symmetric part of `∇q` at midpoint `k`, per cell, in symmetric coordinates.
    pub(crate) fn sym_gradient(&self, spectral: &Spectral, k: usize) -> Vec<f64> {
        let cells = self.grid.cells();
        let p = self.p();
        let s = self.s();
        let mut out = vec![0.0; cells * s];
        if p == 0 {
            return out;
        }
        // d[a][b] = ∂_b q_a
        let mut d = vec![vec![Vec::new(); p]; p];
        for (a, row) in d.iter_mut().enumerate() {
            let comp: Vec<f64> = (0..cells).map(|c| self.transport(k, c)[a]).collect();
            for (b, slot) in row.iter_mut().enumerate() {
                *slot = spectral.derivative(&comp, b);
            }
        }
        for c in 0..cells {
            let mut idx = 0;
            for a in 0..p {
                for b in a..p {
                    out[c * s + idx] = if a == b {
                        d[a][a][c]
                    } else {
                        std::f64::consts::FRAC_1_SQRT_2 * (d[a][b][c] + d[b][a][c])
                    };
                    idx += 1;
                }
            }
        }
        out
    }

    /// Per-interval energy rates `Σ_cells h Σ_i w_i Tr(G_i⁺ (q qᵀ + R Rᵀ))`;
    /// `None` when momentum sits on a null direction of `G`.
    pub fn interval_energies(&self) -> Option<Vec<f64>> {
        let h = self.grid.cell_volume();
        let scale = self.scale().max(1e-300);
        let null_tol = 1e-7 * scale.sqrt();
        let mut out = Vec::with_capacity(self.nt);
        for k in 0..self.nt {
            let mut e = 0.0;
            for c in 0..self.grid.cells() {
                let g0 = self.node(k, c);
                let g1 = self.node(k + 1, c);
                let q = self.transport(k, c);
                let r = self.reaction(k, c);
                for &(s, w) in self.quadrature.points() {
                    e += w * h * perspective_value(&sample(&g0, &g1, s), q, &r, null_tol)?;
                }
            }
            out.push(e);
        }
        Some(out)
    }
}

/// Root-mean-square violation of the discrete continuity equation
/// `(G_{k+1} - G_k)/Δt + (∇q_k)^Sym - R_k^Sym = 0`, with spectral `∇`.
pub fn continuity_residual(path: &TransportPath) -> f64 {
    let spectral = Spectral::new(path.grid);
    continuity_residual_with(path, &spectral)
}

pub(crate) fn continuity_residual_with(path: &TransportPath, spectral: &Spectral) -> f64 {
    let cells = path.grid.cells();
    let s = path.s();
    let inv_dt = path.nt as f64;
    let mut acc = 0.0;
    let mut rc = vec![0.0; s];
    for k in 0..path.nt {
        let grad = path.sym_gradient(spectral, k);
        for c in 0..cells {
            let a = (k * cells + c) * s;
            let b = ((k + 1) * cells + c) * s;
            SymMatrix::from_mat_sym(&path.reaction(k, c)).write_coords(&mut rc);
            for i in 0..s {
                let v = (path.g[b + i] - path.g[a + i]) * inv_dt + grad[c * s + i] - rc[i];
                acc += v * v;
            }
        }
    }
    (acc / (path.nt * cells) as f64).sqrt()
}

/// Discrete energy `Σ_k Δt · rate_k`.
pub fn path_energy(path: &TransportPath) -> Result<f64> {
    let rates = path.interval_energies().ok_or_else(|| {
        KbError::Numeric("momentum along a null direction of G: infinite energy".into())
    })?;
    Ok(rates.iter().sum::<f64>() * path.dt())
}

/// Linear interpolation between adjacent node slices, clamped onto the PSD cone.
pub fn sample_path(path: &TransportPath, t: f64) -> MatrixMeasure {
    let t = t.clamp(0.0, 1.0);
    let x = t * path.nt as f64;
    let k = (x.floor() as usize).min(path.nt);
    let frac = x - k as f64;
    if frac == 0.0 || k == path.nt {
        return path.slice(k);
    }
    let vals = (0..path.grid.cells())
        .map(|c| sample(&path.node(k, c), &path.node(k + 1, c), frac))
        .collect();
    MatrixMeasure::from_sym_clamped(path.grid, vals)
}
