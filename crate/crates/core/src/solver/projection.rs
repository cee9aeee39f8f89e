//! Euclidean projection onto the discrete continuity constraint.
//!
//! Per spatial frequency `ξ` the constraint reads `D_k + A q_k - R_k^Sym = 0`
//! with `D_k = (G_{k+1} - G_k)/Δt` and `A = i S(ξ)`, `S` the real symbol of
//! `q ↦ (∇q)^Sym` in orthonormal symmetric coordinates. Eliminating `R^Sym`
//! and `q` leaves, for the interior nodes,
//!
//! ```text
//! g_j + K (2g_j - g_{j-1} - g_{j+1}) / Δt² = a_j + K (z_{j-1} - z_j) / Δt
//! ```
//!
//! with `K = (I + S Sᵀ)⁻¹` and `z_k = e_k - A c_k` built from the targets.
//! `K` is diagonalized once per frequency, so each mode is a scalar
//! tridiagonal solve in time. The Fourier transform is unitary up to a
//! constant factor, so the per-frequency projection is the global one.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::grid::Spectral;
use crate::linalg::{sym_len, SymMatrix, MAX_SYM};

use super::path::TransportPath;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Multipliers of the continuity constraint, one symmetric matrix per
/// interval and cell (`R^Sym` after projection minus its target).
#[derive(Clone, Debug, PartialEq)]
pub struct DualField {
    nt: usize,
    cells: usize,
    size: usize,
    coords: Vec<f64>,
}

impl DualField {
    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn at(&self, k: usize, cell: usize) -> SymMatrix {
        let s = sym_len(self.size);
        let off = (k * self.cells + cell) * s;
        SymMatrix::from_coords(self.size, &self.coords[off..off + s])
    }

    /// Root-mean-square Frobenius norm over all entries.
    pub fn rms(&self) -> f64 {
        let n = (self.nt * self.cells).max(1) as f64;
        (self.coords.iter().map(|v| v * v).sum::<f64>() / n).sqrt()
    }
}

struct FreqData {
    /// `S(ξ)`, `s × p` row-major.
    sym: Vec<f64>,
    /// Eigenvectors of `K` (columns, row stride `MAX_SYM`) and eigenvalues.
    modes: [f64; MAX_SYM * MAX_SYM],
    kappa: [f64; MAX_SYM],
}

/// Precomputed per-frequency data for repeated projections of paths with
/// the same grid, size, `nt` and endpoints.
pub struct ContinuityProjector {
    spectral: Spectral,
    size: usize,
    nt: usize,
    transport: bool,
    s: usize,
    p: usize,
    cells: usize,
    freq: Vec<FreqData>,
    g_start: Vec<Complex64>,
    g_end: Vec<Complex64>,
}

impl ContinuityProjector {
    /// `transport = false` drops the transport momentum altogether (the
    /// constraint becomes `D_k = R_k^Sym` cell by cell).
    pub fn new(template: &TransportPath, transport: bool) -> Self {
        let grid = *template.grid();
        let size = template.size();
        let s = sym_len(size);
        let p = if transport { template.p() } else { 0 };
        let spectral = Spectral::new(grid);
        let cells = grid.cells();
        let freq = (0..cells)
            .map(|f| {
                let xi = spectral.symbol(f);
                let mut sym = vec![0.0; s * p];
                if p > 0 {
                    let mut row = 0;
                    for a in 0..size {
                        for b in a..size {
                            if a == b {
                                sym[row * p + a] = xi[a];
                            } else {
                                sym[row * p + a] = xi[b] * std::f64::consts::FRAC_1_SQRT_2;
                                sym[row * p + b] = xi[a] * std::f64::consts::FRAC_1_SQRT_2;
                            }
                            row += 1;
                        }
                    }
                }
                // K⁻¹ = I + S Sᵀ, diagonalized on the s-dimensional coordinate space
                let kinv = nalgebra::DMatrix::from_fn(s, s, |i, j| {
                    let mut v = if i == j { 1.0 } else { 0.0 };
                    for c in 0..p {
                        v += sym[i * p + c] * sym[j * p + c];
                    }
                    v
                });
                let e = kinv.symmetric_eigen();
                let mut kappa = [0.0; MAX_SYM];
                let mut modes = [0.0; MAX_SYM * MAX_SYM];
                for mu in 0..s {
                    kappa[mu] = 1.0 / e.eigenvalues[mu];
                    for i in 0..s {
                        modes[i * MAX_SYM + mu] = e.eigenvectors[(i, mu)];
                    }
                }
                FreqData { sym, modes, kappa }
            })
            .collect();
        let mut proj = ContinuityProjector {
            spectral,
            size,
            nt: template.nt(),
            transport,
            s,
            p,
            cells,
            freq,
            g_start: Vec::new(),
            g_end: Vec::new(),
        };
        proj.g_start = proj.to_hat(&template.g[..cells * s], s);
        let last = template.nt() * cells * s;
        proj.g_end = proj.to_hat(&template.g[last..last + cells * s], s);
        proj
    }

    /// Real `[cell][comp]` slice to frequency-major `[freq][comp]`.
    fn to_hat(&self, values: &[f64], ncomp: usize) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        if !self.transport || ncomp == 0 {
            return out;
        }
        let mut line = vec![ZERO; self.cells];
        for c in 0..ncomp {
            for (i, v) in line.iter_mut().enumerate() {
                *v = out[i * ncomp + c];
            }
            self.spectral.forward(&mut line);
            for (i, v) in line.iter().enumerate() {
                out[i * ncomp + c] = *v;
            }
        }
        out
    }

    fn hat_to_real(&self, values: &mut [Complex64], ncomp: usize, out: &mut [f64]) {
        if self.transport && ncomp > 0 {
            let mut line = vec![ZERO; self.cells];
            for c in 0..ncomp {
                for (i, v) in line.iter_mut().enumerate() {
                    *v = values[i * ncomp + c];
                }
                self.spectral.inverse(&mut line);
                for (i, v) in line.iter().enumerate() {
                    values[i * ncomp + c] = *v;
                }
            }
        }
        for (o, v) in out.iter_mut().zip(values.iter()) {
            *o = v.re;
        }
    }

    /// Projection of `target` (its interior nodes, `q` and `R`); endpoints
    /// are taken from the projector. The antisymmetric part of `R` is not
    /// constrained and passes through.
    pub fn project(&self, target: &TransportPath) -> (TransportPath, DualField) {
        let (s, p, cells, nt) = (self.s, self.p, self.cells, self.nt);
        let m = self.size;
        let tp = target.p();
        // frequency-major targets: a (interior nodes), c (q), e (R^Sym)
        let a_hat: Vec<Vec<Complex64>> = (1..nt)
            .map(|k| self.to_hat(&target.g[k * cells * s..(k + 1) * cells * s], s))
            .collect();
        let c_hat: Vec<Vec<Complex64>> = (0..nt)
            .map(|k| {
                if p == 0 {
                    Vec::new()
                } else {
                    self.to_hat(&target.q[k * cells * tp..(k + 1) * cells * tp], p)
                }
            })
            .collect();
        let e_real: Vec<Vec<f64>> = (0..nt)
            .map(|k| {
                let mut v = vec![0.0; cells * s];
                for c in 0..cells {
                    SymMatrix::from_mat_sym(&target.reaction(k, c))
                        .write_coords(&mut v[c * s..(c + 1) * s]);
                }
                v
            })
            .collect();
        let e_hat: Vec<Vec<Complex64>> = e_real.iter().map(|v| self.to_hat(v, s)).collect();

        let inv_dt = nt as f64;
        // per frequency: interior nodes, q, R^Sym
        let solved: Vec<(Vec<Complex64>, Vec<Complex64>, Vec<Complex64>)> = (0..cells)
            .into_par_iter()
            .map(|f| {
                let fd = &self.freq[f];
                let node_at = |k: usize, g: &[Complex64], i: usize| -> Complex64 {
                    if k == 0 {
                        self.g_start[f * s + i]
                    } else if k == nt {
                        self.g_end[f * s + i]
                    } else {
                        g[(k - 1) * s + i]
                    }
                };
                // z_k = e_k - i S c_k
                let mut z = vec![ZERO; nt * s];
                for k in 0..nt {
                    for i in 0..s {
                        let mut v = e_hat[k][f * s + i];
                        for b in 0..p {
                            v -= Complex64::new(0.0, fd.sym[i * p + b]) * c_hat[k][f * p + b];
                        }
                        z[k * s + i] = v;
                    }
                }
                // modal coordinates
                let to_modes = |v: &[Complex64]| -> [Complex64; MAX_SYM] {
                    let mut out = [ZERO; MAX_SYM];
                    for (mu, o) in out.iter_mut().enumerate().take(s) {
                        for i in 0..s {
                            *o += fd.modes[i * MAX_SYM + mu] * v[i];
                        }
                    }
                    out
                };
                let zm: Vec<[Complex64; MAX_SYM]> =
                    (0..nt).map(|k| to_modes(&z[k * s..(k + 1) * s])).collect();
                let am: Vec<[Complex64; MAX_SYM]> = (1..nt)
                    .map(|k| to_modes(&a_hat[k - 1][f * s..(f + 1) * s]))
                    .collect();
                let g0m = to_modes(&self.g_start[f * s..(f + 1) * s]);
                let g1m = to_modes(&self.g_end[f * s..(f + 1) * s]);
                let ni = nt - 1;
                let mut gm = vec![[ZERO; MAX_SYM]; ni];
                let mut rhs = vec![ZERO; ni];
                let mut cp = vec![0.0; ni];
                for mu in 0..s {
                    let kap = fd.kappa[mu];
                    let off = -kap * inv_dt * inv_dt;
                    let diag = 1.0 + 2.0 * kap * inv_dt * inv_dt;
                    for j in 1..nt {
                        let mut r = am[j - 1][mu] + (zm[j - 1][mu] - zm[j][mu]) * (kap * inv_dt);
                        if j == 1 {
                            r += g0m[mu] * (kap * inv_dt * inv_dt);
                        }
                        if j == nt - 1 {
                            r += g1m[mu] * (kap * inv_dt * inv_dt);
                        }
                        rhs[j - 1] = r;
                    }
                    // Thomas algorithm, constant coefficients
                    for j in 0..ni {
                        let denom = if j == 0 { diag } else { diag - off * cp[j - 1] };
                        cp[j] = off / denom;
                        rhs[j] = if j == 0 {
                            rhs[0] / denom
                        } else {
                            (rhs[j] - rhs[j - 1] * off) / denom
                        };
                    }
                    for j in (0..ni).rev() {
                        let v = if j + 1 < ni {
                            rhs[j] - gm[j + 1][mu] * cp[j]
                        } else {
                            rhs[j]
                        };
                        gm[j][mu] = v;
                    }
                }
                let mut g = vec![ZERO; ni * s];
                for j in 0..ni {
                    for i in 0..s {
                        let mut v = ZERO;
                        for mu in 0..s {
                            v += gm[j][mu] * fd.modes[i * MAX_SYM + mu];
                        }
                        g[j * s + i] = v;
                    }
                }
                let mut q = vec![ZERO; nt * p];
                let mut rs = vec![ZERO; nt * s];
                let mut dk = [ZERO; MAX_SYM];
                let mut w = [ZERO; MAX_SYM];
                for k in 0..nt {
                    for (i, d) in dk.iter_mut().enumerate().take(s) {
                        *d = (node_at(k + 1, &g, i) - node_at(k, &g, i)) * inv_dt;
                    }
                    if p > 0 {
                        // w = K (z_k - D_k), q_k = c_k - i Sᵀ w
                        let mut diff = [ZERO; MAX_SYM];
                        for i in 0..s {
                            diff[i] = z[k * s + i] - dk[i];
                        }
                        let dm = to_modes(&diff[..s]);
                        for (i, wi) in w.iter_mut().enumerate().take(s) {
                            let mut v = ZERO;
                            for mu in 0..s {
                                v += fd.modes[i * MAX_SYM + mu] * dm[mu] * fd.kappa[mu];
                            }
                            *wi = v;
                        }
                        for b in 0..p {
                            let mut v = c_hat[k][f * p + b];
                            for i in 0..s {
                                v -= Complex64::new(0.0, fd.sym[i * p + b]) * w[i];
                            }
                            q[k * p + b] = v;
                        }
                    }
                    for i in 0..s {
                        let mut v = dk[i];
                        for b in 0..p {
                            v += Complex64::new(0.0, fd.sym[i * p + b]) * q[k * p + b];
                        }
                        rs[k * s + i] = v;
                    }
                }
                (g, q, rs)
            })
            .collect();

        let mut out = target.clone();
        let ni = nt - 1;
        let mut buf = vec![ZERO; cells * s];
        let mut real = vec![0.0; cells * s];
        for j in 0..ni {
            for f in 0..cells {
                buf[f * s..(f + 1) * s].copy_from_slice(&solved[f].0[j * s..(j + 1) * s]);
            }
            let k = j + 1;
            self.hat_to_real(&mut buf, s, &mut out.g[k * cells * s..(k + 1) * cells * s]);
        }
        if p > 0 {
            let mut qbuf = vec![ZERO; cells * p];
            for k in 0..nt {
                for f in 0..cells {
                    qbuf[f * p..(f + 1) * p].copy_from_slice(&solved[f].1[k * p..(k + 1) * p]);
                }
                self.hat_to_real(&mut qbuf, p, &mut out.q[k * cells * p..(k + 1) * cells * p]);
            }
        } else {
            out.q.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut dual = vec![0.0; nt * cells * s];
        for k in 0..nt {
            for f in 0..cells {
                buf[f * s..(f + 1) * s].copy_from_slice(&solved[f].2[k * s..(k + 1) * s]);
            }
            self.hat_to_real(&mut buf, s, &mut real);
            for c in 0..cells {
                let rsym = SymMatrix::from_coords(m, &real[c * s..(c + 1) * s]);
                let old = target.reaction(k, c);
                let anti = (old - old.transpose()) * 0.5;
                out.set_reaction(k, c, &(*rsym.mat() + anti));
                let off = (k * cells + c) * s;
                for i in 0..s {
                    dual[off + i] = real[c * s + i] - e_real[k][c * s + i];
                }
            }
        }
        (
            out,
            DualField {
                nt,
                cells,
                size: m,
                coords: dual,
            },
        )
    }
}

/// One-shot projection onto the continuity constraint.
pub fn project_onto_continuity(path: &TransportPath) -> TransportPath {
    ContinuityProjector::new(path, path.p() > 0).project(path).0
}
