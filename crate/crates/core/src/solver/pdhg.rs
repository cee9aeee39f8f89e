//! Primal-dual iteration for `min F(K U + b)` over paths `U` satisfying the
//! continuity equation.
//!
//! `K U + b` lists, for every interval, cell and quadrature node, the sampled
//! coefficient `(1-s) G_k + s G_{k+1}` together with `q_k` and `R_k`; `F` sums
//! the weighted perspective values. The dual step is the Moreau split of
//! [`cell_prox`], the primal step is the continuity projection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{KbError, Result};
use crate::linalg::{psd_apply_fn, sym_len, Mat, SpectralFn, SymMatrix, MAX_DIM, MAX_SYM};

use super::path::{continuity_residual, path_energy, TransportPath};
use super::projection::ContinuityProjector;
use super::prox::cell_prox_from;
use super::{IterationRecord, Mode, SolverConfig, SolverReport};

const POWER_STEPS: usize = 50;
const STEP_SAFETY: f64 = 0.95;
/// Primal/dual balance relative to the mean mass density.
const BALANCE: f64 = 1.0;
/// Residual balancing: rebalance when the relative residuals differ by more
/// than this factor; the adaptation strength starts at `ADAPT_START` and
/// decays by `ADAPT_DECAY` per adjustment.
const ADAPT_BAND: f64 = 2.0;
const ADAPT_START: f64 = 0.5;
const ADAPT_DECAY: f64 = 0.95;

/// Shape of the dual variable: one entry per (interval, cell, quadrature node).
#[derive(Clone, Copy)]
struct Layout {
    nt: usize,
    cells: usize,
    nq: usize,
    size: usize,
    s: usize,
    /// Transport components carried by the dual (0 without transport).
    p: usize,
    entry: usize,
    quad: &'static [(f64, f64)],
}

impl Layout {
    fn new(path: &TransportPath, transport: bool) -> Self {
        let size = path.size();
        let s = sym_len(size);
        let p = if transport { path.p() } else { 0 };
        let quad = path.quadrature().points();
        Layout {
            nt: path.nt(),
            cells: path.grid().cells(),
            nq: quad.len(),
            size,
            s,
            p,
            entry: s + p + size * size,
            quad,
        }
    }

    fn len(&self) -> usize {
        self.nt * self.cells * self.nq * self.entry
    }

    fn split(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.nq;
        let c = (idx / self.nq) % self.cells;
        let k = idx / (self.nq * self.cells);
        (k, c, i)
    }

    /// Entry `(k, c, i)` of `K U + b`.
    fn sample_into(&self, u: &TransportPath, idx: usize, out: &mut [f64]) {
        let (k, c, i) = self.split(idx);
        let (sq, _) = self.quad[i];
        let s = self.s;
        let a = (k * self.cells + c) * s;
        let b = ((k + 1) * self.cells + c) * s;
        for j in 0..s {
            out[j] = (1.0 - sq) * u.g[a + j] + sq * u.g[b + j];
        }
        if self.p > 0 {
            out[s..s + self.p].copy_from_slice(u.transport(k, c));
        }
        let m2 = self.size * self.size;
        let off = (k * self.cells + c) * m2;
        out[s + self.p..].copy_from_slice(&u.r[off..off + m2]);
    }

    /// `u ← u - τ K* v` on the interior nodes and the momenta.
    fn adjoint_step(&self, v: &[f64], tau: f64, u: &mut TransportPath) {
        let (s, p, e) = (self.s, self.p, self.entry);
        let m2 = self.size * self.size;
        let cells = self.cells;
        for k in 0..self.nt {
            for c in 0..cells {
                for (i, &(sq, w)) in self.quad.iter().enumerate() {
                    let base = (((k * cells + c) * self.nq) + i) * e;
                    let ve = &v[base..base + e];
                    let tw = tau * w;
                    if k > 0 {
                        let a = (k * cells + c) * s;
                        for j in 0..s {
                            u.g[a + j] -= tw * (1.0 - sq) * ve[j];
                        }
                    }
                    if k + 1 < self.nt {
                        let b = ((k + 1) * cells + c) * s;
                        for j in 0..s {
                            u.g[b + j] -= tw * sq * ve[j];
                        }
                    }
                    if p > 0 {
                        let qo = (k * cells + c) * p;
                        for j in 0..p {
                            u.q[qo + j] -= tw * ve[s + j];
                        }
                    }
                    let ro = (k * cells + c) * m2;
                    for j in 0..m2 {
                        u.r[ro + j] -= tw * ve[s + p + j];
                    }
                }
            }
        }
    }

    fn unpack(&self, x: &[f64]) -> (SymMatrix, [f64; MAX_DIM], Mat) {
        let (s, p, m) = (self.s, self.p, self.size);
        let g = SymMatrix::from_coords(m, &x[..s]);
        let mut q = [0.0; MAX_DIM];
        q[..p].copy_from_slice(&x[s..s + p]);
        let r = Mat::from_fn(m, |i, j| x[s + p + i * m + j]);
        (g, q, r)
    }

    /// Weighted squared norm `Σ w_i |x_i|²` of a dual-shaped vector.
    fn weighted_norm2(&self, x: &[f64]) -> f64 {
        x.chunks(self.entry)
            .enumerate()
            .map(|(idx, ch)| self.quad[idx % self.nq].1 * ch.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }
}

/// `‖K‖` (weighted dual metric) by power iteration on `K* K`.
fn operator_norm(layout: &Layout, template: &TransportPath, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = template.clone();
    u.g.iter_mut().for_each(|v| *v = 0.0);
    let s = layout.s;
    let (cells, nt) = (layout.cells, layout.nt);
    for v in u.g[cells * s..nt * cells * s].iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    if layout.p > 0 {
        u.q.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    } else {
        u.q.iter_mut().for_each(|v| *v = 0.0);
    }
    u.r.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    let norm = |u: &TransportPath| -> f64 {
        (u.g.iter()
            .chain(&u.q)
            .chain(&u.r)
            .map(|v| v * v)
            .sum::<f64>())
        .sqrt()
    };
    let mut est = 1.0;
    let mut kv = vec![0.0; layout.len()];
    for _ in 0..POWER_STEPS {
        let n = norm(&u);
        if n == 0.0 {
            break;
        }
        u.g.iter_mut()
            .chain(u.q.iter_mut())
            .chain(u.r.iter_mut())
            .for_each(|v| *v /= n);
        for (idx, ch) in kv.chunks_mut(layout.entry).enumerate() {
            layout.sample_into(&u, idx, ch);
        }
        est = layout.weighted_norm2(&kv).sqrt();
        let mut next = u.clone();
        next.g
            .iter_mut()
            .chain(next.q.iter_mut())
            .chain(next.r.iter_mut())
            .for_each(|v| *v = 0.0);
        layout.adjoint_step(&kv, -1.0, &mut next);
        u = next;
    }
    est
}

/// Gradient of the perspective at a positive-definite coefficient, else zero.
fn perspective_gradient(layout: &Layout, x: &[f64], out: &mut [f64]) {
    let (g, q, r) = layout.unpack(x);
    out.iter_mut().for_each(|v| *v = 0.0);
    let Ok(gi) = psd_apply_fn(&g, SpectralFn::Inv) else {
        return;
    };
    let gi = *gi.mat();
    let (s, p, m) = (layout.s, layout.p, layout.size);
    let mut mm = r * r.transpose();
    if p > 0 {
        mm += Mat::outer(&q[..m], &q[..m]);
    }
    let dg = SymMatrix::from_mat_sym(&(-(gi * mm * gi)));
    dg.write_coords(&mut out[..s]);
    if p > 0 {
        let mut gq = [0.0; MAX_DIM];
        gi.mul_vec(&q[..m], &mut gq[..m]);
        for j in 0..p {
            out[s + j] = 2.0 * gq[j];
        }
    }
    let dr = gi * r * 2.0;
    for i in 0..m {
        for j in 0..m {
            out[s + p + i * m + j] = dr[(i, j)];
        }
    }
}

pub(super) fn run(
    init: TransportPath,
    cfg: &SolverConfig,
) -> Result<(SolverReport, TransportPath)> {
    let transport = cfg.mode == Mode::Kb && init.p() > 0;
    let layout = Layout::new(&init, transport);
    let projector = ContinuityProjector::new(&init, transport);
    let mut u = init;
    if !transport {
        u.q.iter_mut().for_each(|v| *v = 0.0);
    }
    let knorm = operator_norm(&layout, &u, cfg.seed);
    let mass = 0.5 * (u.start().total_mass() + u.end().total_mass());
    let (mut tau, mut sigma) = step_sizes(cfg, knorm, BALANCE * mass)?;
    let adaptive = cfg.tau.is_none() && cfg.sigma.is_none();
    let mut adapt = ADAPT_START;
    let scale = u.scale().max(mass);
    let h = u.grid().cell_volume();
    let dt = u.dt();
    let n_entries = layout.nt * layout.cells * layout.nq;

    // dual warm start at the gradient of the initial iterate
    let mut v = vec![0.0; layout.len()];
    v.par_chunks_mut(layout.entry)
        .enumerate()
        .for_each(|(idx, ch)| {
            let mut x = [0.0; MAX_SYM + MAX_DIM + MAX_DIM * MAX_DIM];
            layout.sample_into(&u, idx, &mut x[..layout.entry]);
            perspective_gradient(&layout, &x[..layout.entry], ch);
        });

    let mut u_bar = u.clone();
    let mut log = Vec::new();
    let mut prev_energy = f64::NAN;
    let mut converged = false;
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut entry_energy = vec![0.0; n_entries];
    let mut entry_gap = vec![0.0; n_entries];
    // previous prox outputs, used as Newton starting points
    let mut warm = vec![f64::NAN; n_entries * layout.s];
    for it in 1..=cfg.max_iter {
        iterations = it;
        let v_old = if adaptive { v.clone() } else { Vec::new() };
        // dual step: v ← y - σ prox_{F/σ}(y/σ), y = v + σ(KŪ + b)
        let failures: Vec<String> = v
            .par_chunks_mut(layout.entry)
            .zip(entry_energy.par_iter_mut())
            .zip(entry_gap.par_iter_mut())
            .zip(warm.par_chunks_mut(layout.s))
            .enumerate()
            .filter_map(|(idx, (((ch, en), gp), prev))| {
                let e = layout.entry;
                let mut kx = [0.0; MAX_SYM + MAX_DIM + MAX_DIM * MAX_DIM];
                layout.sample_into(&u_bar, idx, &mut kx[..e]);
                let mut z = [0.0; MAX_SYM + MAX_DIM + MAX_DIM * MAX_DIM];
                for j in 0..e {
                    z[j] = ch[j] / sigma + kx[j];
                }
                let (gt, qt, rt) = layout.unpack(&z[..e]);
                let start = prev[0]
                    .is_finite()
                    .then(|| SymMatrix::from_coords(layout.size, prev));
                let out =
                    match cell_prox_from(&gt, &qt[..layout.p], &rt, 1.0 / sigma, start.as_ref()) {
                        Ok(o) => o,
                        Err(err) => return Some(err.to_string()),
                    };
                out.g.write_coords(prev);
                let mut px = [0.0; MAX_SYM + MAX_DIM + MAX_DIM * MAX_DIM];
                out.g.write_coords(&mut px[..layout.s]);
                px[layout.s..layout.s + layout.p].copy_from_slice(out.q());
                let m = layout.size;
                for i in 0..m {
                    for j in 0..m {
                        px[layout.s + layout.p + i * m + j] = out.r[(i, j)];
                    }
                }
                let mut g2 = 0.0;
                for j in 0..e {
                    ch[j] = sigma * (z[j] - px[j]);
                    g2 += (px[j] - kx[j]) * (px[j] - kx[j]);
                }
                let w = layout.quad[idx % layout.nq].1;
                *en = w * out.value;
                *gp = w * g2;
                None
            })
            .collect();
        if let Some(msg) = failures.into_iter().next() {
            return Err(KbError::Numeric(format!("iteration {it}: {msg}")));
        }
        let energy = entry_energy.iter().sum::<f64>() * dt * h;
        gap = (entry_gap.iter().sum::<f64>() / (layout.nt * layout.cells) as f64).sqrt() / scale;
        if !energy.is_finite() || !gap.is_finite() {
            return Err(KbError::Numeric(format!(
                "non-finite iterate at iteration {it}"
            )));
        }
        log.push(IterationRecord {
            iter: it,
            energy,
            gap,
        });

        // primal step: u ← Proj_C(u - τ K* v)
        let mut step = u.clone();
        layout.adjoint_step(&v, tau, &mut step);
        let (next, _) = projector.project(&step);
        if next
            .g
            .iter()
            .chain(&next.q)
            .chain(&next.r)
            .any(|x| !x.is_finite())
        {
            return Err(KbError::Numeric(format!(
                "non-finite path at iteration {it}"
            )));
        }
        if adaptive {
            let (p_rel, d_rel) =
                relative_residuals(&layout, &u, &step, &next, &u_bar, &v_old, &v, tau, sigma);
            if p_rel > ADAPT_BAND * d_rel {
                tau /= 1.0 - adapt;
                sigma *= 1.0 - adapt;
                adapt *= ADAPT_DECAY;
            } else if d_rel > ADAPT_BAND * p_rel {
                tau *= 1.0 - adapt;
                sigma /= 1.0 - adapt;
                adapt *= ADAPT_DECAY;
            }
        }
        u_bar = next.clone();
        for ((b, n), o) in u_bar
            .g
            .iter_mut()
            .chain(u_bar.q.iter_mut())
            .chain(u_bar.r.iter_mut())
            .zip(next.g.iter().chain(&next.q).chain(&next.r))
            .zip(u.g.iter().chain(&u.q).chain(&u.r))
        {
            *b = n + cfg.theta * (n - o);
        }
        u = next;

        let rel = (energy - prev_energy).abs() / energy.abs().max(1e-10 * scale);
        prev_energy = energy;
        if gap < cfg.tol_residual && rel < cfg.tol_energy {
            converged = true;
            break;
        }
    }

    u.clamp_psd();
    let prox_energy = log.last().map(|r| r.energy).unwrap_or(0.0);
    let energy = path_energy(&u).unwrap_or(prox_energy);
    let residual = continuity_residual(&u);
    let report = SolverReport {
        distance: energy.max(0.0).sqrt(),
        energy,
        residual,
        gap,
        iterations,
        converged,
        tau,
        sigma,
        log,
    };
    Ok((report, u))
}

/// Relative primal and dual residuals of the last iteration:
/// `|U⁺ - U|/τ` against `|K* V⁺|`, and `|(V - V⁺)/σ + K(Ū - U⁺)|` against `|K U⁺ + b|`.
#[allow(clippy::too_many_arguments)]
fn relative_residuals(
    layout: &Layout,
    u: &TransportPath,
    step: &TransportPath,
    next: &TransportPath,
    u_bar: &TransportPath,
    v_old: &[f64],
    v: &[f64],
    tau: f64,
    sigma: f64,
) -> (f64, f64) {
    let sq = |a: &TransportPath, b: &TransportPath| -> f64 {
        a.g.iter()
            .chain(&a.q)
            .chain(&a.r)
            .zip(b.g.iter().chain(&b.q).chain(&b.r))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
    };
    let p = sq(u, next).sqrt() / tau;
    let kv = sq(u, step).sqrt() / tau;
    let e = layout.entry;
    let mut d2 = 0.0;
    let mut k2 = 0.0;
    let mut a = [0.0; MAX_SYM + MAX_DIM + MAX_DIM * MAX_DIM];
    let mut b = [0.0; MAX_SYM + MAX_DIM + MAX_DIM * MAX_DIM];
    for idx in 0..layout.nt * layout.cells * layout.nq {
        layout.sample_into(u_bar, idx, &mut a[..e]);
        layout.sample_into(next, idx, &mut b[..e]);
        let w = layout.quad[idx % layout.nq].1;
        for j in 0..e {
            let r = (v_old[idx * e + j] - v[idx * e + j]) / sigma + a[j] - b[j];
            d2 += w * r * r;
            k2 += w * b[j] * b[j];
        }
    }
    let tiny = 1e-300;
    (p / kv.max(tiny), d2.sqrt() / k2.sqrt().max(tiny))
}

fn step_sizes(cfg: &SolverConfig, knorm: f64, balance: f64) -> Result<(f64, f64)> {
    let budget = STEP_SAFETY * STEP_SAFETY / (knorm * knorm);
    let rho = if balance > 0.0 { balance } else { 1.0 };
    let (tau, sigma) = match (cfg.tau, cfg.sigma) {
        (Some(t), Some(s)) => (t, s),
        (Some(t), None) => (t, budget / t),
        (None, Some(s)) => (budget / s, s),
        (None, None) => (rho * budget.sqrt(), budget.sqrt() / rho),
    };
    if tau * sigma * knorm * knorm >= 1.0 {
        return Err(KbError::Input(format!(
            "step sizes violate τσ‖K‖² < 1 (τ = {tau}, σ = {sigma}, ‖K‖ = {knorm:.4})"
        )));
    }
    Ok((tau, sigma))
}
