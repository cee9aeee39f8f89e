//! Proximal map of the matrix perspective `f(G, q, R) = Tr(G⁻¹(q qᵀ + R Rᵀ))`.
//!
//! For fixed `G` the momenta minimize in closed form,
//! `(q, R) = G (G + 2σI)⁻¹ (q̃, R̃)`, which leaves the reduced problem
//!
//! ```text
//! min_{G ⪰ 0}  ½|G - G̃|² + σ Tr((G + 2σI)⁻¹ W),   W = q̃ q̃ᵀ + R̃ R̃ᵀ
//! ```
//!
//! It is smooth and strongly convex on `G > -2σI`. We run Newton there; if the
//! unconstrained minimizer is not PSD, a short log-barrier continuation pins
//! the null directions to the cone boundary.

use crate::error::{KbError, Result};
use crate::linalg::{solve_spd_small, spd_inverse, sym_len, Mat, SymMatrix, MAX_DIM, MAX_SYM};

const MAX_NEWTON: usize = 200;

/// Output of [`cell_prox`].
#[derive(Clone, Copy, Debug)]
pub struct ProxPoint {
    pub g: SymMatrix,
    q: [f64; MAX_DIM],
    q_len: usize,
    pub r: Mat,
    /// `f(G, q, R)` at the output.
    pub value: f64,
    /// Newton steps used.
    pub iterations: usize,
}

impl ProxPoint {
    pub fn q(&self) -> &[f64] {
        &self.q[..self.q_len]
    }
}

struct Reduced<'a> {
    gt: &'a SymMatrix,
    w: SymMatrix,
    sigma: f64,
    n: usize,
    s: usize,
}

struct Eval {
    value: f64,
    grad: [f64; MAX_SYM],
    hess: [f64; MAX_SYM * MAX_SYM],
}

impl Reduced<'_> {
    fn shifted_inverse(&self, g: &SymMatrix) -> Option<Mat> {
        shifted_inverse(g, self.sigma)
    }

    /// Value, gradient and Hessian of `φ(G) - μ log det G` (`μ = 0` for no barrier).
    fn eval(&self, g: &SymMatrix, mu: f64, with_hess: bool) -> Option<Eval> {
        let hi_m = self.shifted_inverse(g)?;
        let m = hi_m * *self.w.mat() * hi_m;
        let diff = g.sub(self.gt);
        let mut value = 0.5 * diff.frob_norm().powi(2) + self.sigma * hi_m.frob_dot(self.w.mat());
        let mut grad_m = *diff.mat() - m * self.sigma;
        let mut gi = Mat::zeros(self.n);
        if mu > 0.0 {
            let e = g.eigen();
            if e.values()[self.n - 1] <= 0.0 {
                return None;
            }
            value -= mu * e.values().iter().map(|v| v.ln()).sum::<f64>();
            gi = *e.map(|v| 1.0 / v).mat();
            grad_m -= gi * mu;
        }
        let mut grad = [0.0; MAX_SYM];
        SymMatrix::from_mat_sym(&grad_m).write_coords(&mut grad[..self.s]);
        let mut hess = [0.0; MAX_SYM * MAX_SYM];
        if with_hess {
            let s = self.s;
            let terms = basis_terms(self.n);
            for a in 0..s {
                for b in a..s {
                    // Tr(E_b A E_a B) = Σ α β A_li B_jk for E_a ∋ (i,j,α), E_b ∋ (k,l,β)
                    let mut v = if a == b { 1.0 } else { 0.0 };
                    for &(i, j, al) in terms[a].iter().flatten() {
                        for &(k, l, be) in terms[b].iter().flatten() {
                            let ab = al * be;
                            v += ab
                                * self.sigma
                                * (hi_m[(l, i)] * m[(j, k)] + hi_m[(j, k)] * m[(l, i)]);
                            if mu > 0.0 {
                                v += ab * mu * gi[(l, i)] * gi[(j, k)];
                            }
                        }
                    }
                    hess[a * s + b] = v;
                    hess[b * s + a] = v;
                }
            }
        }
        Some(Eval { value, grad, hess })
    }

    fn newton_direction(&self, ev: &Eval) -> Option<SymMatrix> {
        let s = self.s;
        let mut dir = [0.0; MAX_SYM];
        for i in 0..s {
            dir[i] = -ev.grad[i];
        }
        if !solve_spd_small(&ev.hess[..s * s], &mut dir[..s], s) {
            return None;
        }
        Some(SymMatrix::from_coords(self.n, &dir[..s]))
    }
}

/// `(G + 2σI)⁻¹`, `None` outside the domain.
fn shifted_inverse(g: &SymMatrix, sigma: f64) -> Option<Mat> {
    let mut h = *g.mat();
    for i in 0..g.n() {
        h[(i, i)] += 2.0 * sigma;
    }
    spd_inverse(&h)
}

type BasisTerm = Option<(usize, usize, f64)>;

/// Orthonormal symmetric basis as sums of matrix units `α e_i e_jᵀ`, in the
/// coordinate order of [`SymMatrix::write_coords`].
fn basis_terms(n: usize) -> [[BasisTerm; 2]; MAX_SYM] {
    let mut out = [[None; 2]; MAX_SYM];
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut a = 0;
    for i in 0..n {
        for j in i..n {
            out[a] = if i == j {
                [Some((i, i, 1.0)), None]
            } else {
                [Some((i, j, h)), Some((j, i, h))]
            };
            a += 1;
        }
    }
    out
}

fn grad_norm(ev: &Eval, s: usize) -> f64 {
    ev.grad[..s].iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Proximal map of `σ f` at `(G̃, q̃, R̃)`:
/// `argmin ½|G-G̃|² + ½|q-q̃|² + ½|R-R̃|² + σ f(G,q,R)` over `G ⪰ 0`.
pub fn cell_prox(gt: &SymMatrix, qt: &[f64], rt: &Mat, sigma: f64) -> Result<ProxPoint> {
    cell_prox_from(gt, qt, rt, sigma, None)
}

/// [`cell_prox`] with the Newton iteration started at `start` (a nearby
/// solution, e.g. from the previous outer iteration).
pub fn cell_prox_from(
    gt: &SymMatrix,
    qt: &[f64],
    rt: &Mat,
    sigma: f64,
    start: Option<&SymMatrix>,
) -> Result<ProxPoint> {
    if sigma <= 0.0 {
        return Err(KbError::Input("prox parameter must be positive".into()));
    }
    let n = gt.n();
    let mut w = *rt * rt.transpose();
    if !qt.is_empty() {
        w += momentum_outer(qt, n);
    }
    let w = SymMatrix::from_mat_sym(&w);
    let q_len = qt.len();
    if w.mat().max_abs() == 0.0 {
        return Ok(ProxPoint {
            g: *gt.psd_projection().sym(),
            q: [0.0; MAX_DIM],
            q_len,
            r: Mat::zeros(n),
            value: 0.0,
            iterations: 0,
        });
    }
    let (g, iterations) = if n == 1 {
        scalar_prox(gt.mat()[(0, 0)], w.mat()[(0, 0)], sigma)?
    } else {
        matrix_prox(gt, w, sigma, start)?
    };
    let hi = shifted_inverse(&g, sigma)
        .ok_or_else(|| KbError::Numeric("prox output left the domain".into()))?;
    let shrink = *g.mat() * hi;
    let mut q = [0.0; MAX_DIM];
    shrink.mul_vec(&pad(qt, n), &mut q[..n]);
    let r = shrink * *rt;
    // f = ⟨X, H⁻¹ X̃⟩ stays finite on the cone boundary
    let mut hq = [0.0; MAX_DIM];
    hi.mul_vec(&pad(qt, n), &mut hq[..n]);
    let value = (0..q_len).map(|a| q[a] * hq[a]).sum::<f64>() + r.frob_dot(&(hi * *rt));
    Ok(ProxPoint {
        g,
        q,
        q_len,
        r,
        value: value.max(0.0),
        iterations,
    })
}

fn pad(q: &[f64], n: usize) -> [f64; MAX_DIM] {
    let mut out = [0.0; MAX_DIM];
    out[..q.len()].copy_from_slice(q);
    debug_assert!(q.len() <= n);
    out
}

fn momentum_outer(q: &[f64], n: usize) -> Mat {
    let p = pad(q, n);
    Mat::outer(&p[..n], &p[..n])
}

/// Root of `g - g̃ - σw/(g+2σ)² = 0` on `g ≥ 0`, else `0`.
fn scalar_prox(gt: f64, w: f64, sigma: f64) -> Result<(SymMatrix, usize)> {
    let dphi = |g: f64| g - gt - sigma * w / ((g + 2.0 * sigma) * (g + 2.0 * sigma));
    if dphi(0.0) >= 0.0 {
        return Ok((SymMatrix::diag(&[0.0]), 0));
    }
    // dφ is increasing and concave on (-2σ, ∞): Newton from the left of the
    // root increases monotonically to it.
    let mut g = gt.max(0.0);
    for it in 1..=MAX_NEWTON {
        let f = dphi(g);
        let hp = g + 2.0 * sigma;
        let fp = 1.0 + 2.0 * sigma * w / (hp * hp * hp);
        let next = g - f / fp;
        if !next.is_finite() {
            break;
        }
        let done = (next - g).abs() <= 1e-16 * (1.0 + next.abs());
        g = next.max(g);
        if done || f >= 0.0 {
            return Ok((SymMatrix::diag(&[g]), it));
        }
    }
    Err(KbError::Numeric(format!(
        "scalar prox did not converge (g̃ = {gt}, w = {w}, σ = {sigma})"
    )))
}

fn matrix_prox(
    gt: &SymMatrix,
    w: SymMatrix,
    sigma: f64,
    start: Option<&SymMatrix>,
) -> Result<(SymMatrix, usize)> {
    let n = gt.n();
    let red = Reduced {
        gt,
        w,
        sigma,
        n,
        s: sym_len(n),
    };
    let scale = 1.0 + gt.frob_norm() + w.frob_norm().sqrt();
    let tol = 1e-13 * scale;
    let mut used = 0;

    // Phase 1: unconstrained Newton on G > -2σI.
    let mut g = match start {
        Some(s) if shifted_inverse(s, sigma).is_some() => *s,
        _ => *gt.psd_projection().sym(),
    };
    let mut converged = false;
    while used < MAX_NEWTON {
        let Some(ev) = red.eval(&g, 0.0, true) else {
            break;
        };
        if grad_norm(&ev, red.s) <= tol {
            converged = true;
            break;
        }
        let Some(dir) = red.newton_direction(&ev) else {
            break;
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = g.add(&dir.scale(t));
            if let Some(e2) = red.eval(&cand, 0.0, false) {
                if e2.value <= ev.value + 1e-14 * scale * scale {
                    g = cand;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        used += 1;
        if !moved {
            converged = grad_norm(&ev, red.s) <= 1e3 * tol;
            break;
        }
    }
    // an unattained infimum drifts toward -2σI; the answer is then on the
    // PSD boundary and phase 2 takes over
    if !converged && g.min_eigenvalue() >= 0.0 {
        return Err(KbError::Numeric(format!(
            "prox Newton did not converge after {used} steps"
        )));
    }
    if converged && (spd_inverse(g.mat()).is_some() || g.min_eigenvalue() >= 0.0) {
        return Ok((g, used));
    }

    // Phase 2: the minimizer touches the cone boundary. A short barrier
    // continuation gets close; semismooth Newton on the natural residual
    // then converges to the active set exactly.
    let mut g = g
        .psd_projection()
        .sym()
        .add(&SymMatrix::identity(n).scale(1e-3 * scale));
    let mut mu = 1e-3 * scale * scale;
    let mu_end = 1e-12 * scale * scale;
    let budget = used + MAX_NEWTON;
    'outer: while mu > mu_end && used < budget {
        for _ in 0..8 {
            let Some(ev) = red.eval(&g, mu, true) else {
                break 'outer;
            };
            let Some(dir) = red.newton_direction(&ev) else {
                break 'outer;
            };
            // fraction to the boundary
            let mut t = 1.0;
            let mut cand = g.add(&dir);
            while cand.min_eigenvalue() <= 0.0 && t > 1e-20 {
                t *= 0.5;
                cand = g.add(&dir.scale(t));
            }
            if t < 1.0 {
                t *= 0.9;
                cand = g.add(&dir.scale(t));
            }
            if cand.min_eigenvalue() <= 0.0 {
                break 'outer;
            }
            g = cand;
            used += 1;
            if dir.frob_norm() * t <= 1e-12 * scale {
                break;
            }
        }
        mu *= 0.1;
    }
    polish(&red, g, tol, &mut used)
}

/// Semismooth Newton on `F(G) = G - Π₊(G - ∇φ(G))`, whose zero is the
/// minimizer over the cone. Returns `Π₊(G - ∇φ(G))` at the final iterate.
fn polish(
    red: &Reduced,
    mut g: SymMatrix,
    tol: f64,
    used: &mut usize,
) -> Result<(SymMatrix, usize)> {
    let (n, s) = (red.n, red.s);
    let lost = || KbError::Numeric("prox: lost positivity of G + 2σI".into());
    let natural = |g: &SymMatrix, ev: &Eval| {
        let z = g.sub(&SymMatrix::from_coords(n, &ev.grad[..s]));
        let e = z.eigen();
        let pz = e.map(|v| v.max(0.0));
        (g.sub(&pz).frob_norm(), pz, e)
    };
    let mut ev = red.eval(&g, 0.0, true).ok_or_else(lost)?;
    let (mut fnorm, mut pz, mut e) = natural(&g, &ev);
    for _ in 0..30 {
        if fnorm <= tol {
            break;
        }
        // generalized Jacobian of Π₊ at Z: H ↦ U (Ω ∘ UᵀHU) Uᵀ
        let lam = e.values();
        let u = &e.vectors;
        let omega = Mat::from_fn(n, |i, j| {
            let (a, b) = (lam[i], lam[j]);
            match (a > 0.0, b > 0.0) {
                (true, true) => 1.0,
                (false, false) => 0.0,
                _ => (a.max(0.0) - b.max(0.0)) / (a - b),
            }
        });
        let mut jac = nalgebra::DMatrix::<f64>::zeros(s, s);
        let mut unit = [0.0; MAX_SYM];
        let mut col = [0.0; MAX_SYM];
        for a in 0..s {
            unit[a] = 1.0;
            let d = SymMatrix::from_coords(n, &unit[..s]);
            let hd: Vec<f64> = (0..s).map(|b| ev.hess[b * s + a]).collect();
            let m = *d.sub(&SymMatrix::from_coords(n, &hd)).mat();
            let inner = u.transpose() * m * *u;
            let jp = *u * Mat::from_fn(n, |i, j| omega[(i, j)] * inner[(i, j)]) * u.transpose();
            SymMatrix::from_mat_sym(&(*d.mat() - jp)).write_coords(&mut col[..s]);
            for b in 0..s {
                jac[(b, a)] = col[b];
            }
            unit[a] = 0.0;
        }
        let mut rhs = [0.0; MAX_SYM];
        g.sub(&pz).write_coords(&mut rhs[..s]);
        let rhs = nalgebra::DVector::from_iterator(s, rhs[..s].iter().map(|v| -v));
        let Some(step) = jac.lu().solve(&rhs) else {
            break;
        };
        let dir = SymMatrix::from_coords(n, step.as_slice());
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let cand = g.add(&dir.scale(t));
            if let Some(ev2) = red.eval(&cand, 0.0, true) {
                let (f2, pz2, e2) = natural(&cand, &ev2);
                if f2 < fnorm {
                    (g, ev, fnorm, pz, e) = (cand, ev2, f2, pz2, e2);
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        *used += 1;
        if !accepted {
            break;
        }
    }
    if fnorm > 1e4 * tol {
        return Err(KbError::Numeric(format!(
            "prox boundary solve stalled (natural residual {fnorm:e})"
        )));
    }
    Ok((pz, *used))
}

/// Natural residual of the prox optimality conditions at `out`:
/// `|G - Π₊(G - ∇φ(G))| + |q - G(G+2σ)⁻¹q̃| + |R - G(G+2σ)⁻¹R̃|`.
pub fn prox_kkt_residual(gt: &SymMatrix, qt: &[f64], rt: &Mat, sigma: f64, out: &ProxPoint) -> f64 {
    let n = gt.n();
    let Some(hi) = shifted_inverse(&out.g, sigma) else {
        return f64::INFINITY;
    };
    let mut w = *rt * rt.transpose();
    if !qt.is_empty() {
        w += momentum_outer(qt, n);
    }
    let grad = *out.g.mat() - *gt.mat() - hi * w * hi * sigma;
    let moved = SymMatrix::from_mat_sym(&(*out.g.mat() - grad)).psd_projection();
    let r1 = (*out.g.mat() - *moved.mat()).frob_norm();
    let shrink = *out.g.mat() * hi;
    let mut q = [0.0; MAX_DIM];
    shrink.mul_vec(&pad(qt, n), &mut q[..n]);
    let r2 = (0..qt.len())
        .map(|a| (q[a] - out.q()[a]).powi(2))
        .sum::<f64>()
        .sqrt();
    let r3 = (shrink * *rt - out.r).frob_norm();
    r1 + r2 + r3
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_momentum_is_psd_projection() {
        let gt = SymMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]).unwrap();
        let out = cell_prox(&gt, &[0.0, 0.0], &Mat::zeros(2), 0.7).unwrap();
        let expect = gt.psd_projection();
        assert!((*out.g.mat() - *expect.mat()).max_abs() < 1e-14);
        assert_eq!(out.q(), &[0.0, 0.0]);
        assert_eq!(out.r.max_abs(), 0.0);
    }

    #[test]
    fn scalar_cubic_root() {
        let out = cell_prox(&SymMatrix::diag(&[1.0]), &[1.0], &Mat::zeros(1), 1.0).unwrap();
        let g = out.g.mat()[(0, 0)];
        assert!(((g - 1.0) * (g + 2.0) * (g + 2.0) - 1.0).abs() < 1e-13);
        assert!((out.q()[0] - g / (g + 2.0)).abs() < 1e-14);
        assert!((g - 1.104).abs() < 1e-3);
    }

    #[test]
    fn scalar_boundary_case() {
        // strongly negative target with little momentum lands on g = 0
        let out = cell_prox(&SymMatrix::diag(&[-3.0]), &[0.1], &Mat::zeros(1), 0.5).unwrap();
        assert_eq!(out.g.mat()[(0, 0)], 0.0);
        assert_eq!(out.q()[0], 0.0);
    }

    #[test]
    fn vanishing_penalty_is_nearly_identity() {
        let gt = SymMatrix::from_rows(&[&[2.0, 0.3], &[0.3, 1.0]]).unwrap();
        let rt = Mat::from_rows(&[&[0.5, -0.2], &[0.1, 0.4]]).unwrap();
        let out = cell_prox(&gt, &[0.3, -0.7], &rt, 1e-9).unwrap();
        assert!((*out.g.mat() - *gt.mat()).max_abs() < 1e-8);
        assert!((out.r - rt).max_abs() < 1e-8);
        assert!((out.q()[1] + 0.7).abs() < 1e-8);
    }

    #[test]
    fn matrix_case_interior_and_boundary_kkt() {
        let rt = Mat::from_rows(&[&[0.5, -0.2], &[0.1, 0.4]]).unwrap();
        for gt in [
            SymMatrix::from_rows(&[&[2.0, 0.3], &[0.3, 1.0]]).unwrap(),
            SymMatrix::from_rows(&[&[1.0, 0.0], &[0.0, -4.0]]).unwrap(),
            SymMatrix::from_rows(&[&[-1.0, 0.2], &[0.2, -2.0]]).unwrap(),
        ] {
            let out = cell_prox(&gt, &[0.3, -0.7], &rt, 0.4).unwrap();
            let res = prox_kkt_residual(&gt, &[0.3, -0.7], &rt, 0.4, &out);
            assert!(res < 1e-10, "kkt residual {res} for {gt:?}");
            assert!(out.g.min_eigenvalue() >= -1e-14);
        }
    }

    #[test]
    fn rank_deficient_momentum_kkt() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for i in 0..3000 {
            let n = 2 + i % 2;
            let gt = SymMatrix::from_mat_sym(&Mat::from_fn(n, |_, _| rng.gen_range(-3.0..3.0)));
            // q̃ q̃ᵀ + R̃ R̃ᵀ has rank one
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let c = rng.gen_range(-1.0..1.0);
            let qt: Vec<f64> = u.iter().map(|v| c * v).collect();
            let rt = Mat::outer(&u, &vec![rng.gen_range(-1.0..1.0); n]);
            let sigma = 10f64.powf(rng.gen_range(-2.0..2.0));
            let out = cell_prox(&gt, &qt, &rt, sigma).unwrap();
            let res = prox_kkt_residual(&gt, &qt, &rt, sigma, &out);
            assert!(res < 1e-10, "kkt residual {res} at sample {i}");
        }
    }

    #[test]
    fn rejects_nonpositive_sigma() {
        assert!(cell_prox(&SymMatrix::identity(2), &[], &Mat::zeros(2), 0.0).is_err());
    }
}
