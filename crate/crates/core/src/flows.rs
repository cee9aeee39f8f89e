//! Gradient flows for the transport-reaction metric: the gradient
//! `[-∇(G div V) + G V]^Sym` of a functional with first variation `V`, and
//! explicit Euler time stepping for the entropy and volume functionals.

use serde::{Deserialize, Serialize};

use crate::error::{KbError, Result};
use crate::grid::Spectral;
use crate::linalg::{psd_apply_fn, Mat, PsdMatrix, SpectralFn, SymMatrix};
use crate::measure::MatrixMeasure;

/// Smallest eigenvalue kept after each step.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Safety factor of the explicit stability cap.
const CFL: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    /// `∫ Tr(G log G - G)`.
    Entropy,
    /// `∫ √det G`.
    Volume,
}

impl std::str::FromStr for Functional {
    type Err = KbError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropy" => Ok(Functional::Entropy),
            "volume" => Ok(Functional::Volume),
            _ => Err(KbError::Input(format!("unknown functional {s:?}"))),
        }
    }
}

fn determinant(m: &Mat) -> f64 {
    match m.n() {
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        _ => {
            let e = SymMatrix::from_mat_sym(m).eigen();
            e.values().iter().product()
        }
    }
}

fn check_positive(g: &MatrixMeasure) -> Result<()> {
    for (i, v) in g.values().iter().enumerate() {
        let l = v.sym().min_eigenvalue();
        if l <= 0.0 {
            return Err(KbError::singular(
                format!("cell is not positive definite (λ_min = {l:e})"),
                l,
            )
            .at_cell(i));
        }
    }
    Ok(())
}

/// Value of the functional.
pub fn functional_value(g: &MatrixMeasure, f: Functional) -> Result<f64> {
    let mut total = 0.0;
    for (i, v) in g.values().iter().enumerate() {
        total += match f {
            Functional::Entropy => {
                // Tr(G log G) = Σ λ log λ with 0 log 0 = 0
                let e = v.sym().eigen();
                e.values()
                    .iter()
                    .map(|&l| {
                        let l = l.max(0.0);
                        if l > 0.0 {
                            l * l.ln() - l
                        } else {
                            0.0
                        }
                    })
                    .sum::<f64>()
            }
            Functional::Volume => {
                let det = determinant(v.mat());
                if det < 0.0 && det < -1e-14 * v.trace().powi(v.n() as i32) {
                    return Err(KbError::singular("negative determinant", det).at_cell(i));
                }
                det.max(0.0).sqrt()
            }
        };
    }
    Ok(total * g.grid().cell_volume())
}

/// Per-cell first variation: `log G` for the entropy, `½ √det G · G⁻¹` for the volume.
pub fn first_variation(g: &MatrixMeasure, f: Functional) -> Result<Vec<SymMatrix>> {
    check_positive(g)?;
    g.values()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let out = match f {
                Functional::Entropy => psd_apply_fn(v.sym(), SpectralFn::Log),
                Functional::Volume => psd_apply_fn(v.sym(), SpectralFn::Inv)
                    .map(|inv| inv.scale(0.5 * determinant(v.mat()).sqrt())),
            };
            out.map_err(|e| e.at_cell(i))
        })
        .collect()
}

/// `[-∇(G div V) + G V]^Sym`, with `(div V)_i = Σ_j ∂_j V_ij` and spectral derivatives.
pub fn kb_gradient(g: &MatrixMeasure, v: &[SymMatrix]) -> Result<Vec<SymMatrix>> {
    gradient_with(&Spectral::new(*g.grid()), g, v)
}

fn gradient_with(
    spectral: &Spectral,
    g: &MatrixMeasure,
    v: &[SymMatrix],
) -> Result<Vec<SymMatrix>> {
    let cells = g.grid().cells();
    let n = g.size();
    if v.len() != cells || v.iter().any(|m| m.n() != n) {
        return Err(KbError::Input(
            "first variation does not match the measure grid".into(),
        ));
    }
    let mut out: Vec<Mat> = g
        .values()
        .iter()
        .zip(v)
        .map(|(gv, vv)| *gv.mat() * *vv.mat())
        .collect();
    if g.grid().is_point() {
        return Ok(out.iter().map(SymMatrix::from_mat_sym).collect());
    }
    let d = g.grid().dim();
    let component = |field: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..cells).map(field).collect() };
    // a = G div V
    let mut div = vec![vec![0.0; cells]; d];
    for i in 0..d {
        for j in 0..d {
            let dj = spectral.derivative(&component(&|c| v[c].mat()[(i, j)]), j);
            for (acc, x) in div[i].iter_mut().zip(dj) {
                *acc += x;
            }
        }
    }
    let a: Vec<Vec<f64>> = (0..d)
        .map(|i| component(&|c| (0..d).map(|k| g.value(c).mat()[(i, k)] * div[k][c]).sum()))
        .collect();
    for (i, ai) in a.iter().enumerate() {
        for j in 0..d {
            let dj = spectral.derivative(ai, j);
            for (c, x) in dj.into_iter().enumerate() {
                out[c][(i, j)] -= x;
            }
        }
    }
    Ok(out.iter().map(SymMatrix::from_mat_sym).collect())
}

/// Largest stable explicit step: `0.25 / (Laplacian bound · max trace)`.
pub fn stability_cap(g: &MatrixMeasure) -> f64 {
    let lap = Spectral::new(*g.grid()).laplacian_bound().max(1.0);
    let tr = g.values().iter().fold(0.0f64, |m, v| m.max(v.trace()));
    CFL / (lap * tr.max(f64::MIN_POSITIVE))
}

/// Recorded output of [`flow_evolve`].
#[derive(Clone, Debug, PartialEq)]
pub struct FlowTrajectory {
    /// Snapshot times.
    pub times: Vec<f64>,
    /// Snapshots at `times`, starting with the initial datum.
    pub frames: Vec<MatrixMeasure>,
    /// Functional value after every step, index 0 being the initial value.
    pub values: Vec<f64>,
    /// Number of cells floored at [`EIGEN_FLOOR`] per step.
    pub floored: Vec<usize>,
}

impl FlowTrajectory {
    /// Whether the functional never increased by more than `rel · |F|`.
    pub fn is_dissipative(&self, rel: f64) -> bool {
        self.values
            .windows(2)
            .all(|w| w[1] <= w[0] + rel * w[0].abs().max(f64::MIN_POSITIVE))
    }
}

/// Explicit Euler for `∂_t G = -grad F(G)`, keeping every `stride`-th frame
/// and the last one.
pub fn flow_evolve(
    g0: &MatrixMeasure,
    f: Functional,
    dt: f64,
    steps: usize,
    stride: usize,
) -> Result<FlowTrajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(KbError::Input(format!("dt must be positive, got {dt}")));
    }
    if stride == 0 {
        return Err(KbError::Input("stride must be positive".into()));
    }
    let cap = stability_cap(g0);
    if dt > cap {
        return Err(KbError::Input(format!(
            "dt = {dt:e} exceeds the stability cap {cap:e}"
        )));
    }
    check_positive(g0)?;
    let spectral = Spectral::new(*g0.grid());
    let mut g = g0.clone();
    let mut traj = FlowTrajectory {
        times: vec![0.0],
        frames: vec![g.clone()],
        values: vec![functional_value(&g, f)?],
        floored: Vec::with_capacity(steps),
    };
    for step in 1..=steps {
        // the cap carries a factor-two margin; losing all of it means blow-up
        if step > 1 && dt > 2.0 * stability_cap(&g) {
            return Err(KbError::Numeric(format!(
                "step {step}: dt is twice the stability cap of the current state (blow-up)"
            )));
        }
        let v = first_variation(&g, f)
            .map_err(|e| KbError::Numeric(format!("step {step}: flow degenerated: {e}")))?;
        let grad = gradient_with(&spectral, &g, &v)?;
        let mut floored = 0;
        let mut next = Vec::with_capacity(grad.len());
        for (gv, gr) in g.values().iter().zip(&grad) {
            let m = gv.sym().sub(&gr.scale(dt));
            if !m.mat().is_finite() {
                return Err(KbError::Numeric(format!("non-finite value at step {step}")));
            }
            let e = m.eigen();
            if e.values().iter().any(|&l| l < EIGEN_FLOOR) {
                floored += 1;
                next.push(PsdMatrix::assume(e.map(|l| l.max(EIGEN_FLOOR))));
            } else {
                next.push(PsdMatrix::assume(m));
            }
        }
        g = MatrixMeasure::from_psd_unchecked(*g.grid(), next);
        traj.values.push(functional_value(&g, f)?);
        traj.floored.push(floored);
        if step % stride == 0 || step == steps {
            traj.times.push(step as f64 * dt);
            traj.frames.push(g.clone());
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{E, PI};

    #[test]
    fn entropy_variation_examples() {
        let grid = GridSpec::new(2, 2).unwrap();
        let id = MatrixMeasure::constant(grid, PsdMatrix::identity(2)).unwrap();
        for v in first_variation(&id, Functional::Entropy).unwrap() {
            assert!(v.frob_norm() < 1e-15);
        }
        let g = MatrixMeasure::constant(grid, PsdMatrix::diag(&[E, E * E]).unwrap()).unwrap();
        let v = first_variation(&g, Functional::Entropy).unwrap();
        assert!(v[0].sub(&SymMatrix::diag(&[1.0, 2.0])).frob_norm() < 1e-14);
    }

    #[test]
    fn singular_cell_is_reported() {
        let grid = GridSpec::new(1, 4).unwrap();
        let mut vals = vec![PsdMatrix::identity(1); 4];
        vals[2] = PsdMatrix::zeros(1);
        let g = MatrixMeasure::new(grid, vals).unwrap();
        match first_variation(&g, Functional::Volume) {
            Err(KbError::Domain { cell, .. }) => assert_eq!(cell, Some(2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn first_variations_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grid = GridSpec::new(2, 4).unwrap();
        let g = crate::measure::smooth_random(grid, 2, 0.5, 0.3, &mut rng).unwrap();
        let h: Vec<SymMatrix> = (0..grid.cells())
            .map(|_| {
                let (a, b, c) = (
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                SymMatrix::from_rows(&[&[a, b], &[b, c]]).unwrap()
            })
            .collect();
        let shift = |s: f64| {
            let vals = g
                .values()
                .iter()
                .zip(&h)
                .map(|(v, d)| PsdMatrix::new(v.sym().add(&d.scale(s))).unwrap())
                .collect();
            MatrixMeasure::new(grid, vals).unwrap()
        };
        for f in [Functional::Entropy, Functional::Volume] {
            let eps = 1e-5;
            let fd = (functional_value(&shift(eps), f).unwrap()
                - functional_value(&shift(-eps), f).unwrap())
                / (2.0 * eps);
            let v = first_variation(&g, f).unwrap();
            let exact: f64 = v
                .iter()
                .zip(&h)
                .map(|(a, b)| a.mat().frob_dot(b.mat()))
                .sum::<f64>()
                * grid.cell_volume();
            assert!(
                (fd - exact).abs() <= 1e-6 * exact.abs(),
                "{f:?}: {fd} vs {exact}"
            );
        }
    }

    #[test]
    fn constant_fields_have_no_transport_term() {
        let grid = GridSpec::new(2, 4).unwrap();
        let p = PsdMatrix::from_rows(&[&[2.0, 0.5], &[0.5, 1.0]]).unwrap();
        let g = MatrixMeasure::constant(grid, p).unwrap();
        let v = SymMatrix::from_rows(&[&[0.3, -0.2], &[-0.2, 0.7]]).unwrap();
        let grad = kb_gradient(&g, &vec![v; grid.cells()]).unwrap();
        let expect = SymMatrix::from_mat_sym(&(*p.mat() * *v.mat()));
        for gr in grad {
            assert!(gr.sub(&expect).frob_norm() < 1e-14);
        }
        let zero = kb_gradient(&g, &vec![SymMatrix::zeros(2); grid.cells()]).unwrap();
        assert!(zero.iter().all(|m| m.frob_norm() == 0.0));
    }

    #[test]
    fn one_dimensional_entropy_gradient() {
        // V = log G gives -G'' + G log G
        let grid = GridSpec::new(1, 32).unwrap();
        let w = 2.0 * PI;
        let g =
            MatrixMeasure::from_fn(grid, |x| SymMatrix::diag(&[(0.4 * (w * x[0]).sin()).exp()]))
                .unwrap();
        let v = first_variation(&g, Functional::Entropy).unwrap();
        let grad = kb_gradient(&g, &v).unwrap();
        for (c, gr) in grad.iter().enumerate() {
            let x = grid.center(c)[0];
            let s = 0.4 * (w * x).sin();
            let ds = 0.4 * w * (w * x).cos();
            let dds = -0.4 * w * w * (w * x).sin();
            let gxx = s.exp() * (ds * ds + dds);
            let exact = -gxx + s.exp() * s;
            assert!(
                (gr.mat()[(0, 0)] - exact).abs() < 1e-8,
                "{} vs {exact}",
                gr.mat()[(0, 0)]
            );
        }
    }

    #[test]
    fn gradient_pairs_nonnegatively_with_the_variation() {
        // <grad F, V> = ∫ G div V · div V + Tr(G V V) ≥ 0
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = GridSpec::new(2, 8).unwrap();
        let g = crate::measure::smooth_random(grid, 2, 0.3, 1.0, &mut rng).unwrap();
        for f in [Functional::Entropy, Functional::Volume] {
            let v = first_variation(&g, f).unwrap();
            let grad = kb_gradient(&g, &v).unwrap();
            let lhs: f64 = grad
                .iter()
                .zip(&v)
                .map(|(a, b)| a.mat().frob_dot(b.mat()))
                .sum();
            let s = Spectral::new(grid);
            let mut div = vec![vec![0.0; grid.cells()]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    let comp: Vec<f64> = v.iter().map(|m| m.mat()[(i, j)]).collect();
                    for (acc, x) in div[i].iter_mut().zip(s.derivative(&comp, j)) {
                        *acc += x;
                    }
                }
            }
            let rhs: f64 = (0..grid.cells())
                .map(|c| {
                    let gm = g.value(c).mat();
                    let w = [div[0][c], div[1][c]];
                    let quad: f64 = (0..2)
                        .map(|a| (0..2).map(|b| w[a] * gm[(a, b)] * w[b]).sum::<f64>())
                        .sum();
                    quad + (*gm * *v[c].mat() * *v[c].mat()).trace()
                })
                .sum();
            assert!(rhs > 0.0);
            assert!((lhs - rhs).abs() < 1e-10 * rhs, "{f:?}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn identity_is_an_equilibrium() {
        let grid = GridSpec::new(2, 4).unwrap();
        let id = MatrixMeasure::constant(grid, PsdMatrix::identity(2)).unwrap();
        let traj = flow_evolve(&id, Functional::Entropy, 1e-4, 20, 5).unwrap();
        assert_eq!(traj.frames.len(), 5);
        for fr in &traj.frames {
            assert_eq!(fr, &id);
        }
    }

    #[test]
    fn constant_entropy_flow_matches_ode() {
        let grid = GridSpec::new(1, 2).unwrap();
        let g = MatrixMeasure::constant(grid, PsdMatrix::diag(&[E]).unwrap()).unwrap();
        let dt = 1e-4;
        let traj = flow_evolve(&g, Functional::Entropy, dt, 10_000, 10_000).unwrap();
        let last = traj.frames.last().unwrap().value(0).mat()[(0, 0)];
        let exact = (-1.0f64).exp().exp();
        assert!((last - exact).abs() < 1e-4, "{last} vs {exact}");
        assert!(traj.is_dissipative(1e-8));
    }

    #[test]
    fn rejects_unstable_steps() {
        let grid = GridSpec::new(1, 16).unwrap();
        let g = MatrixMeasure::constant(grid, PsdMatrix::identity(1)).unwrap();
        assert!(flow_evolve(&g, Functional::Entropy, 1.0, 1, 1).is_err());
        assert!(flow_evolve(&g, Functional::Entropy, -1e-6, 1, 1).is_err());
    }
}
