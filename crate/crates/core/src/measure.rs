//! PSD-matrix-valued densities on the torus grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KbError, Result};
use crate::grid::GridSpec;
use crate::linalg::{Mat, PsdMatrix, SymMatrix};

/// A matrix measure stored as one PSD density value per cell (cell averages
/// with respect to Lebesgue measure). On spatial grids the matrix size equals
/// the spatial dimension; on the point grid it is arbitrary.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixMeasure {
    grid: GridSpec,
    size: usize,
    values: Vec<PsdMatrix>,
}

impl MatrixMeasure {
    pub fn new(grid: GridSpec, values: Vec<PsdMatrix>) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(KbError::Input(format!(
                "expected {} cells, got {}",
                grid.cells(),
                values.len()
            )));
        }
        let size = values[0].n();
        if values.iter().any(|v| v.n() != size) {
            return Err(KbError::Input("cells have different matrix sizes".into()));
        }
        if !grid.is_point() && size != grid.dim() {
            return Err(KbError::Input(format!(
                "matrix size {size} must equal the spatial dimension {}",
                grid.dim()
            )));
        }
        Ok(MatrixMeasure { grid, size, values })
    }

    /// Sample a field at cell centers; every sample must be PSD.
    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 3]) -> SymMatrix) -> Result<Self> {
        let values = (0..grid.cells())
            .map(|i| PsdMatrix::new(f(grid.center(i))).map_err(|e| e.at_cell(i)))
            .collect::<Result<Vec<_>>>()?;
        MatrixMeasure::new(grid, values)
    }

    pub fn constant(grid: GridSpec, p: PsdMatrix) -> Result<Self> {
        MatrixMeasure::new(grid, vec![p; grid.cells()])
    }

    pub fn zeros(grid: GridSpec, size: usize) -> Self {
        let size = if grid.is_point() { size } else { grid.dim() };
        MatrixMeasure {
            grid,
            size,
            values: vec![PsdMatrix::zeros(size); grid.cells()],
        }
    }

    /// A single matrix on the point grid.
    pub fn point(p: PsdMatrix) -> Self {
        MatrixMeasure {
            grid: GridSpec::point(),
            size: p.n(),
            values: vec![p],
        }
    }

    /// Like [`MatrixMeasure::new`] but clamps every cell onto the PSD cone.
    pub(crate) fn from_sym_clamped(grid: GridSpec, values: Vec<SymMatrix>) -> Self {
        let size = values[0].n();
        MatrixMeasure {
            grid,
            size,
            values: values
                .iter()
                .map(|v| {
                    if v.min_eigenvalue() >= 0.0 {
                        PsdMatrix::assume(*v)
                    } else {
                        v.psd_projection()
                    }
                })
                .collect(),
        }
    }

    /// Caller guarantees every value is PSD and sizes are consistent.
    pub(crate) fn from_psd_unchecked(grid: GridSpec, values: Vec<PsdMatrix>) -> Self {
        let size = values[0].n();
        MatrixMeasure { grid, size, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Matrix size of the values.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn values(&self) -> &[PsdMatrix] {
        &self.values
    }

    pub fn value(&self, cell: usize) -> &PsdMatrix {
        &self.values[cell]
    }

    pub fn same_shape(&self, other: &MatrixMeasure) -> bool {
        self.grid == other.grid && self.size == other.size
    }

    pub(crate) fn check_same_shape(&self, other: &MatrixMeasure) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(KbError::Input(format!(
                "grid mismatch: {:?}/{} vs {:?}/{}",
                self.grid, self.size, other.grid, other.size
            )))
        }
    }

    /// `m = Σ Tr(G_cell) · cell_volume`.
    pub fn total_mass(&self) -> f64 {
        self.values.iter().map(|v| v.trace()).sum::<f64>() * self.grid.cell_volume()
    }

    /// Split into the unit-mass base and the cone radius `r = √m`.
    pub fn normalize_to_unit_mass(&self) -> Result<(MatrixMeasure, f64)> {
        let m = self.total_mass();
        if m <= 0.0 {
            return Err(KbError::domain(
                "zero measure has no unit-mass normalization (cone apex)",
            ));
        }
        let r = m.sqrt();
        Ok((self.scale_measure(1.0 / r), r))
    }

    /// `r² · G`.
    pub fn scale_measure(&self, r: f64) -> MatrixMeasure {
        assert!(r >= 0.0, "scale radius must be nonnegative");
        let s = r * r;
        MatrixMeasure {
            grid: self.grid,
            size: self.size,
            values: self.values.iter().map(|v| v.scale(s)).collect(),
        }
    }

    /// Transform by a grid symmetry `Q` (signed permutation): the value at
    /// `Qx` becomes `Q G(x) Qᵀ`.
    pub fn orthogonal_conjugate(&self, q: &Mat) -> Result<MatrixMeasure> {
        let sym = GridSymmetry::from_matrix(q, &self.grid)?;
        let mut out = self.values.clone();
        for (idx, v) in self.values.iter().enumerate() {
            out[sym.map_cell(idx)] = PsdMatrix::assume(v.sym().congruence(q));
        }
        Ok(MatrixMeasure {
            grid: self.grid,
            size: self.size,
            values: out,
        })
    }

    /// Flattened upper triangles, cells in order.
    pub fn to_upper_vec(&self) -> Vec<f64> {
        let s = crate::linalg::sym_len(self.size);
        let mut out = vec![0.0; s * self.values.len()];
        for (v, chunk) in self.values.iter().zip(out.chunks_mut(s)) {
            v.sym().write_upper(chunk);
        }
        out
    }
}

/// A signed permutation acting on grid cells and on matrix values.
#[derive(Clone, Debug)]
pub struct GridSymmetry {
    grid: GridSpec,
    /// Column `j` of `Q` is `sign[j] · e_{perm[j]}`.
    perm: [usize; 3],
    sign: [f64; 3],
}

impl GridSymmetry {
    pub fn from_matrix(q: &Mat, grid: &GridSpec) -> Result<Self> {
        let d = grid.dim();
        if q.n() != d {
            return Err(KbError::Input(format!(
                "symmetry must be {d}x{d}, got {}x{}",
                q.n(),
                q.n()
            )));
        }
        let mut perm = [0; 3];
        let mut sign = [1.0; 3];
        let mut used = [false; 3];
        for j in 0..d {
            let mut hit = None;
            for i in 0..d {
                let v = q[(i, j)];
                if v == 0.0 {
                    continue;
                }
                if (v.abs() - 1.0).abs() > 1e-14 || hit.is_some() {
                    return Err(KbError::Input(
                        "orthogonal map is not a signed permutation (not a grid symmetry)".into(),
                    ));
                }
                hit = Some((i, v.signum()));
            }
            let (i, s) = hit.ok_or_else(|| KbError::Input("singular symmetry matrix".into()))?;
            if used[i] {
                return Err(KbError::Input("symmetry is not a permutation".into()));
            }
            used[i] = true;
            perm[j] = i;
            sign[j] = s;
        }
        Ok(GridSymmetry {
            grid: *grid,
            perm,
            sign,
        })
    }

    /// Image cell of `idx` under `x ↦ Qx` (reflections about the origin map
    /// cell `i` to `n-1-i`).
    pub fn map_cell(&self, idx: usize) -> usize {
        let n = self.grid.n();
        let m = self.grid.unravel(idx);
        let mut out = [0; 3];
        for j in 0..self.grid.dim() {
            out[self.perm[j]] = if self.sign[j] > 0.0 {
                m[j]
            } else {
                n - 1 - m[j]
            };
        }
        self.grid.ravel(&out)
    }

    /// `Q v` for a vector.
    pub fn map_vec(&self, v: &[f64], out: &mut [f64]) {
        for j in 0..self.grid.dim() {
            out[self.perm[j]] = self.sign[j] * v[j];
        }
    }
}

/// Fixture generators for [`synth_measure`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// `G ≡ P`.
    Constant { matrix: Vec<Vec<f64>> },
    /// `G(x) = P · (1 + exp(-|x - c|² / (2 w²)))`, torus distance; `w = 0` gives `P`.
    Bump {
        center: Vec<f64>,
        width: f64,
        matrix: Vec<Vec<f64>>,
    },
    /// `G(x) = a(x) · Rθ(x) P Rθ(x)ᵀ`, rotating the eigenframe in the first
    /// coordinate plane with `profile` turns per unit length; the seed picks
    /// the phases of the rotation and of the amplitude modulation `a`.
    Rotating { matrix: Vec<Vec<f64>>, profile: f64 },
    /// Smooth random positive-definite field `floor·I + amplitude · B Bᵀ / size`
    /// with `B(x)` a random first-order trigonometric polynomial.
    Smooth { floor: f64, amplitude: f64 },
}

fn psd_from_rows(rows: &[Vec<f64>]) -> Result<PsdMatrix> {
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    PsdMatrix::from_rows(&refs)
}

fn torus_delta(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Deterministic fixture generation.
pub fn synth_measure(grid: GridSpec, generator: &Generator, seed: u64) -> Result<MatrixMeasure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let expect = |p: &PsdMatrix| -> Result<()> {
        if !grid.is_point() && p.n() != grid.dim() {
            return Err(KbError::Input(format!(
                "generator matrix is {}x{}, grid needs {}x{}",
                p.n(),
                p.n(),
                grid.dim(),
                grid.dim()
            )));
        }
        Ok(())
    };
    let two_pi = 2.0 * std::f64::consts::PI;
    match generator {
        Generator::Constant { matrix } => {
            let p = psd_from_rows(matrix)?;
            expect(&p)?;
            MatrixMeasure::constant(grid, p)
        }
        Generator::Bump {
            center,
            width,
            matrix,
        } => {
            let p = psd_from_rows(matrix)?;
            expect(&p)?;
            if *width < 0.0 {
                return Err(KbError::Input("bump width must be >= 0".into()));
            }
            let w = *width;
            let c = center.clone();
            MatrixMeasure::from_fn(grid, |x| {
                let bump = if w == 0.0 {
                    0.0
                } else {
                    let r2: f64 = (0..grid.dim())
                        .map(|a| torus_delta(x[a], c.get(a).copied().unwrap_or(0.5)).powi(2))
                        .sum();
                    (-r2 / (2.0 * w * w)).exp()
                };
                p.sym().scale(1.0 + bump)
            })
        }
        Generator::Rotating { matrix, profile } => {
            let p = psd_from_rows(matrix)?;
            expect(&p)?;
            let phase0: f64 = rng.gen_range(0.0..two_pi);
            let phase1: f64 = rng.gen_range(0.0..two_pi);
            let size = p.n();
            MatrixMeasure::from_fn(grid, |x| {
                let last = if grid.dim() > 0 {
                    x[grid.dim() - 1]
                } else {
                    0.0
                };
                let amp = 1.0 + 0.5 * (two_pi * last + phase1).sin();
                let mut rot = Mat::identity(size);
                if size >= 2 {
                    let th = two_pi * profile * x[0] + phase0;
                    let (s, c) = th.sin_cos();
                    rot[(0, 0)] = c;
                    rot[(0, 1)] = -s;
                    rot[(1, 0)] = s;
                    rot[(1, 1)] = c;
                }
                p.sym().congruence(&rot).scale(amp)
            })
        }
        Generator::Smooth { floor, amplitude } => {
            if *floor < 0.0 || *amplitude < 0.0 {
                return Err(KbError::Input(
                    "smooth generator needs floor, amplitude >= 0".into(),
                ));
            }
            let size = if grid.is_point() { 2 } else { grid.dim() };
            smooth_random(grid, size, *floor, *amplitude, &mut rng)
        }
    }
}

/// Smooth random positive-definite field with the given matrix size (the
/// size must match the grid unless the grid is the point grid).
pub fn smooth_random<R: Rng + ?Sized>(
    grid: GridSpec,
    size: usize,
    floor: f64,
    amplitude: f64,
    rng: &mut R,
) -> Result<MatrixMeasure> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let d = grid.dim();
    // B(x) = C0 + Σ_a (Ca cos(2π x_a) + Sa sin(2π x_a))
    let mut coeffs = Vec::with_capacity(1 + 2 * d);
    for _ in 0..(1 + 2 * d) {
        coeffs.push(Mat::from_fn(size, |_, _| rng.gen_range(-1.0..1.0)));
    }
    MatrixMeasure::from_fn(grid, |x| {
        let mut b = coeffs[0];
        for a in 0..d {
            let (s, c) = (two_pi * x[a]).sin_cos();
            b += coeffs[1 + 2 * a] * (0.5 * c) + coeffs[2 + 2 * a] * (0.5 * s);
        }
        let bbt = b * b.transpose();
        SymMatrix::from_mat_sym(&(bbt * (amplitude / size as f64) + Mat::identity(size) * floor))
    })
}

/// Random symmetric positive-definite matrix `A Aᵀ / n + floor · I`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, n: usize, floor: f64) -> PsdMatrix {
    let a = Mat::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let m = a * a.transpose() * (1.0 / n as f64) + Mat::identity(n) * floor;
    PsdMatrix::assume(SymMatrix::from_mat_sym(&m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(m: &[&[f64]]) -> Vec<Vec<f64>> {
        m.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn mass_of_identity_and_zero() {
        let g = GridSpec::new(2, 4).unwrap();
        let id = MatrixMeasure::constant(g, PsdMatrix::identity(2)).unwrap();
        assert!((id.total_mass() - 2.0).abs() < 1e-14);
        assert_eq!(MatrixMeasure::zeros(g, 2).total_mass(), 0.0);
    }

    #[test]
    fn normalize_and_scale() {
        let g = GridSpec::new(1, 4).unwrap();
        let m4 = MatrixMeasure::constant(g, PsdMatrix::diag(&[4.0]).unwrap()).unwrap();
        let (hat, r) = m4.normalize_to_unit_mass().unwrap();
        assert!((r - 2.0).abs() < 1e-15);
        assert!((hat.total_mass() - 1.0).abs() < 1e-12);
        let back = hat.scale_measure(r);
        for (a, b) in back.values().iter().zip(m4.values()) {
            assert!((*a.mat() - *b.mat()).max_abs() < 1e-12);
        }
        assert!(MatrixMeasure::zeros(g, 1).normalize_to_unit_mass().is_err());
        assert_eq!(hat.scale_measure(0.0).total_mass(), 0.0);
        assert!((hat.scale_measure(3.0).total_mass() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn quadrature_refinement_converges() {
        let f = |x: [f64; 3]| SymMatrix::diag(&[(1.0 + 0.5 * (x[0] * 7.0).sin()).powi(2)]);
        let coarse = MatrixMeasure::from_fn(GridSpec::new(1, 16).unwrap(), f).unwrap();
        let fine = MatrixMeasure::from_fn(GridSpec::new(1, 32).unwrap(), f).unwrap();
        let diff = (coarse.total_mass() - fine.total_mass()).abs();
        assert!(diff < 16f64.powi(-2), "{diff}");
    }

    #[test]
    fn synth_contracts() {
        let g = GridSpec::new(2, 4).unwrap();
        let c = synth_measure(
            g,
            &Generator::Constant {
                matrix: rows(&[&[1.0, 0.0], &[0.0, 1.0]]),
            },
            0,
        )
        .unwrap();
        assert!(c.values().iter().all(|v| *v == PsdMatrix::identity(2)));
        let flat = synth_measure(
            g,
            &Generator::Bump {
                center: vec![0.5, 0.5],
                width: 0.0,
                matrix: rows(&[&[2.0, 0.0], &[0.0, 1.0]]),
            },
            3,
        )
        .unwrap();
        assert!(flat.values().iter().all(|v| *v == flat.values()[0]));
        let gen = Generator::Rotating {
            matrix: rows(&[&[2.0, 0.0], &[0.0, 1.0]]),
            profile: 1.0,
        };
        let a = synth_measure(g, &gen, 11).unwrap();
        let b = synth_measure(g, &gen, 11).unwrap();
        assert_eq!(a.to_upper_vec(), b.to_upper_vec());
        let wrong = Generator::Constant {
            matrix: rows(&[&[1.0]]),
        };
        assert!(matches!(
            synth_measure(g, &wrong, 0),
            Err(KbError::Input(_))
        ));
    }

    #[test]
    fn axis_swap_conjugation() {
        let g = GridSpec::new(2, 4).unwrap();
        let m = MatrixMeasure::constant(g, PsdMatrix::diag(&[1.0, 2.0]).unwrap()).unwrap();
        let swap = Mat::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let out = m.orthogonal_conjugate(&swap).unwrap();
        assert!(out
            .values()
            .iter()
            .all(|v| (*v.mat() - Mat::diag(&[2.0, 1.0])).max_abs() == 0.0));
        let id = m.orthogonal_conjugate(&Mat::identity(2)).unwrap();
        assert_eq!(id, m);
        let rot = Mat::from_rows(&[&[0.6, -0.8], &[0.8, 0.6]]).unwrap();
        assert!(m.orthogonal_conjugate(&rot).is_err());
    }

    #[test]
    fn conjugation_preserves_mass_and_spectra() {
        let g = GridSpec::new(2, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = smooth_random(g, 2, 0.1, 1.0, &mut rng).unwrap();
        let q = Mat::from_rows(&[&[0.0, -1.0], &[1.0, 0.0]]).unwrap();
        let sym = GridSymmetry::from_matrix(&q, &g).unwrap();
        let out = m.orthogonal_conjugate(&q).unwrap();
        assert!((out.total_mass() - m.total_mass()).abs() < 1e-14);
        for i in 0..g.cells() {
            let a = m.value(i).sym().eigen();
            let b = out.value(sym.map_cell(i)).sym().eigen();
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-13);
            }
        }
    }
}
