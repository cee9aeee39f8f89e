//! Uniform periodic grids on the unit torus and the spectral (Fourier)
//! differentiation used everywhere a spatial derivative appears.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{KbError, Result};

/// Upper bound on `d · n^d`.
pub const MAX_GRID_ENTRIES: usize = 1 << 24;

/// A uniform grid with `n` cells per axis on the torus `[0,1)^d`.
///
/// `d = 0` is the single-point grid used for pointwise (pure reaction)
/// computations; it has one cell of volume 1 and no spatial derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    n: usize,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(KbError::Input(format!(
                "spatial dimension {dim} outside 1..=3"
            )));
        }
        if n < 2 || !n.is_multiple_of(2) {
            return Err(KbError::Input(format!(
                "cells per axis must be even and >= 2, got {n}"
            )));
        }
        let cells = n
            .checked_pow(dim as u32)
            .filter(|c| c.saturating_mul(dim) <= MAX_GRID_ENTRIES)
            .ok_or_else(|| KbError::Input(format!("grid {n}^{dim} exceeds the memory cap")))?;
        debug_assert!(cells > 0);
        Ok(GridSpec { dim, n })
    }

    /// The one-cell grid of the pointwise mode.
    pub fn point() -> Self {
        GridSpec { dim: 0, n: 1 }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_point(&self) -> bool {
        self.dim == 0
    }

    #[inline]
    pub fn cells(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        1.0 / self.cells() as f64
    }

    /// Multi-index of a cell, axis 0 slowest.
    pub fn unravel(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for a in (0..self.dim).rev() {
            out[a] = idx % self.n;
            idx /= self.n;
        }
        out
    }

    pub fn ravel(&self, multi: &[usize]) -> usize {
        multi[..self.dim].iter().fold(0, |acc, &i| acc * self.n + i)
    }

    /// Cell center coordinates in `[0,1)^d`.
    pub fn center(&self, idx: usize) -> [f64; 3] {
        let m = self.unravel(idx);
        let h = 1.0 / self.n as f64;
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = (m[a] as f64 + 0.5) * h;
        }
        x
    }
}

/// Fourier transforms and derivative symbols on a [`GridSpec`].
#[derive(Clone)]
pub struct Spectral {
    grid: GridSpec,
    fwd: Option<Arc<dyn Fft<f64>>>,
    inv: Option<Arc<dyn Fft<f64>>>,
    /// Derivative symbol per 1-d frequency index (`∂ ↦ i·wave[k]`), Nyquist zeroed.
    wave: Vec<f64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral")
            .field("grid", &self.grid)
            .finish()
    }
}

impl Spectral {
    pub fn new(grid: GridSpec) -> Self {
        if grid.is_point() {
            return Spectral {
                grid,
                fwd: None,
                inv: None,
                wave: vec![0.0],
            };
        }
        let n = grid.n();
        let mut planner = FftPlanner::new();
        let wave = (0..n)
            .map(|k| {
                let signed = if k < n / 2 {
                    k as f64
                } else if k == n / 2 {
                    0.0
                } else {
                    k as f64 - n as f64
                };
                2.0 * std::f64::consts::PI * signed
            })
            .collect();
        Spectral {
            grid,
            fwd: Some(planner.plan_fft_forward(n)),
            inv: Some(planner.plan_fft_inverse(n)),
            wave,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Derivative symbol `ξ_axis` of the frequency with flat index `freq`.
    pub fn symbol(&self, freq: usize) -> [f64; 3] {
        let m = self.grid.unravel(freq);
        let mut xi = [0.0; 3];
        for a in 0..self.grid.dim() {
            xi[a] = self.wave[m[a]];
        }
        xi
    }

    /// Largest eigenvalue of the (negative) spectral Laplacian.
    pub fn laplacian_bound(&self) -> f64 {
        let kmax = self.wave.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        self.grid.dim() as f64 * kmax * kmax
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n();
        let d = self.grid.dim();
        let total = self.grid.cells();
        debug_assert_eq!(data.len(), total);
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for axis in 0..d {
            let stride = n.pow((d - 1 - axis) as u32);
            let block = stride * n;
            for base in (0..total).step_by(block) {
                for off in 0..stride {
                    let start = base + off;
                    for (k, v) in line.iter_mut().enumerate() {
                        *v = data[start + k * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (k, v) in line.iter().enumerate() {
                        data[start + k * stride] = *v;
                    }
                }
            }
        }
    }

    /// In-place forward transform (unnormalized).
    pub fn forward(&self, data: &mut [Complex64]) {
        if let Some(p) = &self.fwd {
            self.transform(data, p);
        }
    }

    /// In-place inverse transform, normalized so that `inverse ∘ forward = id`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        if let Some(p) = &self.inv {
            self.transform(data, p);
            let s = 1.0 / self.grid.cells() as f64;
            for v in data.iter_mut() {
                *v *= s;
            }
        }
    }

    /// Spectral partial derivative of a real field along `axis`.
    pub fn derivative(&self, field: &[f64], axis: usize) -> Vec<f64> {
        let mut buf: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        for (f, v) in buf.iter_mut().enumerate() {
            let xi = self.symbol(f)[axis];
            *v *= Complex64::new(0.0, xi);
        }
        self.inverse(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(2, 3).is_err());
        assert!(GridSpec::new(0, 4).is_err());
        assert!(GridSpec::new(4, 4).is_err());
        assert!(GridSpec::new(1, 0).is_err());
        let g = GridSpec::new(2, 4).unwrap();
        assert_eq!(g.cells(), 16);
        assert_eq!(g.ravel(&g.unravel(13)), 13);
        assert!((g.cell_volume() - 1.0 / 16.0).abs() < 1e-18);
    }

    #[test]
    fn derivative_of_trigonometric_field_is_exact() {
        let g = GridSpec::new(2, 8).unwrap();
        let s = Spectral::new(g);
        let two_pi = 2.0 * std::f64::consts::PI;
        let f: Vec<f64> = (0..g.cells())
            .map(|i| {
                let x = g.center(i);
                (two_pi * x[0]).sin() * (2.0 * two_pi * x[1]).cos()
            })
            .collect();
        let dy = s.derivative(&f, 1);
        for (i, v) in dy.iter().enumerate() {
            let x = g.center(i);
            let exact = -2.0 * two_pi * (two_pi * x[0]).sin() * (2.0 * two_pi * x[1]).sin();
            assert!((v - exact).abs() < 1e-11, "{v} vs {exact}");
        }
    }

    #[test]
    fn roundtrip_transform() {
        let g = GridSpec::new(3, 4).unwrap();
        let s = Spectral::new(g);
        let orig: Vec<Complex64> = (0..g.cells())
            .map(|i| Complex64::new(i as f64 * 0.3, -(i as f64)))
            .collect();
        let mut buf = orig.clone();
        s.forward(&mut buf);
        s.inverse(&mut buf);
        for (a, b) in buf.iter().zip(orig.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
