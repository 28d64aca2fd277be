//! Uniform Bloch-periodic grid, the second-difference operator and the
//! degree-of-freedom layout.

use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub n_points: usize,
    pub spacing: f64,
    pub origin: f64,
    pub bloch_phase: f64,
}

impl Grid1D {
    /// N points covering [-L/2, L/2) with Δx = L/N.
    pub fn periodic(length: f64, n_points: usize, bloch_phase: f64) -> Result<Self> {
        if n_points < 3 {
            return Err(Error::InvalidParameter(format!("grid needs at least 3 points, got {n_points}")));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidParameter(format!("grid length {length} must be positive")));
        }
        let bloch_phase = bloch_phase.rem_euclid(std::f64::consts::TAU);
        Ok(Self { n_points, spacing: length / n_points as f64, origin: -0.5 * length, bloch_phase })
    }

    pub fn length(&self) -> f64 {
        self.spacing * self.n_points as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.spacing
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    pub fn is_periodic(&self) -> bool {
        self.bloch_phase == 0.0
    }

    /// Index of the grid point nearest to `x` (periodic wrap) and the snapping distance.
    pub fn nearest(&self, x: f64) -> (usize, f64) {
        let n = self.n_points as f64;
        let s = ((x - self.origin) / self.spacing).round().rem_euclid(n);
        let i = s as usize % self.n_points;
        let d = (x - self.origin - i as f64 * self.spacing).rem_euclid(self.length());
        (i, d.min(self.length() - d))
    }
}

/// Square matrix stored as (row, col, value) triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplets {
    pub dim: usize,
    pub entries: Vec<(usize, usize, Complex64)>,
}

impl Triplets {
    pub fn new(dim: usize) -> Self {
        Self { dim, entries: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, value: Complex64) {
        self.entries.push((row, col, value));
    }

    pub fn is_real(&self) -> bool {
        self.entries.iter().all(|e| e.2.im == 0.0)
    }

    pub fn to_dense(&self) -> Mat<Complex64> {
        let mut m = Mat::<Complex64>::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }

    pub fn to_dense_real(&self) -> Result<Mat<f64>> {
        if !self.is_real() {
            return Err(Error::Invariant("operator has complex entries".into()));
        }
        let mut m = Mat::<f64>::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v.re;
        }
        Ok(m)
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim];
        for &(i, j, a) in &self.entries {
            out[i] += a * v[j];
        }
        out
    }

    /// Entrywise A == A† after merging duplicates.
    pub fn is_hermitian(&self) -> bool {
        let d = self.to_dense();
        (0..self.dim).all(|i| (0..self.dim).all(|j| d[(i, j)] == d[(j, i)].conj()))
    }

    /// `row col value` lines, one per stored entry.
    pub fn write_text(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "# dim {}", self.dim)?;
        for &(i, j, v) in &self.entries {
            if v.im == 0.0 {
                writeln!(w, "{i} {j} {:.17e}", v.re)?;
            } else {
                writeln!(w, "{i} {j} {:.17e} {:.17e}", v.re, v.im)?;
            }
        }
        Ok(())
    }
}

/// (1/μ0)·(−1, 2, −1)/Δx² with the Bloch phase applied across the wrap.
pub fn second_difference(grid: &Grid1D, mu0: f64) -> Triplets {
    let n = grid.n_points;
    let s = 1.0 / (mu0 * grid.spacing * grid.spacing);
    let mut t = Triplets::new(n);
    let phase = Complex64::from_polar(1.0, grid.bloch_phase);
    let phase = if grid.bloch_phase == 0.0 { Complex64::new(1.0, 0.0) } else { phase };
    for i in 0..n {
        t.push(i, i, Complex64::new(2.0 * s, 0.0));
        if i > 0 {
            t.push(i, i - 1, Complex64::new(-s, 0.0));
        } else {
            t.push(0, n - 1, -s * phase.conj());
        }
        if i + 1 < n {
            t.push(i, i + 1, Complex64::new(-s, 0.0));
        } else {
            t.push(n - 1, 0, -s * phase);
        }
    }
    t
}

/// Closed-form spectrum of [`second_difference`]: 4/(μ0Δx²)·sin²((2πm + θ)/(2N)).
pub fn second_difference_eigenvalues(grid: &Grid1D, mu0: f64) -> Vec<f64> {
    let n = grid.n_points as f64;
    let s = 4.0 / (mu0 * grid.spacing * grid.spacing);
    (0..grid.n_points)
        .map(|m| s * ((std::f64::consts::TAU * m as f64 + grid.bloch_phase) / (2.0 * n)).sin().powi(2))
        .collect()
}

pub fn sample_field(grid: &Grid1D, f: impl Fn(f64) -> Complex64) -> Vec<Complex64> {
    (0..grid.n_points).map(|i| f(grid.x(i))).collect()
}

/// Slot map of the generalized coordinates: one field slot per grid point,
/// followed by one oscillator slot per oscillator point.
#[derive(Debug, Clone, PartialEq)]
pub struct DofLayout {
    pub n_points: usize,
    pub osc_points: Vec<usize>,
}

impl DofLayout {
    pub fn dim(&self) -> usize {
        self.n_points + self.osc_points.len()
    }

    pub fn n_osc(&self) -> usize {
        self.osc_points.len()
    }

    pub fn osc_slot(&self, j: usize) -> usize {
        self.n_points + j
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_vector_in_null_space() {
        let g = Grid1D::periodic(2.0, 17, 0.0).unwrap();
        let d = second_difference(&g, 1.0);
        let out = d.apply(&vec![Complex64::new(1.0, 0.0); 17]);
        assert!(out.iter().all(|v| v.norm() < 1e-9));
    }

    #[test]
    fn hermitian_for_any_phase() {
        for th in [0.0, 0.3, std::f64::consts::PI, 5.9] {
            let g = Grid1D::periodic(1.0, 9, th).unwrap();
            assert!(second_difference(&g, 1.0).is_hermitian());
        }
    }

    #[test]
    fn rejects_tiny_grids() {
        assert!(Grid1D::periodic(1.0, 2, 0.0).is_err());
    }

    #[test]
    fn nearest_point_wraps() {
        let g = Grid1D::periodic(1.0, 10, 0.0).unwrap();
        assert_eq!(g.nearest(0.0).0, 5);
        assert_eq!(g.nearest(0.4999).0, 0);
        assert!(g.nearest(0.12).1 < 0.05 + 1e-12);
    }

    #[test]
    fn sampled_plane_wave_is_single_bin() {
        use rustfft::FftPlanner;
        let g = Grid1D::periodic(3.0, 64, 0.0).unwrap();
        let k = std::f64::consts::TAU / 3.0;
        let mut v = sample_field(&g, |x| Complex64::from_polar(1.0, k * x));
        FftPlanner::new().plan_fft_forward(64).process(&mut v);
        let big = v.iter().filter(|c| c.norm() > 1e-9).count();
        assert_eq!(big, 1);
        assert!(v[1].norm() > 60.0);
    }
}
