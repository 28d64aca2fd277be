//! Ladder-amplitude machinery on top of a no-cross mode basis.
//!
//! The field operator is q̂ = Σ q̃_n √(ħ/2ω_n) (â_n + â_n†); a classical state
//! with modal amplitudes d evolves as q(t) = Σ q̃_n d_n e^{−iω_n t} + c.c.

use std::sync::Arc;

use faer::Mat;
use num_complex::Complex64;

use crate::eigensolver::{Description, ModeBasis};
use crate::error::{Error, Result};
use crate::medium::{analytic_wavenumber, permittivity, LorentzSpecies};

#[derive(Debug, Clone)]
pub struct QuantizedBasis {
    pub basis: Arc<ModeBasis>,
    /// √(ħ/(2ω_n)).
    pub scales: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    VectorPotential,
    Electric,
}

/// Positive-frequency field operator at one grid point, as mode weights.
#[derive(Debug, Clone)]
pub struct FieldKernel {
    pub index: usize,
    pub x: f64,
    pub weights: Vec<Complex64>,
    /// Distance moved when snapping the requested point onto the grid.
    pub snap_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketSpec {
    pub center: f64,
    pub width: f64,
    pub carrier: f64,
    /// +1 travels toward +x, −1 toward −x.
    pub direction: f64,
}

impl QuantizedBasis {
    pub fn new(basis: impl Into<Arc<ModeBasis>>) -> Result<Self> {
        let basis = basis.into();
        if basis.description != Description::NoCross {
            return Err(Error::InvalidParameter("quantization uses the no-cross description".into()));
        }
        let hbar = basis.consts.hbar;
        let scales = basis.omegas.iter().map(|w| (hbar / (2.0 * w)).sqrt()).collect();
        Ok(Self { basis, scales })
    }

    pub fn n_modes(&self) -> usize {
        self.basis.n_modes()
    }

    pub fn omegas(&self) -> &[f64] {
        &self.basis.omegas
    }

    /// p̃_n = −iω_n M⁻¹ q̃_n.
    pub fn conjugate_mode(&self, n: usize) -> Vec<Complex64> {
        let sys = self.basis.system().expect("no-cross basis");
        let q = self.basis.modes.col(n);
        let w = self.basis.omegas[n];
        sys.mass.inverse().apply(&q).into_iter().map(|v| v * Complex64::new(0.0, -w)).collect()
    }

    fn real_modes(&self) -> Result<&Mat<f64>> {
        if !self.basis.grid.is_periodic() {
            return Err(Error::BlochPhase);
        }
        match &self.basis.modes {
            crate::eigensolver::ModeMatrix::Real(q) => Ok(q),
            _ => Err(Error::InvalidParameter("real-field extraction needs real standing modes".into())),
        }
    }

    /// Modal amplitudes of a real classical state (q0, p0).
    pub fn extract_amplitudes(&self, q0: &[f64], p0: &[f64]) -> Result<Vec<Complex64>> {
        let q = self.real_modes()?;
        let dim = q.nrows();
        for v in [q0, p0] {
            if v.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: v.len() });
            }
        }
        let sys = self.basis.system()?;
        let mq = sys.mass.inverse().apply(q0);
        let dx = self.basis.weight();
        Ok((0..q.ncols())
            .map(|n| {
                let col = q.col_as_slice(n);
                let re: f64 = col.iter().zip(&mq).map(|(a, b)| a * b).sum();
                let im: f64 = col.iter().zip(p0).map(|(a, b)| a * b).sum();
                Complex64::new(0.5 * dx * re, 0.5 * dx * im / self.basis.omegas[n])
            })
            .collect())
    }

    /// Real classical state (q0, p0) with modal amplitudes d.
    pub fn reconstruct(&self, d: &[Complex64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let q = self.real_modes()?;
        if d.len() != q.ncols() {
            return Err(Error::DimensionMismatch { expected: q.ncols(), found: d.len() });
        }
        let dim = q.nrows();
        let mut q0 = vec![0.0; dim];
        let mut s = vec![0.0; dim];
        for (n, dn) in d.iter().enumerate() {
            let col = q.col_as_slice(n);
            let w = self.basis.omegas[n];
            for i in 0..dim {
                q0[i] += 2.0 * col[i] * dn.re;
                s[i] += 2.0 * w * col[i] * dn.im;
            }
        }
        let p0 = self.basis.system()?.mass.inverse().apply(&s);
        Ok((q0, p0))
    }

    /// Complex-linear positive-frequency projection of a (q, p) pair.
    pub fn project_positive(&self, q: &[Complex64], p: &[Complex64]) -> Result<Vec<Complex64>> {
        let dim = self.basis.modes.nrows();
        for v in [q, p] {
            if v.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: v.len() });
            }
        }
        let mq = self.basis.system()?.mass.inverse().apply(q);
        let dx = self.basis.weight();
        let f = Mat::<Complex64>::from_fn(dim, 2, |i, j| if j == 0 { mq[i] } else { p[i] });
        let c = self.basis.modes.adjoint_apply(&f);
        Ok((0..self.n_modes())
            .map(|n| 0.5 * dx * (c[(n, 0)] + Complex64::new(0.0, 1.0 / self.basis.omegas[n]) * c[(n, 1)]))
            .collect())
    }

    /// Amplitudes d (one column per field) of the positive-frequency solutions
    /// whose generalized coordinate equals each column of `q`.
    pub fn project_coordinates(&self, q: &Mat<Complex64>) -> Result<Mat<Complex64>> {
        let dim = self.basis.modes.nrows();
        if q.nrows() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: q.nrows() });
        }
        let minv = self.basis.system()?.mass.inverse();
        let mq = crate::eigensolver::block_rows(&minv, q);
        let c = self.basis.modes.adjoint_apply(&mq);
        let dx = self.basis.weight();
        Ok(Mat::from_fn(c.nrows(), c.ncols(), |i, j| c[(i, j)] * dx))
    }

    /// Ladder amplitudes of a normalized one-photon wavepacket whose
    /// vector-potential amplitude is a Gaussian with the given carrier.
    pub fn gaussian_packet(&self, spec: &PacketSpec) -> Result<Vec<Complex64>> {
        if !(spec.width > 0.0) {
            return Err(Error::InvalidParameter("packet width must be positive".into()));
        }
        let sys = self.basis.system()?;
        let grid = &self.basis.grid;
        let len = grid.length();
        let dim = self.basis.modes.nrows();
        let dir = spec.direction.signum();
        let mut f = Mat::<Complex64>::zeros(dim, 1);
        let mut peak: f64 = 0.0;
        let mut tail: f64 = 0.0;
        for i in 0..grid.n_points {
            let x = grid.x(i);
            // nearest periodic image of the packet center
            let dxc = (x - spec.center + 0.5 * len).rem_euclid(len) - 0.5 * len;
            let env = (-0.5 * (dxc / spec.width).powi(2)).exp();
            f[(i, 0)] = env * Complex64::from_polar(1.0, dir * spec.carrier * x);
            peak = peak.max(env);
            if sys.is_material(i) {
                tail = tail.max(env);
            }
        }
        if tail > 1e-6 * peak {
            return Err(Error::SupportViolation { tail: tail / peak });
        }
        let d = self.project_coordinates(&f)?;
        let mut g: Vec<Complex64> = (0..self.n_modes()).map(|n| d[(n, 0)] / self.scales[n]).collect();
        let max = g.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        for v in g.iter_mut() {
            if v.norm() < 1e-4 * max {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        let norm = g.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        g.iter_mut().for_each(|v| *v /= norm);
        Ok(g)
    }

    pub fn field_kernel(&self, x_d: f64, kind: FieldKind) -> FieldKernel {
        let (index, snap_distance) = self.basis.grid.nearest(x_d);
        let weights = (0..self.n_modes())
            .map(|n| {
                let w = self.basis.modes.get(index, n) * self.scales[n];
                match kind {
                    FieldKind::VectorPotential => w,
                    FieldKind::Electric => w * Complex64::new(0.0, self.basis.omegas[n]),
                }
            })
            .collect();
        FieldKernel { index, x: self.basis.grid.x(index), weights, snap_distance }
    }

    /// Normal-ordered ⟨Ĥ⟩ of the coherent state with classical amplitudes d,
    /// 2Σω²|d|², which is also the classical field energy.
    pub fn hamiltonian_expectation(&self, d: &[Complex64]) -> f64 {
        d.iter().zip(self.omegas()).map(|(v, w)| 2.0 * w * w * v.norm_sqr()).sum()
    }

    /// Normal-ordered Σħω n̄ for mode occupations n̄.
    pub fn photon_energy(&self, occupations: &[f64]) -> f64 {
        occupations.iter().zip(self.omegas()).map(|(n, w)| self.basis.consts.hbar * w * n).sum()
    }

    /// Σħω/2, reported separately and never added to observables.
    pub fn zero_point_energy(&self) -> f64 {
        0.5 * self.basis.consts.hbar * self.omegas().iter().sum::<f64>()
    }

    /// Deviation of the aggregated Ã/Π̃_AP ratio of mode n from i/(ωε0ε(ω)).
    /// The ratio is a least-squares fit over all grid points.
    pub fn mode_ratio_deviation(&self, n: usize, species: Option<&LorentzSpecies>, eps_inf: f64) -> Result<f64> {
        let npts = self.basis.grid.n_points;
        let a = self.basis.a_sector(n);
        let p = self.conjugate_mode(n);
        let num: Complex64 = (0..npts).map(|i| p[i].conj() * a[i]).sum();
        let den: f64 = (0..npts).map(|i| p[i].norm_sqr()).sum();
        let ratio = num / den;
        let w = self.basis.omegas[n];
        let eps = permittivity(species, eps_inf, w)?;
        let expect = Complex64::new(0.0, 1.0 / (w * self.basis.consts.eps0 * eps));
        Ok((ratio / expect - 1.0).norm())
    }

    /// Worst mode-ratio deviation over the modes with k(ω)Δx below `max_kdx`,
    /// together with the per-mode (index, kΔx, deviation) samples. The uniform
    /// mode at a branch edge (k under half the lattice step π/L) is skipped,
    /// since ε(ω) = 0 there and C₀ diverges.
    pub fn mode_ratio_check(
        &self,
        species: Option<&LorentzSpecies>,
        eps_inf: f64,
        max_kdx: f64,
    ) -> Result<(f64, Vec<(usize, f64, f64)>)> {
        let dx = self.basis.weight();
        let mut samples = Vec::new();
        for n in 0..self.n_modes() {
            let w = self.basis.omegas[n];
            let Ok(k) = analytic_wavenumber(species, eps_inf, w, &self.basis.consts) else { continue };
            if k * dx >= max_kdx || k < std::f64::consts::PI / self.basis.grid.length() {
                continue;
            }
            samples.push((n, k * dx, self.mode_ratio_deviation(n, species, eps_inf)?));
        }
        let worst = samples.iter().map(|s| s.2).fold(0.0, f64::max);
        Ok((worst, samples))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_no_cross, hamiltonian_energy, SnapPolicy};
    use crate::eigensolver::solve;
    use crate::lattice::Grid1D;
    use crate::medium::{MediumProfile, PhysicalConstants};

    fn slab_basis() -> QuantizedBasis {
        let g = Grid1D::periodic(2.0, 40, 0.0).unwrap();
        let sp = LorentzSpecies::new(6.0, 5.0).unwrap();
        let p = MediumProfile::slab(2.0, 0.0, 0.5, 1.5, Some(sp)).unwrap();
        let s = assemble_no_cross(&g, &p, &PhysicalConstants::natural(), SnapPolicy::Strict).unwrap();
        QuantizedBasis::new(solve(&s).unwrap()).unwrap()
    }

    #[test]
    fn single_mode_amplitudes() {
        let qb = slab_basis();
        let q1: Vec<f64> = qb.basis.modes.col(0).iter().map(|c| c.re).collect();
        let zero = vec![0.0; q1.len()];
        let d = qb.extract_amplitudes(&q1, &zero).unwrap();
        assert!((d[0] - Complex64::new(0.5, 0.0)).norm() < 1e-12);
        assert!(d[1..].iter().all(|v| v.norm() < 1e-12));
        let sys = qb.basis.system().unwrap();
        let w = qb.omegas()[0];
        let p: Vec<f64> = sys.mass.inverse().apply(&q1).iter().map(|v| 2.0 * w * v).collect();
        let d = qb.extract_amplitudes(&zero, &p).unwrap();
        assert!((d[0] - Complex64::new(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn hamiltonian_expectation_matches_quadratic_form() {
        let qb = slab_basis();
        let d: Vec<Complex64> =
            (0..qb.n_modes()).map(|n| Complex64::new((n as f64 * 0.7).sin(), (n as f64 * 0.3).cos())).collect();
        let (q0, p0) = qb.reconstruct(&d).unwrap();
        let c = |v: &[f64]| v.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>();
        let e = hamiltonian_energy(qb.basis.system().unwrap(), &c(&q0), &c(&p0)).unwrap();
        let e2 = qb.hamiltonian_expectation(&d);
        assert!((e - e2).abs() < 1e-10 * e2, "{e} {e2}");
        let back = qb.extract_amplitudes(&q0, &p0).unwrap();
        let err = back.iter().zip(&d).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn electric_kernel_is_scaled_vector_kernel() {
        let qb = slab_basis();
        let a = qb.field_kernel(0.3, FieldKind::VectorPotential);
        let e = qb.field_kernel(0.3, FieldKind::Electric);
        for n in 0..qb.n_modes() {
            assert_eq!(e.weights[n], a.weights[n] * Complex64::new(0.0, qb.omegas()[n]));
        }
    }
}
