//! Reference calculations that share no code with the solver: dense Fock
//! algebra on a few modes, closed-form mode amplitudes of a homogeneous
//! Lorentz medium, circulant spectra and an ideal-splitter HOM curve.

use std::collections::HashMap;
use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::medium::{LorentzSpecies, PhysicalConstants};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    Create,
    Annihilate,
}

/// Occupation-number basis on at most four modes with bounded total photon number.
#[derive(Debug, Clone)]
pub struct FockSpace {
    modes: usize,
    max_total: u32,
    basis: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl FockSpace {
    pub fn new(modes: usize, max_total: u32) -> Result<Self> {
        if modes == 0 || modes > 4 {
            return Err(Error::InvalidParameter(format!("Fock oracle supports 1 to 4 modes, got {modes}")));
        }
        let mut basis = Vec::new();
        let mut occ = vec![0u32; modes];
        loop {
            if occ.iter().sum::<u32>() <= max_total {
                basis.push(occ.clone());
            }
            let mut i = 0;
            loop {
                if i == modes {
                    let index = basis.iter().enumerate().map(|(k, b)| (b.clone(), k)).collect();
                    return Ok(Self { modes, max_total, basis, index });
                }
                occ[i] += 1;
                if occ[i] <= max_total {
                    break;
                }
                occ[i] = 0;
                i += 1;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn vacuum(&self) -> Vec<Complex64> {
        let mut v = vec![ZERO; self.dim()];
        v[self.index[&vec![0; self.modes]]] = Complex64::new(1.0, 0.0);
        v
    }

    /// Dense matrix of â_n.
    pub fn annihilation(&self, n: usize) -> Mat<Complex64> {
        let mut m = Mat::<Complex64>::zeros(self.dim(), self.dim());
        for (col, occ) in self.basis.iter().enumerate() {
            if occ[n] > 0 {
                let mut o = occ.clone();
                o[n] -= 1;
                m[(self.index[&o], col)] = Complex64::new((occ[n] as f64).sqrt(), 0.0);
            }
        }
        m
    }

    pub fn apply(&self, n: usize, op: Ladder, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut out = vec![ZERO; self.dim()];
        for (k, occ) in self.basis.iter().enumerate() {
            if v[k] == ZERO {
                continue;
            }
            let mut o = occ.clone();
            let f = match op {
                Ladder::Annihilate => {
                    if o[n] == 0 {
                        continue;
                    }
                    o[n] -= 1;
                    (occ[n] as f64).sqrt()
                }
                Ladder::Create => {
                    o[n] += 1;
                    if o.iter().sum::<u32>() > self.max_total {
                        return Err(Error::Truncation);
                    }
                    (o[n] as f64).sqrt()
                }
            };
            out[self.index[&o]] += v[k] * f;
        }
        Ok(out)
    }

    /// Word applied right to left, i.e. `word[last]` acts first.
    pub fn apply_word(&self, word: &[(usize, Ladder)], v: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut cur = v.to_vec();
        for &(n, op) in word.iter().rev() {
            cur = self.apply(n, op, &cur)?;
        }
        Ok(cur)
    }

    /// Σ_n c_n â_n applied to v.
    pub fn apply_combination(&self, coeffs: &[Complex64], v: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut out = vec![ZERO; self.dim()];
        for (n, c) in coeffs.iter().enumerate() {
            let a = self.apply(n, Ladder::Annihilate, v)?;
            for (o, x) in out.iter_mut().zip(a) {
                *o += c * x;
            }
        }
        Ok(out)
    }

    /// Σ_mn ψ_mn â_m†â_n†|0⟩.
    pub fn two_photon(&self, psi: &Mat<Complex64>) -> Result<Vec<Complex64>> {
        let vac = self.vacuum();
        let mut out = vec![ZERO; self.dim()];
        for m in 0..self.modes {
            for n in 0..self.modes {
                if psi[(m, n)] == ZERO {
                    continue;
                }
                let v = self.apply_word(&[(m, Ladder::Create), (n, Ladder::Create)], &vac)?;
                for (o, x) in out.iter_mut().zip(v) {
                    *o += psi[(m, n)] * x;
                }
            }
        }
        Ok(out)
    }
}

pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// ⟨ψ|word|ψ⟩.
pub fn fock_expectation(space: &FockSpace, state: &[Complex64], word: &[(usize, Ladder)]) -> Result<Complex64> {
    Ok(inner(state, &space.apply_word(word, state)?))
}

/// ⟨0|B̂ Â|ψ⟩ for Â = Σα_n â_n, B̂ = Σβ_n â_n.
pub fn fock_biphoton(space: &FockSpace, state: &[Complex64], alpha: &[Complex64], beta: &[Complex64]) -> Result<Complex64> {
    let a = space.apply_combination(alpha, state)?;
    let ba = space.apply_combination(beta, &a)?;
    Ok(inner(&space.vacuum(), &ba))
}

/// ‖Â|ψ⟩‖².
pub fn fock_intensity(space: &FockSpace, state: &[Complex64], alpha: &[Complex64]) -> Result<f64> {
    let a = space.apply_combination(alpha, state)?;
    Ok(inner(&a, &a).re)
}

pub fn fock_g2(space: &FockSpace, state: &[Complex64], alpha: &[Complex64], beta: &[Complex64]) -> Result<f64> {
    let n = inner(state, state).re;
    let psi = fock_biphoton(space, state, alpha, beta)?;
    Ok(n * psi.norm_sqr() / (fock_intensity(space, state, alpha)? * fock_intensity(space, state, beta)?))
}

/// ⟨ψ|Σħω_n n̂_n|ψ⟩/⟨ψ|ψ⟩.
pub fn fock_energy(space: &FockSpace, state: &[Complex64], omegas: &[f64], hbar: f64) -> Result<f64> {
    let mut e = 0.0;
    for (n, w) in omegas.iter().enumerate() {
        let num = fock_expectation(space, state, &[(n, Ladder::Create), (n, Ladder::Annihilate)])?;
        e += hbar * w * num.re;
    }
    Ok(e / inner(state, state).re)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HbAmplitudes {
    pub a0: Complex64,
    pub d0: Complex64,
    pub c0: Complex64,
    pub group_velocity: f64,
    pub eps_r: f64,
}

/// Continuum mode amplitudes of a homogeneous lossless Lorentz medium.
pub fn hb_mode_amplitudes(
    omega: f64,
    species: Option<&LorentzSpecies>,
    eps_inf: f64,
    consts: &PhysicalConstants,
) -> Result<HbAmplitudes> {
    let (eps, deps) = match species {
        Some(s) => {
            let den = s.resonant_freq.powi(2) - omega * omega;
            if den == 0.0 {
                return Err(Error::Pole { omega, omega0: s.resonant_freq });
            }
            (eps_inf + s.plasma_freq.powi(2) / den, 2.0 * omega * s.plasma_freq.powi(2) / (den * den))
        }
        None => (eps_inf, 0.0),
    };
    if !(eps > 0.0) {
        return Err(Error::Evanescent { omega });
    }
    let n = eps.sqrt();
    let dk = (n + omega * deps / (2.0 * n)) / consts.c;
    let vg = 1.0 / dk;
    let (hbar, e0, c) = (consts.hbar, consts.eps0, consts.c);
    let a0 = Complex64::new(0.0, -(hbar * vg / (4.0 * PI * e0 * c * n * omega)).sqrt());
    let d0 = Complex64::new(-(hbar * vg * e0 * eps * n * omega / (4.0 * PI * c)).sqrt(), 0.0);
    Ok(HbAmplitudes { a0, d0, c0: Complex64::new(0.0, 1.0 / (omega * e0 * eps)), group_velocity: vg, eps_r: eps })
}

/// Eigenvalues of a circulant matrix from its first column, by FFT.
pub fn circulant_eigenvalues(first_column: &[Complex64]) -> Vec<Complex64> {
    let mut v = first_column.to_vec();
    FftPlanner::new().plan_fft_forward(v.len()).process(&mut v);
    v
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature over [a, b] split into `panels` pieces.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize, tol: f64) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let (x0, x1) = (a + h * i as f64, a + h * (i + 1) as f64);
            let (f0, fm, f1) = (f(x0), f(0.5 * (x0 + x1)), f(x1));
            let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
            simpson(f, x0, x1, f0, fm, f1, whole, tol / panels as f64, 40)
        })
        .sum()
}

/// Golden-rule rate built from the continuum amplitudes, both directions,
/// Lorentzian of half-width η, relative to the free-space rate. Frequencies
/// above `omega_max` are left out, matching a discrete spectrum's top.
pub fn analytic_purcell_ratio(
    species: Option<&LorentzSpecies>,
    eps_inf: f64,
    omega_a: f64,
    eta: f64,
    omega_max: f64,
    consts: &PhysicalConstants,
) -> Result<f64> {
    let free = consts.hbar * omega_a / (2.0 * PI * consts.eps0 * consts.c);
    let lorentz = |x: f64| eta / PI / (x * x + eta * eta);
    let density = |w: f64| -> f64 {
        if !(w > 0.0) {
            return 0.0;
        }
        match hb_mode_amplitudes(w, species, eps_inf, consts) {
            // |iωA0|² per mode, 1/v_g modes per unit ω, two directions
            Ok(h) => 2.0 * (w * h.a0).norm_sqr() / h.group_velocity * lorentz(w - omega_a) / free,
            Err(_) => 0.0,
        }
    };
    let top = omega_max;
    let panels = 4000;
    let tol = 1e-10;
    Ok(match species {
        None => integrate(&density, 0.0, top, panels, tol),
        Some(s) => {
            let w0 = s.resonant_freq;
            let edge = s.gap_top(eps_inf);
            // ω = w0·(1 − v²) below the pole, ω = edge + u² above the gap
            let lower = integrate(&|v: f64| density(w0 * (1.0 - v * v)) * 2.0 * w0 * v, 0.0, 1.0, panels, tol);
            let upper = integrate(&|u: f64| density(edge + u * u) * 2.0 * u, 0.0, (top - edge).max(0.0).sqrt(), panels, tol);
            lower + upper
        }
    })
}

/// g⁽²⁾(τ) for two Gaussian packets (amplitude envelope exp(−x²/2σ²)) meeting
/// at a dispersionless splitter with reflectance R and quadrature phase.
pub fn hom_ideal_g2(tau: f64, sigma: f64, c: f64, reflectance: f64) -> f64 {
    let g = (-(c * tau / sigma).powi(2)).exp();
    let t = 1.0 - reflectance;
    ((t - reflectance * g) / (t + reflectance * g)).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vacuum_matrix_element() {
        let s = FockSpace::new(2, 2).unwrap();
        assert_eq!(s.dim(), 6);
        let v = fock_expectation(&s, &s.vacuum(), &[(0, Ladder::Annihilate), (0, Ladder::Create)]).unwrap();
        assert!((v - 1.0).norm() < 1e-15);
    }

    #[test]
    fn commutator_on_safe_subspace() {
        let s = FockSpace::new(3, 2).unwrap();
        let a = s.annihilation(1);
        let ad = a.adjoint().to_owned();
        let comm = &a * &ad - &ad * &a;
        for (k, occ) in s.basis.iter().enumerate() {
            if occ.iter().sum::<u32>() < 2 {
                assert!((comm[(k, k)] - 1.0).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn two_photon_number_and_norm() {
        let s = FockSpace::new(3, 2).unwrap();
        let g = [Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8), ZERO];
        let h = [Complex64::new(0.0, 0.0), Complex64::new(0.6, 0.0), Complex64::new(0.8, 0.0)];
        let psi = Mat::from_fn(3, 3, |m, n| g[m] * h[n]);
        let st = s.two_photon(&psi).unwrap();
        let overlap: Complex64 = g.iter().zip(&h).map(|(a, b)| a.conj() * b).sum();
        assert!((inner(&st, &st).re - (1.0 + overlap.norm_sqr())).abs() < 1e-14);
        let mut total = ZERO;
        for n in 0..3 {
            total += fock_expectation(&s, &st, &[(n, Ladder::Create), (n, Ladder::Annihilate)]).unwrap();
        }
        assert!((total / inner(&st, &st) - 2.0).norm() < 1e-14);
        assert!(s.apply(0, Ladder::Create, &st).is_err());
    }

    #[test]
    fn hb_ratio_identity() {
        let c = PhysicalConstants::natural();
        let sp = LorentzSpecies::new(50.0, 50.0).unwrap();
        for w in [20.0, 45.0, 75.0, 120.0] {
            let h = hb_mode_amplitudes(w, Some(&sp), 1.0, &c).unwrap();
            assert!((h.a0 / h.d0 / h.c0 - 1.0).norm() < 1e-14);
        }
        assert!(hb_mode_amplitudes(60.0, Some(&sp), 1.0, &c).is_err());
        let v = hb_mode_amplitudes(10.0, None, 1.0, &c).unwrap();
        assert!((v.group_velocity - 1.0).abs() < 1e-15 && (v.c0 - Complex64::new(0.0, 0.1)).norm() < 1e-15);
    }

    #[test]
    fn vacuum_purcell_closed_form() {
        let (wa, eta, top) = (40.0, 0.5, 150.0);
        let r = analytic_purcell_ratio(None, 1.0, wa, eta, top, &PhysicalConstants::natural()).unwrap();
        let exact = (((top - wa) / eta).atan() + (wa / eta).atan()) / PI
            + eta / (2.0 * PI * wa) * (((top - wa).powi(2) + eta * eta) / (wa * wa + eta * eta)).ln();
        assert!((r - exact).abs() < 1e-8, "{r} {exact}");
        assert!((r - 1.0).abs() < 0.01);
    }

    #[test]
    fn circulant_of_laplacian() {
        let n = 8;
        let mut col = vec![ZERO; n];
        col[0] = Complex64::new(2.0, 0.0);
        col[1] = Complex64::new(-1.0, 0.0);
        col[n - 1] = Complex64::new(-1.0, 0.0);
        let ev = circulant_eigenvalues(&col);
        for (m, e) in ev.iter().enumerate() {
            let exact = 4.0 * (PI * m as f64 / n as f64).sin().powi(2);
            assert!((e.re - exact).abs() < 1e-12 && e.im.abs() < 1e-12);
        }
    }

    #[test]
    fn ideal_hom_limits() {
        assert!(hom_ideal_g2(0.0, 0.05, 1.0, 0.5) < 1e-15);
        assert!((hom_ideal_g2(1.0, 0.05, 1.0, 0.5) - 1.0).abs() < 1e-12);
    }
}
