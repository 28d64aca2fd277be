#![allow(dead_code)]

use cqnmd::assembly::{assemble_no_cross, SnapPolicy};
use cqnmd::eigensolver::solve;
use cqnmd::lattice::Grid1D;
use cqnmd::medium::{MediumProfile, PhysicalConstants, Region};
use cqnmd::oracle::{fock_biphoton, fock_energy, fock_g2, inner, FockSpace};
use cqnmd::quantize::{FieldKind, QuantizedBasis};
use cqnmd::states::{biphoton_amplitude, detector_vector, energy_density_movie, g2, TwoPhotonState};
use faer::Mat;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Four modes: five grid points, one dielectric point, zero mode dropped.
pub fn four_mode_basis() -> QuantizedBasis {
    let g = Grid1D::periodic(1.0, 5, 0.0).unwrap();
    let p = MediumProfile::from_slabs(1.0, &[Region { x_start: 0.1, x_end: 0.3, eps_inf: 3.0, oscillator: None }]).unwrap();
    let sys = assemble_no_cross(&g, &p, &PhysicalConstants::natural(), SnapPolicy::Snap).unwrap();
    QuantizedBasis::new(solve(&sys).unwrap()).unwrap()
}

fn rc(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

pub fn random_state(rng: &mut ChaCha8Rng, modes: usize) -> TwoPhotonState {
    if rng.random_bool(0.5) {
        let g = (0..modes).map(|_| rc(rng)).collect();
        let h = (0..modes).map(|_| rc(rng)).collect();
        TwoPhotonState::product(g, h).unwrap()
    } else {
        let r = rng.random_range(1..=3);
        let l = Mat::from_fn(modes, r, |_, _| rc(rng));
        let rr = Mat::from_fn(modes, r, |_, _| rc(rng));
        TwoPhotonState::joint(l, rr).unwrap()
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct FockErrors {
    pub norm: f64,
    pub biphoton: f64,
    pub g2: f64,
    pub energy: f64,
}

impl FockErrors {
    pub fn max(&self) -> f64 {
        self.norm.max(self.biphoton).max(self.g2).max(self.energy)
    }

    pub fn merge(&mut self, o: FockErrors) {
        self.norm = self.norm.max(o.norm);
        self.biphoton = self.biphoton.max(o.biphoton);
        self.g2 = self.g2.max(o.g2);
        self.energy = self.energy.max(o.energy);
    }
}

/// Relative discrepancies between the factored-state formulas and the dense
/// Fock computation for one random state and random detector events.
pub fn fock_errors(qb: &QuantizedBasis, space: &FockSpace, rng: &mut ChaCha8Rng) -> FockErrors {
    let st = random_state(rng, qb.n_modes());
    let fv = space.two_photon(&st.amplitude_matrix()).unwrap();
    let n_fock = inner(&fv, &fv).re;
    let kinds = [FieldKind::VectorPotential, FieldKind::Electric];
    let k1 = qb.field_kernel(rng.random_range(-0.5..0.5), kinds[rng.random_range(0..2)]);
    let k2 = qb.field_kernel(rng.random_range(-0.5..0.5), kinds[rng.random_range(0..2)]);
    let (t1, t2) = (rng.random_range(0.0..3.0), rng.random_range(0.0..3.0));
    let a = detector_vector(&k1, qb.omegas(), t1);
    let b = detector_vector(&k2, qb.omegas(), t2);
    let psi = biphoton_amplitude(qb, &st, &k1, t1, &k2, t2).unwrap();
    let psi_f = fock_biphoton(space, &fv, &a, &b).unwrap();
    let g = g2(qb, &st, &k1, t1, &k2, t2).unwrap();
    let g_f = fock_g2(space, &fv, &a, &b).unwrap();
    let e_f = fock_energy(space, &fv, qb.omegas(), qb.basis.consts.hbar).unwrap();
    let movie = energy_density_movie(qb, &st, &[t1]).unwrap();
    let e = movie.totals(qb.basis.weight())[0];
    FockErrors {
        norm: (st.norm_sq() - n_fock).abs() / n_fock,
        biphoton: (psi - psi_f).norm() / psi_f.norm().max(1.0),
        g2: (g - g_f).abs() / g_f.max(1.0),
        energy: (e - e_f).abs() / e_f,
    }
}
