use cqnmd::assembly::{assemble_cross, assemble_no_cross, hamiltonian_energy, DiscreteSystem, SnapPolicy};
use cqnmd::eigensolver::{solve, solve_cross, spectrum_discrepancy};
use cqnmd::lattice::{second_difference, Grid1D};
use cqnmd::medium::*;
use cqnmd::quantize::{FieldKind, QuantizedBasis};
use cqnmd::states::{biphoton_amplitude, g2, TwoPhotonState};
use num_complex::Complex64;
use proptest::prelude::*;

fn consts() -> PhysicalConstants {
    PhysicalConstants::natural()
}

fn species() -> impl Strategy<Value = LorentzSpecies> {
    (5.0..60.0f64, 5.0..60.0f64).prop_map(|(p, z)| LorentzSpecies::new(p, z).unwrap())
}

/// A periodic cell with one slab, dielectric or Lorentz.
#[derive(Debug, Clone)]
struct Cell {
    n: usize,
    center: f64,
    width: f64,
    eps_inf: f64,
    osc: Option<LorentzSpecies>,
}

impl Cell {
    fn system(&self) -> DiscreteSystem {
        let g = Grid1D::periodic(1.0, self.n, 0.0).unwrap();
        let p = MediumProfile::slab(1.0, self.center, self.width, self.eps_inf, self.osc).unwrap();
        assemble_no_cross(&g, &p, &consts(), SnapPolicy::Snap).unwrap()
    }
}

fn cell() -> impl Strategy<Value = Cell> {
    (12usize..36, -0.2..0.2f64, 0.15..0.5f64, 1.0..5.0f64, proptest::option::of(species()))
        .prop_map(|(n, center, width, eps_inf, osc)| Cell { n, center, width, eps_inf, osc })
}

fn cvec(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| Complex64::new(a, b)), len)
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn slab_transfer_is_unitary(eps in 1.0..30.0f64, d in 1e-4..1.0f64, w in 0.1..2000.0f64) {
        let (r, t) = slab_transfer(eps, d, w, &consts()).unwrap();
        prop_assert!((r.norm_sqr() + t.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn permittivity_rises_on_both_branches(s in species(), a in 0.01..0.98f64, b in 0.01..0.98f64) {
        let (a, b) = (a.min(b), a.max(b) + 1e-3);
        let w0 = s.resonant_freq;
        let lo = |f: f64| permittivity(Some(&s), 1.0, f * w0).unwrap();
        prop_assert!(lo(a) < lo(b));
        let top = s.gap_top(1.0);
        let hi = |f: f64| permittivity(Some(&s), 1.0, top * (1.0 + 5.0 * f)).unwrap();
        prop_assert!(hi(a) < hi(b));
    }

    #[test]
    fn wavenumber_tends_to_vacuum(w0 in 5.0..60.0f64, ratio in 0.05..1.0f64) {
        // the correction is ω_p²/2ω², below 1e-6 at 10³ω_0 once ω_p ≤ ω_0
        let s = LorentzSpecies::new(ratio * w0, w0).unwrap();
        let w = 1e3 * s.resonant_freq;
        let k = analytic_wavenumber(Some(&s), 1.0, w, &consts()).unwrap();
        prop_assert!((k / w - 1.0).abs() < 1e-6);
    }

    #[test]
    fn beta_matches_finite_differences(s in species(), f in 0.1..0.9f64, upper in any::<bool>()) {
        let c = consts();
        let w = if upper { s.gap_top(1.0) * (1.2 + f) } else { s.resonant_freq * f };
        let k = |x: f64| analytic_wavenumber(Some(&s), 1.0, x, &c).unwrap();
        let fd = |h: f64| (k(w + h) - 2.0 * k(w) + k(w - h)) / (h * h);
        let gap = if upper { w - s.gap_top(1.0) } else { s.resonant_freq - w };
        let h = 2e-3 * gap.min(w);
        let rich = (4.0 * fd(0.5 * h) - fd(h)) / 3.0;
        let beta = second_order_dispersion(Some(&s), 1.0, w, &c).unwrap();
        prop_assert!((rich - beta).abs() <= 1e-6 * beta.abs(), "{rich} vs {beta}");
    }

    #[test]
    fn second_difference_is_hermitian_and_psd(n in 3usize..40, theta in 0.0..std::f64::consts::TAU, v in cvec(40)) {
        let g = Grid1D::periodic(1.0, n, theta).unwrap();
        let d = second_difference(&g, 1.0);
        prop_assert!(d.is_hermitian());
        let dense = d.to_dense();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(dense[(i, j)], dense[(j, i)].conj());
            }
        }
        let v = &v[..n];
        let q = dot(v, &d.apply(v));
        prop_assert!(q.re >= -1e-12 * dot(v, v).re);
    }

    #[test]
    fn mass_blocks_stay_positive(c in cell()) {
        let sys = c.system();
        prop_assert!(sys.mass.validate().is_ok());
        prop_assert!(sys.k.is_hermitian());
    }

    #[test]
    fn energy_ignores_global_phase(c in cell(), phi in 0.0..std::f64::consts::TAU, q in cvec(80), p in cvec(80)) {
        let sys = c.system();
        let d = sys.dim();
        let (q, p) = (&q[..d], &p[..d]);
        let ph = Complex64::from_polar(1.0, phi);
        let rot = |v: &[Complex64]| v.iter().map(|x| x * ph).collect::<Vec<_>>();
        let e0 = hamiltonian_energy(&sys, q, p).unwrap();
        let e1 = hamiltonian_energy(&sys, &rot(q), &rot(p)).unwrap();
        prop_assert!((e0 - e1).abs() <= 1e-12 * e0.abs().max(1.0));
    }

    #[test]
    fn modes_satisfy_the_pencil(c in cell()) {
        let sys = c.system();
        let b = solve(&sys).unwrap();
        let knorm = sys.k.to_dense().norm_l2();
        let minv = sys.mass.inverse();
        for n in 0..b.n_modes() {
            let q = b.modes.col(n);
            let kq = sys.k.apply(&q);
            let mq = minv.apply(&q);
            let w2 = b.omegas[n] * b.omegas[n];
            let r: f64 = kq.iter().zip(&mq).map(|(a, m)| (a - m * w2).norm_sqr()).sum::<f64>().sqrt();
            let qn = dot(&q, &q).re.sqrt();
            prop_assert!(r <= 1e-9 * knorm * qn, "mode {n}: {r}");
        }
        let (dm, dk) = b.orthonormality_defect().unwrap();
        prop_assert!(dm < 1e-10 && dk < 1e-8, "{dm} {dk}");
    }

    #[test]
    fn cross_description_has_the_same_spectrum(c in cell()) {
        let g = Grid1D::periodic(1.0, c.n, 0.0).unwrap();
        let p = MediumProfile::slab(1.0, c.center, c.width, c.eps_inf, c.osc).unwrap();
        let a = solve(&assemble_no_cross(&g, &p, &consts(), SnapPolicy::Snap).unwrap()).unwrap();
        let b = solve_cross(&assemble_cross(&g, &p, &consts(), SnapPolicy::Snap).unwrap()).unwrap();
        prop_assert!(spectrum_discrepancy(&b.omegas, &a.omegas, 1).unwrap() < 1e-8);
    }

    #[test]
    fn homogeneous_gap_is_empty(s in species(), n in 20usize..60) {
        let g = Grid1D::periodic(1.0, n, 0.0).unwrap();
        let p = MediumProfile::homogeneous(1.0, 1.0, Some(s)).unwrap();
        let b = solve(&assemble_no_cross(&g, &p, &consts(), SnapPolicy::Snap).unwrap()).unwrap();
        let (lo, hi) = (s.resonant_freq, s.gap_top(1.0));
        prop_assert!(b.omegas.iter().all(|&w| w <= lo * (1.0 + 1e-12) || w >= hi * (1.0 - 1e-12)));
    }

    #[test]
    fn amplitude_round_trip(c in cell(), re in proptest::collection::vec(-1.0..1.0f64, 80), im in proptest::collection::vec(-1.0..1.0f64, 80)) {
        let qb = QuantizedBasis::new(solve(&c.system()).unwrap()).unwrap();
        let n = qb.n_modes();
        let d: Vec<Complex64> = (0..n).map(|i| Complex64::new(re[i], im[i])).collect();
        let (q0, p0) = qb.reconstruct(&d).unwrap();
        let back = qb.extract_amplitudes(&q0, &p0).unwrap();
        for (a, b) in d.iter().zip(&back) {
            prop_assert!((a - b).norm() < 1e-10);
        }
        let e0 = qb.hamiltonian_expectation(&d);
        let later: Vec<Complex64> = d.iter().zip(qb.omegas()).map(|(a, w)| a * Complex64::from_polar(1.0, -w * 1.7)).collect();
        prop_assert!((qb.hamiltonian_expectation(&later) - e0).abs() <= 1e-12 * e0);
    }

    #[test]
    fn conjugate_modes_are_orthogonal(c in cell()) {
        let sys = c.system();
        let qb = QuantizedBasis::new(solve(&sys).unwrap()).unwrap();
        let dx = qb.basis.weight();
        let p: Vec<Vec<Complex64>> = (0..qb.n_modes()).map(|n| qb.conjugate_mode(n)).collect();
        for i in 0..p.len() {
            let mp = sys.mass.apply(&p[i]);
            for j in 0..p.len() {
                let v = dot(&p[j], &mp) * dx;
                let target = if i == j { qb.omegas()[i].powi(2) } else { 0.0 };
                prop_assert!((v - target).norm() <= 1e-9 * qb.omegas()[i] * qb.omegas()[j]);
            }
        }
    }

    #[test]
    fn correlations_are_symmetric_and_scale_free(
        c in cell(), g in cvec(80), h in cvec(80), x1 in -0.5..0.5f64, x2 in -0.5..0.5f64, t1 in 0.0..2.0f64, t2 in 0.0..2.0f64, s in 0.1..10.0f64,
    ) {
        let qb = QuantizedBasis::new(solve(&c.system()).unwrap()).unwrap();
        let n = qb.n_modes();
        let (g, h) = (g[..n].to_vec(), h[..n].to_vec());
        let st = TwoPhotonState::product(g.clone(), h.clone()).unwrap();
        let scaled = TwoPhotonState::product(g.iter().map(|v| v * s).collect(), h).unwrap();
        let k1 = qb.field_kernel(x1, FieldKind::Electric);
        let k2 = qb.field_kernel(x2, FieldKind::VectorPotential);
        let p12 = biphoton_amplitude(&qb, &st, &k1, t1, &k2, t2).unwrap();
        let p21 = biphoton_amplitude(&qb, &st, &k2, t2, &k1, t1).unwrap();
        prop_assert!((p12 - p21).norm() <= 1e-12 * p12.norm().max(1e-300));
        if let (Ok(a), Ok(b)) = (g2(&qb, &st, &k1, t1, &k2, t2), g2(&qb, &scaled, &k1, t1, &k2, t2)) {
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
        }
    }
}
