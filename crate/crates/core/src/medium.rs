//! Lossless Lorentz and dielectric media on a 1-D domain, with the analytic
//! dispersion relations used for design and verification.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const POLE_TOL: f64 = 1e-12;
const EDGE_TOL: f64 = 1e-6;
const NLDC_MAX_EPS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub eps0: f64,
    pub mu0: f64,
    pub c: f64,
    pub hbar: f64,
}

impl PhysicalConstants {
    pub fn new(eps0: f64, mu0: f64, hbar: f64) -> Result<Self> {
        if !(eps0 > 0.0 && mu0 > 0.0 && hbar > 0.0) {
            return Err(Error::InvalidParameter("physical constants must be positive".into()));
        }
        Ok(Self { eps0, mu0, c: 1.0 / (eps0 * mu0).sqrt(), hbar })
    }

    /// eps0 = mu0 = c = hbar = 1.
    pub fn natural() -> Self {
        Self { eps0: 1.0, mu0: 1.0, c: 1.0, hbar: 1.0 }
    }

    pub fn si() -> Self {
        Self::new(8.8541878128e-12, 1.25663706212e-6, 1.054571817e-34).unwrap()
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::natural()
    }
}

/// Single-species lossless Lorentz oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzSpecies {
    pub plasma_freq: f64,
    pub resonant_freq: f64,
}

impl LorentzSpecies {
    pub fn new(plasma_freq: f64, resonant_freq: f64) -> Result<Self> {
        if !(plasma_freq > 0.0 && resonant_freq > 0.0) || !plasma_freq.is_finite() || !resonant_freq.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Lorentz frequencies must be positive (omega_p = {plasma_freq}, omega_0 = {resonant_freq})"
            )));
        }
        Ok(Self { plasma_freq, resonant_freq })
    }

    /// f = ω0²/ωp².
    pub fn f(&self) -> f64 {
        (self.resonant_freq / self.plasma_freq).powi(2)
    }

    /// β = 1/ωp².
    pub fn beta(&self) -> f64 {
        self.plasma_freq.powi(-2)
    }

    /// Upper edge of the bandgap, where ε(ω) = 0.
    pub fn gap_top(&self, eps_inf: f64) -> f64 {
        (self.resonant_freq.powi(2) + self.plasma_freq.powi(2) / eps_inf).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub x_start: f64,
    pub x_end: f64,
    pub eps_inf: f64,
    pub oscillator: Option<LorentzSpecies>,
}

impl Region {
    pub fn is_vacuum(&self) -> bool {
        self.eps_inf == 1.0 && self.oscillator.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileSpec", into = "ProfileSpec")]
pub struct MediumProfile {
    length: f64,
    regions: Vec<Region>,
}

impl MediumProfile {
    /// Regions must be sorted, contiguous and cover [-L/2, L/2].
    pub fn new(length: f64, regions: Vec<Region>) -> Result<Self> {
        if !(length > 0.0) {
            return Err(Error::InvalidProfile(format!("domain length {length} must be positive")));
        }
        if regions.is_empty() {
            return Err(Error::InvalidProfile("no regions".into()));
        }
        let tol = 1e-12 * length;
        let mut edge = -0.5 * length;
        for (i, r) in regions.iter().enumerate() {
            if (r.x_start - edge).abs() > tol {
                return Err(Error::InvalidProfile(format!(
                    "region {i} starts at {} but previous coverage ends at {edge}",
                    r.x_start
                )));
            }
            if !(r.x_end >= r.x_start) {
                return Err(Error::InvalidProfile(format!("region {i} has negative width")));
            }
            if !(r.eps_inf >= 1.0) {
                return Err(Error::InvalidProfile(format!("region {i} has eps_inf = {} < 1", r.eps_inf)));
            }
            if let Some(s) = r.oscillator {
                LorentzSpecies::new(s.plasma_freq, s.resonant_freq)?;
            }
            edge = r.x_end;
        }
        if (edge - 0.5 * length).abs() > tol {
            return Err(Error::InvalidProfile(format!("regions end at {edge}, expected {}", 0.5 * length)));
        }
        Ok(Self { length, regions })
    }

    pub fn vacuum(length: f64) -> Result<Self> {
        Self::homogeneous(length, 1.0, None)
    }

    pub fn homogeneous(length: f64, eps_inf: f64, oscillator: Option<LorentzSpecies>) -> Result<Self> {
        let h = 0.5 * length;
        Self::new(length, vec![Region { x_start: -h, x_end: h, eps_inf, oscillator }])
    }

    /// Vacuum background with the given material slabs; zero-width slabs are dropped.
    pub fn from_slabs(length: f64, slabs: &[Region]) -> Result<Self> {
        let h = 0.5 * length;
        let mut sorted: Vec<Region> = slabs.iter().copied().filter(|s| s.x_end > s.x_start).collect();
        sorted.sort_by(|a, b| a.x_start.total_cmp(&b.x_start));
        let mut regions = Vec::new();
        let mut edge = -h;
        for s in sorted {
            if s.x_start < edge - 1e-12 * length || s.x_end > h + 1e-12 * length {
                return Err(Error::InvalidProfile(format!(
                    "slab [{}, {}] overlaps another slab or leaves the domain",
                    s.x_start, s.x_end
                )));
            }
            if s.x_start > edge {
                regions.push(Region { x_start: edge, x_end: s.x_start, eps_inf: 1.0, oscillator: None });
            }
            regions.push(Region { x_start: s.x_start.max(edge), ..s });
            edge = s.x_end;
        }
        if edge < h {
            regions.push(Region { x_start: edge, x_end: h, eps_inf: 1.0, oscillator: None });
        }
        Self::new(length, regions)
    }

    /// Vacuum box with a single slab of the given thickness centered at `center`.
    pub fn slab(
        length: f64,
        center: f64,
        thickness: f64,
        eps_inf: f64,
        oscillator: Option<LorentzSpecies>,
    ) -> Result<Self> {
        let slab = Region {
            x_start: center - 0.5 * thickness,
            x_end: center + 0.5 * thickness,
            eps_inf,
            oscillator,
        };
        Self::from_slabs(length, &[slab])
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    /// Region containing `x` under half-open [x_start, x_end) membership with
    /// tolerance `tol`; points past the right edge map to the last region.
    pub fn region_at(&self, x: f64, tol: f64) -> &Region {
        self.regions
            .iter()
            .find(|r| r.x_end > r.x_start && x >= r.x_start - tol && x < r.x_end - tol)
            .unwrap_or_else(|| self.regions.last().unwrap())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionSpec {
    x_start: f64,
    x_end: f64,
    #[serde(default = "one")]
    eps_inf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    omega_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    omega_0: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileSpec {
    length: f64,
    region: Vec<RegionSpec>,
}

impl TryFrom<ProfileSpec> for MediumProfile {
    type Error = Error;

    fn try_from(spec: ProfileSpec) -> Result<Self> {
        let regions = spec
            .region
            .into_iter()
            .map(|r| {
                let oscillator = match (r.omega_p, r.omega_0) {
                    (None, None) => None,
                    (Some(p), Some(z)) => Some(LorentzSpecies::new(p, z)?),
                    _ => {
                        return Err(Error::InvalidProfile(
                            "omega_p and omega_0 must be given together".into(),
                        ))
                    }
                };
                Ok(Region { x_start: r.x_start, x_end: r.x_end, eps_inf: r.eps_inf, oscillator })
            })
            .collect::<Result<Vec<_>>>()?;
        MediumProfile::new(spec.length, regions)
    }
}

impl From<MediumProfile> for ProfileSpec {
    fn from(p: MediumProfile) -> Self {
        ProfileSpec {
            length: p.length,
            region: p
                .regions
                .iter()
                .map(|r| RegionSpec {
                    x_start: r.x_start,
                    x_end: r.x_end,
                    eps_inf: r.eps_inf,
                    omega_p: r.oscillator.map(|s| s.plasma_freq),
                    omega_0: r.oscillator.map(|s| s.resonant_freq),
                })
                .collect(),
        }
    }
}

/// Relative permittivity ε∞ + ωp²/(ω0² − ω²).
pub fn permittivity(species: Option<&LorentzSpecies>, eps_inf: f64, omega: f64) -> Result<f64> {
    match species {
        None => Ok(eps_inf),
        Some(s) => {
            let w0 = s.resonant_freq;
            if (omega.abs() - w0).abs() <= POLE_TOL * w0 {
                return Err(Error::Pole { omega, omega0: w0 });
            }
            Ok(eps_inf + s.plasma_freq.powi(2) / (w0 * w0 - omega * omega))
        }
    }
}

/// Positive root of k² = ω² ε(ω) / c².
pub fn analytic_wavenumber(
    species: Option<&LorentzSpecies>,
    eps_inf: f64,
    omega: f64,
    consts: &PhysicalConstants,
) -> Result<f64> {
    let eps = permittivity(species, eps_inf, omega)?;
    if eps <= 0.0 {
        return Err(Error::Evanescent { omega });
    }
    Ok(omega * eps.sqrt() / consts.c)
}

// ε, dε/dω, d²ε/dω²
fn eps_derivatives(species: Option<&LorentzSpecies>, eps_inf: f64, omega: f64) -> (f64, f64, f64) {
    match species {
        None => (eps_inf, 0.0, 0.0),
        Some(s) => {
            let wp2 = s.plasma_freq.powi(2);
            let d = s.resonant_freq.powi(2) - omega * omega;
            let e = eps_inf + wp2 / d;
            let e1 = 2.0 * omega * wp2 / (d * d);
            let e2 = 2.0 * wp2 / (d * d) + 8.0 * omega * omega * wp2 / (d * d * d);
            (e, e1, e2)
        }
    }
}

fn check_branch(species: Option<&LorentzSpecies>, eps_inf: f64, omega: f64) -> Result<()> {
    if let Some(s) = species {
        let lo = s.resonant_freq;
        let hi = s.gap_top(eps_inf);
        if ((omega - lo) / lo).abs() < EDGE_TOL || ((omega - hi) / hi).abs() < EDGE_TOL {
            return Err(Error::BranchEdge { omega });
        }
    }
    Ok(())
}

/// dk/dω and d²k/dω² from analytic differentiation of k = ω n(ω)/c.
fn k_derivatives(
    species: Option<&LorentzSpecies>,
    eps_inf: f64,
    omega: f64,
    consts: &PhysicalConstants,
) -> Result<(f64, f64)> {
    check_branch(species, eps_inf, omega)?;
    analytic_wavenumber(species, eps_inf, omega, consts)?;
    let (e, e1, e2) = eps_derivatives(species, eps_inf, omega);
    let n = e.sqrt();
    let n1 = e1 / (2.0 * n);
    let n2 = e2 / (2.0 * n) - e1 * e1 / (4.0 * n * n * n);
    Ok(((n + omega * n1) / consts.c, (2.0 * n1 + omega * n2) / consts.c))
}

pub fn group_velocity(
    species: Option<&LorentzSpecies>,
    eps_inf: f64,
    omega: f64,
    consts: &PhysicalConstants,
) -> Result<f64> {
    Ok(1.0 / k_derivatives(species, eps_inf, omega, consts)?.0)
}

/// β = d²k/dω².
pub fn second_order_dispersion(
    species: Option<&LorentzSpecies>,
    eps_inf: f64,
    omega: f64,
    consts: &PhysicalConstants,
) -> Result<f64> {
    Ok(k_derivatives(species, eps_inf, omega, consts)?.1)
}

/// Reflection and transmission amplitudes of a dielectric slab in vacuum,
/// with phase reference planes at the two slab faces.
pub fn slab_transfer(eps_slab: f64, thickness: f64, omega: f64, consts: &PhysicalConstants) -> Result<(Complex64, Complex64)> {
    if !(eps_slab > 0.0) || !(thickness >= 0.0) {
        return Err(Error::InvalidParameter("slab needs eps > 0 and thickness >= 0".into()));
    }
    let n = eps_slab.sqrt();
    let r12 = (1.0 - n) / (1.0 + n);
    let delta = n * omega * thickness / consts.c;
    let e1 = Complex64::from_polar(1.0, delta);
    let e2 = e1 * e1;
    let den = Complex64::new(1.0, 0.0) - r12 * r12 * e2;
    let r = r12 * (Complex64::new(1.0, 0.0) - e2) / den;
    let t = (1.0 - r12 * r12) * e1 / den;
    Ok((r, t))
}

/// Species whose permittivity at `omega_carrier` equals `eps_target`.
pub fn design_lorentz(eps_target: f64, omega_carrier: f64, omega_p: f64) -> Result<LorentzSpecies> {
    if !(eps_target > 1.0) {
        return Err(Error::InvalidParameter(format!("eps_target {eps_target} must exceed 1")));
    }
    let w0 = (omega_p * omega_p / (eps_target - 1.0) + omega_carrier * omega_carrier).sqrt();
    LorentzSpecies::new(omega_p, w0)
}

/// Media for dispersion cancellation: the left medium (acting on the idler)
/// works below its resonance where β > 0, the right medium (acting on the
/// signal) above its bandgap where β < 0. Each side is fitted so that |β|
/// stays close to `target_beta` across the band and equals it at the center.
pub fn find_nldc_media(
    signal_center: f64,
    idler_center: f64,
    bandwidth: f64,
    target_beta: f64,
    consts: &PhysicalConstants,
) -> Result<(LorentzSpecies, LorentzSpecies)> {
    if !(signal_center > 0.0 && idler_center > 0.0 && bandwidth > 0.0) {
        return Err(Error::InvalidParameter("centers and bandwidth must be positive".into()));
    }
    if !(target_beta.abs() > 0.0) || !target_beta.is_finite() {
        return Err(Error::InvalidParameter("target beta must be nonzero".into()));
    }
    if idler_center - 0.5 * bandwidth <= 0.0 {
        return Err(Error::InvalidParameter("idler band reaches zero frequency".into()));
    }
    let target = target_beta.abs();
    let left = fit_side(idler_center, bandwidth, target, Branch::Lower, consts)?;
    let right = fit_side(signal_center, bandwidth, -target, Branch::Upper, consts)?;
    Ok((left, right))
}

#[derive(Clone, Copy)]
enum Branch {
    Lower,
    Upper,
}

fn band_samples(center: f64, bandwidth: f64) -> impl Iterator<Item = f64> {
    (0..11).map(move |i| center - 0.5 * bandwidth + bandwidth * i as f64 / 10.0)
}

fn fit_side(
    center: f64,
    bandwidth: f64,
    target: f64,
    branch: Branch,
    consts: &PhysicalConstants,
) -> Result<LorentzSpecies> {
    let top = center + 0.5 * bandwidth;
    let bottom = center - 0.5 * bandwidth;
    // The species is parametrized in log space relative to the band so that
    // the feasibility margins are built in.
    let species = |v: &[f64; 2]| -> Option<LorentzSpecies> {
        let (w0, wp) = match branch {
            Branch::Lower => (top * (1.02 + v[0].exp()), center * v[1].exp()),
            Branch::Upper => {
                // gap top sits below the band bottom; v[0] picks the ω0 share.
                let edge = bottom / (1.02 + v[1].exp());
                let share = 1.0 / (1.0 + (-v[0]).exp());
                let w0 = edge * share.sqrt();
                let wp = edge * (1.0 - share).sqrt();
                (w0, wp)
            }
        };
        let s = LorentzSpecies::new(wp, w0).ok()?;
        // keep the medium index moderate so the wavelength stays resolvable
        let eps = permittivity(Some(&s), 1.0, center).ok()?;
        (eps <= NLDC_MAX_EPS).then_some(s)
    };
    let objective = |v: &[f64; 2]| -> f64 {
        let Some(s) = species(v) else { return f64::INFINITY };
        let mut sum = 0.0;
        for w in band_samples(center, bandwidth) {
            match second_order_dispersion(Some(&s), 1.0, w, consts) {
                Ok(b) => sum += (b / target - 1.0).powi(2),
                Err(_) => return f64::INFINITY,
            }
        }
        let bc = second_order_dispersion(Some(&s), 1.0, center, consts).unwrap_or(f64::NAN);
        sum / 11.0 + 100.0 * (bc / target - 1.0).powi(2)
    };
    let mut best: Option<([f64; 2], f64)> = None;
    for start in [[0.0, 0.0], [-1.0, -0.5], [0.5, 0.5], [-2.0, 0.0], [1.0, -1.0]] {
        let (v, f) = nelder_mead(&objective, start, 0.5, 4000);
        if f.is_finite() && best.is_none_or(|(_, bf)| f < bf) {
            best = Some((v, f));
        }
    }
    let (mut v, _) = best.ok_or_else(|| Error::SearchFailed("no feasible Lorentz parameters".into()))?;
    // pin the band-center value by bisection on the second parameter
    let miss = |t: f64| -> f64 {
        species(&[v[0], t])
            .and_then(|s| second_order_dispersion(Some(&s), 1.0, center, consts).ok())
            .map_or(f64::NAN, |b| b / target - 1.0)
    };
    let f0 = miss(v[1]);
    if f0.is_finite() && f0 != 0.0 {
        let mut step = 0.05;
        let mut other = None;
        while step < 4.0 && other.is_none() {
            for t in [v[1] - step, v[1] + step] {
                let ft = miss(t);
                if ft.is_finite() && ft.signum() != f0.signum() {
                    other = Some(t);
                    break;
                }
            }
            step *= 2.0;
        }
        if let Some(t) = other {
            let (mut a, mut b) = (v[1], t);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let fm = miss(m);
                if !fm.is_finite() {
                    break;
                }
                if fm.signum() == f0.signum() {
                    a = m;
                } else {
                    b = m;
                }
            }
            v[1] = 0.5 * (a + b);
        }
    }
    let s = species(&v).ok_or_else(|| Error::SearchFailed("degenerate parameters".into()))?;
    let bc = second_order_dispersion(Some(&s), 1.0, center, consts)?;
    if ((bc - target) / target).abs() > 0.01 {
        return Err(Error::SearchFailed(format!(
            "beta at band center {bc} misses target {target} by more than 1%"
        )));
    }
    for w in band_samples(center, bandwidth) {
        let b = second_order_dispersion(Some(&s), 1.0, w, consts)?;
        if b.signum() != target.signum() {
            return Err(Error::SearchFailed(format!("beta changes sign inside the band at omega = {w}")));
        }
    }
    Ok(s)
}

/// Plain Nelder–Mead on two parameters.
fn nelder_mead(f: &dyn Fn(&[f64; 2]) -> f64, start: [f64; 2], step: f64, max_iter: usize) -> ([f64; 2], f64) {
    let mut simplex = [start, [start[0] + step, start[1]], [start[0], start[1] + step]];
    let mut values = simplex.map(|p| f(&p));
    for _ in 0..max_iter {
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = idx.map(|i| simplex[i]);
        values = idx.map(|i| values[i]);
        if (values[2] - values[0]).abs() <= 1e-14 * (1.0 + values[0].abs())
            && values[0].is_finite()
            && (simplex[2][0] - simplex[0][0]).abs() + (simplex[2][1] - simplex[0][1]).abs() < 1e-12
        {
            break;
        }
        let c = [0.5 * (simplex[0][0] + simplex[1][0]), 0.5 * (simplex[0][1] + simplex[1][1])];
        let along = |t: f64| [c[0] + t * (simplex[2][0] - c[0]), c[1] + t * (simplex[2][1] - c[1])];
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[2] = xe;
                values[2] = fe;
            } else {
                simplex[2] = xr;
                values[2] = fr;
            }
        } else if fr < values[1] {
            simplex[2] = xr;
            values[2] = fr;
        } else {
            let (xc, fc) = if fr < values[2] {
                let x = along(-0.5);
                (x, f(&x))
            } else {
                let x = along(0.5);
                (x, f(&x))
            };
            if fc < values[2].min(fr) {
                simplex[2] = xc;
                values[2] = fc;
            } else {
                for i in 1..3 {
                    simplex[i] = [
                        0.5 * (simplex[0][0] + simplex[i][0]),
                        0.5 * (simplex[0][1] + simplex[i][1]),
                    ];
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    (simplex[best], values[best])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nat() -> PhysicalConstants {
        PhysicalConstants::natural()
    }

    #[test]
    fn designed_species_hits_target() {
        for wp in [875.0, 2000.0, 4750.0] {
            let s = design_lorentz(7.0, 526.0, wp).unwrap();
            let e = permittivity(Some(&s), 1.0, 526.0).unwrap();
            assert!((e - 7.0).abs() < 1e-12, "{e}");
        }
        let s = design_lorentz(7.0, 526.0, 875.0).unwrap();
        assert!((s.resonant_freq - (875.0f64.powi(2) / 6.0 + 526.0f64.powi(2)).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn permittivity_limits() {
        let s = LorentzSpecies::new(50.0, 50.0).unwrap();
        let e = permittivity(Some(&s), 1.0, 50.0e6).unwrap();
        assert!((e - 1.0).abs() < 1e-9);
        assert_eq!(permittivity(None, 7.0, 3.0).unwrap(), 7.0);
        assert!(matches!(permittivity(Some(&s), 1.0, 50.0), Err(Error::Pole { .. })));
    }

    #[test]
    fn wavenumber_branches() {
        let s = LorentzSpecies::new(50.0, 50.0).unwrap();
        assert_eq!(analytic_wavenumber(None, 1.0, 526.0, &nat()).unwrap(), 526.0);
        assert!(matches!(analytic_wavenumber(Some(&s), 1.0, 60.0, &nat()), Err(Error::Evanescent { .. })));
        let k = analytic_wavenumber(Some(&s), 1.0, 80.0, &nat()).unwrap();
        assert!((k - 80.0 * (1.0f64 - 2500.0 / 3900.0).sqrt()).abs() < 1e-12);
        let w = 50.0e3;
        let k = analytic_wavenumber(Some(&s), 1.0, w, &nat()).unwrap();
        assert!((k / w - 1.0).abs() < 1e-6);
    }

    #[test]
    fn beta_signs_and_vacuum() {
        let s = LorentzSpecies::new(50.0, 50.0).unwrap();
        assert!(second_order_dispersion(Some(&s), 1.0, 30.0, &nat()).unwrap() > 0.0);
        assert!(second_order_dispersion(Some(&s), 1.0, 80.0, &nat()).unwrap() < 0.0);
        assert_eq!(second_order_dispersion(None, 1.0, 30.0, &nat()).unwrap(), 0.0);
        assert_eq!(group_velocity(None, 1.0, 30.0, &nat()).unwrap(), 1.0);
        assert!(matches!(
            group_velocity(Some(&s), 1.0, 50.0 * 2f64.sqrt(), &nat()),
            Err(Error::BranchEdge { .. })
        ));
    }

    #[test]
    fn beta_matches_finite_difference() {
        let s = LorentzSpecies::new(50.0, 50.0).unwrap();
        for w in [10.0, 30.0, 45.0, 75.0, 90.0, 200.0] {
            let h = 1e-6 * w;
            let k = |x: f64| analytic_wavenumber(Some(&s), 1.0, x, &nat()).unwrap();
            let v = 1.0 / ((k(w + h) - k(w - h)) / (2.0 * h));
            let vg = group_velocity(Some(&s), 1.0, w, &nat()).unwrap();
            assert!((vg - v).abs() / vg < 1e-8, "{w}: {vg} vs {v}");
            // second difference of k loses digits at h = 1e-6 ω; compare with
            // a centered difference of the analytic dk/dω instead.
            let k1 = |x: f64| 1.0 / group_velocity(Some(&s), 1.0, x, &nat()).unwrap();
            let fd = (k1(w + h) - k1(w - h)) / (2.0 * h);
            let b = second_order_dispersion(Some(&s), 1.0, w, &nat()).unwrap();
            assert!((b - fd).abs() / b.abs() < 1e-6, "{w}: {b} vs {fd}");
        }
    }

    #[test]
    fn slab_design_point() {
        let (r, t) = slab_transfer(7.0, 0.006, 526.0, &nat()).unwrap();
        assert!((r.norm_sqr() - 0.5).abs() < 0.02, "{}", r.norm_sqr());
        assert!((t.norm_sqr() - 0.5).abs() < 0.02);
        assert!(((r / t).arg().abs() - std::f64::consts::FRAC_PI_2).abs() < 0.05);
        let (r, t) = slab_transfer(7.0, 0.0, 526.0, &nat()).unwrap();
        assert!(r.norm() < 1e-15 && (t - 1.0).norm() < 1e-15);
    }

    #[test]
    fn nldc_media_have_opposite_beta() {
        let (l, r) = find_nldc_media(37.5, 32.5, 5.0, 0.2, &nat()).unwrap();
        let bl = second_order_dispersion(Some(&l), 1.0, 32.5, &nat()).unwrap();
        let br = second_order_dispersion(Some(&r), 1.0, 37.5, &nat()).unwrap();
        assert!((bl - 0.2).abs() < 0.002 && (br + 0.2).abs() < 0.002, "{bl} {br}");
        for i in 0..11 {
            let w = 30.0 + 0.5 * i as f64;
            assert!(second_order_dispersion(Some(&l), 1.0, w, &nat()).unwrap() > 0.0);
            assert!(second_order_dispersion(Some(&r), 1.0, w + 5.0, &nat()).unwrap() < 0.0);
        }
        assert!(find_nldc_media(37.5, 32.5, 5.0, 0.0, &nat()).is_err());
    }

    #[test]
    fn profile_toml_round_trip_shape() {
        let s = LorentzSpecies::new(875.0, 600.0).unwrap();
        let p = MediumProfile::slab(1.5, 0.0, 0.006, 1.0, Some(s)).unwrap();
        assert_eq!(p.regions().len(), 3);
        assert!(p.regions()[1].oscillator.is_some());
        assert!(MediumProfile::new(1.0, vec![Region { x_start: -0.5, x_end: 0.4, eps_inf: 1.0, oscillator: None }]).is_err());
    }
}
