//! Browser bindings for a few small cqnmd calculations.

use cqnmd::assembly::{assemble_no_cross, SnapPolicy};
use cqnmd::eigensolver::{dispersion_points, solve, ModeBasis};
use cqnmd::lattice::Grid1D;
use cqnmd::medium::{analytic_wavenumber, slab_transfer, LorentzSpecies, MediumProfile, PhysicalConstants};
use cqnmd::oracle::analytic_purcell_ratio;
use cqnmd::quantize::QuantizedBasis;
use cqnmd::states::purcell_factor;
use wasm_bindgen::prelude::*;

const MAX_POINTS: usize = 1500;

fn js(e: cqnmd::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn species(omega_p: f64, omega_0: f64) -> Result<Option<LorentzSpecies>, JsError> {
    if omega_p == 0.0 {
        return Ok(None);
    }
    LorentzSpecies::new(omega_p, omega_0).map(Some).map_err(js)
}

fn homogeneous_modes(osc: Option<LorentzSpecies>, length: f64, n_points: usize) -> Result<ModeBasis, JsError> {
    if n_points > MAX_POINTS {
        return Err(JsError::new(&format!("at most {MAX_POINTS} grid points in the browser")));
    }
    let grid = Grid1D::periodic(length, n_points, 0.0).map_err(js)?;
    let profile = MediumProfile::homogeneous(length, 1.0, osc).map_err(js)?;
    let sys = assemble_no_cross(&grid, &profile, &PhysicalConstants::natural(), SnapPolicy::Snap).map_err(js)?;
    solve(&sys).map_err(js)
}

/// Reflectance of a dielectric slab in vacuum at `samples` frequencies on (0, omega_max].
/// Returns interleaved `[omega, R, ...]`.
#[wasm_bindgen]
pub fn slab_response(eps: f64, thickness: f64, omega_max: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    let c = PhysicalConstants::natural();
    let mut out = Vec::with_capacity(2 * samples);
    for i in 1..=samples {
        let w = omega_max * i as f64 / samples as f64;
        let (r, _) = slab_transfer(eps, thickness, w, &c).map_err(js)?;
        out.extend([w, r.norm_sqr()]);
    }
    Ok(out)
}

/// Lattice dispersion of a homogeneous Lorentz medium (omega_p = 0 for vacuum).
/// Returns interleaved `[omega, k_lattice, k_continuum, ...]`.
#[wasm_bindgen]
pub fn dispersion_diagram(omega_p: f64, omega_0: f64, length: f64, n_points: usize) -> Result<Vec<f64>, JsError> {
    let osc = species(omega_p, omega_0)?;
    let basis = homogeneous_modes(osc, length, n_points)?;
    let (points, _) = dispersion_points(&basis).map_err(js)?;
    let c = PhysicalConstants::natural();
    let mut out = Vec::with_capacity(3 * points.len());
    for (w, k, _) in points {
        let ka = analytic_wavenumber(osc.as_ref(), 1.0, w, &c).unwrap_or(f64::NAN);
        out.extend([w, k.abs(), ka]);
    }
    Ok(out)
}

/// Spontaneous-emission rate relative to vacuum for an emitter at x = 0 in a
/// homogeneous Lorentz medium. Returns interleaved `[omega, ratio, continuum, ...]`.
#[wasm_bindgen]
pub fn purcell_curve(
    omega_p: f64,
    omega_0: f64,
    length: f64,
    n_points: usize,
    omega_min: f64,
    omega_max: f64,
    samples: usize,
) -> Result<Vec<f64>, JsError> {
    let osc = species(omega_p, omega_0)?;
    let qb = QuantizedBasis::new(homogeneous_modes(osc, length, n_points)?).map_err(js)?;
    let top = qb.omegas().last().copied().unwrap_or(omega_max);
    let c = PhysicalConstants::natural();
    let mut out = Vec::with_capacity(3 * samples);
    for i in 0..samples {
        let w = omega_min + (omega_max - omega_min) * i as f64 / (samples.max(2) - 1) as f64;
        let r = purcell_factor(&qb, 0.0, w, None).map_err(js)?;
        let a = analytic_purcell_ratio(osc.as_ref(), 1.0, w, r.eta, top, &c).unwrap_or(f64::NAN);
        out.extend([w, r.ratio, a]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vacuum_dispersion_is_close_to_the_light_line() {
        let v = dispersion_diagram(0.0, 0.0, 1.0, 200).unwrap();
        assert!(v.len() > 30);
        for p in v.chunks(3).filter(|p| p[2] * 0.005 < 0.2) {
            assert!((p[1] - p[2]).abs() < 0.01 * p[2], "{p:?}");
        }
    }

    #[test]
    fn slab_reflectance_is_bounded() {
        let v = slab_response(7.0, 0.006, 1000.0, 50).unwrap();
        assert!(v.chunks(2).all(|p| (0.0..=1.0).contains(&p[1])));
    }

    #[test]
    fn purcell_is_suppressed_in_the_gap() {
        let v = purcell_curve(50.0, 50.0, 4.0, 400, 55.0, 65.0, 3).unwrap();
        assert!(v[1] < 0.05, "{v:?}");
        assert!(v.chunks(3).all(|p| (p[1] - p[2]).abs() < 0.15 * p[2]), "{v:?}");
    }
}
