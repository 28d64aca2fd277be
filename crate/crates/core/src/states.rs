//! Two-photon states and the correlation observables built on them.
//!
//! A state |Ψ⟩ = Σ ψ_mn â_m†â_n†|0⟩ is stored in factored form ψ = X·Yᵀ
//! (a product state has one column), so every contraction costs O(n·r).

use std::collections::BTreeMap;

use faer::{Mat, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quantize::{FieldKernel, FieldKind, PacketSpec, QuantizedBasis};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone)]
pub enum TwoPhotonState {
    Product { g: Vec<Complex64>, h: Vec<Complex64> },
    Joint { left: Mat<Complex64>, right: Mat<Complex64> },
}

fn col_mat(v: &[Complex64]) -> Mat<Complex64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

fn hadamard_sum(a: &Mat<Complex64>, b: &Mat<Complex64>) -> Complex64 {
    let mut s = ZERO;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * b[(i, j)];
        }
    }
    s
}

impl TwoPhotonState {
    pub fn product(g: Vec<Complex64>, h: Vec<Complex64>) -> Result<Self> {
        if g.len() != h.len() {
            return Err(Error::DimensionMismatch { expected: g.len(), found: h.len() });
        }
        Ok(TwoPhotonState::Product { g, h })
    }

    pub fn joint(left: Mat<Complex64>, right: Mat<Complex64>) -> Result<Self> {
        if left.nrows() != right.nrows() || left.ncols() != right.ncols() {
            return Err(Error::DimensionMismatch { expected: left.nrows(), found: right.nrows() });
        }
        Ok(TwoPhotonState::Joint { left, right })
    }

    pub fn n_modes(&self) -> usize {
        match self {
            TwoPhotonState::Product { g, .. } => g.len(),
            TwoPhotonState::Joint { left, .. } => left.nrows(),
        }
    }

    /// (X, Y) with ψ = X·Yᵀ.
    pub fn factors(&self) -> (Mat<Complex64>, Mat<Complex64>) {
        match self {
            TwoPhotonState::Product { g, h } => (col_mat(g), col_mat(h)),
            TwoPhotonState::Joint { left, right } => (left.clone(), right.clone()),
        }
    }

    /// Dense ψ_mn, for small bases.
    pub fn amplitude_matrix(&self) -> Mat<Complex64> {
        let (x, y) = self.factors();
        &x * y.transpose()
    }

    /// ⟨Ψ|Ψ⟩ = Σ ψ*_mn (ψ_mn + ψ_nm).
    pub fn norm_sq(&self) -> f64 {
        let (x, y) = self.factors();
        let gx = x.adjoint() * &x;
        let gy = y.adjoint() * &y;
        let xy = x.adjoint() * &y;
        let yx = y.adjoint() * &x;
        (direct_part(&gx, &gy) + hadamard_sum(&xy, &yx).re).max(0.0)
    }
}

// Σ_mn |ψ_mn|² = Σ_jk (X†X)_jk (Y†Y)_jk
fn direct_part(gx: &Mat<Complex64>, gy: &Mat<Complex64>) -> f64 {
    let mut s = ZERO;
    for j in 0..gx.ncols() {
        for i in 0..gx.nrows() {
            s += gx[(i, j)] * gy[(i, j)];
        }
    }
    s.re
}

/// Amplitude vector α_n = w_n e^{−iω_n t} of Â⁽⁺⁾(x, t).
pub fn detector_vector(kernel: &FieldKernel, omegas: &[f64], t: f64) -> Vec<Complex64> {
    kernel.weights.iter().zip(omegas).map(|(w, om)| w * Complex64::from_polar(1.0, -om * t)).collect()
}

fn check_kernel(state: &TwoPhotonState, k: &FieldKernel) -> Result<()> {
    if k.weights.len() != state.n_modes() {
        return Err(Error::BasisMismatch);
    }
    Ok(())
}

fn tdot(a: &[Complex64], m: &Mat<Complex64>) -> Vec<Complex64> {
    (0..m.ncols()).map(|j| (0..m.nrows()).map(|i| a[i] * m[(i, j)]).sum()).collect()
}

/// ⟨0|Â⁽⁺⁾(2)Â⁽⁺⁾(1)|Ψ⟩.
pub fn biphoton_amplitude(
    qb: &QuantizedBasis,
    state: &TwoPhotonState,
    kernel1: &FieldKernel,
    t1: f64,
    kernel2: &FieldKernel,
    t2: f64,
) -> Result<Complex64> {
    check_kernel(state, kernel1)?;
    check_kernel(state, kernel2)?;
    let a = detector_vector(kernel1, qb.omegas(), t1);
    let b = detector_vector(kernel2, qb.omegas(), t2);
    let (x, y) = state.factors();
    let (ax, ay, bx, by) = (tdot(&a, &x), tdot(&a, &y), tdot(&b, &x), tdot(&b, &y));
    Ok((0..ax.len()).map(|j| ax[j] * by[j] + bx[j] * ay[j]).sum())
}

/// Gram matrices reused by every intensity evaluation.
struct Grams {
    gx: Mat<Complex64>,
    gy: Mat<Complex64>,
    yx: Mat<Complex64>,
}

impl Grams {
    fn new(x: &Mat<Complex64>, y: &Mat<Complex64>) -> Self {
        Grams { gx: x.adjoint() * x, gy: y.adjoint() * y, yx: y.adjoint() * x }
    }

    /// ‖Y u + X s‖² with u = Xᵀα, s = Yᵀα.
    fn intensity(&self, u: &[Complex64], s: &[Complex64]) -> f64 {
        let r = u.len();
        let mut acc = ZERO;
        for i in 0..r {
            for j in 0..r {
                acc += u[i].conj() * self.gy[(i, j)] * u[j];
                acc += s[i].conj() * self.gx[(i, j)] * s[j];
                acc += 2.0 * (u[i].conj() * self.yx[(i, j)] * s[j]).re;
            }
        }
        acc.re.max(0.0)
    }
}

/// ⟨Â⁽⁻⁾Â⁽⁺⁾⟩ at one detector, not divided by the norm.
pub fn raw_intensity(qb: &QuantizedBasis, state: &TwoPhotonState, kernel: &FieldKernel, t: f64) -> Result<f64> {
    check_kernel(state, kernel)?;
    let a = detector_vector(kernel, qb.omegas(), t);
    let (x, y) = state.factors();
    Ok(Grams::new(&x, &y).intensity(&tdot(&a, &x), &tdot(&a, &y)))
}

/// Normal-ordered Glauber correlation N·|Ψ(1,2)|²/(I(1)·I(2)).
pub fn g2(
    qb: &QuantizedBasis,
    state: &TwoPhotonState,
    kernel1: &FieldKernel,
    t1: f64,
    kernel2: &FieldKernel,
    t2: f64,
) -> Result<f64> {
    let psi = biphoton_amplitude(qb, state, kernel1, t1, kernel2, t2)?;
    let i1 = raw_intensity(qb, state, kernel1, t1)?;
    let i2 = raw_intensity(qb, state, kernel2, t2)?;
    let n = state.norm_sq();
    if !(i1 > 0.0 && i2 > 0.0) || !(n > 0.0) {
        return Err(Error::ZeroIntensity);
    }
    Ok(n * psi.norm_sqr() / (i1 * i2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationResult {
    pub tau: Vec<f64>,
    pub values: Vec<f64>,
    pub normalization: String,
    pub metadata: BTreeMap<String, String>,
}

impl CorrelationResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau,value\n");
        for (t, v) in self.tau.iter().zip(&self.values) {
            s.push_str(&format!("{t:.12e},{v:.12e}\n"));
        }
        s
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, reference_peak: f64, label: &str) -> CorrelationResult {
        CorrelationResult {
            values: self.values.iter().map(|v| v / reference_peak).collect(),
            normalization: label.to_string(),
            ..self.clone()
        }
    }

    /// Full width at half maximum, by linear interpolation of the crossings
    /// around the global peak.
    pub fn fwhm(&self) -> Option<f64> {
        let n = self.values.len();
        let p = (0..n).max_by(|&a, &b| self.values[a].total_cmp(&self.values[b]))?;
        let half = 0.5 * self.values[p];
        let mut l = p;
        while l > 0 && self.values[l - 1] > half {
            l -= 1;
        }
        let mut r = p;
        while r + 1 < n && self.values[r + 1] > half {
            r += 1;
        }
        if l == 0 || r + 1 == n {
            return None;
        }
        let cross = |a: usize, b: usize| {
            let (va, vb) = (self.values[a], self.values[b]);
            self.tau[a] + (half - va) / (vb - va) * (self.tau[b] - self.tau[a])
        };
        Some(cross(r, r + 1) - cross(l - 1, l))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomConfig {
    pub x_g: f64,
    pub sigma_g: f64,
    pub k_g: f64,
    pub x1: f64,
    pub x2: f64,
}

impl HomConfig {
    pub fn new(x_g: f64, sigma_g: f64, k_g: f64) -> Self {
        Self { x_g, sigma_g, k_g, x1: x_g, x2: -x_g }
    }
}

/// Product state of the two packets for delay τ: g starts at x_g + cτ and
/// travels toward −x, h starts at −x_g and travels toward +x.
pub fn hom_state(qb: &QuantizedBasis, cfg: &HomConfig, tau: f64) -> Result<TwoPhotonState> {
    let c = qb.basis.consts.c;
    let half = 0.5 * qb.basis.grid.length();
    let reach = cfg.x_g.abs() + (c * tau).abs() + 4.0 * cfg.sigma_g;
    if reach > half || cfg.x1.abs() > half || cfg.x2.abs() > half {
        return Err(Error::DomainTooSmall(format!(
            "packets reach |x| = {reach:.4} but the domain half-length is {half:.4}"
        )));
    }
    let g = qb.gaussian_packet(&PacketSpec {
        center: cfg.x_g + c * tau,
        width: cfg.sigma_g,
        carrier: cfg.k_g,
        direction: -1.0,
    })?;
    let h = qb.gaussian_packet(&PacketSpec { center: -cfg.x_g, width: cfg.sigma_g, carrier: cfg.k_g, direction: 1.0 })?;
    TwoPhotonState::product(g, h)
}

/// g⁽²⁾ at (x1, t1) and (x2, t1 + τ) with t1 = 2x_g/c, one state per τ.
pub fn hom_curve(qb: &QuantizedBasis, cfg: &HomConfig, taus: &[f64]) -> Result<CorrelationResult> {
    let t1 = 2.0 * cfg.x_g / qb.basis.consts.c;
    let k1 = qb.field_kernel(cfg.x1, FieldKind::VectorPotential);
    let k2 = qb.field_kernel(cfg.x2, FieldKind::VectorPotential);
    let mut values = Vec::with_capacity(taus.len());
    for &tau in taus {
        let st = hom_state(qb, cfg, tau)?;
        values.push(g2(qb, &st, &k1, t1, &k2, t1 + tau)?);
    }
    let mut metadata = BTreeMap::new();
    metadata.insert("t1".into(), format!("{t1:.12e}"));
    metadata.insert("x1".into(), format!("{:.12e}", k1.x));
    metadata.insert("x2".into(), format!("{:.12e}", k2.x));
    Ok(CorrelationResult { tau: taus.to_vec(), values, normalization: "glauber".into(), metadata })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntangledSpec {
    pub pump: f64,
    pub signal_center: f64,
    pub idler_center: f64,
    pub bandwidth: f64,
    /// Width σ_P of the pump factor exp[−((ω_s+ω_i−Ω_P)/(√2σ_P))²].
    pub pump_width: f64,
}

impl EntangledSpec {
    /// Intensity standard deviation of each photon's spectral envelope.
    pub fn envelope_sigma(&self) -> f64 {
        0.25 * self.bandwidth
    }

    fn envelope(&self, omega: f64, center: f64) -> f64 {
        let s = self.envelope_sigma();
        (-(omega - center).powi(2) / (4.0 * s * s)).exp()
    }
}

/// Joint spectral amplitude on plane-wave grids: signal waves travel toward
/// +x, idler waves toward −x, both created around x = 0.
#[derive(Debug, Clone)]
pub struct JointSpectrum {
    pub signal_k: Vec<f64>,
    pub idler_k: Vec<f64>,
    pub amplitude: Mat<Complex64>,
}

impl JointSpectrum {
    pub fn new(qb: &QuantizedBasis, spec: &EntangledSpec, entangled: bool) -> Result<Self> {
        let c = qb.basis.consts.c;
        let len = qb.basis.grid.length();
        let dk = std::f64::consts::TAU / len;
        let s = spec.envelope_sigma();
        let kmax = qb.basis.omegas.last().copied().unwrap_or(0.0) / c;
        let band = |center: f64| -> Result<Vec<f64>> {
            let lo = ((center - 5.0 * s) / c / dk).ceil().max(1.0) as i64;
            let hi = ((center + 5.0 * s) / c / dk).floor() as i64;
            if (center - 5.0 * s) <= 0.0 || (hi as f64) * dk >= 0.5 * kmax {
                return Err(Error::BandClipping(format!("band around {center} leaves the resolved spectrum")));
            }
            Ok((lo..=hi).map(|m| m as f64 * dk).collect())
        };
        let signal_k = band(spec.signal_center)?;
        let idler_k = band(spec.idler_center)?;
        let amplitude = Mat::from_fn(signal_k.len(), idler_k.len(), |m, n| {
            let (ws, wi) = (c * signal_k[m], c * idler_k[n]);
            let pump = if entangled {
                (-((ws + wi - spec.pump) / (std::f64::consts::SQRT_2 * spec.pump_width)).powi(2)).exp()
            } else {
                1.0
            };
            Complex64::new(pump * spec.envelope(ws, spec.signal_center) * spec.envelope(wi, spec.idler_center), 0.0)
        });
        Ok(Self { signal_k, idler_k, amplitude })
    }

    /// K = 1/Σp_j² over the normalized squared singular values.
    pub fn schmidt_number(&self) -> Result<f64> {
        let sv = self.amplitude.singular_values().map_err(|e| Error::Solver(format!("{e:?}")))?;
        let total: f64 = sv.iter().map(|s| s * s).sum();
        Ok(1.0 / sv.iter().map(|s| (s * s / total).powi(2)).sum::<f64>())
    }

    /// Largest |ψ(x)|² marginal (either photon, t = 0) at the given points,
    /// relative to its global peak.
    pub fn marginal_tail(&self, xs: &[f64], probe: &[f64]) -> f64 {
        let density = |x: f64, signal: bool| -> f64 {
            let (ks, other) = if signal { (&self.signal_k, self.idler_k.len()) } else { (&self.idler_k, self.signal_k.len()) };
            let sign = if signal { 1.0 } else { -1.0 };
            let mut total = 0.0;
            for o in 0..other {
                let mut acc = ZERO;
                for (m, &k) in ks.iter().enumerate() {
                    let a = if signal { self.amplitude[(m, o)] } else { self.amplitude[(o, m)] };
                    acc += a * Complex64::from_polar(1.0, sign * k * x);
                }
                total += acc.norm_sqr();
            }
            total
        };
        let mut worst: f64 = 0.0;
        for signal in [true, false] {
            let peak = xs.iter().map(|&x| density(x, signal)).fold(0.0, f64::max);
            let tail = probe.iter().map(|&x| density(x, signal)).fold(0.0, f64::max);
            worst = worst.max(tail / peak);
        }
        worst
    }
}

/// Ladder amplitudes (one column per wave) of the plane waves e^{±ikx}.
fn plane_wave_photons(qb: &QuantizedBasis, ks: &[f64], direction: f64) -> Result<Mat<Complex64>> {
    let grid = &qb.basis.grid;
    let dim = qb.basis.modes.nrows();
    let f = Mat::from_fn(dim, ks.len(), |i, j| {
        if i < grid.n_points {
            Complex64::from_polar(1.0, direction * ks[j] * grid.x(i))
        } else {
            ZERO
        }
    });
    let d = qb.project_coordinates(&f)?;
    Ok(Mat::from_fn(d.nrows(), d.ncols(), |n, j| d[(n, j)] / qb.scales[n]))
}

/// Energy-time entangled (or, with `entangled = false`, separable) pair.
pub fn make_entangled(
    qb: &QuantizedBasis,
    spec: &EntangledSpec,
    entangled: bool,
) -> Result<(TwoPhotonState, JointSpectrum)> {
    let js = JointSpectrum::new(qb, spec, entangled)?;
    let sig = plane_wave_photons(qb, &js.signal_k, 1.0)?;
    let idl = plane_wave_photons(qb, &js.idler_k, -1.0)?;
    let state = if entangled {
        let left = &sig * &js.amplitude;
        TwoPhotonState::joint(left, idl)?
    } else {
        let c = qb.basis.consts.c;
        let cs = Mat::from_fn(js.signal_k.len(), 1, |m, _| {
            Complex64::new(spec.envelope(c * js.signal_k[m], spec.signal_center), 0.0)
        });
        let ci = Mat::from_fn(js.idler_k.len(), 1, |n, _| {
            Complex64::new(spec.envelope(c * js.idler_k[n], spec.idler_center), 0.0)
        });
        let g = &sig * &cs;
        let h = &idl * &ci;
        TwoPhotonState::product((0..g.nrows()).map(|i| g[(i, 0)]).collect(), (0..h.nrows()).map(|i| h[(i, 0)]).collect())?
    };
    let n = state.norm_sq().sqrt();
    let state = match state {
        TwoPhotonState::Product { g, h } => {
            let s = n.sqrt();
            TwoPhotonState::Product { g: g.iter().map(|v| v / s).collect(), h: h.iter().map(|v| v / s).collect() }
        }
        TwoPhotonState::Joint { left, right } => {
            TwoPhotonState::Joint { left: Mat::from_fn(left.nrows(), left.ncols(), |i, j| left[(i, j)] / n), right }
        }
    };
    Ok((state, js))
}

/// Per-detector contractions Xᵀα(t), Yᵀα(t) on a time grid (rows = times).
struct DetectorSeries {
    xa: Mat<Complex64>,
    ya: Mat<Complex64>,
}

fn detector_series(qb: &QuantizedBasis, x: &Mat<Complex64>, y: &Mat<Complex64>, k: &FieldKernel, times: &[f64]) -> DetectorSeries {
    let n = qb.n_modes();
    let r = x.ncols();
    let xy = Mat::from_fn(n, 2 * r, |i, j| {
        let v = if j < r { x[(i, j)] } else { y[(i, j - r)] };
        v * k.weights[i]
    });
    let mut xa = Mat::<Complex64>::zeros(times.len(), r);
    let mut ya = Mat::<Complex64>::zeros(times.len(), r);
    for chunk in (0..times.len()).collect::<Vec<_>>().chunks(256) {
        let e = Mat::from_fn(chunk.len(), n, |a, m| Complex64::from_polar(1.0, -qb.omegas()[m] * times[chunk[a]]));
        let p = &e * &xy;
        for (a, &t) in chunk.iter().enumerate() {
            for j in 0..r {
                xa[(t, j)] = p[(a, j)];
                ya[(t, j)] = p[(a, j + r)];
            }
        }
    }
    DetectorSeries { xa, ya }
}

fn row(m: &Mat<Complex64>, i: usize) -> Vec<Complex64> {
    (0..m.ncols()).map(|j| m[(i, j)]).collect()
}

/// Single-photon counting rate at one detector over a time grid.
pub fn intensity_series(qb: &QuantizedBasis, state: &TwoPhotonState, kernel: &FieldKernel, times: &[f64]) -> Result<Vec<f64>> {
    check_kernel(state, kernel)?;
    let (x, y) = state.factors();
    let g = Grams::new(&x, &y);
    let s = detector_series(qb, &x, &y, kernel, times);
    Ok((0..times.len()).map(|i| g.intensity(&row(&s.xa, i), &row(&s.ya, i))).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalStats {
    pub peak_time: f64,
    pub sigma: f64,
}

/// Peak time (parabolic refinement) and rms width of the main lobe of the
/// single-photon intensity at one detector, scanned over [t_start, t_end].
pub fn arrival_stats(
    qb: &QuantizedBasis,
    state: &TwoPhotonState,
    kernel: &FieldKernel,
    t_start: f64,
    t_end: f64,
    samples: usize,
) -> Result<ArrivalStats> {
    let h = (t_end - t_start) / (samples - 1) as f64;
    let times: Vec<f64> = (0..samples).map(|i| t_start + h * i as f64).collect();
    let v = intensity_series(qb, state, kernel, &times)?;
    let p = (0..samples).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
    if v[p] <= 0.0 {
        return Err(Error::ZeroIntensity);
    }
    let mut peak = times[p];
    if p > 0 && p + 1 < samples {
        let den = v[p - 1] - 2.0 * v[p] + v[p + 1];
        if den < 0.0 {
            peak += 0.5 * h * (v[p - 1] - v[p + 1]) / den;
        }
    }
    // moments over the main lobe only, so that echoes from interfaces do not count
    let floor = 1e-4 * v[p];
    let mut lo = p;
    while lo > 0 && v[lo - 1] > floor {
        lo -= 1;
    }
    let mut hi = p;
    while hi + 1 < samples && v[hi + 1] > floor {
        hi += 1;
    }
    let (t, v) = (&times[lo..=hi], &v[lo..=hi]);
    let total: f64 = v.iter().sum();
    let mean: f64 = t.iter().zip(v).map(|(t, w)| t * w).sum::<f64>() / total;
    let var: f64 = t.iter().zip(v).map(|(t, w)| (t - mean).powi(2) * w).sum::<f64>() / total;
    Ok(ArrivalStats { peak_time: peak, sigma: var.sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidenceWindow {
    pub t1: f64,
    pub t2: f64,
    pub half_width: f64,
    /// T step; τ is sampled at twice this step.
    pub step: f64,
}

/// C(τ) = Σ_T |Ψ(x1, T + t̃1 + τ/2; x2, T + t̃2 − τ/2)|² over |T| ≤ half_width,
/// divided by the state norm; `taus` must be the symmetric grid
/// τ_j = 2·step·j, j = −J..J.
pub fn coincidence_curve(
    qb: &QuantizedBasis,
    state: &TwoPhotonState,
    kernel1: &FieldKernel,
    kernel2: &FieldKernel,
    window: &CoincidenceWindow,
    tau_steps: usize,
) -> Result<CorrelationResult> {
    check_kernel(state, kernel1)?;
    check_kernel(state, kernel2)?;
    let h = window.step;
    let nt = (window.half_width / h).ceil() as i64;
    let nj = tau_steps as i64;
    // detector-1 times t̃1 + h·(a + j), detector-2 times t̃2 + h·(a − j)
    let lo = -nt - nj;
    let count = (2 * (nt + nj) + 1) as usize;
    let times1: Vec<f64> = (0..count).map(|i| window.t1 + h * (lo + i as i64) as f64).collect();
    let times2: Vec<f64> = (0..count).map(|i| window.t2 + h * (lo + i as i64) as f64).collect();
    let (x, y) = state.factors();
    let s1 = detector_series(qb, &x, &y, kernel1, &times1);
    let s2 = detector_series(qb, &x, &y, kernel2, &times2);
    let norm = state.norm_sq();
    let r = x.ncols();
    let mut tau = Vec::new();
    let mut values = Vec::new();
    for j in -nj..=nj {
        let mut sum = 0.0;
        for a in -nt..=nt {
            let i1 = (a + j - lo) as usize;
            let i2 = (a - j - lo) as usize;
            let mut psi = ZERO;
            for c in 0..r {
                psi += s1.xa[(i1, c)] * s2.ya[(i2, c)] + s2.xa[(i2, c)] * s1.ya[(i1, c)];
            }
            sum += psi.norm_sqr();
        }
        tau.push(2.0 * h * j as f64);
        values.push(sum * h / norm);
    }
    let mut metadata = BTreeMap::new();
    metadata.insert("t1".into(), format!("{:.12e}", window.t1));
    metadata.insert("t2".into(), format!("{:.12e}", window.t2));
    metadata.insert("window".into(), format!("{:.12e}", window.half_width));
    Ok(CorrelationResult { tau, values, normalization: "raw".into(), metadata })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PurcellResult {
    pub ratio: f64,
    pub eta: f64,
    pub local_spacing: f64,
    pub under_resolved: bool,
}

fn lorentzian(x: f64, eta: f64) -> f64 {
    eta / std::f64::consts::PI / (x * x + eta * eta)
}

/// Median successive spacing among the 20 modes nearest ω_a.
pub fn local_mode_spacing(omegas: &[f64], omega_a: f64) -> f64 {
    let mut idx: Vec<usize> = (0..omegas.len()).collect();
    idx.sort_by(|&a, &b| (omegas[a] - omega_a).abs().total_cmp(&(omegas[b] - omega_a).abs()));
    let mut near: Vec<f64> = idx.iter().take(20).map(|&i| omegas[i]).collect();
    near.sort_by(f64::total_cmp);
    // degenerate pairs differ only by roundoff
    let floor = 1e-8 * omega_a.max(near.last().copied().unwrap_or(0.0));
    let mut gaps: Vec<f64> = near.windows(2).map(|w| w[1] - w[0]).filter(|g| *g > floor).collect();
    if gaps.is_empty() {
        return 0.0;
    }
    gaps.sort_by(f64::total_cmp);
    gaps[gaps.len() / 2]
}

/// Golden-rule emission rate at x_a with a Lorentzian of half-width η,
/// relative to the same expression evaluated for the free-field continuum.
pub fn purcell_factor(qb: &QuantizedBasis, x_a: f64, omega_a: f64, eta: Option<f64>) -> Result<PurcellResult> {
    if !(omega_a > 0.0) {
        return Err(Error::InvalidParameter("emitter frequency must be positive".into()));
    }
    let spacing = local_mode_spacing(qb.omegas(), omega_a);
    let eta = eta.unwrap_or(10.0 * spacing);
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter("linewidth must be positive".into()));
    }
    let k = qb.field_kernel(x_a, FieldKind::Electric);
    let consts = &qb.basis.consts;
    let rate: f64 = k
        .weights
        .iter()
        .zip(qb.omegas())
        .map(|(w, om)| w.norm_sqr() * lorentzian(om - omega_a, eta))
        .sum();
    let free = consts.hbar * omega_a / (2.0 * std::f64::consts::PI * consts.eps0 * consts.c);
    Ok(PurcellResult { ratio: rate / free, eta, local_spacing: spacing, under_resolved: eta < 3.0 * spacing })
}

#[derive(Debug, Clone)]
pub struct EnergyMovie {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    /// u[frame][point]
    pub u: Vec<Vec<f64>>,
}

impl EnergyMovie {
    pub fn totals(&self, dx: f64) -> Vec<f64> {
        self.u.iter().map(|f| dx * f.iter().sum::<f64>()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,x,u\n");
        for (f, t) in self.u.iter().zip(&self.t) {
            for (x, u) in self.x.iter().zip(f) {
                s.push_str(&format!("{t:.12e},{x:.12e},{u:.12e}\n"));
            }
        }
        s
    }
}

/// One-photon coherence ρ_mn = ⟨â_m†â_n⟩/N as Σ_c λ_c y_c y_c†.
pub fn coherence_factors(state: &TwoPhotonState) -> Result<(Vec<f64>, Mat<Complex64>)> {
    let (x, y) = state.factors();
    let n = x.nrows();
    let r = x.ncols();
    let z = Mat::from_fn(n, 2 * r, |i, j| if j < r { x[(i, j)] } else { y[(i, j - r)] });
    let w = Mat::from_fn(n, 2 * r, |i, j| if j < r { y[(i, j)] } else { x[(i, j - r)] });
    let mut g = w.adjoint() * &w;
    for i in 0..2 * r {
        g[(i, i)] = Complex64::new(g[(i, i)].re, 0.0);
        for j in i + 1..2 * r {
            let a = 0.5 * (g[(i, j)] + g[(j, i)].conj());
            g[(i, j)] = a;
            g[(j, i)] = a.conj();
        }
    }
    let evd = g.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Solver(format!("{e:?}")))?;
    let norm = state.norm_sq();
    let lam: Vec<f64> = evd.S().column_vector().iter().map(|v| v.re.max(0.0) / norm).collect();
    let zc = Mat::from_fn(n, 2 * r, |i, j| z[(i, j)].conj());
    let yv = &zc * evd.U();
    Ok((lam, yv))
}

/// Normal-ordered energy density per grid cell for each frame. Field gradient
/// energy uses forward differences so that Δx·Σu equals the total energy.
pub fn energy_density_movie(qb: &QuantizedBasis, state: &TwoPhotonState, times: &[f64]) -> Result<EnergyMovie> {
    if state.n_modes() != qb.n_modes() {
        return Err(Error::BasisMismatch);
    }
    let sys = qb.basis.system()?;
    let grid = &qb.basis.grid;
    let npts = grid.n_points;
    let dx = grid.spacing;
    let mu0 = qb.basis.consts.mu0;
    let e0 = qb.basis.consts.eps0;
    let wrap = Complex64::from_polar(1.0, grid.bloch_phase);
    let (lam, yv) = coherence_factors(state)?;
    let keep: Vec<usize> = (0..lam.len()).filter(|&c| lam[c] > 0.0).collect();
    let nm = qb.n_modes();
    let mut frames = Vec::with_capacity(times.len());
    for &t in times {
        // coefficient columns: conj(y_cn)·s_n·e^{−iω_n t}
        let coef = Mat::from_fn(nm, keep.len(), |n, c| {
            yv[(n, keep[c])].conj() * qb.scales[n] * Complex64::from_polar(1.0, -qb.omegas()[n] * t)
        });
        let pcoef = Mat::from_fn(nm, keep.len(), |n, c| coef[(n, c)] * Complex64::new(0.0, -qb.omegas()[n]));
        let f = qb.basis.modes.apply(&coef);
        let pm = crate::eigensolver::block_rows(&sys.mass.inverse(), &qb.basis.modes.apply(&pcoef));
        let mut u = vec![0.0; npts];
        for (c, &cc) in keep.iter().enumerate() {
            let l = lam[cc];
            let mp = sys.mass.apply(&(0..pm.nrows()).map(|i| pm[(i, c)]).collect::<Vec<_>>());
            for i in 0..npts {
                let next = if i + 1 < npts { f[(i + 1, c)] } else { f[(0, c)] * wrap };
                let grad = (next - f[(i, c)]) / dx;
                let mut e = grad.norm_sqr() / mu0 + (pm[(i, c)].conj() * mp[i]).re;
                if let Some(s) = sys.materials[i].oscillator {
                    let j = sys.layout.osc_points.binary_search(&i).expect("oscillator slot");
                    let xs = sys.layout.osc_slot(j);
                    e += e0 * s.plasma_freq.powi(2) * f[(xs, c)].norm_sqr() + (pm[(xs, c)].conj() * mp[xs]).re;
                }
                u[i] += l * e;
            }
        }
        frames.push(u);
    }
    Ok(EnergyMovie { x: grid.coordinates(), t: times.to_vec(), u: frames })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_no_cross, SnapPolicy};
    use crate::eigensolver::solve;
    use crate::lattice::Grid1D;
    use crate::medium::{MediumProfile, PhysicalConstants};
    use crate::oracle::{fock_biphoton, fock_energy, fock_g2, fock_intensity, inner, FockSpace};

    // five grid points leave four modes after the zero mode is dropped
    fn tiny() -> QuantizedBasis {
        let g = Grid1D::periodic(1.0, 5, 0.0).unwrap();
        let p = MediumProfile::vacuum(1.0).unwrap();
        let sys = assemble_no_cross(&g, &p, &PhysicalConstants::natural(), SnapPolicy::Strict).unwrap();
        QuantizedBasis::new(solve(&sys).unwrap()).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn matches_fock_oracle() {
        let qb = tiny();
        assert_eq!(qb.n_modes(), 4);
        let g = vec![c(0.3, 0.1), c(-0.2, 0.5), c(0.0, -0.4), c(0.6, 0.0)];
        let h = vec![c(0.1, 0.0), c(0.2, -0.3), c(0.7, 0.1), c(-0.1, 0.2)];
        let st = TwoPhotonState::product(g.clone(), h.clone()).unwrap();
        let space = FockSpace::new(4, 2).unwrap();
        let fv = space.two_photon(&st.amplitude_matrix()).unwrap();
        assert!((inner(&fv, &fv).re - st.norm_sq()).abs() < 1e-12);
        let (k1, k2) = (qb.field_kernel(0.1, FieldKind::VectorPotential), qb.field_kernel(-0.3, FieldKind::Electric));
        let (t1, t2) = (0.37, 1.1);
        let a = detector_vector(&k1, qb.omegas(), t1);
        let b = detector_vector(&k2, qb.omegas(), t2);
        let psi = biphoton_amplitude(&qb, &st, &k1, t1, &k2, t2).unwrap();
        assert!((psi - fock_biphoton(&space, &fv, &a, &b).unwrap()).norm() < 1e-12);
        let i1 = raw_intensity(&qb, &st, &k1, t1).unwrap();
        assert!((i1 - fock_intensity(&space, &fv, &a).unwrap()).abs() < 1e-12);
        let v = g2(&qb, &st, &k1, t1, &k2, t2).unwrap();
        assert!((v - fock_g2(&space, &fv, &a, &b).unwrap()).abs() < 1e-12 * v.max(1.0));
        let movie = energy_density_movie(&qb, &st, &[0.0, 0.7]).unwrap();
        let e = fock_energy(&space, &fv, qb.omegas(), 1.0).unwrap();
        for tot in movie.totals(qb.basis.weight()) {
            assert!((tot - e).abs() < 1e-12 * e, "{tot} {e}");
        }
    }

    #[test]
    fn exchange_and_identical_photons() {
        let qb = tiny();
        let g = vec![c(0.5, 0.0), c(0.0, 0.5), c(0.5, 0.0), c(0.0, -0.5)];
        let st = TwoPhotonState::product(g.clone(), g.clone()).unwrap();
        let (k1, k2) = (qb.field_kernel(0.2, FieldKind::VectorPotential), qb.field_kernel(-0.2, FieldKind::VectorPotential));
        let p12 = biphoton_amplitude(&qb, &st, &k1, 0.3, &k2, 0.9).unwrap();
        let p21 = biphoton_amplitude(&qb, &st, &k2, 0.9, &k1, 0.3).unwrap();
        assert!((p12 - p21).norm() < 1e-14);
        let ag = |k: &FieldKernel, t: f64| -> Complex64 {
            detector_vector(k, qb.omegas(), t).iter().zip(&g).map(|(a, b)| a * b).sum()
        };
        assert!((p12.norm() - 2.0 * (ag(&k1, 0.3) * ag(&k2, 0.9)).norm()).abs() < 1e-14);
        assert!((st.norm_sq() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn time_translation_covariance() {
        let qb = tiny();
        let g = vec![c(1.0, 0.0), c(0.0, 0.0), c(0.5, 0.5), c(0.0, 0.0)];
        let h = vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.3, 0.0)];
        let shift = 3.0;
        let evolve = |v: &[Complex64]| -> Vec<Complex64> {
            v.iter().zip(qb.omegas()).map(|(a, w)| a * Complex64::from_polar(1.0, -w * shift)).collect()
        };
        let st = TwoPhotonState::product(g.clone(), h.clone()).unwrap();
        let later = TwoPhotonState::product(evolve(&g), evolve(&h)).unwrap();
        let (k1, k2) = (qb.field_kernel(0.0, FieldKind::VectorPotential), qb.field_kernel(0.4, FieldKind::VectorPotential));
        let a = g2(&qb, &st, &k1, 3.1, &k2, 3.25).unwrap();
        let b = g2(&qb, &later, &k1, 0.1, &k2, 0.25).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn fwhm_of_gaussian() {
        let fwhm = CorrelationResult {
            tau: (0..41).map(|i| -2.0 + 0.1 * i as f64).collect(),
            values: (0..41).map(|i| (-(-2.0 + 0.1 * i as f64).powi(2) / 0.5).exp()).collect(),
            normalization: "raw".into(),
            metadata: BTreeMap::new(),
        }
        .fwhm()
        .unwrap();
        assert!((fwhm - 2.0 * (0.5 * 2f64.ln()).sqrt()).abs() < 0.01);
    }

    #[test]
    fn spacing_ignores_degenerate_pairs() {
        let w = [1.0, 1.0 + 1e-13, 2.0, 2.0 + 1e-13, 3.0, 3.0];
        assert!((local_mode_spacing(&w, 2.0) - 1.0).abs() < 1e-12);
    }
}
