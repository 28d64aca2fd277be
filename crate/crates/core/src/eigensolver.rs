//! Dense solution of the discrete eigenproblem in both descriptions, plus
//! spectral post-processing.

use std::sync::Arc;

use faer::{Mat, Side};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::assembly::{CrossCoupledSystem, DiscreteSystem, MassBlock, MassMatrix};
use crate::error::{Error, Result};
use crate::lattice::{DofLayout, Grid1D, Triplets};
use crate::medium::PhysicalConstants;

pub const DEGENERACY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Description {
    NoCross,
    Cross,
}

/// Mode matrix, real whenever the eigenproblem is real.
#[derive(Debug, Clone)]
pub enum ModeMatrix {
    Real(Mat<f64>),
    Complex(Mat<Complex64>),
}

impl ModeMatrix {
    pub fn nrows(&self) -> usize {
        match self {
            ModeMatrix::Real(m) => m.nrows(),
            ModeMatrix::Complex(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            ModeMatrix::Real(m) => m.ncols(),
            ModeMatrix::Complex(m) => m.ncols(),
        }
    }

    pub fn is_real(&self) -> bool {
        matches!(self, ModeMatrix::Real(_))
    }

    pub fn get(&self, i: usize, n: usize) -> Complex64 {
        match self {
            ModeMatrix::Real(m) => Complex64::new(m[(i, n)], 0.0),
            ModeMatrix::Complex(m) => m[(i, n)],
        }
    }

    pub fn col(&self, n: usize) -> Vec<Complex64> {
        match self {
            ModeMatrix::Real(m) => m.col_as_slice(n).iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            ModeMatrix::Complex(m) => m.col_as_slice(n).to_vec(),
        }
    }

    /// Components of every mode at slot i.
    pub fn row(&self, i: usize) -> Vec<Complex64> {
        (0..self.ncols()).map(|n| self.get(i, n)).collect()
    }

    pub fn to_complex(&self) -> Mat<Complex64> {
        match self {
            ModeMatrix::Real(m) => Mat::from_fn(m.nrows(), m.ncols(), |i, j| Complex64::new(m[(i, j)], 0.0)),
            ModeMatrix::Complex(m) => m.clone(),
        }
    }

    /// Q†F for a batch of column vectors F.
    pub fn adjoint_apply(&self, f: &Mat<Complex64>) -> Mat<Complex64> {
        match self {
            ModeMatrix::Real(q) => {
                let re = Mat::<f64>::from_fn(f.nrows(), f.ncols(), |i, j| f[(i, j)].re);
                let im = Mat::<f64>::from_fn(f.nrows(), f.ncols(), |i, j| f[(i, j)].im);
                let a = q.transpose() * &re;
                let b = q.transpose() * &im;
                Mat::from_fn(a.nrows(), a.ncols(), |i, j| Complex64::new(a[(i, j)], b[(i, j)]))
            }
            ModeMatrix::Complex(q) => q.adjoint() * f,
        }
    }

    /// Q·C for a batch of coefficient columns C.
    pub fn apply(&self, c: &Mat<Complex64>) -> Mat<Complex64> {
        match self {
            ModeMatrix::Real(q) => {
                let re = Mat::<f64>::from_fn(c.nrows(), c.ncols(), |i, j| c[(i, j)].re);
                let im = Mat::<f64>::from_fn(c.nrows(), c.ncols(), |i, j| c[(i, j)].im);
                let a = q * &re;
                let b = q * &im;
                Mat::from_fn(a.nrows(), a.ncols(), |i, j| Complex64::new(a[(i, j)], b[(i, j)]))
            }
            ModeMatrix::Complex(q) => q * c,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModeBasis {
    pub omegas: Vec<f64>,
    pub modes: ModeMatrix,
    pub description: Description,
    pub grid: Grid1D,
    pub layout: DofLayout,
    pub consts: PhysicalConstants,
    pub dropped_count: usize,
    /// Largest relative mismatch between +ω and −ω branches (cross description).
    pub pairing_defect: Option<f64>,
    system: Option<Arc<DiscreteSystem>>,
}

impl ModeBasis {
    pub fn n_modes(&self) -> usize {
        self.omegas.len()
    }

    pub fn weight(&self) -> f64 {
        self.grid.spacing
    }

    /// The no-cross system the basis was solved from.
    pub fn system(&self) -> Result<&DiscreteSystem> {
        self.system
            .as_deref()
            .ok_or_else(|| Error::InvalidParameter("operation needs a no-cross mode basis".into()))
    }

    /// Vector-potential samples of mode n on the grid.
    pub fn a_sector(&self, n: usize) -> Vec<Complex64> {
        (0..self.grid.n_points).map(|i| self.modes.get(i, n)).collect()
    }

    /// max|Δx·Q†M⁻¹Q − I| and the max relative defect of Δx·Q†KQ against diag(ω²),
    /// entries scaled by ω_mω_n.
    pub fn orthonormality_defect(&self) -> Result<(f64, f64)> {
        let sys = self.system()?;
        let dx = self.weight();
        let minv = sys.mass.inverse();
        let n = self.n_modes();
        let (g, h): (Box<dyn Fn(usize, usize) -> Complex64>, Box<dyn Fn(usize, usize) -> Complex64>) =
            match (&self.modes, sys.k.is_real()) {
                (ModeMatrix::Real(q), true) => {
                    let mq = block_rows_real(&minv, q);
                    let kq = sparse_rows_real(&sys.k, q);
                    let g = q.transpose() * &mq;
                    let h = q.transpose() * &kq;
                    (Box::new(move |i, j| g[(i, j)].into()), Box::new(move |i, j| h[(i, j)].into()))
                }
                _ => {
                    let q = self.modes.to_complex();
                    let mq = block_rows(&minv, &q);
                    let kq = sparse_rows(&sys.k, &q);
                    let g = q.adjoint() * &mq;
                    let h = q.adjoint() * &kq;
                    (Box::new(move |i, j| g[(i, j)]), Box::new(move |i, j| h[(i, j)]))
                }
            };
        let mut d1: f64 = 0.0;
        let mut d2: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let id = if i == j { 1.0 } else { 0.0 };
                d1 = d1.max((g(i, j) * dx - id).norm());
                let target = if i == j { self.omegas[i].powi(2) } else { 0.0 };
                d2 = d2.max((h(i, j) * dx - target).norm() / (self.omegas[i] * self.omegas[j]));
            }
        }
        Ok((d1, d2))
    }

    /// Text export: header line, then one line per mode with ω and the components.
    pub fn write_text(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        let desc = match self.description {
            Description::NoCross => "no-cross",
            Description::Cross => "cross",
        };
        writeln!(
            w,
            "# N {} N_s {} dx {:.17e} description {} modes {} dropped {}",
            self.grid.n_points,
            self.layout.n_osc(),
            self.grid.spacing,
            desc,
            self.n_modes(),
            self.dropped_count
        )?;
        for n in 0..self.n_modes() {
            write!(w, "{:.17e}", self.omegas[n])?;
            for i in 0..self.modes.nrows() {
                let v = self.modes.get(i, n);
                if self.modes.is_real() {
                    write!(w, " {:.17e}", v.re)?;
                } else {
                    write!(w, " {:.17e} {:.17e}", v.re, v.im)?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Apply a block-diagonal matrix to the rows of a dense matrix.
pub(crate) fn block_rows(m: &MassMatrix, q: &Mat<Complex64>) -> Mat<Complex64> {
    let mut out = Mat::<Complex64>::zeros(q.nrows(), q.ncols());
    for b in &m.blocks {
        match *b {
            MassBlock::Field { slot, value } => {
                for j in 0..q.ncols() {
                    out[(slot, j)] = q[(slot, j)] * value;
                }
            }
            MassBlock::Oscillator { field_slot: a, osc_slot: x, m } => {
                for j in 0..q.ncols() {
                    out[(a, j)] = q[(a, j)] * m[0][0] + q[(x, j)] * m[0][1];
                    out[(x, j)] = q[(a, j)] * m[1][0] + q[(x, j)] * m[1][1];
                }
            }
        }
    }
    out
}

pub(crate) fn sparse_rows(k: &Triplets, q: &Mat<Complex64>) -> Mat<Complex64> {
    let mut out = Mat::<Complex64>::zeros(q.nrows(), q.ncols());
    for j in 0..q.ncols() {
        for &(r, c, v) in &k.entries {
            out[(r, j)] += v * q[(c, j)];
        }
    }
    out
}

fn block_rows_real(m: &MassMatrix, q: &Mat<f64>) -> Mat<f64> {
    let mut out = Mat::<f64>::zeros(q.nrows(), q.ncols());
    for b in &m.blocks {
        match *b {
            MassBlock::Field { slot, value } => {
                for j in 0..q.ncols() {
                    out[(slot, j)] = q[(slot, j)] * value;
                }
            }
            MassBlock::Oscillator { field_slot: a, osc_slot: x, m } => {
                for j in 0..q.ncols() {
                    out[(a, j)] = q[(a, j)] * m[0][0] + q[(x, j)] * m[0][1];
                    out[(x, j)] = q[(a, j)] * m[1][0] + q[(x, j)] * m[1][1];
                }
            }
        }
    }
    out
}

fn sparse_rows_real(k: &Triplets, q: &Mat<f64>) -> Mat<f64> {
    let mut out = Mat::<f64>::zeros(q.nrows(), q.ncols());
    for j in 0..q.ncols() {
        for &(r, c, v) in &k.entries {
            out[(r, j)] += v.re * q[(c, j)];
        }
    }
    out
}

/// Dense B·K·Bᵀ for block-diagonal real B and sparse K.
fn congruence(b: &MassMatrix, k: &Triplets) -> Triplets {
    let dim = b.dim;
    // per-row nonzeros of B
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
    for blk in &b.blocks {
        match *blk {
            MassBlock::Field { slot, value } => rows[slot].push((slot, value)),
            MassBlock::Oscillator { field_slot: a, osc_slot: x, m } => {
                rows[a].extend([(a, m[0][0]), (x, m[0][1])]);
                rows[x].extend([(a, m[1][0]), (x, m[1][1])]);
            }
        }
    }
    // columns of B: cols[c] = [(row, value)]
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
    for (r, entries) in rows.iter().enumerate() {
        for &(c, v) in entries {
            if v != 0.0 {
                cols[c].push((r, v));
            }
        }
    }
    let mut out = Triplets::new(dim);
    for &(a, c, v) in &k.entries {
        for &(i, bi) in &cols[a] {
            for &(j, bj) in &cols[c] {
                out.push(i, j, v * bi * bj);
            }
        }
    }
    out
}

fn lower_inverse(l: &MassMatrix) -> MassMatrix {
    let blocks = l
        .blocks
        .iter()
        .map(|b| match *b {
            MassBlock::Field { slot, value } => MassBlock::Field { slot, value: 1.0 / value },
            MassBlock::Oscillator { field_slot, osc_slot, m } => {
                let (l00, l10, l11) = (m[0][0], m[1][0], m[1][1]);
                MassBlock::Oscillator {
                    field_slot,
                    osc_slot,
                    m: [[1.0 / l00, 0.0], [-l10 / (l00 * l11), 1.0 / l11]],
                }
            }
        })
        .collect();
    MassMatrix { dim: l.dim, blocks }
}

fn transpose_blocks(b: &MassMatrix) -> MassMatrix {
    let blocks = b
        .blocks
        .iter()
        .map(|blk| match *blk {
            MassBlock::Oscillator { field_slot, osc_slot, m } => {
                MassBlock::Oscillator { field_slot, osc_slot, m: [[m[0][0], m[1][0]], [m[0][1], m[1][1]]] }
            }
            f => f,
        })
        .collect();
    MassMatrix { dim: b.dim, blocks }
}

pub fn omega_cutoff(grid: &Grid1D, consts: &PhysicalConstants) -> f64 {
    1e-6 * std::f64::consts::TAU * consts.c / grid.length()
}

/// Eigenvalues below this are zero modes: ω_cut² or the roundoff level of
/// the largest eigenvalue, whichever is larger.
pub(crate) fn zero_mode_floor(cutoff: f64, top: f64) -> f64 {
    (cutoff * cutoff).max(1e-10 * top)
}

fn fix_phase_real(m: &mut Mat<f64>) {
    for j in 0..m.ncols() {
        let col = m.col_as_slice_mut(j);
        let mut best = 0;
        for i in 0..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

fn fix_phase_complex(m: &mut Mat<Complex64>) {
    for j in 0..m.ncols() {
        let col = m.col_as_slice_mut(j);
        let mut best = 0;
        for i in 0..col.len() {
            if col[i].norm() > col[best].norm() {
                best = i;
            }
        }
        let r = col[best].norm();
        if r > 0.0 {
            let ph = col[best].conj() / r;
            col.iter_mut().for_each(|v| *v *= ph);
            col[best] = Complex64::new(col[best].re, 0.0);
        }
    }
}

/// Symmetric-definite pencil (K, M⁻¹) reduced with the blockwise Cholesky
/// factor of M⁻¹.
pub fn solve(system: &DiscreteSystem) -> Result<ModeBasis> {
    system.mass.validate()?;
    let dim = system.dim();
    let dx = system.weight();
    let l = system.mass.inverse().cholesky();
    let li = lower_inverse(&l);
    let c = congruence(&li, &system.k);
    let lit = transpose_blocks(&li);
    let cutoff = omega_cutoff(&system.grid, &system.consts);
    let scale = 1.0 / dx.sqrt();

    let keep = |values: &[f64]| -> Result<(usize, usize)> {
        let top = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = zero_mode_floor(cutoff, top);
        let mut dropped = 0;
        for &v in values {
            if v < -1e-8 * top {
                return Err(Error::Solver(format!("negative eigenvalue {v} in a semidefinite pencil")));
            }
            if v < floor {
                dropped += 1;
            }
        }
        Ok((dropped, values.len()))
    };

    let (omegas, modes, dropped) = if c.is_real() {
        let a = c.to_dense_real()?;
        let evd = a.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Solver(format!("{e:?}")))?;
        let values: Vec<f64> = evd.S().column_vector().iter().copied().collect();
        let (start, _) = keep(&values)?;
        let w = evd.U();
        let nm = dim - start;
        let mut q = Mat::<f64>::zeros(dim, nm);
        for blk in &lit.blocks {
            match *blk {
                MassBlock::Field { slot, value } => {
                    for j in 0..nm {
                        q[(slot, j)] = value * w[(slot, j + start)] * scale;
                    }
                }
                MassBlock::Oscillator { field_slot: a, osc_slot: x, m } => {
                    for j in 0..nm {
                        let (wa, wx) = (w[(a, j + start)], w[(x, j + start)]);
                        q[(a, j)] = (m[0][0] * wa + m[0][1] * wx) * scale;
                        q[(x, j)] = (m[1][0] * wa + m[1][1] * wx) * scale;
                    }
                }
            }
        }
        fix_phase_real(&mut q);
        (values[start..].iter().map(|v| v.sqrt()).collect::<Vec<_>>(), ModeMatrix::Real(q), start)
    } else {
        let a = c.to_dense();
        let evd = a.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Solver(format!("{e:?}")))?;
        let values: Vec<f64> = evd.S().column_vector().iter().map(|v| v.re).collect();
        let (start, _) = keep(&values)?;
        let w = evd.U();
        let nm = dim - start;
        let sub = Mat::<Complex64>::from_fn(dim, nm, |i, j| w[(i, j + start)] * scale);
        let mut q = block_rows(&lit, &sub);
        fix_phase_complex(&mut q);
        (values[start..].iter().map(|v| v.sqrt()).collect::<Vec<_>>(), ModeMatrix::Complex(q), start)
    };

    Ok(ModeBasis {
        omegas,
        modes,
        description: Description::NoCross,
        grid: system.grid,
        layout: system.layout.clone(),
        consts: system.consts,
        dropped_count: dropped,
        pairing_defect: None,
        system: Some(Arc::new(system.clone())),
    })
}

/// Positive eigenfrequencies of the frequency operator M^{1/2} K M^{1/2}.
pub fn frequency_operator_omegas(system: &DiscreteSystem) -> Result<Vec<f64>> {
    system.mass.validate()?;
    let ms = system.mass.sqrt();
    let op = congruence(&ms, &system.k);
    let values: Vec<f64> = if op.is_real() {
        op.to_dense_real()?
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Solver(format!("{e:?}")))?
    } else {
        op.to_dense()
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Solver(format!("{e:?}")))?
    };
    let cutoff = omega_cutoff(&system.grid, &system.consts);
    let floor = zero_mode_floor(cutoff, values.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    Ok(values.into_iter().filter(|&v| v >= floor).map(f64::sqrt).collect())
}

/// Largest relative discrepancy between ω² from the frequency operator and
/// from [`solve`].
pub fn frequency_operator_check(system: &DiscreteSystem) -> Result<f64> {
    let a = frequency_operator_omegas(system)?;
    let b = solve(system)?;
    spectrum_discrepancy(&a, &b.omegas, 2)
}

/// max |a_i^p − b_i^p| / b_i^p over two ascending spectra.
pub fn spectrum_discrepancy(a: &[f64], b: &[f64], power: i32) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Invariant(format!("spectra differ in size: {} vs {}", a.len(), b.len())));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x.powi(power) - y.powi(power)).abs() / y.powi(power))
        .fold(0.0, f64::max))
}

/// Hermitian pencil (iV, U) restricted to the range of U. Returned vectors are
/// full [q; p] states normalized to Δx·x†Ux = 2ω², which gives their A-sector
/// the same normalization as the no-cross modes.
pub fn solve_cross(system: &CrossCoupledSystem) -> Result<ModeBasis> {
    let n = system.dim();
    let d = system.layout.dim();
    let dx = system.weight();
    let u = system.u.to_dense();
    let evd = u.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Solver(format!("{e:?}")))?;
    let lam: Vec<f64> = evd.S().column_vector().iter().map(|v| v.re).collect();
    let lmax = lam.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if lam.iter().any(|&v| v < -1e-10 * lmax) {
        return Err(Error::Solver("U is not positive semidefinite".into()));
    }
    let range: Vec<usize> = (0..n).filter(|&i| lam[i] > 1e-10 * lmax).collect();
    let r = range.len();
    let w = evd.U();
    // B = W_r Λ_r^{1/2}
    let b = Mat::<Complex64>::from_fn(n, r, |i, j| w[(i, range[j])] * lam[range[j]].sqrt());
    let jb = Mat::<Complex64>::from_fn(n, r, |i, j| if i < d { b[(i + d, j)] } else { -b[(i - d, j)] });
    let s = b.adjoint() * &jb;
    let mut h = Mat::<Complex64>::from_fn(r, r, |i, j| Complex64::i() * s[(i, j)]);
    for i in 0..r {
        h[(i, i)] = Complex64::new(h[(i, i)].re, 0.0);
        for j in i + 1..r {
            let a = 0.5 * (h[(i, j)] + h[(j, i)].conj());
            h[(i, j)] = a;
            h[(j, i)] = a.conj();
        }
    }
    let evh = h.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Solver(format!("{e:?}")))?;
    let mu: Vec<f64> = evh.S().column_vector().iter().map(|v| v.re).collect();
    let top = mu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cutoff = zero_mode_floor(omega_cutoff(&system.grid, &system.consts), top * top).sqrt();

    let pos: Vec<usize> = (0..r).filter(|&i| mu[i] >= cutoff).collect();
    let mut neg: Vec<f64> = (0..r).filter(|&i| mu[i] <= -cutoff).map(|i| -mu[i]).collect();
    neg.sort_by(f64::total_cmp);
    let pairing_defect = if neg.len() == pos.len() {
        pos.iter().zip(&neg).map(|(&i, &m)| (mu[i] - m).abs() / mu[i]).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };

    // True state x = (i/ω)·J·U·x_r, with U·x_r = B·y.
    let y = evh.U();
    let ysel = Mat::<Complex64>::from_fn(r, pos.len(), |i, j| y[(i, pos[j])]);
    let by = &b * &ysel;
    let mut x = Mat::<Complex64>::zeros(n, pos.len());
    for (j, &p) in pos.iter().enumerate() {
        let om = mu[p];
        let f = Complex64::new(0.0, 1.0 / om);
        for i in 0..n {
            let jv = if i < d { by[(i + d, j)] } else { -by[(i - d, j)] };
            x[(i, j)] = f * jv;
        }
        // Δx x†Ux: with Ux = U(i/ω)JBy, use energy via the reduced vector:
        // x†Ux = |Λ^{1/2}W†x|² computed directly.
        let col: Vec<Complex64> = (0..n).map(|i| x[(i, j)]).collect();
        let ux = system.u.apply(&col);
        let norm: f64 = col.iter().zip(&ux).map(|(a, b)| (a.conj() * b).re).sum::<f64>() * dx;
        let s = (2.0 * om * om / norm).sqrt();
        for i in 0..n {
            x[(i, j)] *= s;
        }
    }
    fix_phase_complex(&mut x);

    Ok(ModeBasis {
        omegas: pos.iter().map(|&i| mu[i]).collect(),
        modes: ModeMatrix::Complex(x),
        description: Description::Cross,
        grid: system.grid,
        layout: system.layout.clone(),
        consts: system.consts,
        dropped_count: d - pos.len(),
        pairing_defect: Some(pairing_defect),
        system: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionPoint {
    pub omega: f64,
    pub k_dominant: f64,
    /// Fraction of the A-sector spectral power in the peak bin.
    pub spectral_amplitude: f64,
}

fn a_spectrum(basis: &ModeBasis, n: usize) -> Vec<Complex64> {
    let mut v = basis.a_sector(n);
    FftPlanner::new().plan_fft_forward(v.len()).process(&mut v);
    v
}

fn bin_k(m: usize, n: usize, length: f64) -> f64 {
    let s = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
    std::f64::consts::TAU * s / length
}

fn refine(mag: &[f64], peak: usize) -> f64 {
    let n = mag.len();
    let (l, c, r) = (mag[(peak + n - 1) % n], mag[peak], mag[(peak + 1) % n]);
    if l <= 1e-12 * c || r <= 1e-12 * c {
        return 0.0;
    }
    let (l, c, r) = (l.ln(), c.ln(), r.ln());
    let den = l - 2.0 * c + r;
    if den >= 0.0 {
        return 0.0;
    }
    (0.5 * (l - r) / den).clamp(-0.5, 0.5)
}

/// Dominant signed wavenumber of the A-sector of mode n.
pub fn extract_wavenumber(basis: &ModeBasis, n: usize) -> Result<DispersionPoint> {
    if !basis.grid.is_periodic() {
        return Err(Error::BlochPhase);
    }
    let spec = a_spectrum(basis, n);
    let mag: Vec<f64> = spec.iter().map(|c| c.norm()).collect();
    let peak = (0..mag.len()).max_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap();
    if (0..mag.len()).any(|m| m != peak && mag[m] >= 0.9 * mag[peak]) {
        return Err(Error::AmbiguousPeak { mode: n });
    }
    let total: f64 = mag.iter().map(|m| m * m).sum();
    let nn = mag.len();
    let dk = std::f64::consts::TAU / basis.grid.length();
    Ok(DispersionPoint {
        omega: basis.omegas[n],
        k_dominant: bin_k(peak, nn, basis.grid.length()) + refine(&mag, peak) * dk,
        spectral_amplitude: mag[peak] * mag[peak] / total,
    })
}

/// Dominant |k| of mode n with ±k power folded together, for standing modes.
pub fn extract_wavenumber_folded(basis: &ModeBasis, n: usize) -> Result<DispersionPoint> {
    if !basis.grid.is_periodic() {
        return Err(Error::BlochPhase);
    }
    let spec = a_spectrum(basis, n);
    let nn = spec.len();
    let half = nn / 2;
    let folded: Vec<f64> = (0..=half)
        .map(|m| {
            let p = spec[m].norm_sqr();
            if m == 0 || 2 * m == nn {
                p
            } else {
                p + spec[nn - m].norm_sqr()
            }
        })
        .collect();
    let peak = (0..folded.len()).max_by(|&a, &b| folded[a].total_cmp(&folded[b])).unwrap();
    let total: f64 = folded.iter().sum();
    let dk = std::f64::consts::TAU / basis.grid.length();
    let mag: Vec<f64> = folded.iter().map(|p| p.sqrt()).collect();
    let delta = if peak > 0 && peak < half { refine(&mag, peak) } else { 0.0 };
    Ok(DispersionPoint {
        omega: basis.omegas[n],
        k_dominant: (peak as f64 + delta) * dk,
        spectral_amplitude: folded[peak] / total,
    })
}

/// Fraction of the A-sector spectral power carried by k > 0 bins.
pub fn positive_k_fraction(basis: &ModeBasis, n: usize) -> f64 {
    let spec = a_spectrum(basis, n);
    let nn = spec.len();
    let total: f64 = spec.iter().map(|c| c.norm_sqr()).sum();
    let pos: f64 = (1..nn.div_ceil(2)).map(|m| spec[m].norm_sqr()).sum();
    pos / total
}

/// Recombine exactly degenerate standing pairs into traveling modes, the
/// k > 0 member first.
pub fn traveling_pairs(basis: &ModeBasis) -> Result<ModeBasis> {
    if !basis.grid.is_periodic() {
        return Err(Error::BlochPhase);
    }
    let mut q = basis.modes.to_complex();
    let mut omegas = basis.omegas.clone();
    let nn = basis.grid.n_points;
    let positive = |v: &[Complex64]| -> Vec<Complex64> {
        let mut s = v.to_vec();
        FftPlanner::new().plan_fft_forward(nn).process(&mut s);
        (1..nn.div_ceil(2)).map(|m| s[m]).collect()
    };
    let mut n = 0;
    while n + 1 < omegas.len() {
        let (wa, wb) = (omegas[n], omegas[n + 1]);
        if (wa - wb).abs() >= DEGENERACY_TOL * wa {
            n += 1;
            continue;
        }
        let fa = positive(&basis.a_sector(n));
        let fb = positive(&basis.a_sector(n + 1));
        let g00: f64 = fa.iter().map(|c| c.norm_sqr()).sum();
        let g11: f64 = fb.iter().map(|c| c.norm_sqr()).sum();
        let g01: Complex64 = fa.iter().zip(&fb).map(|(a, b)| a.conj() * b).sum();
        // top eigenvector of [[g00, g01], [g01*, g11]]
        let tr = 0.5 * (g00 + g11);
        let disc = (0.25 * (g00 - g11).powi(2) + g01.norm_sqr()).sqrt();
        let lam = tr + disc;
        let (mut v0, mut v1) = if g01.norm() > 1e-300 {
            (g01, Complex64::new(lam - g00, 0.0))
        } else if g00 >= g11 {
            (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
        } else {
            (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))
        };
        let norm = (v0.norm_sqr() + v1.norm_sqr()).sqrt();
        v0 /= norm;
        v1 /= norm;
        // orthogonal partner (−v1*, v0*)
        let (u0, u1) = (-v1.conj(), v0.conj());
        for i in 0..q.nrows() {
            let (a, b) = (q[(i, n)], q[(i, n + 1)]);
            q[(i, n)] = a * v0 + b * v1;
            q[(i, n + 1)] = a * u0 + b * u1;
        }
        let mean = 0.5 * (wa + wb);
        omegas[n] = mean;
        omegas[n + 1] = mean;
        n += 2;
    }
    fix_phase_complex(&mut q);
    Ok(ModeBasis { omegas, modes: ModeMatrix::Complex(q), ..basis.clone() })
}

/// Numerical (ω, k) points from traveling modes; modes without a single
/// dominant wavenumber are skipped and counted.
pub fn dispersion_points(basis: &ModeBasis) -> Result<(Vec<(f64, f64, f64)>, usize)> {
    let trav = traveling_pairs(basis)?;
    let mut points = Vec::new();
    let mut skipped = 0;
    for n in 0..trav.n_modes() {
        match extract_wavenumber(&trav, n) {
            Ok(p) => points.push((p.omega, p.k_dominant, p.spectral_amplitude)),
            Err(Error::AmbiguousPeak { .. }) => skipped += 1,
            Err(err) => return Err(err),
        }
    }
    Ok((points, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_cross, assemble_no_cross, SnapPolicy};
    use crate::medium::{LorentzSpecies, MediumProfile};

    fn vacuum(n: usize, length: f64, theta: f64) -> DiscreteSystem {
        let g = Grid1D::periodic(length, n, theta).unwrap();
        let p = MediumProfile::vacuum(length).unwrap();
        assemble_no_cross(&g, &p, &PhysicalConstants::natural(), SnapPolicy::Strict).unwrap()
    }

    #[test]
    fn vacuum_spectrum_closed_form() {
        let s = vacuum(40, 2.0, 0.0);
        let b = solve(&s).unwrap();
        assert_eq!(b.dropped_count, 1);
        assert_eq!(b.n_modes(), 39);
        let mut exact: Vec<f64> =
            (1..40).map(|m| 2.0 / s.grid.spacing * (std::f64::consts::PI * m as f64 / 40.0).sin()).collect();
        exact.sort_by(f64::total_cmp);
        assert!(spectrum_discrepancy(&b.omegas, &exact, 1).unwrap() < 1e-12);
        let (o1, o2) = b.orthonormality_defect().unwrap();
        assert!(o1 < 1e-12 && o2 < 1e-10, "{o1} {o2}");
    }

    #[test]
    fn bloch_phase_removes_zero_mode() {
        let s = vacuum(30, 1.0, std::f64::consts::PI);
        let b = solve(&s).unwrap();
        assert_eq!(b.dropped_count, 0);
        assert!(!b.modes.is_real());
        assert!(b.orthonormality_defect().unwrap().0 < 1e-12);
    }

    #[test]
    fn corrupted_mass_is_rejected() {
        let g = Grid1D::periodic(1.0, 10, 0.0).unwrap();
        let sp = LorentzSpecies::new(3.0, 2.0).unwrap();
        let p = MediumProfile::homogeneous(1.0, 1.0, Some(sp)).unwrap();
        let mut s = assemble_no_cross(&g, &p, &PhysicalConstants::natural(), SnapPolicy::Strict).unwrap();
        if let MassBlock::Oscillator { m, .. } = &mut s.mass.blocks[3] {
            m[0][1] += 0.1;
        }
        assert!(matches!(frequency_operator_check(&s), Err(Error::Invariant(_))));
    }

    #[test]
    fn cross_matches_no_cross_on_small_medium() {
        let g = Grid1D::periodic(2.0, 24, 0.0).unwrap();
        let sp = LorentzSpecies::new(5.0, 4.0).unwrap();
        let p = MediumProfile::slab(2.0, 0.0, 0.5, 2.0, Some(sp)).unwrap();
        let c = PhysicalConstants::natural();
        let a = solve(&assemble_no_cross(&g, &p, &c, SnapPolicy::Strict).unwrap()).unwrap();
        let b = solve_cross(&assemble_cross(&g, &p, &c, SnapPolicy::Strict).unwrap()).unwrap();
        assert!(spectrum_discrepancy(&b.omegas, &a.omegas, 1).unwrap() < 1e-10);
        assert!(b.pairing_defect.unwrap() < 1e-9);
        // same field normalization up to phase
        for n in [0, 5, 17] {
            let x: f64 = (0..24).map(|i| a.modes.get(i, n).norm_sqr()).sum();
            let y: f64 = (0..24).map(|i| b.modes.get(i, n).norm_sqr()).sum();
            assert!((x - y).abs() < 1e-8 * x, "{x} {y}");
        }
    }

    #[test]
    fn free_space_wavenumbers_and_traveling_pairs() {
        let s = vacuum(64, 3.0, 0.0);
        let b = solve(&s).unwrap();
        assert!(matches!(extract_wavenumber(&b, 0), Err(Error::AmbiguousPeak { .. })));
        let t = traveling_pairs(&b).unwrap();
        assert_eq!(t.n_modes(), b.n_modes());
        assert!(t.orthonormality_defect().unwrap().0 < 1e-10);
        for n in 0..t.n_modes() - 1 {
            let f = positive_k_fraction(&t, n);
            assert!(!(0.01..=0.99).contains(&f), "{n}: {f}");
            let p = extract_wavenumber(&t, n).unwrap();
            let m = (n / 2 + 1) as f64;
            let expect = if n % 2 == 0 { m } else { -m } * std::f64::consts::TAU / 3.0;
            assert!((p.k_dominant - expect).abs() < 0.5 * std::f64::consts::TAU / 3.0, "{n}");
        }
    }
}
