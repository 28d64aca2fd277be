//! Discrete quadratic forms of the field–oscillator Hamiltonian.
//!
//! No-cross description: q = [A, X] with X = −Π_P at oscillator points and
//! p = [Π_AP, P], giving H = ½Δx (q†Kq + p†Mp) with block-diagonal M.
//! Cross description: q = [A, P], p = [Π_AP, Π_P], H = ½Δx x†Ux.

use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{second_difference, DofLayout, Grid1D, Triplets};
use crate::medium::{LorentzSpecies, MediumProfile, PhysicalConstants};

const C0: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SnapPolicy {
    #[default]
    Snap,
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MassBlock {
    Field { slot: usize, value: f64 },
    /// Rows/cols (field_slot, osc_slot); `m` is stored in full so that
    /// corrupted (asymmetric) blocks can be represented and rejected.
    Oscillator { field_slot: usize, osc_slot: usize, m: [[f64; 2]; 2] },
}

/// Block-diagonal mass matrix with 1×1 and 2×2 blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct MassMatrix {
    pub dim: usize,
    pub blocks: Vec<MassBlock>,
}

fn inv2(m: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]
}

/// Symmetric square root of a symmetric positive-definite 2×2 matrix.
fn sqrt2(m: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[0][1];
    let s = det.sqrt();
    let t = (m[0][0] + m[1][1] + 2.0 * s).sqrt();
    [[(m[0][0] + s) / t, m[0][1] / t], [m[0][1] / t, (m[1][1] + s) / t]]
}

impl MassMatrix {
    /// Symmetry and positive-definiteness of every block.
    pub fn validate(&self) -> Result<()> {
        for (b, block) in self.blocks.iter().enumerate() {
            match *block {
                MassBlock::Field { value, .. } => {
                    if !(value > 0.0) {
                        return Err(Error::IndefiniteMass { block: b });
                    }
                }
                MassBlock::Oscillator { m, .. } => {
                    if m[0][1] != m[1][0] {
                        return Err(Error::Invariant(format!("mass block {b} is not symmetric")));
                    }
                    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                    if !(m[0][0] > 0.0 && det > 0.0) {
                        return Err(Error::IndefiniteMass { block: b });
                    }
                }
            }
        }
        Ok(())
    }

    fn map_blocks(&self, f1: impl Fn(f64) -> f64, f2: impl Fn(&[[f64; 2]; 2]) -> [[f64; 2]; 2]) -> MassMatrix {
        let blocks = self
            .blocks
            .iter()
            .map(|b| match *b {
                MassBlock::Field { slot, value } => MassBlock::Field { slot, value: f1(value) },
                MassBlock::Oscillator { field_slot, osc_slot, m } => {
                    MassBlock::Oscillator { field_slot, osc_slot, m: f2(&m) }
                }
            })
            .collect();
        MassMatrix { dim: self.dim, blocks }
    }

    pub fn inverse(&self) -> MassMatrix {
        self.map_blocks(|v| 1.0 / v, inv2)
    }

    pub fn sqrt(&self) -> MassMatrix {
        self.map_blocks(f64::sqrt, sqrt2)
    }

    /// Lower Cholesky factor, block by block.
    pub fn cholesky(&self) -> MassMatrix {
        self.map_blocks(f64::sqrt, |m| {
            let l00 = m[0][0].sqrt();
            let l10 = m[1][0] / l00;
            let l11 = (m[1][1] - l10 * l10).sqrt();
            [[l00, 0.0], [l10, l11]]
        })
    }

    pub fn apply<T>(&self, v: &[T]) -> Vec<T>
    where
        T: Copy + Default + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    {
        let mut out = vec![T::default(); self.dim];
        for b in &self.blocks {
            match *b {
                MassBlock::Field { slot, value } => out[slot] = v[slot] * value,
                MassBlock::Oscillator { field_slot: a, osc_slot: x, m } => {
                    out[a] = v[a] * m[0][0] + v[x] * m[0][1];
                    out[x] = v[a] * m[1][0] + v[x] * m[1][1];
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut d = Mat::<f64>::zeros(self.dim, self.dim);
        for b in &self.blocks {
            match *b {
                MassBlock::Field { slot, value } => d[(slot, slot)] = value,
                MassBlock::Oscillator { field_slot: a, osc_slot: x, m } => {
                    d[(a, a)] = m[0][0];
                    d[(a, x)] = m[0][1];
                    d[(x, a)] = m[1][0];
                    d[(x, x)] = m[1][1];
                }
            }
        }
        d
    }

    pub fn to_triplets(&self) -> Triplets {
        let d = self.to_dense();
        let mut t = Triplets::new(self.dim);
        for b in &self.blocks {
            let slots: Vec<usize> = match *b {
                MassBlock::Field { slot, .. } => vec![slot],
                MassBlock::Oscillator { field_slot, osc_slot, .. } => vec![field_slot, osc_slot],
            };
            for &i in &slots {
                for &j in &slots {
                    t.push(i, j, Complex64::new(d[(i, j)], 0.0));
                }
            }
        }
        t
    }
}

/// Local material at one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMaterial {
    pub eps_inf: f64,
    pub oscillator: Option<LorentzSpecies>,
}

#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    pub grid: Grid1D,
    pub layout: DofLayout,
    pub k: Triplets,
    pub mass: MassMatrix,
    pub consts: PhysicalConstants,
    pub materials: Vec<PointMaterial>,
    pub warnings: Vec<String>,
}

impl DiscreteSystem {
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn weight(&self) -> f64 {
        self.grid.spacing
    }

    /// Materials differ from vacuum at point i.
    pub fn is_material(&self, i: usize) -> bool {
        let m = &self.materials[i];
        m.eps_inf != 1.0 || m.oscillator.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct CrossCoupledSystem {
    pub grid: Grid1D,
    pub layout: DofLayout,
    /// Real symmetric, dimension 2·layout.dim().
    pub u: Triplets,
    pub consts: PhysicalConstants,
}

impl CrossCoupledSystem {
    pub fn dim(&self) -> usize {
        2 * self.layout.dim()
    }

    pub fn weight(&self) -> f64 {
        self.grid.spacing
    }

    /// V = U·J·U with J = [[0, I], [−I, 0]], made exactly anti-Hermitian so
    /// that iV is Hermitian.
    pub fn v_dense(&self) -> Mat<Complex64> {
        let u = self.u.to_dense();
        let d = self.layout.dim();
        let n = 2 * d;
        let ju = Mat::<Complex64>::from_fn(n, n, |i, j| if i < d { u[(i + d, j)] } else { -u[(i - d, j)] });
        let mut v = &u * &ju;
        for i in 0..n {
            v[(i, i)] = Complex64::new(0.0, v[(i, i)].im);
            for j in i + 1..n {
                let a = 0.5 * (v[(i, j)] - v[(j, i)].conj());
                v[(i, j)] = a;
                v[(j, i)] = -a.conj();
            }
        }
        v
    }
}

fn materials_on_grid(
    grid: &Grid1D,
    profile: &MediumProfile,
    policy: SnapPolicy,
) -> Result<(Vec<PointMaterial>, Vec<String>)> {
    if (grid.length() - profile.length()).abs() > 1e-9 * profile.length() {
        return Err(Error::InvalidProfile(format!(
            "grid length {} differs from medium length {}",
            grid.length(),
            profile.length()
        )));
    }
    let tol = 1e-6 * grid.spacing;
    let mut warnings = Vec::new();
    let regions = profile.regions();
    for r in &regions[..regions.len() - 1] {
        let b = r.x_end;
        if grid.nearest(b).1 > tol {
            match policy {
                SnapPolicy::Strict => return Err(Error::Misaligned { boundary: b }),
                SnapPolicy::Snap => warnings.push(format!("region boundary {b} snapped to the grid")),
            }
        }
    }
    let materials = (0..grid.n_points)
        .map(|i| {
            let r = profile.region_at(grid.x(i), tol);
            PointMaterial { eps_inf: r.eps_inf, oscillator: r.oscillator }
        })
        .collect();
    Ok((materials, warnings))
}

pub fn assemble_no_cross(
    grid: &Grid1D,
    profile: &MediumProfile,
    consts: &PhysicalConstants,
    policy: SnapPolicy,
) -> Result<DiscreteSystem> {
    let (materials, warnings) = materials_on_grid(grid, profile, policy)?;
    let n = grid.n_points;
    let osc_points: Vec<usize> = (0..n).filter(|&i| materials[i].oscillator.is_some()).collect();
    let layout = DofLayout { n_points: n, osc_points };
    let dim = layout.dim();
    let mut k = second_difference(grid, consts.mu0);
    k.dim = dim;
    let e0 = consts.eps0;
    let mut blocks = Vec::with_capacity(n);
    let mut j = 0;
    for (i, mat) in materials.iter().enumerate() {
        let a = 1.0 / mat.eps_inf;
        match mat.oscillator {
            None => blocks.push(MassBlock::Field { slot: i, value: a / e0 }),
            Some(s) => {
                let x = layout.osc_slot(j);
                j += 1;
                k.push(x, x, Complex64::new(e0 * s.plasma_freq.powi(2), 0.0));
                blocks.push(MassBlock::Oscillator {
                    field_slot: i,
                    osc_slot: x,
                    m: [[a / e0, a / e0], [a / e0, (s.f() + a) / e0]],
                });
            }
        }
    }
    Ok(DiscreteSystem {
        grid: *grid,
        layout,
        k,
        mass: MassMatrix { dim, blocks },
        consts: *consts,
        materials,
        warnings,
    })
}

pub fn assemble_cross(
    grid: &Grid1D,
    profile: &MediumProfile,
    consts: &PhysicalConstants,
    policy: SnapPolicy,
) -> Result<CrossCoupledSystem> {
    let (materials, _) = materials_on_grid(grid, profile, policy)?;
    let n = grid.n_points;
    let osc_points: Vec<usize> = (0..n).filter(|&i| materials[i].oscillator.is_some()).collect();
    let layout = DofLayout { n_points: n, osc_points };
    let d = layout.dim();
    let e0 = consts.eps0;
    let mut u = second_difference(grid, consts.mu0);
    u.dim = 2 * d;
    let mut j = 0;
    for (i, mat) in materials.iter().enumerate() {
        let a = 1.0 / mat.eps_inf;
        let pi_a = d + i;
        u.push(pi_a, pi_a, Complex64::new(a / e0, 0.0));
        if let Some(s) = mat.oscillator {
            let p = layout.osc_slot(j);
            let pi_p = d + p;
            j += 1;
            u.push(p, p, Complex64::new((s.f() + a) / e0, 0.0));
            u.push(pi_p, pi_p, Complex64::new(e0 * s.plasma_freq.powi(2), 0.0));
            u.push(p, pi_a, Complex64::new(a / e0, 0.0));
            u.push(pi_a, p, Complex64::new(a / e0, 0.0));
        }
    }
    Ok(CrossCoupledSystem { grid: *grid, layout, u, consts: *consts })
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// ½Δx (q†Kq + p†Mp).
pub fn hamiltonian_energy(system: &DiscreteSystem, q: &[Complex64], p: &[Complex64]) -> Result<f64> {
    let d = system.dim();
    for v in [q, p] {
        if v.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: v.len() });
        }
    }
    let kq = system.k.apply(q);
    let mp = system.mass.apply(p);
    Ok(0.5 * system.weight() * (dot(q, &kq) + dot(p, &mp)).re)
}

/// ½Δx x†Ux for the stacked cross-description state x = [q; p].
pub fn hamiltonian_energy_cross(system: &CrossCoupledSystem, x: &[Complex64]) -> Result<f64> {
    if x.len() != system.dim() {
        return Err(Error::DimensionMismatch { expected: system.dim(), found: x.len() });
    }
    Ok(0.5 * system.weight() * dot(x, &system.u.apply(x)).re)
}

/// ‖ω²M⁻¹q̃ − Kq̃‖ / ‖Kq̃‖.
pub fn eom_residual(system: &DiscreteSystem, omega: f64, mode: &[Complex64]) -> Result<f64> {
    if mode.len() != system.dim() {
        return Err(Error::DimensionMismatch { expected: system.dim(), found: mode.len() });
    }
    if mode.iter().all(|v| *v == C0) {
        return Err(Error::InvalidParameter("mode vector is zero".into()));
    }
    let kq = system.k.apply(mode);
    let mq = system.mass.inverse().apply(mode);
    let num: f64 = kq.iter().zip(&mq).map(|(a, b)| (b * omega * omega - a).norm_sqr()).sum();
    let den: f64 = kq.iter().map(|a| a.norm_sqr()).sum();
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vacuum_system_is_plain_laplacian() {
        let g = Grid1D::periodic(1.0, 20, 0.0).unwrap();
        let p = MediumProfile::vacuum(1.0).unwrap();
        let s = assemble_no_cross(&g, &p, &PhysicalConstants::natural(), SnapPolicy::Strict).unwrap();
        assert_eq!(s.dim(), 20);
        assert_eq!(s.k, second_difference(&g, 1.0));
        assert!(s.mass.blocks.iter().all(|b| matches!(b, MassBlock::Field { value, .. } if *value == 1.0)));
    }

    #[test]
    fn table_one_dimension() {
        let g = Grid1D::periodic(1.5, 2500, 0.0).unwrap();
        let sp = crate::medium::design_lorentz(7.0, 526.0, 875.0).unwrap();
        let p = MediumProfile::slab(1.5, 0.0, 0.006, 1.0, Some(sp)).unwrap();
        let s = assemble_no_cross(&g, &p, &PhysicalConstants::natural(), SnapPolicy::Strict).unwrap();
        assert_eq!(s.dim(), 2510);
        assert!(s.warnings.is_empty());
        s.mass.validate().unwrap();
    }

    #[test]
    fn misaligned_boundary() {
        let g = Grid1D::periodic(1.0, 10, 0.0).unwrap();
        let p = MediumProfile::slab(1.0, 0.0, 0.15, 4.0, None).unwrap();
        let c = PhysicalConstants::natural();
        assert!(matches!(assemble_no_cross(&g, &p, &c, SnapPolicy::Strict), Err(Error::Misaligned { .. })));
        let s = assemble_no_cross(&g, &p, &c, SnapPolicy::Snap).unwrap();
        assert_eq!(s.warnings.len(), 2);
    }

    #[test]
    fn mass_block_determinant() {
        let g = Grid1D::periodic(1.0, 10, 0.0).unwrap();
        let sp = LorentzSpecies::new(3.0, 2.0).unwrap();
        let p = MediumProfile::homogeneous(1.0, 1.0, Some(sp)).unwrap();
        let c = PhysicalConstants::new(2.0, 0.5, 1.0).unwrap();
        let s = assemble_no_cross(&g, &p, &c, SnapPolicy::Strict).unwrap();
        for b in &s.mass.blocks {
            if let MassBlock::Oscillator { m, .. } = b {
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                assert!((det - sp.f() / 4.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn cross_v_is_anti_hermitian() {
        let g = Grid1D::periodic(1.0, 8, 0.0).unwrap();
        let sp = LorentzSpecies::new(3.0, 2.0).unwrap();
        let p = MediumProfile::slab(1.0, 0.0, 0.5, 2.0, Some(sp)).unwrap();
        let s = assemble_cross(&g, &p, &PhysicalConstants::natural(), SnapPolicy::Strict).unwrap();
        let v = s.v_dense();
        for i in 0..s.dim() {
            for j in 0..s.dim() {
                let iv = Complex64::i() * v[(i, j)];
                let ivt = Complex64::i() * v[(j, i)];
                assert_eq!(iv, ivt.conj());
            }
        }
    }

    #[test]
    fn residual_rejects_zero_vector() {
        let g = Grid1D::periodic(1.0, 8, 0.0).unwrap();
        let p = MediumProfile::vacuum(1.0).unwrap();
        let s = assemble_no_cross(&g, &p, &PhysicalConstants::natural(), SnapPolicy::Strict).unwrap();
        assert!(eom_residual(&s, 1.0, &[C0; 8]).is_err());
    }
}
