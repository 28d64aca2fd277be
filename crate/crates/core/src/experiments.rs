//! Experiment runners: each writes its CSV tables and a `manifest.json` into
//! the output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::assembly::{assemble_cross, assemble_no_cross, eom_residual, DiscreteSystem};
use crate::config::{default_lorentz_medium, Config, DescriptionChoice, Experiment};
pub use crate::eigensolver::dispersion_points;
use crate::eigensolver::{
    frequency_operator_omegas, solve, solve_cross, spectrum_discrepancy, ModeBasis,
};
use crate::error::{Error, Result};
use crate::lattice::Grid1D;
use crate::medium::{
    analytic_wavenumber, design_lorentz, find_nldc_media, slab_transfer, LorentzSpecies, MediumProfile,
    PhysicalConstants, Region,
};
use crate::oracle::{analytic_purcell_ratio, hom_ideal_g2};
use crate::quantize::{FieldKind, QuantizedBasis};
use crate::states::{
    arrival_stats, coincidence_curve, energy_density_movie, hom_curve, hom_state, make_entangled, purcell_factor,
    CoincidenceWindow, CorrelationResult, EntangledSpec, HomConfig, JointSpectrum, TwoPhotonState,
};

/// Grid used by `modes`, `dispersion` and `validate` when none is configured.
const SMALL_LENGTH: f64 = 0.5;
const SMALL_POINTS: usize = 201;

#[derive(Debug, Clone, Serialize)]
pub struct BasisSummary {
    pub label: String,
    pub dim: usize,
    pub mode_count: usize,
    pub dropped_count: usize,
    pub mass_defect: Option<f64>,
    pub stiffness_defect: Option<f64>,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Check { name: name.into(), value, tolerance, passed: value <= tolerance }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub version: String,
    pub config: Value,
    pub grid: Value,
    pub threads: usize,
    pub bases: Vec<BasisSummary>,
    pub dropped_count: usize,
    pub max_orthonormality_defect: Option<f64>,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub warnings: Vec<String>,
    pub results: BTreeMap<String, Value>,
    pub timings: BTreeMap<String, f64>,
    pub outputs: Vec<String>,
}

struct Run {
    out: PathBuf,
    manifest: Manifest,
    started: Instant,
}

impl Run {
    fn new(exp: Experiment, effective: &toml::Table, out: &Path, grid: &Grid1D) -> Result<Self> {
        std::fs::create_dir_all(out)?;
        Ok(Run {
            out: out.to_path_buf(),
            manifest: Manifest {
                experiment: exp.name().into(),
                version: env!("CARGO_PKG_VERSION").into(),
                config: serde_json::to_value(effective).map_err(|e| Error::Config(e.to_string()))?,
                grid: json!({
                    "n_points": grid.n_points,
                    "length": grid.length(),
                    "spacing": grid.spacing,
                    "bloch_phase": grid.bloch_phase,
                }),
                threads: worker_count()?,
                bases: Vec::new(),
                dropped_count: 0,
                max_orthonormality_defect: None,
                checks: Vec::new(),
                passed: true,
                warnings: Vec::new(),
                results: BTreeMap::new(),
                timings: BTreeMap::new(),
                outputs: Vec::new(),
            },
            started: Instant::now(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        std::fs::write(self.out.join(name), contents)?;
        self.manifest.outputs.push(name.into());
        Ok(())
    }

    fn basis(&mut self, summary: BasisSummary, warnings: &[String]) {
        let m = &mut self.manifest;
        m.dropped_count += summary.dropped_count;
        if let Some(d) = summary.mass_defect {
            let d = d.max(summary.stiffness_defect.unwrap_or(0.0));
            m.max_orthonormality_defect = Some(m.max_orthonormality_defect.map_or(d, |x| x.max(d)));
        }
        m.warnings.extend(warnings.iter().map(|w| format!("{}: {w}", summary.label)));
        m.bases.push(summary);
    }

    fn result(&mut self, key: &str, value: Value) {
        self.manifest.results.insert(key.into(), value);
    }

    fn time(&mut self, key: &str, since: Instant) {
        self.manifest.timings.insert(key.into(), since.elapsed().as_secs_f64());
    }

    fn finish(mut self) -> Result<Manifest> {
        self.manifest.passed = self.manifest.checks.iter().all(|c| c.passed);
        let total = self.started.elapsed().as_secs_f64();
        self.manifest.timings.insert("total".into(), total);
        let text = serde_json::to_string_pretty(&self.manifest).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(self.out.join("manifest.json"), text + "\n")?;
        Ok(self.manifest)
    }
}

/// Worker cap from `CQNMD_THREADS`, else the available parallelism.
pub fn worker_count() -> Result<usize> {
    let avail = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    match std::env::var("CQNMD_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!("CQNMD_THREADS must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(avail),
    }
}

/// Maps `f` over the items with at most `workers` threads; results keep the
/// item order, so output does not depend on scheduling.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<R>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots.into_inner().unwrap().into_iter().map(|r| r.expect("worker finished")).collect()
}

struct Solved {
    system: Arc<DiscreteSystem>,
    basis: Arc<ModeBasis>,
    summary: BasisSummary,
}

fn solve_no_cross(label: &str, grid: &Grid1D, profile: &MediumProfile, cfg: &Config) -> Result<Solved> {
    let consts = cfg.constants.constants();
    let t = Instant::now();
    let system = Arc::new(assemble_no_cross(grid, profile, &consts, cfg.grid.policy())?);
    let basis = Arc::new(solve(&system)?);
    let solve_seconds = t.elapsed().as_secs_f64();
    let (m, k) = basis.orthonormality_defect()?;
    let summary = BasisSummary {
        label: label.into(),
        dim: system.dim(),
        mode_count: basis.n_modes(),
        dropped_count: basis.dropped_count,
        mass_defect: Some(m),
        stiffness_defect: Some(k),
        solve_seconds,
    };
    Ok(Solved { system, basis, summary })
}

fn homogeneous_material(profile: &MediumProfile) -> Option<(Option<LorentzSpecies>, f64)> {
    match profile.regions() {
        [r] => Some((r.oscillator, r.eps_inf)),
        _ => None,
    }
}

fn e(v: f64) -> String {
    format!("{v:.12e}")
}

/// Runs one experiment and writes its outputs into `out`.
pub fn run(exp: Experiment, cfg: &Config, effective: &toml::Table, out: &Path) -> Result<Manifest> {
    if let Some(declared) = cfg.experiment {
        if declared != exp {
            return Err(Error::Config(format!(
                "config is for `{}` but `{}` was requested",
                declared.name(),
                exp.name()
            )));
        }
    }
    match exp {
        Experiment::Modes => run_modes(cfg, effective, out),
        Experiment::Dispersion => run_dispersion(cfg, effective, out),
        Experiment::Hom => run_hom(cfg, effective, out),
        Experiment::Nldc => run_nldc(cfg, effective, out),
        Experiment::Purcell => run_purcell(cfg, effective, out),
        Experiment::Validate => run_validate(cfg, effective, out),
    }
}

fn spectrum_csv(omegas: &[f64]) -> String {
    let mut s = String::from("n,omega\n");
    for (n, w) in omegas.iter().enumerate() {
        let _ = writeln!(s, "{n},{}", e(*w));
    }
    s
}

fn run_modes(cfg: &Config, effective: &toml::Table, out: &Path) -> Result<Manifest> {
    let grid = cfg.grid.build(SMALL_LENGTH, SMALL_POINTS)?;
    let profile = cfg.medium_or(&grid, default_lorentz_medium)?;
    let consts = cfg.constants.constants();
    let mut run = Run::new(Experiment::Modes, effective, out, &grid)?;
    match cfg.modes.description {
        DescriptionChoice::NoCross => {
            let s = solve_no_cross("no-cross", &grid, &profile, cfg)?;
            run.write("spectrum.csv", &spectrum_csv(&s.basis.omegas))?;
            let mut buf = Vec::new();
            s.basis.write_text(&mut buf)?;
            run.write("modes.txt", &String::from_utf8_lossy(&buf))?;
            if cfg.modes.write_matrices {
                let mut k = Vec::new();
                s.system.k.write_text(&mut k)?;
                run.write("stiffness.txt", &String::from_utf8_lossy(&k))?;
                let mut m = Vec::new();
                s.system.mass.inverse().to_triplets().write_text(&mut m)?;
                run.write("mass_inverse.txt", &String::from_utf8_lossy(&m))?;
            }
            let w = s.system.warnings.clone();
            run.basis(s.summary, &w);
        }
        DescriptionChoice::Cross => {
            let t = Instant::now();
            let sys = assemble_cross(&grid, &profile, &consts, cfg.grid.policy())?;
            let basis = solve_cross(&sys)?;
            run.write("spectrum.csv", &spectrum_csv(&basis.omegas))?;
            let mut buf = Vec::new();
            basis.write_text(&mut buf)?;
            run.write("modes.txt", &String::from_utf8_lossy(&buf))?;
            run.result("pairing_defect", json!(basis.pairing_defect));
            let summary = BasisSummary {
                label: "cross".into(),
                dim: sys.dim(),
                mode_count: basis.n_modes(),
                dropped_count: basis.dropped_count,
                mass_defect: None,
                stiffness_defect: None,
                solve_seconds: t.elapsed().as_secs_f64(),
            };
            run.basis(summary, &[]);
        }
        DescriptionChoice::FrequencyOperator => {
            let t = Instant::now();
            let sys = assemble_no_cross(&grid, &profile, &consts, cfg.grid.policy())?;
            let omegas = frequency_operator_omegas(&sys)?;
            run.write("spectrum.csv", &spectrum_csv(&omegas))?;
            let summary = BasisSummary {
                label: "frequency-operator".into(),
                dim: sys.dim(),
                mode_count: omegas.len(),
                dropped_count: sys.dim() - omegas.len(),
                mass_defect: None,
                stiffness_defect: None,
                solve_seconds: t.elapsed().as_secs_f64(),
            };
            run.basis(summary, &sys.warnings);
        }
    }
    run.finish()
}


fn run_dispersion(cfg: &Config, effective: &toml::Table, out: &Path) -> Result<Manifest> {
    let grid = cfg.grid.build(SMALL_LENGTH, SMALL_POINTS)?;
    let profile = cfg.medium_or(&grid, default_lorentz_medium)?;
    let consts = cfg.constants.constants();
    let mut run = Run::new(Experiment::Dispersion, effective, out, &grid)?;
    let s = solve_no_cross("no-cross", &grid, &profile, cfg)?;
    let (points, skipped) = dispersion_points(&s.basis)?;
    let mut csv = String::from("omega,k,amplitude\n");
    for (w, k, a) in &points {
        let _ = writeln!(csv, "{},{},{}", e(*w), e(*k), e(*a));
    }
    run.write("dispersion.csv", &csv)?;
    if let Some((species, eps_inf)) = homogeneous_material(&profile) {
        let top = s.basis.omegas.last().copied().unwrap_or(0.0);
        let np = cfg.dispersion.analytic_points.max(2);
        let mut csv = String::from("omega,k\n");
        for i in 1..=np {
            let w = top * i as f64 / np as f64;
            if let Ok(k) = analytic_wavenumber(species.as_ref(), eps_inf, w, &consts) {
                let _ = writeln!(csv, "{},{}", e(w), e(k));
            }
        }
        run.write("dispersion_analytic.csv", &csv)?;
    }
    run.result("points", json!(points.len()));
    run.result("skipped_modes", json!(skipped));
    let w = s.system.warnings.clone();
    run.basis(s.summary, &w);
    run.finish()
}

/// Splitter slab of the HOM experiment: dispersionless, or a Lorentz medium
/// matched to ε_slab at the packet carrier.
pub fn hom_profile(length: f64, h: &crate::config::HomSection, consts: &PhysicalConstants) -> Result<MediumProfile> {
    if h.omega_p == 0.0 {
        MediumProfile::slab(length, 0.0, h.slab_thickness, h.eps_slab, None)
    } else {
        let species = design_lorentz(h.eps_slab, h.k_g * consts.c, h.omega_p)?;
        MediumProfile::slab(length, 0.0, h.slab_thickness, 1.0, Some(species))
    }
}

fn run_hom(cfg: &Config, effective: &toml::Table, out: &Path) -> Result<Manifest> {
    let h = &cfg.hom;
    let consts = cfg.constants.constants();
    let grid = cfg.grid.build(1.5, 2500)?;
    let profile = cfg.medium_or(&grid, |len| hom_profile(len, h, &consts))?;
    let mut run = Run::new(Experiment::Hom, effective, out, &grid)?;
    let s = solve_no_cross("splitter", &grid, &profile, cfg)?;
    let w = s.system.warnings.clone();
    run.basis(s.summary, &w);
    let qb = QuantizedBasis::new(s.basis)?;
    let mut hc = HomConfig::new(h.x_g, h.sigma_g, h.k_g);
    hc.x1 = h.x1.unwrap_or(hc.x1);
    hc.x2 = h.x2.unwrap_or(hc.x2);
    let (t0, t1) = (h.tau_min * h.sigma_g / consts.c, h.tau_max * h.sigma_g / consts.c);
    let taus: Vec<f64> = if h.tau_points == 1 {
        vec![t0]
    } else {
        (0..h.tau_points).map(|i| t0 + (t1 - t0) * i as f64 / (h.tau_points - 1) as f64).collect()
    };
    let t = Instant::now();
    let workers = worker_count()?;
    let chunk = taus.len().div_ceil(workers).max(1);
    let chunks: Vec<&[f64]> = taus.chunks(chunk).collect();
    let parts = parallel_map(&chunks, workers, |c| hom_curve(&qb, &hc, c))?;
    let mut curve = parts[0].clone();
    for p in &parts[1..] {
        curve.tau.extend(&p.tau);
        curve.values.extend(&p.values);
    }
    run.time("g2", t);
    run.write("g2_vs_tau.csv", &curve.to_csv())?;

    let (r, _) = slab_transfer(h.eps_slab, h.slab_thickness, h.k_g * consts.c, &consts)?;
    let reflectance = r.norm_sqr();
    let ideal = CorrelationResult {
        tau: taus.clone(),
        values: taus.iter().map(|&tau| hom_ideal_g2(tau, h.sigma_g, consts.c, reflectance)).collect(),
        normalization: "glauber".into(),
        metadata: BTreeMap::new(),
    };
    run.write("g2_ideal.csv", &ideal.to_csv())?;
    run.result("reflectance", json!(reflectance));
    run.result("g2_min", json!(curve.values.iter().copied().fold(f64::INFINITY, f64::min)));
    run.result("t1", json!(2.0 * h.x_g / consts.c));

    let st = hom_state(&qb, &hc, 0.0)?;
    if let TwoPhotonState::Product { g, h: hh } = &st {
        let mut csv = String::from("n,omega,g_re,g_im,h_re,h_im\n");
        for n in 0..qb.n_modes() {
            let _ = writeln!(
                csv,
                "{n},{},{},{},{},{}",
                e(qb.omegas()[n]),
                e(g[n].re),
                e(g[n].im),
                e(hh[n].re),
                e(hh[n].im)
            );
        }
        run.write("packet_spectra.csv", &csv)?;
    }
    if h.movie_frames > 0 {
        let t = Instant::now();
        let end = h.movie_span * 2.0 * h.x_g / consts.c;
        let frames = h.movie_frames;
        let times: Vec<f64> =
            (0..frames).map(|i| if frames == 1 { 0.0 } else { end * i as f64 / (frames - 1) as f64 }).collect();
        let movie = energy_density_movie(&qb, &st, &times)?;
        run.write("energy_density.csv", &movie.to_csv())?;
        let totals = movie.totals(grid.spacing);
        let mut csv = String::from("t,total\n");
        for (t, u) in times.iter().zip(&totals) {
            let _ = writeln!(csv, "{},{}", e(*t), e(*u));
        }
        run.write("energy_totals.csv", &csv)?;
        let lo = totals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = totals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        run.result("energy_drift", json!((hi - lo) / hi.abs()));
        run.time("movie", t);
    }
    run.finish()
}

/// Geometry of one NLDC configuration: dispersive slabs at
/// [media_start, media_start + media_length] on either side of the source.
pub fn nldc_profile(
    length: f64,
    n: &crate::config::NldcSection,
    left: Option<LorentzSpecies>,
    right: Option<LorentzSpecies>,
) -> Result<MediumProfile> {
    let (a, b) = (n.media_start, n.media_start + n.media_length);
    let mut slabs = Vec::new();
    if let Some(s) = left {
        slabs.push(Region { x_start: -b, x_end: -a, eps_inf: 1.0, oscillator: Some(s) });
    }
    if let Some(s) = right {
        slabs.push(Region { x_start: a, x_end: b, eps_inf: 1.0, oscillator: Some(s) });
    }
    MediumProfile::from_slabs(length, &slabs)
}

pub fn nldc_spec(n: &crate::config::NldcSection) -> EntangledSpec {
    EntangledSpec {
        pump: n.pump.unwrap_or(n.signal_center + n.idler_center),
        signal_center: n.signal_center,
        idler_center: n.idler_center,
        bandwidth: n.bandwidth,
        pump_width: n.pump_width.unwrap_or(0.1 * n.bandwidth),
    }
}

#[derive(Debug, Clone)]
pub struct NldcOutcome {
    pub config: String,
    pub entangled: CorrelationResult,
    pub separable: CorrelationResult,
    pub schmidt_number: f64,
    pub joint: JointSpectrum,
    pub summary: BasisSummary,
    pub warnings: Vec<String>,
}

/// Coincidence curves of the entangled and separable pairs for one media
/// configuration (`none`, `left`, `right` or `both`).
pub fn nldc_configuration(
    config: &str,
    grid: &Grid1D,
    cfg: &Config,
    media: (LorentzSpecies, LorentzSpecies),
    defects: bool,
) -> Result<NldcOutcome> {
    let n = &cfg.nldc;
    let consts = cfg.constants.constants();
    let left = matches!(config, "left" | "both").then_some(media.0);
    let right = matches!(config, "right" | "both").then_some(media.1);
    let profile = nldc_profile(grid.length(), n, left, right)?;
    let t = Instant::now();
    let system = assemble_no_cross(grid, &profile, &consts, cfg.grid.policy())?;
    let basis = solve(&system)?;
    let solve_seconds = t.elapsed().as_secs_f64();
    let (md, sd) = if defects {
        let (a, b) = basis.orthonormality_defect()?;
        (Some(a), Some(b))
    } else {
        (None, None)
    };
    let summary = BasisSummary {
        label: config.into(),
        dim: system.dim(),
        mode_count: basis.n_modes(),
        dropped_count: basis.dropped_count,
        mass_defect: md,
        stiffness_defect: sd,
        solve_seconds,
    };
    let qb = QuantizedBasis::new(basis)?;
    let spec = nldc_spec(n);
    let k1 = qb.field_kernel(n.detector, FieldKind::VectorPotential);
    let k2 = qb.field_kernel(-n.detector, FieldKind::VectorPotential);
    // stop the arrival scan before the periodic image of the pair comes round
    let margin = 15.0 * consts.c / (2.0 * spec.envelope_sigma());
    let scan_end = (grid.length() - n.detector - margin) / consts.c;
    if scan_end <= n.detector / consts.c {
        return Err(Error::DomainTooSmall(format!(
            "domain length {} leaves no arrival window for detectors at ±{}",
            grid.length(),
            n.detector
        )));
    }
    let tau_steps = (n.tau_max / (2.0 * n.time_step)).round() as usize;
    let mut curves = Vec::new();
    let mut joint = None;
    for entangled in [true, false] {
        let (st, js) = make_entangled(&qb, &spec, entangled)?;
        if entangled {
            joint = Some(js);
        }
        let a1 = arrival_stats(&qb, &st, &k1, 0.0, scan_end, 600)?;
        let a2 = arrival_stats(&qb, &st, &k2, 0.0, scan_end, 600)?;
        let window = CoincidenceWindow {
            t1: a1.peak_time,
            t2: a2.peak_time,
            half_width: 4.0 * a1.sigma.max(a2.sigma),
            step: n.time_step,
        };
        curves.push(coincidence_curve(&qb, &st, &k1, &k2, &window, tau_steps)?);
    }
    let separable = curves.pop().unwrap();
    let entangled = curves.pop().unwrap();
    let joint = joint.unwrap();
    Ok(NldcOutcome {
        config: config.into(),
        entangled,
        separable,
        schmidt_number: joint.schmidt_number()?,
        joint,
        summary,
        warnings: system.warnings,
    })
}

fn run_nldc(cfg: &Config, effective: &toml::Table, out: &Path) -> Result<Manifest> {
    let n = &cfg.nldc;
    let consts = cfg.constants.constants();
    let grid = cfg.grid.build(44.0, 4900)?;
    if cfg.medium.is_some() {
        return Err(Error::Config("nldc builds its own media; remove the [medium] section".into()));
    }
    let mut run = Run::new(Experiment::Nldc, effective, out, &grid)?;
    let t = Instant::now();
    let media = find_nldc_media(n.signal_center, n.idler_center, n.bandwidth, n.target_beta, &consts)?;
    run.time("media_search", t);
    run.result(
        "media",
        json!({
            "left": {"omega_p": media.0.plasma_freq, "omega_0": media.0.resonant_freq},
            "right": {"omega_p": media.1.plasma_freq, "omega_0": media.1.resonant_freq},
        }),
    );
    let mut configs: Vec<String> = vec!["none".into()];
    for c in &n.configs {
        if !configs.contains(c) {
            configs.push(c.clone());
        }
    }
    let t = Instant::now();
    let outcomes = parallel_map(&configs, worker_count()?, |c| nldc_configuration(c, &grid, cfg, media, true))?;
    run.time("sweep", t);
    let free = &outcomes[0];
    let (ref_e, ref_s) = (free.entangled.peak(), free.separable.peak());
    let mut widths = String::from("state,config,fwhm,peak\n");
    let mut fwhm = BTreeMap::new();
    for o in &outcomes {
        let hidden = o.config == "none" && !n.configs.iter().any(|c| c == "none");
        for (state, curve, reference) in [("entangled", &o.entangled, ref_e), ("separable", &o.separable, ref_s)] {
            let scaled = curve.scaled(reference, "free-peak");
            let w = scaled.fwhm();
            if !hidden {
                run.write(&format!("coincidence_{state}_{}.csv", o.config), &scaled.to_csv())?;
                let _ = writeln!(
                    widths,
                    "{state},{},{},{}",
                    o.config,
                    w.map_or("nan".into(), e),
                    e(scaled.peak())
                );
            }
            fwhm.insert(format!("{state}/{}", o.config), json!(w));
        }
        run.basis(o.summary.clone(), &o.warnings);
    }
    run.write("widths.csv", &widths)?;
    run.result("fwhm", json!(fwhm));
    run.result("schmidt_number", json!(free.schmidt_number));

    let js = &free.joint;
    let mut csv = String::from("omega_s,omega_i,re,im\n");
    for (m, ks) in js.signal_k.iter().enumerate() {
        for (j, ki) in js.idler_k.iter().enumerate() {
            let a = js.amplitude[(m, j)];
            let _ = writeln!(csv, "{},{},{},{}", e(consts.c * ks), e(consts.c * ki), e(a.re), e(a.im));
        }
    }
    run.write("joint_spectrum.csv", &csv)?;
    run.finish()
}

fn run_purcell(cfg: &Config, effective: &toml::Table, out: &Path) -> Result<Manifest> {
    let p = &cfg.purcell;
    let consts = cfg.constants.constants();
    let grid = cfg.grid.build(40.0, 4000)?;
    let profile = cfg.medium_or(&grid, MediumProfile::vacuum)?;
    let mut run = Run::new(Experiment::Purcell, effective, out, &grid)?;
    let s = solve_no_cross("medium", &grid, &profile, cfg)?;
    let w = s.system.warnings.clone();
    run.basis(s.summary, &w);
    let top = s.basis.omegas.last().copied().unwrap_or(0.0);
    let qb = QuantizedBasis::new(s.basis)?;
    let material = homogeneous_material(&profile);
    let rows = parallel_map(&p.omega_a, worker_count()?, |&wa| {
        let probe = purcell_factor(&qb, p.x_a, wa, p.eta)?;
        let eta = p.eta.unwrap_or(p.eta_factor * probe.local_spacing);
        let r = purcell_factor(&qb, p.x_a, wa, Some(eta))?;
        let analytic = match material {
            Some((species, eps_inf)) => Some(analytic_purcell_ratio(species.as_ref(), eps_inf, wa, eta, top, &consts)?),
            None => None,
        };
        Ok((wa, r, analytic))
    })?;
    let mut csv = String::from("omega,ratio,eta,spacing,analytic,under_resolved\n");
    for (wa, r, analytic) in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            e(*wa),
            e(r.ratio),
            e(r.eta),
            e(r.local_spacing),
            analytic.map_or("nan".into(), e),
            u8::from(r.under_resolved)
        );
        if r.under_resolved {
            run.manifest.warnings.push(format!("omega_a = {wa}: linewidth below three mode spacings"));
        }
    }
    run.write("purcell.csv", &csv)?;
    run.finish()
}

fn run_validate(cfg: &Config, effective: &toml::Table, out: &Path) -> Result<Manifest> {
    let v = &cfg.validate;
    let consts = cfg.constants.constants();
    let grid = cfg.grid.build(SMALL_LENGTH, SMALL_POINTS)?;
    let profile = cfg.medium_or(&grid, default_lorentz_medium)?;
    let mut run = Run::new(Experiment::Validate, effective, out, &grid)?;
    let s = solve_no_cross("no-cross", &grid, &profile, cfg)?;
    let mut checks = vec![
        Check::at_most("mass_orthonormality", s.summary.mass_defect.unwrap(), v.orthonormality_tol),
        Check::at_most("stiffness_orthonormality", s.summary.stiffness_defect.unwrap(), v.stiffness_tol),
    ];
    let eom = (0..s.basis.n_modes())
        .map(|n| eom_residual(&s.system, s.basis.omegas[n], &s.basis.modes.col(n)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    checks.push(Check::at_most("eom_residual", eom, v.stiffness_tol));

    let t = Instant::now();
    let cross_sys = assemble_cross(&grid, &profile, &consts, cfg.grid.policy())?;
    let cross = solve_cross(&cross_sys)?;
    run.time("cross_solve", t);
    let d = spectrum_discrepancy(&cross.omegas, &s.basis.omegas, 1).unwrap_or(f64::INFINITY);
    checks.push(Check::at_most("cross_spectrum", d, v.spectrum_tol));
    checks.push(Check::at_most("cross_pairing", cross.pairing_defect.unwrap_or(f64::INFINITY), v.spectrum_tol));
    let fo = frequency_operator_omegas(&s.system)?;
    let d = spectrum_discrepancy(&fo, &s.basis.omegas, 1).unwrap_or(f64::INFINITY);
    checks.push(Check::at_most("frequency_operator_spectrum", d, v.spectrum_tol));

    if let Some((species, eps_inf)) = homogeneous_material(&profile) {
        if let Some(sp) = species {
            let (lo, hi) = (sp.resonant_freq, sp.gap_top(eps_inf));
            let inside = s.basis.omegas.iter().filter(|&&w| w > lo && w < hi).count();
            checks.push(Check::at_most("gap_emptiness", inside as f64, 0.0));
        }
        let qb = QuantizedBasis::new(s.basis.clone())?;
        let (worst, samples) = qb.mode_ratio_check(species.as_ref(), eps_inf, v.max_kdx)?;
        run.result("ratio_samples", json!(samples.len()));
        checks.push(Check::at_most("mode_ratio", worst, v.ratio_tol));
        let (points, _) = dispersion_points(&s.basis)?;
        let mut worst: f64 = 0.0;
        let mut used = 0;
        for (w, k, _) in points {
            let Ok(ka) = analytic_wavenumber(species.as_ref(), eps_inf, w, &consts) else { continue };
            if ka * grid.spacing >= v.max_kdx || ka < std::f64::consts::PI / grid.length() {
                continue;
            }
            used += 1;
            worst = worst.max((k.abs() - ka).abs() / ka);
        }
        run.result("dispersion_samples", json!(used));
        checks.push(Check::at_most("dispersion", worst, v.dispersion_tol));
    }

    let mut csv = String::from("check,value,tolerance,pass\n");
    for c in &checks {
        let _ = writeln!(csv, "{},{},{},{}", c.name, e(c.value), e(c.tolerance), c.passed);
    }
    run.write("validate.csv", &csv)?;
    let w = s.system.warnings.clone();
    run.basis(s.summary, &w);
    run.manifest.checks = checks;
    run.finish()
}
