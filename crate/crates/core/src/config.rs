//! Run configuration: TOML sections, `--set` overrides and validation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assembly::SnapPolicy;
use crate::error::{Error, Result};
use crate::lattice::Grid1D;
use crate::medium::{LorentzSpecies, MediumProfile, PhysicalConstants};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Modes,
    Dispersion,
    Hom,
    Nldc,
    Purcell,
    Validate,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Modes => "modes",
            Experiment::Dispersion => "dispersion",
            Experiment::Hom => "hom",
            Experiment::Nldc => "nldc",
            Experiment::Purcell => "purcell",
            Experiment::Validate => "validate",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "modes" => Experiment::Modes,
            "dispersion" => Experiment::Dispersion,
            "hom" => Experiment::Hom,
            "nldc" => Experiment::Nldc,
            "purcell" => Experiment::Purcell,
            "validate" => Experiment::Validate,
            _ => return Err(Error::Config(format!("unknown experiment `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Units {
    #[default]
    Natural,
    Si,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Snap {
    #[default]
    Snap,
    Strict,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsSection {
    pub units: Units,
}

impl ConstantsSection {
    pub fn constants(&self) -> PhysicalConstants {
        match self.units {
            Units::Natural => PhysicalConstants::natural(),
            Units::Si => PhysicalConstants::si(),
        }
    }
}

/// Either `length` or `spacing` fixes the domain together with `n_points`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n_points: Option<usize>,
    pub length: Option<f64>,
    pub spacing: Option<f64>,
    pub bloch_phase: f64,
    pub snap: Snap,
}

impl GridSection {
    pub fn build(&self, default_length: f64, default_points: usize) -> Result<Grid1D> {
        let n = self.n_points.unwrap_or(default_points);
        let length = match (self.length, self.spacing) {
            (Some(_), Some(_)) => return Err(Error::Config("grid: give either length or spacing".into())),
            (Some(l), None) => l,
            (None, Some(s)) => s * n as f64,
            (None, None) => default_length,
        };
        Grid1D::periodic(length, n, self.bloch_phase).map_err(|e| Error::Config(format!("grid: {e}")))
    }

    pub fn policy(&self) -> SnapPolicy {
        match self.snap {
            Snap::Snap => SnapPolicy::Snap,
            Snap::Strict => SnapPolicy::Strict,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DescriptionChoice {
    #[default]
    NoCross,
    Cross,
    FrequencyOperator,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModesSection {
    pub description: DescriptionChoice,
    /// Also write K and M⁻¹ as `row col value` triplets.
    pub write_matrices: bool,
}

impl Default for ModesSection {
    fn default() -> Self {
        Self { description: DescriptionChoice::NoCross, write_matrices: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DispersionSection {
    /// Samples per analytic branch in `dispersion_analytic.csv`.
    pub analytic_points: usize,
}

impl Default for DispersionSection {
    fn default() -> Self {
        Self { analytic_points: 400 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HomSection {
    pub x_g: f64,
    pub sigma_g: f64,
    pub k_g: f64,
    pub eps_slab: f64,
    pub slab_thickness: f64,
    /// Plasma frequency of the Lorentz splitter; 0 selects the dispersionless slab.
    pub omega_p: f64,
    /// Delay range [tau_min, tau_max] in units of σ_g/c.
    pub tau_min: f64,
    pub tau_max: f64,
    pub tau_points: usize,
    pub x1: Option<f64>,
    pub x2: Option<f64>,
    /// Energy-density frames over [0, t_end]; 0 disables the movie.
    pub movie_frames: usize,
    /// Movie end time in units of 2x_g/c.
    pub movie_span: f64,
}

impl Default for HomSection {
    fn default() -> Self {
        Self {
            x_g: 0.3747,
            sigma_g: 0.05,
            k_g: 526.0,
            eps_slab: 7.0,
            slab_thickness: 0.006,
            omega_p: 875.0,
            tau_min: 0.0,
            tau_max: 3.0,
            tau_points: 7,
            x1: None,
            x2: None,
            movie_frames: 0,
            movie_span: 1.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NldcSection {
    pub signal_center: f64,
    pub idler_center: f64,
    pub bandwidth: f64,
    /// Pump frequency Ω_P with ω_s + ω_i = Ω_P; defaults to the sum of the centers.
    pub pump: Option<f64>,
    /// Defaults to bandwidth/10.
    pub pump_width: Option<f64>,
    pub target_beta: f64,
    pub media_start: f64,
    pub media_length: f64,
    pub detector: f64,
    pub tau_max: f64,
    pub time_step: f64,
    pub configs: Vec<String>,
}

impl Default for NldcSection {
    fn default() -> Self {
        Self {
            signal_center: 37.5,
            idler_center: 32.5,
            bandwidth: 5.0,
            pump: None,
            pump_width: None,
            target_beta: 0.2,
            media_start: 6.5,
            media_length: 3.0,
            detector: 10.0,
            tau_max: 5.0,
            time_step: 0.025,
            configs: ["none", "left", "right", "both"].map(String::from).to_vec(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PurcellSection {
    pub x_a: f64,
    pub omega_a: Vec<f64>,
    /// Fixed Lorentzian half-width; otherwise `eta_factor` × local mode spacing.
    pub eta: Option<f64>,
    pub eta_factor: f64,
}

impl Default for PurcellSection {
    fn default() -> Self {
        Self { x_a: 0.0, omega_a: vec![20.0, 25.0, 30.0], eta: None, eta_factor: 10.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateSection {
    pub orthonormality_tol: f64,
    pub stiffness_tol: f64,
    pub spectrum_tol: f64,
    pub ratio_tol: f64,
    pub dispersion_tol: f64,
    pub max_kdx: f64,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self {
            orthonormality_tol: 1e-10,
            stiffness_tol: 1e-8,
            spectrum_tol: 1e-8,
            ratio_tol: 1e-3,
            dispersion_tol: 0.01,
            max_kdx: 0.3,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub experiment: Option<Experiment>,
    pub constants: ConstantsSection,
    pub grid: GridSection,
    pub medium: Option<MediumProfile>,
    pub modes: ModesSection,
    pub dispersion: DispersionSection,
    pub hom: HomSection,
    pub nldc: NldcSection,
    pub purcell: PurcellSection,
    pub validate: ValidateSection,
    pub output: OutputSection,
}

/// Applies `section.key=value` to a parsed table. The value is read as a TOML
/// value when possible and as a plain string otherwise.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("bad override key `{path}`")));
    }
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let entry = cur.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{path}`: `{k}` is not a section")))?;
    }
    cur.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

impl Config {
    pub fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Config = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses text, applies overrides, validates; also returns the effective table.
    pub fn parse(text: &str, overrides: &[String]) -> Result<(Self, toml::Table)> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Ok((Self::from_table(table.clone())?, table))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<(Self, toml::Table)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        let h = &self.hom;
        for (n, v) in [("hom.x_g", h.x_g), ("hom.sigma_g", h.sigma_g), ("hom.k_g", h.k_g)] {
            positive(n, v)?;
        }
        if !(h.tau_max >= h.tau_min) {
            return Err(Error::Config("hom.tau_max must not be below hom.tau_min".into()));
        }
        positive("hom.slab_thickness", h.slab_thickness)?;
        if !(h.eps_slab > 1.0) || h.omega_p < 0.0 {
            return Err(Error::Config("hom: eps_slab must exceed 1 and omega_p must be >= 0".into()));
        }
        if h.tau_points == 0 {
            return Err(Error::Config("hom.tau_points must be at least 1".into()));
        }
        let n = &self.nldc;
        for (name, v) in [
            ("nldc.signal_center", n.signal_center),
            ("nldc.idler_center", n.idler_center),
            ("nldc.bandwidth", n.bandwidth),
            ("nldc.target_beta", n.target_beta),
            ("nldc.media_start", n.media_start),
            ("nldc.media_length", n.media_length),
            ("nldc.tau_max", n.tau_max),
            ("nldc.time_step", n.time_step),
        ] {
            positive(name, v)?;
        }
        if n.detector <= n.media_start + n.media_length {
            return Err(Error::Config("nldc.detector must lie beyond the media".into()));
        }
        for c in &n.configs {
            if !matches!(c.as_str(), "none" | "left" | "right" | "both") {
                return Err(Error::Config(format!("nldc config `{c}` is not none|left|right|both")));
            }
        }
        if let Some(p) = n.pump {
            positive("nldc.pump", p)?;
        }
        if let Some(p) = n.pump_width {
            positive("nldc.pump_width", p)?;
        }
        let p = &self.purcell;
        if p.omega_a.is_empty() {
            return Err(Error::Config("purcell.omega_a is empty".into()));
        }
        for &w in &p.omega_a {
            positive("purcell.omega_a", w)?;
        }
        if let Some(e) = p.eta {
            positive("purcell.eta", e)?;
        }
        positive("purcell.eta_factor", p.eta_factor)?;
        Ok(())
    }

    /// Medium from the config, or the given fallback, checked against the grid.
    pub fn medium_or(&self, grid: &Grid1D, fallback: impl FnOnce(f64) -> Result<MediumProfile>) -> Result<MediumProfile> {
        let m = match &self.medium {
            Some(m) => m.clone(),
            None => fallback(grid.length())?,
        };
        if (m.length() - grid.length()).abs() > 1e-9 * grid.length() {
            return Err(Error::Config(format!(
                "medium length {} differs from grid length {}",
                m.length(),
                grid.length()
            )));
        }
        Ok(m)
    }
}

/// Homogeneous ω_p = ω_0 = 50 medium used by the validation and dispersion defaults.
pub fn default_lorentz_medium(length: f64) -> Result<MediumProfile> {
    MediumProfile::homogeneous(length, 1.0, Some(LorentzSpecies::new(50.0, 50.0)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_keys() {
        let (cfg, table) = Config::parse(
            "[grid]\nn_points = 10\n",
            &["grid.n_points=20".into(), "hom.omega_p=4750".into(), "constants.units=si".into()],
        )
        .unwrap();
        assert_eq!(cfg.grid.n_points, Some(20));
        assert_eq!(cfg.hom.omega_p, 4750.0);
        assert_eq!(cfg.constants.units, Units::Si);
        assert!(table.contains_key("hom"));
    }

    #[test]
    fn medium_section_round_trip() {
        let text = "[grid]\nlength = 2.0\n[medium]\nlength = 2.0\n[[medium.region]]\nx_start = -1.0\nx_end = 1.0\nomega_p = 50.0\nomega_0 = 50.0\n";
        let (cfg, _) = Config::parse(text, &[]).unwrap();
        let m = cfg.medium.unwrap();
        assert!(m.regions()[0].oscillator.is_some());
        let back = toml::to_string(&m).unwrap();
        let again: MediumProfile = toml::from_str(&back).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Config::parse("[grid]\nbogus = 1\n", &[]).is_err());
        assert!(Config::parse("", &["hom.sigma_g=-1".into()]).is_err());
        assert!(Config::parse("", &["novalue".into()]).is_err());
        assert!(Config::parse("[grid]\nlength = 1.0\nspacing = 0.1\n", &[])
            .unwrap()
            .0
            .grid
            .build(1.0, 10)
            .is_err());
    }
}
