//! Experiment configuration files (TOML, engineering units).
//!
//! Every key is optional; missing keys fall back to the desk preset, or to the
//! full-scale preset when `preset = "full"` or `--full-scale` is given.
//!
//! ```toml
//! [system]
//! preset = "desk"
//! carrier_frequency_ghz = 8.0
//! num_tx_antennas = 8
//! region_size_wavelengths = 3.0
//! si_loss_db = -100.0
//! ul_noise_dbm = -110.0
//! dl_noise_dbm = -100.0
//! ul_rate_threshold = 0.5
//! dl_rate_threshold = 1.0
//! weights = [0.5, 0.5]
//! reference_mode = "fixed"
//! reference_powers_w = [1.0, 1.0]
//!
//! [swarm]
//! particles = 20
//! iterations = 60
//!
//! [inner]
//! tol = 1e-8
//! augmentation = 1e-3
//!
//! [experiment]
//! region_sizes_wavelengths = [3.0, 5.0]
//! weight_step = 0.25
//! si_loss_db = [-120.0, -110.0, -100.0, -90.0]
//! fpa_antennas = [8]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pso::{PenaltyMode, SwarmConfig};
use crate::robust::InnerOptions;
use crate::scenario::SystemConfig;
use crate::units::{db_to_linear, dbm_to_watts, wavelength};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Desk,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceMode {
    /// Use `reference_powers_w` as given.
    #[default]
    Fixed,
    /// Per instance, the single-objective optima at the FPA layout.
    Calibrated,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub preset: Option<Preset>,
    pub carrier_frequency_ghz: Option<f64>,
    pub num_tx_antennas: Option<usize>,
    pub num_rx_antennas: Option<usize>,
    pub num_ul_uts: Option<usize>,
    pub num_dl_uts: Option<usize>,
    pub region_size_wavelengths: Option<f64>,
    pub min_spacing_wavelengths: Option<f64>,
    pub si_paths: Option<usize>,
    pub si_loss_db: Option<f64>,
    pub ul_noise_dbm: Option<f64>,
    pub dl_noise_dbm: Option<f64>,
    pub ul_rate_threshold: Option<f64>,
    pub dl_rate_threshold: Option<f64>,
    pub sat_antenna_gain_dbi: Option<f64>,
    pub ut_antenna_gain_dbi: Option<f64>,
    pub altitude_km: Option<f64>,
    pub beam_radius_km: Option<f64>,
    pub cci_distance_km: Option<[f64; 2]>,
    pub cci_path_loss_exponent: Option<f64>,
    pub cci_error_fraction: Option<f64>,
    pub weights: Option<[f64; 2]>,
    pub reference_powers_w: Option<[f64; 2]>,
    pub reference_mode: Option<ReferenceMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InnerSection {
    pub tol: f64,
    /// Augmentation coefficient of the Tchebycheff objective; 0 disables it.
    pub augmentation: f64,
    pub dump_dir: Option<PathBuf>,
    pub dump_all: bool,
}

impl Default for InnerSection {
    fn default() -> Self {
        InnerSection { tol: crate::conic::DEFAULT_TOL, augmentation: crate::robust::DEFAULT_AUGMENTATION, dump_dir: None, dump_all: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub region_sizes_wavelengths: Vec<f64>,
    pub weight_step: f64,
    pub si_loss_db: Vec<f64>,
    /// FPA baseline sizes; an empty list means "same as M".
    pub fpa_antennas: Vec<usize>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            region_sizes_wavelengths: vec![3.0, 5.0],
            weight_step: 0.1,
            si_loss_db: vec![-120.0, -110.0, -100.0, -90.0],
            fpa_antennas: Vec::new(),
        }
    }
}

/// Swarm overrides on top of the preset's swarm.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwarmSection {
    pub particles: Option<usize>,
    pub iterations: Option<usize>,
    pub inertia_min: Option<f64>,
    pub inertia_max: Option<f64>,
    pub cognitive: Option<f64>,
    pub social: Option<f64>,
    pub penalty: Option<f64>,
    pub penalty_mode: Option<PenaltyMode>,
    pub rng_seed: Option<u64>,
}

impl SwarmSection {
    fn apply(&self, base: SwarmConfig) -> SwarmConfig {
        SwarmConfig {
            particles: self.particles.unwrap_or(base.particles),
            iterations: self.iterations.unwrap_or(base.iterations),
            inertia_min: self.inertia_min.unwrap_or(base.inertia_min),
            inertia_max: self.inertia_max.unwrap_or(base.inertia_max),
            cognitive: self.cognitive.unwrap_or(base.cognitive),
            social: self.social.unwrap_or(base.social),
            penalty: self.penalty.unwrap_or(base.penalty),
            penalty_mode: self.penalty_mode.unwrap_or(base.penalty_mode),
            rng_seed: self.rng_seed.unwrap_or(base.rng_seed),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub swarm: SwarmSection,
    #[serde(default)]
    pub inner: InnerSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

/// Resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub swarm: SwarmConfig,
    pub inner: InnerSection,
    pub experiment: ExperimentSection,
    pub reference_mode: ReferenceMode,
}

impl RunConfig {
    pub fn desk() -> Self {
        ConfigFile::default().resolve(false).expect("defaults are valid")
    }

    pub fn inner_options(&self) -> InnerOptions {
        InnerOptions {
            tol: self.inner.tol,
            augmentation: self.inner.augmentation,
            dump_dir: self.inner.dump_dir.clone(),
            dump_all: self.inner.dump_all,
        }
    }

    pub fn fpa_sizes(&self) -> Vec<usize> {
        if self.experiment.fpa_antennas.is_empty() {
            vec![self.system.num_tx_antennas]
        } else {
            self.experiment.fpa_antennas.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.swarm.validate()?;
        let e = &self.experiment;
        if e.region_sizes_wavelengths.is_empty() || e.si_loss_db.is_empty() {
            return Err(Error::Config("sweep values must be nonempty".into()));
        }
        if e.region_sizes_wavelengths.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::Config("region sizes must be finite and nonnegative".into()));
        }
        if e.si_loss_db.iter().any(|r| !r.is_finite()) {
            return Err(Error::Config("SI loss grid must be finite".into()));
        }
        weight_grid(e.weight_step)?;
        if e.fpa_antennas.iter().any(|&n| n < self.system.num_ul_uts) {
            return Err(Error::Config("FPA baseline needs at least J receive antennas".into()));
        }
        if !(self.inner.tol > 0.0 && self.inner.tol < 1e-2) {
            return Err(Error::Config("inner tol must lie in (0, 1e-2)".into()));
        }
        Ok(())
    }
}

/// Weight values `0, step, ..., 1`; `step` must divide 1 evenly.
pub fn weight_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Config(format!("weight step must lie in (0, 1] (got {step})")));
    }
    let count = (1.0 / step).round();
    if ((count * step) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("weight step {step} does not divide 1 evenly")));
    }
    let count = count as usize;
    Ok((0..=count).map(|i| i as f64 / count as f64).collect())
}

impl ConfigFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn resolve(&self, full_scale: bool) -> Result<RunConfig> {
        let s = &self.system;
        let preset = if full_scale { Preset::Full } else { s.preset.unwrap_or_default() };
        let mut sys = match preset {
            Preset::Desk => SystemConfig::desk(),
            Preset::Full => SystemConfig::full_scale(),
        };
        if let Some(f) = s.carrier_frequency_ghz {
            if !(f > 0.0) {
                return Err(Error::Config("carrier frequency must be positive".into()));
            }
            let old = sys.wavelength;
            sys.wavelength = wavelength(f * 1e9);
            let r = sys.wavelength / old;
            sys.region_size_tx *= r;
            sys.region_size_rx *= r;
            sys.min_spacing *= r;
        }
        let wl = sys.wavelength;
        if let Some(v) = s.num_tx_antennas {
            sys.num_tx_antennas = v;
        }
        if let Some(v) = s.num_rx_antennas {
            sys.num_rx_antennas = v;
        }
        if let Some(v) = s.num_ul_uts {
            sys.num_ul_uts = v;
        }
        if let Some(v) = s.num_dl_uts {
            sys.num_dl_uts = v;
        }
        sys.broadcast_per_ut();
        if let Some(a) = s.region_size_wavelengths {
            sys.region_size_tx = a * wl;
            sys.region_size_rx = a * wl;
        }
        if let Some(d) = s.min_spacing_wavelengths {
            sys.min_spacing = d * wl;
        }
        if let Some(l) = s.si_paths {
            sys.si_paths_tx = l;
            sys.si_paths_rx = l;
        }
        if let Some(db) = s.si_loss_db {
            sys.si_loss = db_to_linear(db);
        }
        if let Some(dbm) = s.ul_noise_dbm {
            sys.ul_noise = dbm_to_watts(dbm);
        }
        if let Some(dbm) = s.dl_noise_dbm {
            sys.dl_noise = vec![dbm_to_watts(dbm); sys.num_dl_uts];
        }
        if let Some(r) = s.ul_rate_threshold {
            sys.ul_rate_thresholds = vec![r; sys.num_ul_uts];
        }
        if let Some(r) = s.dl_rate_threshold {
            sys.dl_rate_thresholds = vec![r; sys.num_dl_uts];
        }
        if let Some(g) = s.sat_antenna_gain_dbi {
            sys.sat_antenna_gain = db_to_linear(g);
        }
        if let Some(g) = s.ut_antenna_gain_dbi {
            sys.ut_antenna_gain = db_to_linear(g);
        }
        if let Some(h) = s.altitude_km {
            sys.altitude = h * 1e3;
        }
        if let Some(r) = s.beam_radius_km {
            sys.beam_radius = r * 1e3;
        }
        if let Some([lo, hi]) = s.cci_distance_km {
            sys.cci_distance_min = lo * 1e3;
            sys.cci_distance_max = hi * 1e3;
        }
        if let Some(e) = s.cci_path_loss_exponent {
            sys.cci_path_loss_exponent = e;
        }
        if let Some(f) = s.cci_error_fraction {
            sys.cci_error_fraction = f;
        }
        if let Some(w) = s.weights {
            sys.weights = w;
        }
        if let Some(t) = s.reference_powers_w {
            sys.references = t;
        }
        let swarm = self.swarm.apply(match preset {
            Preset::Desk => SwarmConfig::desk(),
            Preset::Full => SwarmConfig::default(),
        });
        let cfg = RunConfig {
            system: sys,
            swarm,
            inner: self.inner.clone(),
            experiment: self.experiment.clone(),
            reference_mode: s.reference_mode.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let cfg = RunConfig::desk();
        assert_eq!(cfg.system, SystemConfig::desk());
        assert_eq!(cfg.swarm, SwarmConfig::desk());
        let full = ConfigFile::default().resolve(true).unwrap();
        assert_eq!(full.system.num_tx_antennas, 16);
        assert_eq!(full.swarm.particles, 30);
    }

    #[test]
    fn partial_swarm_section_keeps_preset_values() {
        let cfg = ConfigFile::parse("[swarm]\nparticles = 7\n", Path::new("x.toml")).unwrap().resolve(false).unwrap();
        assert_eq!(cfg.swarm, SwarmConfig { particles: 7, ..SwarmConfig::desk() });
        assert!(ConfigFile::parse("[swarm]\nparticle = 7\n", Path::new("x.toml")).is_err());
    }

    #[test]
    fn units_are_converted() {
        let text = "[system]\nsi_loss_db = -90\nul_noise_dbm = -100\nregion_size_wavelengths = 5\nnum_ul_uts = 2\n";
        let cfg = ConfigFile::parse(text, Path::new("x.toml")).unwrap().resolve(false).unwrap();
        assert!((cfg.system.si_loss - 1e-9).abs() < 1e-24);
        assert!((cfg.system.ul_noise - 1e-13).abs() < 1e-28);
        assert!((cfg.system.region_size_tx - 5.0 * cfg.system.wavelength).abs() < 1e-15);
        assert_eq!(cfg.system.ul_rate_thresholds.len(), 2);
    }

    #[test]
    fn bad_files_are_config_errors() {
        assert!(matches!(ConfigFile::parse("[system]\nbogus = 1\n", Path::new("x")), Err(Error::Parse { .. })));
        let f = ConfigFile::parse("[system]\nweights = [0.7, 0.7]\n", Path::new("x")).unwrap();
        assert!(matches!(f.resolve(false), Err(Error::Config(_))));
        let f = ConfigFile::parse("[experiment]\nweight_step = 0.3\n", Path::new("x")).unwrap();
        assert!(matches!(f.resolve(false), Err(Error::Config(_))));
    }

    #[test]
    fn weight_grid_arithmetic() {
        assert_eq!(weight_grid(0.25).unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(weight_grid(0.01).unwrap().len(), 101);
        assert!(weight_grid(0.0).is_err());
        assert!(weight_grid(0.4).is_err());
    }
}
