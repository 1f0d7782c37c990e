//! Seeded problem instances: geometry, path angles, large-scale coefficients and
//! co-channel interference estimates with bounded error.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First line of every scenario file.
pub const SCENARIO_HEADER: &str = "# ma-fd-power scenario v1";

/// System parameters in linear SI units (metres, watts, linear ratios).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub num_tx_antennas: usize,
    pub num_rx_antennas: usize,
    pub num_ul_uts: usize,
    pub num_dl_uts: usize,
    pub wavelength: f64,
    pub region_size_tx: f64,
    pub region_size_rx: f64,
    pub min_spacing: f64,
    pub si_paths_tx: usize,
    pub si_paths_rx: usize,
    pub si_loss: f64,
    pub ul_noise: f64,
    pub dl_noise: Vec<f64>,
    pub ul_rate_thresholds: Vec<f64>,
    pub dl_rate_thresholds: Vec<f64>,
    pub sat_antenna_gain: f64,
    pub ut_antenna_gain: f64,
    pub altitude: f64,
    pub beam_radius: f64,
    pub cci_distance_min: f64,
    pub cci_distance_max: f64,
    pub cci_path_loss_exponent: f64,
    /// Ratio eps_jk^2 / |c_jk|^2.
    pub cci_error_fraction: f64,
    /// Tchebycheff weights for (total UL power, total DL power).
    pub weights: [f64; 2],
    /// Reference objective values in watts.
    pub references: [f64; 2],
    pub rng_seed: u64,
}

impl SystemConfig {
    /// Desk-scale defaults: 8 + 8 antennas, 3 UL and 2 DL terminals, 3 lambda regions.
    pub fn desk() -> Self {
        let wavelength = crate::units::wavelength(8e9);
        let j = 3;
        let k = 2;
        SystemConfig {
            num_tx_antennas: 8,
            num_rx_antennas: 8,
            num_ul_uts: j,
            num_dl_uts: k,
            wavelength,
            region_size_tx: 3.0 * wavelength,
            region_size_rx: 3.0 * wavelength,
            min_spacing: 0.5 * wavelength,
            si_paths_tx: 10,
            si_paths_rx: 10,
            si_loss: crate::units::db_to_linear(-100.0),
            ul_noise: crate::units::dbm_to_watts(-110.0),
            dl_noise: vec![crate::units::dbm_to_watts(-100.0); k],
            ul_rate_thresholds: vec![0.5; j],
            dl_rate_thresholds: vec![1.0; k],
            sat_antenna_gain: crate::units::db_to_linear(20.0),
            ut_antenna_gain: crate::units::db_to_linear(30.0),
            altitude: 600e3,
            beam_radius: 50e3,
            cci_distance_min: 1e3,
            cci_distance_max: 10e3,
            cci_path_loss_exponent: 2.8,
            cci_error_fraction: 0.05,
            weights: [0.5, 0.5],
            references: [1.0, 1.0],
            rng_seed: 1,
        }
    }

    /// Full-scale setting: 16 + 16 antennas, 6 UL and 2 DL terminals, 5 lambda regions.
    pub fn full_scale() -> Self {
        let mut cfg = Self::desk();
        let (j, k) = (6, 2);
        cfg.num_tx_antennas = 16;
        cfg.num_rx_antennas = 16;
        cfg.num_ul_uts = j;
        cfg.num_dl_uts = k;
        cfg.region_size_tx = 5.0 * cfg.wavelength;
        cfg.region_size_rx = 5.0 * cfg.wavelength;
        cfg.dl_noise = vec![crate::units::dbm_to_watts(-100.0); k];
        cfg.ul_rate_thresholds = vec![0.5; j];
        cfg.dl_rate_thresholds = vec![1.0; k];
        cfg
    }

    /// Resizes the per-terminal vectors after `num_ul_uts`/`num_dl_uts` changed,
    /// repeating the first entry.
    pub fn broadcast_per_ut(&mut self) {
        let j = self.num_ul_uts;
        let k = self.num_dl_uts;
        let fill = |v: &mut Vec<f64>, n: usize| {
            let first = v.first().copied().unwrap_or(0.0);
            v.resize(n, first);
        };
        fill(&mut self.dl_noise, k);
        fill(&mut self.dl_rate_thresholds, k);
        fill(&mut self.ul_rate_thresholds, j);
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.num_tx_antennas < 1 {
            return fail("M >= 1 violated: need at least one transmit antenna".into());
        }
        if self.num_ul_uts < 1 || self.num_dl_uts < 1 {
            return fail("J >= 1 and K >= 1 required".into());
        }
        if self.num_rx_antennas < self.num_ul_uts {
            return fail(format!(
                "N >= J violated: {} receive antennas cannot zero-force {} uplink terminals",
                self.num_rx_antennas, self.num_ul_uts
            ));
        }
        if self.si_paths_tx < 1 || self.si_paths_rx < 1 {
            return fail("SI path counts must be >= 1".into());
        }
        let [w1, w2] = self.weights;
        if !(w1 >= 0.0 && w2 >= 0.0) || (w1 + w2 - 1.0).abs() > 1e-9 {
            return fail(format!(
                "weights must be nonnegative and sum to 1 (got {w1} + {w2})"
            ));
        }
        for (name, v) in [
            ("wavelength", self.wavelength),
            ("min_spacing", self.min_spacing),
            ("ul_noise", self.ul_noise),
            ("sat_antenna_gain", self.sat_antenna_gain),
            ("ut_antenna_gain", self.ut_antenna_gain),
            ("altitude", self.altitude),
            ("cci_distance_min", self.cci_distance_min),
            ("cci_path_loss_exponent", self.cci_path_loss_exponent),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be finite and strictly positive (got {v})"));
            }
        }
        if !(self.cci_distance_max >= self.cci_distance_min) {
            return fail("cci_distance_max must be >= cci_distance_min".into());
        }
        for (name, v) in [
            ("si_loss", self.si_loss),
            ("region_size_tx", self.region_size_tx),
            ("region_size_rx", self.region_size_rx),
            ("beam_radius", self.beam_radius),
            ("cci_error_fraction", self.cci_error_fraction),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return fail(format!("{name} must be finite and nonnegative (got {v})"));
            }
        }
        for (i, r) in self.references.iter().enumerate() {
            if !(r.is_finite() && r.abs() > 0.0) {
                return fail(format!("reference value T*_{} must be nonzero (got {r})", i + 1));
            }
        }
        let check_len = |name: &str, v: &[f64], n: usize| {
            if v.len() != n {
                Err(Error::Config(format!("{name} has {} entries, expected {n}", v.len())))
            } else {
                Ok(())
            }
        };
        check_len("dl_noise", &self.dl_noise, self.num_dl_uts)?;
        check_len("ul_rate_thresholds", &self.ul_rate_thresholds, self.num_ul_uts)?;
        check_len("dl_rate_thresholds", &self.dl_rate_thresholds, self.num_dl_uts)?;
        if self.dl_noise.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
            return fail("DL noise powers must be strictly positive".into());
        }
        if self
            .ul_rate_thresholds
            .iter()
            .chain(&self.dl_rate_thresholds)
            .any(|&r| !(r.is_finite() && r >= 0.0))
        {
            return fail("rate thresholds must be finite and nonnegative".into());
        }
        Ok(())
    }
}

/// Elevation and azimuth of one propagation path, both in [0, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathAngles {
    pub elevation: f64,
    pub azimuth: f64,
}

impl PathAngles {
    pub fn new(elevation: f64, azimuth: f64) -> Self {
        PathAngles { elevation, azimuth }
    }

    pub fn in_range(&self) -> bool {
        (0.0..=PI).contains(&self.elevation) && (0.0..=PI).contains(&self.azimuth)
    }
}

/// A complete problem instance. Matrices are stored row-major as nested vectors
/// so the file format stays readable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: SystemConfig,
    pub si_tx_angles: Vec<PathAngles>,
    pub si_rx_angles: Vec<PathAngles>,
    /// L^r x L^t scattering matrix between the region origins.
    pub si_core: Vec<Vec<Complex64>>,
    pub ul_angles: Vec<PathAngles>,
    pub dl_angles: Vec<PathAngles>,
    pub ul_distances: Vec<f64>,
    pub dl_distances: Vec<f64>,
    pub ul_coeffs: Vec<Complex64>,
    pub dl_coeffs: Vec<Complex64>,
    /// J x K UT-to-UT distances.
    pub cci_distances: Vec<Vec<f64>>,
    pub cci_true: Vec<Vec<Complex64>>,
    pub cci_est: Vec<Vec<Complex64>>,
    pub cci_radii: Vec<Vec<f64>>,
}

fn uniform_angles(rng: &mut impl Rng, n: usize) -> Vec<PathAngles> {
    (0..n)
        .map(|_| PathAngles::new(rng.random_range(0.0..=PI), rng.random_range(0.0..=PI)))
        .collect()
}

fn random_phase(rng: &mut impl Rng, magnitude: f64) -> Complex64 {
    Complex64::from_polar(magnitude, rng.random_range(0.0..2.0 * PI))
}

/// Satellite link power gain with free-space loss over the slant range.
fn satellite_link_gain(cfg: &SystemConfig, distance: f64) -> f64 {
    let fs = cfg.wavelength / (4.0 * PI * distance);
    cfg.sat_antenna_gain * cfg.ut_antenna_gain * fs * fs
}

/// Log-distance ground link gain between two terminals.
fn cci_gain(cfg: &SystemConfig, distance: f64) -> f64 {
    let k = cfg.wavelength / (4.0 * PI);
    k * k * distance.powf(-cfg.cci_path_loss_exponent)
}

impl Scenario {
    /// Draws an instance. A pure function of `config` (including its seed).
    pub fn generate(config: &SystemConfig) -> Result<Scenario> {
        config.validate()?;
        let cfg = config;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

        let si_tx_angles = uniform_angles(&mut rng, cfg.si_paths_tx);
        let si_rx_angles = uniform_angles(&mut rng, cfg.si_paths_rx);
        let std = (0.5 / (cfg.si_paths_tx * cfg.si_paths_rx) as f64).sqrt();
        let si_core = (0..cfg.si_paths_rx)
            .map(|_| {
                (0..cfg.si_paths_tx)
                    .map(|_| {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        Complex64::new(re * std, im * std)
                    })
                    .collect()
            })
            .collect();

        let ul_angles = uniform_angles(&mut rng, cfg.num_ul_uts);
        let dl_angles = uniform_angles(&mut rng, cfg.num_dl_uts);

        let mut slant = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let ground = cfg.beam_radius * rng.random::<f64>().sqrt();
                    cfg.altitude.hypot(ground)
                })
                .collect()
        };
        let ul_distances = slant(cfg.num_ul_uts);
        let dl_distances = slant(cfg.num_dl_uts);
        let ul_coeffs = ul_distances
            .iter()
            .map(|&d| random_phase(&mut rng, satellite_link_gain(cfg, d).sqrt()))
            .collect();
        let dl_coeffs = dl_distances
            .iter()
            .map(|&d| random_phase(&mut rng, satellite_link_gain(cfg, d).sqrt()))
            .collect();

        let (j, k) = (cfg.num_ul_uts, cfg.num_dl_uts);
        let mut cci_distances = vec![vec![0.0; k]; j];
        let mut cci_true = vec![vec![Complex64::new(0.0, 0.0); k]; j];
        for jj in 0..j {
            for kk in 0..k {
                let d = if cfg.cci_distance_max > cfg.cci_distance_min {
                    rng.random_range(cfg.cci_distance_min..cfg.cci_distance_max)
                } else {
                    cfg.cci_distance_min
                };
                cci_distances[jj][kk] = d;
                cci_true[jj][kk] = random_phase(&mut rng, cci_gain(cfg, d).sqrt());
            }
        }

        let mut cci_est = cci_true.clone();
        let mut cci_radii = vec![vec![0.0; k]; j];
        for jj in 0..j {
            for kk in 0..k {
                let c = cci_true[jj][kk];
                let eps = (cfg.cci_error_fraction * c.norm_sqr()).sqrt();
                cci_radii[jj][kk] = eps;
                // Uniform in the open disk: r = eps * sqrt(u) with u in [0, 1).
                let u: f64 = rng.random();
                let err = random_phase(&mut rng, eps * u.sqrt());
                cci_est[jj][kk] = c - err;
            }
        }

        let s = Scenario {
            config: cfg.clone(),
            si_tx_angles,
            si_rx_angles,
            si_core,
            ul_angles,
            dl_angles,
            ul_distances,
            dl_distances,
            ul_coeffs,
            dl_coeffs,
            cci_distances,
            cci_true,
            cci_est,
            cci_radii,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = &self.config;
        cfg.validate()?;
        let (j, k) = (cfg.num_ul_uts, cfg.num_dl_uts);
        let bad = |m: String| Err(Error::Config(m));
        if self.si_tx_angles.len() != cfg.si_paths_tx || self.si_rx_angles.len() != cfg.si_paths_rx {
            return bad("SI angle lists do not match the configured path counts".into());
        }
        if self.si_core.len() != cfg.si_paths_rx
            || self.si_core.iter().any(|r| r.len() != cfg.si_paths_tx)
        {
            return bad("SI core matrix must be L^r x L^t".into());
        }
        if self.ul_angles.len() != j || self.ul_coeffs.len() != j || self.ul_distances.len() != j {
            return bad("uplink terminal data does not match J".into());
        }
        if self.dl_angles.len() != k || self.dl_coeffs.len() != k || self.dl_distances.len() != k {
            return bad("downlink terminal data does not match K".into());
        }
        let all_angles = self
            .si_tx_angles
            .iter()
            .chain(&self.si_rx_angles)
            .chain(&self.ul_angles)
            .chain(&self.dl_angles);
        for a in all_angles {
            if !a.in_range() {
                return bad(format!("path angle ({}, {}) outside [0, pi]", a.elevation, a.azimuth));
            }
        }
        let shape_ok = |m: usize, n: usize| m == j && n == k;
        if !shape_ok(self.cci_true.len(), k) || !shape_ok(self.cci_est.len(), k)
            || !shape_ok(self.cci_radii.len(), k)
            || self.cci_true.iter().chain(&self.cci_est).any(|r| r.len() != k)
            || self.cci_radii.iter().any(|r| r.len() != k)
        {
            return bad("CCI matrices must be J x K".into());
        }
        for jj in 0..j {
            for kk in 0..k {
                let eps = self.cci_radii[jj][kk];
                let err = (self.cci_est[jj][kk] - self.cci_true[jj][kk]).norm();
                if !(eps >= 0.0) || err > eps {
                    return bad(format!(
                        "CCI estimate ({jj},{kk}) lies outside its uncertainty set: |err| = {err:e} > eps = {eps:e}"
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn si_core_matrix(&self) -> DMatrix<Complex64> {
        let (r, c) = (self.config.si_paths_rx, self.config.si_paths_tx);
        DMatrix::from_fn(r, c, |a, b| self.si_core[a][b])
    }

    /// Estimated CCI vector of DL terminal `k` (one entry per UL terminal).
    pub fn cci_est_vector(&self, k: usize) -> Vec<Complex64> {
        self.cci_est.iter().map(|row| row[k]).collect()
    }

    pub fn cci_true_vector(&self, k: usize) -> Vec<Complex64> {
        self.cci_true.iter().map(|row| row[k]).collect()
    }

    /// Aggregate uncertainty radius eps_k = sqrt(sum_j eps_jk^2).
    pub fn cci_radius(&self, k: usize) -> f64 {
        self.cci_radii.iter().map(|row| row[k] * row[k]).sum::<f64>().sqrt()
    }

    /// Same instance with a different SI loss coefficient.
    pub fn with_si_loss(&self, si_loss: f64) -> Scenario {
        let mut s = self.clone();
        s.config.si_loss = si_loss;
        s
    }

    pub fn with_weights(&self, weights: [f64; 2]) -> Scenario {
        let mut s = self.clone();
        s.config.weights = weights;
        s
    }

    pub fn with_references(&self, references: [f64; 2]) -> Scenario {
        let mut s = self.clone();
        s.config.references = references;
        s
    }

    pub fn to_text(&self) -> String {
        let body = toml::to_string(self).expect("scenario serialization is infallible");
        format!("{SCENARIO_HEADER}\n{body}")
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Scenario> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim_end() == SCENARIO_HEADER => {}
            Some(h) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    message: format!("line 1: expected header `{SCENARIO_HEADER}`, found `{h}`"),
                })
            }
            None => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    message: "empty file".into(),
                })
            }
        }
        let body = text.split_once('\n').map(|x| x.1).unwrap_or("");
        let s: Scenario = toml::from_str(body).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            // Body starts on line 2 of the file.
            message: match e.span() {
                Some(span) => {
                    let line = body[..span.start].matches('\n').count() + 2;
                    format!("line {line}: {}", e.message())
                }
                None => e.message().to_string(),
            },
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scenario> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Scenario::from_text(&text, path)
    }
}
