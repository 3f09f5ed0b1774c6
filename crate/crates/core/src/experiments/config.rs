//! TOML files for sweeps and scenario scenes.
//!
//! A sweep file uses the same flat keys as the command-line flags:
//!
//! ```toml
//! snr_min = 16
//! snr_max = 30
//! snr_step = 2
//! trials = 10000
//! samples = 100
//! freq = 2e9
//! freq_offset = 50e6
//! distance_wavelengths = 50
//! dmax_wavelengths = 100
//! seed = 1
//! variants = ["three_meas", "four_meas", "genie"]
//! out = "rmse.csv"
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::array::{AntennaHardware, DelayTable, Panel, Position, Scene, User};
use crate::error::{Error, Result};
use crate::experiments::sweep::{parse_variants, snr_range, Distance, SweepConfig, Variant};
use crate::measurement::derive_key;
use crate::phase::Phase;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum VariantList {
    Csv(String),
    List(Vec<String>),
}

impl VariantList {
    pub fn resolve(&self) -> Result<BTreeSet<Variant>> {
        match self {
            VariantList::Csv(s) => parse_variants(s),
            VariantList::List(items) => items.iter().map(|s| s.parse()).collect(),
        }
    }
}

/// Sweep parameters, every one optional so that file values and flags can
/// be layered over the defaults.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    pub snr_min: Option<f64>,
    pub snr_max: Option<f64>,
    pub snr_step: Option<f64>,
    pub trials: Option<usize>,
    pub samples: Option<usize>,
    pub freq: Option<f64>,
    /// `f − f'` in Hz.
    pub freq_offset: Option<f64>,
    pub distance_wavelengths: Option<f64>,
    pub dmax_wavelengths: Option<f64>,
    pub seed: Option<u64>,
    pub variants: Option<VariantList>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl SweepSettings {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::usage(format!("invalid sweep config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Values from `top` win; gaps are filled from `self`.
    pub fn overlay(self, top: SweepSettings) -> SweepSettings {
        SweepSettings {
            snr_min: top.snr_min.or(self.snr_min),
            snr_max: top.snr_max.or(self.snr_max),
            snr_step: top.snr_step.or(self.snr_step),
            trials: top.trials.or(self.trials),
            samples: top.samples.or(self.samples),
            freq: top.freq.or(self.freq),
            freq_offset: top.freq_offset.or(self.freq_offset),
            distance_wavelengths: top.distance_wavelengths.or(self.distance_wavelengths),
            dmax_wavelengths: top.dmax_wavelengths.or(self.dmax_wavelengths),
            seed: top.seed.or(self.seed),
            variants: top.variants.or(self.variants),
            out: top.out.or(self.out),
            workers: top.workers.or(self.workers),
        }
    }

    /// Fills gaps from [`SweepConfig::default`] and validates the result.
    pub fn build(&self) -> Result<SweepConfig> {
        let d = SweepConfig::default();
        let grid_min = d.snr_grid[0];
        let grid_max = d.snr_grid[d.snr_grid.len() - 1];
        let grid_step = d.snr_grid[1] - d.snr_grid[0];
        let f = self.freq.unwrap_or(d.f);
        let cfg = SweepConfig {
            snr_grid: snr_range(
                self.snr_min.unwrap_or(grid_min),
                self.snr_max.unwrap_or(grid_max),
                self.snr_step.unwrap_or(grid_step),
            )?,
            trials: self.trials.unwrap_or(d.trials),
            n_samples: self.samples.unwrap_or(d.n_samples),
            f,
            f_prime: f - self.freq_offset.unwrap_or(d.f - d.f_prime),
            distance: self
                .distance_wavelengths
                .map_or(d.distance, Distance::Wavelengths),
            d_max: self.dmax_wavelengths.map_or(d.d_max, Distance::Wavelengths),
            seed: self.seed.unwrap_or(d.seed),
            variants: match &self.variants {
                Some(v) => v.resolve()?,
                None => d.variants,
            },
            workers: self.workers,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One panel of a scene file. Offsets left out are drawn at random.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelSpec {
    pub positions: Vec<Position>,
    pub t: Option<Vec<f64>>,
    pub r: Option<Vec<f64>>,
    /// Symmetric intra-panel delays in radians at `freq`; geometry is used
    /// when absent.
    pub coupling: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub position: Position,
    pub t: Option<f64>,
    pub r: Option<f64>,
}

/// Scene description for scenarios:
///
/// ```toml
/// freq = 2e9
/// freq_offset = 50e6
///
/// [[panel]]
/// positions = [[0, 0, 0], [0.075, 0, 0], [0.15, 0, 0]]
/// t = [0.1, 1.2, 2.3]
/// r = [0.4, 0.5, 0.6]
///
/// [user]
/// position = [10, 25, 1.5]
/// ```
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub freq: Option<f64>,
    pub freq_offset: Option<f64>,
    #[serde(rename = "panel", default)]
    pub panels: Vec<PanelSpec>,
    pub user: Option<UserSpec>,
}

const SCENE_FILE_STREAM: u64 = 0x5343_4e46; // "SCNF"

fn offsets(
    given: &Option<Vec<f64>>,
    n: usize,
    what: &str,
    draw: &mut dyn FnMut() -> Phase,
) -> Result<Vec<Phase>> {
    match given {
        None => Ok((0..n).map(|_| draw()).collect()),
        Some(v) if v.len() == n => v.iter().map(|&x| Phase::try_new(x)).collect(),
        Some(v) => Err(Error::usage(format!(
            "panel has {n} positions but {} {what} offsets",
            v.len()
        ))),
    }
}

fn coupling_table(rows: &[Vec<f64>], n: usize) -> Result<DelayTable> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::usage(format!("coupling must be a {n}x{n} table")));
    }
    for (i, row) in rows.iter().enumerate() {
        for (j, &value) in row.iter().enumerate().take(i) {
            if (value - rows[j][i]).abs() > 1e-9 {
                return Err(Error::usage(format!(
                    "coupling is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    DelayTable::from_fn(n, |i, j| rows[i][j])
}

impl SceneFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::usage(format!("invalid scene file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Builds the scene; unspecified offsets come from a stream keyed by `seed`.
    pub fn build(&self, seed: u64) -> Result<Scene> {
        if self.panels.is_empty() {
            return Err(Error::usage("scene file defines no [[panel]]"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_key(seed, &[SCENE_FILE_STREAM]));
        let mut draw = || AntennaHardware::random(&mut rng).t;
        let mut panels = Vec::with_capacity(self.panels.len());
        for spec in &self.panels {
            let n = spec.positions.len();
            let t = offsets(&spec.t, n, "t", &mut draw)?;
            let r = offsets(&spec.r, n, "r", &mut draw)?;
            let hw = t
                .into_iter()
                .zip(r)
                .map(|(t, r)| AntennaHardware::new(t, r))
                .collect();
            let mut panel = Panel::new(hw, spec.positions.clone())?;
            if let Some(rows) = &spec.coupling {
                panel = panel.with_coupling(coupling_table(rows, n)?)?;
            }
            panels.push(panel);
        }
        let f = self.freq.unwrap_or(2e9);
        let mut scene = Scene::new(panels, f, f - self.freq_offset.unwrap_or(50e6))?;
        if let Some(u) = &self.user {
            let t = match u.t {
                Some(x) => Phase::try_new(x)?,
                None => draw(),
            };
            let r = match u.r {
                Some(x) => Phase::try_new(x)?,
                None => draw(),
            };
            scene = scene.with_user(User {
                hardware: AntennaHardware::new(t, r),
                position: u.position,
            });
        }
        Ok(scene)
    }
}
