use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{delay_radians, wavelength, AntennaHardware};
use crate::calibrators::{
    align_f_f_dual_freq_with, align_f_f_genie_bidirectional, build_bounds, Branch,
    CoarseDelaySource, DualFreqOptions, SearchBounds,
};
use crate::error::{Error, Result};
use crate::measurement::{
    derive_key, measure_dual_frequency, DualFrequencyObservation, DualFrequencyProbe,
    MeasurementConfig,
};
use crate::phase::{circular_rmse, Phase};

/// Estimators compared in a sweep. Ordering fixes the CSV column order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Bidirectional at `f` plus `B → A` at `f'`.
    ThreeMeas,
    /// Both directions at both carriers, estimates averaged.
    FourMeas,
    /// Both directions at `f` with the true delay known.
    Genie,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::ThreeMeas, Variant::FourMeas, Variant::Genie];

    pub fn name(self) -> &'static str {
        match self {
            Variant::ThreeMeas => "three_meas",
            Variant::FourMeas => "four_meas",
            Variant::Genie => "genie",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| {
                Error::usage(format!(
                    "unknown variant '{s}', expected one of three_meas, four_meas, genie"
                ))
            })
    }
}

/// Parses a comma-separated variant list.
pub fn parse_variants(list: &str) -> Result<BTreeSet<Variant>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Distance {
    Meters(f64),
    Wavelengths(f64),
}

impl Distance {
    pub fn meters(self, f: f64) -> f64 {
        match self {
            Distance::Meters(m) => m,
            Distance::Wavelengths(w) => w * wavelength(f),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub snr_grid: Vec<f64>,
    pub trials: usize,
    pub n_samples: usize,
    pub f: f64,
    pub f_prime: f64,
    pub distance: Distance,
    pub d_max: Distance,
    pub seed: u64,
    pub variants: BTreeSet<Variant>,
    /// Worker threads; `None` lets the pool decide. Results do not depend on it.
    pub workers: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            snr_grid: snr_range(16.0, 30.0, 2.0).expect("static grid"),
            trials: 10_000,
            n_samples: 100,
            f: 2e9,
            f_prime: 2e9 - 50e6,
            distance: Distance::Wavelengths(50.0),
            d_max: Distance::Wavelengths(100.0),
            seed: 1,
            variants: Variant::ALL.into_iter().collect(),
            workers: None,
        }
    }
}

/// Inclusive grid `min, min + step, …, ≤ max`.
pub fn snr_range(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(min.is_finite() && max.is_finite() && step.is_finite()) || step <= 0.0 || max < min {
        return Err(Error::usage(format!(
            "invalid SNR range min={min} max={max} step={step}"
        )));
    }
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| min + step * i as f64).collect())
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snr_grid.is_empty() {
            return Err(Error::usage("SNR grid is empty"));
        }
        if self.snr_grid.iter().any(|s| s.is_nan()) {
            return Err(Error::usage("SNR grid contains NaN"));
        }
        if self.snr_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::usage("SNR grid must be strictly increasing"));
        }
        if self.trials == 0 {
            return Err(Error::usage("trials must be >= 1"));
        }
        if self.n_samples == 0 {
            return Err(Error::usage("samples must be >= 1"));
        }
        if !(self.f_prime > 0.0 && self.f_prime < self.f && self.f.is_finite()) {
            return Err(Error::usage(format!(
                "need 0 < f' < f, got f = {}, f' = {}",
                self.f, self.f_prime
            )));
        }
        let distance = self.distance.meters(self.f);
        let d_max = self.d_max.meters(self.f);
        if !(distance >= 0.0 && distance.is_finite()) {
            return Err(Error::usage(format!("invalid distance {distance} m")));
        }
        if !(d_max > 0.0 && d_max >= distance) {
            return Err(Error::usage(format!(
                "search bound {d_max} m must be positive and cover the {distance} m link"
            )));
        }
        if self.variants.is_empty() {
            return Err(Error::usage("no estimator variants selected"));
        }
        if self.workers == Some(0) {
            return Err(Error::usage("workers must be >= 1"));
        }
        Ok(())
    }

    pub fn bounds(&self) -> Result<SearchBounds> {
        build_bounds(self.d_max.meters(self.f), self.f, self.f_prime)
    }
}

/// Aggregate for one SNR point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub snr_db: f64,
    pub rmse_deg: BTreeMap<Variant, f64>,
    /// Fraction of trials where the ambiguity resolution picked the wrong
    /// branch (or failed), measured on the three-measurement estimator when
    /// selected, otherwise the four-measurement one; zero for genie-only sweeps.
    pub branch_error_rate: f64,
}

struct TrialOutcome {
    errors: [Option<f64>; 3],
    branch_wrong: Option<bool>,
}

const SCENE_STREAM: u64 = 0x0053_4345_4e45; // "SCENE"

fn variant_slot(v: Variant) -> usize {
    match v {
        Variant::ThreeMeas => 0,
        Variant::FourMeas => 1,
        Variant::Genie => 2,
    }
}

/// Runs one estimator; ambiguity failures fall back to case (i) and count as
/// wrong-branch trials.
fn resolve(
    obs: &DualFrequencyObservation,
    cfg: &SweepConfig,
    bounds: &SearchBounds,
    options: &DualFreqOptions,
    truth: Phase,
) -> Result<(f64, bool)> {
    match align_f_f_dual_freq_with(obs, cfg.f, cfg.f_prime, bounds, options) {
        Ok(res) => {
            let wrong = res.branch != Branch::of(truth, &obs.pair());
            Ok(((res.c_diff - truth).signed(), wrong))
        }
        Err(Error::AmbiguityFailure { .. }) => {
            let c_i = Phase::new((obs.ba.d.radians() - obs.ab.d.radians()) / 2.0);
            Ok(((c_i - truth).signed(), true))
        }
        Err(e) => Err(e),
    }
}

fn run_trial(
    cfg: &SweepConfig,
    bounds: &SearchBounds,
    delay: f64,
    snr_db: f64,
    trial_key: u64,
) -> Result<TrialOutcome> {
    let mut scene_rng = ChaCha8Rng::seed_from_u64(derive_key(cfg.seed, &[SCENE_STREAM, trial_key]));
    let c_a = Phase::new(scene_rng.random_range(0.0..std::f64::consts::TAU));
    let c_b = Phase::new(scene_rng.random_range(0.0..std::f64::consts::TAU));
    let truth = c_a - c_b;

    let mcfg = MeasurementConfig::new(snr_db, cfg.n_samples, cfg.seed)?;
    let probe = DualFrequencyProbe::new(
        cfg.f,
        cfg.f_prime,
        cfg.variants.contains(&Variant::FourMeas),
    )?;
    let obs = measure_dual_frequency(
        &AntennaHardware::uniform(c_a),
        &AntennaHardware::uniform(c_b),
        crate::calibrators::PANEL_IDS,
        delay,
        &probe,
        &mcfg,
        trial_key,
    )?;

    let mut errors = [None; 3];
    let mut branch_wrong = None;
    for &v in &cfg.variants {
        let err = match v {
            Variant::ThreeMeas => {
                let opts = DualFreqOptions {
                    coarse: CoarseDelaySource::Ba,
                    average_fourth: false,
                };
                let (e, wrong) = resolve(&obs, cfg, bounds, &opts, truth)?;
                branch_wrong = Some(wrong);
                e
            }
            Variant::FourMeas => {
                let opts = DualFreqOptions {
                    coarse: CoarseDelaySource::Mean,
                    average_fourth: true,
                };
                let (e, wrong) = resolve(&obs, cfg, bounds, &opts, truth)?;
                if branch_wrong.is_none() {
                    branch_wrong = Some(wrong);
                }
                e
            }
            Variant::Genie => (align_f_f_genie_bidirectional(&obs.pair(), delay) - truth).signed(),
        };
        errors[variant_slot(v)] = Some(err);
    }
    Ok(TrialOutcome {
        errors,
        branch_wrong,
    })
}

/// Monte-Carlo RMSE of `c_A − c_B` against SNR for each selected estimator.
///
/// Each trial draws fresh `c_A`, `c_B` uniformly and its own measurement
/// streams from `(seed, snr index, trial)`. Per-trial results are collected
/// in trial order and reduced sequentially, so the output is identical for
/// any worker count.
pub fn run_rmse_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let bounds = cfg.bounds()?;
    let delay = delay_radians(cfg.distance.meters(cfg.f), cfg.f)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::usage(format!("cannot start worker pool: {e}")))?;

    let mut rows = Vec::with_capacity(cfg.snr_grid.len());
    for (si, &snr_db) in cfg.snr_grid.iter().enumerate() {
        let outcomes: Vec<TrialOutcome> = pool.install(|| {
            (0..cfg.trials)
                .into_par_iter()
                .map(|k| run_trial(cfg, &bounds, delay, snr_db, ((si as u64) << 32) | k as u64))
                .collect::<Result<Vec<_>>>()
        })?;

        let mut rmse_deg = BTreeMap::new();
        for &v in &cfg.variants {
            let errs: Vec<f64> = outcomes
                .iter()
                .filter_map(|o| o.errors[variant_slot(v)])
                .collect();
            rmse_deg.insert(v, circular_rmse(&errs)?);
        }
        let wrong = outcomes
            .iter()
            .filter(|o| o.branch_wrong == Some(true))
            .count();
        rows.push(SweepRow {
            snr_db,
            rmse_deg,
            branch_error_rate: wrong as f64 / cfg.trials as f64,
        });
    }
    Ok(rows)
}
