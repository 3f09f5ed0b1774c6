//! Noisy over-the-air one-way phase observations.
//!
//! A transmitter sends a carrier at local phase 0; the receiver reports the
//! local phase `r_rx − t_tx + T` at which it sees the signal. Noise is added
//! to each of `n_samples` unit carrier samples as circularly-symmetric complex
//! Gaussian noise with per-sample variance `10^{−SNR/10}`; the samples are
//! coherently averaged and the phase of the mean is the observation.
//!
//! Every record draws from its own random stream keyed by
//! `(seed, tx, rx, frequency, trial)`, so trials can be generated in any order
//! or in parallel and still reproduce bit for bit.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::array::{AntennaHardware, AntennaId};
use crate::error::{Error, Result};
use crate::phase::{coherent_average, Phase, UnitSample};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementConfig {
    /// Per-sample SNR in dB; `+∞` is noiseless, `−∞` is pure noise.
    pub snr_db: f64,
    /// Coherent-averaging depth.
    pub n_samples: usize,
    pub seed: u64,
}

impl MeasurementConfig {
    pub fn new(snr_db: f64, n_samples: usize, seed: u64) -> Result<Self> {
        if snr_db.is_nan() {
            return Err(Error::domain("SNR must not be NaN"));
        }
        if n_samples == 0 {
            return Err(Error::domain("n_samples must be >= 1"));
        }
        Ok(MeasurementConfig {
            snr_db,
            n_samples,
            seed,
        })
    }

    pub fn noiseless(seed: u64) -> Self {
        MeasurementConfig {
            snr_db: f64::INFINITY,
            n_samples: 1,
            seed,
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.snr_db == f64::INFINITY
    }

    /// Complex noise variance per carrier sample.
    pub fn noise_variance(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }

    /// High-SNR approximation of the std of one averaged observation, radians.
    pub fn predicted_phase_std(&self) -> f64 {
        (self.noise_variance() / (2.0 * self.n_samples as f64)).sqrt()
    }
}

/// Direction and carrier of a one-way probe.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub tx: AntennaId,
    pub rx: AntennaId,
    pub frequency: f64,
}

/// One noisy one-way observation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub tx: AntennaId,
    pub rx: AntennaId,
    pub frequency: f64,
    pub d: Phase,
    /// Magnitude of the averaged carrier; small values mean the phase is unreliable.
    pub magnitude: f64,
}

impl MeasurementRecord {
    /// A record with a known phase, e.g. replayed from logs.
    pub fn exact(tx: AntennaId, rx: AntennaId, frequency: f64, d: Phase) -> Self {
        MeasurementRecord {
            tx,
            rx,
            frequency,
            d,
            magnitude: 1.0,
        }
    }

    pub fn is_low_magnitude(&self, threshold: f64) -> bool {
        self.magnitude < threshold
    }
}

/// `r_rx − t_tx + T`.
pub fn noiseless_one_way(tx: &AntennaHardware, rx: &AntennaHardware, delay: f64) -> Phase {
    rx.r - tx.t + delay
}

/// `t_a − t_b + r_a − r_b`: what a bidirectional pair reveals about `a` and `b`.
pub fn reciprocity_quantity(a: &AntennaHardware, b: &AntennaHardware) -> Phase {
    a.t - b.t + a.r - b.r
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit key from a seed and a sequence of words.
pub fn derive_key(seed: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(splitmix64(seed), |h, &w| splitmix64(h ^ w))
}

/// The random stream owned by one record.
pub fn stream_rng(seed: u64, link: &Link, trial: u64) -> ChaCha8Rng {
    let key = derive_key(
        seed,
        &[
            link.tx.0 as u64,
            link.rx.0 as u64,
            link.frequency.to_bits(),
            trial,
        ],
    );
    ChaCha8Rng::seed_from_u64(key)
}

/// Simulates one noisy one-way phase observation over a link of delay `delay`
/// (unwrapped radians at `link.frequency`).
pub fn measure_one_way(
    tx: &AntennaHardware,
    rx: &AntennaHardware,
    delay: f64,
    link: Link,
    cfg: &MeasurementConfig,
    trial: u64,
) -> Result<MeasurementRecord> {
    if !delay.is_finite() || delay < 0.0 {
        return Err(Error::domain(format!("delay must be >= 0, got {delay}")));
    }
    let truth = noiseless_one_way(tx, rx, delay);
    let (d, magnitude) = if cfg.is_noiseless() {
        (truth, 1.0)
    } else {
        let mut rng = stream_rng(cfg.seed, &link, trial);
        noisy_phase(truth, cfg, &mut rng)
    };
    Ok(MeasurementRecord {
        tx: link.tx,
        rx: link.rx,
        frequency: link.frequency,
        d,
        magnitude,
    })
}

fn noisy_phase<R: Rng>(truth: Phase, cfg: &MeasurementConfig, rng: &mut R) -> (Phase, f64) {
    if cfg.snr_db == f64::NEG_INFINITY {
        return (Phase::new(rng.random_range(0.0..TAU)), 0.0);
    }
    let sigma = (cfg.noise_variance() / 2.0).sqrt();
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let carrier = truth.phasor();
    let samples: Vec<UnitSample> = (0..cfg.n_samples)
        .map(|_| carrier + Complex64::new(normal.sample(rng), normal.sample(rng)))
        .collect();
    let avg = coherent_average(&samples).expect("n_samples >= 1");
    // A mean of exactly zero has no phase; report 0 and let the magnitude flag it.
    let d = avg.phase().unwrap_or(Phase::ZERO);
    (d, avg.magnitude())
}

/// Forward and reverse observations over one link.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BidirectionalPair {
    /// `a → b`.
    pub ab: MeasurementRecord,
    /// `b → a`.
    pub ba: MeasurementRecord,
}

impl BidirectionalPair {
    pub fn new(ab: MeasurementRecord, ba: MeasurementRecord) -> Result<Self> {
        if ab.tx != ba.rx || ab.rx != ba.tx {
            return Err(Error::usage(format!(
                "records {:?}->{:?} and {:?}->{:?} are not opposite directions of one link",
                ab.tx, ab.rx, ba.tx, ba.rx
            )));
        }
        Ok(BidirectionalPair { ab, ba })
    }

    pub fn a(&self) -> AntennaId {
        self.ab.tx
    }

    pub fn b(&self) -> AntennaId {
        self.ab.rx
    }

    /// `d_ba − d_ab = t_a − t_b + r_a − r_b`.
    pub fn reciprocity_difference(&self) -> Phase {
        self.ba.d - self.ab.d
    }
}

/// Two independent one-way measurements sharing the same delay.
#[allow(clippy::too_many_arguments)]
pub fn measure_bidirectional(
    a: &AntennaHardware,
    b: &AntennaHardware,
    ids: (AntennaId, AntennaId),
    delay: f64,
    frequency: f64,
    cfg: &MeasurementConfig,
    trial: u64,
) -> Result<BidirectionalPair> {
    let (ia, ib) = ids;
    let ab = measure_one_way(
        a,
        b,
        delay,
        Link {
            tx: ia,
            rx: ib,
            frequency,
        },
        cfg,
        trial,
    )?;
    let ba = measure_one_way(
        b,
        a,
        delay,
        Link {
            tx: ib,
            rx: ia,
            frequency,
        },
        cfg,
        trial,
    )?;
    Ok(BidirectionalPair { ab, ba })
}

/// Carriers used by the two-frequency alignment probe.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualFrequencyProbe {
    pub f: f64,
    pub f_prime: f64,
    /// Also measure `A → B` at `f'`.
    pub include_fourth: bool,
}

impl DualFrequencyProbe {
    pub fn new(f: f64, f_prime: f64, include_fourth: bool) -> Result<Self> {
        if !(f.is_finite() && f_prime > 0.0 && f_prime < f) {
            return Err(Error::domain(format!(
                "dual-frequency probing needs 0 < f' < f, got f = {f}, f' = {f_prime}"
            )));
        }
        Ok(DualFrequencyProbe {
            f,
            f_prime,
            include_fourth,
        })
    }

    pub fn ratio(&self) -> f64 {
        self.f_prime / self.f
    }
}

/// Observations between two compensated panels at `f` and `f'`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualFrequencyObservation {
    pub ab: MeasurementRecord,
    pub ba: MeasurementRecord,
    pub ba_prime: MeasurementRecord,
    pub ab_prime: Option<MeasurementRecord>,
}

impl DualFrequencyObservation {
    /// The bidirectional pair at `f`.
    pub fn pair(&self) -> BidirectionalPair {
        BidirectionalPair {
            ab: self.ab,
            ba: self.ba,
        }
    }
}

/// Bidirectional probe at `f`, `B → A` at `f'`, and optionally `A → B` at `f'`.
///
/// `a` and `b` are the effective offsets of one antenna on each panel; for
/// compensated F-calibrated panels these are `t = r = c_A` and `t = r = c_B`.
pub fn measure_dual_frequency(
    a: &AntennaHardware,
    b: &AntennaHardware,
    ids: (AntennaId, AntennaId),
    delay_at_f: f64,
    probe: &DualFrequencyProbe,
    cfg: &MeasurementConfig,
    trial: u64,
) -> Result<DualFrequencyObservation> {
    let probe = DualFrequencyProbe::new(probe.f, probe.f_prime, probe.include_fourth)?;
    let (ia, ib) = ids;
    let delay_prime = crate::array::scaled_delay(delay_at_f, probe.f, probe.f_prime);
    let pair = measure_bidirectional(a, b, ids, delay_at_f, probe.f, cfg, trial)?;
    let ba_prime = measure_one_way(
        b,
        a,
        delay_prime,
        Link {
            tx: ib,
            rx: ia,
            frequency: probe.f_prime,
        },
        cfg,
        trial,
    )?;
    let ab_prime = if probe.include_fourth {
        Some(measure_one_way(
            a,
            b,
            delay_prime,
            Link {
                tx: ia,
                rx: ib,
                frequency: probe.f_prime,
            },
            cfg,
            trial,
        )?)
    } else {
        None
    };
    Ok(DualFrequencyObservation {
        ab: pair.ab,
        ba: pair.ba,
        ba_prime,
        ab_prime,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::circular_mean;
    use std::f64::consts::PI;

    const F: f64 = 2e9;

    fn link(tx: usize, rx: usize) -> Link {
        Link {
            tx: AntennaId(tx),
            rx: AntennaId(rx),
            frequency: F,
        }
    }

    fn hw(t: f64, r: f64) -> AntennaHardware {
        AntennaHardware::new(Phase::new(t), Phase::new(r))
    }

    #[test]
    fn noiseless_examples() {
        let cfg = MeasurementConfig::noiseless(0);
        let d = measure_one_way(&hw(0.0, 0.0), &hw(0.0, 0.0), 1.3, link(0, 1), &cfg, 0).unwrap();
        assert!((d.d.radians() - 1.3).abs() < 1e-12);
        let d =
            measure_one_way(&hw(0.4, 0.0), &hw(0.0, 0.9), TAU + 0.2, link(0, 1), &cfg, 0).unwrap();
        assert!((d.d.radians() - 0.7).abs() < 1e-12);
        assert!(measure_one_way(&hw(0.0, 0.0), &hw(0.0, 0.0), -1.0, link(0, 1), &cfg, 0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(MeasurementConfig::new(20.0, 0, 1).is_err());
        assert!(MeasurementConfig::new(f64::NAN, 1, 1).is_err());
        assert!(MeasurementConfig::new(f64::NEG_INFINITY, 1, 1).is_ok());
    }

    #[test]
    fn pure_noise_gives_some_phase() {
        let cfg = MeasurementConfig::new(f64::NEG_INFINITY, 10, 1).unwrap();
        let d = measure_one_way(&hw(0.0, 0.0), &hw(0.0, 0.0), 1.0, link(0, 1), &cfg, 0).unwrap();
        assert!(d.is_low_magnitude(0.5));
    }

    #[test]
    fn bidirectional_examples() {
        let cfg = MeasurementConfig::noiseless(0);
        let a = hw(0.3, 1.2);
        let p =
            measure_bidirectional(&a, &a, (AntennaId(0), AntennaId(1)), 7.7, F, &cfg, 0).unwrap();
        assert!(p.ab.d.distance(p.ba.d) < 1e-12);

        let (a, b) = (hw(0.3, 1.2), hw(2.5, 4.0));
        let t = 31.4;
        let p = measure_bidirectional(&a, &b, (AntennaId(0), AntennaId(1)), t, F, &cfg, 0).unwrap();
        let expect = Phase::new(0.3 - 2.5 + 1.2 - 4.0);
        assert!(p.reciprocity_difference().distance(expect) < 1e-12);
        assert!(
            p.reciprocity_difference()
                .distance(reciprocity_quantity(&a, &b))
                < 1e-12
        );
        let sum = p.ab.d + p.ba.d;
        assert!(sum.distance(Phase::new(1.2 + 4.0 - 0.3 - 2.5 + 2.0 * t)) < 1e-12);
    }

    #[test]
    fn pair_validation() {
        let r = |tx, rx| MeasurementRecord::exact(AntennaId(tx), AntennaId(rx), F, Phase::ZERO);
        assert!(BidirectionalPair::new(r(0, 1), r(1, 0)).is_ok());
        assert!(BidirectionalPair::new(r(0, 1), r(0, 1)).is_err());
    }

    #[test]
    fn dual_frequency_noiseless() {
        let cfg = MeasurementConfig::noiseless(0);
        let ids = (AntennaId(0), AntennaId(1));
        let probe = DualFrequencyProbe::new(F, F - 50e6, true).unwrap();

        let c = AntennaHardware::uniform(Phase::new(0.8));
        let obs = measure_dual_frequency(&c, &c, ids, 9.0, &probe, &cfg, 0).unwrap();
        assert!(obs.ab.d.distance(Phase::new(9.0)) < 1e-12);
        assert!(obs.ba.d.distance(Phase::new(9.0)) < 1e-12);

        let (ca, cb) = (1.9, 5.2);
        let t = 100.0 * PI;
        let (a, b) = (
            AntennaHardware::uniform(Phase::new(ca)),
            AntennaHardware::uniform(Phase::new(cb)),
        );
        let obs = measure_dual_frequency(&a, &b, ids, t, &probe, &cfg, 0).unwrap();
        let tp = 0.975 * t;
        assert!(obs.ab.d.distance(Phase::new(cb - ca + t)) < 1e-12);
        assert!(obs.ba.d.distance(Phase::new(ca - cb + t)) < 1e-12);
        assert!(obs.ba_prime.d.distance(Phase::new(ca - cb + tp)) < 1e-12);
        assert!(obs.ab_prime.unwrap().d.distance(Phase::new(cb - ca + tp)) < 1e-12);
        assert!((obs.ba.d - obs.ba_prime.d).distance(Phase::new(0.025 * t)) < 1e-9);

        let bad = DualFrequencyProbe {
            f: F,
            f_prime: F,
            include_fourth: false,
        };
        assert!(measure_dual_frequency(&a, &b, ids, t, &bad, &cfg, 0).is_err());
        assert!(DualFrequencyProbe::new(F, F + 1.0, false).is_err());
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let cfg = MeasurementConfig::new(10.0, 4, 42).unwrap();
        let m = |l: Link, trial| {
            measure_one_way(&hw(0.0, 0.0), &hw(0.0, 0.0), 1.0, l, &cfg, trial)
                .unwrap()
                .d
        };
        assert_eq!(m(link(0, 1), 3), m(link(0, 1), 3));
        assert_ne!(m(link(0, 1), 3), m(link(1, 0), 3));
        assert_ne!(m(link(0, 1), 3), m(link(0, 1), 4));
    }

    fn errors(snr_db: f64, n: usize, trials: u64, seed: u64) -> Vec<f64> {
        let cfg = MeasurementConfig::new(snr_db, n, seed).unwrap();
        let (a, b) = (hw(0.2, 1.0), hw(3.0, 0.5));
        let truth = noiseless_one_way(&a, &b, 4.0);
        (0..trials)
            .map(|k| {
                let d = measure_one_way(&a, &b, 4.0, link(0, 1), &cfg, k).unwrap().d;
                (d - truth).signed()
            })
            .collect()
    }

    fn variance(e: &[f64]) -> f64 {
        let m = e.iter().sum::<f64>() / e.len() as f64;
        e.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (e.len() - 1) as f64
    }

    // Oracle: empirical std over 1e5 independent trials.
    #[test]
    fn averaged_phase_std_matches_prediction() {
        let e = errors(30.0, 100, 100_000, 1);
        let std = variance(&e).sqrt();
        let predicted = (1e-3f64 / 2.0).sqrt() / 10.0;
        assert!(
            (std / predicted - 1.0).abs() < 0.02,
            "std {std} vs {predicted}"
        );
    }

    #[test]
    fn noise_is_unbiased() {
        let cfg = MeasurementConfig::new(10.0, 10, 2).unwrap();
        let (a, b) = (hw(0.2, 1.0), hw(3.0, 0.5));
        let truth = noiseless_one_way(&a, &b, 4.0);
        let trials = 100_000;
        let mean = circular_mean(
            (0..trials).map(|k| measure_one_way(&a, &b, 4.0, link(0, 1), &cfg, k).unwrap().d),
        )
        .unwrap();
        let se = cfg.predicted_phase_std() / (trials as f64).sqrt();
        assert!(
            mean.distance(truth) < 3.0 * se,
            "bias {} vs se {se}",
            mean.distance(truth)
        );
    }

    #[test]
    fn doubling_samples_halves_variance() {
        for (n, snr) in [(5, 10.0), (50, 20.0)] {
            let v1 = variance(&errors(snr, n, 100_000, 3));
            let v2 = variance(&errors(snr, 2 * n, 100_000, 4));
            let ratio = v1 / v2;
            assert!((ratio - 2.0).abs() < 0.2, "n={n}: ratio {ratio}");
        }
    }

    #[test]
    fn directions_are_uncorrelated() {
        let cfg = MeasurementConfig::new(15.0, 20, 5).unwrap();
        let (a, b) = (hw(0.2, 1.0), hw(3.0, 0.5));
        let (tab, tba) = (
            noiseless_one_way(&a, &b, 4.0),
            noiseless_one_way(&b, &a, 4.0),
        );
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for k in 0..100_000 {
            let p = measure_bidirectional(&a, &b, (AntennaId(0), AntennaId(1)), 4.0, F, &cfg, k)
                .unwrap();
            xs.push((p.ab.d - tab).signed());
            ys.push((p.ba.d - tba).signed());
        }
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let corr = cov / (variance(&xs) * variance(&ys)).sqrt() / (xs.len() - 1) as f64;
        assert!(corr.abs() < 0.01, "corr {corr}");
    }
}
