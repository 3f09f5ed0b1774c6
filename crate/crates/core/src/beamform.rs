//! Reciprocity-based downlink beamforming, simulated end to end, and
//! executable checks of common calibration misconceptions.
//!
//! The user sends an uplink pilot at local phase 0; antenna `A_i` sees it at
//! local phase `r_i + T_i − t_u`. On downlink `A_i` transmits at the negated
//! observed phase plus a precompensation term, and the user receives each
//! contribution at local phase `−t_i − r_i + t_u + r_u + precomp_i`. The
//! propagation delays cancel, and the contributions add coherently exactly
//! when `precomp_i = t_i + r_i + c` for a common `c`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{apply_oscillator_drift, AntennaHardware, AntennaId, Scene};
use crate::calibrators::{r_calibrate_pairwise, RCalibration};
use crate::error::{Error, Result};
use crate::measurement::{
    measure_bidirectional, measure_one_way, noiseless_one_way, BidirectionalPair, Link,
    MeasurementConfig,
};
use crate::phase::{circular_mean, Phase};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamformingOutcome {
    /// Local phase at the user of each antenna's contribution.
    pub per_antenna_user_phase: Vec<Phase>,
    /// `|mean_i e^{j·phase_i}|`, in `[0, 1]`.
    pub coherent_gain: f64,
    /// Phase of the combined signal at the user.
    pub residual_rotation: Phase,
}

impl BeamformingOutcome {
    pub fn from_user_phases(phases: Vec<Phase>) -> Self {
        let sum: Complex64 = phases.iter().map(|p| p.phasor()).sum();
        let mean = sum / phases.len().max(1) as f64;
        BeamformingOutcome {
            coherent_gain: mean.norm(),
            residual_rotation: Phase::from_complex(mean).unwrap_or(Phase::ZERO),
            per_antenna_user_phase: phases,
        }
    }
}

fn user_of(scene: &Scene) -> Result<AntennaHardware> {
    scene
        .user
        .as_ref()
        .map(|u| u.hardware)
        .ok_or_else(|| Error::usage("scene has no user"))
}

/// Noiseless uplink pilot phases observed at every antenna.
pub fn uplink_pilot(scene: &Scene) -> Result<Vec<Phase>> {
    let user = user_of(scene)?;
    let delays = scene.user_delays(scene.f())?;
    Ok(scene
        .effective_offsets()
        .iter()
        .zip(delays)
        .map(|(hw, t)| noiseless_one_way(&user, hw, t))
        .collect())
}

/// Uplink pilot through the measurement simulator. The user transmits as
/// antenna id `antenna_count`.
pub fn uplink_pilot_noisy(
    scene: &Scene,
    cfg: &MeasurementConfig,
    trial: u64,
) -> Result<Vec<Phase>> {
    let user = user_of(scene)?;
    let delays = scene.user_delays(scene.f())?;
    let user_id = AntennaId(scene.antenna_count());
    scene
        .effective_offsets()
        .iter()
        .zip(delays)
        .enumerate()
        .map(|(i, (hw, t))| {
            let link = Link {
                tx: user_id,
                rx: AntennaId(i),
                frequency: scene.f(),
            };
            measure_one_way(&user, hw, t, link, cfg, trial).map(|r| r.d)
        })
        .collect()
}

/// Transmits the conjugated pilot plus `precomp` from every antenna and
/// evaluates what the user receives.
pub fn conjugate_downlink(
    observed: &[Phase],
    precomp: &[Phase],
    scene: &Scene,
) -> Result<BeamformingOutcome> {
    let user = user_of(scene)?;
    let offsets = scene.effective_offsets();
    if observed.len() != offsets.len() || precomp.len() != offsets.len() {
        return Err(Error::usage(format!(
            "{} antennas but {} pilot phases and {} precompensation terms",
            offsets.len(),
            observed.len(),
            precomp.len()
        )));
    }
    let delays = scene.user_delays(scene.f())?;
    let phases = offsets
        .iter()
        .zip(&delays)
        .zip(observed.iter().zip(precomp))
        .map(|((hw, &t), (&obs, &pre))| {
            // Local transmit phase -obs + pre is global -obs + pre - t_i; it
            // arrives T_i later and the user's receiver adds r_u.
            let local_tx = pre - obs;
            local_tx - hw.t + t + user.r
        })
        .collect();
    Ok(BeamformingOutcome::from_user_phases(phases))
}

/// Correct precompensation `t_i + r_i + c`, from simulator truth.
pub fn reciprocity_precompensation(scene: &Scene, c: Phase) -> Vec<Phase> {
    scene
        .effective_offsets()
        .iter()
        .map(|hw| hw.reciprocity_sum() + c)
        .collect()
}

/// The `t_i − r_i` precompensation sometimes proposed instead.
pub fn transmit_receive_difference_precompensation(scene: &Scene) -> Vec<Phase> {
    scene
        .effective_offsets()
        .iter()
        .map(|hw| hw.t - hw.r)
        .collect()
}

/// Precompensation for an array jointly R-calibrated with its user, where the
/// user sits at index `user_index` of `joint`. The user then sees no residual
/// rotation at all.
pub fn joint_user_precompensation(joint: &RCalibration, user_index: usize) -> Vec<Phase> {
    (0..joint.len())
        .filter(|&i| i != user_index)
        .map(|i| joint.rho[i] - joint.rho[user_index])
        .collect()
}

/// Star-graph R-calibration of every antenna in the scene, rooted at the
/// first antenna,
/// with inter-antenna delays from geometry.
pub fn r_calibrate_scene(
    scene: &Scene,
    cfg: &MeasurementConfig,
    trial: u64,
) -> Result<RCalibration> {
    let offsets = scene.effective_offsets();
    let n = offsets.len();
    let mut index = Vec::with_capacity(n);
    for (p, panel) in scene.panels.iter().enumerate() {
        index.extend((0..panel.len()).map(|i| (p, i)));
    }
    let pairs = (1..n)
        .map(|j| {
            let (pa, ia) = index[0];
            let (pb, ib) = index[j];
            let t = scene.delay(pa, ia, pb, ib, scene.f())?;
            measure_bidirectional(
                &offsets[0],
                &offsets[j],
                (AntennaId(0), AntennaId(j)),
                t,
                scene.f(),
                cfg,
                trial,
            )
        })
        .collect::<Result<Vec<BidirectionalPair>>>()?;
    r_calibrate_pairwise(n, &pairs)
}

/// R-calibrates the array, drifts antenna `antenna` (flat index) by `phi`,
/// then beamforms with the stale calibration. Returns how far the drifted
/// antenna's contribution lags the others at the user.
pub fn myth4_drift_experiment(scene: &Scene, antenna: usize, phi: Phase) -> Result<Phase> {
    let n = scene.antenna_count();
    if n < 2 {
        return Err(Error::usage("drift experiment needs at least two antennas"));
    }
    if antenna >= n {
        return Err(Error::usage(format!(
            "antenna {antenna} out of range ({n} antennas)"
        )));
    }
    let stale = r_calibrate_scene(scene, &MeasurementConfig::noiseless(0), 0)?;

    let mut drifted = scene.clone();
    let (mut p, mut i) = (0, antenna);
    while i >= drifted.panels[p].len() {
        i -= drifted.panels[p].len();
        p += 1;
    }
    let hw = drifted.panels[p].hardware()[i];
    drifted.panels[p].hardware_mut()[i] = apply_oscillator_drift(hw, phi);

    let pilot = uplink_pilot(&drifted)?;
    let outcome = conjugate_downlink(&pilot, &stale.precompensation(), &drifted)?;
    let phases = &outcome.per_antenna_user_phase;
    let rest = circular_mean(
        phases
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != antenna)
            .map(|(_, &p)| p),
    )
    .ok_or_else(|| Error::usage("remaining antennas cancel out"))?;
    Ok(rest - phases[antenna])
}

/// What happened to a link between two bidirectional probes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkEvent {
    /// Both directions moved by the same amount: the path length changed.
    Aging,
    /// Directions moved oppositely: an oscillator at one end stepped.
    Drift,
    Neither,
}

/// Default tolerance: four standard deviations of the sum/difference
/// statistics, each built from four observations.
pub fn myth5_tolerance(cfg: &MeasurementConfig) -> f64 {
    (4.0 * 2.0 * cfg.predicted_phase_std()).max(1e-9)
}

/// Tells aging from oscillator drift using two probes of the same link.
pub fn myth5_discriminator(
    before: &BidirectionalPair,
    after: &BidirectionalPair,
    tolerance: f64,
) -> LinkEvent {
    let d_ab = (after.ab.d - before.ab.d).signed();
    let d_ba = (after.ba.d - before.ba.d).signed();
    let common = Phase::new(d_ab + d_ba).signed().abs();
    let opposite = Phase::new(d_ba - d_ab).signed().abs();
    match (common > tolerance, opposite > tolerance) {
        (true, false) => LinkEvent::Aging,
        (false, true) => LinkEvent::Drift,
        _ => LinkEvent::Neither,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{apply_aging, Panel, User};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    const F: f64 = 2e9;

    fn scene(rng: &mut ChaCha8Rng, n: usize) -> Scene {
        let panel = Panel::random_linear(rng, n, [0.0; 3], 0.075).unwrap();
        let user = User {
            hardware: AntennaHardware::random(rng),
            position: [
                rng.random_range(-50.0..50.0),
                rng.random_range(5.0..50.0),
                rng.random_range(-5.0..5.0),
            ],
        };
        Scene::new(vec![panel], F, F - 50e6)
            .unwrap()
            .with_user(user)
    }

    #[test]
    fn pilot_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = scene(&mut rng, 4);
        for hw in s.panels[0].hardware_mut() {
            hw.r = Phase::ZERO;
        }
        s.user.as_mut().unwrap().hardware.t = Phase::ZERO;
        let delays = s.user_delays(F).unwrap();
        for (p, t) in uplink_pilot(&s).unwrap().iter().zip(&delays) {
            assert!(p.distance(Phase::new(*t)) < 1e-12);
        }

        let s = scene(&mut rng, 4);
        let noiseless = uplink_pilot_noisy(&s, &MeasurementConfig::noiseless(0), 0).unwrap();
        let user = s.user.unwrap().hardware;
        let delays = s.user_delays(F).unwrap();
        for (i, hw) in s.effective_offsets().iter().enumerate() {
            let expect = Phase::new(hw.r.radians() + delays[i] - user.t.radians());
            assert!(uplink_pilot(&s).unwrap()[i].distance(expect) < 1e-12);
            assert!(noiseless[i].distance(expect) < 1e-12);
        }
        let no_user = Scene::new(s.panels.clone(), F, F / 2.0).unwrap();
        assert!(matches!(uplink_pilot(&no_user), Err(Error::Usage(_))));
    }

    #[test]
    fn correct_precompensation_is_coherent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let n = rng.random_range(1..10);
            let s = scene(&mut rng, n);
            let c = Phase::new(rng.random_range(0.0..TAU));
            let out = conjugate_downlink(
                &uplink_pilot(&s).unwrap(),
                &reciprocity_precompensation(&s, c),
                &s,
            )
            .unwrap();
            assert!((out.coherent_gain - 1.0).abs() < 1e-9);
            let user = s.user.unwrap().hardware;
            let expect = user.t + user.r + c;
            assert!(out.residual_rotation.distance(expect) < 1e-9);
        }
    }

    #[test]
    fn difference_precompensation_misaligns() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = scene(&mut rng, 6);
        let out = conjugate_downlink(
            &uplink_pilot(&s).unwrap(),
            &transmit_receive_difference_precompensation(&s),
            &s,
        )
        .unwrap();
        assert!(out.coherent_gain < 0.999);
        // Each contribution lands at t_u + r_u - 2 r_i.
        let user = s.user.unwrap().hardware;
        for (p, hw) in out.per_antenna_user_phase.iter().zip(s.effective_offsets()) {
            assert!(p.distance(user.t + user.r - hw.r - hw.r) < 1e-9);
        }
    }

    // Oracle: |e^{j0} + e^{jΔ}| / 2 = |cos(Δ/2)|.
    #[test]
    fn two_antenna_mismatch_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let s = scene(&mut rng, 2);
            let delta = rng.random_range(-PI..PI);
            let mut pre = reciprocity_precompensation(&s, Phase::ZERO);
            pre[1] = pre[1] + delta;
            let out = conjugate_downlink(&uplink_pilot(&s).unwrap(), &pre, &s).unwrap();
            assert!((out.coherent_gain - (delta / 2.0).cos().abs()).abs() < 1e-9);
        }
    }

    #[test]
    fn length_mismatch_is_usage_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = scene(&mut rng, 3);
        assert!(conjugate_downlink(&[Phase::ZERO; 2], &[Phase::ZERO; 3], &s).is_err());
    }

    #[test]
    fn user_delays_cancel() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = scene(&mut rng, 5);
        let pre = reciprocity_precompensation(&s, Phase::new(0.4));
        let base = conjugate_downlink(&uplink_pilot(&s).unwrap(), &pre, &s).unwrap();
        for _ in 0..20 {
            let mut moved = s.clone();
            moved.user.as_mut().unwrap().position = [
                rng.random_range(-500.0..500.0),
                rng.random_range(1.0..500.0),
                0.0,
            ];
            let out = conjugate_downlink(&uplink_pilot(&moved).unwrap(), &pre, &moved).unwrap();
            for (a, b) in out
                .per_antenna_user_phase
                .iter()
                .zip(&base.per_antenna_user_phase)
            {
                assert!(a.distance(*b) < 1e-9);
            }
        }
    }

    #[test]
    fn drift_experiment() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = scene(&mut rng, 4);
        assert!(
            myth4_drift_experiment(&s, 2, Phase::ZERO)
                .unwrap()
                .distance(Phase::ZERO)
                < 1e-9
        );
        let dev = myth4_drift_experiment(&s, 1, Phase::new(PI / 2.0)).unwrap();
        assert!(dev.distance(Phase::PI) < 1e-9);
        let dev = myth4_drift_experiment(&s, 0, Phase::new(0.5)).unwrap();
        assert!(dev.distance(Phase::new(1.0)) < 1e-9);
        assert!(myth4_drift_experiment(&s, 9, Phase::ZERO).is_err());
    }

    #[test]
    fn recalibration_after_drift_restores_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut s = scene(&mut rng, 5);
        let hw = s.panels[0].hardware()[3];
        s.panels[0].hardware_mut()[3] = apply_oscillator_drift(hw, Phase::new(1.2));
        let fresh = r_calibrate_scene(&s, &MeasurementConfig::noiseless(0), 0).unwrap();
        let out =
            conjugate_downlink(&uplink_pilot(&s).unwrap(), &fresh.precompensation(), &s).unwrap();
        assert!((out.coherent_gain - 1.0).abs() < 1e-9);
    }

    #[test]
    fn joint_user_calibration_removes_rotation() {
        use crate::calibrators::align_r_r;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let s = scene(&mut rng, 4);
            let cfg = MeasurementConfig::noiseless(0);
            let array = r_calibrate_scene(&s, &cfg, 0).unwrap();
            let user = s.user.unwrap();
            let t = s.user_delays(F).unwrap()[0];
            let pair = measure_bidirectional(
                &s.effective_offsets()[0],
                &user.hardware,
                (AntennaId(0), AntennaId(0)),
                t,
                F,
                &cfg,
                0,
            )
            .unwrap();
            let joint = align_r_r(
                &array,
                &RCalibration::from_truth(&[user.hardware], 0),
                &pair,
            )
            .unwrap();
            let pre = joint_user_precompensation(&joint, 4);
            let out = conjugate_downlink(&uplink_pilot(&s).unwrap(), &pre, &s).unwrap();
            assert!((out.coherent_gain - 1.0).abs() < 1e-9);
            assert!(out.residual_rotation.distance(Phase::ZERO) < 1e-9);
        }
    }

    fn probe(
        a: &AntennaHardware,
        b: &AntennaHardware,
        t: f64,
        cfg: &MeasurementConfig,
        trial: u64,
    ) -> BidirectionalPair {
        measure_bidirectional(a, b, (AntennaId(0), AntennaId(1)), t, F, cfg, trial).unwrap()
    }

    #[test]
    fn discriminator_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let cfg = MeasurementConfig::noiseless(0);
        let tol = myth5_tolerance(&cfg);
        let (a, b) = (
            AntennaHardware::random(&mut rng),
            AntennaHardware::random(&mut rng),
        );
        let t = 40.0;
        let before = probe(&a, &b, t, &cfg, 0);

        let aged = probe(&a, &b, apply_aging(t, 0.3).unwrap(), &cfg, 1);
        assert_eq!(myth5_discriminator(&before, &aged, tol), LinkEvent::Aging);

        let drifted = apply_oscillator_drift(a, Phase::new(0.3));
        let after = probe(&drifted, &b, t, &cfg, 1);
        assert_eq!(myth5_discriminator(&before, &after, tol), LinkEvent::Drift);

        let same = probe(&a, &b, t, &cfg, 1);
        assert_eq!(myth5_discriminator(&before, &same, tol), LinkEvent::Neither);
    }
}
