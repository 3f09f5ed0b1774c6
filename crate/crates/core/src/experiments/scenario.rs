//! Named end-to-end scenarios, each reporting a few pass/fail checks.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::array::{
    apply_aging, apply_compensation, apply_oscillator_drift, wavelength, AntennaHardware,
    AntennaId, Panel, Scene, User,
};
use crate::beamform::{
    conjugate_downlink, joint_user_precompensation, myth4_drift_experiment, myth5_discriminator,
    myth5_tolerance, r_calibrate_scene, transmit_receive_difference_precompensation, uplink_pilot,
    uplink_pilot_noisy, LinkEvent,
};
use crate::calibrators::{
    align_f_f_dual_freq, align_f_f_to_r, align_r_r, build_bounds, f_calibrate_known_coupling,
    Branch, FCalibration, RCalibration, PANEL_IDS,
};
use crate::error::{Error, Result};
use crate::measurement::{
    derive_key, measure_bidirectional, measure_dual_frequency, measure_one_way, DualFrequencyProbe,
    Link, MeasurementConfig,
};
use crate::phase::{wrap_period, Phase};

pub const SCENARIOS: [&str; 9] = [
    "f-cal-3ant",
    "r-cal-pair",
    "align-rr",
    "align-ff-r",
    "align-ff-f",
    "myth3",
    "myth4",
    "myth5",
    "myth6",
];

#[derive(Clone, Debug)]
pub struct ScenarioOptions {
    pub snr_db: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Antennas per panel in the generated scene.
    pub antennas: usize,
    /// Drift or aging step, radians.
    pub phi: f64,
    /// Replaces the generated scene.
    pub scene: Option<Scene>,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        ScenarioOptions {
            snr_db: f64::INFINITY,
            n_samples: 100,
            seed: 1,
            antennas: 4,
            phi: 0.5,
            scene: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub relation: Relation,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, measured: f64, threshold: f64) -> Self {
        Check {
            name: name.to_string(),
            measured,
            relation: Relation::AtMost,
            threshold,
            passed: measured <= threshold,
        }
    }

    fn at_least(name: &str, measured: f64, threshold: f64) -> Self {
        Check {
            name: name.to_string(),
            measured,
            relation: Relation::AtLeast,
            threshold,
            passed: measured >= threshold,
        }
    }

    fn holds(name: &str, ok: bool) -> Self {
        Check::at_least(name, if ok { 1.0 } else { 0.0 }, 1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub scenario: String,
    /// `None` when noiseless.
    pub snr_db: Option<f64>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl fmt::Display for ScenarioReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.snr_db {
            Some(s) => writeln!(f, "scenario {} (SNR {s} dB)", self.scenario)?,
            None => writeln!(f, "scenario {} (noiseless)", self.scenario)?,
        }
        for c in &self.checks {
            let rel = match c.relation {
                Relation::AtMost => "<=",
                Relation::AtLeast => ">=",
            };
            writeln!(
                f,
                "  {} {}: {:.3e} {rel} {:.3e}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.threshold
            )?;
        }
        write!(f, "{}", if self.passed { "PASS" } else { "FAIL" })
    }
}

/// The scene used when none is supplied: two random linear panels at
/// half-wavelength spacing a few metres apart, and a user further out.
pub fn default_scene(antennas: usize, seed: u64) -> Result<Scene> {
    if antennas == 0 {
        return Err(Error::usage("antennas must be >= 1"));
    }
    let f = 2e9;
    let spacing = wavelength(f) / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_key(seed, &[0x4445_4653])); // "DEFS"
    let a = Panel::random_linear(&mut rng, antennas, [0.0, 0.0, 0.0], spacing)?;
    let b = Panel::random_linear(&mut rng, antennas, [3.3, 7.1, 0.4], spacing)?;
    let user = User {
        hardware: AntennaHardware::random(&mut rng),
        position: [
            rng.random_range(-20.0..20.0),
            rng.random_range(20.0..40.0),
            1.5,
        ],
    };
    Ok(Scene::new(vec![a, b], f, f - 50e6)?.with_user(user))
}

struct Ctx {
    scene: Scene,
    cfg: MeasurementConfig,
    phi: f64,
}

impl Ctx {
    /// Error bound for a quantity combining `k` independent measurements:
    /// six standard deviations, or round-off when noiseless.
    fn tol(&self, k: usize) -> f64 {
        6.0 * self.cfg.predicted_phase_std() * (k as f64).sqrt() + 1e-9
    }

    /// Allowed coherent-gain loss. Small phase errors `e_i` cost about
    /// `mean(e_i²) / 2`; this allows ten times that for errors from
    /// a handful of measurements.
    fn gain_tol(&self) -> f64 {
        let s = self.cfg.predicted_phase_std();
        20.0 * s * s + 1e-9
    }

    fn panel(&self, p: usize, min_len: usize) -> Result<&Panel> {
        let panel = self
            .scene
            .panels
            .get(p)
            .ok_or_else(|| Error::usage(format!("scenario needs a panel {p}")))?;
        if panel.len() < min_len {
            return Err(Error::usage(format!(
                "scenario needs at least {min_len} antennas on panel {p}, got {}",
                panel.len()
            )));
        }
        Ok(panel)
    }

    fn single_panel(&self, p: usize) -> Result<Scene> {
        let mut s = Scene::new(
            vec![self.panel(p, 1)?.clone()],
            self.scene.f(),
            self.scene.f_prime(),
        )?;
        s.user = self.scene.user;
        Ok(s)
    }

    /// The first two panels, each F-calibrated from ground truth.
    fn compensated_pair(&self) -> Result<(Panel, Panel)> {
        let a = self.panel(0, 1)?;
        let b = self.panel(1, 1)?;
        Ok((
            apply_compensation(a, &FCalibration::from_truth(&a.effective_offsets(), 0))?,
            apply_compensation(b, &FCalibration::from_truth(&b.effective_offsets(), 0))?,
        ))
    }
}

fn max_error(a: &[Phase], b: &[Phase]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.distance(*y))
        .fold(0.0, f64::max)
}

fn f_cal_3ant(ctx: &Ctx) -> Result<Vec<Check>> {
    let panel = ctx.panel(0, 3)?;
    let hw = panel.effective_offsets();
    let f = ctx.scene.f();
    let coupling = ctx.scene.panel_delays(0, f)?;
    let n = hw.len();
    let mut records = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let link = Link {
                tx: AntennaId(i),
                rx: AntennaId(j),
                frequency: f,
            };
            records.push(measure_one_way(
                &hw[i],
                &hw[j],
                coupling.get(i, j),
                link,
                &ctx.cfg,
                0,
            )?);
        }
    }
    let cal = f_calibrate_known_coupling(&records, &coupling)?;
    let truth = FCalibration::from_truth(&hw, 0);

    let compensated = apply_compensation(panel, &cal)?.effective_offsets();
    let target = compensated[0].r;
    let spread = compensated
        .iter()
        .flat_map(|h| [h.t.distance(target), h.r.distance(target)])
        .fold(0.0, f64::max);

    Ok(vec![
        Check::at_most(
            "r_i - r_0 max error (rad)",
            max_error(&cal.r_diff, &truth.r_diff),
            ctx.tol(2),
        ),
        Check::at_most(
            "t_i - t_0 max error (rad)",
            max_error(&cal.t_diff, &truth.t_diff),
            ctx.tol(2),
        ),
        Check::at_most(
            "r_i - t_i max error (rad)",
            max_error(&cal.rt_offset, &truth.rt_offset),
            ctx.tol(7),
        ),
        Check::at_most("compensated offset spread (rad)", spread, ctx.tol(7)),
    ])
}

fn r_cal_pair(ctx: &Ctx) -> Result<Vec<Check>> {
    let scene = ctx.single_panel(0)?;
    ctx.panel(0, 2)?;
    let cal = r_calibrate_scene(&scene, &ctx.cfg, 0)?;
    let truth = RCalibration::from_truth(&scene.effective_offsets(), 0);
    Ok(vec![Check::at_most(
        "(t_i + r_i) - (t_0 + r_0) max error (rad)",
        max_error(&cal.rho, &truth.rho),
        ctx.tol(2),
    )])
}

fn align_rr(ctx: &Ctx) -> Result<Vec<Check>> {
    let a = ctx.single_panel(0)?;
    let b = ctx.single_panel(1)?;
    let cal_a = r_calibrate_scene(&a, &ctx.cfg, 0)?;
    let cal_b = r_calibrate_scene(&b, &ctx.cfg, 1)?;
    let (hw_a, hw_b) = (a.effective_offsets(), b.effective_offsets());
    let f = ctx.scene.f();
    let pair = measure_bidirectional(
        &hw_a[0],
        &hw_b[0],
        (AntennaId(0), AntennaId(0)),
        ctx.scene.delay(0, 0, 1, 0, f)?,
        f,
        &ctx.cfg,
        2,
    )?;
    let joint = align_r_r(&cal_a, &cal_b, &pair)?;
    let truth =
        RCalibration::from_truth(&ctx.scene.effective_offsets()[..hw_a.len() + hw_b.len()], 0);
    Ok(vec![Check::at_most(
        "joint (t + r) max error (rad)",
        max_error(&joint.rho, &truth.rho),
        ctx.tol(6),
    )])
}

fn align_ff_r(ctx: &Ctx) -> Result<Vec<Check>> {
    let (a, b) = ctx.compensated_pair()?;
    let (ha, hb) = (a.effective_offsets()[0], b.effective_offsets()[0]);
    let truth = ha.r - hb.r;
    let f = ctx.scene.f();
    let pair = measure_bidirectional(
        &ha,
        &hb,
        PANEL_IDS,
        ctx.scene.delay(0, 0, 1, 0, f)?,
        f,
        &ctx.cfg,
        0,
    )?;
    let doubled = align_f_f_to_r(&pair);
    let half = doubled.half();
    let branch_error = half.distance(truth).min((half + Phase::PI).distance(truth));
    Ok(vec![
        Check::at_most(
            "2(c_A - c_B) error (rad)",
            doubled.distance(truth + truth),
            ctx.tol(2),
        ),
        Check::at_most("c_A - c_B error up to pi (rad)", branch_error, ctx.tol(2)),
    ])
}

fn align_ff_f(ctx: &Ctx) -> Result<Vec<Check>> {
    let (a, b) = ctx.compensated_pair()?;
    let (ha, hb) = (a.effective_offsets()[0], b.effective_offsets()[0]);
    let truth = ha.r - hb.r;
    let f = ctx.scene.f();
    let delay = ctx.scene.delay(0, 0, 1, 0, f)?;
    let probe = DualFrequencyProbe::new(f, ctx.scene.f_prime(), true)?;
    let obs = measure_dual_frequency(&ha, &hb, PANEL_IDS, delay, &probe, &ctx.cfg, 0)?;
    let link_m = delay / std::f64::consts::TAU * wavelength(f);
    let bounds = build_bounds((2.0 * link_m).max(1.0), f, ctx.scene.f_prime())?;
    let res = align_f_f_dual_freq(&obs, f, ctx.scene.f_prime(), &bounds)?;
    let period = res.diagnostics.period;
    let e = wrap_period(res.t_est - delay, period)?;
    let delay_error = e.min(period - e);
    Ok(vec![
        Check::at_most(
            "c_A - c_B error (rad)",
            res.c_diff.distance(truth),
            ctx.tol(2),
        ),
        // Two carriers fix the delay only modulo the coarse period.
        Check::at_most(
            "delay estimate error modulo coarse period (rad)",
            delay_error,
            ctx.tol(2),
        ),
        Check::holds(
            "ambiguity branch correct",
            res.branch == Branch::of(truth, &obs.pair()),
        ),
    ])
}

fn myth3(ctx: &Ctx) -> Result<Vec<Check>> {
    let scene = ctx.single_panel(0)?;
    ctx.panel(0, 2)?;
    let pilot = uplink_pilot_noisy(&scene, &ctx.cfg, 0)?;
    let cal = r_calibrate_scene(&scene, &ctx.cfg, 1)?;
    let sum = conjugate_downlink(&pilot, &cal.precompensation(), &scene)?;
    let diff = conjugate_downlink(
        &uplink_pilot(&scene)?,
        &transmit_receive_difference_precompensation(&scene),
        &scene,
    )?;
    Ok(vec![
        Check::at_least(
            "gain with t + r precompensation",
            sum.coherent_gain,
            1.0 - ctx.gain_tol(),
        ),
        Check::at_least(
            "gain loss with t - r precompensation",
            1.0 - diff.coherent_gain,
            ctx.gain_tol(),
        ),
    ])
}

fn myth4(ctx: &Ctx) -> Result<Vec<Check>> {
    let scene = ctx.single_panel(0)?;
    let phi = Phase::try_new(ctx.phi)?;
    let lag = myth4_drift_experiment(&scene, 1, phi)?;
    Ok(vec![
        Check::at_most("lag - 2 phi (rad)", lag.distance(phi + phi), 1e-9),
        Check::holds(
            "lag differs from phi",
            phi.distance(Phase::ZERO) < 1e-9 || lag.distance(phi) > 1e-9,
        ),
    ])
}

fn myth5(ctx: &Ctx) -> Result<Vec<Check>> {
    let panel = ctx.panel(0, 2)?;
    let hw = panel.effective_offsets();
    let f = ctx.scene.f();
    let delay = ctx.scene.delay(0, 0, 0, 1, f)?;
    let ids = (AntennaId(0), AntennaId(1));
    let probe = |b: &AntennaHardware, t: f64, trial| {
        measure_bidirectional(&hw[0], b, ids, t, f, &ctx.cfg, trial)
    };
    let tol = myth5_tolerance(&ctx.cfg);
    let before = probe(&hw[1], delay, 0)?;
    let aged = probe(&hw[1], apply_aging(delay, ctx.phi)?, 1)?;
    let drifted = probe(
        &apply_oscillator_drift(hw[1], Phase::try_new(ctx.phi)?),
        delay,
        2,
    )?;
    let same = probe(&hw[1], delay, 3)?;
    Ok(vec![
        Check::holds(
            "aging detected as aging",
            myth5_discriminator(&before, &aged, tol) == LinkEvent::Aging,
        ),
        Check::holds(
            "drift detected as drift",
            myth5_discriminator(&before, &drifted, tol) == LinkEvent::Drift,
        ),
        Check::holds(
            "no change detected as neither",
            myth5_discriminator(&before, &same, tol) == LinkEvent::Neither,
        ),
    ])
}

fn myth6(ctx: &Ctx) -> Result<Vec<Check>> {
    let user = ctx
        .scene
        .user
        .ok_or_else(|| Error::usage("scenario needs a user"))?;
    let n = ctx.scene.antenna_count();
    let pilot = uplink_pilot_noisy(&ctx.scene, &ctx.cfg, 0)?;

    let arrays_only = r_calibrate_scene(&ctx.scene, &ctx.cfg, 1)?;
    let plain = conjugate_downlink(&pilot, &arrays_only.precompensation(), &ctx.scene)?;
    let offsets = ctx.scene.effective_offsets();
    let predicted = user.hardware.reciprocity_sum() - offsets[0].reciprocity_sum();

    let mut with_user = ctx.scene.clone();
    with_user
        .panels
        .push(Panel::new(vec![user.hardware], vec![user.position])?);
    let joint = r_calibrate_scene(&with_user, &ctx.cfg, 2)?;
    let out = conjugate_downlink(&pilot, &joint_user_precompensation(&joint, n), &ctx.scene)?;

    Ok(vec![
        Check::at_most(
            "rotation without user minus (t_u + r_u) - (t_0 + r_0) (rad)",
            plain.residual_rotation.distance(predicted),
            ctx.tol(3),
        ),
        Check::at_most(
            "rotation with joint user calibration (rad)",
            out.residual_rotation.distance(Phase::ZERO),
            ctx.tol(5),
        ),
        Check::at_least(
            "gain with joint user calibration",
            out.coherent_gain,
            1.0 - ctx.gain_tol(),
        ),
    ])
}

/// Runs a named scenario. Unknown names are usage errors listing the valid ones.
pub fn run_scenario(name: &str, opts: &ScenarioOptions) -> Result<ScenarioReport> {
    let run: fn(&Ctx) -> Result<Vec<Check>> = match name {
        "f-cal-3ant" => f_cal_3ant,
        "r-cal-pair" => r_cal_pair,
        "align-rr" => align_rr,
        "align-ff-r" => align_ff_r,
        "align-ff-f" => align_ff_f,
        "myth3" => myth3,
        "myth4" => myth4,
        "myth5" => myth5,
        "myth6" => myth6,
        _ => {
            return Err(Error::usage(format!(
                "unknown scenario '{name}'; available: {}",
                SCENARIOS.join(", ")
            )))
        }
    };
    let scene = match &opts.scene {
        Some(s) => s.clone(),
        None => default_scene(opts.antennas, opts.seed)?,
    };
    let cfg = MeasurementConfig::new(opts.snr_db, opts.n_samples, opts.seed)?;
    let ctx = Ctx {
        scene,
        cfg,
        phi: opts.phi,
    };
    let checks = run(&ctx)?;
    Ok(ScenarioReport {
        scenario: name.to_string(),
        snr_db: (!cfg.is_noiseless()).then_some(opts.snr_db),
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}
