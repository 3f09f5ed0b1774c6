//! Phase alignment of two individually calibrated arrays `A` and `B`.
//!
//! * Two R-calibrated arrays become jointly R-calibrated from one
//!   bidirectional pair ([`align_r_r`]).
//! * Two compensated F-calibrated arrays (`t = r = c_A` on A, `c_B` on B)
//!   yield `2(c_A − c_B)` from one bidirectional pair ([`align_f_f_to_r`]);
//!   halving it leaves a mod-π ambiguity.
//! * [`align_f_f_dual_freq`] resolves that ambiguity with one extra
//!   observation at a second carrier `f' < f`. The phase difference between
//!   carriers is a coarse range measurement with bandwidth `f − f'`, which
//!   pins `T_AB` modulo `2π / (1 − f'/f)`; the two candidate delays
//!   consistent with the bidirectional pair are `π` apart, and the candidate
//!   lying on the coarse lattice picks the branch.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::array::{delay_radians, AntennaId};
use crate::error::{Error, Result};
use crate::measurement::{BidirectionalPair, DualFrequencyObservation, MeasurementRecord};
use crate::phase::{circular_mean, wrap_period, Phase};

use super::RCalibration;

/// Largest lattice residual accepted as a match. Branch candidates are `π`
/// apart, so any coarse-delay point inside the search span has a candidate
/// within `π/2`.
pub const AMBIGUITY_TOLERANCE: f64 = PI / 2.0;

const TIE_EPS: f64 = 1e-12;
const DELAY_TIE_EPS: f64 = 1e-9;

/// `d_ba − d_ab = t_a − t_b + r_a − r_b`.
pub fn cross_term(pair: &BidirectionalPair) -> Phase {
    pair.reciprocity_difference()
}

/// Joins two R-calibrated arrays into one.
///
/// `pair.ab` is the `A_i → B_j` record with `tx` indexing into `cal_a` and
/// `rx` into `cal_b`; `pair.ba` is the reverse. Antennas of B follow those of
/// A in the joint calibration, which keeps A's reference.
pub fn align_r_r(
    cal_a: &RCalibration,
    cal_b: &RCalibration,
    pair: &BidirectionalPair,
) -> Result<RCalibration> {
    let (i, j) = (pair.a().0, pair.b().0);
    if i >= cal_a.len() || j >= cal_b.len() {
        return Err(Error::usage(format!(
            "pair A{i}<->B{j} outside arrays of {} and {} antennas",
            cal_a.len(),
            cal_b.len()
        )));
    }
    // s_Bj - s_Ai, with s = t + r.
    let bridge = -cross_term(pair);
    let offset = cal_a.rho[i] + bridge - cal_b.rho[j];
    let rho = cal_a
        .rho
        .iter()
        .copied()
        .chain(cal_b.rho.iter().map(|&r| r + offset))
        .collect();
    Ok(RCalibration {
        reference: cal_a.reference,
        rho,
    })
}

/// `2(c_A − c_B)` from a bidirectional pair between compensated panels.
pub fn align_f_f_to_r(pair: &BidirectionalPair) -> Phase {
    pair.ba.d - pair.ab.d
}

/// `c_A − c_B` from the single `B → A` record when the true delay is known.
pub fn align_f_f_genie(d_ba: &MeasurementRecord, true_delay: f64) -> Phase {
    d_ba.d - true_delay
}

/// Known-delay estimate from both directions, circularly averaged.
pub fn align_f_f_genie_bidirectional(pair: &BidirectionalPair, true_delay: f64) -> Phase {
    let from_ba = pair.ba.d - true_delay;
    let from_ab = -(pair.ab.d - true_delay);
    // Two unit phasors only cancel when the estimates are π apart.
    circular_mean([from_ba, from_ab]).unwrap_or(from_ba)
}

/// Integer ranges for the lattice search, derived from the largest plausible
/// separation between the arrays.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBounds {
    pub d_max: f64,
    pub m_max: u32,
    pub n_max: u32,
}

/// `m_max = ⌈T_max / 2π⌉ + 1`, `n_max = max(⌈T_max (1 − f'/f) / 2π⌉, 1)`,
/// where `T_max` is the delay of `d_max` at `f`.
pub fn build_bounds(d_max: f64, f: f64, f_prime: f64) -> Result<SearchBounds> {
    if d_max.is_nan() || d_max <= 0.0 {
        return Err(Error::domain(format!("d_max must be > 0, got {d_max}")));
    }
    if !(f_prime > 0.0 && f_prime < f) {
        return Err(Error::domain(format!(
            "need 0 < f' < f, got f = {f}, f' = {f_prime}"
        )));
    }
    let t_max = delay_radians(d_max, f)?;
    let m_max = (t_max / TAU).ceil() as u32 + 1;
    let n_max = ((t_max * (1.0 - f_prime / f) / TAU).ceil() as u32).max(1);
    Ok(SearchBounds {
        d_max,
        m_max,
        n_max,
    })
}

/// Which half-angle branch the ambiguity resolution settled on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    /// `c_A − c_B = (d_BA − d_AB)/2`.
    CaseI,
    /// `c_A − c_B = π + (d_BA − d_AB)/2`.
    CaseII,
}

impl Branch {
    /// The branch whose candidate lies closest to `truth`.
    pub fn of(truth: Phase, pair: &BidirectionalPair) -> Branch {
        let c_i = half_difference(pair.ab.d, pair.ba.d);
        if truth.distance(c_i) <= truth.distance(c_i + Phase::PI) {
            Branch::CaseI
        } else {
            Branch::CaseII
        }
    }
}

/// Where the coarse delay estimate comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoarseDelaySource {
    /// `(d_BA − d'_BA) / (1 − f'/f)`.
    #[default]
    Ba,
    /// `(d_AB − d'_AB) / (1 − f'/f)`; needs the fourth record.
    Ab,
    /// Circular mean of both on the coarse period; needs the fourth record.
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualFreqOptions {
    pub coarse: CoarseDelaySource,
    /// When the fourth record is present, average the `f'` half-angle
    /// estimate into the result.
    pub average_fourth: bool,
}

impl Default for DualFreqOptions {
    fn default() -> Self {
        DualFreqOptions {
            coarse: CoarseDelaySource::Ba,
            average_fourth: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentDiagnostics {
    /// Winning `m` (candidate turns) and `n` (coarse-lattice turns).
    pub m: u32,
    pub n: u32,
    /// Coarse delay estimate, in `[0, period)`.
    pub coarse_delay: f64,
    /// `2π / (1 − f'/f)`.
    pub period: f64,
    /// Best residual reached by the losing branch.
    pub runner_up_residual: f64,
    /// Both branches matched equally well; case (i) was chosen.
    pub branch_tie: bool,
    /// Another `(m, n)` on the winning branch fits equally well, so `t_est`
    /// is only known modulo the coarse period.
    pub delay_ambiguous: bool,
    /// Half-angle estimate from the `f` pair alone, on the winning branch.
    pub c_diff_primary: Phase,
    pub fourth_used: bool,
}

/// Output of the two-frequency F-alignment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    /// Estimate of `c_A − c_B`.
    pub c_diff: Phase,
    /// Estimate of the unwrapped delay `T_AB` at `f`.
    pub t_est: f64,
    pub branch: Branch,
    /// Lattice-fit residual of the winner, radians.
    pub residual: f64,
    pub diagnostics: AlignmentDiagnostics,
}

fn half_difference(d_ab: Phase, d_ba: Phase) -> Phase {
    Phase::new((d_ba.radians() - d_ab.radians()) / 2.0)
}

fn half_sum(d_ab: Phase, d_ba: Phase) -> Phase {
    Phase::new((d_ab.radians() + d_ba.radians()) / 2.0)
}

fn coarse_from(d: Phase, d_prime: Phase, fraction: f64, period: f64) -> Result<f64> {
    wrap_period((d.radians() - d_prime.radians()) / fraction, period)
}

#[derive(Clone, Copy)]
struct Fit {
    residual: f64,
    m: u32,
    n: u32,
    delay: f64,
}

fn best_fit(candidate: Phase, coarse: f64, period: f64, bounds: &SearchBounds) -> (Fit, bool) {
    let mut best: Option<Fit> = None;
    let mut ambiguous = false;
    for m in 0..=bounds.m_max {
        let delay = candidate.radians() + TAU * m as f64;
        for n in 0..=bounds.n_max {
            let residual = (delay - (coarse + period * n as f64)).abs();
            match best {
                // Near-ties keep the first (smallest) delay found.
                Some(b) if residual >= b.residual - DELAY_TIE_EPS => {
                    if residual <= b.residual + DELAY_TIE_EPS
                        && (delay - b.delay).abs() > DELAY_TIE_EPS
                    {
                        ambiguous = true;
                    }
                }
                Some(_) => {
                    ambiguous = false;
                    best = Some(Fit {
                        residual,
                        m,
                        n,
                        delay,
                    });
                }
                None => {
                    best = Some(Fit {
                        residual,
                        m,
                        n,
                        delay,
                    })
                }
            }
        }
    }
    (best.expect("bounds are non-empty"), ambiguous)
}

/// Two-frequency F-alignment with default options.
pub fn align_f_f_dual_freq(
    obs: &DualFrequencyObservation,
    f: f64,
    f_prime: f64,
    bounds: &SearchBounds,
) -> Result<AlignmentResult> {
    align_f_f_dual_freq_with(obs, f, f_prime, bounds, &DualFreqOptions::default())
}

/// Resolves `c_A − c_B` without knowing `T_AB`.
///
/// The two half-angle candidates `(d_BA − d_AB)/2` and `π + (d_BA − d_AB)/2`
/// pair with the delay candidates `(d_AB + d_BA)/2` and
/// `π + (d_AB + d_BA)/2`. Each delay candidate, extended by whole turns `m`,
/// is compared with the coarse delay extended by whole coarse periods `n`;
/// the closest `(branch, m, n)` over the search bounds wins.
pub fn align_f_f_dual_freq_with(
    obs: &DualFrequencyObservation,
    f: f64,
    f_prime: f64,
    bounds: &SearchBounds,
    options: &DualFreqOptions,
) -> Result<AlignmentResult> {
    if !(f_prime > 0.0 && f_prime < f) {
        return Err(Error::domain(format!(
            "need 0 < f' < f, got f = {f}, f' = {f_prime}"
        )));
    }
    let fraction = 1.0 - f_prime / f;
    let period = TAU / fraction;
    let (d_ab, d_ba, d_ba_p) = (obs.ab.d, obs.ba.d, obs.ba_prime.d);

    let coarse_ba = || coarse_from(d_ba, d_ba_p, fraction, period);
    let coarse_ab = || -> Result<f64> {
        let ab_p = obs.ab_prime.ok_or_else(|| {
            Error::usage("coarse delay from A->B needs the fourth (A->B at f') record")
        })?;
        coarse_from(d_ab, ab_p.d, fraction, period)
    };
    let coarse = match options.coarse {
        CoarseDelaySource::Ba => coarse_ba()?,
        CoarseDelaySource::Ab => coarse_ab()?,
        CoarseDelaySource::Mean => {
            let to_angle = |x: f64| Phase::new(TAU * x / period);
            let mean = circular_mean([to_angle(coarse_ba()?), to_angle(coarse_ab()?)])
                .unwrap_or(to_angle(coarse_ba()?));
            wrap_period(mean.radians() * period / TAU, period)?
        }
    };

    let c_i = half_difference(d_ab, d_ba);
    let t_i = half_sum(d_ab, d_ba);
    let (fit_i, amb_i) = best_fit(t_i, coarse, period, bounds);
    let (fit_ii, amb_ii) = best_fit(t_i + Phase::PI, coarse, period, bounds);

    let branch_tie = (fit_i.residual - fit_ii.residual).abs() <= TIE_EPS;
    let (branch, win, lose, delay_ambiguous) = if fit_i.residual <= fit_ii.residual + TIE_EPS {
        (Branch::CaseI, fit_i, fit_ii, amb_i)
    } else {
        (Branch::CaseII, fit_ii, fit_i, amb_ii)
    };
    if win.residual > AMBIGUITY_TOLERANCE {
        return Err(Error::AmbiguityFailure {
            residual: win.residual,
            tolerance: AMBIGUITY_TOLERANCE,
        });
    }

    let primary = match branch {
        Branch::CaseI => c_i,
        Branch::CaseII => c_i + Phase::PI,
    };
    let mut c_diff = primary;
    let mut fourth_used = false;
    if let (Some(ab_p), true) = (obs.ab_prime, options.average_fourth) {
        let base = half_difference(ab_p.d, d_ba_p);
        let other = base + Phase::PI;
        let matched = if primary.distance(base) <= primary.distance(other) {
            base
        } else {
            other
        };
        c_diff = circular_mean([primary, matched]).unwrap_or(primary);
        fourth_used = true;
    }

    Ok(AlignmentResult {
        c_diff,
        t_est: win.delay,
        branch,
        residual: win.residual,
        diagnostics: AlignmentDiagnostics {
            m: win.m,
            n: win.n,
            coarse_delay: coarse,
            period,
            runner_up_residual: lose.residual,
            branch_tie,
            delay_ambiguous,
            c_diff_primary: primary,
            fourth_used,
        },
    })
}

/// Convenience for building ids of a two-panel probe.
pub const PANEL_IDS: (AntennaId, AntennaId) = (AntennaId(0), AntennaId(1));
