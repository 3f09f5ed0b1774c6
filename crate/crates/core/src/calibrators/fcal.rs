use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::array::{AntennaHardware, AntennaId, Compensation, DelayTable};
use crate::error::{Error, Result};
use crate::measurement::MeasurementRecord;
use crate::phase::{circular_mean, Phase};

/// Full calibration of one array: `r_i − r_ref`, `t_i − t_ref` and `r_i − t_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FCalibration {
    pub reference: AntennaId,
    pub r_diff: Vec<Phase>,
    pub t_diff: Vec<Phase>,
    pub rt_offset: Vec<Phase>,
}

impl FCalibration {
    /// The calibration of an array whose offsets are already uniform.
    pub fn identity(n: usize) -> Self {
        FCalibration {
            reference: AntennaId(0),
            r_diff: vec![Phase::ZERO; n],
            t_diff: vec![Phase::ZERO; n],
            rt_offset: vec![Phase::ZERO; n],
        }
    }

    /// Exact calibration computed from simulator ground truth.
    pub fn from_truth(hardware: &[AntennaHardware], reference: usize) -> Self {
        let base = hardware[reference];
        FCalibration {
            reference: AntennaId(reference),
            r_diff: hardware.iter().map(|h| h.r - base.r).collect(),
            t_diff: hardware.iter().map(|h| h.t - base.t).collect(),
            rt_offset: hardware.iter().map(|h| h.r - h.t).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.r_diff.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_diff.is_empty()
    }

    /// Largest violation of `rt[i] − rt[ref] = r_diff[i] − t_diff[i]`, radians.
    pub fn consistency_error(&self) -> f64 {
        let rt_ref = self.rt_offset[self.reference.0];
        (0..self.len())
            .map(|i| {
                let lhs = self.rt_offset[i] - rt_ref;
                let rhs = self.r_diff[i] - self.t_diff[i];
                lhs.distance(rhs)
            })
            .fold(0.0, f64::max)
    }

    /// Pre/post corrections that make every antenna look like `t = r = r_ref`.
    pub fn compensation(&self) -> Vec<Compensation> {
        let rt_ref = self.rt_offset[self.reference.0];
        self.r_diff
            .iter()
            .zip(&self.t_diff)
            .map(|(&dr, &dt)| Compensation {
                tx_precomp: rt_ref - dt,
                rx_postcomp: -dr,
            })
            .collect()
    }
}

/// F-calibrates an array of `n ≥ 3` antennas from bidirectional measurements
/// among them, given the coupling delays.
///
/// Antennas 0, 1 and 2 form the base triple; every further antenna `k` is
/// calibrated through the triple `(0, 1, k)`, which needs the four records
/// `0↔k`, `1↔k` besides the base pairs. Repeated records of the same
/// directed link are circularly averaged.
pub fn f_calibrate_known_coupling(
    records: &[MeasurementRecord],
    coupling: &DelayTable,
) -> Result<FCalibration> {
    let n = coupling.len();
    if n < 3 {
        return Err(Error::usage(format!(
            "F-calibration needs at least 3 antennas, coupling table has {n}"
        )));
    }

    let mut by_link: BTreeMap<(usize, usize), Vec<Phase>> = BTreeMap::new();
    for rec in records {
        let (i, j) = (rec.tx.0, rec.rx.0);
        if i >= n || j >= n || i == j {
            return Err(Error::usage(format!(
                "record {i}->{j} does not fit an array of {n} antennas"
            )));
        }
        // d_ij - T_ij = r_j - t_i
        by_link
            .entry((i, j))
            .or_default()
            .push(rec.d - coupling.get(i, j));
    }
    let e = |i: usize, j: usize| -> Result<Phase> {
        let obs = by_link
            .get(&(i, j))
            .ok_or_else(|| Error::usage(format!("missing measurement {i}->{j}")))?;
        circular_mean(obs.iter().copied())
            .ok_or_else(|| Error::usage(format!("repeated measurements {i}->{j} cancel out")))
    };

    let rt0 = e(1, 0)? + e(0, 2)? - e(1, 2)?;
    let mut r_diff = vec![Phase::ZERO; n];
    let mut t_diff = vec![Phase::ZERO; n];
    r_diff[1] = e(2, 1)? - e(2, 0)?;
    t_diff[1] = e(0, 2)? - e(1, 2)?;
    for k in 2..n {
        r_diff[k] = e(1, k)? - e(1, 0)?;
        t_diff[k] = e(0, 1)? - e(k, 1)?;
    }
    let rt_offset = (0..n).map(|i| rt0 + r_diff[i] - t_diff[i]).collect();

    Ok(FCalibration {
        reference: AntennaId(0),
        r_diff,
        t_diff,
        rt_offset,
    })
}
