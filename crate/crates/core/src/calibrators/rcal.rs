use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::array::{AntennaHardware, AntennaId};
use crate::error::{Error, Result};
use crate::measurement::BidirectionalPair;
use crate::phase::Phase;

/// Reciprocity calibration: `rho[i] = (t_i + r_i) − (t_ref + r_ref)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RCalibration {
    pub reference: AntennaId,
    pub rho: Vec<Phase>,
}

impl RCalibration {
    pub fn from_truth(hardware: &[AntennaHardware], reference: usize) -> Self {
        let base = hardware[reference].reciprocity_sum();
        RCalibration {
            reference: AntennaId(reference),
            rho: hardware
                .iter()
                .map(|h| h.reciprocity_sum() - base)
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    /// `t_j − t_i + r_j − r_i`.
    pub fn pair(&self, i: usize, j: usize) -> Phase {
        self.rho[j] - self.rho[i]
    }

    /// Per-antenna downlink precompensation `t_i + r_i + c`, with the common
    /// constant chosen as `c = −(t_ref + r_ref)`.
    pub fn precompensation(&self) -> Vec<Phase> {
        self.rho.clone()
    }
}

/// R-calibrates `n` antennas from bidirectional pairs forming a connected graph.
///
/// Differences are accumulated along a breadth-first spanning tree rooted at
/// antenna 0; with noiseless records the tree choice is irrelevant.
pub fn r_calibrate_pairwise(n: usize, pairs: &[BidirectionalPair]) -> Result<RCalibration> {
    if n == 0 {
        return Err(Error::usage("R-calibration needs at least one antenna"));
    }
    // (neighbour, s_neighbour - s_self) where s = t + r.
    let mut adjacency: Vec<Vec<(usize, Phase)>> = vec![Vec::new(); n];
    for pair in pairs {
        let (a, b) = (pair.a().0, pair.b().0);
        if a >= n || b >= n {
            return Err(Error::usage(format!(
                "pair {a}<->{b} does not fit an array of {n} antennas"
            )));
        }
        let step = -pair.reciprocity_difference();
        adjacency[a].push((b, step));
        adjacency[b].push((a, -step));
    }

    let mut rho: Vec<Option<Phase>> = vec![None; n];
    rho[0] = Some(Phase::ZERO);
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let base = rho[i].expect("queued antennas are solved");
        for &(j, step) in &adjacency[i] {
            if rho[j].is_none() {
                rho[j] = Some(base + step);
                queue.push_back(j);
            }
        }
    }

    let unreached: Vec<usize> = (0..n).filter(|&i| rho[i].is_none()).collect();
    if !unreached.is_empty() {
        return Err(Error::usage(format!(
            "measurement graph is disconnected; unreached antennas: {unreached:?}"
        )));
    }
    Ok(RCalibration {
        reference: AntennaId(0),
        rho: rho.into_iter().map(|p| p.expect("checked above")).collect(),
    })
}
