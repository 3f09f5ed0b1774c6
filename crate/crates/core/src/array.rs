//! Antennas, panels and scenes, together with the physical events (oscillator
//! drift, channel aging) whose effect on calibration the crate studies.
//!
//! Hardware offsets are phasor values relative to a fictitious global phasor.
//! True propagation delays are kept unwrapped; wrapping only happens when a
//! measurement is taken.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::calibrators::FCalibration;
use crate::error::{Error, Result};
use crate::phase::Phase;

/// Free-space propagation speed, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub type Position = [f64; 3];

/// Index of an antenna within whatever collection a record refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AntennaId(pub usize);

/// Transmit and receive branch offsets of one antenna (or of a user terminal).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AntennaHardware {
    pub t: Phase,
    pub r: Phase,
}

impl AntennaHardware {
    pub fn new(t: Phase, r: Phase) -> Self {
        AntennaHardware { t, r }
    }

    /// Hardware with `t = r = c`, i.e. an antenna of a compensated F-calibrated panel.
    pub fn uniform(c: Phase) -> Self {
        AntennaHardware { t: c, r: c }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        AntennaHardware {
            t: Phase::new(rng.random_range(0.0..TAU)),
            r: Phase::new(rng.random_range(0.0..TAU)),
        }
    }

    /// `t + r`, the per-antenna quantity reciprocity calibration is about.
    pub fn reciprocity_sum(&self) -> Phase {
        self.t + self.r
    }
}

/// Phase of a single-path free-space link at `frequency`, unwrapped.
pub fn delay_radians(distance: f64, frequency: f64) -> Result<f64> {
    if !distance.is_finite() || distance < 0.0 {
        return Err(Error::domain(format!(
            "distance must be >= 0, got {distance}"
        )));
    }
    if !frequency.is_finite() || frequency <= 0.0 {
        return Err(Error::domain(format!(
            "frequency must be > 0, got {frequency}"
        )));
    }
    Ok(TAU * frequency * distance / SPEED_OF_LIGHT)
}

/// Rescales a delay measured at `from` Hz to `to` Hz.
pub fn scaled_delay(delay: f64, from: f64, to: f64) -> f64 {
    delay * (to / from)
}

pub fn wavelength(frequency: f64) -> f64 {
    SPEED_OF_LIGHT / frequency
}

/// A mixer-oscillator phase step: shifts both branches by `phi`.
pub fn apply_oscillator_drift(antenna: AntennaHardware, phi: Phase) -> AntennaHardware {
    AntennaHardware {
        t: antenna.t + phi,
        r: antenna.r + phi,
    }
}

/// Physically moving an antenna lengthens (or shortens) its links by `phi`.
///
/// On every measurement this looks like `t − phi`, `r + phi` on the moved
/// antenna, the opposite-sign pattern to [`apply_oscillator_drift`].
pub fn apply_aging(delay: f64, phi: f64) -> Result<f64> {
    let aged = delay + phi;
    if !aged.is_finite() || aged < 0.0 {
        return Err(Error::domain(format!(
            "aging by {phi} would make delay {delay} negative"
        )));
    }
    Ok(aged)
}

/// Symmetric table of unwrapped link delays (radians at the table's frequency).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayTable {
    n: usize,
    values: Vec<f64>,
}

impl DelayTable {
    pub fn zeros(n: usize) -> Self {
        DelayTable {
            n,
            values: vec![0.0; n * n],
        }
    }

    /// Builds a table from `f(i, j)` evaluated for `i < j`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut table = DelayTable::zeros(n);
        for i in 0..n {
            for j in (i + 1)..n {
                table.set(i, j, f(i, j))?;
            }
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, delay: f64) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(Error::usage(format!(
                "delay table has {} antennas, got pair ({i}, {j})",
                self.n
            )));
        }
        if !delay.is_finite() || delay < 0.0 {
            return Err(Error::domain(format!("delay must be >= 0, got {delay}")));
        }
        self.values[i * self.n + j] = delay;
        self.values[j * self.n + i] = delay;
        Ok(())
    }

    pub fn age_link(&mut self, i: usize, j: usize, phi: f64) -> Result<()> {
        let aged = apply_aging(self.get(i, j), phi)?;
        self.set(i, j, aged)
    }

    /// Ages every link touching antenna `i`.
    pub fn age_antenna(&mut self, i: usize, phi: f64) -> Result<()> {
        for j in (0..self.n).filter(|&j| j != i) {
            self.age_link(i, j, phi)?;
        }
        Ok(())
    }

    /// The same geometry at another carrier.
    pub fn rescaled(&self, from: f64, to: f64) -> Self {
        DelayTable {
            n: self.n,
            values: self
                .values
                .iter()
                .map(|&v| scaled_delay(v, from, to))
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum CalibrationState {
    #[default]
    Uncalibrated,
    RCalibrated,
    FCalibrated,
}

/// Per-antenna correction applied by the panel's circuitry.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Compensation {
    pub tx_precomp: Phase,
    pub rx_postcomp: Phase,
}

/// A co-located group of antennas.
#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    antennas: Vec<AntennaHardware>,
    positions: Vec<Position>,
    pub state: CalibrationState,
    compensation: Option<Vec<Compensation>>,
    /// Known coupling delays (radians at the scene carrier), overriding geometry.
    pub coupling: Option<DelayTable>,
}

impl Panel {
    pub fn new(antennas: Vec<AntennaHardware>, positions: Vec<Position>) -> Result<Self> {
        if antennas.is_empty() {
            return Err(Error::usage("a panel needs at least one antenna"));
        }
        if antennas.len() != positions.len() {
            return Err(Error::usage(format!(
                "{} antennas but {} positions",
                antennas.len(),
                positions.len()
            )));
        }
        Ok(Panel {
            antennas,
            positions,
            state: CalibrationState::Uncalibrated,
            compensation: None,
            coupling: None,
        })
    }

    /// Uniform linear array along x with random hardware.
    pub fn random_linear<R: Rng + ?Sized>(
        rng: &mut R,
        n: usize,
        origin: Position,
        spacing: f64,
    ) -> Result<Self> {
        let antennas = (0..n).map(|_| AntennaHardware::random(rng)).collect();
        let positions = (0..n)
            .map(|i| [origin[0] + spacing * i as f64, origin[1], origin[2]])
            .collect();
        Panel::new(antennas, positions)
    }

    pub fn with_coupling(mut self, coupling: DelayTable) -> Result<Self> {
        if coupling.len() != self.len() {
            return Err(Error::usage(format!(
                "coupling table covers {} antennas, panel has {}",
                coupling.len(),
                self.len()
            )));
        }
        self.coupling = Some(coupling);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.antennas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.antennas.is_empty()
    }

    /// Raw hardware offsets, before any compensation.
    pub fn hardware(&self) -> &[AntennaHardware] {
        &self.antennas
    }

    pub fn hardware_mut(&mut self) -> &mut [AntennaHardware] {
        &mut self.antennas
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn compensation(&self) -> Option<&[Compensation]> {
        self.compensation.as_deref()
    }

    /// Offsets as seen on the air once compensation is applied.
    pub fn effective_offsets(&self) -> Vec<AntennaHardware> {
        match &self.compensation {
            None => self.antennas.clone(),
            Some(comp) => self
                .antennas
                .iter()
                .zip(comp)
                .map(|(hw, c)| AntennaHardware {
                    t: hw.t + c.tx_precomp,
                    r: hw.r + c.rx_postcomp,
                })
                .collect(),
        }
    }
}

/// Compensates a panel so that every effective offset equals the reference
/// antenna's receive offset.
///
/// Compensation composes with whatever the panel already applies, since the
/// calibration was measured on the effective offsets.
pub fn apply_compensation(panel: &Panel, calibration: &FCalibration) -> Result<Panel> {
    if calibration.len() != panel.len() {
        return Err(Error::usage(format!(
            "calibration covers {} antennas, panel has {}",
            calibration.len(),
            panel.len()
        )));
    }
    let fresh = calibration.compensation();
    let combined = match &panel.compensation {
        None => fresh,
        Some(old) => old
            .iter()
            .zip(&fresh)
            .map(|(o, n)| Compensation {
                tx_precomp: o.tx_precomp + n.tx_precomp,
                rx_postcomp: o.rx_postcomp + n.rx_postcomp,
            })
            .collect(),
    };
    let mut out = panel.clone();
    out.compensation = Some(combined);
    out.state = CalibrationState::FCalibrated;
    Ok(out)
}

/// A single-antenna terminal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub hardware: AntennaHardware,
    pub position: Position,
}

/// Panels, an optional user and the two probing carriers.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub panels: Vec<Panel>,
    pub user: Option<User>,
    f: f64,
    f_prime: f64,
}

impl Scene {
    pub fn new(panels: Vec<Panel>, f: f64, f_prime: f64) -> Result<Self> {
        if !(f_prime > 0.0 && f_prime < f && f.is_finite()) {
            return Err(Error::domain(format!(
                "need 0 < f' < f, got f = {f}, f' = {f_prime}"
            )));
        }
        Ok(Scene {
            panels,
            user: None,
            f,
            f_prime,
        })
    }

    pub fn with_user(mut self, user: User) -> Self {
        self.user = Some(user);
        self
    }

    pub fn f(&self) -> f64 {
        self.f
    }

    pub fn f_prime(&self) -> f64 {
        self.f_prime
    }

    pub fn antenna_count(&self) -> usize {
        self.panels.iter().map(Panel::len).sum()
    }

    /// Effective offsets of every antenna, panels concatenated in order.
    pub fn effective_offsets(&self) -> Vec<AntennaHardware> {
        self.panels
            .iter()
            .flat_map(Panel::effective_offsets)
            .collect()
    }

    pub fn positions(&self) -> Vec<Position> {
        self.panels
            .iter()
            .flat_map(|p| p.positions().iter().copied())
            .collect()
    }

    /// Unwrapped delay between antenna `i` of panel `pa` and antenna `j` of
    /// panel `pb` at `frequency`; intra-panel coupling tables win over geometry.
    pub fn delay(&self, pa: usize, i: usize, pb: usize, j: usize, frequency: f64) -> Result<f64> {
        let panel_a = self
            .panels
            .get(pa)
            .ok_or_else(|| Error::usage(format!("no panel {pa}")))?;
        let panel_b = self
            .panels
            .get(pb)
            .ok_or_else(|| Error::usage(format!("no panel {pb}")))?;
        if i >= panel_a.len() || j >= panel_b.len() {
            return Err(Error::usage(format!(
                "antenna index out of range: ({pa},{i}) / ({pb},{j})"
            )));
        }
        if pa == pb {
            if let Some(table) = &panel_a.coupling {
                return Ok(scaled_delay(table.get(i, j), self.f, frequency));
            }
        }
        delay_radians(
            distance(panel_a.positions[i], panel_b.positions[j]),
            frequency,
        )
    }

    /// All intra-panel delays of panel `p` at `frequency`.
    pub fn panel_delays(&self, p: usize, frequency: f64) -> Result<DelayTable> {
        let n = self
            .panels
            .get(p)
            .ok_or_else(|| Error::usage(format!("no panel {p}")))?
            .len();
        let mut table = DelayTable::zeros(n);
        for i in 0..n {
            for j in (i + 1)..n {
                table.set(i, j, self.delay(p, i, p, j, frequency)?)?;
            }
        }
        Ok(table)
    }

    /// User-to-antenna delays for every antenna, panels concatenated.
    pub fn user_delays(&self, frequency: f64) -> Result<Vec<f64>> {
        let user = self
            .user
            .as_ref()
            .ok_or_else(|| Error::usage("scene has no user"))?;
        self.positions()
            .into_iter()
            .map(|pos| delay_radians(distance(pos, user.position), frequency))
            .collect()
    }
}

pub fn distance(a: Position, b: Position) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}
