//! Estimation procedures: intra-array F- and R-calibration, and phase
//! alignment of two already-calibrated arrays.
//!
//! Estimators only ever see [`MeasurementRecord`](crate::measurement::MeasurementRecord)s
//! (plus, for F-calibration, the known coupling delays). Ground truth is
//! reachable only through the `from_truth` constructors, which exist for the
//! simulator and for tests.

mod align;
mod fcal;
mod rcal;

pub use align::{
    align_f_f_dual_freq, align_f_f_dual_freq_with, align_f_f_genie, align_f_f_genie_bidirectional,
    align_f_f_to_r, align_r_r, build_bounds, cross_term, AlignmentDiagnostics, AlignmentResult,
    Branch, CoarseDelaySource, DualFreqOptions, SearchBounds, AMBIGUITY_TOLERANCE, PANEL_IDS,
};
pub use fcal::{f_calibrate_known_coupling, FCalibration};
pub use rcal::{r_calibrate_pairwise, RCalibration};
