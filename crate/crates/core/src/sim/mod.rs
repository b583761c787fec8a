//! Grasp-and-slip emulation: a 1-D plant, a contour-marker event synthesizer,
//! the closed detection/suppression loop, and scenario definitions.

mod closed_loop;
mod emulator;
mod marker;
mod metric;
mod plant;
mod scenario;

pub use closed_loop::{
    run_closed_loop, write_ground_truth_csv, write_windows_csv, ClosedLoopOutput, CommandRecord,
    DetectorReport, ForceSample, GroundTruthSample, SimulationReport, SlipInterval,
};
pub use emulator::{EventSource, EventSynth, FlickerBurst, NoiseModel, TaggedEvent, Vibration};
pub use marker::{ContourPoint, Marker, MarkerShape, PointKind};
pub use metric::{slip_metric, EventFrame};
pub use plant::{PlantState, GRAVITY};
pub use scenario::{
    AccelPulse, ActuatorParams, ControlDetector, LoadDrop, PlantParams, Scenario, Timeline,
    BUILTIN_SCENARIOS,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("frame holds no corner events")]
    NoCorners,
    #[error(transparent)]
    Stage(#[from] crate::slip::SlipError),
    #[error(transparent)]
    Fuzzy(#[from] crate::fuzzy::FuzzyError),
    #[error(transparent)]
    Detector(#[from] crate::feature::DetectorError),
}
