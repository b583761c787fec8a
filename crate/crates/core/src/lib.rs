//! Slip detection for event cameras, with closed-loop grip-force control.
//!
//! The pipeline mirrors a gripper-mounted event camera watching a visual
//! marker on a grasped object:
//!
//! 1. [`event`]: raw event records, sensor geometry, event-log I/O.
//! 2. [`sae`]: the per-pixel latest-timestamp surface and its local
//!    binarization.
//! 3. [`feature`]: per-event corner/edge/flat labeling built on a
//!    Harris-style score over binarized patches.
//! 4. [`window`]: tumbling-window counts of raw and labeled events.
//! 5. [`slip`]: noise-threshold sampling and the staged slip detectors.
//! 6. [`fuzzy`]: Mamdani grip-force inference and the monotone force policy.
//! 7. [`sim`]: a 1-D grasp plant plus an event-camera emulator, wired into a
//!    closed loop for end-to-end experiments.
//!
//! Everything is deterministic for a fixed seed: replaying the same scenario
//! produces byte-identical event logs and reports.

pub mod event;
pub mod feature;
pub mod fuzzy;
pub mod sae;
pub mod sim;
pub mod slip;
pub mod window;

pub use event::{Event, SensorGeometry, TimeUs};
pub use feature::{FeatureClass, HarrisParams, LabeledEvent, StreamLabeler};
pub use sae::{BinaryPatch, SurfaceOfActiveEvents};
pub use slip::{DetectorConfig, NoiseThresholds, SlipEvent, SlipKind, StageController};
pub use window::{WindowAccumulator, WindowCounts};
