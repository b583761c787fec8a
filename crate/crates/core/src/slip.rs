//! Windowed slip detection behind a three-stage grasp protocol.
//!
//! Stage 1 (sampling) watches an idle scene and records the worst per-window
//! raw/edge/corner counts as noise thresholds. Stage 2 (grasping) freezes
//! those thresholds while the gripper closes. Stage 3 (monitoring) flags a
//! window as slip when its counts exceed the biased thresholds:
//!
//! * baseline: `c_raw >= th_rmax + s_bias * th_rmax`
//! * feature:  the same test on `c_edge` against `th_emax` AND on `c_corner`
//!   against `th_cmax`; both must exceed.
//!
//! Counts inside the bias band `[th, th * (1 + s_bias))` are treated as
//! noise. The first flagged window after a long-enough quiet gap is an
//! incipient slip; later flags in the same episode are gross slip.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::TimeUs;
use crate::window::WindowCounts;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseThresholds {
    /// Largest per-window raw count seen while sampling.
    pub th_rmax: u32,
    /// Largest per-window edge count.
    pub th_emax: u32,
    /// Largest per-window corner count.
    pub th_cmax: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Tumbling window length.
    pub dt_us: u64,
    /// Relative safety margin over the sampled thresholds.
    pub s_bias: f64,
    /// Unflagged time that separates slip episodes.
    pub episode_gap_us: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig { dt_us: 500, s_bias: 0.10, episode_gap_us: 100_000 }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), SlipError> {
        if self.dt_us == 0 {
            return Err(SlipError::InvalidConfig("dt_us must be positive".into()));
        }
        if !(self.s_bias >= 0.0) {
            return Err(SlipError::InvalidConfig("s_bias must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlipKind {
    /// First flagged window of an episode.
    Incipient,
    /// Continuation flags within an episode.
    Gross,
}

/// Which detector produced a slip event, with its triggering counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "detector")]
pub enum SlipMagnitude {
    Baseline { c_raw: u32 },
    Feature { c_edge: u32, c_corner: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlipEvent {
    pub window_index: u64,
    pub kind: SlipKind,
    pub magnitude: SlipMagnitude,
    /// End of the triggering window: when the decision was available.
    pub t_detect_us: TimeUs,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SlipError {
    #[error("cannot derive noise thresholds from an empty sample")]
    EmptySample,
    #[error("stage violation: {0}")]
    StageViolation(String),
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
}

/// Worst-case per-window counts over a sampling run.
pub fn sample_noise_thresholds(windows: &[WindowCounts]) -> Result<NoiseThresholds, SlipError> {
    if windows.is_empty() {
        return Err(SlipError::EmptySample);
    }
    Ok(NoiseThresholds {
        th_rmax: windows.iter().map(|w| w.c_raw).max().unwrap(),
        th_emax: windows.iter().map(|w| w.c_edge).max().unwrap(),
        th_cmax: windows.iter().map(|w| w.c_corner).max().unwrap(),
    })
}

/// `count >= th + s_bias * th`, with a one-part-per-billion guard so integer
/// products like `100 * 1.1` cannot miss by a rounding ulp. A zero count is
/// never an exceedance: empty windows are not activity even under degenerate
/// all-zero thresholds.
#[inline]
fn exceeds_biased(count: u32, th: u32, s_bias: f64) -> bool {
    let biased = th as f64 + s_bias * th as f64;
    count > 0 && count as f64 >= biased - 1e-9
}

/// Baseline detector: raw count against the biased raw threshold. Returns
/// the triggering count.
pub fn detect_baseline(w: &WindowCounts, th: &NoiseThresholds, s_bias: f64) -> Option<u32> {
    exceeds_biased(w.c_raw, th.th_rmax, s_bias).then_some(w.c_raw)
}

/// Feature detector: edge and corner counts must both exceed their biased
/// thresholds. Returns the triggering `(c_edge, c_corner)`.
pub fn detect_feature(w: &WindowCounts, th: &NoiseThresholds, s_bias: f64) -> Option<(u32, u32)> {
    (exceeds_biased(w.c_edge, th.th_emax, s_bias)
        && exceeds_biased(w.c_corner, th.th_cmax, s_bias))
    .then_some((w.c_edge, w.c_corner))
}

/// Assigns incipient/gross to a sequence of flagged windows: a flag is
/// incipient when at least `episode_gap_us` of unflagged time separates it
/// from the previous flag.
#[derive(Clone, Debug)]
pub struct EpisodeTracker {
    dt_us: u64,
    episode_gap_us: u64,
    last_flag_start: Option<TimeUs>,
}

impl EpisodeTracker {
    pub fn new(cfg: &DetectorConfig) -> Self {
        EpisodeTracker { dt_us: cfg.dt_us, episode_gap_us: cfg.episode_gap_us, last_flag_start: None }
    }

    pub fn classify(&mut self, t_start: TimeUs) -> SlipKind {
        let kind = match self.last_flag_start {
            None => SlipKind::Incipient,
            Some(prev) => {
                let quiet = t_start.saturating_sub(prev + self.dt_us);
                if quiet >= self.episode_gap_us {
                    SlipKind::Incipient
                } else {
                    SlipKind::Gross
                }
            }
        };
        self.last_flag_start = Some(t_start);
        kind
    }
}

/// Filters a flagged sequence down to episode onsets.
pub fn extract_incipient(events: &[SlipEvent]) -> Vec<SlipEvent> {
    events.iter().filter(|e| e.kind == SlipKind::Incipient).copied().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageState {
    Sampling,
    Grasping,
    Monitoring,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageCommand {
    /// Freeze thresholds from the windows sampled so far and close the
    /// gripper at minimal force.
    Grasp,
    /// Begin flagging slip windows.
    Monitor,
}

/// Drives the three-stage protocol over a window stream. Transitions only
/// move forward; entering monitoring without frozen thresholds is an error.
#[derive(Clone, Debug)]
pub struct StageController {
    cfg: DetectorConfig,
    state: StageState,
    sampled_windows: u64,
    sample_max: (u32, u32, u32),
    thresholds: Option<NoiseThresholds>,
    baseline_tracker: EpisodeTracker,
    feature_tracker: EpisodeTracker,
}

impl StageController {
    pub fn new(cfg: DetectorConfig) -> Result<Self, SlipError> {
        cfg.validate()?;
        Ok(StageController {
            state: StageState::Sampling,
            sampled_windows: 0,
            sample_max: (0, 0, 0),
            thresholds: None,
            baseline_tracker: EpisodeTracker::new(&cfg),
            feature_tracker: EpisodeTracker::new(&cfg),
            cfg,
        })
    }

    /// Starts directly in monitoring with previously sampled thresholds,
    /// e.g. when replaying a log against a saved thresholds file.
    pub fn monitoring(thresholds: NoiseThresholds, cfg: DetectorConfig) -> Result<Self, SlipError> {
        let mut c = StageController::new(cfg)?;
        c.thresholds = Some(thresholds);
        c.state = StageState::Monitoring;
        Ok(c)
    }

    pub fn state(&self) -> StageState {
        self.state
    }

    pub fn thresholds(&self) -> Option<NoiseThresholds> {
        self.thresholds
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    pub fn command(&mut self, cmd: StageCommand) -> Result<(), SlipError> {
        match (self.state, cmd) {
            (StageState::Sampling, StageCommand::Grasp) => {
                if self.sampled_windows == 0 {
                    return Err(SlipError::EmptySample);
                }
                let (r, e, c) = self.sample_max;
                self.thresholds = Some(NoiseThresholds { th_rmax: r, th_emax: e, th_cmax: c });
                self.state = StageState::Grasping;
                Ok(())
            }
            (StageState::Grasping, StageCommand::Monitor) => {
                debug_assert!(self.thresholds.is_some());
                self.state = StageState::Monitoring;
                Ok(())
            }
            (state, cmd) => Err(SlipError::StageViolation(format!(
                "command {cmd:?} not allowed in stage {state:?}"
            ))),
        }
    }

    /// Feeds one completed window. While sampling it extends the running
    /// maxima; while grasping it is ignored (thresholds are frozen, flagging
    /// has not begun); while monitoring it runs both detectors and returns
    /// zero, one, or two slip events (baseline first).
    pub fn push_window(&mut self, w: &WindowCounts) -> Vec<SlipEvent> {
        let mut out = Vec::new();
        match self.state {
            StageState::Sampling => {
                self.sampled_windows += 1;
                self.sample_max.0 = self.sample_max.0.max(w.c_raw);
                self.sample_max.1 = self.sample_max.1.max(w.c_edge);
                self.sample_max.2 = self.sample_max.2.max(w.c_corner);
            }
            StageState::Grasping => {}
            StageState::Monitoring => {
                let th = self.thresholds.expect("monitoring requires thresholds");
                let t_detect = w.t_start + self.cfg.dt_us;
                if let Some(c_raw) = detect_baseline(w, &th, self.cfg.s_bias) {
                    out.push(SlipEvent {
                        window_index: w.window_index,
                        kind: self.baseline_tracker.classify(w.t_start),
                        magnitude: SlipMagnitude::Baseline { c_raw },
                        t_detect_us: t_detect,
                    });
                }
                if let Some((c_edge, c_corner)) = detect_feature(w, &th, self.cfg.s_bias) {
                    out.push(SlipEvent {
                        window_index: w.window_index,
                        kind: self.feature_tracker.classify(w.t_start),
                        magnitude: SlipMagnitude::Feature { c_edge, c_corner },
                        t_detect_us: t_detect,
                    });
                }
            }
        }
        out
    }
}
