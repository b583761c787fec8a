//! The closed loop: plant → event synthesis → labeling → windowed detection
//! → fuzzy force suppression → actuator, advanced tick by tick.
//!
//! Each tick first finishes any detection windows that ended, letting the
//! controller react, then applies schedule actions (stage changes, lift,
//! load drops), steps the actuator and plant, and finally synthesizes the
//! events the motion produced. Commands take effect no earlier than the
//! decision timestamp plus the configured sensor latency, and reach the
//! plant through a first-order actuator lag.

use std::collections::VecDeque;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::event::{Event, TimeUs};
use crate::feature::{FeatureClass, StreamLabeler};
use crate::fuzzy::{suppress_step, ControllerState};
use crate::sim::emulator::{EventSynth, TaggedEvent};
use crate::sim::metric::{slip_metric, EventFrame};
use crate::sim::plant::{PlantState, GRAVITY};
use crate::sim::scenario::{ControlDetector, Scenario};
use crate::sim::SimError;
use crate::slip::{
    NoiseThresholds, SlipEvent, SlipKind, SlipMagnitude, StageCommand, StageController,
};
use crate::window::{WindowAccumulator, WindowCounts};

/// Half-open interval of ground-truth slipping, microseconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlipInterval {
    pub t_start_us: TimeUs,
    pub t_end_us: TimeUs,
}

impl SlipInterval {
    fn overlaps(&self, lo: TimeUs, hi: TimeUs) -> bool {
        lo < self.t_end_us && self.t_start_us < hi
    }
}

/// Plant truth after the tick starting at `t_us`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSample {
    pub t_us: TimeUs,
    pub slipping: bool,
    pub y_pos_m: f64,
}

/// Grip actually applied at a window boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceSample {
    pub t_us: TimeUs,
    pub grip_percent: f64,
}

/// One emitted force command with its full inference context.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    /// When the command reached the actuator (decision time + latency).
    pub t_us: TimeUs,
    pub window_index: u64,
    pub input_edge: f64,
    pub input_corner: f64,
    /// Defuzzified force before the session policy.
    pub g_hat: f64,
    pub commanded_percent: f64,
}

/// Detection outcome of one approach over a run, judged against plant truth.
/// An incipient flag counts as true when its window, widened by one window
/// on each side, overlaps a ground-truth slip interval.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub slip_events: Vec<SlipEvent>,
    pub incipient_count: u32,
    pub true_incipient: u32,
    pub false_incipient: u32,
    pub first_true_detect_us: Option<TimeUs>,
    /// First true incipient detection minus first ground-truth onset.
    pub detection_latency_us: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub scenario: String,
    pub seed: u64,
    pub dt_us: u64,
    pub thresholds: NoiseThresholds,
    pub baseline: DetectorReport,
    pub feature: DetectorReport,
    pub commands: Vec<CommandRecord>,
    pub force_trace: Vec<ForceSample>,
    pub ground_truth_intervals: Vec<SlipInterval>,
    /// Corner-centroid displacement between the first and last frames of
    /// the monitored run, millimeters; absent when too few corners fired.
    pub q_sm_mm: Option<f64>,
    pub final_slipping: bool,
    pub final_grip_percent: f64,
    /// At least one force command was issued and the run ended not slipping.
    pub suppressed: bool,
    pub total_events: u64,
    pub total_windows: u64,
}

/// Everything a run produces: the report plus the raw streams that back it.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedLoopOutput {
    pub report: SimulationReport,
    pub events: Vec<Event>,
    pub ground_truth: Vec<GroundTruthSample>,
    pub windows: Vec<WindowCounts>,
}

/// First-order lag toward the latest command, with an optional transient
/// boost to `(1 + overshoot) * command` for two time constants.
struct Actuator {
    actual: f64,
    command: f64,
    boost_until: TimeUs,
    alpha: f64,
    overshoot: f64,
    boost_us: TimeUs,
}

impl Actuator {
    fn new(lag_s: f64, overshoot: f64, tick_us: u64) -> Actuator {
        let tick_s = tick_us as f64 * 1e-6;
        let alpha = if lag_s > 0.0 { 1.0 - (-tick_s / lag_s).exp() } else { 1.0 };
        Actuator {
            actual: 0.0,
            command: 0.0,
            boost_until: 0,
            alpha,
            overshoot,
            boost_us: (2.0 * lag_s * 1e6) as TimeUs,
        }
    }

    fn accept(&mut self, command: f64, t_us: TimeUs) {
        self.command = command;
        self.boost_until = t_us + self.boost_us;
    }

    fn step(&mut self, t_us: TimeUs) -> f64 {
        let target = if t_us < self.boost_until {
            (self.command * (1.0 + self.overshoot)).min(100.0)
        } else {
            self.command
        };
        self.actual += (target - self.actual) * self.alpha;
        self.actual
    }
}

fn judge(
    events: Vec<SlipEvent>,
    truth: &[SlipInterval],
    dt_us: u64,
    first_onset: Option<TimeUs>,
) -> DetectorReport {
    let mut r = DetectorReport { slip_events: events, ..DetectorReport::default() };
    for ev in &r.slip_events {
        if ev.kind != SlipKind::Incipient {
            continue;
        }
        r.incipient_count += 1;
        let lo = ev.t_detect_us.saturating_sub(2 * dt_us);
        let hi = ev.t_detect_us + dt_us;
        if truth.iter().any(|iv| iv.overlaps(lo, hi)) {
            r.true_incipient += 1;
            if r.first_true_detect_us.is_none() {
                r.first_true_detect_us = Some(ev.t_detect_us);
            }
        } else {
            r.false_incipient += 1;
        }
    }
    r.detection_latency_us = match (r.first_true_detect_us, first_onset) {
        (Some(det), Some(onset)) => Some(det.saturating_sub(onset)),
        _ => None,
    };
    r
}

/// Runs one scenario to completion. Deterministic: a given scenario
/// (including its seed) always produces identical output.
pub fn run_closed_loop(scenario: &Scenario) -> Result<ClosedLoopOutput, SimError> {
    scenario.validate()?;

    let tick = scenario.tick_us;
    let tick_s = tick as f64 * 1e-6;
    let dt_us = scenario.detector.dt_us;
    let align = |s: f64| -> TimeUs { ((s * 1e6 / tick as f64).round() as TimeUs) * tick };
    let t_grasp = align(scenario.timeline.grasp_at_s);
    let t_monitor = align(scenario.timeline.monitor_at_s);
    let t_lift = scenario.timeline.lift_at_s.map(align);
    let t_place = scenario.timeline.place_at_s.map(align);
    let t_end = align(scenario.timeline.end_at_s);

    let mut drops: VecDeque<(TimeUs, f64, f64)> = scenario
        .timeline
        .load_drops
        .iter()
        .map(|d| (align(d.at_s), d.mass_kg, d.impact_mps()))
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    drops.make_contiguous().sort_by_key(|d| d.0);
    let pulses: Vec<(TimeUs, TimeUs, f64)> = scenario
        .timeline
        .accel_pulses
        .iter()
        .map(|p| (align(p.at_s), align(p.at_s + p.duration_s), p.accel_mps2))
        .collect();

    let marker = scenario.marker();
    let mut synth = EventSynth::new(scenario.geometry, scenario.noise.clone());
    let mut plant = PlantState::new(
        scenario.plant.object_mass_kg,
        scenario.plant.mu,
        scenario.plant.newtons_per_percent,
    );
    let mut actuator = Actuator::new(
        scenario.actuator.lag_time_constant_s,
        scenario.actuator.overshoot_factor,
        tick,
    );
    let mut labeler = StreamLabeler::new(scenario.geometry, scenario.harris.clone())?;
    let mut acc = WindowAccumulator::new(dt_us);
    let mut stage = StageController::new(scenario.detector)?;
    let mut fuzzy_state = ControllerState::new(&scenario.fuzzy);
    let px_per_m = 1000.0 / scenario.plant.mm_per_px;

    let mut events: Vec<Event> = Vec::new();
    let mut ground_truth: Vec<GroundTruthSample> = Vec::new();
    let mut windows: Vec<WindowCounts> = Vec::new();
    let mut baseline_events: Vec<SlipEvent> = Vec::new();
    let mut feature_events: Vec<SlipEvent> = Vec::new();
    let mut commands: Vec<CommandRecord> = Vec::new();
    let mut force_trace: Vec<ForceSample> = Vec::new();
    let mut truth_intervals: Vec<SlipInterval> = Vec::new();
    let mut open_slip: Option<TimeUs> = None;

    let k_frame = scenario.frame_corner_count;
    let mut first_frame = EventFrame::new();
    let mut last_ring: VecDeque<(u16, u16)> = VecDeque::with_capacity(k_frame + 1);

    let mut pending: VecDeque<(TimeUs, f64)> = VecDeque::new();
    let mut win_scratch: Vec<WindowCounts> = Vec::new();
    let mut tick_events: Vec<TaggedEvent> = Vec::new();

    let handle_windows = |wins: &mut Vec<WindowCounts>,
                              stage: &mut StageController,
                              fuzzy_state: &mut ControllerState,
                              windows: &mut Vec<WindowCounts>,
                              baseline_events: &mut Vec<SlipEvent>,
                              feature_events: &mut Vec<SlipEvent>,
                              commands: &mut Vec<CommandRecord>,
                              pending: &mut VecDeque<(TimeUs, f64)>|
     -> Result<(), SimError> {
        for w in wins.drain(..) {
            for ev in stage.push_window(&w) {
                let triggers = match (ev.magnitude, scenario.control) {
                    (SlipMagnitude::Baseline { .. }, ControlDetector::Baseline) => true,
                    (SlipMagnitude::Feature { .. }, ControlDetector::Feature) => true,
                    _ => false,
                };
                if triggers {
                    let step = suppress_step(
                        w.c_edge as f64,
                        w.c_corner as f64,
                        &scenario.fuzzy,
                        fuzzy_state,
                    )?;
                    if let Some(g) = step.commanded {
                        let t_us = ev.t_detect_us + scenario.actuator.sensor_latency_us;
                        commands.push(CommandRecord {
                            t_us,
                            window_index: w.window_index,
                            input_edge: step.input_edge,
                            input_corner: step.input_corner,
                            g_hat: step.g_hat,
                            commanded_percent: g,
                        });
                        pending.push_back((t_us, g));
                    }
                }
                match ev.magnitude {
                    SlipMagnitude::Baseline { .. } => baseline_events.push(ev),
                    SlipMagnitude::Feature { .. } => feature_events.push(ev),
                }
            }
            windows.push(w);
        }
        Ok(())
    };

    let mut t0: TimeUs = 0;
    while t0 < t_end {
        // 1. Finish detection windows that ended by now; possibly command.
        acc.flush_through(t0, &mut win_scratch);
        handle_windows(
            &mut win_scratch,
            &mut stage,
            &mut fuzzy_state,
            &mut windows,
            &mut baseline_events,
            &mut feature_events,
            &mut commands,
            &mut pending,
        )?;

        // 2. Schedule actions due at this tick.
        if t0 == t_grasp {
            stage.command(StageCommand::Grasp)?;
            actuator.accept(scenario.initial_grip_percent, t0);
        }
        if t0 == t_monitor {
            stage.command(StageCommand::Monitor)?;
        }
        if t_lift == Some(t0) {
            plant.supported = false;
        }
        if t_place == Some(t0) {
            plant.supported = true;
        }
        while drops.front().is_some_and(|d| d.0 == t0) {
            let (_, mass, impact) = drops.pop_front().expect("front checked");
            plant.drop_load(mass, impact, scenario.plant.impact_efficiency);
        }
        while pending.front().is_some_and(|c| c.0 <= t0) {
            let (t_cmd, g) = pending.pop_front().expect("front checked");
            actuator.accept(g, t_cmd.max(t0));
        }

        // 3. Actuator and plant advance across [t0, t0 + tick).
        plant.grip_percent = actuator.step(t0);
        if t0 % dt_us == 0 {
            force_trace.push(ForceSample { t_us: t0, grip_percent: plant.grip_percent });
        }
        let disp0 = -plant.y_pos_m * px_per_m;
        let g_eff = GRAVITY
            + pulses
                .iter()
                .filter(|&&(a, b, _)| a <= t0 && t0 < b)
                .map(|&(_, _, acc)| acc)
                .sum::<f64>();
        plant.step(tick_s, g_eff);
        ground_truth.push(GroundTruthSample { t_us: t0, slipping: plant.slipping, y_pos_m: plant.y_pos_m });
        match (plant.slipping, open_slip) {
            (true, None) => open_slip = Some(t0),
            (false, Some(start)) => {
                truth_intervals.push(SlipInterval { t_start_us: start, t_end_us: t0 });
                open_slip = None;
            }
            _ => {}
        }

        // 4. Synthesize and label what the camera saw during this tick.
        let disp1 = -plant.y_pos_m * px_per_m;
        let (jx0, jy0) = synth.jitter_at(t0);
        let (jx1, jy1) = synth.jitter_at(t0 + tick);
        tick_events.clear();
        synth.synthesize(
            &marker,
            (jx0, jy0 + disp0),
            (jx1, jy1 + disp1),
            t0,
            t0 + tick,
            &mut tick_events,
        );
        for te in &tick_events {
            events.push(te.event);
            let labeled = labeler.process(&te.event)?;
            acc.push_labeled(&labeled, &mut win_scratch);
            debug_assert!(win_scratch.is_empty(), "in-tick events precede the next flush");
            if labeled.label == FeatureClass::Corner && stage.thresholds().is_some() {
                if first_frame.len() < k_frame {
                    first_frame.push(te.event.x, te.event.y);
                }
                last_ring.push_back((te.event.x, te.event.y));
                if last_ring.len() > k_frame {
                    last_ring.pop_front();
                }
            }
        }

        t0 += tick;
    }

    // Close out: remaining windows, open truth interval, the slip metric.
    acc.flush_through(t_end, &mut win_scratch);
    handle_windows(
        &mut win_scratch,
        &mut stage,
        &mut fuzzy_state,
        &mut windows,
        &mut baseline_events,
        &mut feature_events,
        &mut commands,
        &mut pending,
    )?;
    if let Some(start) = open_slip {
        truth_intervals.push(SlipInterval { t_start_us: start, t_end_us: t_end });
    }

    let mut last_frame = EventFrame::new();
    for &(x, y) in &last_ring {
        last_frame.push(x, y);
    }
    let q_sm_mm = slip_metric(&first_frame, &last_frame, scenario.plant.mm_per_px).ok();

    let first_onset = truth_intervals.first().map(|iv| iv.t_start_us);
    let thresholds = stage.thresholds().ok_or_else(|| {
        SimError::InvalidScenario("run ended before the grasp froze thresholds".into())
    })?;
    let report = SimulationReport {
        scenario: scenario.name.clone(),
        seed: scenario.noise.rng_seed,
        dt_us,
        thresholds,
        baseline: judge(baseline_events, &truth_intervals, dt_us, first_onset),
        feature: judge(feature_events, &truth_intervals, dt_us, first_onset),
        suppressed: !commands.is_empty() && !plant.slipping,
        commands,
        force_trace,
        ground_truth_intervals: truth_intervals,
        q_sm_mm,
        final_slipping: plant.slipping,
        final_grip_percent: plant.grip_percent,
        total_events: events.len() as u64,
        total_windows: windows.len() as u64,
    };

    Ok(ClosedLoopOutput { report, events, ground_truth, windows })
}

/// Ground-truth sidecar: `t_us,slipping,y_pos_m` per emulator tick.
pub fn write_ground_truth_csv<W: Write>(
    mut out: W,
    samples: &[GroundTruthSample],
) -> io::Result<()> {
    writeln!(out, "t_us,slipping,y_pos_m")?;
    for s in samples {
        writeln!(out, "{},{},{:.9}", s.t_us, s.slipping as u8, s.y_pos_m)?;
    }
    Ok(())
}

/// Per-window counts: `window_index,t_start_us,c_raw,c_edge,c_corner`.
pub fn write_windows_csv<W: Write>(mut out: W, windows: &[WindowCounts]) -> io::Result<()> {
    writeln!(out, "window_index,t_start_us,c_raw,c_edge,c_corner")?;
    for w in windows {
        writeln!(out, "{},{},{},{},{}", w.window_index, w.t_start, w.c_raw, w.c_edge, w.c_corner)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scenario::Scenario;

    #[test]
    fn calm_run_holds_and_stays_quiet() {
        let out = run_closed_loop(&Scenario::builtin("calm").unwrap()).unwrap();
        let r = &out.report;
        assert!(r.ground_truth_intervals.is_empty(), "calm must never slip");
        assert!(!r.final_slipping);
        assert_eq!(r.feature.incipient_count, 0, "feature flagged a calm run");
        assert!(r.commands.is_empty());
        assert_eq!(r.total_windows, out.windows.len() as u64);
        // Windows tile the whole run with nothing dropped.
        assert_eq!(r.total_windows * r.dt_us, 1_200_000);
    }

    #[test]
    fn heavy_load_drop_is_detected_and_suppressed() {
        let out = run_closed_loop(&Scenario::builtin("load_drop_heavy").unwrap()).unwrap();
        let r = &out.report;
        assert_eq!(r.ground_truth_intervals.len(), 1, "one slip episode expected");
        assert!(r.feature.true_incipient >= 1, "feature missed the slip");
        assert!(r.suppressed, "commands {:?} final_slipping {}", r.commands, r.final_slipping);
        assert!(!r.final_slipping);
        assert!(r.final_grip_percent > 25.0);
        let lat = r.feature.detection_latency_us.expect("true detection");
        assert!(lat <= 2 * r.dt_us, "latency {lat}us");
        // Commanded forces strictly increase and stay within range.
        for pair in r.commands.windows(2) {
            assert!(pair[1].commanded_percent > pair[0].commanded_percent);
        }
        for c in &r.commands {
            assert!(c.commanded_percent > 10.0 && c.commanded_percent <= 100.0);
        }
    }

    #[test]
    fn force_rises_only_after_its_command() {
        let out = run_closed_loop(&Scenario::builtin("load_drop_heavy").unwrap()).unwrap();
        let r = &out.report;
        let first_cmd = r.commands.first().expect("a command").t_us;
        let initial = 25.0;
        for f in &r.force_trace {
            if f.t_us < first_cmd {
                assert!(
                    f.grip_percent <= initial + 1e-9,
                    "grip {} at {}us precedes the first command at {}us",
                    f.grip_percent,
                    f.t_us,
                    first_cmd
                );
            }
        }
        let last = r.force_trace.last().unwrap();
        assert!(last.grip_percent > initial);
    }

    #[test]
    fn ground_truth_csv_shape() {
        let samples = vec![
            GroundTruthSample { t_us: 0, slipping: false, y_pos_m: 0.0 },
            GroundTruthSample { t_us: 50, slipping: true, y_pos_m: -0.001 },
        ];
        let mut buf = Vec::new();
        write_ground_truth_csv(&mut buf, &samples).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t_us,slipping,y_pos_m"));
        assert_eq!(lines.next(), Some("0,0,0.000000000"));
        assert_eq!(lines.next(), Some("50,1,-0.001000000"));
    }
}
