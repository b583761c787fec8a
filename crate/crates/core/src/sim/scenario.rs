//! Scenario configuration: the physical setup, disturbance timeline, and
//! pipeline parameters for one closed-loop run, plus the bundled scenarios.

use serde::{Deserialize, Serialize};

use crate::event::{SensorGeometry, TimeUs};
use crate::feature::HarrisParams;
use crate::fuzzy::FuzzyConfig;
use crate::sim::emulator::{FlickerBurst, NoiseModel, Vibration};
use crate::sim::marker::{Marker, MarkerShape};
use crate::sim::SimError;
use crate::slip::DetectorConfig;

/// Physical constants of the grasp.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantParams {
    pub object_mass_kg: f64,
    /// Contact friction coefficient.
    pub mu: f64,
    /// Normal force per contact per percent of grip.
    pub newtons_per_percent: f64,
    /// Optical scale tying image pixels to object millimeters.
    pub mm_per_px: f64,
    /// Fraction of a dropped load's momentum transferred to the held object.
    pub impact_efficiency: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            object_mass_kg: 0.2,
            mu: 0.5,
            newtons_per_percent: 0.1,
            mm_per_px: 0.05,
            impact_efficiency: 0.35,
        }
    }
}

/// Grip actuator response model: a first-order lag toward the commanded
/// force. A positive `overshoot_factor` drives the lag toward
/// `(1 + factor) * command` for two time constants after each command before
/// settling on the command itself, mimicking a real gripper's transient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActuatorParams {
    pub lag_time_constant_s: f64,
    pub overshoot_factor: f64,
    /// Delay between a detection decision and the command reaching the
    /// actuator.
    pub sensor_latency_us: u64,
}

impl Default for ActuatorParams {
    fn default() -> Self {
        ActuatorParams { lag_time_constant_s: 0.03, overshoot_factor: 0.0, sensor_latency_us: 0 }
    }
}

/// A mass dropped onto the held object from a height; the impact both adds
/// standing weight and kicks the object downward.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadDrop {
    pub at_s: f64,
    pub mass_kg: f64,
    pub drop_height_m: f64,
}

impl LoadDrop {
    /// Speed the load arrives with after free-falling `drop_height_m`.
    pub fn impact_mps(&self) -> f64 {
        (2.0 * crate::sim::GRAVITY * self.drop_height_m).sqrt()
    }
}

/// Extra downward acceleration over an interval, modeling an arm jerk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccelPulse {
    pub at_s: f64,
    pub duration_s: f64,
    pub accel_mps2: f64,
}

/// Phase schedule of a run. The run starts in the noise-sampling stage;
/// `grasp_at_s` closes the gripper to the initial grip and freezes the
/// thresholds, `monitor_at_s` arms detection, `lift_at_s` removes the
/// support under the object, and `place_at_s` restores it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Timeline {
    pub grasp_at_s: f64,
    pub monitor_at_s: f64,
    pub lift_at_s: Option<f64>,
    pub place_at_s: Option<f64>,
    pub end_at_s: f64,
    pub load_drops: Vec<LoadDrop>,
    pub accel_pulses: Vec<AccelPulse>,
}

impl Default for Timeline {
    fn default() -> Self {
        Timeline {
            grasp_at_s: 0.40,
            monitor_at_s: 0.50,
            lift_at_s: Some(0.60),
            place_at_s: None,
            end_at_s: 1.20,
            load_drops: Vec::new(),
            accel_pulses: Vec::new(),
        }
    }
}

/// Which detector's slip events drive force suppression. Both detectors
/// always run and are reported; this only selects the control trigger.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlDetector {
    Baseline,
    Feature,
}

/// Full configuration of one closed-loop run. Serializable as TOML so runs
/// can be configured from files; [`Scenario::builtin`] provides the bundled
/// set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub geometry: SensorGeometry,
    pub marker_shape: MarkerShape,
    /// Marker center in pixels at zero slip.
    pub marker_center_px: (f64, f64),
    pub noise: NoiseModel,
    pub plant: PlantParams,
    pub actuator: ActuatorParams,
    pub timeline: Timeline,
    pub detector: DetectorConfig,
    pub harris: HarrisParams,
    pub fuzzy: FuzzyConfig,
    pub control: ControlDetector,
    /// Grip applied when the gripper first closes, percent.
    pub initial_grip_percent: f64,
    /// Corner events per slip-metric frame.
    pub frame_corner_count: usize,
    /// Emulator step; the detection window must be a whole number of ticks.
    pub tick_us: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "custom".into(),
            description: String::new(),
            geometry: SensorGeometry::default(),
            marker_shape: MarkerShape::Square { side_px: 48.6 },
            marker_center_px: (120.3, 76.4),
            noise: NoiseModel {
                base_rate_hz: 10_000.0,
                flicker_schedule: Vec::new(),
                vibration: Some(Vibration { amplitude_px: 0.45, frequency_hz: 90.0 }),
                rng_seed: 1,
            },
            plant: PlantParams::default(),
            actuator: ActuatorParams::default(),
            timeline: Timeline::default(),
            detector: DetectorConfig::default(),
            // The emulated marker is sparse compared to a real textured scene:
            // a binarization depth of 20 pads fast-moving contour patches with
            // stale off-contour pixels and starves the edge class, so the
            // simulated rigs run a shallower depth with a raised corner bar.
            harris: HarrisParams {
                n_latest: 14,
                corner_threshold: 12.0,
                ..HarrisParams::default()
            },
            fuzzy: FuzzyConfig::with_input_ranges(0.0, 500.0, 0.0, 30.0),
            control: ControlDetector::Feature,
            initial_grip_percent: 25.0,
            frame_corner_count: 16,
            tick_us: 50,
        }
    }
}

/// Names accepted by [`Scenario::builtin`].
pub const BUILTIN_SCENARIOS: &[&str] = &[
    "calm",
    "load_drop_light",
    "load_drop_heavy",
    "flicker_noise",
    "full_manipulation",
    "full_manipulation_flicker",
];

impl Scenario {
    /// A bundled scenario by name, or `None` for unknown names.
    pub fn builtin(name: &str) -> Option<Scenario> {
        let mut s = Scenario::default();
        s.name = name.into();
        match name {
            "calm" => {
                s.description = "steady grasp and lift; nothing should be flagged".into();
            }
            "load_drop_light" => {
                s.description = "an 80 g load lands on the held object mid-hold".into();
                s.timeline.end_at_s = 1.40;
                s.timeline.load_drops =
                    vec![LoadDrop { at_s: 0.80, mass_kg: 0.08, drop_height_m: 0.10 }];
            }
            "load_drop_heavy" => {
                s.description = "a 200 g load lands on the held object mid-hold".into();
                s.timeline.end_at_s = 1.40;
                s.timeline.load_drops =
                    vec![LoadDrop { at_s: 0.80, mass_kg: 0.20, drop_height_m: 0.10 }];
            }
            "flicker_noise" => {
                s.description =
                    "illumination bursts and swings with the object safely held; no real slip"
                        .into();
                s.timeline.lift_at_s = None;
                s.timeline.end_at_s = 2.00;
                s.noise.vibration =
                    Some(Vibration { amplitude_px: 0.30, frequency_hz: 90.0 });
                s.noise.flicker_schedule = flicker_schedule(0.0);
            }
            "full_manipulation" => {
                s.description =
                    "cage lightly, lift (slips), take a dropped load (slips), place".into();
                full_manipulation_base(&mut s);
            }
            "full_manipulation_flicker" => {
                s.description =
                    "the full manipulation routine under illumination disturbances".into();
                full_manipulation_base(&mut s);
                s.noise.vibration =
                    Some(Vibration { amplitude_px: 0.30, frequency_hz: 90.0 });
                s.noise.flicker_schedule = flicker_schedule(0.05);
            }
            _ => return None,
        }
        Some(s)
    }

    /// Same scenario, different noise seed.
    pub fn with_seed(mut self, seed: u64) -> Scenario {
        self.noise.rng_seed = seed;
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Scenario, SimError> {
        let s: Scenario =
            toml::from_str(text).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn marker(&self) -> Marker {
        Marker::new(self.marker_shape, self.marker_center_px)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        fn bad(msg: impl Into<String>) -> Result<(), SimError> {
            Err(SimError::InvalidScenario(msg.into()))
        }
        let p = &self.plant;
        if !(p.object_mass_kg > 0.0) {
            return bad("object mass must be positive");
        }
        if !(p.mu > 0.0) {
            return bad("friction coefficient must be positive");
        }
        if !(p.newtons_per_percent > 0.0) {
            return bad("newtons_per_percent must be positive");
        }
        if !(p.mm_per_px > 0.0) {
            return bad("mm_per_px must be positive");
        }
        if !(0.0..=1.0).contains(&p.impact_efficiency) {
            return bad("impact_efficiency must be within [0, 1]");
        }
        if !(self.actuator.lag_time_constant_s >= 0.0) {
            return bad("actuator lag must be non-negative");
        }
        if !(self.actuator.overshoot_factor >= 0.0) {
            return bad("actuator overshoot must be non-negative");
        }
        if self.tick_us == 0 {
            return bad("tick_us must be positive");
        }
        if self.detector.dt_us % self.tick_us != 0 {
            return bad(format!(
                "window length {}us must be a whole number of {}us ticks",
                self.detector.dt_us, self.tick_us
            ));
        }
        self.detector.validate()?;
        self.harris.validate()?;
        self.fuzzy.validate()?;
        if !(0.0..=100.0).contains(&self.initial_grip_percent) {
            return bad("initial grip must be within [0, 100] percent");
        }
        if self.frame_corner_count == 0 {
            return bad("frame_corner_count must be positive");
        }

        let t = &self.timeline;
        if !(t.grasp_at_s > 0.0 && t.monitor_at_s > t.grasp_at_s && t.end_at_s > t.monitor_at_s) {
            return bad("timeline must order 0 < grasp < monitor < end");
        }
        if let Some(lift) = t.lift_at_s {
            if lift < t.monitor_at_s || lift >= t.end_at_s {
                return bad("lift must fall within [monitor, end)");
            }
            if let Some(place) = t.place_at_s {
                if place <= lift || place >= t.end_at_s {
                    return bad("place must fall within (lift, end)");
                }
            }
        } else if t.place_at_s.is_some() {
            return bad("place requires a lift");
        }
        for d in &t.load_drops {
            if d.at_s <= t.grasp_at_s || d.at_s >= t.end_at_s {
                return bad("load drops must fall within (grasp, end)");
            }
            if !(d.mass_kg > 0.0) || !(d.drop_height_m >= 0.0) {
                return bad("load drops need positive mass and non-negative height");
            }
        }
        for a in &t.accel_pulses {
            if a.at_s <= t.grasp_at_s || a.at_s >= t.end_at_s || !(a.duration_s > 0.0) {
                return bad("acceleration pulses must fall within (grasp, end)");
            }
        }

        if !(self.noise.base_rate_hz >= 0.0) {
            return bad("noise rate must be non-negative");
        }
        for b in &self.noise.flicker_schedule {
            if b.t_start_us >= b.t_end_us || !(b.rate_multiplier >= 0.0) {
                return bad("flicker entries need t_start < t_end and multiplier >= 0");
            }
        }
        if let Some(v) = self.noise.vibration {
            if !(v.amplitude_px >= 0.0) || !(v.frequency_hz >= 0.0) {
                return bad("vibration needs non-negative amplitude and frequency");
            }
        }

        let marker = self.marker();
        let margin = self.noise.vibration.map_or(0.0, |v| v.amplitude_px);
        for pose in [
            (-margin, -margin),
            (-margin, margin),
            (margin, -margin),
            (margin, margin),
        ] {
            if !marker.fits(self.geometry, pose) {
                return bad("marker must fit the sensor at its initial pose");
            }
        }
        Ok(())
    }
}

/// Shared shape of the two full-routine scenarios: cage at minimum force so
/// the lift itself slips, then take a heavy dropped load, then place.
fn full_manipulation_base(s: &mut Scenario) {
    s.initial_grip_percent = 10.0;
    s.timeline = Timeline {
        grasp_at_s: 0.40,
        monitor_at_s: 0.50,
        lift_at_s: Some(0.60),
        place_at_s: Some(1.80),
        end_at_s: 2.00,
        load_drops: vec![LoadDrop { at_s: 1.20, mass_kg: 0.30, drop_height_m: 0.05 }],
        accel_pulses: Vec::new(),
    };
    s.fuzzy = FuzzyConfig::with_input_ranges(0.0, 600.0, 0.0, 30.0);
}

/// Two hard bursts plus three slow swings, offset so variants can stagger
/// them against their own timelines.
fn flicker_schedule(shift_s: f64) -> Vec<FlickerBurst> {
    let us = |s: f64| ((s + shift_s) * 1e6) as TimeUs;
    vec![
        FlickerBurst { t_start_us: us(0.70), t_end_us: us(0.76), rate_multiplier: 3.0 },
        FlickerBurst { t_start_us: us(0.90), t_end_us: us(0.91), rate_multiplier: 25.0 },
        FlickerBurst { t_start_us: us(1.10), t_end_us: us(1.16), rate_multiplier: 3.0 },
        FlickerBurst { t_start_us: us(1.45), t_end_us: us(1.46), rate_multiplier: 25.0 },
        FlickerBurst { t_start_us: us(1.60), t_end_us: us(1.66), rate_multiplier: 3.0 },
    ]
}
