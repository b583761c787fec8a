//! Event synthesis: integer-pixel crossings of marker contour points plus
//! seeded background noise.
//!
//! The synthesizer advances in fixed ticks. Within one tick interval it
//! compares each contour point's integer pixel at the interval ends and
//! emits an event when it changed; background noise adds Poisson-distributed
//! events uniform over the sensor, with the rate shaped by a flicker
//! schedule. Everything derives from one seeded generator, so a scenario
//! replays to byte-identical logs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::event::{Event, SensorGeometry, TimeUs};
use crate::sim::marker::{Marker, PointKind};

/// Multiplies the background rate inside `[t_start_us, t_end_us)`. Entries
/// may describe short bursts or long illumination swings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlickerBurst {
    pub t_start_us: TimeUs,
    pub t_end_us: TimeUs,
    pub rate_multiplier: f64,
}

/// Sinusoidal whole-image jitter of the marker, amplitude in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vibration {
    pub amplitude_px: f64,
    pub frequency_hz: f64,
}

impl Vibration {
    /// Circular jitter: x leads y by a quarter period so the two axes do not
    /// cross pixel boundaries in lockstep.
    pub fn offset_at(&self, t_us: TimeUs) -> (f64, f64) {
        let phase = 2.0 * std::f64::consts::PI * self.frequency_hz * (t_us as f64 * 1e-6);
        (self.amplitude_px * phase.cos(), self.amplitude_px * phase.sin())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Background event rate over the whole sensor, events per second.
    pub base_rate_hz: f64,
    /// Rate multipliers; overlapping entries multiply together.
    pub flicker_schedule: Vec<FlickerBurst>,
    pub vibration: Option<Vibration>,
    pub rng_seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { base_rate_hz: 0.0, flicker_schedule: Vec::new(), vibration: None, rng_seed: 1 }
    }
}

impl NoiseModel {
    pub fn rate_at(&self, t_us: TimeUs) -> f64 {
        let mut rate = self.base_rate_hz;
        for b in &self.flicker_schedule {
            if b.t_start_us <= t_us && t_us < b.t_end_us {
                rate *= b.rate_multiplier;
            }
        }
        rate
    }
}

/// Where a synthetic event came from. Ground truth for generator tests; the
/// detection pipeline only ever sees the bare [`Event`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventSource {
    Contour(PointKind),
    Noise,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaggedEvent {
    pub event: Event,
    pub source: EventSource,
}

/// Seeded event synthesizer. One instance per run; its generator state is
/// part of the run's determinism.
#[derive(Debug)]
pub struct EventSynth {
    geometry: SensorGeometry,
    noise: NoiseModel,
    rng: ChaCha8Rng,
    scratch: Vec<TaggedEvent>,
}

impl EventSynth {
    pub fn new(geometry: SensorGeometry, noise: NoiseModel) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(noise.rng_seed);
        EventSynth { geometry, noise, rng, scratch: Vec::new() }
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// Marker jitter offset at `t`, honoring the vibration model.
    pub fn jitter_at(&self, t_us: TimeUs) -> (f64, f64) {
        self.noise.vibration.map_or((0.0, 0.0), |v| v.offset_at(t_us))
    }

    /// Synthesizes all events of the tick interval `[t0, t1)`: one event per
    /// contour point whose integer pixel changed between the poses (pose =
    /// marker offset including jitter), plus background noise. Events are
    /// appended to `out` in nondecreasing timestamp order; contour events
    /// carry the interval start time. Points outside the sensor are dropped.
    pub fn synthesize(
        &mut self,
        marker: &Marker,
        pose0: (f64, f64),
        pose1: (f64, f64),
        t0: TimeUs,
        t1: TimeUs,
        out: &mut Vec<TaggedEvent>,
    ) {
        debug_assert!(t0 < t1);
        self.scratch.clear();

        for i in 0..marker.points.len() {
            let (x0, y0) = marker.position(i, pose0);
            let (x1, y1) = marker.position(i, pose1);
            let (px0, py0) = (x0.floor() as i64, y0.floor() as i64);
            let (px1, py1) = (x1.floor() as i64, y1.floor() as i64);
            if px0 == px1 && py0 == py1 {
                continue;
            }
            if px1 < 0
                || py1 < 0
                || px1 >= self.geometry.width as i64
                || py1 >= self.geometry.height as i64
            {
                continue;
            }
            let (ddx, ddy) = (px1 - px0, py1 - py0);
            let pol = if ddy.abs() >= ddx.abs() { ddy.signum() } else { ddx.signum() } as i8;
            self.scratch.push(TaggedEvent {
                event: Event { t: t0, x: px1 as u16, y: py1 as u16, pol },
                source: EventSource::Contour(marker.points[i].kind),
            });
        }

        let lambda = self.noise.rate_at(t0) * (t1 - t0) as f64 * 1e-6;
        if lambda > 0.0 {
            let n = Poisson::new(lambda).expect("positive lambda").sample(&mut self.rng) as u64;
            for _ in 0..n {
                let t = self.rng.random_range(t0..t1);
                let x = self.rng.random_range(0..self.geometry.width);
                let y = self.rng.random_range(0..self.geometry.height);
                let pol = if self.rng.random::<bool>() { 1 } else { -1 };
                self.scratch.push(TaggedEvent { event: Event { t, x, y, pol }, source: EventSource::Noise });
            }
        }

        // Stable sort: equal timestamps keep generation order, so output is
        // fully deterministic.
        self.scratch.sort_by_key(|te| te.event.t);
        out.extend_from_slice(&self.scratch);
    }
}
