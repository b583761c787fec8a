//! Tumbling-window accumulation of raw and labeled event counts.
//!
//! Window `k` covers `[k*dt, (k+1)*dt)` microseconds. Windows are emitted in
//! order without gaps, including empty ones, so downstream consumers see a
//! complete partition of the covered time span.

use serde::{Deserialize, Serialize};

use crate::event::TimeUs;
use crate::feature::{FeatureClass, LabeledEvent};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowCounts {
    pub window_index: u64,
    pub t_start: TimeUs,
    /// All accepted events in the window, labeled or not.
    pub c_raw: u32,
    pub c_edge: u32,
    pub c_corner: u32,
}

impl WindowCounts {
    fn empty(window_index: u64, dt_us: u64) -> Self {
        WindowCounts { window_index, t_start: window_index * dt_us, c_raw: 0, c_edge: 0, c_corner: 0 }
    }
}

/// Streaming accumulator. Feed labeled events in timestamp order; completed
/// windows (which can only complete once a later timestamp or an explicit
/// flush passes their end) are appended to the caller's buffer.
#[derive(Clone, Debug)]
pub struct WindowAccumulator {
    dt_us: u64,
    cur: WindowCounts,
}

impl WindowAccumulator {
    pub fn new(dt_us: u64) -> Self {
        assert!(dt_us > 0, "window length must be positive");
        WindowAccumulator { dt_us, cur: WindowCounts::empty(0, dt_us) }
    }

    pub fn dt_us(&self) -> u64 {
        self.dt_us
    }

    /// Counts one event. `label` is `None` for events that only contribute
    /// to the raw count. Panics if `t` precedes the currently open window:
    /// callers feed ordered streams.
    pub fn push(&mut self, t: TimeUs, label: Option<FeatureClass>, out: &mut Vec<WindowCounts>) {
        let idx = t / self.dt_us;
        assert!(
            idx >= self.cur.window_index,
            "event at {t}us precedes open window {}",
            self.cur.window_index
        );
        while self.cur.window_index < idx {
            let next = WindowCounts::empty(self.cur.window_index + 1, self.dt_us);
            out.push(std::mem::replace(&mut self.cur, next));
        }
        self.cur.c_raw += 1;
        match label {
            Some(FeatureClass::Edge) => self.cur.c_edge += 1,
            Some(FeatureClass::Corner) => self.cur.c_corner += 1,
            _ => {}
        }
    }

    pub fn push_labeled(&mut self, e: &LabeledEvent, out: &mut Vec<WindowCounts>) {
        self.push(e.event.t, Some(e.label), out);
    }

    /// Emits every window that ends at or before `t_end`, empty or not.
    pub fn flush_through(&mut self, t_end: TimeUs, out: &mut Vec<WindowCounts>) {
        while (self.cur.window_index + 1) * self.dt_us <= t_end {
            let next = WindowCounts::empty(self.cur.window_index + 1, self.dt_us);
            out.push(std::mem::replace(&mut self.cur, next));
        }
    }
}

/// Accumulates a finished labeled stream into windows. The covered span runs
/// to `span_end_us` when given (flushing trailing empty windows), otherwise
/// to the end of the last event's window.
pub fn accumulate_windows(
    events: &[LabeledEvent],
    dt_us: u64,
    span_end_us: Option<TimeUs>,
) -> Vec<WindowCounts> {
    let mut acc = WindowAccumulator::new(dt_us);
    let mut out = Vec::new();
    for e in events {
        acc.push_labeled(e, &mut out);
    }
    let end = match (span_end_us, events.last()) {
        (Some(end), _) => end,
        (None, Some(last)) => (last.event.t / dt_us + 1) * dt_us,
        (None, None) => 0,
    };
    acc.flush_through(end, &mut out);
    out
}
