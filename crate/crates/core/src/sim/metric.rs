//! Slip-magnitude metric: how far the tracked corner pattern moved between
//! two snapshots, in millimeters.

use crate::feature::{FeatureClass, LabeledEvent};
use crate::sim::SimError;

/// A snapshot of corner-event pixel positions. Only the centroid matters:
/// averaging over a batch of corner events suppresses single-event jitter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventFrame {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl EventFrame {
    pub fn new() -> Self {
        EventFrame::default()
    }

    pub fn push(&mut self, x: u16, y: u16) {
        self.xs.push(x as f64);
        self.ys.push(y as f64);
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn centroid(&self) -> Option<(f64, f64)> {
        if self.xs.is_empty() {
            return None;
        }
        let n = self.xs.len() as f64;
        Some((self.xs.iter().sum::<f64>() / n, self.ys.iter().sum::<f64>() / n))
    }

    /// Frame of the first `k` corner-labeled events (fewer if the stream has
    /// fewer corners).
    pub fn first_corners(labeled: &[LabeledEvent], k: usize) -> EventFrame {
        let mut f = EventFrame::new();
        for le in labeled {
            if f.len() == k {
                break;
            }
            if le.label == FeatureClass::Corner {
                f.push(le.event.x, le.event.y);
            }
        }
        f
    }

    /// Frame of the last `k` corner-labeled events.
    pub fn last_corners(labeled: &[LabeledEvent], k: usize) -> EventFrame {
        let mut f = EventFrame::new();
        for le in labeled.iter().rev() {
            if f.len() == k {
                break;
            }
            if le.label == FeatureClass::Corner {
                f.push(le.event.x, le.event.y);
            }
        }
        f
    }
}

/// Euclidean distance between the two frames' corner centroids, scaled to
/// millimeters. Errors if either frame holds no corners, since a centroid of
/// nothing is meaningless.
pub fn slip_metric(before: &EventFrame, after: &EventFrame, mm_per_px: f64) -> Result<f64, SimError> {
    let (x0, y0) = before.centroid().ok_or(SimError::NoCorners)?;
    let (x1, y1) = after.centroid().ok_or(SimError::NoCorners)?;
    Ok(((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt() * mm_per_px)
}
