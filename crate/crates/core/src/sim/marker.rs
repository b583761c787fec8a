//! Visual marker contours: the high-contrast shapes whose pixel crossings
//! the emulator turns into events.

use serde::{Deserialize, Serialize};

use crate::event::SensorGeometry;

/// What kind of image structure a contour point sits on. This is generator
/// ground truth; the detector never sees it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointKind {
    CornerLike,
    EdgeLike,
}

/// One contour sample, in pixels relative to the marker center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContourPoint {
    pub dx: f64,
    pub dy: f64,
    pub kind: PointKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum MarkerShape {
    Square { side_px: f64 },
    Rectangle { width_px: f64, height_px: f64 },
    Circle { radius_px: f64 },
}

/// A marker: contour points around a center, moved rigidly by a pose offset.
#[derive(Clone, Debug)]
pub struct Marker {
    pub shape: MarkerShape,
    /// Initial center in pixels (sub-pixel precision is meaningful).
    pub center: (f64, f64),
    pub points: Vec<ContourPoint>,
}

impl Marker {
    pub fn new(shape: MarkerShape, center: (f64, f64)) -> Self {
        let points = match shape {
            MarkerShape::Square { side_px } => rect_contour(side_px, side_px),
            MarkerShape::Rectangle { width_px, height_px } => rect_contour(width_px, height_px),
            MarkerShape::Circle { radius_px } => circle_contour(radius_px),
        };
        Marker { shape, center, points }
    }

    /// World pixel position of point `i` under a pose offset.
    #[inline]
    pub fn position(&self, i: usize, pose: (f64, f64)) -> (f64, f64) {
        let p = &self.points[i];
        (self.center.0 + p.dx + pose.0, self.center.1 + p.dy + pose.1)
    }

    /// True when every contour point lies inside the sensor at `pose`.
    pub fn fits(&self, geometry: SensorGeometry, pose: (f64, f64)) -> bool {
        (0..self.points.len()).all(|i| {
            let (x, y) = self.position(i, pose);
            x >= 0.0 && y >= 0.0 && x < geometry.width as f64 && y < geometry.height as f64
        })
    }
}

/// Axis-aligned rectangle outline sampled at roughly one-pixel spacing; the
/// four vertices are corner-like, everything else edge-like.
fn rect_contour(width_px: f64, height_px: f64) -> Vec<ContourPoint> {
    assert!(width_px > 2.0 && height_px > 2.0, "marker too small");
    let hw = width_px / 2.0;
    let hh = height_px / 2.0;
    let nx = width_px.ceil() as usize;
    let ny = height_px.ceil() as usize;
    let mut points = Vec::with_capacity(2 * (nx + ny));

    for (cx, cy) in [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)] {
        points.push(ContourPoint { dx: cx, dy: cy, kind: PointKind::CornerLike });
    }
    // Interior edge samples, vertices excluded.
    for i in 1..nx {
        let x = -hw + width_px * i as f64 / nx as f64;
        points.push(ContourPoint { dx: x, dy: -hh, kind: PointKind::EdgeLike });
        points.push(ContourPoint { dx: x, dy: hh, kind: PointKind::EdgeLike });
    }
    for i in 1..ny {
        let y = -hh + height_px * i as f64 / ny as f64;
        points.push(ContourPoint { dx: -hw, dy: y, kind: PointKind::EdgeLike });
        points.push(ContourPoint { dx: hw, dy: y, kind: PointKind::EdgeLike });
    }
    points
}

/// Circle outline at roughly one-pixel arc spacing, all edge-like.
fn circle_contour(radius_px: f64) -> Vec<ContourPoint> {
    assert!(radius_px > 1.0, "marker too small");
    let n = (2.0 * std::f64::consts::PI * radius_px).ceil() as usize;
    (0..n)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            ContourPoint { dx: radius_px * a.cos(), dy: radius_px * a.sin(), kind: PointKind::EdgeLike }
        })
        .collect()
}
