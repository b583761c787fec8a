//! Per-event corner/edge/flat labeling.
//!
//! Each incoming event is scored on the binarized recent-activity patch
//! around it: 3x3 Sobel gradients of the binary patch are accumulated into a
//! 2x2 structure tensor under a Gaussian window, and the score is
//! `det - k * trace^2`. Strongly positive scores are corners (gradient energy
//! in two directions), clearly negative scores are edges (energy along one
//! line), the rest is flat.
//!
//! The Gaussian weights are normalized to sum to one over the patch, so the
//! score scale is the per-cell gradient energy of the unnormalized integer
//! Sobel response. The default thresholds assume that scale; both are
//! configurable.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{Event, SensorGeometry};
use crate::sae::{Binarizer, BinaryPatch, SurfaceOfActiveEvents};

/// Sobel kernels in correlation form: `g(r,c) = sum K[dr+1][dc+1] * p(r+dr, c+dc)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureClass {
    Corner,
    Edge,
    Flat,
}

impl FeatureClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureClass::Corner => "corner",
            FeatureClass::Edge => "edge",
            FeatureClass::Flat => "flat",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarrisParams {
    /// Odd patch side in pixels.
    pub patch_side: usize,
    /// How many of the patch's most recent events binarize to one.
    pub n_latest: usize,
    /// Scores at or above this are corners.
    pub corner_threshold: f64,
    /// Scores at or below this are edges.
    pub edge_threshold: f64,
    pub harris_k: f64,
    pub gaussian_sigma: f64,
}

impl Default for HarrisParams {
    fn default() -> Self {
        HarrisParams {
            patch_side: 9,
            n_latest: 20,
            corner_threshold: 10.0,
            edge_threshold: -0.01,
            harris_k: 0.04,
            gaussian_sigma: 1.5,
        }
    }
}

impl HarrisParams {
    pub fn validate(&self) -> Result<(), DetectorError> {
        let bad = |reason: &str| Err(DetectorError::InvalidParams(reason.to_string()));
        if self.patch_side % 2 == 0 || self.patch_side < 3 {
            return bad("patch_side must be odd and at least 3");
        }
        if self.n_latest == 0 {
            return bad("n_latest must be positive");
        }
        if !(self.gaussian_sigma > 0.0) {
            return bad("gaussian_sigma must be positive");
        }
        if self.edge_threshold >= self.corner_threshold {
            return bad("edge_threshold must lie below corner_threshold");
        }
        Ok(())
    }
}

/// Total classification: `score >= corner_threshold` is a corner,
/// `score <= edge_threshold` an edge, anything between is flat. Boundaries
/// are inclusive on the corner/edge side.
pub fn classify(score: f64, params: &HarrisParams) -> FeatureClass {
    if score >= params.corner_threshold {
        FeatureClass::Corner
    } else if score <= params.edge_threshold {
        FeatureClass::Edge
    } else {
        FeatureClass::Flat
    }
}

/// An event plus its label and raw score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabeledEvent {
    pub event: Event,
    pub label: FeatureClass,
    pub score: f64,
}

/// Reusable scorer. Precomputes the normalized Gaussian window and keeps
/// integer gradient scratch buffers so scoring allocates nothing per call.
#[derive(Debug)]
pub struct HarrisScorer {
    side: usize,
    k: f64,
    weights: Vec<f64>,
    /// Zero-padded copy of the patch, `(side+2)²`, so gradient taps never
    /// branch on bounds.
    padded: Vec<i32>,
    /// Vertically smoothed ([1,2,1]ᵀ) padded columns, `side` rows, plus one
    /// trailing spill slot that out-of-patch stencil writes land in.
    vsmooth: Vec<i32>,
    /// Vertical central differences of padded columns, same layout.
    vdiff: Vec<i32>,
    /// Per-cell scatter stencil: a one at patch cell `(r, c)` adds
    /// `[1, 2, 1]` to `vsmooth` rows `r-1, r, r+1` and `[1, 0, -1]` to
    /// `vdiff` rows `r-1, r, r+1`, all at column `c + 1`; entries are the
    /// three row offsets, with off-patch rows pointing at the spill slot.
    stencil: Vec<[u32; 3]>,
}

impl HarrisScorer {
    pub fn new(params: &HarrisParams) -> Self {
        let side = params.patch_side;
        let center = (side as f64 - 1.0) / 2.0;
        let two_sigma2 = 2.0 * params.gaussian_sigma * params.gaussian_sigma;
        let mut weights = Vec::with_capacity(side * side);
        for r in 0..side {
            for c in 0..side {
                let dr = r as f64 - center;
                let dc = c as f64 - center;
                weights.push((-(dr * dr + dc * dc) / two_sigma2).exp());
            }
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        let pad = side + 2;
        let spill = (side * pad) as u32;
        let mut stencil = Vec::with_capacity(side * side);
        for r in 0..side {
            let row_off = |row: i32, col: usize| -> u32 {
                if row >= 0 && (row as usize) < side {
                    row as u32 * pad as u32 + col as u32
                } else {
                    spill
                }
            };
            for c in 0..side {
                stencil.push([
                    row_off(r as i32 - 1, c + 1),
                    row_off(r as i32, c + 1),
                    row_off(r as i32 + 1, c + 1),
                ]);
            }
        }
        HarrisScorer {
            side,
            k: params.harris_k,
            weights,
            padded: vec![0; pad * pad],
            vsmooth: vec![0; side * pad + 1],
            vdiff: vec![0; side * pad + 1],
            stencil,
        }
    }

    /// Scores a binary patch. The 3×3 Sobel masks factor into a vertical
    /// [1,2,1] smooth (resp. central difference) followed by a horizontal
    /// central difference (resp. [1,2,1] smooth); both passes run on a
    /// zero-padded integer copy of the patch so the per-cell gradient taps
    /// are branch-free, and the Gaussian-weighted structure tensor is
    /// accumulated in the same sweep.
    pub fn score(&mut self, patch: &BinaryPatch) -> f64 {
        assert_eq!(patch.side(), self.side, "patch side mismatch");
        // Dispatching on the default side hands the optimizer constant trip
        // counts (full unrolling); both arms run the identical kernel, so
        // scores do not depend on which one executes.
        if self.side == 9 {
            self.score_kernel(patch, 9)
        } else {
            self.score_kernel(patch, self.side)
        }
    }

    #[inline(always)]
    fn score_kernel(&mut self, patch: &BinaryPatch, side: usize) -> f64 {
        let pad = side + 2;

        self.padded.fill(0);
        for (brow, prow) in patch
            .bits()
            .chunks_exact(side)
            .zip(self.padded.chunks_exact_mut(pad).skip(1))
        {
            for (p, &b) in prow[1..side + 1].iter_mut().zip(brow) {
                *p = b as i32;
            }
        }

        for r in 0..side {
            let (top, rest) = self.padded[r * pad..].split_at(pad);
            let (mid, rest) = rest.split_at(pad);
            let bot = &rest[..pad];
            let vs = &mut self.vsmooth[r * pad..(r + 1) * pad];
            let vd = &mut self.vdiff[r * pad..(r + 1) * pad];
            for ((((vs, vd), &t), &m), &b) in
                vs.iter_mut().zip(vd.iter_mut()).zip(top).zip(mid).zip(bot)
            {
                *vs = t + 2 * m + b;
                *vd = b - t;
            }
        }

        self.tensor_score(side)
    }

    /// Scores directly from the selected cells of a neighborhood, as returned
    /// by [`Binarizer::select`]: each selected cell scatter-adds its fixed
    /// gradient stencil instead of materializing the binary patch and
    /// re-deriving gradients from it. The accumulated `vsmooth`/`vdiff` rows
    /// are identical to the patch path's (integer adds commute), so the score
    /// is bit-for-bit the same as [`HarrisScorer::score`] on the equivalent
    /// patch.
    pub(crate) fn score_selected(&mut self, keys: &[u64], index_mask: u64) -> f64 {
        self.vsmooth.fill(0);
        self.vdiff.fill(0);
        for &key in keys {
            let [up, mid, dn] = self.stencil[(key & index_mask) as usize];
            self.vsmooth[up as usize] += 1;
            self.vsmooth[mid as usize] += 2;
            self.vsmooth[dn as usize] += 1;
            self.vdiff[up as usize] += 1;
            self.vdiff[dn as usize] -= 1;
        }
        if self.side == 9 {
            self.tensor_score(9)
        } else {
            self.tensor_score(self.side)
        }
    }

    #[inline(always)]
    fn tensor_score(&mut self, side: usize) -> f64 {
        let pad = side + 2;
        // Four independent accumulator lanes per tensor entry keep the f64
        // additions from forming one long dependency chain. Each row's
        // integer gradients are finished first in a plain element-wise pass
        // (which lowers to packed 16-bit ops), so the float stage converts
        // and accumulates from contiguous scratch four lanes at a time.
        // Column `c` always feeds lane `c % 4` in ascending `c` per row, so
        // the summation order is a fixed function of the patch side and
        // scores are reproducible run to run.
        let (mut xx, mut xy, mut yy) = ([0.0f64; 4], [0.0f64; 4], [0.0f64; 4]);
        for r in 0..side {
            let vs = &self.vsmooth[r * pad..(r + 1) * pad];
            let vd = &self.vdiff[r * pad..(r + 1) * pad];
            let wrow = &self.weights[r * side..(r + 1) * side];
            let blocks = side / 4;
            for blk in 0..blocks {
                let b = blk * 4;
                let mut gx = [0.0f64; 4];
                let mut gy = [0.0f64; 4];
                for l in 0..4 {
                    let c = b + l;
                    gx[l] = (vs[c + 2] - vs[c]) as f64;
                    gy[l] = (vd[c] + 2 * vd[c + 1] + vd[c + 2]) as f64;
                }
                for l in 0..4 {
                    let w = wrow[b + l];
                    let wgx = w * gx[l];
                    xx[l] += wgx * gx[l];
                    xy[l] += wgx * gy[l];
                    yy[l] += w * gy[l] * gy[l];
                }
            }
            for c in blocks * 4..side {
                let gx = (vs[c + 2] - vs[c]) as f64;
                let gy = (vd[c] + 2 * vd[c + 1] + vd[c + 2]) as f64;
                let w = wrow[c];
                let wgx = w * gx;
                let lane = c & 3;
                xx[lane] += wgx * gx;
                xy[lane] += wgx * gy;
                yy[lane] += w * gy * gy;
            }
        }
        let m_xx = (xx[0] + xx[1]) + (xx[2] + xx[3]);
        let m_xy = (xy[0] + xy[1]) + (xy[2] + xy[3]);
        let m_yy = (yy[0] + yy[1]) + (yy[2] + yy[3]);

        let det = m_xx * m_yy - m_xy * m_xy;
        let trace = m_xx + m_yy;
        det - self.k * trace * trace
    }
}

/// One-shot score of a single patch.
pub fn harris_score(patch: &BinaryPatch, params: &HarrisParams) -> f64 {
    HarrisScorer::new(params).score(patch)
}

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("detector `{0}` is not implemented")]
    NotImplemented(&'static str),
    #[error("invalid detector parameters: {0}")]
    InvalidParams(String),
}

/// A feature detector maps an event (with the SAE already updated to include
/// it) to a label and score. Alternative detectors can slot into
/// [`StreamLabeler`] in place of the Harris one.
pub trait FeatureDetector {
    fn name(&self) -> &'static str;
    fn classify_event(
        &mut self,
        event: &Event,
        sae: &SurfaceOfActiveEvents,
    ) -> Result<(FeatureClass, f64), DetectorError>;
}

/// The default detector: binarized patch, Sobel structure tensor, threshold
/// classification.
#[derive(Debug)]
pub struct HarrisDetector {
    params: HarrisParams,
    binarizer: Binarizer,
    scorer: HarrisScorer,
}

impl HarrisDetector {
    pub fn new(params: HarrisParams) -> Result<Self, DetectorError> {
        params.validate()?;
        Ok(HarrisDetector {
            binarizer: Binarizer::new(params.patch_side, params.n_latest),
            scorer: HarrisScorer::new(&params),
            params,
        })
    }

    pub fn params(&self) -> &HarrisParams {
        &self.params
    }
}

impl FeatureDetector for HarrisDetector {
    fn name(&self) -> &'static str {
        "harris"
    }

    fn classify_event(
        &mut self,
        event: &Event,
        sae: &SurfaceOfActiveEvents,
    ) -> Result<(FeatureClass, f64), DetectorError> {
        let mask = self.binarizer.index_mask();
        let keys = self.binarizer.select(sae, event.x, event.y);
        let score = self.scorer.score_selected(keys, mask);
        Ok((classify(score, &self.params), score))
    }
}

/// Declared alternative detector; scoring is not implemented.
#[derive(Debug, Default)]
pub struct EFastDetector;

impl FeatureDetector for EFastDetector {
    fn name(&self) -> &'static str {
        "e-fast"
    }

    fn classify_event(
        &mut self,
        _event: &Event,
        _sae: &SurfaceOfActiveEvents,
    ) -> Result<(FeatureClass, f64), DetectorError> {
        Err(DetectorError::NotImplemented("e-fast"))
    }
}

/// Declared alternative detector; scoring is not implemented.
#[derive(Debug, Default)]
pub struct ArcStarDetector;

impl FeatureDetector for ArcStarDetector {
    fn name(&self) -> &'static str {
        "arc-star"
    }

    fn classify_event(
        &mut self,
        _event: &Event,
        _sae: &SurfaceOfActiveEvents,
    ) -> Result<(FeatureClass, f64), DetectorError> {
        Err(DetectorError::NotImplemented("arc-star"))
    }
}

/// Stateful per-event labeler: updates the SAE with each event first (so an
/// event is part of its own patch), then classifies it.
pub struct StreamLabeler<D: FeatureDetector = HarrisDetector> {
    sae: SurfaceOfActiveEvents,
    detector: D,
}

impl StreamLabeler<HarrisDetector> {
    pub fn new(geometry: SensorGeometry, params: HarrisParams) -> Result<Self, DetectorError> {
        Ok(StreamLabeler { sae: SurfaceOfActiveEvents::new(geometry), detector: HarrisDetector::new(params)? })
    }
}

impl<D: FeatureDetector> StreamLabeler<D> {
    pub fn with_detector(geometry: SensorGeometry, detector: D) -> Self {
        StreamLabeler { sae: SurfaceOfActiveEvents::new(geometry), detector }
    }

    pub fn sae(&self) -> &SurfaceOfActiveEvents {
        &self.sae
    }

    /// Drops all surface history, e.g. at a stage change when configured.
    pub fn reset_surface(&mut self) {
        self.sae.clear();
    }

    pub fn process(&mut self, event: &Event) -> Result<LabeledEvent, DetectorError> {
        self.sae.update(event);
        let (label, score) = self.detector.classify_event(event, &self.sae)?;
        Ok(LabeledEvent { event: *event, label, score })
    }
}

/// Labels a whole ordered stream with the Harris detector.
pub fn label_stream(
    events: &[Event],
    geometry: SensorGeometry,
    params: HarrisParams,
) -> Result<Vec<LabeledEvent>, DetectorError> {
    let mut labeler = StreamLabeler::new(geometry, params)?;
    events.iter().map(|e| labeler.process(e)).collect()
}

/// Writes labeled events as `t_us,x,y,pol,label,score` CSV.
pub fn write_labeled_csv<W: Write>(mut out: W, labeled: &[LabeledEvent]) -> io::Result<()> {
    writeln!(out, "t_us,x,y,pol,label,score")?;
    for l in labeled {
        writeln!(out, "{},{},{}", l.event, l.label.as_str(), l.score)?;
    }
    Ok(())
}

pub fn write_labeled_csv_file(path: &Path, labeled: &[LabeledEvent]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_labeled_csv(&mut w, labeled)?;
    w.flush()
}
