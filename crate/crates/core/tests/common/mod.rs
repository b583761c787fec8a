//! Independent reference implementations ("oracles") used by the integration
//! and acceptance suites. Each one recomputes a quantity the library also
//! produces, but by a deliberately different route, so agreement is evidence
//! of correctness rather than of shared bugs:
//!
//! * [`reference_harris_score`] builds dense gradient images by gather-style
//!   correlation and a separably constructed Gaussian window, where the
//!   library scatters contributions from set bits only.
//! * [`reference_cog`] re-aggregates the fuzzy output envelope point by point
//!   on a 100,001-sample grid and integrates the centroid over it, where the
//!   library clips/maxes at its configured resolution and integrates
//!   trapezoids.
//! * [`recount_windows`] tallies tumbling-window counts by scanning the
//!   labeled log per window, where the library accumulates incrementally.

#![allow(dead_code)] // each test target uses a subset

use evslip::feature::{FeatureClass, LabeledEvent};
use evslip::fuzzy::FuzzyConfig;

/// Correlation masks for horizontal/vertical intensity change.
const KX: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const KY: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

/// Dense reference Harris response of a square binary patch.
///
/// Route: (1) full gradient images via explicit gather correlation with zero
/// padding outside the patch; (2) Gaussian window built as an outer product
/// of one-dimensional rows, normalized to unit sum; (3) weighted structure
/// tensor accumulated over every cell; (4) det − k·trace².
pub fn reference_harris_score(bits: &[Vec<bool>], k: f64, sigma: f64) -> f64 {
    let side = bits.len();
    assert!(side % 2 == 1 && bits.iter().all(|row| row.len() == side));
    let at = |r: i64, c: i64| -> f64 {
        if r < 0 || c < 0 || r >= side as i64 || c >= side as i64 {
            0.0
        } else if bits[r as usize][c as usize] {
            1.0
        } else {
            0.0
        }
    };

    let mut gx = vec![vec![0.0f64; side]; side];
    let mut gy = vec![vec![0.0f64; side]; side];
    for r in 0..side as i64 {
        for c in 0..side as i64 {
            let (mut sx, mut sy) = (0.0, 0.0);
            for dr in -1..=1i64 {
                for dc in -1..=1i64 {
                    let v = at(r + dr, c + dc);
                    sx += KX[(dr + 1) as usize][(dc + 1) as usize] * v;
                    sy += KY[(dr + 1) as usize][(dc + 1) as usize] * v;
                }
            }
            gx[r as usize][c as usize] = sx;
            gy[r as usize][c as usize] = sy;
        }
    }

    let center = (side as f64 - 1.0) / 2.0;
    let axis: Vec<f64> = (0..side)
        .map(|i| {
            let d = i as f64 - center;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let mut weights = vec![vec![0.0f64; side]; side];
    let mut total = 0.0;
    for r in 0..side {
        for c in 0..side {
            weights[r][c] = axis[r] * axis[c];
            total += weights[r][c];
        }
    }

    let (mut m_xx, mut m_xy, mut m_yy) = (0.0f64, 0.0f64, 0.0f64);
    for r in 0..side {
        for c in 0..side {
            let w = weights[r][c] / total;
            m_xx += w * gx[r][c] * gx[r][c];
            m_xy += w * gx[r][c] * gy[r][c];
            m_yy += w * gy[r][c] * gy[r][c];
        }
    }
    let det = m_xx * m_yy - m_xy * m_xy;
    let trace = m_xx + m_yy;
    det - k * trace * trace
}

/// Reference center-of-gravity defuzzification at high resolution.
///
/// Rebuilds the aggregated output envelope sample by sample — for each force
/// value, the max over rules of min(rule strength, output set membership) —
/// on a grid of `samples` points across the force axis, then integrates the
/// centroid with the trapezoid rule. Returns `None` when the envelope is
/// identically zero (no rule fired).
pub fn reference_cog(rule_strengths: &[f64; 9], cfg: &FuzzyConfig, samples: usize) -> Option<f64> {
    assert!(samples >= 2);
    let (lo, hi) = (evslip::fuzzy::FORCE_AXIS_LO, evslip::fuzzy::FORCE_AXIS_HI);
    let step = (hi - lo) / (samples - 1) as f64;
    let envelope = |g: f64| -> f64 {
        let mut best = 0.0f64;
        for (i, &strength) in rule_strengths.iter().enumerate() {
            let level = cfg.rules[i / 3][i % 3];
            let mu = cfg.force_mfs[level.index()].eval(g).min(strength);
            if mu > best {
                best = mu;
            }
        }
        best
    };

    let (mut num, mut den) = (0.0f64, 0.0f64);
    let mut prev_g = lo;
    let mut prev_mu = envelope(lo);
    for i in 1..samples {
        let g = lo + i as f64 * step;
        let mu = envelope(g);
        num += 0.5 * (prev_mu * prev_g + mu * g) * step;
        den += 0.5 * (prev_mu + mu) * step;
        prev_g = g;
        prev_mu = mu;
    }
    if den == 0.0 {
        None
    } else {
        Some(num / den)
    }
}

/// Brute-force tumbling-window recount of a labeled log.
///
/// Window `k` covers `[k·dt_us, (k+1)·dt_us)`. Returns one
/// `(raw, edge, corner)` triple per window from index 0 through the window
/// containing the last event, recounted by filtering the whole log for each
/// window rather than accumulating.
pub fn recount_windows(labeled: &[LabeledEvent], dt_us: u64) -> Vec<(u32, u32, u32)> {
    let Some(last_t) = labeled.iter().map(|le| le.event.t).max() else {
        return Vec::new();
    };
    let n_windows = last_t / dt_us + 1;
    (0..n_windows)
        .map(|k| {
            let (t0, t1) = (k * dt_us, (k + 1) * dt_us);
            let in_window = labeled.iter().filter(|le| le.event.t >= t0 && le.event.t < t1);
            let mut counts = (0u32, 0u32, 0u32);
            for le in in_window {
                counts.0 += 1;
                match le.label {
                    FeatureClass::Edge => counts.1 += 1,
                    FeatureClass::Corner => counts.2 += 1,
                    FeatureClass::Flat => {}
                }
            }
            counts
        })
        .collect()
}

/// Deterministic xorshift for patch generation where a seeded, dependency-free
/// bit source is all a test needs.
pub struct XorShift64(pub u64);

impl XorShift64 {
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0.max(1);
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    /// Uniform in [0, n).
    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }
}
