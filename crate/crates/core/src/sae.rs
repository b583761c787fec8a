//! Surface of active events: per-pixel latest timestamps, plus the local
//! binarization that feeds the corner score.

use crate::event::{Event, SensorGeometry, TimeUs};

/// Per-pixel latest-event timestamp grid. Cells hold `t − base + 1` in 32
/// bits so zero can mean "never fired"; accessors expose `Option<TimeUs>`.
/// Narrow cells halve the memory the per-event patch gather walks. When a
/// stream outgrows the 32-bit window (~71 minutes of microsecond time) the
/// base advances and every cell is re-anchored in one pass; entries that
/// fall behind the new base — at that point more than half an hour stale —
/// read as never-fired afterwards, so arbitrarily long streams replay in
/// fixed memory with no effect on any realistic patch.
#[derive(Clone, Debug)]
pub struct SurfaceOfActiveEvents {
    geometry: SensorGeometry,
    cells: Vec<u32>,
    /// Time origin subtracted from stored stamps; advances on rebase.
    base: TimeUs,
}

/// How much history a rebase keeps, in µs (half the 32-bit stamp range).
const REBASE_KEEP_US: u64 = (u32::MAX / 2) as u64;

impl SurfaceOfActiveEvents {
    pub fn new(geometry: SensorGeometry) -> Self {
        SurfaceOfActiveEvents { geometry, cells: vec![0; geometry.n_pixels()], base: 0 }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    /// Newest timestamp wins; an equal or older event never rewinds a cell.
    #[inline]
    pub fn update(&mut self, e: &Event) {
        debug_assert!(self.geometry.contains(e.x, e.y));
        let Some(rel) = e.t.checked_sub(self.base) else {
            // Older than the current window start (only reachable after a
            // rebase): whatever the cell holds is newer, so keep it.
            return;
        };
        if rel >= u32::MAX as u64 {
            self.rebase(e.t - REBASE_KEEP_US);
        }
        let stamp = (e.t - self.base + 1) as u32;
        let cell = &mut self.cells[self.geometry.index(e.x, e.y)];
        *cell = (*cell).max(stamp);
    }

    /// Advances the time origin to `new_base`, dropping cells behind it.
    #[cold]
    fn rebase(&mut self, new_base: TimeUs) {
        let delta = new_base - self.base;
        let delta32 = delta.min(u32::MAX as u64) as u32;
        for cell in &mut self.cells {
            *cell = cell.saturating_sub(delta32);
        }
        self.base = new_base;
    }

    #[inline]
    pub fn last_at(&self, x: u16, y: u16) -> Option<TimeUs> {
        let v = self.cells[self.geometry.index(x, y)];
        (v != 0).then(|| self.base + v as u64 - 1)
    }

    pub fn populated(&self) -> usize {
        self.cells.iter().filter(|&&v| v != 0).count()
    }

    pub fn clear(&mut self) {
        self.cells.fill(0);
        self.base = 0;
    }
}

/// Square binary patch, row-major. `side` is odd; the center cell is the
/// event the patch was extracted around.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryPatch {
    side: usize,
    bits: Vec<u8>,
}

impl BinaryPatch {
    pub fn zeroed(side: usize) -> Self {
        assert!(side % 2 == 1, "patch side must be odd");
        BinaryPatch { side, bits: vec![0; side * side] }
    }

    /// Builds a patch from explicit rows; handy in tests.
    pub fn from_rows(rows: &[&[u8]]) -> Self {
        let side = rows.len();
        assert!(side % 2 == 1 && rows.iter().all(|r| r.len() == side));
        let bits = rows.iter().flat_map(|r| r.iter().map(|&b| (b != 0) as u8)).collect();
        BinaryPatch { side, bits }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.side + col] != 0
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.side + col] = value as u8;
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b != 0).count()
    }

    pub(crate) fn bits(&self) -> &[u8] {
        &self.bits
    }

    fn clear(&mut self) {
        self.bits.fill(0);
    }
}

/// Reusable top-N binarizer. Keeps its candidate buffer between calls so the
/// per-event hot path does not allocate.
///
/// Selection order per cell: newest timestamp first, then closer to the
/// patch center, then lower row-major index; the index component makes the
/// order total, so the selected set is unique. Each candidate is one sortable
/// word, `(!stamp << shift) | (dist2 << idx_bits) | index`, whose ascending
/// order is exactly that selection order (the index occupies its own low bit
/// field, so unpacking it back out of a selected key is a single mask).
/// Complementing the 32-bit surface stamp also sends empty cells (stamp 0)
/// into a band above every populated cell, so the gather can emit a key for
/// every cell unconditionally.
#[derive(Debug)]
pub struct Binarizer {
    side: usize,
    n_latest: usize,
    shift: u32,
    /// Mask for the `index` field in the low bits of a packed key.
    idx_mask: u64,
    candidates: Vec<u64>,
    /// Split destination; the selected keys are returned out of this buffer.
    scratch: Vec<u64>,
    /// Per-patch-cell low key bits: `(dist2 << idx_bits) | row_major_index`.
    /// Kept in key width so the gather ORs them in directly.
    tiebreak: Vec<u64>,
    /// Cached key value whose rank in a recent window was a little above
    /// `n_latest`. Counting keys below it classifies most windows in two
    /// straight-line passes (see `select`); any staleness only changes which
    /// code path runs, never the selected set.
    rank_hint: u64,
    /// Whether the 512-bit gather/compact paths were enabled at construction
    /// (x86-64 with the required vector extensions detected at runtime). The
    /// wide and scalar paths compute identical integer results; tests assert
    /// their outputs match element for element.
    use_wide: bool,
}

impl Binarizer {
    pub fn new(side: usize, n_latest: usize) -> Self {
        assert!(side % 2 == 1, "patch side must be odd");
        assert!(n_latest > 0, "n_latest must be positive");
        let center = (side / 2) as i64;
        let idx_bits = 64 - ((side * side - 1) as u64).leading_zeros();
        let tiebreak: Vec<u64> = (0..side * side)
            .map(|i| {
                let dr = (i / side) as i64 - center;
                let dc = (i % side) as i64 - center;
                let dist2 = (dr * dr + dc * dc) as u64;
                dist2 << idx_bits | i as u64
            })
            .collect();
        let tb_bits = 64 - tiebreak.iter().max().unwrap().leading_zeros();
        assert!(tb_bits + 32 <= 64, "patch too large for packed selection keys");
        #[cfg(target_arch = "x86_64")]
        let use_wide = std::arch::is_x86_feature_detected!("avx512f")
            && std::arch::is_x86_feature_detected!("avx512vl");
        #[cfg(not(target_arch = "x86_64"))]
        let use_wide = false;
        Binarizer {
            side,
            n_latest,
            shift: tb_bits,
            idx_mask: (1u64 << idx_bits) - 1,
            candidates: vec![0; side * side],
            scratch: vec![0; side * side],
            tiebreak,
            rank_hint: u64::MAX,
            use_wide,
        }
    }

    /// Mask extracting a cell's row-major index from a selected key.
    pub(crate) fn index_mask(&self) -> u64 {
        self.idx_mask
    }

    /// Binarizes the `side x side` neighborhood of `(cx, cy)` into `patch`:
    /// the `min(n_latest, populated)` most recent cells become ones. Cells
    /// outside the sensor stay zero. The caller must have updated the SAE
    /// with the current event first, which guarantees the center cell is
    /// populated (and newest), hence always a one.
    pub fn binarize_into(
        &mut self,
        sae: &SurfaceOfActiveEvents,
        cx: u16,
        cy: u16,
        patch: &mut BinaryPatch,
    ) {
        assert_eq!(patch.side, self.side);
        patch.clear();
        let mask = self.idx_mask;
        for &key in self.select(sae, cx, cy) {
            patch.bits[(key & mask) as usize] = 1;
        }
    }

    /// Selects the `min(n_latest, populated)` most recent cells of the
    /// neighborhood and returns their packed keys (cell index in the low
    /// bits, see [`Binarizer::index_mask`]), unordered. This is the whole
    /// binarization except for materializing a patch, for callers that
    /// consume the selected cells directly.
    pub(crate) fn select(&mut self, sae: &SurfaceOfActiveEvents, cx: u16, cy: u16) -> &[u64] {
        let half = (self.side / 2) as i32;
        let geom = sae.geometry();
        let width = geom.width as i32;

        // Gather the whole window row by row over contiguous SAE slices.
        // Empty cells (stamp 0) are keyed too — complementing the stamp
        // lands them in a band above every populated cell, so they can never
        // make the smallest-n cut as long as n is capped by the populated
        // count; this keeps the gather loop branch-free (and, unlike a
        // fused gather/select, vectorizable).
        let shift = self.shift;
        let mut len = 0usize;
        let mut populated = 0usize;
        let x_lo = (cx as i32 - half).max(0);
        let y_lo = (cy as i32 - half).max(0);
        if x_lo == cx as i32 - half
            && y_lo == cy as i32 - half
            && cx as i32 + half < width
            && (cy as i32 + half) < geom.height as i32
        {
            // Interior window: every row is full, so the tiebreak table lines
            // up one-to-one with the gather.
            let start = y_lo as usize * width as usize + x_lo as usize;
            populated = self.gather_dispatch(sae, start, width as usize);
            len = self.side * self.side;
        } else {
            let x_hi = (cx as i32 + half).min(width - 1);
            let row_len = (x_hi - x_lo + 1) as usize;
            for dr in -half..=half {
                let y = cy as i32 + dr;
                if y < 0 || y >= geom.height as i32 {
                    continue;
                }
                let row_base = y as usize * width as usize;
                let row =
                    &sae.cells[row_base + x_lo as usize..row_base + x_lo as usize + row_len];
                let pr = (dr + half) as usize;
                let pc_lo = (x_lo - cx as i32 + half) as usize;
                let tb_row =
                    &self.tiebreak[pr * self.side + pc_lo..pr * self.side + pc_lo + row_len];
                let dst = &mut self.candidates[len..len + row_len];
                for ((d, &raw), &tb) in dst.iter_mut().zip(row).zip(tb_row) {
                    *d = ((!raw) as u64) << shift | tb;
                    populated += (raw != 0) as usize;
                }
                len += row_len;
            }
        }

        let n = self.n_latest.min(populated);
        if n == 0 {
            return &[];
        }
        if len > n {
            self.split_then_select(len, n);
        } else {
            self.scratch[..n].copy_from_slice(&self.candidates[..n]);
        }
        &self.scratch[..n]
    }

    /// Moves the `n` smallest of `candidates[..len]` into `scratch[..n]`.
    ///
    /// First the keys below the cached `rank_hint` are compacted into the
    /// front of the scratch buffer. In a total order `{k : k < t}` is exactly
    /// the `c` smallest keys whatever `t` is, so that front region is a
    /// superset of the answer whenever `c >= n` and only it (typically barely
    /// more than `n` keys) needs partitioning, instead of the whole window.
    /// The compaction is branch-free — every key is stored and the write
    /// index advances by the comparison result, so each slot is overwritten
    /// until its real owner arrives — and it never reads the buffer it
    /// writes, which profiles much faster than partitioning in place. A stale
    /// hint (changed scene activity, surface rebase, cleared surface) merely
    /// changes which branch finishes the job — `c < n` falls back to
    /// selecting over a copy of the whole window — so the selected set is
    /// identical on every path. The hint is re-cached only when its rank has
    /// drifted out of band, aimed a few ranks above `n` so that
    /// between-window rank jitter rarely drops `c` below `n`; the recency
    /// quantile a fixed key value cuts at moves very slowly as the surface
    /// ages, so refreshes are rare in steady state.
    fn split_then_select(&mut self, len: usize, n: usize) {
        const RANK_PAD: usize = 8;
        const RANK_BAND: usize = 24;
        let hint = self.rank_hint;
        let c = self.compact_dispatch(len, hint);

        if c >= n {
            if c > n {
                partition_smallest(&mut self.scratch[..c], n);
            }
            if c > n + RANK_BAND {
                // Too loose: re-tighten from the front region's leftovers.
                let pad = RANK_PAD.min(c - n);
                partition_smallest(&mut self.scratch[n..c], pad);
                self.rank_hint = self.scratch[n + pad - 1];
            }
        } else {
            // Too tight: select over the whole window instead, then re-aim
            // the hint past `n` over the not-selected remainder.
            self.scratch[..len].copy_from_slice(&self.candidates[..len]);
            partition_smallest(&mut self.scratch[..len], n);
            let pad = RANK_PAD.min(len - n);
            partition_smallest(&mut self.scratch[n..len], pad);
            self.rank_hint = self.scratch[n + pad - 1];
        }
    }

    /// Keys a fully in-bounds window into `candidates`, returning the
    /// populated-cell count. Routes to the 512-bit path when it was enabled
    /// at construction; otherwise the portable loop (dispatched on the
    /// default side so its trip counts are compile-time constants on the hot
    /// configuration).
    fn gather_dispatch(&mut self, sae: &SurfaceOfActiveEvents, start: usize, width: usize) -> usize {
        #[cfg(target_arch = "x86_64")]
        if self.use_wide {
            // SAFETY: `use_wide` is only set when the required vector
            // extensions were detected at runtime.
            return unsafe { self.gather_full_avx512(sae, start, width) };
        }
        if self.side == 9 {
            self.gather_full(sae, start, width, 9)
        } else {
            self.gather_full(sae, start, width, self.side)
        }
    }

    /// Routes the hint compaction like [`Binarizer::gather_dispatch`].
    fn compact_dispatch(&mut self, len: usize, hint: u64) -> usize {
        #[cfg(target_arch = "x86_64")]
        if self.use_wide {
            // SAFETY: `use_wide` is only set when the required vector
            // extensions were detected at runtime.
            return unsafe {
                compact_below_avx512(&self.candidates[..len], &mut self.scratch, hint)
            };
        }
        compact_below(&self.candidates[..len], &mut self.scratch, hint)
    }

    /// Keys a fully in-bounds window starting at flat SAE index `start` into
    /// `candidates` and returns the populated-cell count.
    #[inline(always)]
    fn gather_full(
        &mut self,
        sae: &SurfaceOfActiveEvents,
        start: usize,
        width: usize,
        side: usize,
    ) -> usize {
        let shift = self.shift;
        let mut populated = 0usize;
        for r in 0..side {
            let row = &sae.cells[start + r * width..][..side];
            let tb_row = &self.tiebreak[r * side..(r + 1) * side];
            let dst = &mut self.candidates[r * side..(r + 1) * side];
            for ((d, &raw), &tb) in dst.iter_mut().zip(row).zip(tb_row) {
                *d = ((!raw) as u64) << shift | tb;
                populated += (raw != 0) as usize;
            }
        }
        populated
    }

    /// `gather_full`, eight cells per step: complement the stamps, widen them
    /// to 64 bits, shift, OR the tiebreak row in, and count populated cells
    /// off a compare mask; the sub-eight row remainder runs the scalar tail.
    /// Same integer results as the portable loop, element for element.
    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx512f,avx512vl")]
    unsafe fn gather_full_avx512(
        &mut self,
        sae: &SurfaceOfActiveEvents,
        start: usize,
        width: usize,
    ) -> usize {
        use std::arch::x86_64::*;
        let side = self.side;
        let shift = self.shift;
        let mut populated = 0u32;
        for r in 0..side {
            let row = &sae.cells[start + r * width..][..side];
            let tb_row = &self.tiebreak[r * side..(r + 1) * side];
            let dst = &mut self.candidates[r * side..(r + 1) * side];
            let mut c = 0usize;
            // SAFETY: every pointer below stays inside the slices sliced
            // above: the wide loop requires `c + 8 <= side` and the scalar
            // tail indexes through the slices themselves.
            unsafe {
                let shift_count = _mm_cvtsi32_si128(shift as i32);
                let ones = _mm256_set1_epi32(-1);
                while c + 8 <= side {
                    let raw = _mm256_loadu_si256(row.as_ptr().add(c) as *const __m256i);
                    populated +=
                        _mm256_cmpneq_epu32_mask(raw, _mm256_setzero_si256()).count_ones();
                    let inv = _mm256_xor_si256(raw, ones);
                    let wide = _mm512_cvtepu32_epi64(inv);
                    let shifted = _mm512_sll_epi64(wide, shift_count);
                    let tb = _mm512_loadu_si512(tb_row.as_ptr().add(c) as *const _);
                    let key = _mm512_or_si512(shifted, tb);
                    _mm512_storeu_si512(dst.as_mut_ptr().add(c) as *mut _, key);
                    c += 8;
                }
            }
            while c < side {
                let raw = row[c];
                dst[c] = ((!raw) as u64) << shift | tb_row[c];
                populated += (raw != 0) as u32;
                c += 1;
            }
        }
        populated as usize
    }
}

/// Writes the keys of `src` that are below `hint` to the front of `dst`,
/// preserving their order, and returns how many there were. Branch-free:
/// every key is stored and the write index advances by the comparison
/// result, so each slot is overwritten until its real owner arrives.
#[inline(always)]
fn compact_below(src: &[u64], dst: &mut [u64], hint: u64) -> usize {
    let mut c = 0usize;
    for &k in src {
        dst[c] = k;
        c += (k < hint) as usize;
    }
    c
}

/// [`compact_below`], eight keys per step via compare-mask plus
/// compress-store. Emits the same keys in the same order.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f,avx512vl")]
unsafe fn compact_below_avx512(src: &[u64], dst: &mut [u64], hint: u64) -> usize {
    use std::arch::x86_64::*;
    debug_assert!(dst.len() >= src.len());
    let len = src.len();
    let mut c = 0usize;
    let mut i = 0usize;
    // SAFETY: reads stay below `len` (the tail load is lane-masked), and each
    // compress-store writes exactly its mask's population count, so the write
    // cursor never passes the number of keys seen, which `dst` can hold.
    unsafe {
        let hint_v = _mm512_set1_epi64(hint as i64);
        while i + 8 <= len {
            let v = _mm512_loadu_si512(src.as_ptr().add(i) as *const _);
            let m = _mm512_cmplt_epu64_mask(v, hint_v);
            _mm512_mask_compressstoreu_epi64(dst.as_mut_ptr().add(c) as *mut i64, m, v);
            c += m.count_ones() as usize;
            i += 8;
        }
        if i < len {
            let lane_mask = ((1u16 << (len - i)) - 1) as __mmask8;
            let v = _mm512_maskz_loadu_epi64(lane_mask, src.as_ptr().add(i) as *const i64);
            let m = _mm512_mask_cmplt_epu64_mask(lane_mask, v, hint_v);
            _mm512_mask_compressstoreu_epi64(dst.as_mut_ptr().add(c) as *mut i64, m, v);
            c += m.count_ones() as usize;
        }
    }
    c
}

/// Moves the `n` smallest keys to `keys[..n]`, and in particular leaves
/// `keys[n - 1]` holding exactly the n-th smallest (the terminal pass places
/// the final ranks in sorted order; the hint refresh in `split_then_select`
/// reads that slot). Quickselect with a median-of-three pivot and a
/// branch-free Lomuto partition (every iteration swaps unconditionally and
/// advances the boundary by the comparison result), which profiles far faster
/// on ~100-element inputs than a general-purpose selection because there are
/// no data-dependent branches to mispredict. Distinct keys guarantee each
/// partition strictly shrinks the range; on duplicate-heavy input a
/// degenerate pivot just falls through to the terminal partial selection
/// sort, so termination never depends on distinctness.
fn partition_smallest(keys: &mut [u64], n: usize) {
    debug_assert!(n >= 1 && n <= keys.len());
    let mut lo = 0usize;
    let mut hi = keys.len();
    // Invariant: keys[..lo] hold the `lo` smallest; rank n−1 lies in [lo, hi).
    while hi - lo > 12 {
        let (a, b, c) = (keys[lo], keys[lo + (hi - lo) / 2], keys[hi - 1]);
        let pivot = a.max(b).min(a.min(b).max(c));
        let mut i = lo;
        for j in lo..hi {
            let x = keys[j];
            keys[j] = keys[i];
            keys[i] = x;
            i += (x < pivot) as usize;
        }
        if i == lo {
            // Pivot tied with the range minimum (duplicate keys).
            break;
        }
        if n <= i {
            hi = i;
        } else {
            lo = i;
        }
    }
    for r in lo..n {
        let mut m = r;
        for j in r + 1..hi {
            if keys[j] < keys[m] {
                m = j;
            }
        }
        keys.swap(r, m);
    }
}

/// One-shot convenience wrapper around [`Binarizer`].
pub fn binarized_patch(
    sae: &SurfaceOfActiveEvents,
    cx: u16,
    cy: u16,
    side: usize,
    n_latest: usize,
) -> BinaryPatch {
    let mut patch = BinaryPatch::zeroed(side);
    Binarizer::new(side, n_latest).binarize_into(sae, cx, cy, &mut patch);
    patch
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(t: TimeUs, x: u16, y: u16) -> Event {
        Event { t, x, y, pol: 1 }
    }

    #[test]
    fn update_keeps_newest() {
        let mut sae = SurfaceOfActiveEvents::new(SensorGeometry::default());
        sae.update(&ev(10, 5, 5));
        sae.update(&ev(7, 5, 5));
        assert_eq!(sae.last_at(5, 5), Some(10));
        sae.update(&ev(12, 5, 5));
        assert_eq!(sae.last_at(5, 5), Some(12));
        assert_eq!(sae.last_at(6, 5), None);
    }

    #[test]
    fn timestamp_zero_is_a_real_event() {
        let mut sae = SurfaceOfActiveEvents::new(SensorGeometry::default());
        sae.update(&ev(0, 3, 3));
        assert_eq!(sae.last_at(3, 3), Some(0));
        assert_eq!(sae.populated(), 1);
    }

    #[test]
    fn replay_is_idempotent() {
        let stream: Vec<Event> =
            (0..200).map(|i| ev(i as u64, (i * 7 % 240) as u16, (i * 13 % 180) as u16)).collect();
        let mut a = SurfaceOfActiveEvents::new(SensorGeometry::default());
        let mut b = SurfaceOfActiveEvents::new(SensorGeometry::default());
        for e in &stream {
            a.update(e);
        }
        for e in &stream {
            b.update(e);
            }
        for e in &stream {
            b.update(e); // second replay must not change anything
        }
        assert_eq!(a.cells, b.cells);
    }

    #[test]
    fn binarize_takes_latest_n() {
        let mut sae = SurfaceOfActiveEvents::new(SensorGeometry::default());
        // Fill a 9x9 block around (20, 20) with distinct ascending timestamps.
        let mut t = 0;
        for y in 16..=24 {
            for x in 16..=24 {
                sae.update(&ev(t, x, y));
                t += 1;
            }
        }
        sae.update(&ev(t, 20, 20)); // current event, newest
        let patch = binarized_patch(&sae, 20, 20, 9, 20);
        assert_eq!(patch.ones(), 20);
        assert!(patch.get(4, 4), "center cell must be set");
        // The 19 newest non-center timestamps are the tail of the fill order.
        assert!(patch.get(8, 8) && patch.get(8, 7));
    }

    #[test]
    fn fewer_populated_than_n_sets_them_all() {
        let mut sae = SurfaceOfActiveEvents::new(SensorGeometry::default());
        sae.update(&ev(5, 30, 30));
        sae.update(&ev(6, 32, 31));
        let patch = binarized_patch(&sae, 30, 30, 9, 20);
        assert_eq!(patch.ones(), 2);
        assert!(patch.get(4, 4) && patch.get(5, 6));
    }

    #[test]
    fn border_patch_clamps_to_sensor() {
        let mut sae = SurfaceOfActiveEvents::new(SensorGeometry::default());
        sae.update(&ev(1, 0, 0));
        let patch = binarized_patch(&sae, 0, 0, 9, 20);
        assert_eq!(patch.ones(), 1);
        assert!(patch.get(4, 4));
        // Everything up-left of the corner is off-sensor and stays zero.
        for r in 0..4 {
            for c in 0..9 {
                assert!(!patch.get(r, c));
            }
        }
    }

    #[test]
    fn ties_prefer_center_then_row_major() {
        let mut sae = SurfaceOfActiveEvents::new(SensorGeometry::default());
        // Five cells share one timestamp; with n=3 the selection must keep
        // the center, then the nearer cell, then the lowest row-major index.
        for (x, y) in [(20, 20), (19, 19), (24, 24), (16, 16), (21, 20)] {
            sae.update(&ev(100, x, y));
        }
        let patch = binarized_patch(&sae, 20, 20, 9, 3);
        assert_eq!(patch.ones(), 3);
        assert!(patch.get(4, 4), "center wins at distance 0");
        assert!(patch.get(4, 5), "distance-1 neighbor beats diagonals");
        assert!(patch.get(3, 3), "row-major breaks the remaining tie");
    }

    #[test]
    fn surface_rebases_past_the_stamp_window() {
        let mut sae = SurfaceOfActiveEvents::new(SensorGeometry::default());
        sae.update(&ev(3, 1, 1));
        sae.update(&ev(100, 2, 2));
        // Cross the 32-bit window: the surface re-anchors, keeps recent
        // history exactly, and lets ancient cells fall off as never-fired.
        let big = u32::MAX as u64 + 50;
        sae.update(&ev(big, 3, 3));
        assert_eq!(sae.last_at(3, 3), Some(big));
        assert_eq!(sae.last_at(1, 1), None, "pre-window cell fell off");
        assert_eq!(sae.last_at(2, 2), None, "pre-window cell fell off");
        // Timestamps inside the kept half-window survive a rebase.
        let recent = big - 1_000;
        sae.update(&ev(recent, 4, 4));
        assert_eq!(sae.last_at(4, 4), Some(recent));
        let far = big + (u32::MAX / 2) as u64;
        sae.update(&ev(far, 5, 5));
        assert_eq!(sae.last_at(5, 5), Some(far));
        assert_eq!(sae.last_at(4, 4), Some(recent), "recent cell survives");
        assert_eq!(sae.last_at(3, 3), Some(big), "recent cell survives");
        // An event older than the window start cannot rewind anything.
        sae.update(&ev(2, 1, 1));
        assert_eq!(sae.last_at(1, 1), None);
        // Newest-wins still holds across the whole window.
        sae.update(&ev(far - 1, 5, 5));
        assert_eq!(sae.last_at(5, 5), Some(far));
    }

    #[test]
    fn partition_smallest_matches_sort() {
        let mut rng = 0x9E3779B97F4A7C15u64;
        let mut next = move || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            rng
        };
        for len in 1usize..=120 {
            for dup_mod in [0u64, 5, 1] {
                let mut keys: Vec<u64> = (0..len)
                    .map(|_| if dup_mod == 0 { next() } else { next() % dup_mod })
                    .collect();
                let mut sorted = keys.clone();
                sorted.sort_unstable();
                for n in [1, len / 2, len.max(1)] {
                    let n = n.clamp(1, len);
                    let mut work = keys.clone();
                    partition_smallest(&mut work, n);
                    assert_eq!(work[n - 1], sorted[n - 1], "rank n-1 must land at n-1");
                    let mut head: Vec<u64> = work[..n].to_vec();
                    head.sort_unstable();
                    assert_eq!(head, sorted[..n], "len {len} n {n} dup {dup_mod}");
                    let mut whole = work.clone();
                    whole.sort_unstable();
                    assert_eq!(whole, sorted, "selection must permute, not alter");
                }
                keys.clear();
            }
        }
    }

    proptest! {
        #[test]
        fn binarization_matches_full_sort(
            cells in proptest::collection::vec((0u16..9, 0u16..9, 1u64..500), 1..60),
            n in 1usize..30,
        ) {
            // Small 9x9 sensor so the patch covers everything.
            let geom = SensorGeometry { width: 9, height: 9 };
            let mut sae = SurfaceOfActiveEvents::new(geom);
            for &(x, y, t) in &cells {
                sae.update(&Event { t, x, y, pol: 1 });
            }
            // Reference: order every populated cell by the documented key and
            // take the prefix.
            let mut all: Vec<(u64, u16, u16)> = Vec::new();
            for y in 0..9u16 {
                for x in 0..9u16 {
                    if let Some(t) = sae.last_at(x, y) {
                        let dr = (y as i32 - 4).unsigned_abs() as u16;
                        let dc = (x as i32 - 4).unsigned_abs() as u16;
                        all.push((t, dr * dr + dc * dc, y * 9 + x));
                    }
                }
            }
            all.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let expect: std::collections::BTreeSet<u16> =
                all.iter().take(n).map(|c| c.2).collect();

            let patch = binarized_patch(&sae, 4, 4, 9, n);
            let got: std::collections::BTreeSet<u16> = (0..81u16)
                .filter(|&i| patch.get((i / 9) as usize, (i % 9) as usize))
                .collect();
            prop_assert_eq!(got, expect);
            prop_assert!(patch.ones() <= n);
        }
    }
}
