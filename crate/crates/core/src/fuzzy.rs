//! Mamdani grip-force inference and the monotone force policy.
//!
//! Two inputs (per-window edge and corner counts from a flagged slip window)
//! are fuzzified through three triangular membership functions each. A 3x3
//! rule table maps input label pairs onto five Gaussian output sets over the
//! force-percent axis `[0, 100]`. Implication clips each fired output set at
//! its rule strength (min AND), aggregation takes the pointwise max on a
//! uniform sample grid, and the crisp force is the centroid of the
//! aggregate, integrated with the trapezoid rule.
//!
//! The session policy only ever raises the grip: a defuzzified force is
//! commanded iff it exceeds both the configured minimum and the last
//! commanded value, clamped to the configured maximum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lower force bound of the output axis, percent.
pub const FORCE_AXIS_LO: f64 = 0.0;
/// Upper force bound of the output axis, percent.
pub const FORCE_AXIS_HI: f64 = 100.0;

/// Triangle with feet `a`, `c` and peak `b`. Degenerate feet (`a == b` or
/// `b == c`) give the shoulder shapes used at partition ends.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriangularMf {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl TriangularMf {
    pub fn eval(&self, x: f64) -> f64 {
        if x < self.a || x > self.c {
            0.0
        } else if x < self.b {
            (x - self.a) / (self.b - self.a)
        } else if x > self.b {
            (self.c - x) / (self.c - self.b)
        } else {
            1.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMf {
    pub mean: f64,
    pub sigma: f64,
}

impl GaussianMf {
    pub fn eval(&self, x: f64) -> f64 {
        let d = (x - self.mean) / self.sigma;
        (-0.5 * d * d).exp()
    }
}

/// Input linguistic labels, small to large.
pub const INPUT_LABELS: [&str; 3] = ["S", "M", "L"];

/// Output force levels, indexes into `FuzzyConfig::force_mfs`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForceLevel {
    VS,
    S,
    M,
    L,
    VL,
}

impl ForceLevel {
    pub fn index(self) -> usize {
        match self {
            ForceLevel::VS => 0,
            ForceLevel::S => 1,
            ForceLevel::M => 2,
            ForceLevel::L => 3,
            ForceLevel::VL => 4,
        }
    }
}

/// Three-triangle partition of one input range: S peaks at the low end, M in
/// the middle, L at the high end, with full overlap between neighbors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputPartition {
    pub small: TriangularMf,
    pub medium: TriangularMf,
    pub large: TriangularMf,
}

impl InputPartition {
    pub fn equal(lo: f64, hi: f64) -> Self {
        let mid = 0.5 * (lo + hi);
        InputPartition {
            small: TriangularMf { a: lo, b: lo, c: mid },
            medium: TriangularMf { a: lo, b: mid, c: hi },
            large: TriangularMf { a: mid, b: hi, c: hi },
        }
    }

    pub fn lo(&self) -> f64 {
        self.small.a
    }

    pub fn hi(&self) -> f64 {
        self.large.c
    }

    /// Membership vector `[S, M, L]`. Inputs outside the range clamp to the
    /// nearest bound, so saturated slips read as fully large.
    pub fn fuzzify(&self, x: f64) -> [f64; 3] {
        let x = x.clamp(self.lo(), self.hi());
        [self.small.eval(x), self.medium.eval(x), self.large.eval(x)]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FuzzyConfig {
    /// Edge-count input partition.
    pub edge: InputPartition,
    /// Corner-count input partition.
    pub corner: InputPartition,
    /// Output sets on the force axis, indexed by [`ForceLevel`].
    pub force_mfs: [GaussianMf; 5],
    /// `rules[corner_label][edge_label]` names the output force level.
    pub rules: [[ForceLevel; 3]; 3],
    /// Commands must exceed this floor, percent.
    pub g_min: f64,
    /// Commands clamp to this ceiling, percent.
    pub g_max: f64,
    /// Sample count for aggregation and centroid integration.
    pub cog_resolution: usize,
}

impl Default for FuzzyConfig {
    fn default() -> Self {
        use ForceLevel::*;
        // FWHM 20 on a 0..100 axis: sigma = 20 / (2 sqrt(2 ln 2)), rounded.
        let sigma = 8.49;
        FuzzyConfig {
            edge: InputPartition::equal(0.0, 300.0),
            corner: InputPartition::equal(0.0, 30.0),
            force_mfs: [
                GaussianMf { mean: 10.0, sigma },
                GaussianMf { mean: 30.0, sigma },
                GaussianMf { mean: 50.0, sigma },
                GaussianMf { mean: 70.0, sigma },
                GaussianMf { mean: 90.0, sigma },
            ],
            rules: [[VS, S, M], [S, M, L], [M, L, VL]],
            g_min: 10.0,
            g_max: 100.0,
            cog_resolution: 1001,
        }
    }
}

impl FuzzyConfig {
    /// Default layout over calibrated input ranges.
    pub fn with_input_ranges(edge_lo: f64, edge_hi: f64, corner_lo: f64, corner_hi: f64) -> Self {
        FuzzyConfig {
            edge: InputPartition::equal(edge_lo, edge_hi),
            corner: InputPartition::equal(corner_lo, corner_hi),
            ..FuzzyConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), FuzzyError> {
        let bad = |reason: &str| Err(FuzzyError::InvalidConfig(reason.to_string()));
        for part in [&self.edge, &self.corner] {
            for mf in [part.small, part.medium, part.large] {
                if !(mf.a <= mf.b && mf.b <= mf.c) {
                    return bad("triangular breakpoints must satisfy a <= b <= c");
                }
            }
            if !(part.hi() > part.lo()) {
                return bad("input range must be non-degenerate");
            }
        }
        for mf in &self.force_mfs {
            if !(mf.sigma > 0.0) {
                return bad("output sigma must be positive");
            }
        }
        if !(self.g_min >= FORCE_AXIS_LO && self.g_max <= FORCE_AXIS_HI && self.g_min < self.g_max) {
            return bad("force limits must satisfy 0 <= g_min < g_max <= 100");
        }
        if self.cog_resolution < 2 {
            return bad("cog_resolution must be at least 2");
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FuzzyError {
    #[error("no rule fired: aggregate membership is identically zero")]
    EmptyAggregate,
    #[error("invalid fuzzy config: {0}")]
    InvalidConfig(String),
}

/// AND strength of every rule: `delta[corner_i * 3 + edge_j] =
/// min(mu_corner[i], mu_edge[j])`.
pub fn rule_strengths(mu_edge: [f64; 3], mu_corner: [f64; 3]) -> [f64; 9] {
    let mut delta = [0.0; 9];
    for (ci, &mc) in mu_corner.iter().enumerate() {
        for (ej, &me) in mu_edge.iter().enumerate() {
            delta[ci * 3 + ej] = mc.min(me);
        }
    }
    delta
}

/// Clips each fired output set at its rule strength and takes the pointwise
/// max, sampled at `cog_resolution` uniform points over the force axis.
pub fn aggregate(delta: &[f64; 9], cfg: &FuzzyConfig) -> Vec<f64> {
    let n = cfg.cog_resolution;
    let step = (FORCE_AXIS_HI - FORCE_AXIS_LO) / (n - 1) as f64;
    let mut samples = vec![0.0f64; n];
    for (rule_idx, &strength) in delta.iter().enumerate() {
        if strength == 0.0 {
            continue;
        }
        let level = cfg.rules[rule_idx / 3][rule_idx % 3];
        let mf = cfg.force_mfs[level.index()];
        for (i, s) in samples.iter_mut().enumerate() {
            let g = FORCE_AXIS_LO + i as f64 * step;
            let clipped = mf.eval(g).min(strength);
            if clipped > *s {
                *s = clipped;
            }
        }
    }
    samples
}

/// Centroid of a sampled membership function over the force axis, by
/// trapezoidal quadrature. An identically zero aggregate is an error.
pub fn defuzzify_cog(samples: &[f64]) -> Result<f64, FuzzyError> {
    assert!(samples.len() >= 2, "need at least two samples");
    let step = (FORCE_AXIS_HI - FORCE_AXIS_LO) / (samples.len() - 1) as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..samples.len() - 1 {
        let g0 = FORCE_AXIS_LO + i as f64 * step;
        let g1 = g0 + step;
        let (m0, m1) = (samples[i], samples[i + 1]);
        num += 0.5 * (g0 * m0 + g1 * m1) * step;
        den += 0.5 * (m0 + m1) * step;
    }
    if den == 0.0 {
        return Err(FuzzyError::EmptyAggregate);
    }
    Ok(num / den)
}

/// Monotone force session state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    /// Last commanded force, initialized to the configured minimum.
    pub g_old: f64,
}

impl ControllerState {
    pub fn new(cfg: &FuzzyConfig) -> Self {
        ControllerState { g_old: cfg.g_min }
    }
}

/// A force command, percent of actuator range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripCommand {
    pub percent: f64,
}

/// Full inference record for one step, for traces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceStep {
    pub input_edge: f64,
    pub input_corner: f64,
    /// Defuzzified force before the session policy.
    pub g_hat: f64,
    /// `Some` when the policy emitted a command.
    pub commanded: Option<f64>,
}

/// Runs one full inference + policy step on a slip window's edge and corner
/// counts. Emits a command iff the clamped inference exceeds both `g_min`
/// and the previous command; `state.g_old` advances to each commanded value,
/// so a session's command sequence is strictly increasing.
pub fn suppress_step(
    input_edge: f64,
    input_corner: f64,
    cfg: &FuzzyConfig,
    state: &mut ControllerState,
) -> Result<InferenceStep, FuzzyError> {
    let mu_e = cfg.edge.fuzzify(input_edge);
    let mu_c = cfg.corner.fuzzify(input_corner);
    let delta = rule_strengths(mu_e, mu_c);
    let samples = aggregate(&delta, cfg);
    let g_hat = defuzzify_cog(&samples)?;

    let clamped = g_hat.min(cfg.g_max);
    let commanded = if clamped > cfg.g_min && clamped > state.g_old {
        state.g_old = clamped;
        Some(clamped)
    } else {
        None
    };
    Ok(InferenceStep { input_edge, input_corner, g_hat, commanded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn triangle_shapes() {
        let t = TriangularMf { a: 0.0, b: 5.0, c: 10.0 };
        assert_eq!(t.eval(0.0), 0.0);
        assert_eq!(t.eval(5.0), 1.0);
        assert_eq!(t.eval(2.5), 0.5);
        assert_eq!(t.eval(7.5), 0.5);
        assert_eq!(t.eval(-1.0), 0.0);
        assert_eq!(t.eval(11.0), 0.0);
        // Shoulders.
        let s = TriangularMf { a: 0.0, b: 0.0, c: 10.0 };
        assert_eq!(s.eval(0.0), 1.0);
        assert_eq!(s.eval(5.0), 0.5);
        let l = TriangularMf { a: 0.0, b: 10.0, c: 10.0 };
        assert_eq!(l.eval(10.0), 1.0);
        assert_eq!(l.eval(5.0), 0.5);
    }

    #[test]
    fn partition_sums_to_one_inside_range() {
        let p = InputPartition::equal(0.0, 100.0);
        for x in [0.0, 10.0, 37.5, 50.0, 80.0, 100.0] {
            let mu = p.fuzzify(x);
            let sum: f64 = mu.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "sum {sum} at {x}");
        }
    }

    #[test]
    fn out_of_range_inputs_clamp() {
        let p = InputPartition::equal(0.0, 100.0);
        assert_eq!(p.fuzzify(-50.0), p.fuzzify(0.0));
        assert_eq!(p.fuzzify(1e6), p.fuzzify(100.0));
        assert_eq!(p.fuzzify(1e6), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn rule_strengths_are_pairwise_mins() {
        let delta = rule_strengths([0.2, 0.8, 0.0], [0.5, 0.5, 0.0]);
        assert_eq!(delta[0], 0.2); // corner S, edge S
        assert_eq!(delta[1], 0.5); // corner S, edge M
        assert_eq!(delta[3], 0.2); // corner M, edge S
        assert_eq!(delta[8], 0.0); // corner L, edge L
    }

    #[test]
    fn single_full_rule_reproduces_its_output_set() {
        let cfg = FuzzyConfig::default();
        let mut delta = [0.0; 9];
        delta[4] = 1.0; // corner M, edge M -> force M
        let samples = aggregate(&delta, &cfg);
        let mf = cfg.force_mfs[ForceLevel::M.index()];
        let step = 100.0 / (cfg.cog_resolution - 1) as f64;
        for (i, &s) in samples.iter().enumerate() {
            let g = i as f64 * step;
            assert!((s - mf.eval(g)).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_aggregate_is_an_error() {
        let cfg = FuzzyConfig::default();
        let samples = aggregate(&[0.0; 9], &cfg);
        assert_eq!(defuzzify_cog(&samples), Err(FuzzyError::EmptyAggregate));
    }

    #[test]
    fn symmetric_aggregate_centers_on_mean() {
        let cfg = FuzzyConfig::default();
        let mut delta = [0.0; 9];
        delta[4] = 1.0; // output M at mean 50, symmetric over [0, 100]
        let g = defuzzify_cog(&aggregate(&delta, &cfg)).unwrap();
        assert!((g - 50.0).abs() < 1e-6, "cog {g}");
    }

    #[test]
    fn policy_commands_only_increases() {
        let cfg = FuzzyConfig::default();
        let mut state = ControllerState::new(&cfg);
        // Large slip first.
        let big = suppress_step(280.0, 28.0, &cfg, &mut state).unwrap();
        let first = big.commanded.expect("large slip must command");
        assert!(first > cfg.g_min && first <= cfg.g_max);
        // A smaller slip afterwards must not lower the force.
        let small = suppress_step(30.0, 3.0, &cfg, &mut state).unwrap();
        assert_eq!(small.commanded, None);
        assert_eq!(state.g_old, first);
        // An even larger reading can still raise it.
        let bigger = suppress_step(300.0, 30.0, &cfg, &mut state).unwrap();
        if let Some(c) = bigger.commanded {
            assert!(c > first);
        }
    }

    #[test]
    fn saturated_inputs_clamp_to_g_max() {
        let mut cfg = FuzzyConfig::default();
        cfg.g_max = 80.0;
        let mut state = ControllerState::new(&cfg);
        let step = suppress_step(1e9, 1e9, &cfg, &mut state).unwrap();
        let c = step.commanded.unwrap();
        assert!(c <= 80.0);
        assert_eq!(state.g_old, c);
        // Once at the ceiling nothing further can be commanded.
        let again = suppress_step(1e9, 1e9, &cfg, &mut state).unwrap();
        assert_eq!(again.commanded, None);
    }

    #[test]
    fn config_validation_catches_bad_limits() {
        let mut cfg = FuzzyConfig::default();
        cfg.g_min = 90.0;
        cfg.g_max = 20.0;
        assert!(cfg.validate().is_err());
        let mut cfg = FuzzyConfig::default();
        cfg.cog_resolution = 1;
        assert!(cfg.validate().is_err());
        assert!(FuzzyConfig::default().validate().is_ok());
    }

    proptest! {
        /// Any defuzzified output lies inside the force axis and the fired
        /// support; commands lie in (g_min, g_max].
        #[test]
        fn outputs_stay_in_bounds(e in 0.0f64..400.0, c in 0.0f64..40.0) {
            let cfg = FuzzyConfig::default();
            let mut state = ControllerState::new(&cfg);
            let step = suppress_step(e, c, &cfg, &mut state).unwrap();
            prop_assert!(step.g_hat >= FORCE_AXIS_LO && step.g_hat <= FORCE_AXIS_HI);
            if let Some(cmd) = step.commanded {
                prop_assert!(cmd > cfg.g_min && cmd <= cfg.g_max);
            }
        }

        /// A session's commanded sequence is strictly increasing no matter
        /// the input order.
        #[test]
        fn session_is_strictly_monotone(
            inputs in proptest::collection::vec((0.0f64..400.0, 0.0f64..40.0), 1..40)
        ) {
            let cfg = FuzzyConfig::default();
            let mut state = ControllerState::new(&cfg);
            let mut last = cfg.g_min;
            for (e, c) in inputs {
                let step = suppress_step(e, c, &cfg, &mut state).unwrap();
                if let Some(cmd) = step.commanded {
                    prop_assert!(cmd > last, "command {cmd} after {last}");
                    last = cmd;
                }
            }
        }

        /// Scaling both input partitions and the inputs by one factor leaves
        /// the defuzzified force unchanged: rule strengths see only relative
        /// position.
        #[test]
        fn input_scale_invariance(e in 0.0f64..300.0, c in 0.0f64..30.0, scale in 0.1f64..50.0) {
            let cfg = FuzzyConfig::default();
            let mut scaled = cfg.clone();
            scaled.edge = InputPartition::equal(cfg.edge.lo() * scale, cfg.edge.hi() * scale);
            scaled.corner =
                InputPartition::equal(cfg.corner.lo() * scale, cfg.corner.hi() * scale);
            let mut s1 = ControllerState::new(&cfg);
            let mut s2 = ControllerState::new(&scaled);
            let a = suppress_step(e, c, &cfg, &mut s1).unwrap();
            let b = suppress_step(e * scale, c * scale, &scaled, &mut s2).unwrap();
            prop_assert!((a.g_hat - b.g_hat).abs() < 1e-9);
        }
    }

    /// Raising one input (the other held at its peak memberships) never
    /// lowers the inferred force on a coarse grid sweep.
    #[test]
    fn inference_is_monotone_along_grid() {
        let cfg = FuzzyConfig::default();
        let sweep = |fixed_corner: f64| {
            let mut prev = f64::MIN;
            for i in 0..=60 {
                let e = cfg.edge.lo() + (cfg.edge.hi() - cfg.edge.lo()) * i as f64 / 60.0;
                let mu_e = cfg.edge.fuzzify(e);
                let mu_c = cfg.corner.fuzzify(fixed_corner);
                let g = defuzzify_cog(&aggregate(&rule_strengths(mu_e, mu_c), &cfg)).unwrap();
                assert!(g >= prev - 1e-9, "force fell from {prev} to {g} at edge {e}");
                prev = g;
            }
        };
        sweep(cfg.corner.lo());
        sweep(0.5 * (cfg.corner.lo() + cfg.corner.hi()));
        sweep(cfg.corner.hi());
    }
}
