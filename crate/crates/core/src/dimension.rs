//! Exact dimension formulas for spatially symmetric constructions: the
//! per-level root s_n of prod_{k<=n} sum_i c_{k,i}^s = 1, tail-window
//! estimates of its lower and upper limits, the homogeneous closed form,
//! and the covering/packing comparison oracle.

use serde::{Deserialize, Serialize};

use crate::codetree::{ConstructionSpec, SpecKind, Word};
use crate::error::{MoranError, Result};
use crate::numeric::{bisect_decreasing, log_sum_exp, tail_min_max};

/// Solver residual target for |F_n(s_n)|.
pub const SOLVER_TOLERANCE: f64 = 1e-12;

/// log(sum_i c_i^s) for one level, evaluated as log-sum-exp of s*log(c_i).
fn level_log_sum(log_ratios: &[f64], s: f64) -> f64 {
    let terms: Vec<f64> = log_ratios.iter().map(|&lc| s * lc).collect();
    log_sum_exp(&terms)
}

/// Levels 1..=n grouped by identical ratio vectors, so that F_n(s) costs
/// O(distinct levels) per evaluation. Periodic and block constructions have
/// a handful of distinct levels regardless of depth.
struct LevelGroups {
    groups: Vec<(Vec<f64>, usize)>, // (log ratios, multiplicity)
}

impl LevelGroups {
    fn new() -> Self {
        LevelGroups { groups: Vec::new() }
    }

    fn push_level(&mut self, ratios: &[f64]) {
        let key: Vec<f64> = ratios.iter().map(|c| c.ln()).collect();
        for (g, count) in &mut self.groups {
            if g.len() == key.len() && g.iter().zip(&key).all(|(a, b)| a == b) {
                *count += 1;
                return;
            }
        }
        self.groups.push((key, 1));
    }

    /// F(s) = sum over levels of log(sum_i c_{k,i}^s).
    fn eval(&self, s: f64) -> f64 {
        self.groups
            .iter()
            .map(|(log_ratios, count)| *count as f64 * level_log_sum(log_ratios, s))
            .sum()
    }

    fn solve(&self) -> Result<(f64, f64)> {
        let f0 = self.eval(0.0); // = sum of log N_k >= 0
        if f0 == 0.0 {
            return Ok((0.0, 0.0)); // all N_k = 1
        }
        let r = bisect_decreasing(|s| self.eval(s), 0.0)?;
        Ok((r.root, r.residual))
    }
}

/// The unique s >= 0 with sum_{k<=n} log sum_i c_{k,i}^s = 0.
pub fn solve_level_dimension(spec: &ConstructionSpec, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(MoranError::InvalidArgument("level must be >= 1".into()));
    }
    let mut groups = LevelGroups::new();
    for k in 1..=n {
        groups.push_level(&spec.ratios(k));
    }
    Ok(groups.solve()?.0)
}

/// Finite prefix of (s_n) with tail-window estimates of its lower and
/// upper limits plus a convergence diagnostic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimensionReport {
    pub s_sequence: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Minimum over the last `tail_window` entries (lower-limit estimate).
    pub s_star: f64,
    /// Maximum over the last `tail_window` entries (upper-limit estimate).
    pub s_upper_star: f64,
    pub tail_window: usize,
    pub solver_tolerance: f64,
    /// Oscillation amplitude over the final window and over the window
    /// preceding it; persistent amplitude signals non-convergence of s_n.
    pub oscillation: f64,
    pub previous_oscillation: f64,
}

impl DimensionReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,s_n,residual\n");
        for (i, (s, r)) in self.s_sequence.iter().zip(&self.residuals).enumerate() {
            out.push_str(&format!("{},{},{}\n", i + 1, s, r));
        }
        out
    }
}

/// Per-level dimension solves for n = 1..=n_max with tail-window limit
/// estimates.
pub fn dimension_report(
    spec: &ConstructionSpec,
    n_max: usize,
    tail_window: usize,
) -> Result<DimensionReport> {
    if tail_window == 0 || n_max < tail_window {
        return Err(MoranError::InvalidArgument(format!(
            "need n_max >= tail_window >= 1, got n_max = {n_max}, window = {tail_window}"
        )));
    }
    let mut groups = LevelGroups::new();
    let mut s_sequence = Vec::with_capacity(n_max);
    let mut residuals = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        groups.push_level(&spec.ratios(n));
        let (s, residual) = groups.solve()?;
        s_sequence.push(s);
        residuals.push(residual);
    }
    let (s_star, s_upper_star) = tail_min_max(&s_sequence, tail_window)?;
    let oscillation = s_upper_star - s_star;
    let previous_oscillation = if n_max >= 2 * tail_window {
        let prev = &s_sequence[n_max - 2 * tail_window..n_max - tail_window];
        let (lo, hi) = tail_min_max(prev, tail_window)?;
        hi - lo
    } else {
        f64::NAN
    };
    Ok(DimensionReport {
        s_sequence,
        residuals,
        s_star,
        s_upper_star,
        tail_window,
        solver_tolerance: SOLVER_TOLERANCE,
        oscillation,
        previous_oscillation,
    })
}

/// Tail-window min/max of r_n = sum log N_k / (-sum log c_k), the closed
/// form of s_n for homogeneous constructions.
pub fn homogeneous_dimension(
    spec: &ConstructionSpec,
    n_max: usize,
    tail_window: usize,
) -> Result<(f64, f64)> {
    if spec.kind != SpecKind::Homogeneous {
        return Err(MoranError::InvalidArgument(
            "closed-form limits require a homogeneous spec".into(),
        ));
    }
    tail_min_max(&homogeneous_ratio_sequence(spec, n_max), tail_window)
}

/// The sequence r_n = sum_{k<=n} log N_k / (-sum_{k<=n} log c_k) for a
/// homogeneous spec (index-independent ratios).
pub fn homogeneous_ratio_sequence(spec: &ConstructionSpec, n_max: usize) -> Vec<f64> {
    let mut log_n = 0.0;
    let mut log_c = 0.0;
    let mut out = Vec::with_capacity(n_max);
    for k in 1..=n_max {
        log_n += (spec.branching(k) as f64).ln();
        log_c += spec.log_ratios(k)[0];
        out.push(if log_n == 0.0 { 0.0 } else { log_n / (-log_c) });
    }
    out
}

/// Which inequality of the covering/packing comparison is being witnessed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverClaim {
    /// The words cover every deepest word: some full level has a smaller
    /// weighted sum.
    Covering,
    /// The words are pairwise disjoint (an antichain): some full level has
    /// a larger weighted sum.
    Packing,
}

#[derive(Debug, Clone)]
pub struct CoverWitness {
    pub level: usize,
    pub level_sum: f64,
    pub collection_sum: f64,
}

/// sum over all depth-k words of (ratio product)^s = prod_{j<=k} sum_i c_{j,i}^s.
pub fn full_level_sum(spec: &ConstructionSpec, k: usize, s: f64) -> f64 {
    let mut log = 0.0;
    for j in 1..=k {
        let terms: Vec<f64> = spec.ratios(j).iter().map(|c| s * c.ln()).collect();
        log += log_sum_exp(&terms);
    }
    log.exp()
}

fn is_symbolic_cover(spec: &ConstructionSpec, cover: &[Word], depth: usize) -> Result<bool> {
    // Every depth-`depth` word must have an ancestor or itself in the cover.
    fn covered(
        spec: &ConstructionSpec,
        cover: &[Word],
        word: &Word,
        depth: usize,
    ) -> bool {
        if cover.iter().any(|c| c == word) {
            return true;
        }
        if word.len() == depth {
            return false;
        }
        let n = spec.branching(word.len() + 1);
        (1..=n as u32).all(|i| covered(spec, cover, &word.child(i), depth))
    }
    Ok(covered(spec, cover, &Word::root(), depth))
}

fn is_antichain(cover: &[Word]) -> bool {
    for (i, a) in cover.iter().enumerate() {
        for b in &cover[i + 1..] {
            if a.is_prefix_of(b) || b.is_prefix_of(a) {
                return false;
            }
        }
    }
    true
}

/// Exhaustive search for the level k in [k1, k2] whose full-level sum is
/// dominated by (Covering) or dominates (Packing) the collection's sum.
/// Failure to find one would falsify the comparison lemma, so it surfaces
/// as a hard error.
pub fn cover_comparison_witness(
    spec: &ConstructionSpec,
    cover: &[Word],
    s: f64,
    claim: CoverClaim,
) -> Result<CoverWitness> {
    if cover.is_empty() {
        return Err(MoranError::InvalidArgument("empty word collection".into()));
    }
    if !(s > 0.0) {
        return Err(MoranError::InvalidArgument(format!("exponent s = {s} must be > 0")));
    }
    for w in cover {
        spec.validate_word(w)?;
    }
    let k1 = cover.iter().map(Word::len).min().unwrap();
    let k2 = cover.iter().map(Word::len).max().unwrap();
    if k1 == 0 {
        return Err(MoranError::InvalidArgument(
            "the root is not admitted in a comparison collection".into(),
        ));
    }
    match claim {
        CoverClaim::Covering => {
            if !is_symbolic_cover(spec, cover, k2)? {
                return Err(MoranError::InvalidArgument(
                    "words do not cover the deepest level".into(),
                ));
            }
        }
        CoverClaim::Packing => {
            if !is_antichain(cover) {
                return Err(MoranError::InvalidArgument(
                    "words are not pairwise disjoint cylinders".into(),
                ));
            }
        }
    }

    let mut collection_sum = 0.0;
    for w in cover {
        collection_sum += spec.cylinder_ratio_product(w)?.powf(s);
    }
    // Comparison slack for accumulated floating-point error; equality cases
    // (e.g. the full level itself) must count as witnesses.
    let eps = 1e-9 * collection_sum.max(1.0);
    for k in k1..=k2 {
        let level_sum = full_level_sum(spec, k, s);
        let ok = match claim {
            CoverClaim::Covering => level_sum <= collection_sum + eps,
            CoverClaim::Packing => level_sum + eps >= collection_sum,
        };
        if ok {
            return Ok(CoverWitness { level: k, level_sum, collection_sum });
        }
    }
    Err(MoranError::AxiomViolation(format!(
        "no witness level in [{k1}, {k2}]: this falsifies the covering/packing comparison"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codetree::presets::*;
    use crate::codetree::{LevelSpec, TailRule};

    const LOG2_OVER_LOG3: f64 = 0.6309297535714574;

    /// Independent closed form for the two-ratio spec: with x = (1/2)^s the
    /// level equation reads x + x^2 = 1, so x is the positive root of
    /// x^2 + x - 1 and s = -log2(x).
    fn two_ratio_oracle() -> f64 {
        let x = (5.0f64.sqrt() - 1.0) / 2.0;
        -x.ln() / 2.0f64.ln()
    }

    #[test]
    fn middle_thirds_levels_solve_to_log2_over_log3() {
        let spec = middle_thirds();
        for n in [1, 2, 10, 77] {
            let s = solve_level_dimension(&spec, n).unwrap();
            assert!((s - LOG2_OVER_LOG3).abs() < 1e-12, "n = {n}: {s}");
        }
    }

    #[test]
    fn two_ratio_levels_match_quadratic_oracle() {
        let spec = two_ratio();
        let oracle = two_ratio_oracle();
        for n in [1, 3, 50, 100] {
            let s = solve_level_dimension(&spec, n).unwrap();
            assert!((s - oracle).abs() < 1e-9, "n = {n}: {s} vs {oracle}");
        }
    }

    #[test]
    fn single_offspring_spec_has_dimension_zero() {
        let spec = ConstructionSpec::new(
            SpecKind::Homogeneous,
            1.0,
            vec![],
            TailRule::Periodic { block: vec![LevelSpec::new(vec![0.37])] },
        )
        .unwrap();
        assert_eq!(solve_level_dimension(&spec, 12).unwrap(), 0.0);
    }

    #[test]
    fn report_on_middle_thirds_is_constant() {
        let report = dimension_report(&middle_thirds(), 100, 20).unwrap();
        assert!((report.s_star - LOG2_OVER_LOG3).abs() < 1e-10);
        assert!((report.s_upper_star - LOG2_OVER_LOG3).abs() < 1e-10);
        assert!(report.oscillation < 1e-12);
        for r in &report.residuals {
            assert!(*r < 1e-10);
        }
    }

    #[test]
    fn report_rejects_bad_window() {
        assert!(dimension_report(&middle_thirds(), 5, 10).is_err());
    }

    #[test]
    fn homogeneous_closed_form_matches_solver() {
        // Distinct branching per level exercises the partial sums.
        let spec = doubling_blocks();
        let ratios = homogeneous_ratio_sequence(&spec, 1000);
        for n in [1, 2, 3, 7, 64, 200, 1000] {
            let s = solve_level_dimension(&spec, n).unwrap();
            assert!(
                (s - ratios[n - 1]).abs() < 1e-10,
                "n = {n}: solver {s} vs closed form {}",
                ratios[n - 1]
            );
        }
    }

    #[test]
    fn homogeneous_dimension_examples() {
        let (lo, hi) = homogeneous_dimension(&middle_thirds(), 100, 20).unwrap();
        assert!((lo - LOG2_OVER_LOG3).abs() < 1e-12);
        assert!((hi - LOG2_OVER_LOG3).abs() < 1e-12);

        // N_k = 4, c_k = 1/2 -> symbolic dimension 2.
        let spec = ConstructionSpec::new(
            SpecKind::Homogeneous,
            1.0,
            vec![],
            TailRule::Periodic { block: vec![LevelSpec::new(vec![0.5; 4])] },
        )
        .unwrap();
        let (lo, hi) = homogeneous_dimension(&spec, 50, 10).unwrap();
        assert!((lo - 2.0).abs() < 1e-12 && (hi - 2.0).abs() < 1e-12);

        // Alternating N_k in {2, 4}, c_k = 1/4: partial sums (3m+1)/(4m+2)
        // converge to 3/4.
        let spec = ConstructionSpec::new(
            SpecKind::Homogeneous,
            1.0,
            vec![],
            TailRule::Periodic {
                block: vec![LevelSpec::new(vec![0.25; 2]), LevelSpec::new(vec![0.25; 4])],
            },
        )
        .unwrap();
        let (lo, hi) = homogeneous_dimension(&spec, 4000, 400).unwrap();
        assert!((lo - 0.75).abs() < 1e-3, "{lo}");
        assert!((hi - 0.75).abs() < 1e-3, "{hi}");

        assert!(homogeneous_dimension(&two_ratio(), 10, 2).is_err());
    }

    #[test]
    fn residuals_stay_small_at_depth() {
        let spec = two_ratio();
        let report = dimension_report(&spec, 300, 30).unwrap();
        for r in report.residuals {
            assert!(r < 1e-10);
        }
    }

    #[test]
    fn witness_full_level_is_equality() {
        let spec = middle_thirds();
        let cover = spec.enumerate_level(2, 100).unwrap();
        let w = cover_comparison_witness(&spec, &cover, 0.5, CoverClaim::Covering).unwrap();
        assert_eq!(w.level, 2);
        assert!((w.level_sum - w.collection_sum).abs() < 1e-12);
        let w = cover_comparison_witness(&spec, &cover, 0.5, CoverClaim::Packing).unwrap();
        assert_eq!(w.level, 2);
    }

    #[test]
    fn witness_mixed_depth_cover_at_critical_exponent() {
        // At s = log2/log3 every full-level sum is exactly 1.
        let spec = middle_thirds();
        let cover = vec![
            Word::from(vec![1]),
            Word::from(vec![2, 1]),
            Word::from(vec![2, 2]),
        ];
        let w =
            cover_comparison_witness(&spec, &cover, LOG2_OVER_LOG3, CoverClaim::Covering).unwrap();
        assert!((w.collection_sum - 1.0).abs() < 1e-9);
        assert!((w.level_sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn witness_rejects_non_cover_and_non_antichain() {
        let spec = middle_thirds();
        // {<1>} misses the right subtree.
        let not_cover = vec![Word::from(vec![1])];
        assert!(cover_comparison_witness(
            &spec,
            &not_cover,
            0.5,
            CoverClaim::Covering
        )
        .is_err());
        // {<1>, <1,2>} is not an antichain.
        let not_packing = vec![Word::from(vec![1]), Word::from(vec![1, 2])];
        assert!(cover_comparison_witness(
            &spec,
            &not_packing,
            0.5,
            CoverClaim::Packing
        )
        .is_err());
    }
}
