//! Moran measures on the codetree: cylinder masses, entropy-average local
//! dimensions, the summability condition detector, symbolic L^q spectra,
//! and the dimension-at-one sandwich check.

use std::borrow::Cow;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codetree::{ConstructionSpec, SpecKind, Word};
use crate::error::{MoranError, Result};
use crate::filtration::GeneralFiltration;
use crate::numeric::{default_tail_window, ols_fit, tail_min_max, KahanSum};

/// Weight-sum tolerance for offspring weights on a live cylinder.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// Default tolerance for the dimension-at-one sandwich inequalities
/// (estimator noise, not a theoretical constant).
pub const SANDWICH_TOLERANCE: f64 = 1e-3;

/// Default q grid for the dimension-at-one check: straddles 1, excludes 1.
pub const DEFAULT_Q_GRID: [f64; 6] = [0.5, 0.9, 0.99, 1.01, 1.1, 2.0];

/// Named offspring-weight rule. Weights depend on the level (and branch
/// index) only, mirroring spatial symmetry on the measure side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum WeightRule {
    /// p_{k,i} = 1/N_k.
    Uniform,
    /// The same weight vector at every level; its length must match N_k.
    Bernoulli { weights: Vec<f64> },
    /// Explicit per-level weight vectors, then a repeating cycle.
    PerLevel { levels: Vec<Vec<f64>>, cycle: Vec<Vec<f64>> },
}

fn check_weight_list(ws: &[f64], what: &str) -> Result<()> {
    if ws.is_empty() {
        return Err(MoranError::InvalidWeights(format!("{what}: empty weight list")));
    }
    let mut sum = KahanSum::new();
    for &w in ws {
        if !(w >= 0.0) || w > 1.0 {
            return Err(MoranError::InvalidWeights(format!(
                "{what}: weight {w} outside [0, 1]"
            )));
        }
        sum.add(w);
    }
    if (sum.value() - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(MoranError::InvalidWeights(format!(
            "{what}: weights sum to {}, expected 1",
            sum.value()
        )));
    }
    Ok(())
}

/// A Moran measure: a construction spec together with conditional offspring
/// weights p_{k,i} and a root mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoranMeasure {
    pub spec: ConstructionSpec,
    pub weight_rule: WeightRule,
    pub root_mass: f64,
}

impl MoranMeasure {
    /// The uniformly distributed measure: mass splits equally among
    /// offsprings, so every level-n cylinder has mass prod N_k^-1.
    pub fn uniform(spec: ConstructionSpec) -> Self {
        MoranMeasure { spec, weight_rule: WeightRule::Uniform, root_mass: 1.0 }
    }

    /// Validated weighted measure. Every explicit weight vector must be
    /// nonnegative and sum to 1 within `WEIGHT_SUM_TOLERANCE`; zero entries
    /// are allowed and kill the corresponding subtree.
    pub fn weighted(spec: ConstructionSpec, rule: WeightRule) -> Result<Self> {
        match &rule {
            WeightRule::Uniform => {}
            WeightRule::Bernoulli { weights } => check_weight_list(weights, "bernoulli")?,
            WeightRule::PerLevel { levels, cycle } => {
                if cycle.is_empty() {
                    return Err(MoranError::InvalidWeights(
                        "per-level rule needs a nonempty cycle".into(),
                    ));
                }
                for (i, ws) in levels.iter().enumerate() {
                    check_weight_list(ws, &format!("level {}", i + 1))?;
                }
                for (i, ws) in cycle.iter().enumerate() {
                    check_weight_list(ws, &format!("cycle entry {}", i + 1))?;
                }
            }
        }
        Ok(MoranMeasure { spec, weight_rule: rule, root_mass: 1.0 })
    }

    /// Conditional offspring weights at level `k` (1-based). Errors when a
    /// fixed-length rule does not match the branching count N_k.
    pub fn weights(&self, k: usize) -> Result<Cow<'_, [f64]>> {
        let n = self.spec.branching(k);
        match &self.weight_rule {
            WeightRule::Uniform => Ok(Cow::Owned(vec![1.0 / n as f64; n])),
            WeightRule::Bernoulli { weights } => {
                if weights.len() != n {
                    return Err(MoranError::InvalidWeights(format!(
                        "bernoulli rule has {} weights but N_{k} = {n}",
                        weights.len()
                    )));
                }
                Ok(Cow::Borrowed(weights))
            }
            WeightRule::PerLevel { levels, cycle } => {
                let ws = if k <= levels.len() {
                    &levels[k - 1]
                } else {
                    &cycle[(k - levels.len() - 1) % cycle.len()]
                };
                if ws.len() != n {
                    return Err(MoranError::InvalidWeights(format!(
                        "per-level rule has {} weights at level {k} but N_{k} = {n}",
                        ws.len()
                    )));
                }
                Ok(Cow::Borrowed(ws))
            }
        }
    }

    /// log mu(E_word): log root mass plus the sum of log conditional
    /// weights along the word. NEG_INFINITY marks zero mass; once a
    /// cylinder has zero mass every descendant shares the marker.
    pub fn cylinder_log_mass(&self, word: &Word) -> Result<f64> {
        self.spec.validate_word(word)?;
        let mut log = self.root_mass.ln();
        for k in 1..=word.len() {
            let p = self.weights(k)?[(word.index_at(k) - 1) as usize];
            if p == 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            log += p.ln();
        }
        Ok(log)
    }

    /// Draws a word of the given depth by sampling each branch index from
    /// the conditional weights. Deterministic given the RNG state; never
    /// enters zero-mass subtrees.
    pub fn sample_path<R: Rng>(&self, depth: usize, rng: &mut R) -> Result<Word> {
        let mut word = Word::root();
        for k in 1..=depth {
            let ws = self.weights(k)?;
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut choice = None;
            for (i, &w) in ws.iter().enumerate() {
                acc += w;
                if u < acc && w > 0.0 {
                    choice = Some(i as u32 + 1);
                    break;
                }
            }
            // Rounding can leave acc slightly below 1; fall back to the
            // last live branch.
            let idx = match choice {
                Some(i) => i,
                None => {
                    let last = ws.iter().rposition(|&w| w > 0.0).ok_or_else(|| {
                        MoranError::InvalidWeights(format!("all weights zero at level {k}"))
                    })?;
                    last as u32 + 1
                }
            };
            word = word.child(idx);
        }
        Ok(word)
    }

    pub fn sample_paths(&self, depth: usize, count: usize, seed: u64) -> Result<Vec<Word>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.sample_path(depth, &mut rng)).collect()
    }
}

/// Running entropy-average sums along one path: cumulative offspring
/// entropies over cumulative log contractions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyAverageTrace {
    pub path: Word,
    pub depth: usize,
    /// Cumulative numerators: sum over prefixes of sum_j p_j log p_j.
    pub numerators: Vec<f64>,
    /// Cumulative denominators: sum over prefixes of sum_j p_j log c_j.
    pub denominators: Vec<f64>,
    /// Per-depth ratios numerators[n]/denominators[n].
    pub ratios: Vec<f64>,
    pub ratio: f64,
}

impl EntropyAverageTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,numerator,denominator,ratio\n");
        for i in 0..self.depth {
            out.push_str(&format!(
                "{},{},{},{}\n",
                i + 1,
                self.numerators[i],
                self.denominators[i],
                self.ratios[i]
            ));
        }
        out
    }
}

fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0 // 0 log 0 := 0
    } else {
        x * x.ln()
    }
}

/// Entropy-average ratio along `path` using the first `depth` levels: the
/// n-th summand aggregates the offsprings of the prefix of length n-1, so
/// the double sums cover levels 1..=depth.
pub fn entropy_average_ratio(
    measure: &MoranMeasure,
    path: &Word,
    depth: usize,
) -> Result<EntropyAverageTrace> {
    if depth == 0 || path.len() < depth {
        return Err(MoranError::InvalidArgument(format!(
            "path of length {} cannot support depth {depth}",
            path.len()
        )));
    }
    measure.spec.validate_word(path)?;
    let mut num = KahanSum::new();
    let mut den = KahanSum::new();
    let mut numerators = Vec::with_capacity(depth);
    let mut denominators = Vec::with_capacity(depth);
    let mut ratios = Vec::with_capacity(depth);
    for n in 0..depth {
        // Offsprings of path|_n live on level n + 1.
        let k = n + 1;
        let ws = measure.weights(k)?;
        if n > 0 && measure.weights(n)?[(path.index_at(n) - 1) as usize] == 0.0 {
            return Err(MoranError::InvalidWeights(format!(
                "path enters a zero-mass cylinder at level {n}"
            )));
        }
        let log_ratios_k = measure.spec.log_ratios(k);
        for (i, &w) in ws.iter().enumerate() {
            num.add(xlogx(w));
            den.add(if w == 0.0 { 0.0 } else { w * log_ratios_k[i] });
        }
        if den.value() == 0.0 {
            return Err(MoranError::InvalidWeights(format!(
                "all weights zero at level {k}"
            )));
        }
        numerators.push(num.value());
        denominators.push(den.value());
        ratios.push(num.value() / den.value());
    }
    let ratio = *ratios.last().unwrap();
    Ok(EntropyAverageTrace {
        path: path.prefix(depth),
        depth,
        numerators,
        denominators,
        ratios,
        ratio,
    })
}

/// Convergence verdict for the second-moment series; convergence is
/// undecidable from finite data, so this is a decay-rate heuristic, never
/// a blocker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    PlausiblyConvergent,
    Diverging,
}

/// Evidence for the two hypotheses behind the entropy-average theorem: a
/// positive contraction speed along paths and summability of the weighted
/// second-moment series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    /// Partial sums of sum_n n^-2 sup_i sum_j p_j ((log p_j)^2 + (log c_j)^2).
    pub l2_partial_sums: Vec<f64>,
    /// The n^-2-weighted summands themselves.
    pub increments: Vec<f64>,
    /// -(1/n) log diam(E_{path|_n}) at n = n_max, one entry per path.
    pub diamspeed_values: Vec<f64>,
    pub diamspeed_positive: bool,
    /// Log-log slope of the increments over the last decade; bounded
    /// summands show slope near -2, the divergent counterexample near 0.
    pub decay_slope: f64,
    pub verdict: Verdict,
}

impl ConditionReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,increment,partial_sum\n");
        for (i, (inc, ps)) in self.increments.iter().zip(&self.l2_partial_sums).enumerate() {
            out.push_str(&format!("{},{},{}\n", i + 1, inc, ps));
        }
        out
    }
}

/// Slope threshold separating the ~n^-2 decay of a summable series from
/// the Theta(1) summands of the divergent counterexample.
const VERDICT_SLOPE_THRESHOLD: f64 = -1.5;

/// Partial sums of the second-moment series plus contraction speeds along
/// the supplied paths (each of length >= n_max). Spatial symmetry makes
/// the per-level sup exact: the inner sum is identical for every word of
/// the level, so no enumeration is needed.
pub fn check_entropy_conditions(
    measure: &MoranMeasure,
    n_max: usize,
    paths: &[Word],
) -> Result<ConditionReport> {
    if n_max < 10 {
        return Err(MoranError::InvalidArgument("n_max must be at least 10".into()));
    }
    let mut sum = KahanSum::new();
    let mut increments = Vec::with_capacity(n_max);
    let mut partial = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let k = n + 1; // offsprings of a level-n word
        let ws = measure.weights(k)?;
        let lcs = measure.spec.log_ratios(k);
        let mut term = 0.0;
        for (i, &w) in ws.iter().enumerate() {
            if w > 0.0 {
                let lp = w.ln();
                let lc = lcs[i];
                term += w * (lp * lp + lc * lc);
            }
        }
        let inc = term / (n as f64 * n as f64);
        sum.add(inc);
        increments.push(inc);
        partial.push(sum.value());
    }

    let mut diamspeed_values = Vec::with_capacity(paths.len());
    for path in paths {
        if path.len() < n_max {
            return Err(MoranError::InvalidArgument(format!(
                "path of length {} shorter than n_max = {n_max}",
                path.len()
            )));
        }
        let ld = measure.spec.cylinder_log_diameter(&path.prefix(n_max))?;
        diamspeed_values.push(-ld / n_max as f64);
    }
    let diamspeed_positive = !diamspeed_values.is_empty()
        && diamspeed_values.iter().all(|&v| v > 1e-9);

    // Ratio test on the last decade: slope of log increment vs log n.
    let start = (n_max / 10).max(1);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for n in start..=n_max {
        let inc = increments[n - 1];
        if inc > 0.0 {
            xs.push((n as f64).ln());
            ys.push(inc.ln());
        }
    }
    let (decay_slope, verdict) = if xs.len() < 2 {
        (f64::NEG_INFINITY, Verdict::PlausiblyConvergent)
    } else {
        let fit = ols_fit(&xs, &ys)?;
        let verdict = if fit.slope < VERDICT_SLOPE_THRESHOLD {
            Verdict::PlausiblyConvergent
        } else {
            Verdict::Diverging
        };
        (fit.slope, verdict)
    };

    Ok(ConditionReport {
        l2_partial_sums: partial,
        increments,
        diamspeed_values,
        diamspeed_positive,
        decay_slope,
        verdict,
    })
}

/// Finite-depth estimate of the L^q spectrum tau_q along a filtration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LqEstimate {
    pub q: f64,
    /// Tail-window minimum of log S_n / log delta_n (lower-limit estimate).
    pub tau_q: f64,
    /// tau_q / (q - 1); absent at q = 1.
    pub dim_q: Option<f64>,
    /// Per-level ratios log S_n / log delta_n.
    pub ratios: Vec<f64>,
    pub tail_window: usize,
}

impl LqEstimate {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,ratio\n");
        for (i, r) in self.ratios.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, r));
        }
        out
    }
}

/// Enumeration budget for L^q sums on non-homogeneous constructions, whose
/// filtration levels must be walked explicitly.
const LQ_ENUMERATION_CAP: usize = 200_000;

/// tau_q estimate from log sum_{Q in Q_n} mu(Q)^q over log delta_n,
/// n = 1..=depth, with a tail-window lower-limit estimate.
///
/// `locality`, when present, restricts each level to the members lying in
/// the symbolic ball around the path: the cells below the shortest prefix
/// of the path whose cylinder diameter is at most r. When absent the full
/// levels are used (the global spectrum).
///
/// Homogeneous constructions take a closed-form path: their filtration
/// levels are exactly the full word levels, so the sum factorizes into a
/// per-level product and depth 10^4 costs O(depth). Other constructions
/// are enumerated and error out beyond `LQ_ENUMERATION_CAP` words.
pub fn lq_spectrum_symbolic(
    measure: &MoranMeasure,
    filtration: &GeneralFiltration,
    q: f64,
    locality: Option<(&Word, f64)>,
    depth: usize,
    tail_window: usize,
) -> Result<LqEstimate> {
    if !(q >= 0.0) {
        return Err(MoranError::InvalidArgument(format!("q = {q} must be >= 0")));
    }
    if depth > filtration.depth() {
        return Err(MoranError::InvalidArgument(format!(
            "depth {depth} exceeds filtration depth {}",
            filtration.depth()
        )));
    }
    let fspec = filtration.spec().ok_or_else(|| {
        MoranError::InvalidArgument("filtration carries no construction spec".into())
    })?;
    if fspec != &measure.spec {
        return Err(MoranError::InvalidArgument(
            "measure and filtration disagree on the construction spec".into(),
        ));
    }

    let homogeneous = measure.spec.kind == SpecKind::Homogeneous;
    let log_s: Vec<f64> = if homogeneous {
        lq_level_log_sums_homogeneous(measure, q, locality, depth)?
    } else {
        if locality.is_some() {
            return Err(MoranError::InvalidArgument(
                "local spectra are implemented for homogeneous constructions only".into(),
            ));
        }
        let mut out = Vec::with_capacity(depth);
        for n in 1..=depth {
            let cells = filtration.cells_at(n, LQ_ENUMERATION_CAP)?;
            let mut s = KahanSum::new();
            for w in &cells {
                let lm = measure.cylinder_log_mass(w)?;
                if lm > f64::NEG_INFINITY {
                    s.add((q * lm).exp());
                }
            }
            out.push(s.value().ln());
        }
        out
    };

    let ratios: Vec<f64> = log_s
        .iter()
        .enumerate()
        .map(|(i, &ls)| ls / filtration.log_delta(i + 1))
        .collect();
    let (tau_q, _) = tail_min_max(&ratios, tail_window)?;
    let dim_q = if q == 1.0 { None } else { Some(tau_q / (q - 1.0)) };
    Ok(LqEstimate { q, tau_q, dim_q, ratios, tail_window })
}

/// Per-level cumulative log S_n for homogeneous constructions, where the
/// filtration level n is the full word level n and the packing sum
/// factorizes: S_n = prod_{k<=n} sum_i p_{k,i}^q (restricted below the
/// locality prefix when present).
fn lq_level_log_sums_homogeneous(
    measure: &MoranMeasure,
    q: f64,
    locality: Option<(&Word, f64)>,
    depth: usize,
) -> Result<Vec<f64>> {
    // Locality: the symbolic ball of radius r around the path is the
    // cylinder of the shortest prefix with diameter <= r.
    let anchor = match locality {
        None => None,
        Some((path, r)) => {
            if !(r > 0.0) {
                return Err(MoranError::InvalidArgument(format!("radius {r} must be > 0")));
            }
            measure.spec.validate_word(path)?;
            let target = r.ln();
            let mut d = 0;
            let mut ld = measure.spec.root_diameter.ln();
            while ld > target {
                d += 1;
                if d > path.len() {
                    return Err(MoranError::InvalidArgument(
                        "path too short to resolve the locality radius".into(),
                    ));
                }
                ld += measure.spec.log_ratio(d, path.index_at(d));
            }
            if d > depth {
                return Err(MoranError::InvalidArgument(
                    "locality radius resolves below the computed depth".into(),
                ));
            }
            Some((path.prefix(d), d))
        }
    };

    let (prefix_log_mass, start) = match &anchor {
        None => (0.0, 0),
        Some((prefix, d)) => {
            let lm = measure.cylinder_log_mass(prefix)?;
            if lm == f64::NEG_INFINITY {
                return Err(MoranError::InvalidWeights(
                    "locality prefix has zero mass".into(),
                ));
            }
            (q * lm, *d)
        }
    };

    let mut out = Vec::with_capacity(depth);
    let mut acc = prefix_log_mass;
    for n in 1..=depth {
        if n > start {
            let ws = measure.weights(n)?;
            let mut s = 0.0;
            for &w in ws.iter() {
                if w > 0.0 {
                    s += w.powf(q);
                }
            }
            if s == 0.0 {
                return Err(MoranError::InvalidWeights(format!(
                    "all weights zero at level {n}"
                )));
            }
            acc += s.ln();
        }
        // Levels above the anchor are represented by the anchor cylinder
        // alone; S_n there is mu(prefix|_n)^q, a detail the tail estimate
        // never sees. Use the anchored value from the start for simplicity.
        out.push(acc);
    }
    Ok(out)
}

/// Global L^q dimension tau_q/(q-1) with the default tail window.
pub fn lq_dimension(measure: &MoranMeasure, q: f64, depth: usize) -> Result<f64> {
    lq_dimension_windowed(measure, q, depth, default_tail_window(depth))
}

/// Global L^q dimension with an explicit tail window.
pub fn lq_dimension_windowed(
    measure: &MoranMeasure,
    q: f64,
    depth: usize,
    tail_window: usize,
) -> Result<f64> {
    if q == 1.0 {
        return Err(MoranError::UndefinedAtQOne);
    }
    let filtration = GeneralFiltration::from_spec(&measure.spec, depth, None)?;
    let est = lq_spectrum_symbolic(measure, &filtration, q, None, depth, tail_window)?;
    Ok(est.dim_q.expect("q != 1"))
}

/// Numerical check of the dimension-at-one sandwich: dim_q just above 1
/// should not exceed the lower entropy-average local dimension, which
/// should not exceed the upper one, which should not exceed dim_q just
/// below 1 — all up to estimator tolerance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SandwichReport {
    /// (q, dim_q) pairs over the grid.
    pub q_dims: Vec<(f64, f64)>,
    pub entropy_lower: f64,
    pub entropy_upper: f64,
    pub tolerance: f64,
    pub holds: bool,
    pub monotone: bool,
}

pub fn dim_at_one_sandwich_check(
    measure: &MoranMeasure,
    depth: usize,
    q_grid: &[f64],
    tail_window: usize,
    path_count: usize,
    seed: u64,
) -> Result<SandwichReport> {
    if q_grid.contains(&1.0) {
        return Err(MoranError::UndefinedAtQOne);
    }
    let below: Vec<f64> = q_grid.iter().cloned().filter(|&q| q < 1.0).collect();
    let above: Vec<f64> = q_grid.iter().cloned().filter(|&q| q > 1.0).collect();
    if below.is_empty() || above.is_empty() {
        return Err(MoranError::InvalidArgument("q grid must straddle 1".into()));
    }

    let mut q_dims = Vec::with_capacity(q_grid.len());
    for &q in q_grid {
        q_dims.push((q, lq_dimension_windowed(measure, q, depth, tail_window)?));
    }

    // Entropy-average local dimensions along measure-sampled paths,
    // estimated by the tail range of the running ratios.
    let mut entropy_lower = f64::INFINITY;
    let mut entropy_upper = f64::NEG_INFINITY;
    for path in measure.sample_paths(depth, path_count.max(1), seed)? {
        let trace = entropy_average_ratio(measure, &path, depth)?;
        let (lo, hi) = tail_min_max(&trace.ratios, tail_window)?;
        entropy_lower = entropy_lower.min(lo);
        entropy_upper = entropy_upper.max(hi);
    }

    let tolerance = SANDWICH_TOLERANCE;
    let dim_at = |q: f64| q_dims.iter().find(|(qq, _)| *qq == q).unwrap().1;
    let q_down = above.iter().cloned().fold(f64::INFINITY, f64::min); // closest above 1
    let q_up = below.iter().cloned().fold(f64::NEG_INFINITY, f64::max); // closest below 1
    let holds = dim_at(q_down) <= entropy_lower + tolerance
        && entropy_lower <= entropy_upper + tolerance
        && entropy_upper <= dim_at(q_up) + tolerance;

    // dim_q should be nonincreasing in q on each side of 1.
    let monotone_side = |mut qs: Vec<f64>| {
        qs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        qs.windows(2).all(|w| dim_at(w[0]) + tolerance >= dim_at(w[1]))
    };
    let monotone = monotone_side(below) && monotone_side(above);

    Ok(SandwichReport { q_dims, entropy_lower, entropy_upper, tolerance, holds, monotone })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codetree::presets::*;
    use crate::codetree::{LevelSpec, TailRule};
    use crate::dimension::homogeneous_ratio_sequence;

    const LOG2_OVER_LOG3: f64 = 0.6309297535714574;

    fn bernoulli37() -> MoranMeasure {
        MoranMeasure::weighted(
            middle_thirds(),
            WeightRule::Bernoulli { weights: vec![0.3, 0.7] },
        )
        .unwrap()
    }

    #[test]
    fn uniform_masses() {
        let m = MoranMeasure::uniform(middle_thirds());
        let w = Word::from(vec![1, 2, 1, 2]);
        let lm = m.cylinder_log_mass(&w).unwrap();
        assert!((lm - (-4.0 * 2.0f64.ln())).abs() < 1e-14);

        // Alternating branching 2, 3: level-2 mass 1/6.
        let spec = ConstructionSpec::new(
            SpecKind::SpatiallySymmetric,
            1.0,
            vec![],
            TailRule::Periodic {
                block: vec![LevelSpec::new(vec![0.3, 0.3]), LevelSpec::new(vec![0.2, 0.2, 0.2])],
            },
        )
        .unwrap();
        let m = MoranMeasure::uniform(spec);
        let lm = m.cylinder_log_mass(&Word::from(vec![2, 3])).unwrap();
        assert!((lm.exp() - 1.0 / 6.0).abs() < 1e-14);

        // Single offspring: all masses 1.
        let spec = ConstructionSpec::new(
            SpecKind::Homogeneous,
            1.0,
            vec![],
            TailRule::Periodic { block: vec![LevelSpec::new(vec![0.4])] },
        )
        .unwrap();
        let m = MoranMeasure::uniform(spec);
        assert_eq!(m.cylinder_log_mass(&Word::from(vec![1, 1, 1])).unwrap(), 0.0);
    }

    #[test]
    fn weighted_measure_validation() {
        assert!(bernoulli37().cylinder_log_mass(&Word::from(vec![1, 2])).is_ok());
        let bad = MoranMeasure::weighted(
            middle_thirds(),
            WeightRule::Bernoulli { weights: vec![0.5, 0.6] },
        );
        assert!(matches!(bad, Err(MoranError::InvalidWeights(_))));
        let bad = MoranMeasure::weighted(
            middle_thirds(),
            WeightRule::Bernoulli { weights: vec![1.3, -0.3] },
        );
        assert!(bad.is_err());
        // A killed branch is fine.
        let killed = MoranMeasure::weighted(
            middle_thirds(),
            WeightRule::Bernoulli { weights: vec![1.0, 0.0] },
        )
        .unwrap();
        assert_eq!(
            killed.cylinder_log_mass(&Word::from(vec![2, 1])).unwrap(),
            f64::NEG_INFINITY
        );
        assert_eq!(
            killed.cylinder_log_mass(&Word::from(vec![2, 1, 1])).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn bernoulli_mass_example() {
        let m = bernoulli37();
        let lm = m.cylinder_log_mass(&Word::from(vec![1, 2])).unwrap();
        assert!((lm - 0.21f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn mass_conservation_to_depth() {
        let m = bernoulli37();
        let mut word = Word::root();
        for k in 1..=1000 {
            let parent = m.cylinder_log_mass(&word).unwrap().exp();
            let children: f64 = m
                .spec
                .offsprings(&word)
                .unwrap()
                .iter()
                .map(|w| m.cylinder_log_mass(w).unwrap().exp())
                .sum();
            // Below ~1e-300 the masses leave the normal f64 range and
            // the exp() round trip loses relative precision.
            if parent > 1e-300 {
                assert!(
                    ((children - parent) / parent).abs() < 1e-12,
                    "level {k}: {children} vs {parent}"
                );
            }
            word = word.child(if k % 2 == 0 { 1 } else { 2 });
        }
    }

    #[test]
    fn entropy_ratio_uniform_is_exact_closed_form() {
        let m = MoranMeasure::uniform(middle_thirds());
        let path = Word::from(vec![1; 500]);
        let trace = entropy_average_ratio(&m, &path, 500).unwrap();
        for r in &trace.ratios {
            assert!((r - LOG2_OVER_LOG3).abs() < 1e-13);
        }

        // Uniform on the doubling-block spec: ratio at depth n equals the
        // homogeneous partial-sum closed form exactly.
        let m = MoranMeasure::uniform(doubling_blocks());
        let path = m.sample_paths(300, 1, 7).unwrap().pop().unwrap();
        let trace = entropy_average_ratio(&m, &path, 300).unwrap();
        let oracle = homogeneous_ratio_sequence(&m.spec, 300);
        for (r, o) in trace.ratios.iter().zip(&oracle) {
            assert!((r - o).abs() < 1e-12, "{r} vs {o}");
        }
    }

    #[test]
    fn entropy_ratio_single_offspring_is_zero() {
        let spec = ConstructionSpec::new(
            SpecKind::Homogeneous,
            1.0,
            vec![],
            TailRule::Periodic { block: vec![LevelSpec::new(vec![0.4])] },
        )
        .unwrap();
        let m = MoranMeasure::uniform(spec);
        let trace = entropy_average_ratio(&m, &Word::from(vec![1; 50]), 50).unwrap();
        assert_eq!(trace.ratio, 0.0);
    }

    #[test]
    fn entropy_ratio_bernoulli_matches_entropy_oracle() {
        let m = bernoulli37();
        let oracle = -(0.3 * 0.3f64.ln() + 0.7 * 0.7f64.ln()) / 3.0f64.ln();
        let path = m.sample_paths(10_000, 1, 11).unwrap().pop().unwrap();
        let trace = entropy_average_ratio(&m, &path, 10_000).unwrap();
        assert!((trace.ratio - oracle).abs() < 1e-3, "{} vs {oracle}", trace.ratio);
        assert!(trace.ratio >= 0.0 && trace.numerators[0] <= 0.0);
    }

    #[test]
    fn entropy_ratio_rejects_dead_paths_and_short_paths() {
        let killed = MoranMeasure::weighted(
            middle_thirds(),
            WeightRule::Bernoulli { weights: vec![1.0, 0.0] },
        )
        .unwrap();
        let dead = Word::from(vec![2, 1, 1, 1, 1]);
        assert!(entropy_average_ratio(&killed, &dead, 5).is_err());
        let m = MoranMeasure::uniform(middle_thirds());
        assert!(entropy_average_ratio(&m, &Word::from(vec![1, 2]), 5).is_err());
    }

    #[test]
    fn conditions_uniform_vs_divergent_example() {
        let uniform = MoranMeasure::uniform(middle_thirds());
        let paths = uniform.sample_paths(1000, 3, 3).unwrap();
        let report = check_entropy_conditions(&uniform, 1000, &paths).unwrap();
        assert_eq!(report.verdict, Verdict::PlausiblyConvergent);
        assert!(report.diamspeed_positive);
        for v in &report.diamspeed_values {
            assert!((v - 3.0f64.ln()).abs() < 1e-12);
        }
        for w in report.l2_partial_sums.windows(2) {
            assert!(w[1] >= w[0]);
        }

        let half = MoranMeasure::weighted(
            entropy_divergence(),
            WeightRule::Bernoulli { weights: vec![0.5, 0.5] },
        )
        .unwrap();
        let paths = half.sample_paths(1000, 3, 4).unwrap();
        let report = check_entropy_conditions(&half, 1000, &paths).unwrap();
        assert_eq!(report.verdict, Verdict::Diverging);
    }

    #[test]
    fn conditions_killed_branch_contributes_zero() {
        let killed = MoranMeasure::weighted(
            middle_thirds(),
            WeightRule::Bernoulli { weights: vec![1.0, 0.0] },
        )
        .unwrap();
        let paths = killed.sample_paths(100, 2, 5).unwrap();
        let report = check_entropy_conditions(&killed, 100, &paths).unwrap();
        // Only the live branch contributes: p = 1 gives (log p)^2 = 0 and
        // (log c)^2 = (log 3)^2.
        let expected = 3.0f64.ln().powi(2);
        assert!((report.increments[0] - expected).abs() < 1e-12);
        assert_eq!(report.verdict, Verdict::PlausiblyConvergent);
    }

    #[test]
    fn lq_uniform_middle_thirds() {
        let m = MoranMeasure::uniform(middle_thirds());
        let f = GeneralFiltration::from_spec(&m.spec, 3000, None).unwrap();
        // q = 2: tau_2 -> log2/log3, dim_2 -> log2/log3.
        let est = lq_spectrum_symbolic(&m, &f, 2.0, None, 3000, 600).unwrap();
        assert!((est.tau_q - LOG2_OVER_LOG3).abs() < 1e-3, "{}", est.tau_q);
        assert!((est.dim_q.unwrap() - LOG2_OVER_LOG3).abs() < 1e-3);
        // q = 0: counting; tau_0 = -log2/log3.
        let est = lq_spectrum_symbolic(&m, &f, 0.0, None, 3000, 600).unwrap();
        assert!((est.tau_q + LOG2_OVER_LOG3).abs() < 1e-3, "{}", est.tau_q);
        // q = 1/2 dimension also log2/log3.
        let d = lq_dimension(&m, 0.5, 3000).unwrap();
        assert!((d - LOG2_OVER_LOG3).abs() < 1e-3);
    }

    #[test]
    fn lq_local_spectrum_matches_global_on_monofractal() {
        let m = MoranMeasure::uniform(middle_thirds());
        let f = GeneralFiltration::from_spec(&m.spec, 2000, None).unwrap();
        let path = Word::from(vec![2; 2000]);
        let local =
            lq_spectrum_symbolic(&m, &f, 2.0, Some((&path, 1e-3)), 2000, 400).unwrap();
        let global = lq_spectrum_symbolic(&m, &f, 2.0, None, 2000, 400).unwrap();
        // The anchor prefix offsets the partial sums by q log mu(prefix),
        // an O(1/depth) perturbation of the ratios at this depth.
        assert!((local.tau_q - global.tau_q).abs() < 5e-3);
    }

    #[test]
    fn lq_rejects_q_one_for_dimension() {
        let m = MoranMeasure::uniform(middle_thirds());
        assert!(matches!(
            lq_dimension(&m, 1.0, 100),
            Err(MoranError::UndefinedAtQOne)
        ));
    }

    #[test]
    fn lq_doubling_blocks_hits_lower_and_upper_limits() {
        let m = MoranMeasure::uniform(doubling_blocks());
        let window = 128;
        let seq = homogeneous_ratio_sequence(&m.spec, 2048);
        let (s_star, s_upper) = tail_min_max(&seq, window).unwrap();
        assert!(s_upper - s_star > 0.02); // distinct limits visible in this window
        for q in [1.5, 2.0, 3.0] {
            let d = lq_dimension_windowed(&m, q, 2048, window).unwrap();
            assert!((d - s_star).abs() < 1e-3, "q = {q}: {d} vs {s_star}");
        }
        for q in [0.3, 0.5] {
            let d = lq_dimension_windowed(&m, q, 2048, window).unwrap();
            assert!((d - s_upper).abs() < 1e-3, "q = {q}: {d} vs {s_upper}");
        }
    }

    #[test]
    fn sandwich_monofractal_and_multifractal() {
        let m = MoranMeasure::uniform(middle_thirds());
        let r = dim_at_one_sandwich_check(&m, 3000, &DEFAULT_Q_GRID, 600, 2, 1).unwrap();
        assert!(r.holds && r.monotone);
        for (_, d) in &r.q_dims {
            assert!((d - LOG2_OVER_LOG3).abs() < 1e-3);
        }
        assert!((r.entropy_lower - LOG2_OVER_LOG3).abs() < 1e-3);

        let m = bernoulli37();
        let r = dim_at_one_sandwich_check(&m, 2000, &[0.9, 0.99, 1.01, 1.1], 400, 2, 2).unwrap();
        assert!(r.holds && r.monotone);
        let oracle = -(0.3 * 0.3f64.ln() + 0.7 * 0.7f64.ln()) / 3.0f64.ln();
        assert!((r.entropy_lower - oracle).abs() < 1e-3);
    }

    #[test]
    fn sandwich_requires_straddling_grid() {
        let m = MoranMeasure::uniform(middle_thirds());
        assert!(dim_at_one_sandwich_check(&m, 100, &[2.0, 3.0], 20, 1, 0).is_err());
        assert!(dim_at_one_sandwich_check(&m, 100, &[0.5, 1.0, 2.0], 20, 1, 0).is_err());
    }

    #[test]
    fn weight_rule_serde_round_trip() {
        for rule in [
            WeightRule::Uniform,
            WeightRule::Bernoulli { weights: vec![0.3, 0.7] },
            WeightRule::PerLevel {
                levels: vec![vec![0.2, 0.8]],
                cycle: vec![vec![0.5, 0.5]],
            },
        ] {
            let json = serde_json::to_string(&rule).unwrap();
            let back: WeightRule = serde_json::from_str(&json).unwrap();
            assert_eq!(rule, back);
        }
    }

    #[test]
    fn sampled_cylinder_frequencies_follow_weights() {
        let m = bernoulli37();
        let paths = m.sample_paths(1, 10_000, 42).unwrap();
        let ones = paths.iter().filter(|p| p.index_at(1) == 1).count() as f64;
        // 3 sigma band for Binomial(10^4, 0.3).
        let sigma = (10_000.0f64 * 0.3 * 0.7).sqrt();
        assert!((ones - 3000.0).abs() < 3.0 * sigma, "{ones}");
    }
}
