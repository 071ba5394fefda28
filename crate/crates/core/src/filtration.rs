//! General filtrations: two scale sequences (gamma_n, delta_n) and
//! diameter-crossing antichains Q_n built from a Moran construction,
//! verification of the axioms F1-F4, and local dimensions via
//! log mu(Q_n(x)) / log delta_n.

use serde::{Deserialize, Serialize};

use crate::codetree::{ConstructionSpec, Word};
use crate::error::{MoranError, Result};
use crate::measure::MoranMeasure;
use crate::numeric::{default_tail_window, tail_min_max, trend_limit_deviation};
use crate::realization::IntervalRealization;

// Extremal log ratios via the symbolic accessor, which stays finite for
// level-decay tails at depths where the ratios themselves underflow.
fn min_log_ratio(spec: &ConstructionSpec, k: usize) -> f64 {
    spec.log_ratios(k).into_iter().fold(f64::INFINITY, f64::min)
}

fn max_log_ratio(spec: &ConstructionSpec, k: usize) -> f64 {
    spec.log_ratios(k).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Relative tolerance for diameter-threshold ties in log space.
const TIE_EPS: f64 = 1e-9;

/// Diameter fidelity required of a realization before its construction is
/// continued symbolically.
const FIDELITY_TOLERANCE: f64 = 1e-9;

/// A general filtration derived from a construction: for each n,
/// gamma_n is the smallest level-n cylinder diameter, Q_n is the antichain
/// of cylinders whose diameter crosses gamma_n, and delta_n is the
/// certified inradius scale C0 * gamma_n^(k/(k-1)) with k growing along
/// the empirical threshold sequence. Scales are carried in natural logs so
/// depth 10^4 survives without underflow.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneralFiltration {
    spec: Option<ConstructionSpec>,
    c0: f64,
    log_gamma: Vec<f64>,
    log_delta: Vec<f64>,
    k_index: Vec<usize>,
}

impl GeneralFiltration {
    /// Symbolic construction from a spec. The root diameter must not
    /// exceed 1 so that raising gamma_n to powers above 1 shrinks it
    /// (otherwise delta_n <= gamma_n is not automatic).
    pub fn from_spec(
        spec: &ConstructionSpec,
        depth: usize,
        c0: Option<f64>,
    ) -> Result<GeneralFiltration> {
        let c0 = c0.unwrap_or(0.5);
        if !(c0 > 0.0 && c0 < 1.0) {
            return Err(MoranError::InvalidArgument(format!("C0 = {c0} must be in (0, 1)")));
        }
        if depth == 0 {
            return Err(MoranError::InvalidArgument("depth must be >= 1".into()));
        }
        if spec.root_diameter > 1.0 {
            return Err(MoranError::InvalidArgument(
                "filtration construction requires root diameter <= 1".into(),
            ));
        }
        let mut log_gamma = Vec::with_capacity(depth);
        let mut log_lambda = Vec::with_capacity(depth); // largest level diameter
        let mut lg = spec.root_diameter.ln();
        let mut ll = lg;
        for k in 1..=depth {
            lg += min_log_ratio(spec, k);
            ll += max_log_ratio(spec, k);
            log_gamma.push(lg);
            log_lambda.push(ll);
        }
        // Largest admissible k at each level, from the condition
        // max-diam(n) <= min-offspring-ratio(n+1)^(k-1); then a suffix
        // minimum freezes the empirical threshold sequence: k_index[n] is
        // valid for every computed level >= n.
        let mut k_cap = vec![0usize; depth];
        for n in 1..=depth {
            let l_min = min_log_ratio(spec, n + 1);
            // The small slack absorbs accumulated rounding in the log
            // sums when the quotient is an exact integer (homogeneous
            // specs hit this at every level).
            let k = (log_lambda[n - 1] / l_min + 1e-6).floor() as i64 + 1;
            k_cap[n - 1] = k.max(1) as usize;
        }
        let mut k_index = vec![0usize; depth];
        let mut running = usize::MAX;
        for n in (1..=depth).rev() {
            running = running.min(k_cap[n - 1]);
            k_index[n - 1] = running.max(2);
        }
        let log_delta: Vec<f64> = (1..=depth)
            .map(|n| {
                let k = k_index[n - 1] as f64;
                c0.ln() + (k / (k - 1.0)) * log_gamma[n - 1]
            })
            .collect();
        Ok(GeneralFiltration {
            spec: Some(spec.clone()),
            c0,
            log_gamma,
            log_delta,
            k_index,
        })
    }

    /// Filtration for a realized construction: certifies that realized
    /// interval lengths match the symbolic diameters on the materialized
    /// prefix, then continues symbolically to `depth` with the
    /// realization's certified inradius constant.
    pub fn from_realization(
        realization: &IntervalRealization,
        depth: usize,
    ) -> Result<GeneralFiltration> {
        let err = realization.max_fidelity_error()?;
        if err > FIDELITY_TOLERANCE {
            return Err(MoranError::AxiomViolation(format!(
                "realized diameters deviate from symbolic ones by {err:e}"
            )));
        }
        GeneralFiltration::from_spec(&realization.spec, depth, Some(realization.c0_certified))
    }

    /// Hand-built sequences, mainly for exercising the axiom checks. No
    /// construction spec is attached, so cell queries are unavailable.
    pub fn from_sequences(gamma: &[f64], delta: &[f64], c0: f64) -> Result<GeneralFiltration> {
        if gamma.len() != delta.len() || gamma.is_empty() {
            return Err(MoranError::InvalidArgument(
                "gamma and delta must be equal-length and nonempty".into(),
            ));
        }
        if gamma.iter().chain(delta).any(|&v| !(v > 0.0)) {
            return Err(MoranError::InvalidArgument("scales must be positive".into()));
        }
        Ok(GeneralFiltration {
            spec: None,
            c0,
            log_gamma: gamma.iter().map(|v| v.ln()).collect(),
            log_delta: delta.iter().map(|v| v.ln()).collect(),
            k_index: Vec::new(),
        })
    }

    pub fn depth(&self) -> usize {
        self.log_gamma.len()
    }

    pub fn spec(&self) -> Option<&ConstructionSpec> {
        self.spec.as_ref()
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// gamma_n in linear scale (1-based n); underflows to 0 at extreme
    /// depths — prefer `log_gamma` there.
    pub fn gamma(&self, n: usize) -> f64 {
        self.log_gamma[n - 1].exp()
    }

    pub fn delta(&self, n: usize) -> f64 {
        self.log_delta[n - 1].exp()
    }

    pub fn log_gamma(&self, n: usize) -> f64 {
        self.log_gamma[n - 1]
    }

    pub fn log_delta(&self, n: usize) -> f64 {
        self.log_delta[n - 1]
    }

    fn spec_or_err(&self) -> Result<&ConstructionSpec> {
        self.spec.as_ref().ok_or_else(|| {
            MoranError::InvalidArgument(
                "this filtration carries no construction spec".into(),
            )
        })
    }

    /// The members of Q_n: words whose cylinder diameter is <= gamma_n
    /// while the parent's diameter exceeds it. Errors when the antichain
    /// exceeds `cap` words.
    pub fn cells_at(&self, n: usize, cap: usize) -> Result<Vec<Word>> {
        let spec = self.spec_or_err()?;
        if n == 0 || n > self.depth() {
            return Err(MoranError::InvalidArgument(format!(
                "level {n} outside 1..={}",
                self.depth()
            )));
        }
        let threshold = self.log_gamma[n - 1] + TIE_EPS * self.log_gamma[n - 1].abs();
        let mut cells = Vec::new();
        let mut stack = vec![(Word::root(), spec.root_diameter.ln())];
        while let Some((word, ld)) = stack.pop() {
            if !word.is_empty() && ld <= threshold {
                cells.push(word);
                if cells.len() > cap {
                    return Err(MoranError::InvalidArgument(format!(
                        "level {n} exceeds the cell enumeration cap of {cap}"
                    )));
                }
                continue;
            }
            let k = word.len() + 1;
            for i in 1..=spec.branching(k) as u32 {
                let child_ld = ld + spec.log_ratio(k, i);
                stack.push((word.child(i), child_ld));
            }
        }
        cells.sort();
        Ok(cells)
    }

    /// Depth of Q_n(x), the unique member of Q_n whose cylinder contains
    /// the path: the shortest prefix whose diameter is <= gamma_n.
    pub fn q_cell_of(&self, path: &Word, n: usize) -> Result<Word> {
        let spec = self.spec_or_err()?;
        spec.validate_word(path)?;
        let threshold = self.log_gamma[n - 1] + TIE_EPS * self.log_gamma[n - 1].abs();
        let mut ld = spec.root_diameter.ln();
        let mut d = 0;
        while ld > threshold {
            d += 1;
            if d > path.len() {
                return Err(MoranError::InvalidArgument(format!(
                    "path of length {} too short to resolve Q_{n}(x)",
                    path.len()
                )));
            }
            ld += spec.log_ratio(d, path.index_at(d));
        }
        Ok(path.prefix(d))
    }

    /// Summary CSV: n, gamma_n, delta_n, level_size, F3 ratio, F4 ratio.
    /// The level size is left blank when the antichain is too large to
    /// enumerate.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,gamma_n,delta_n,level_size,f3_ratio,f4_ratio\n");
        for n in 1..=self.depth() {
            let size = match self.cells_at(n, 100_000) {
                Ok(cells) => cells.len().to_string(),
                Err(_) => String::new(),
            };
            let f3 = if n < self.depth() {
                format!("{}", self.log_delta[n - 1] / self.log_delta[n])
            } else {
                String::new()
            };
            let f4 = format!("{}", self.log_gamma[n - 1] / self.log_delta[n - 1]);
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                n,
                self.gamma(n),
                self.delta(n),
                size,
                f3,
                f4
            ));
        }
        out
    }
}

/// Outcome of checking F1-F4 on a computed filtration prefix. F1 failures
/// are hard errors; the asymptotic axioms F3 and F4 report the deviation
/// of the 1/n-extrapolated limit of their ratio sequences from 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiltrationAxiomReport {
    pub f1_ok: bool,
    pub f2_ok: bool,
    pub f3_deviation: f64,
    pub f4_deviation: f64,
    pub trend_window: usize,
}

impl FiltrationAxiomReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.f1_ok && self.f2_ok && self.f3_deviation < tolerance && self.f4_deviation < tolerance
    }
}

pub fn verify_filtration_axioms(
    filtration: &GeneralFiltration,
    trend_window: usize,
) -> Result<FiltrationAxiomReport> {
    let depth = filtration.depth();
    if trend_window < 2 || depth < 2 * trend_window {
        return Err(MoranError::InvalidArgument(format!(
            "need depth >= 2 * trend_window >= 4, got depth = {depth}, window = {trend_window}"
        )));
    }
    // F1: delta_n <= gamma_n, exactly.
    for n in 1..=depth {
        if filtration.log_delta(n) > filtration.log_gamma(n) + 1e-12 {
            return Err(MoranError::AxiomViolation(format!(
                "F1 fails at n = {n}: delta = {} > gamma = {}",
                filtration.delta(n),
                filtration.gamma(n)
            )));
        }
    }
    // F2: gamma strictly decreasing.
    let f2_ok = (2..=depth).all(|n| filtration.log_gamma(n) < filtration.log_gamma(n - 1));

    // F3: log delta_n / log delta_{n+1} -> 1.
    let ns: Vec<usize> = (depth - trend_window..depth).collect();
    let f3: Vec<f64> = ns
        .iter()
        .map(|&n| filtration.log_delta(n) / filtration.log_delta(n + 1))
        .collect();
    let f3_deviation = trend_limit_deviation(&ns, &f3)?;

    // F4: log gamma_n / log delta_n -> 1.
    let ns4: Vec<usize> = (depth - trend_window + 1..=depth).collect();
    let f4: Vec<f64> = ns4
        .iter()
        .map(|&n| filtration.log_gamma(n) / filtration.log_delta(n))
        .collect();
    let f4_deviation = trend_limit_deviation(&ns4, &f4)?;

    Ok(FiltrationAxiomReport { f1_ok: true, f2_ok, f3_deviation, f4_deviation, trend_window })
}

/// Lower and upper local dimension estimates at the point addressed by
/// `path`: tail-window min/max of log mu(Q_n(x)) / log delta_n over the
/// filtration's depth. The measure must be non-atomic along the path.
pub fn local_dim_via_filtration(
    measure: &MoranMeasure,
    filtration: &GeneralFiltration,
    path: &Word,
) -> Result<(f64, f64)> {
    let spec = filtration.spec_or_err()?;
    if spec != &measure.spec {
        return Err(MoranError::InvalidArgument(
            "measure and filtration disagree on the construction spec".into(),
        ));
    }
    spec.validate_word(path)?;
    let depth = filtration.depth();
    let window = default_tail_window(depth);

    // Cumulative log diameters and log masses along the path.
    let mut log_diam = Vec::with_capacity(path.len() + 1);
    let mut log_mass = Vec::with_capacity(path.len() + 1);
    log_diam.push(spec.root_diameter.ln());
    log_mass.push(0.0);
    let mut atomic_tail = true;
    for d in 1..=path.len() {
        let i = path.index_at(d);
        log_diam.push(log_diam[d - 1] + spec.log_ratio(d, i));
        let p = measure.weights(d)?[(i - 1) as usize];
        if p == 0.0 {
            return Err(MoranError::InvalidWeights(format!(
                "path enters a zero-mass cylinder at level {d}"
            )));
        }
        log_mass.push(log_mass[d - 1] + p.ln());
        if d > path.len().saturating_sub(window) && p < 1.0 {
            atomic_tail = false;
        }
    }
    if atomic_tail {
        return Err(MoranError::InvalidArgument(
            "measure is atomic along the path (all tail weights equal 1)".into(),
        ));
    }

    let mut values = Vec::with_capacity(depth);
    let mut d = 0usize;
    for n in 1..=depth {
        let threshold = filtration.log_gamma(n) + TIE_EPS * filtration.log_gamma(n).abs();
        while log_diam[d] > threshold {
            d += 1;
            if d > path.len() {
                return Err(MoranError::InvalidArgument(format!(
                    "path of length {} too short for filtration depth {depth}",
                    path.len()
                )));
            }
        }
        values.push(log_mass[d] / filtration.log_delta(n));
    }
    tail_min_max(&values, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codetree::presets::*;
    use crate::measure::{MoranMeasure, WeightRule};

    const LOG2_OVER_LOG3: f64 = 0.6309297535714574;

    #[test]
    fn homogeneous_filtration_is_full_levels() {
        let f = GeneralFiltration::from_spec(&middle_thirds(), 8, None).unwrap();
        for n in 1..=6 {
            let cells = f.cells_at(n, 1000).unwrap();
            assert_eq!(cells.len(), 1usize << n);
            assert!(cells.iter().all(|w| w.len() == n));
            assert!((f.log_gamma(n) - (-(n as f64) * 3.0f64.ln())).abs() < 1e-12);
        }
    }

    #[test]
    fn two_ratio_cells_cross_the_threshold_and_cover() {
        let spec = two_ratio();
        let f = GeneralFiltration::from_spec(&spec, 6, None).unwrap();
        for n in 2..=5 {
            let cells = f.cells_at(n, 100_000).unwrap();
            let lg = f.log_gamma(n);
            for w in &cells {
                let ld = spec.cylinder_log_diameter(w).unwrap();
                let parent_ld = spec.cylinder_log_diameter(&w.parent().unwrap()).unwrap();
                assert!(ld <= lg + 1e-9, "{w}");
                assert!(parent_ld > lg, "{w}");
            }
            // Coverage: every deep word has exactly one ancestor-or-self
            // among the cells.
            let max_depth = cells.iter().map(Word::len).max().unwrap();
            for deep in spec.enumerate_level(max_depth, 1 << 20).unwrap() {
                let hits = cells
                    .iter()
                    .filter(|c| c.is_prefix_of(&deep))
                    .count();
                assert_eq!(hits, 1, "word {deep} at level {n}");
            }
            // Antichain.
            for (i, a) in cells.iter().enumerate() {
                for b in &cells[i + 1..] {
                    assert!(!a.is_prefix_of(b) && !b.is_prefix_of(a));
                }
            }
        }
    }

    #[test]
    fn axioms_pass_on_presets() {
        let f = GeneralFiltration::from_spec(&middle_thirds(), 100, None).unwrap();
        let report = verify_filtration_axioms(&f, 20).unwrap();
        assert!(report.passes(1e-2), "{report:?}");

        let f = GeneralFiltration::from_spec(&two_ratio(), 60, None).unwrap();
        let report = verify_filtration_axioms(&f, 15).unwrap();
        assert!(report.passes(1e-2), "{report:?}");
    }

    #[test]
    fn f1_violation_is_a_hard_failure() {
        let gamma = vec![0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625];
        let mut delta = gamma.clone();
        delta[3] = 0.1; // delta_4 > gamma_4
        let f = GeneralFiltration::from_sequences(&gamma, &delta, 0.5).unwrap();
        assert!(matches!(
            verify_filtration_axioms(&f, 2),
            Err(MoranError::AxiomViolation(_))
        ));
    }

    #[test]
    fn local_dim_uniform_middle_thirds() {
        let m = MoranMeasure::uniform(middle_thirds());
        let f = GeneralFiltration::from_spec(&m.spec, 1000, None).unwrap();
        let path = Word::from(vec![2; 1001]);
        let (lo, hi) = local_dim_via_filtration(&m, &f, &path).unwrap();
        assert!((lo - LOG2_OVER_LOG3).abs() < 2e-2, "{lo}");
        assert!((hi - LOG2_OVER_LOG3).abs() < 2e-2, "{hi}");
        assert!(lo <= hi);
    }

    #[test]
    fn local_dim_bernoulli_matches_entropy_oracle() {
        let m = MoranMeasure::weighted(
            middle_thirds(),
            WeightRule::Bernoulli { weights: vec![0.3, 0.7] },
        )
        .unwrap();
        let f = GeneralFiltration::from_spec(&m.spec, 2000, None).unwrap();
        let oracle = -(0.3 * 0.3f64.ln() + 0.7 * 0.7f64.ln()) / 3.0f64.ln();
        let path = m.sample_paths(2001, 1, 17).unwrap().pop().unwrap();
        let (lo, hi) = local_dim_via_filtration(&m, &f, &path).unwrap();
        assert!((0.5 * (lo + hi) - oracle).abs() < 2e-2, "[{lo}, {hi}] vs {oracle}");
    }

    #[test]
    fn local_dim_rejects_atoms_and_short_paths() {
        use crate::codetree::{ConstructionSpec, LevelSpec, SpecKind, TailRule};
        let spec = ConstructionSpec::new(
            SpecKind::Homogeneous,
            1.0,
            vec![],
            TailRule::Periodic { block: vec![LevelSpec::new(vec![0.4])] },
        )
        .unwrap();
        let m = MoranMeasure::uniform(spec);
        let f = GeneralFiltration::from_spec(&m.spec, 50, None).unwrap();
        assert!(local_dim_via_filtration(&m, &f, &Word::from(vec![1; 60])).is_err());

        let m = MoranMeasure::uniform(middle_thirds());
        let f = GeneralFiltration::from_spec(&m.spec, 100, None).unwrap();
        assert!(local_dim_via_filtration(&m, &f, &Word::from(vec![1; 10])).is_err());
    }

    #[test]
    fn threshold_sequence_middle_thirds() {
        let f = GeneralFiltration::from_spec(&middle_thirds(), 30, None).unwrap();
        // max-diam(n) = 3^-n and min offspring ratio 1/3 give k(n) = n + 1;
        // delta_n = (1/2) * 3^-(n+1).
        for n in 5..25 {
            assert_eq!(f.k_index[n - 1], n + 1);
            let expected = 0.5f64.ln() - (n as f64 + 1.0) * 3.0f64.ln();
            assert!((f.log_delta(n) - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_large_root_diameter() {
        use crate::codetree::{ConstructionSpec, LevelSpec, SpecKind, TailRule};
        let spec = ConstructionSpec::new(
            SpecKind::Homogeneous,
            2.0,
            vec![],
            TailRule::Periodic { block: vec![LevelSpec::new(vec![0.5, 0.5])] },
        )
        .unwrap();
        assert!(GeneralFiltration::from_spec(&spec, 10, None).is_err());
    }

    #[test]
    fn csv_has_expected_shape() {
        let f = GeneralFiltration::from_spec(&middle_thirds(), 5, None).unwrap();
        let csv = f.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[0].starts_with("n,gamma_n"));
        assert!(lines[1].starts_with("1,"));
    }
}
