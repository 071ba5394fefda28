//! Empirical estimators that close the loop on the exact formulas:
//! grid box counting, pointwise slopes log mu(B(x,r))/log r, greedy
//! delta-packing sums S_q, and conversion of metric ball covers into
//! symbolic word covers.

use serde::{Deserialize, Serialize};

use crate::codetree::Word;
use crate::error::{MoranError, Result};
use crate::measure::MoranMeasure;
use crate::numeric::{ols_fit, tail_min_max};
use crate::realization::IntervalRealization;

/// Sorted sample of points from a realization, tagged with how it was
/// produced so reports can echo their inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    points: Vec<f64>,
    pub provenance: String,
}

impl PointCloud {
    /// Validates finiteness and containment in the root interval, then
    /// sorts ascending.
    pub fn new(
        mut points: Vec<f64>,
        root: (f64, f64),
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(MoranError::InvalidArgument("point cloud must be nonempty".into()));
        }
        for &x in &points {
            if !x.is_finite() || x < root.0 || x > root.1 {
                return Err(MoranError::InvalidArgument(format!(
                    "point {x} outside the root interval [{}, {}]",
                    root.0, root.1
                )));
            }
        }
        points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(PointCloud { points, provenance: provenance.into() })
    }

    /// Measure-driven sample of projected cylinder midpoints.
    pub fn from_measure_sample(
        realization: &IntervalRealization,
        measure: &MoranMeasure,
        count: usize,
        seed: u64,
    ) -> Result<Self> {
        let points = realization.sample_points(measure, count, seed)?;
        PointCloud::new(
            points,
            realization.root_interval(),
            format!("measure sample: count = {count}, seed = {seed}"),
        )
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Strictly decreasing geometric grid of radii discretizing r -> 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRange {
    r_values: Vec<f64>,
    pub base: f64,
}

impl ScaleRange {
    /// `count` radii r_max, r_max * base, ..., with base in (0, 1).
    pub fn geometric(r_max: f64, base: f64, count: usize) -> Result<Self> {
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(MoranError::InvalidArgument(format!("r_max = {r_max} must be positive")));
        }
        if !(base > 0.0 && base < 1.0) {
            return Err(MoranError::InvalidArgument(format!("base = {base} must be in (0, 1)")));
        }
        if count == 0 {
            return Err(MoranError::InvalidArgument("need at least one scale".into()));
        }
        let mut r = r_max;
        let mut r_values = Vec::with_capacity(count);
        for _ in 0..count {
            r_values.push(r);
            r *= base;
        }
        Ok(ScaleRange { r_values, base })
    }

    pub fn values(&self) -> &[f64] {
        &self.r_values
    }
}

/// Box-counting regression outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxCountReport {
    /// Least-squares slope of log count against log(1/r).
    pub dimension: f64,
    /// (scale, occupied-box count averaged over the two grid offsets).
    pub counts: Vec<(f64, f64)>,
    pub rms_residual: f64,
    /// All points coincide; the slope is 0 by construction.
    pub degenerate: bool,
}

impl BoxCountReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scale,count\n");
        for &(r, c) in &self.counts {
            out.push_str(&format!("{r},{c}\n"));
        }
        out
    }
}

fn occupied_boxes(points: &[f64], r: f64, offset: f64) -> usize {
    let mut count = 0usize;
    let mut last = i64::MIN;
    for &x in points {
        let idx = ((x - offset) / r).floor() as i64;
        if idx != last {
            count += 1;
            last = idx;
        }
    }
    count
}

/// Counts occupied half-open grid boxes [o + m r, o + (m+1) r) of side r
/// for each scale, averaging the offsets o = 0 and o = r/2 to damp
/// grid-phase bias, then fits log count against log(1/r) by ordinary
/// least squares.
pub fn box_count_dimension(cloud: &PointCloud, scales: &ScaleRange) -> Result<BoxCountReport> {
    if scales.values().len() < 4 {
        return Err(MoranError::InvalidArgument(format!(
            "box counting needs >= 4 scales, got {}",
            scales.values().len()
        )));
    }
    let pts = cloud.points();
    let degenerate = pts.first() == pts.last();
    let mut counts = Vec::with_capacity(scales.values().len());
    for &r in scales.values() {
        let n0 = occupied_boxes(pts, r, 0.0);
        let n1 = occupied_boxes(pts, r, r / 2.0);
        counts.push((r, (n0 + n1) as f64 / 2.0));
    }
    if degenerate {
        return Ok(BoxCountReport { dimension: 0.0, counts, rms_residual: 0.0, degenerate });
    }
    let xs: Vec<f64> = counts.iter().map(|&(r, _)| (1.0 / r).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&(_, c)| c.ln()).collect();
    let fit = ols_fit(&xs, &ys)?;
    Ok(BoxCountReport {
        dimension: fit.slope,
        counts,
        rms_residual: fit.rms_residual,
        degenerate,
    })
}

/// Exact mass of the closed ball [x - r, x + r]: cylinders disjoint from
/// the ball are pruned, cylinders inside it contribute their full mass
/// without descent, and at the materialized depth any intersecting
/// cylinder is counted whole — the resolution error is bounded by the
/// mass of leaves straddling the ball boundary.
pub fn ball_mass(
    measure: &MoranMeasure,
    realization: &IntervalRealization,
    x: f64,
    r: f64,
) -> Result<f64> {
    if measure.spec != realization.spec {
        return Err(MoranError::InvalidArgument(
            "measure and realization disagree on the construction spec".into(),
        ));
    }
    if !(r > 0.0) {
        return Err(MoranError::InvalidArgument(format!("radius r = {r} must be positive")));
    }
    let depth = realization.materialized_depth();
    let (lo, hi) = (x - r, x + r);
    let (root_left, root_right) = realization.root_interval();
    // (depth, level index, absolute left, length, mass)
    let mut stack = vec![(0usize, 0usize, root_left, root_right - root_left, measure.root_mass)];
    let mut total = 0.0f64;
    while let Some((d, idx, left, len, mass)) = stack.pop() {
        if left > hi || left + len < lo || mass == 0.0 {
            continue;
        }
        if (left >= lo && left + len <= hi) || d == depth {
            total += mass;
            continue;
        }
        let n = realization.spec.branching(d + 1);
        let weights = measure.weights(d + 1)?;
        let level = realization.relative_level(d + 1)?;
        for i in 0..n {
            let child = idx * n + i;
            let (off, clen) = level[child];
            stack.push((d + 1, child, left + off, clen, mass * weights[i]));
        }
    }
    Ok(total)
}

/// Per-scale slopes log mu(B(x,r))/log r with tail min/max estimates of
/// the lower and upper local dimension at x.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalSlopeReport {
    /// (scale, log mu(B(x,r)) / log r).
    pub ratios: Vec<(f64, f64)>,
    pub lower_estimate: f64,
    pub upper_estimate: f64,
    pub tail_window: usize,
}

impl LocalSlopeReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scale,ratio\n");
        for &(r, v) in &self.ratios {
            out.push_str(&format!("{r},{v}\n"));
        }
        out
    }
}

pub fn local_dimension_slope(
    measure: &MoranMeasure,
    realization: &IntervalRealization,
    x: f64,
    scales: &ScaleRange,
) -> Result<LocalSlopeReport> {
    let (a, b) = realization.root_interval();
    if !(x >= a && x <= b) {
        return Err(MoranError::InvalidArgument(format!(
            "x = {x} outside the root interval [{a}, {b}]"
        )));
    }
    let mut ratios = Vec::with_capacity(scales.values().len());
    for &r in scales.values() {
        if r >= b - a {
            return Err(MoranError::InvalidArgument(format!(
                "scale {r} is not below the root diameter {}",
                b - a
            )));
        }
        let m = ball_mass(measure, realization, x, r)?;
        if m <= 0.0 {
            return Err(MoranError::InvalidArgument(format!(
                "ball B({x}, {r}) carries no mass; x is not in the support"
            )));
        }
        ratios.push((r, m.ln() / r.ln()));
    }
    let tail_window = (ratios.len() / 3).max(1);
    let values: Vec<f64> = ratios.iter().map(|&(_, v)| v).collect();
    let (lower_estimate, upper_estimate) = tail_min_max(&values, tail_window)?;
    Ok(LocalSlopeReport { ratios, lower_estimate, upper_estimate, tail_window })
}

/// Greedy maximal delta-packing sum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SqPackingReport {
    pub q: f64,
    pub delta: f64,
    /// Sum of mu(B(c, delta))^q over the placed balls.
    pub s_q: f64,
    pub ball_count: usize,
    pub centers: Vec<f64>,
}

fn packing_sum(
    measure: &MoranMeasure,
    realization: &IntervalRealization,
    centers: &[f64],
    q: f64,
    delta: f64,
) -> Result<f64> {
    let mut sum = 0.0;
    for &c in centers {
        let m = ball_mass(measure, realization, c, delta)?;
        // 0^q := 0, including at q = 0.
        if m > 0.0 {
            sum += m.powf(q);
        }
    }
    Ok(sum)
}

/// Estimates S_q(mu, region, delta): places disjoint closed balls of
/// radius delta centered at support points (deepest materialized
/// midpoints of positive mass inside the region). The left-to-right
/// sweep maximizes the ball count; for q >= 1 a mass-greedy ordering is
/// also tried and the larger sum returned. The true supremum over all
/// packings is not computable; the greedy value is exact on
/// cylinder-aligned configurations.
pub fn sq_packing_sum(
    measure: &MoranMeasure,
    realization: &IntervalRealization,
    region: (f64, f64),
    q: f64,
    delta: f64,
) -> Result<SqPackingReport> {
    if !(delta > 0.0) {
        return Err(MoranError::InvalidArgument(format!("delta = {delta} must be positive")));
    }
    if q < 0.0 {
        return Err(MoranError::InvalidArgument(format!("q = {q} must be >= 0")));
    }
    if measure.spec != realization.spec {
        return Err(MoranError::InvalidArgument(
            "measure and realization disagree on the construction spec".into(),
        ));
    }
    let depth = realization.materialized_depth();
    if depth == 0 {
        return Err(MoranError::InvalidArgument("realization has no materialized levels".into()));
    }
    // Support points: midpoints of deepest materialized cylinders with
    // positive mass, restricted to the region.
    let mut masses = vec![measure.root_mass];
    for k in 1..=depth {
        let weights = measure.weights(k)?;
        let mut next = Vec::with_capacity(masses.len() * weights.len());
        for &m in &masses {
            for &w in weights.iter() {
                next.push(m * w);
            }
        }
        masses = next;
    }
    let support: Vec<f64> = realization
        .absolute_level(depth)?
        .iter()
        .zip(masses.iter())
        .filter(|&(_, &m)| m > 0.0)
        .map(|(&(left, len), _)| left + len / 2.0)
        .filter(|&c| c >= region.0 && c <= region.1)
        .collect();

    // Disjointness of closed balls needs centers strictly more than
    // 2 delta apart; the slack keeps cylinder-aligned configurations,
    // whose separations are exactly 2 delta up to rounding, on the
    // touching (rejected) side.
    let sep = 2.0 * delta * (1.0 + 1e-9);

    // Left-to-right sweep: maximal cardinality among packings by centers.
    let mut sweep = Vec::new();
    for &c in &support {
        if sweep.last().is_none_or(|&last: &f64| c - last > sep) {
            sweep.push(c);
        }
    }
    let sweep_sum = packing_sum(measure, realization, &sweep, q, delta)?;

    let (centers, s_q) = if q >= 1.0 {
        // Mass-greedy: heaviest balls first, kept if disjoint from all
        // already placed.
        let mut by_mass: Vec<(f64, f64)> = support
            .iter()
            .map(|&c| Ok((ball_mass(measure, realization, c, delta)?, c)))
            .collect::<Result<_>>()?;
        by_mass.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut placed: Vec<f64> = Vec::new();
        for &(_, c) in &by_mass {
            let i = placed.partition_point(|&p| p < c);
            let ok_left = i == 0 || c - placed[i - 1] > sep;
            let ok_right = i == placed.len() || placed[i] - c > sep;
            if ok_left && ok_right {
                placed.insert(i, c);
            }
        }
        let greedy_sum = packing_sum(measure, realization, &placed, q, delta)?;
        if greedy_sum > sweep_sum {
            (placed, greedy_sum)
        } else {
            (sweep, sweep_sum)
        }
    } else {
        (sweep, sweep_sum)
    };

    Ok(SqPackingReport { q, delta, s_q, ball_count: centers.len(), centers })
}

/// Converts metric balls into the symbolic cover of diameter-crossing
/// words: for each ball B, the words whose cylinder meets B with realized
/// diameter at most diam(B) while the parent's exceeds it. A ball at
/// least as large as the root yields the root word. The union over the
/// balls is an antichain cover of the materialized prefix, ready for the
/// covering/packing comparison oracle.
pub fn ball_to_cylinder_cover(
    realization: &IntervalRealization,
    balls: &[(f64, f64)],
) -> Result<Vec<Word>> {
    if balls.is_empty() {
        return Err(MoranError::InvalidArgument("need at least one ball".into()));
    }
    for &(a, b) in balls {
        if !(b > a) {
            return Err(MoranError::InvalidArgument(format!(
                "degenerate ball [{a}, {b}]"
            )));
        }
    }
    let depth = realization.materialized_depth();
    if depth == 0 {
        return Err(MoranError::InvalidArgument("realization has no materialized levels".into()));
    }
    // Precondition: the balls cover the materialized prefix of the limit
    // set, i.e. every deepest cylinder meets some ball.
    for &(left, len) in realization.absolute_level(depth)?.iter() {
        if !balls.iter().any(|&(a, b)| left <= b && left + len >= a) {
            return Err(MoranError::InvalidArgument(format!(
                "balls fail to cover the limit-set prefix near [{left}, {}]",
                left + len
            )));
        }
    }

    let (root_left, root_right) = realization.root_interval();
    let mut cover = Vec::new();
    for &(a, b) in balls {
        let diam = b - a;
        if root_right - root_left <= diam {
            cover.push(Word::root());
            continue;
        }
        // (depth, level index, absolute left, length, word)
        let mut stack = vec![(0usize, 0usize, root_left, root_right - root_left, Word::root())];
        while let Some((d, idx, left, len, word)) = stack.pop() {
            if left > b || left + len < a {
                continue;
            }
            // The relative slack accepts cylinders whose realized
            // diameter equals the ball's up to rounding (hull balls).
            if len <= diam * (1.0 + 1e-9) {
                cover.push(word);
                continue;
            }
            if d == depth {
                return Err(MoranError::InvalidArgument(format!(
                    "ball [{a}, {b}] crosses diameters below the materialized depth {depth}"
                )));
            }
            let n = realization.spec.branching(d + 1);
            let level = realization.relative_level(d + 1)?;
            for i in 0..n {
                let child = idx * n + i;
                let (off, clen) = level[child];
                stack.push((d + 1, child, left + off, clen, word.child(i as u32 + 1)));
            }
        }
    }
    cover.sort();
    cover.dedup();
    Ok(cover)
}
