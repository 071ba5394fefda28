//! Shared numerical routines: log-sum-exp, bisection, compensated
//! summation, least squares, and tail-window limit estimation.

use crate::error::{MoranError, Result};

/// log(sum(exp(t))) over the given terms, stable for very negative terms.
/// Returns negative infinity for an empty input.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = terms.iter().map(|&t| (t - m).exp()).sum();
    m + sum.ln()
}

/// Kahan compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Outcome of a bisection solve.
#[derive(Debug, Clone, Copy)]
pub struct BisectionResult {
    pub root: f64,
    pub residual: f64,
    pub iterations: usize,
}

pub const BISECTION_MAX_ITERS: usize = 200;
pub const BISECTION_RESIDUAL_TARGET: f64 = 1e-13;

/// Root of a strictly decreasing function with f(lo) >= 0.
///
/// The upper bracket end is grown by doubling until the sign flips; the
/// bracket then contracts until the residual target, the iteration cap, or
/// f64 resolution is reached. The returned point is the evaluated point
/// with the smallest |f| seen.
pub fn bisect_decreasing<F: Fn(f64) -> f64>(f: F, lo0: f64) -> Result<BisectionResult> {
    let mut lo = lo0;
    let flo = f(lo);
    if flo < 0.0 {
        return Err(MoranError::NonConvergence(format!(
            "bisection: f({lo}) = {flo} < 0 at the lower bracket end"
        )));
    }
    if flo == 0.0 {
        return Ok(BisectionResult { root: lo, residual: 0.0, iterations: 0 });
    }
    let mut hi = if lo > 0.0 { 2.0 * lo } else { 1.0 };
    let mut fhi = f(hi);
    let mut growth = 0;
    while fhi >= 0.0 {
        lo = hi;
        hi *= 2.0;
        fhi = f(hi);
        growth += 1;
        if growth > 200 {
            return Err(MoranError::NonConvergence(
                "bisection: failed to bracket a sign change".into(),
            ));
        }
    }

    let mut best = (lo, f(lo).abs());
    if fhi.abs() < best.1 {
        best = (hi, fhi.abs());
    }
    let mut iterations = 0;
    for _ in 0..BISECTION_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // f64 resolution exhausted
        }
        let fmid = f(mid);
        iterations += 1;
        if fmid.abs() < best.1 {
            best = (mid, fmid.abs());
        }
        if fmid.abs() <= BISECTION_RESIDUAL_TARGET {
            break;
        }
        if fmid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(BisectionResult { root: best.0, residual: best.1, iterations })
}

/// Ordinary least squares fit y = slope*x + intercept.
#[derive(Debug, Clone, Copy)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square of the fit residuals.
    pub rms_residual: f64,
}

pub fn ols_fit(xs: &[f64], ys: &[f64]) -> Result<OlsFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(MoranError::InvalidArgument(
            "least squares needs at least two matching points".into(),
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(MoranError::InvalidArgument(
            "least squares: abscissae are all equal".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    Ok(OlsFit { slope, intercept, rms_residual: (ss / n).sqrt() })
}

/// Estimated distance of the limit of a sequence a_n from 1, obtained by
/// regressing a_n against 1/n over the supplied window and extrapolating
/// n -> infinity. Sequences converging to 1 at rate O(1/n) score close to
/// zero even at modest depths where |a_n - 1| itself is still large.
pub fn trend_limit_deviation(indices: &[usize], values: &[f64]) -> Result<f64> {
    Ok((trend_extrapolated_limit(indices, values)? - 1.0).abs())
}

/// Extrapolated limit of a sequence, obtained by regressing a_n against
/// 1/n over the supplied window and reading off the intercept.
pub fn trend_extrapolated_limit(indices: &[usize], values: &[f64]) -> Result<f64> {
    let xs: Vec<f64> = indices.iter().map(|&n| 1.0 / n as f64).collect();
    Ok(ols_fit(&xs, values)?.intercept)
}

/// Minimum and maximum over the last `window` entries.
pub fn tail_min_max(values: &[f64], window: usize) -> Result<(f64, f64)> {
    if window == 0 || window > values.len() {
        return Err(MoranError::InvalidArgument(format!(
            "tail window {} outside 1..={}",
            window,
            values.len()
        )));
    }
    let tail = &values[values.len() - window..];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in tail {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi))
}

/// Default tail window convention: 20% of the depth, at least one entry.
pub fn default_tail_window(depth: usize) -> usize {
    (depth / 5).max(1)
}
