//! Piecewise-linear curves and piecewise-constant departure schedules.

use serde::Serialize;

use crate::params::Mode;

/// Times closer than this are merged when building a curve.
const TIME_EPS: f64 = 1e-12;

/// Continuous piecewise-linear function with constant extension beyond its
/// first and last breakpoints. Breakpoint times are strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseCurve {
    points: Vec<(f64, f64)>,
}

impl PiecewiseCurve {
    /// Builds a curve from points sorted by time. Points at (nearly) equal
    /// times collapse onto the later one.
    pub fn from_points(points: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (t, v) in points {
            debug_assert!(t.is_finite() && v.is_finite());
            match out.last_mut() {
                Some(last) if t <= last.0 + TIME_EPS => {
                    debug_assert!(t >= last.0 - 1e-9, "curve times must be sorted");
                    last.1 = v;
                }
                _ => out.push((t, v)),
            }
        }
        // Drop interior points that lie on the segment joining their neighbours.
        let mut pruned: Vec<(f64, f64)> = Vec::with_capacity(out.len());
        for p in out {
            if pruned.len() >= 2 {
                let (a, b) = (pruned[pruned.len() - 2], pruned[pruned.len() - 1]);
                let expected = a.1 + (p.1 - a.1) * (b.0 - a.0) / (p.0 - a.0);
                if (expected - b.1).abs() <= 1e-12 * (1.0 + b.1.abs()) {
                    pruned.pop();
                }
            }
            pruned.push(p);
        }
        PiecewiseCurve { points: pruned }
    }

    /// The identically zero curve.
    pub fn zero() -> Self {
        PiecewiseCurve { points: vec![(0.0, 0.0)] }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn start(&self) -> f64 {
        self.points.first().map_or(0.0, |p| p.0)
    }

    pub fn end(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.0)
    }

    /// Slopes of the linear pieces, one per consecutive pair of breakpoints.
    pub fn slopes(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect()
    }

    pub fn eval(&self, t: f64) -> f64 {
        let pts = &self.points;
        match pts.len() {
            0 => 0.0,
            1 => pts[0].1,
            _ => {
                if t <= pts[0].0 {
                    return pts[0].1;
                }
                let last = pts[pts.len() - 1];
                if t >= last.0 {
                    return last.1;
                }
                let i = pts.partition_point(|p| p.0 <= t);
                let (a, b) = (pts[i - 1], pts[i]);
                a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0)
            }
        }
    }

    pub fn max_value(&self) -> f64 {
        self.points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min)
    }

    /// Integral over `[a, b]`, including constant extensions.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut knots = vec![a];
        knots.extend(self.points.iter().map(|p| p.0).filter(|&t| t > a && t < b));
        knots.push(b);
        knots.windows(2).map(|w| 0.5 * (self.eval(w[0]) + self.eval(w[1])) * (w[1] - w[0])).sum()
    }

    /// Integral over the breakpoint span.
    pub fn integral_all(&self) -> f64 {
        self.integral(self.start(), self.end())
    }

    /// Earliest time the curve exceeds `level`, if ever.
    pub fn first_above(&self, level: f64) -> Option<f64> {
        let pts = &self.points;
        if pts.first()?.1 > level {
            return Some(pts[0].0);
        }
        pts.windows(2).find_map(|w| {
            (w[1].1 > level).then(|| w[0].0 + (level - w[0].1) / (w[1].1 - w[0].1) * (w[1].0 - w[0].0))
        })
    }

    /// Latest time the curve is above `level`, if ever.
    pub fn last_above(&self, level: f64) -> Option<f64> {
        let pts = &self.points;
        if pts.last()?.1 > level {
            return Some(pts[pts.len() - 1].0);
        }
        pts.windows(2).rev().find_map(|w| {
            (w[0].1 > level).then(|| w[0].0 + (w[0].1 - level) / (w[0].1 - w[1].1) * (w[1].0 - w[0].0))
        })
    }

    /// Earliest time a nondecreasing curve reaches `level`.
    pub fn inverse(&self, level: f64) -> Option<f64> {
        let pts = &self.points;
        if pts.first()?.1 >= level {
            return Some(pts[0].0);
        }
        pts.windows(2).find_map(|w| {
            (w[1].1 >= level).then(|| w[0].0 + (level - w[0].1) / (w[1].1 - w[0].1) * (w[1].0 - w[0].0))
        })
    }

    /// Pointwise combination on the union of breakpoints.
    pub fn combine(&self, other: &PiecewiseCurve, f: impl Fn(f64, f64) -> f64) -> PiecewiseCurve {
        let times = merge_times(&[self, other]);
        PiecewiseCurve::from_points(times.into_iter().map(|t| (t, f(self.eval(t), other.eval(t)))))
    }

    /// `self − other`.
    pub fn minus(&self, other: &PiecewiseCurve) -> PiecewiseCurve {
        self.combine(other, |a, b| a - b)
    }

    /// True when no value decreases by more than `tol`.
    pub fn is_nondecreasing(&self, tol: f64) -> bool {
        self.points.windows(2).all(|w| w[1].1 >= w[0].1 - tol)
    }
}

/// Sorted, de-duplicated union of the breakpoint times of `curves`.
pub fn merge_times(curves: &[&PiecewiseCurve]) -> Vec<f64> {
    let mut times: Vec<f64> = curves.iter().flat_map(|c| c.points.iter().map(|p| p.0)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() <= TIME_EPS);
    times
}

/// Piecewise-constant function on `[breaks[0], breaks[k]]`, zero outside.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepFunction {
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFunction {
    pub fn eval(&self, t: f64) -> f64 {
        if self.values.is_empty() || t < self.breaks[0] || t >= self.breaks[self.breaks.len() - 1] {
            return 0.0;
        }
        let i = self.breaks.partition_point(|&b| b <= t) - 1;
        self.values[i]
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().zip(self.breaks.windows(2)).map(|(v, w)| v * (w[1] - w[0])).sum()
    }
}

/// Home-departure rates per mode, constant on each segment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepartureProfile {
    breaks: Vec<f64>,
    rates: Vec<[f64; 2]>,
}

fn idx(mode: Mode) -> usize {
    match mode {
        Mode::Rv => 0,
        Mode::Pv => 1,
    }
}

/// Error building a departure profile.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProfileError {
    #[error("segment times must be finite and nondecreasing")]
    Unsorted,
    #[error("departure rates must be finite and nonnegative")]
    BadRate,
}

impl DepartureProfile {
    /// Builds a profile from `(start, end, rv_rate, pv_rate)` segments.
    /// Gaps between segments become zero-rate segments; empty segments are
    /// dropped.
    pub fn from_segments(
        segments: impl IntoIterator<Item = (f64, f64, f64, f64)>,
    ) -> Result<Self, ProfileError> {
        let mut breaks: Vec<f64> = Vec::new();
        let mut rates: Vec<[f64; 2]> = Vec::new();
        for (a, b, r, p) in segments {
            if !(a.is_finite() && b.is_finite()) || b < a {
                return Err(ProfileError::Unsorted);
            }
            if !(r.is_finite() && p.is_finite()) || r < 0.0 || p < 0.0 {
                return Err(ProfileError::BadRate);
            }
            if b - a <= TIME_EPS {
                continue;
            }
            match breaks.last().copied() {
                None => breaks.push(a),
                Some(end) if a > end + TIME_EPS => {
                    rates.push([0.0, 0.0]);
                    breaks.push(a);
                }
                Some(end) if a < end - 1e-9 => return Err(ProfileError::Unsorted),
                Some(_) => {}
            }
            rates.push([r, p]);
            breaks.push(b);
        }
        Ok(DepartureProfile { breaks, rates })
    }

    pub fn empty() -> Self {
        DepartureProfile { breaks: Vec::new(), rates: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    /// `(start, end, [rv_rate, pv_rate])` per segment.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, [f64; 2])> + '_ {
        self.breaks.windows(2).zip(self.rates.iter()).map(|(w, r)| (w[0], w[1], *r))
    }

    pub fn start(&self) -> f64 {
        self.breaks.first().copied().unwrap_or(0.0)
    }

    pub fn end(&self) -> f64 {
        self.breaks.last().copied().unwrap_or(0.0)
    }

    pub fn rate(&self, mode: Mode, t: f64) -> f64 {
        self.step(mode).eval(t)
    }

    pub fn step(&self, mode: Mode) -> StepFunction {
        StepFunction {
            breaks: self.breaks.clone(),
            values: self.rates.iter().map(|r| r[idx(mode)]).collect(),
        }
    }

    /// Total departure rate as a step function.
    pub fn total_step(&self) -> StepFunction {
        StepFunction { breaks: self.breaks.clone(), values: self.rates.iter().map(|r| r[0] + r[1]).collect() }
    }

    /// Departures of `mode` up to time `t`.
    pub fn cumulative(&self, mode: Mode, t: f64) -> f64 {
        let k = idx(mode);
        self.segments().take_while(|s| s.0 < t).map(|(a, b, r)| r[k] * (b.min(t) - a)).sum()
    }

    pub fn total(&self, mode: Mode) -> f64 {
        self.cumulative(mode, f64::INFINITY)
    }

    /// Cumulative departures of `mode` as a curve.
    pub fn cumulative_curve(&self, mode: Mode) -> PiecewiseCurve {
        let k = idx(mode);
        let mut acc = 0.0;
        let mut pts = vec![(self.start(), 0.0)];
        for (_, b, r) in self.segments() {
            acc += r[k] * (b - pts.last().unwrap().0);
            pts.push((b, acc));
        }
        PiecewiseCurve::from_points(pts)
    }
}
