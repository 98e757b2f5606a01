//! Exact fluid propagation of a departure profile through the highway and
//! the two curbside bottlenecks.
//!
//! Everything is parametrised by home-departure time `u`. Between knots the
//! departure rates are constant and every exit time is linear in `u`, so the
//! cumulative curves are exact piecewise-linear functions.
//!
//! Curbside service is cohort-indexed: a cohort reaching the curb while both
//! modes arrive, and while the other mode's curb queue is nonempty, is served
//! at the discounted rate `s·a/(a + δ·a_other)`. Without a queue there is
//! nothing to spill over and the full rate applies.

use serde::Serialize;

use crate::curve::{merge_times, DepartureProfile, PiecewiseCurve, StepFunction};
use crate::params::{Mode, ModelParams, Spillover};

/// Slack below which a queue counts as empty, in hours of work.
const QUEUE_EPS: f64 = 1e-11;

/// Knot-wise record of a propagation.
#[derive(Debug, Clone, Serialize)]
pub struct Propagation {
    /// Home-departure times.
    u: Vec<f64>,
    /// Highway exit (curb arrival) time of the commuter departing at `u`.
    tau: Vec<f64>,
    /// Curb exit time for a commuter of each mode departing at `u`.
    exit: [Vec<f64>; 2],
    /// Cumulative departures per mode up to `u`.
    cum: [Vec<f64>; 2],
    /// Whether each mode's service was discounted on the piece ending at the knot.
    discounted: [Vec<bool>; 2],
}

fn k(mode: Mode) -> usize {
    match mode {
        Mode::Rv => 0,
        Mode::Pv => 1,
    }
}

/// Highway knots `(u, τ, segment index)`; the segment index applies to the
/// piece ending at the knot.
fn highway_knots(profile: &DepartureProfile, s_h: f64) -> Vec<(f64, f64, usize)> {
    let mut out = vec![(profile.start(), profile.start(), 0)];
    for (i, (a, b, r)) in profile.segments().enumerate() {
        let lambda = r[0] + r[1];
        let rho = lambda / s_h;
        let tau_a = out.last().unwrap().1;
        if tau_a > a + QUEUE_EPS && rho < 1.0 {
            let uc = a + (tau_a - a) / (1.0 - rho);
            if uc < b {
                out.push((uc, uc, i));
                out.push((b, b, i));
            } else {
                out.push((b, tau_a + rho * (b - a), i));
            }
        } else if tau_a > a + QUEUE_EPS || rho > 1.0 {
            out.push((b, tau_a.max(a) + rho * (b - a), i));
        } else {
            out.push((b, b, i));
        }
    }
    out
}

/// Propagates `profile` through the corridor.
pub fn propagate(profile: &DepartureProfile, p: &ModelParams, spill: Spillover) -> Propagation {
    let (dr, dp) = spill.intensities(p);
    let delta = [dp, dr]; // intensity of the *other* mode's queue on each mode
    let s = [p.s_curb_rv(), p.s_curb_pv()];
    let rates: Vec<[f64; 2]> = profile.segments().map(|s| s.2).collect();
    let hw = highway_knots(profile, p.s_highway());

    let start = profile.start();
    let mut prop = Propagation {
        u: vec![start],
        tau: vec![start],
        exit: [vec![start], vec![start]],
        cum: [vec![0.0], vec![0.0]],
        discounted: [vec![false], vec![false]],
    };
    let mut e = [start, start];
    let mut cum = [0.0, 0.0];

    for w in hw.windows(2) {
        let (ua, ta, _) = w[0];
        let (ub, tb, seg) = w[1];
        if ub <= ua {
            continue;
        }
        let a = rates[seg];
        let slope = (tb - ta) / (ub - ua);
        let tau_at = |u: f64| ta + slope * (u - ua);
        let mut cu = ua;
        while cu < ub {
            let ct = tau_at(cu);
            // Queue state at the piece start, then the service work rate per
            // unit departure time; two passes settle the mutual dependence.
            let mut busy = [e[0] > ct + QUEUE_EPS, e[1] > ct + QUEUE_EPS];
            let mut gate = [false; 2];
            let mut omega = [0.0; 2];
            for _ in 0..3 {
                for m in 0..2 {
                    gate[m] = a[m] > 0.0 && a[1 - m] > 0.0 && busy[1 - m];
                    omega[m] = if a[m] > 0.0 {
                        (a[m] + if gate[m] { delta[m] * a[1 - m] } else { 0.0 }) / s[m]
                    } else {
                        0.0
                    };
                }
                for m in 0..2 {
                    busy[m] = busy[m] || omega[m] > slope + 1e-12;
                }
            }
            // Next event: a busy queue empties within the piece.
            let mut next = ub;
            for m in 0..2 {
                if e[m] > ct + QUEUE_EPS && omega[m] < slope {
                    let uc = cu + (e[m] - ct) / (slope - omega[m]);
                    if uc < next && uc > cu {
                        next = uc;
                    }
                }
            }
            let tn = if next == ub { tb } else { tau_at(next) };
            for m in 0..2 {
                e[m] = (e[m] + omega[m] * (next - cu)).max(tn);
                cum[m] += a[m] * (next - cu);
                prop.exit[m].push(e[m]);
                prop.cum[m].push(cum[m]);
                prop.discounted[m].push(gate[m]);
            }
            prop.u.push(next);
            prop.tau.push(tn);
            cu = next;
        }
    }
    prop
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|&v| v <= x);
    if i == 0 {
        return ys[0];
    }
    if i >= xs.len() {
        return ys[ys.len() - 1];
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    if x1 <= x0 {
        return ys[i];
    }
    ys[i - 1] + (ys[i] - ys[i - 1]) * (x - x0) / (x1 - x0)
}

impl Propagation {
    pub fn start(&self) -> f64 {
        self.u[0]
    }

    pub fn end(&self) -> f64 {
        *self.u.last().unwrap()
    }

    pub fn knots(&self) -> &[f64] {
        &self.u
    }

    /// Highway exit time of a commuter departing at `u`.
    pub fn highway_exit(&self, u: f64) -> f64 {
        if u <= self.start() {
            u
        } else if u >= self.end() {
            u.max(*self.tau.last().unwrap())
        } else {
            interp(&self.u, &self.tau, u)
        }
    }

    /// Curb exit (work arrival) time of a `mode` commuter departing at `u`.
    pub fn exit_time(&self, mode: Mode, u: f64) -> f64 {
        let m = k(mode);
        if u <= self.start() {
            u
        } else if u >= self.end() {
            self.highway_exit(u).max(*self.exit[m].last().unwrap())
        } else {
            interp(&self.u, &self.exit[m], u)
        }
    }

    /// Generalized cost of a `mode` commuter departing at `u`.
    pub fn cost(&self, p: &ModelParams, mode: Mode, u: f64) -> f64 {
        p.trip_cost(mode, u, self.exit_time(mode, u))
    }

    /// Whether `mode` was served at a discounted rate just after `u`.
    pub fn discounted_after(&self, mode: Mode, u: f64) -> bool {
        let i = self.u.partition_point(|&v| v <= u);
        i < self.u.len() && self.discounted[k(mode)][i]
    }

    /// Cumulative and queue curves in model time.
    pub fn curves(&self) -> Curves {
        let n = self.u.len();
        let total: Vec<f64> = (0..n).map(|i| self.cum[0][i] + self.cum[1][i]).collect();
        let a_h = PiecewiseCurve::from_points((0..n).map(|i| (self.u[i], total[i])));
        let d_h = PiecewiseCurve::from_points((0..n).map(|i| (self.tau[i], total[i])));
        let a_c = |m: usize| PiecewiseCurve::from_points((0..n).map(|i| (self.tau[i], self.cum[m][i])));
        let d_c = |m: usize| PiecewiseCurve::from_points((0..n).map(|i| (self.exit[m][i], self.cum[m][i])));
        let tail = |t_end: f64, done: f64| (done > t_end).then_some((done, 0.0));
        let w_h = PiecewiseCurve::from_points(
            (0..n).map(|i| (self.u[i], self.tau[i] - self.u[i])).chain(tail(self.u[n - 1], self.tau[n - 1])),
        );
        let w_c = |m: usize| {
            PiecewiseCurve::from_points(
                (0..n)
                    .map(|i| (self.tau[i], self.exit[m][i] - self.tau[i]))
                    .chain(tail(self.tau[n - 1], self.exit[m][n - 1])),
            )
        };
        let (a_cr, a_cp, d_cr, d_cp) = (a_c(0), a_c(1), d_c(0), d_c(1));
        Curves {
            q_h: a_h.minus(&d_h),
            q_cr: a_cr.minus(&d_cr),
            q_cp: a_cp.minus(&d_cp),
            a_h,
            d_h,
            a_cr,
            d_cr,
            a_cp,
            d_cp,
            w_h,
            w_cr: w_c(0),
            w_cp: w_c(1),
        }
    }
}

/// Cumulative arrival/departure curves at both bottlenecks, queue lengths
/// (vehicles) and waits (hours), all against model time.
#[derive(Debug, Clone, Serialize)]
pub struct Curves {
    pub a_h: PiecewiseCurve,
    pub d_h: PiecewiseCurve,
    pub a_cr: PiecewiseCurve,
    pub d_cr: PiecewiseCurve,
    pub a_cp: PiecewiseCurve,
    pub d_cp: PiecewiseCurve,
    pub q_h: PiecewiseCurve,
    pub q_cr: PiecewiseCurve,
    pub q_cp: PiecewiseCurve,
    /// Highway wait for a commuter reaching the highway at `t`.
    pub w_h: PiecewiseCurve,
    /// Curb wait for an RV reaching the curb at `t`.
    pub w_cr: PiecewiseCurve,
    /// Curb wait for a PV reaching the curb at `t`.
    pub w_cp: PiecewiseCurve,
}

impl Curves {
    /// Curb arrival rate of `mode` as a step function of model time.
    pub fn curb_arrival_rate(&self, mode: Mode) -> StepFunction {
        let c = match mode {
            Mode::Rv => &self.a_cr,
            Mode::Pv => &self.a_cp,
        };
        StepFunction { breaks: c.points().iter().map(|p| p.0).collect(), values: c.slopes() }
    }

    /// Total queuing time at the highway, RV curb and PV curb (veh·h).
    pub fn total_queuing_time(&self) -> [f64; 3] {
        [self.q_h.integral_all(), self.q_cr.integral_all(), self.q_cp.integral_all()]
    }

    /// Highway queue onset and dissipation times, if it ever queues.
    pub fn highway_queue_window(&self, tol: f64) -> Option<(f64, f64)> {
        Some((self.q_h.first_above(tol)?, self.q_h.last_above(tol)?))
    }

    /// Rows `(time, A_H, D_H, A_CR, D_CR, A_CP, D_CP, w_H, w_CR, w_CP)` on the
    /// union of all breakpoints; `offset` shifts model time to clock time.
    pub fn rows(&self, offset: f64) -> Vec<[f64; 10]> {
        let all = [
            &self.a_h, &self.d_h, &self.a_cr, &self.d_cr, &self.a_cp, &self.d_cp, &self.w_h, &self.w_cr,
            &self.w_cp,
        ];
        merge_times(&all)
            .into_iter()
            .map(|t| {
                let mut row = [0.0; 10];
                row[0] = t + offset;
                for (j, c) in all.iter().enumerate() {
                    row[j + 1] = c.eval(t);
                }
                row
            })
            .collect()
    }

    pub const CSV_HEADER: [&'static str; 10] =
        ["time_h", "A_H", "D_H", "A_CR", "D_CR", "A_CP", "D_CP", "w_H", "w_CR", "w_CP"];
}
