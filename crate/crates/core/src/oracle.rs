//! Discrete-time point-queue simulation of the highway and curb bottlenecks.
//!
//! An independent check on the closed forms: stocks are advanced by forward
//! Euler on a grid of step at most `dt` that also contains every profile
//! breakpoint. The highway serves `min(queue + inflow, s_H·h)` per step and
//! passes vehicles on in FIFO order, so the mode mix of its outflow is read
//! off the home cumulative curves. Each curb keeps a FIFO list of cohorts;
//! a cohort is served at the discounted rate fixed when it arrived, and the
//! discount applies only if both modes arrive in that step while the other
//! mode's curb queue is nonempty.

use std::collections::VecDeque;

use thiserror::Error;

use crate::curve::{DepartureProfile, PiecewiseCurve};
use crate::params::{Mode, ModelParams, Spillover};

/// Default time step, hours.
pub const DEFAULT_DT: f64 = 1e-3;

/// Forward Euler puts the last exit a few steps late; exits this many steps
/// past the preferred arrival count as on time when late arrival is barred.
pub const LATE_SLACK_STEPS: f64 = 10.0;

/// Queues below this many vehicles count as empty.
const EMPTY_QUEUE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("time step {0} must be finite and positive")]
    InvalidStep(f64),
    #[error("time step {dt} h moves {flow:.1} veh per step, more than the {demand} commuters")]
    StepTooLarge { dt: f64, flow: f64, demand: f64 },
    #[error("departure time {0} lies outside the simulated horizon")]
    OutsideHorizon(f64),
}

/// Grid series of a simulation. Cumulative counts are in vehicles; index 0
/// is RV and index 1 is PV.
#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub times: Vec<f64>,
    pub q_h: Vec<f64>,
    pub q_c: [Vec<f64>; 2],
    /// Home departures.
    pub home: [Vec<f64>; 2],
    /// Highway departures.
    pub d_h: Vec<f64>,
    /// Curb arrivals.
    pub a_c: [Vec<f64>; 2],
    /// Curb departures.
    pub d_c: [Vec<f64>; 2],
    /// Largest grid step, the resolution of simulated times.
    pub dt: f64,
    params: ModelParams,
}

struct Curb {
    cohorts: VecDeque<(f64, f64)>,
    queue: f64,
}

impl Curb {
    fn new() -> Self {
        Curb { cohorts: VecDeque::new(), queue: 0.0 }
    }

    fn arrive(&mut self, veh: f64, rate: f64) {
        if veh > 0.0 {
            self.cohorts.push_back((veh, rate));
            self.queue += veh;
        }
    }

    /// Serves for `h` hours; returns vehicles served.
    fn serve(&mut self, h: f64) -> f64 {
        let mut budget = h;
        let mut served = 0.0;
        while budget > 0.0 {
            let Some(head) = self.cohorts.front_mut() else { break };
            let need = head.0 / head.1;
            if need <= budget {
                budget -= need;
                served += head.0;
                self.cohorts.pop_front();
            } else {
                let part = budget * head.1;
                head.0 -= part;
                served += part;
                budget = 0.0;
            }
        }
        self.queue = (self.queue - served).max(0.0);
        if self.cohorts.is_empty() {
            self.queue = 0.0;
        }
        served
    }
}

fn grid(profile: &DepartureProfile, dt: f64) -> Vec<f64> {
    let mut times = vec![profile.start()];
    for w in profile.breaks().windows(2) {
        let n = ((w[1] - w[0]) / dt).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / n as f64;
        times.extend((1..=n).map(|i| if i == n { w[1] } else { w[0] + h * i as f64 }));
    }
    times
}

/// Simulate `profile` with step at most `dt` until every queue has cleared.
pub fn simulate(
    profile: &DepartureProfile,
    p: &ModelParams,
    spill: Spillover,
    dt: f64,
) -> Result<SimulationResult, OracleError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(OracleError::InvalidStep(dt));
    }
    let demand = profile.total(Mode::Rv) + profile.total(Mode::Pv);
    let peak = profile.segments().map(|(_, _, r)| r[0] + r[1]).fold(0.0, f64::max);
    if demand > 0.0 && peak * dt > demand {
        return Err(OracleError::StepTooLarge { dt, flow: peak * dt, demand });
    }
    let (dr, dp) = spill.intensities(p);
    let discount = [dp, dr]; // intensity the other mode imposes on mode m
    let s_h = p.s_highway();
    let s_c = [p.s_curb_rv(), p.s_curb_pv()];
    let home_curve = [profile.cumulative_curve(Mode::Rv), profile.cumulative_curve(Mode::Pv)];
    let total_curve = PiecewiseCurve::from_points(
        crate::curve::merge_times(&[&home_curve[0], &home_curve[1]])
            .into_iter()
            .map(|t| (t, home_curve[0].eval(t) + home_curve[1].eval(t))),
    );

    let mut times = grid(profile, dt);
    // The preferred arrival is a grid point so on-time exits land on it.
    let mut tail = *times.last().unwrap();
    while tail < 0.0 {
        let next = (tail + dt).min(0.0);
        times.push(next);
        tail = next;
    }
    let clear_bound = profile.end() + 2.0 * demand / s_c[0].min(s_c[1]).min(s_h) + 1.0;
    let mut res = SimulationResult {
        times: Vec::with_capacity(times.len() * 2),
        q_h: Vec::new(),
        q_c: [Vec::new(), Vec::new()],
        home: [Vec::new(), Vec::new()],
        d_h: Vec::new(),
        a_c: [Vec::new(), Vec::new()],
        d_c: [Vec::new(), Vec::new()],
        dt,
        params: p.clone(),
    };
    let mut q_h = 0.0;
    let mut d_h = 0.0;
    let mut a_c = [0.0; 2];
    let mut d_c = [0.0; 2];
    let mut curbs = [Curb::new(), Curb::new()];
    let record = |res: &mut SimulationResult,
                  t: f64,
                  q_h: f64,
                  d_h: f64,
                  a_c: [f64; 2],
                  d_c: [f64; 2],
                  q: [f64; 2]| {
        res.times.push(t);
        res.q_h.push(q_h);
        res.d_h.push(d_h);
        for m in 0..2 {
            res.q_c[m].push(q[m]);
            res.home[m].push(home_curve[m].eval(t));
            res.a_c[m].push(a_c[m]);
            res.d_c[m].push(d_c[m]);
        }
    };
    record(&mut res, times[0], 0.0, 0.0, a_c, d_c, [0.0; 2]);

    let mut k = 0;
    loop {
        if k + 1 >= times.len() {
            let busy = q_h > EMPTY_QUEUE || curbs.iter().any(|c| c.queue > EMPTY_QUEUE);
            let t = times[k];
            if !busy || t > clear_bound {
                break;
            }
            times.push(t + dt);
        }
        let (t0, t1) = (times[k], times[k + 1]);
        let h = t1 - t0;
        let inflow = total_curve.eval(t1) - total_curve.eval(t0);
        let out = (q_h + inflow).min(s_h * h);
        q_h = (q_h + inflow - out).max(0.0);
        d_h += out;
        // FIFO: the cohort leaving the highway is the one whose cumulative
        // home departures equal the cumulative highway outflow.
        let head = total_curve.inverse(d_h - 1e-12).unwrap_or(t1).min(t1);
        let new_a = [home_curve[0].eval(head), home_curve[1].eval(head)];
        let arrivals = [(new_a[0] - a_c[0]).max(0.0), (new_a[1] - a_c[1]).max(0.0)];
        let queued_before = [curbs[0].queue > EMPTY_QUEUE, curbs[1].queue > EMPTY_QUEUE];
        for m in 0..2 {
            let o = 1 - m;
            let coupled = arrivals[m] > 0.0 && arrivals[o] > 0.0 && queued_before[o];
            let rate = if coupled {
                s_c[m] * arrivals[m] / (arrivals[m] + discount[m] * arrivals[o])
            } else {
                s_c[m]
            };
            curbs[m].arrive(arrivals[m], rate);
            a_c[m] += arrivals[m];
            d_c[m] += curbs[m].serve(h);
        }
        k += 1;
        record(&mut res, t1, q_h, d_h, a_c, d_c, [curbs[0].queue, curbs[1].queue]);
    }
    Ok(res)
}

/// Earliest grid-interpolated time at which `series` reaches `level`.
fn crossing(times: &[f64], series: &[f64], level: f64) -> Option<f64> {
    let i = series.partition_point(|&v| v < level);
    if i == series.len() {
        return None;
    }
    if i == 0 {
        return Some(times[0]);
    }
    let (v0, v1) = (series[i - 1], series[i]);
    let frac = if v1 > v0 { (level - v0) / (v1 - v0) } else { 1.0 };
    Some(times[i - 1] + frac * (times[i] - times[i - 1]))
}

impl SimulationResult {
    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("grid is never empty")
    }

    pub fn queue(&self, bottleneck: usize) -> &[f64] {
        match bottleneck {
            0 => &self.q_h,
            1 => &self.q_c[0],
            _ => &self.q_c[1],
        }
    }

    /// Largest queue at the highway, RV curb and PV curb.
    pub fn max_queues(&self) -> [f64; 3] {
        let mx = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        [mx(&self.q_h), mx(&self.q_c[0]), mx(&self.q_c[1])]
    }

    /// Total vehicles that cleared both bottlenecks.
    pub fn throughput(&self) -> f64 {
        self.d_c[0].last().unwrap() + self.d_c[1].last().unwrap()
    }

    /// Exit time from the curb for the `mode` commuter leaving home at `u`.
    pub fn exit_time(&self, mode: Mode, u: f64) -> Result<f64, OracleError> {
        if !(u >= self.start() - 1e-12 && u <= self.end() + 1e-12) {
            return Err(OracleError::OutsideHorizon(u));
        }
        let m = mode as usize;
        // The first commuter of a mode is the first sliver of its outflow.
        let level = crossing_value(&self.times, &self.home[m], u).max(2.0 * EMPTY_QUEUE) - EMPTY_QUEUE;
        crossing(&self.times, &self.d_c[m], level).ok_or(OracleError::OutsideHorizon(u))
    }

    /// Queue-length rows `(time_h, q_H, q_CR, q_CP)` with clock times.
    pub fn rows(&self) -> Vec<[f64; 4]> {
        let off = self.params.preferred_arrival();
        (0..self.times.len())
            .map(|i| [self.times[i] + off, self.q_h[i], self.q_c[0][i], self.q_c[1][i]])
            .collect()
    }

    pub const CSV_HEADER: [&'static str; 4] = ["time_h", "q_H", "q_CR", "q_CP"];
}

/// Linear interpolation of `series` at `t`.
fn crossing_value(times: &[f64], series: &[f64], t: f64) -> f64 {
    let i = times.partition_point(|&x| x <= t);
    if i == 0 {
        return series[0];
    }
    if i == times.len() {
        return series[i - 1];
    }
    let (t0, t1) = (times[i - 1], times[i]);
    series[i - 1] + (series[i] - series[i - 1]) * (t - t0) / (t1 - t0)
}

/// Generalized cost of the `mode` commuter leaving home at `u`, from the
/// simulated waits.
pub fn experienced_cost(result: &SimulationResult, mode: Mode, u: f64) -> Result<f64, OracleError> {
    let mut exit = result.exit_time(mode, u)?.max(u);
    if result.params.gamma().is_none() && exit > 0.0 && exit <= LATE_SLACK_STEPS * result.dt {
        exit = 0.0;
    }
    Ok(result.params.trip_cost(mode, u, exit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::build_parameters;
    use crate::params::fixtures::{hk, late_example_raw};
    use crate::{solve, solve_l7};

    fn worst_cost_gap(r: &SimulationResult, windows: [(f64, f64); 2], cost: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for (m, (a, b)) in Mode::BOTH.into_iter().zip(windows) {
            for i in 0..=50 {
                let u = a + (b - a) * i as f64 / 50.0;
                worst = worst.max((experienced_cost(r, m, u).unwrap() - cost).abs() / cost);
            }
        }
        worst
    }

    fn profile(segs: &[(f64, f64, f64, f64)]) -> DepartureProfile {
        DepartureProfile::from_segments(segs.iter().copied()).unwrap()
    }

    #[test]
    fn under_capacity_never_queues() {
        let p = hk();
        let r = simulate(&profile(&[(-2.0, 0.0, 1000.0, 500.0)]), &p, Spillover::Bi, 1e-3).unwrap();
        assert!(r.max_queues().iter().all(|&q| q < 1e-9));
        assert!((r.throughput() - 3000.0).abs() < 1e-6);
    }

    #[test]
    fn fluid_triangle_at_the_rv_curb() {
        // RVs at 2·s_R for 1 h: curb queue peaks at s_R·1 h and clears at 2 h.
        let p = hk();
        let r = simulate(&profile(&[(-3.0, -2.0, 3600.0, 0.0)]), &p, Spillover::Bi, 1e-3).unwrap();
        let peak = r.max_queues()[1];
        assert!((peak - 1800.0).abs() < 1e-6);
        let i = r.q_c[0].iter().position(|&q| q == peak).unwrap();
        assert!((r.times[i] + 2.0).abs() < 1e-9);
        let clear = r.times[r.q_c[0].iter().rposition(|&q| q > 1e-6).unwrap()];
        assert!((clear + 1.0).abs() < 2e-3);
    }

    #[test]
    fn first_commuter_has_no_wait() {
        let p = hk();
        let r = simulate(&profile(&[(-2.0, -1.0, 3600.0, 0.0)]), &p, Spillover::Bi, 1e-3).unwrap();
        let c = experienced_cost(&r, Mode::Rv, -2.0).unwrap();
        assert!((c - p.trip_cost(Mode::Rv, -2.0, -2.0)).abs() < 1e-6);
        assert!(experienced_cost(&r, Mode::Rv, 50.0).is_err());
    }

    #[test]
    fn step_guards() {
        let p = hk();
        let prof = profile(&[(-1.0, 0.0, 10.0, 0.0)]);
        assert!(matches!(simulate(&prof, &p, Spillover::Bi, 0.0), Err(OracleError::InvalidStep(_))));
        assert!(matches!(simulate(&prof, &p, Spillover::Bi, 2.0), Err(OracleError::StepTooLarge { .. })));
    }

    #[test]
    fn hong_kong_equilibrium_has_equal_simulated_costs() {
        let p = hk();
        let sol = solve(&p, Spillover::Bi).unwrap();
        let r = simulate(&sol.profile, &p, Spillover::Bi, 1e-3).unwrap();
        let windows = [sol.window(Mode::Rv).unwrap(), sol.window(Mode::Pv).unwrap()];
        assert!(worst_cost_gap(&r, windows, sol.cost()) < 2e-3);
        // RVs alone fit the highway; its queue forms once PVs join and has
        // cleared by the time the last commuter departs.
        let at = |t: f64| r.q_h[r.times.partition_point(|&x| x < t)];
        assert!(at(sol.t0_pv.unwrap() - 0.01) < 1e-9);
        assert!(at(sol.t0_pv.unwrap() + 0.05) > 1.0);
        assert!(at(0.0) < 1.0);
    }

    #[test]
    fn late_equilibrium_has_equal_simulated_costs() {
        let mut raw = late_example_raw();
        (raw.s_curb_rv, raw.s_curb_pv, raw.delta_rv, raw.delta_pv) = (3400.0, 3000.0, 0.05, 0.05);
        let p = build_parameters(&raw).unwrap();
        let sol = solve_l7(&p, Spillover::Bi).unwrap();
        let r = simulate(&sol.profile, &p, Spillover::Bi, 1e-3).unwrap();
        let windows = [sol.window(Mode::Rv), sol.window(Mode::Pv)];
        assert!(worst_cost_gap(&r, windows, sol.cost) < 2e-3);
    }

    #[test]
    fn finer_steps_converge() {
        let p = hk();
        let sol = solve(&p, Spillover::Bi).unwrap();
        let windows = [sol.window(Mode::Rv).unwrap(), sol.window(Mode::Pv).unwrap()];
        let coarse = simulate(&sol.profile, &p, Spillover::Bi, 4e-3).unwrap();
        let fine = simulate(&sol.profile, &p, Spillover::Bi, 5e-4).unwrap();
        assert!(worst_cost_gap(&fine, windows, sol.cost()) < worst_cost_gap(&coarse, windows, sol.cost()));
    }
}
