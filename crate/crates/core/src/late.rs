//! Closed-form user equilibrium with late arrival allowed.
//!
//! Both modes are used and the on-time PV departs before the on-time RV,
//! which departs before the last PV. The co-departure stage then splits at
//! the on-time departures into three segments. Each segment uses the
//! early-arrival rate formulas with `β` replaced by `−γ` for every mode that
//! arrives late. After the last PV only RVs depart, at
//! `(α+π)s_R/(α+π+γ)`.
//!
//! Two queue patterns share this structure. In L7 the highway first queues
//! when the first PV departs. In L11 the RVs alone already overflow the
//! highway. With `x = −t0^R` and `y = t1^P` the closing conditions are the
//! population total and "the last PV meets no curb queue". Both are affine
//! in `(x, y)`.

use serde::Serialize;
use thiserror::Error;

use crate::classify::{initial_phase_regime, le, Regime};
use crate::curve::DepartureProfile;
use crate::params::{Mode, ModelParams, Spillover, ValidationError};
use crate::propagate::{propagate, Curves, Propagation};
use crate::solver::{co_rates, Rates, EQUAL_COST_TOL};

/// Order of the on-time RV departure relative to the PV window. Ties go to
/// the case whose upper bound they meet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Ordering {
    /// `t̃^R ≤ t0^P`: RVs in the co-departure stage all arrive late.
    RvOnTimeBeforePvStart,
    /// `t0^P < t̃^R ≤ t̃^P`.
    RvOnTimeBeforePvOnTime,
    /// `t̃^P < t̃^R ≤ t1^P`.
    PvOnTimeFirst,
    /// `t̃^R > t1^P`: cannot occur at an equilibrium.
    Impossible,
}

impl Ordering {
    /// Column index in the late scenario table (0 is "RV only").
    fn column(self) -> Option<usize> {
        match self {
            Ordering::RvOnTimeBeforePvStart => Some(1),
            Ordering::RvOnTimeBeforePvOnTime => Some(2),
            Ordering::PvOnTimeFirst => Some(3),
            Ordering::Impossible => None,
        }
    }
}

/// Classify candidate critical times `(t0^P, t̃^P, t̃^R, t1^P)`.
pub fn classify_ordering(t0_pv: f64, t_tilde_pv: f64, t_tilde_rv: f64, t1_pv: f64) -> Ordering {
    if t_tilde_rv <= t0_pv {
        Ordering::RvOnTimeBeforePvStart
    } else if t_tilde_rv <= t_tilde_pv {
        Ordering::RvOnTimeBeforePvOnTime
    } else if t_tilde_rv <= t1_pv {
        Ordering::PvOnTimeFirst
    } else {
        Ordering::Impossible
    }
}

/// Queue pattern at the start of the peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum QueuePattern {
    CurbOnly,
    CurbThenHighway,
    CurbAndHighwayFromStart,
}

/// Name of the late-arrival scenario with this queue pattern and ordering;
/// column 0 means only RVs are used.
pub fn late_scenario_label(pattern: QueuePattern, column: usize) -> &'static str {
    const TABLE: [[&str; 4]; 3] =
        [["L1", "L2", "L3", "L4"], ["-", "L5", "L6", "L7"], ["L8", "L9", "L10", "L11"]];
    let row = match pattern {
        QueuePattern::CurbOnly => 0,
        QueuePattern::CurbThenHighway => 1,
        QueuePattern::CurbAndHighwayFromStart => 2,
    };
    TABLE[row][column.min(3)]
}

/// The two solved late-arrival scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LateScenario {
    /// Curb queue first; the highway queues from the first PV on.
    L7,
    /// Curb and highway queue from the first RV on.
    L11,
}

impl LateScenario {
    pub fn label(self) -> &'static str {
        match self {
            LateScenario::L7 => "L7",
            LateScenario::L11 => "L11",
        }
    }
}

/// One constant-rate stage of the home departure schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stage {
    pub start: f64,
    pub end: f64,
    pub rate_rv: f64,
    pub rate_pv: f64,
}

/// A late-arrival user equilibrium. Times are hours relative to the
/// preferred arrival.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LateSolution {
    pub scenario: LateScenario,
    pub spillover: Spillover,
    pub t0_rv: f64,
    pub t1_rv: f64,
    pub t0_pv: f64,
    pub t1_pv: f64,
    pub t_tilde_rv: f64,
    pub t_tilde_pv: f64,
    /// When the highway queue clears; lies in `(t1^P, t1^R)`.
    pub t_e: f64,
    /// When the highway queue forms.
    pub queue_start: f64,
    pub n_rv: f64,
    pub n_pv: f64,
    pub cost: f64,
    pub ordering: Ordering,
    /// Five stages: RV only, three co-departure segments, RV only.
    pub stages: Vec<Stage>,
    pub profile: DepartureProfile,
}

impl LateSolution {
    pub fn window(&self, mode: Mode) -> (f64, f64) {
        match mode {
            Mode::Rv => (self.t0_rv, self.t1_rv),
            Mode::Pv => (self.t0_pv, self.t1_pv),
        }
    }

    pub fn social_cost(&self) -> f64 {
        (self.n_rv + self.n_pv) * self.cost
    }

    pub fn propagate(&self, p: &ModelParams) -> Propagation {
        propagate(&self.profile, p, self.spillover)
    }

    pub fn build_curves(&self, p: &ModelParams) -> Curves {
        self.propagate(p).curves()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LateError {
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error("degenerate parameters: {0}")]
    Degenerate(String),
    #[error("outside the solved late-arrival regime: {condition} (pattern suggests {hint})")]
    OutsideRegime { condition: String, hint: &'static str },
    #[error("outside L7: {condition} (pattern suggests {hint})")]
    OutsideL7 { condition: String, hint: &'static str },
    #[error("not an equilibrium: {mode:?} curb queue drains early, cost off by {gap:.3e} relative at t = {at:.4} h")]
    NotEquilibrium { mode: Mode, at: f64, gap: f64 },
}

/// Affine form `c + a·x + b·y`.
#[derive(Debug, Clone, Copy)]
struct Aff(f64, f64, f64);

impl Aff {
    fn konst(c: f64) -> Self {
        Aff(c, 0.0, 0.0)
    }
    fn add(self, o: Aff) -> Self {
        Aff(self.0 + o.0, self.1 + o.1, self.2 + o.2)
    }
    fn sub(self, o: Aff) -> Self {
        self.add(o.scale(-1.0))
    }
    fn scale(self, k: f64) -> Self {
        Aff(self.0 * k, self.1 * k, self.2 * k)
    }
    fn at(self, x: f64, y: f64) -> f64 {
        self.0 + self.1 * x + self.2 * y
    }
}

/// Rates of the five stages.
#[derive(Debug, Clone, Copy)]
struct LateRates {
    rv_early: f64,
    rv_late: f64,
    both_early: Rates,
    pv_late: Rates,
    both_late: Rates,
}

fn late_rates(p: &ModelParams, spill: Spillover, gamma: f64) -> LateRates {
    let (a, b, pi) = (p.alpha(), p.beta(), p.pi());
    let (dr, dp) = spill.intensities(p);
    let rv = |v: f64| (a + pi) * p.s_curb_rv() / (a + pi - v);
    let pv = |v: f64| a * p.s_curb_pv() / (a - v);
    LateRates {
        rv_early: rv(b),
        rv_late: rv(-gamma),
        both_early: co_rates(rv(b), pv(b), dr, dp),
        pv_late: co_rates(rv(b), pv(-gamma), dr, dp),
        both_late: co_rates(rv(-gamma), pv(-gamma), dr, dp),
    }
}

/// Late-arrival equilibrium with the PV-on-time-first ordering, either
/// queue pattern.
pub fn solve_late(p: &ModelParams, spill: Spillover) -> Result<LateSolution, LateError> {
    solve_inner(p, spill, false)
}

/// As [`solve_late`], but only accepts the L7 queue pattern.
pub fn solve_l7(p: &ModelParams, spill: Spillover) -> Result<LateSolution, LateError> {
    solve_inner(p, spill, true)
}

fn solve_inner(p: &ModelParams, spill: Spillover, strict: bool) -> Result<LateSolution, LateError> {
    let gamma = p.require_gamma()?;
    let (a, b, pi) = (p.alpha(), p.beta(), p.pi());
    let (sh, n, du) = (p.s_highway(), p.demand(), p.cost_gap());
    let r = late_rates(p, spill, gamma);
    for (name, v) in [
        ("RV co-departure rate", r.both_early.rv_co.min(r.pv_late.rv_co).min(r.both_late.rv_co)),
        ("PV co-departure rate", r.both_early.pv_co.min(r.pv_late.pv_co).min(r.both_late.pv_co)),
    ] {
        if !(v > 0.0) {
            return Err(LateError::Degenerate(format!("{name} {v} is not positive")));
        }
    }
    let from_start = initial_phase_regime(p) == Regime::CurbAndHighway;
    let pattern =
        if from_start { QueuePattern::CurbAndHighwayFromStart } else { QueuePattern::CurbThenHighway };
    let outside = |condition: String, column: usize| {
        let hint = late_scenario_label(pattern, column);
        if strict {
            LateError::OutsideL7 { condition, hint }
        } else {
            LateError::OutsideRegime { condition, hint }
        }
    };
    if strict && from_start {
        return Err(outside(
            format!("RVs alone overflow the highway from the start ({:.1} > s_H = {sh})", r.rv_early),
            3,
        ));
    }

    // Lag of the first PV behind the first RV and its highway wait.
    let (lag, w0) = if from_start {
        let d = du / (a - (a - b) * r.rv_early / sh);
        (d, (r.rv_early / sh - 1.0) * d)
    } else {
        (du / b, 0.0)
    };
    if !(lag > 0.0) {
        return Err(LateError::Degenerate(format!("first-PV lag {lag} is not positive")));
    }
    let x = Aff(0.0, 1.0, 0.0);
    let y = Aff(0.0, 0.0, 1.0);
    let t0r = x.scale(-1.0);
    let t0p = t0r.add(Aff::konst(lag));
    // The on-time PV: its exit grows at α/(α−β) from t0^P + w0 up to 0.
    let ttp = t0p.add(t0p.add(Aff::konst(w0)).scale(-(a - b) / a));
    let ttr = x.scale(-b / (a + pi));
    let t1r = x.scale(b / gamma);
    let co = |rates: &Rates| rates.co_total();
    let dep_to_y = ttp
        .sub(t0p)
        .scale(co(&r.both_early))
        .add(ttr.sub(ttp).scale(co(&r.pv_late)))
        .add(y.sub(ttr).scale(co(&r.both_late)));
    let rv_lead = Aff::konst(lag * r.rv_early);
    let (queue_start, queue_y) = if from_start {
        (t0r, rv_lead.add(dep_to_y).sub(y.sub(t0r).scale(sh)))
    } else {
        (t0p, dep_to_y.sub(y.sub(t0p).scale(sh)))
    };
    // Last PV meets only the highway queue: (α+γ)w_H(y) + γy = βx − Δu.
    let eq_a = queue_y.scale((a + gamma) / sh).add(y.scale(gamma)).sub(x.scale(b)).add(Aff::konst(du));
    let eq_b = rv_lead.add(dep_to_y).add(t1r.sub(y).scale(r.rv_late)).sub(Aff::konst(n));
    let det = eq_a.1 * eq_b.2 - eq_a.2 * eq_b.1;
    if det.abs() < 1e-12 * (eq_a.1.abs() + eq_a.2.abs()) * (eq_b.1.abs() + eq_b.2.abs()) {
        return Err(LateError::Degenerate("closing conditions are singular".into()));
    }
    let xv = (-eq_a.0 * eq_b.2 + eq_a.2 * eq_b.0) / det;
    let yv = (-eq_a.1 * eq_b.0 + eq_a.0 * eq_b.1) / det;
    let ev = |f: Aff| f.at(xv, yv);
    let (t0r, t0p, ttp, ttr, t1r, qs) = (ev(t0r), ev(t0p), ev(ttp), ev(ttr), ev(t1r), ev(queue_start));
    let t1p = yv;

    let ordering = classify_ordering(t0p, ttp, ttr, t1p);
    if ordering != Ordering::PvOnTimeFirst && !(le(ttp, ttr) && le(ttr, t1p)) {
        let column = ordering.column().unwrap_or(3);
        return Err(outside(format!("departure ordering is {ordering:?}"), column));
    }
    let chain = [("t0^R", t0r), ("t0^P", t0p), ("t̃^P", ttp), ("t̃^R", ttr), ("t1^P", t1p), ("t1^R", t1r)];
    for pair in chain.windows(2) {
        let ((na, va), (nb, vb)) = (pair[0], pair[1]);
        if !le(va, vb) {
            return Err(outside(format!("{na} = {va:.5} exceeds {nb} = {vb:.5}"), 3));
        }
    }
    // The highway queue is piecewise linear on (queue start, t1^P]; positive
    // at each breakpoint means positive throughout.
    let q_at = |t: f64| {
        let dep = departures_until(&r, [t0r, t0p, ttp, ttr], t);
        dep - (if from_start { 0.0 } else { lag * r.rv_early }) - sh * (t - qs)
    };
    let first_growth = if from_start { r.rv_early } else { co(&r.both_early) } - sh;
    if !(first_growth > 0.0) {
        return Err(outside("the highway queue does not form with the first PV".into(), 3));
    }
    for t in [t0p, ttp, ttr, t1p] {
        if t > qs && !(q_at(t) > 0.0) {
            return Err(outside(format!("the highway queue empties before t = {t:.5}"), 3));
        }
    }
    let q_y = q_at(t1p);
    let drain = sh - r.rv_late;
    let t_e = if drain > 0.0 { t1p + q_y / drain } else { f64::INFINITY };
    if !(t_e < t1r) {
        return Err(outside(format!("the highway queue outlasts the last RV (t_e = {t_e:.5})"), 3));
    }

    let stages = vec![
        Stage { start: t0r, end: t0p, rate_rv: r.rv_early, rate_pv: 0.0 },
        Stage { start: t0p, end: ttp, rate_rv: r.both_early.rv_co, rate_pv: r.both_early.pv_co },
        Stage { start: ttp, end: ttr, rate_rv: r.pv_late.rv_co, rate_pv: r.pv_late.pv_co },
        Stage { start: ttr, end: t1p, rate_rv: r.both_late.rv_co, rate_pv: r.both_late.pv_co },
        Stage { start: t1p, end: t1r, rate_rv: r.rv_late, rate_pv: 0.0 },
    ];
    let profile = DepartureProfile::from_segments(
        stages.iter().map(|s| (s.start, s.end.max(s.start), s.rate_rv, s.rate_pv)),
    )
    .expect("stages are ordered");
    let n_pv = profile.total(Mode::Pv);
    let n_rv = n - n_pv;
    if !(n_pv > 0.0 && n_rv > 0.0) {
        return Err(outside(format!("mode split N^R = {n_rv:.3} leaves a mode unused"), 0));
    }
    let sol = LateSolution {
        scenario: if from_start { LateScenario::L11 } else { LateScenario::L7 },
        spillover: spill,
        t0_rv: t0r,
        t1_rv: t1r,
        t0_pv: t0p,
        t1_pv: t1p,
        t_tilde_rv: ttr,
        t_tilde_pv: ttp,
        t_e,
        queue_start: qs,
        n_rv,
        n_pv,
        cost: b * xv + p.rv_fixed_cost(),
        ordering,
        stages,
        profile,
    };
    check_equal_cost(&sol, p)?;
    Ok(sol)
}

/// Departures from `t0^R` up to `t ≤ t1^P`, given `[t0^R, t0^P, t̃^P, t̃^R]`.
fn departures_until(r: &LateRates, [t0r, t0p, ttp, ttr]: [f64; 4], t: f64) -> f64 {
    let seg = |a: f64, b: f64| (t.min(b) - a).max(0.0);
    seg(t0r, t0p) * r.rv_early
        + seg(t0p, ttp) * r.both_early.co_total()
        + seg(ttp, ttr) * r.pv_late.co_total()
        + seg(ttr, f64::INFINITY) * r.both_late.co_total()
}

/// Costs are piecewise linear in departure time, so equality at every
/// propagation knot inside a window is equality throughout.
fn check_equal_cost(sol: &LateSolution, p: &ModelParams) -> Result<(), LateError> {
    let prop = sol.propagate(p);
    for mode in Mode::BOTH {
        let (a, b) = sol.window(mode);
        let knots = prop.knots().iter().copied().filter(|&u| u > a && u < b);
        for u in knots.chain([a, b]) {
            let gap = (prop.cost(p, mode, u) - sol.cost).abs() / sol.cost.abs().max(1e-12);
            if !(gap <= EQUAL_COST_TOL) {
                return Err(LateError::NotEquilibrium { mode, at: u, gap });
            }
        }
    }
    Ok(())
}
