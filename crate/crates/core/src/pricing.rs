//! Optimal time-varying congestion pricing and the resulting social optimum.
//!
//! Under the optimal fees no queue forms, so arrival time equals departure
//! time. Both fees start at a common `f0`, rise at `β` up to the preferred
//! arrival and, with late arrival, fall back at `γ`. Departure rates fill the
//! curbs (`s_R`, `s_P`) when they fit under the highway. Otherwise RVs keep
//! `s_R` and PVs take the remaining `s_H − s_R` during co-departure.

use serde::Serialize;
use thiserror::Error;

use crate::classify::le;
use crate::curve::{DepartureProfile, PiecewiseCurve};
use crate::params::{Mode, ModelParams, ValidationError};

/// Relative size of the curb and highway capacities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CapacityRegime {
    /// `s_R + s_P ≤ s_H`: both curbs run at capacity without a highway queue.
    CurbWithinHighway,
    /// `s_R + s_P > s_H`: co-departure is capped by the highway.
    CurbExceedsHighway,
}

pub fn capacity_regime(p: &ModelParams) -> CapacityRegime {
    if le(p.s_curb_rv() + p.s_curb_pv(), p.s_highway()) {
        CapacityRegime::CurbWithinHighway
    } else {
        CapacityRegime::CurbExceedsHighway
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PricingError {
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error("only RVs are used at the optimum; single-mode pricing is out of scope")]
    RvOnly,
    #[error("fee gap {delta_f} outside its admissible range [0, {upper}]")]
    FeeGapOutOfRange { delta_f: f64, upper: f64 },
}

/// Optimal fees and the social optimum they induce. Times are hours
/// relative to the preferred arrival.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PricingScheme {
    pub regime: CapacityRegime,
    pub late: bool,
    /// Fee of the first RV and the first PV.
    pub base_fee: f64,
    /// PV minus RV initial fee; zero at the optimum.
    pub delta_f: f64,
    /// PV co-departure rate over `s_P`, when the highway caps co-departure.
    pub theta: Option<f64>,
    pub so_t0_rv: f64,
    pub so_t0_pv: f64,
    pub so_t1_rv: Option<f64>,
    pub so_t1_pv: Option<f64>,
    pub so_n_rv: f64,
    pub so_n_pv: f64,
    /// Equal generalized cost including the fee.
    pub so_cost: f64,
    /// Fee by arrival time; constant at `base_fee` outside the charged window.
    pub fee_rv: PiecewiseCurve,
    pub fee_pv: PiecewiseCurve,
    /// Queue-free departure schedule.
    pub profile: DepartureProfile,
}

impl PricingScheme {
    pub fn fee(&self, mode: Mode) -> &PiecewiseCurve {
        match mode {
            Mode::Rv => &self.fee_rv,
            Mode::Pv => &self.fee_pv,
        }
    }

    /// Total fee revenue.
    pub fn revenue(&self) -> f64 {
        Mode::BOTH
            .iter()
            .map(|&m| {
                let fee = self.fee(m);
                self.profile.segments().map(|(a, b, r)| r[m as usize] * fee.integral(a, b)).sum::<f64>()
            })
            .sum()
    }

    /// Highest fee charged to `mode`.
    pub fn fee_cap(&self, mode: Mode) -> f64 {
        self.fee(mode).max_value()
    }
}

/// Fee paid by a `mode` commuter arriving at `t`.
pub fn fee_at(scheme: &PricingScheme, mode: Mode, t: f64) -> f64 {
    scheme.fee(mode).eval(t)
}

/// Social cost of a queue-free schedule, excluding fees: every commuter
/// pays only schedule delay and the fixed cost.
pub fn zero_queue_social_cost(profile: &DepartureProfile, p: &ModelParams) -> f64 {
    let b = p.beta();
    let g = p.gamma().unwrap_or(f64::INFINITY);
    let mut sc = 0.0;
    for (s, e, r) in profile.segments() {
        for m in Mode::BOTH {
            let rate = r[m as usize];
            if rate == 0.0 {
                continue;
            }
            // Early part: β∫(−t)dt over [s, min(e, 0)].
            let (es, ee) = (s, e.min(0.0));
            if ee > es {
                sc += rate * (b * (es * es - ee * ee) / 2.0 + p.fixed_cost(m) * (ee - es));
            }
            let (ls, le_) = (s.max(0.0), e);
            if le_ > ls {
                sc += rate * (g * (le_ * le_ - ls * ls) / 2.0 + p.fixed_cost(m) * (le_ - ls));
            }
        }
    }
    sc
}

/// Social cost of the optimum described by `scheme`, fees excluded.
pub fn social_optimum_cost(scheme: &PricingScheme, p: &ModelParams) -> f64 {
    zero_queue_social_cost(&scheme.profile, p)
}

/// Largest admissible initial-fee gap when the highway caps co-departure.
pub fn fee_gap_upper_bound(p: &ModelParams) -> Option<f64> {
    let (sh, sr, sp) = (p.s_highway(), p.s_curb_rv(), p.s_curb_pv());
    match capacity_regime(p) {
        CapacityRegime::CurbWithinHighway => None,
        CapacityRegime::CurbExceedsHighway => Some(p.cost_gap() * (sr + sp - sh) / (sh - sr)),
    }
}

/// Queue-free schedule when the PV initial fee exceeds the RV one by
/// `delta_f`. `x_r`, `x_p` are the lead times of the first RV and PV.
struct Schedule {
    x_r: f64,
    x_p: f64,
    rv_co: f64,
    pv_co: f64,
    theta: Option<f64>,
}

fn early_schedule(p: &ModelParams, delta_f: f64) -> Result<Schedule, PricingError> {
    let (b, n, du) = (p.beta(), p.demand(), p.cost_gap());
    let (sh, sr, sp) = (p.s_highway(), p.s_curb_rv(), p.s_curb_pv());
    let gap = (du + delta_f) / b;
    let s = match capacity_regime(p) {
        CapacityRegime::CurbWithinHighway => {
            // N = s_R x_r + s_P (x_r − gap).
            let x_r = (n + sp * gap) / (sr + sp);
            Schedule { x_r, x_p: x_r - gap, rv_co: sr, pv_co: sp, theta: None }
        }
        CapacityRegime::CurbExceedsHighway => {
            let upper = fee_gap_upper_bound(p).unwrap_or(0.0);
            if delta_f < -1e-12 || delta_f > upper * (1.0 + 1e-12) + 1e-12 {
                return Err(PricingError::FeeGapOutOfRange { delta_f, upper });
            }
            let pv_co = if du > 0.0 { (sh - sr) * (1.0 + delta_f / du) } else { sh - sr };
            // N = s_R gap + s_H x_p.
            let x_p = (n - sr * gap) / sh;
            Schedule { x_r: x_p + gap, x_p, rv_co: sh - pv_co, pv_co, theta: Some(pv_co / sp) }
        }
    };
    if !(s.x_p > 0.0) {
        return Err(PricingError::RvOnly);
    }
    Ok(s)
}

/// Optimal pricing without late arrival.
pub fn optimal_pricing(p: &ModelParams) -> Result<PricingScheme, PricingError> {
    let s = early_schedule(p, 0.0)?;
    let (b, f0, n) = (p.beta(), p.base_fee(), p.demand());
    let profile = DepartureProfile::from_segments([
        (-s.x_r, -s.x_p, p.s_curb_rv(), 0.0),
        (-s.x_p, 0.0, s.rv_co, s.pv_co),
    ])
    .expect("ordered segments");
    let n_pv = profile.total(Mode::Pv);
    let tent = |x: f64| PiecewiseCurve::from_points([(-x, f0), (0.0, f0 + b * x)]);
    Ok(PricingScheme {
        regime: capacity_regime(p),
        late: false,
        base_fee: f0,
        delta_f: 0.0,
        theta: s.theta,
        so_t0_rv: -s.x_r,
        so_t0_pv: -s.x_p,
        so_t1_rv: None,
        so_t1_pv: None,
        so_n_rv: n - n_pv,
        so_n_pv: n_pv,
        so_cost: b * s.x_r + p.rv_fixed_cost() + f0,
        fee_rv: tent(s.x_r),
        fee_pv: tent(s.x_p),
        profile,
    })
}

/// Social cost of the queue-free equilibrium induced by fees whose initial
/// levels differ by `delta_f` (PV minus RV); no late arrival.
pub fn so_social_cost_at_fee_gap(p: &ModelParams, delta_f: f64) -> Result<f64, PricingError> {
    let s = early_schedule(p, delta_f)?;
    let profile = DepartureProfile::from_segments([
        (-s.x_r, -s.x_p, p.s_curb_rv(), 0.0),
        (-s.x_p, 0.0, s.rv_co, s.pv_co),
    ])
    .expect("ordered segments");
    Ok(zero_queue_social_cost(&profile, p))
}

/// Optimal pricing with late arrival: tent-shaped fees, equal at each
/// mode's first and last arrival.
pub fn optimal_pricing_late(p: &ModelParams) -> Result<PricingScheme, PricingError> {
    let g = p.require_gamma()?;
    let (b, f0, n, du) = (p.beta(), p.base_fee(), p.demand(), p.cost_gap());
    let (sh, sr, sp) = (p.s_highway(), p.s_curb_rv(), p.s_curb_pv());
    let regime = capacity_regime(p);
    // Each mode's charged window spans x(1 + β/γ) for lead time x.
    let stretch = 1.0 + b / g;
    let (x_r, rv_co, pv_co, theta) = match regime {
        CapacityRegime::CurbWithinHighway => ((n / stretch + sp * du / b) / (sr + sp), sr, sp, None),
        CapacityRegime::CurbExceedsHighway => {
            ((n / stretch + (sh - sr) * du / b) / sh, sr, sh - sr, Some((sh - sr) / sp))
        }
    };
    let x_p = x_r - du / b;
    if !(x_p > 0.0) {
        return Err(PricingError::RvOnly);
    }
    let (t1r, t1p) = (b * x_r / g, b * x_p / g);
    let profile = DepartureProfile::from_segments([
        (-x_r, -x_p, sr, 0.0),
        (-x_p, t1p, rv_co, pv_co),
        (t1p, t1r, sr, 0.0),
    ])
    .expect("ordered segments");
    let n_pv = profile.total(Mode::Pv);
    let tent = |x: f64| PiecewiseCurve::from_points([(-x, f0), (0.0, f0 + b * x), (b * x / g, f0)]);
    Ok(PricingScheme {
        regime,
        late: true,
        base_fee: f0,
        delta_f: 0.0,
        theta,
        so_t0_rv: -x_r,
        so_t0_pv: -x_p,
        so_t1_rv: Some(t1r),
        so_t1_pv: Some(t1p),
        so_n_rv: n - n_pv,
        so_n_pv: n_pv,
        so_cost: b * x_r + p.rv_fixed_cost() + f0,
        fee_rv: tent(x_r),
        fee_pv: tent(x_p),
        profile,
    })
}
