//! Scenario classification from parameters alone.
//!
//! Boundaries go to the branch whose inequality is non-strict, with a relative
//! tolerance of [`EPS`].

use serde::Serialize;

use crate::params::{ModelParams, Spillover};

/// Relative tolerance for boundary comparisons.
pub const EPS: f64 = 1e-9;

/// Queuing situation at the start of the peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// Only the RV curb queues at first.
    CurbOnly,
    /// Highway and RV curb both queue from the first departure.
    CurbAndHighway,
}

/// Which modes are used and whether their departure windows overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UtilizationClass {
    RvOnly,
    BothSeparated,
    BothOverlapping,
}

/// Equilibrium scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ScenarioId {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
    S7,
    S8,
    /// Late-arrival scenario with the PV window nested in the RV window, the
    /// on-time PV departing before the on-time RV, and highway queuing that
    /// starts with the first PV.
    L7,
}

impl ScenarioId {
    pub const NO_LATE: [ScenarioId; 8] = [
        ScenarioId::S1,
        ScenarioId::S2,
        ScenarioId::S3,
        ScenarioId::S4,
        ScenarioId::S5,
        ScenarioId::S6,
        ScenarioId::S7,
        ScenarioId::S8,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ScenarioId::S1 => "S1",
            ScenarioId::S2 => "S2",
            ScenarioId::S3 => "S3",
            ScenarioId::S4 => "S4",
            ScenarioId::S5 => "S5",
            ScenarioId::S6 => "S6",
            ScenarioId::S7 => "S7",
            ScenarioId::S8 => "S8",
            ScenarioId::L7 => "L7",
        }
    }

    pub fn utilization(self) -> UtilizationClass {
        match self {
            ScenarioId::S1 | ScenarioId::S6 => UtilizationClass::RvOnly,
            ScenarioId::S2 | ScenarioId::S4 | ScenarioId::S7 => UtilizationClass::BothSeparated,
            _ => UtilizationClass::BothOverlapping,
        }
    }

    /// Expected highway queuing: never, after the first PV, or from the start.
    pub fn highway_pattern(self) -> HighwayPattern {
        match self {
            ScenarioId::S1 | ScenarioId::S2 | ScenarioId::S3 => HighwayPattern::Never,
            ScenarioId::S4 | ScenarioId::S5 | ScenarioId::L7 => HighwayPattern::Later,
            ScenarioId::S6 | ScenarioId::S7 | ScenarioId::S8 => HighwayPattern::FromStart,
        }
    }
}

impl std::fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// When the highway bottleneck queues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HighwayPattern {
    Never,
    Later,
    FromStart,
}

/// `a ≤ b` with relative slack.
pub(crate) fn le(a: f64, b: f64) -> bool {
    a <= b + EPS * a.abs().max(b.abs()).max(1.0)
}

/// `a ≥ b` with relative slack.
pub(crate) fn ge(a: f64, b: f64) -> bool {
    le(b, a)
}

/// `(α+π)/(α+π−β)`: ratio of the RV departure rate to the curb rate while
/// the RV curb queue grows and arrivals are early.
pub fn rv_early_factor(p: &ModelParams) -> f64 {
    let a = p.alpha() + p.pi();
    a / (a - p.beta())
}

/// `α/(α−β)`: the PV counterpart of [`rv_early_factor`].
pub fn pv_early_factor(p: &ModelParams) -> f64 {
    p.alpha() / (p.alpha() - p.beta())
}

/// Highway queuing at the start of the peak.
pub fn initial_phase_regime(p: &ModelParams) -> Regime {
    let ratio = (p.alpha() + p.pi() - p.beta()) / (p.alpha() + p.pi());
    if le(p.s_curb_rv() / p.s_highway(), ratio) {
        Regime::CurbOnly
    } else {
        Regime::CurbAndHighway
    }
}

/// Cost gap at or above which only RVs are used.
pub fn rv_only_threshold(p: &ModelParams) -> f64 {
    p.beta() * p.demand() / p.s_curb_rv()
}

/// Cost gap at or above which the two departure windows do not overlap.
pub fn separation_threshold(p: &ModelParams) -> f64 {
    let (a, b, pi) = (p.alpha(), p.beta(), p.pi());
    let (sh, sr, sp) = (p.s_highway(), p.s_curb_rv(), p.s_curb_pv());
    let n = p.demand();
    match initial_phase_regime(p) {
        Regime::CurbOnly => n * b * (a + pi - b) / (b * sp + (a + pi) * sr),
        Regime::CurbAndHighway => {
            n * (a * (a + pi - b) * sh - (a + pi) * (a - b) * sr) / ((a + pi) * (sh * (sr + sp) - sr * sp))
        }
    }
}

pub fn classify_utilization(p: &ModelParams) -> UtilizationClass {
    let gap = p.cost_gap();
    if ge(gap, rv_only_threshold(p)) {
        UtilizationClass::RvOnly
    } else if ge(gap, separation_threshold(p)) {
        UtilizationClass::BothSeparated
    } else {
        UtilizationClass::BothOverlapping
    }
}

/// Total co-departure rate of the early overlap stage. The highway stays
/// uncongested during co-departure iff this does not exceed `s_H`.
pub fn co_departure_total(p: &ModelParams, spill: Spillover) -> f64 {
    let (dr, dp) = spill.intensities(p);
    let m = 1.0 - dr * dp;
    rv_early_factor(p) * (1.0 - dr) * p.s_curb_rv() / m + pv_early_factor(p) * (1.0 - dp) * p.s_curb_pv() / m
}

/// The unique no-late-arrival scenario for `p`.
pub fn classify(p: &ModelParams, spill: Spillover) -> ScenarioId {
    let regime = initial_phase_regime(p);
    match (regime, classify_utilization(p)) {
        (Regime::CurbOnly, UtilizationClass::RvOnly) => ScenarioId::S1,
        (Regime::CurbAndHighway, UtilizationClass::RvOnly) => ScenarioId::S6,
        (Regime::CurbAndHighway, UtilizationClass::BothSeparated) => ScenarioId::S7,
        (Regime::CurbAndHighway, UtilizationClass::BothOverlapping) => ScenarioId::S8,
        (Regime::CurbOnly, UtilizationClass::BothSeparated) => {
            if le(p.s_curb_pv() / p.s_highway(), (p.alpha() - p.beta()) / p.alpha()) {
                ScenarioId::S2
            } else {
                ScenarioId::S4
            }
        }
        (Regime::CurbOnly, UtilizationClass::BothOverlapping) => {
            if le(co_departure_total(p, spill), p.s_highway()) {
                ScenarioId::S3
            } else {
                ScenarioId::S5
            }
        }
    }
}
