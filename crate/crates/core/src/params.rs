//! Corridor, cost, demand and spillover parameters.
//!
//! Time is measured in hours with the preferred arrival time at 0. Rates are
//! per hour. The only place a clock appears is `preferred_arrival`, used for
//! display.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which mode a commuter uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Ride-hailing vehicle, dropped off at the curb.
    Rv,
    /// Private vehicle, served by the urban main road.
    Pv,
}

impl Mode {
    pub const BOTH: [Mode; 2] = [Mode::Rv, Mode::Pv];

    pub fn label(self) -> &'static str {
        match self {
            Mode::Rv => "RV",
            Mode::Pv => "PV",
        }
    }
}

/// Direction of curbside congestion spillover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Spillover {
    /// Only the RV queue slows PVs; `delta_pv` is treated as 0.
    Uni,
    /// Both queues slow the other mode.
    Bi,
}

impl Spillover {
    /// Spillover intensities `(delta_rv, delta_pv)` in effect under this mode.
    pub fn intensities(self, p: &ModelParams) -> (f64, f64) {
        match self {
            Spillover::Uni => (p.delta_rv, 0.0),
            Spillover::Bi => (p.delta_rv, p.delta_pv),
        }
    }
}

/// Raw, unvalidated parameter values as read from a config file.
///
/// Keys are the snake_case field names. `pi` is per hour; `pi_per_minute` is
/// accepted instead and converted. `rv_fixed_cost` overrides the derived
/// `lambda_dist * trip_length + rv_flag_fee`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_per_minute: Option<f64>,
    pub lambda_dist: f64,
    pub trip_length: f64,
    pub rv_flag_fee: f64,
    pub pv_fixed_cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rv_fixed_cost: Option<f64>,
    pub demand: f64,
    #[serde(default)]
    pub preferred_arrival: f64,
    pub s_highway: f64,
    pub s_curb_rv: f64,
    pub s_curb_pv: f64,
    pub delta_rv: f64,
    pub delta_pv: f64,
    #[serde(default)]
    pub base_fee: f64,
}

/// A standing assumption violated by a parameter set.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("field `{0}` must be finite")]
    NonFinite(&'static str),
    #[error("field `{0}` must be nonnegative")]
    Negative(&'static str),
    #[error("field `{0}` must be positive")]
    NonPositive(&'static str),
    #[error("exactly one of `pi` and `pi_per_minute` must be given")]
    FareRate,
    #[error("requires β < α (got β = {beta}, α = {alpha})")]
    BetaNotBelowAlpha { alpha: f64, beta: f64 },
    #[error("requires s_C^R < s_H (got s_C^R = {curb}, s_H = {highway})")]
    CurbRvNotBelowHighway { curb: f64, highway: f64 },
    #[error("requires s_C^P < s_H (got s_C^P = {curb}, s_H = {highway})")]
    CurbPvNotBelowHighway { curb: f64, highway: f64 },
    #[error("requires u^P > c^R (got u^P = {pv}, c^R = {rv})")]
    PvNotCostlier { pv: f64, rv: f64 },
    #[error("requires δ^R in [0, 1) (got {0})")]
    DeltaRvRange(f64),
    #[error("requires δ^P in [0, 1) (got {0})")]
    DeltaPvRange(f64),
    #[error("requires γ > 0 (got {0})")]
    GammaNonPositive(f64),
    #[error("late-arrival mode requires γ")]
    MissingGamma,
}

/// Non-fatal remarks about a parameter set.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// γ ≤ β: lateness is no dearer than earliness.
    GammaNotAboveBeta { beta: f64, gamma: f64 },
    /// δ^R = 0 lies outside the open interval the model is stated for.
    DeltaRvZero,
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::GammaNotAboveBeta { beta, gamma } => {
                write!(f, "γ = {gamma} does not exceed β = {beta}")
            }
            Warning::DeltaRvZero => write!(f, "δ^R = 0 removes RV spillover entirely"),
        }
    }
}

/// Validated parameters. Immutable; rebuild from [`RawParams`] to change.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelParams {
    alpha: f64,
    beta: f64,
    gamma: Option<f64>,
    pi: f64,
    lambda_dist: f64,
    trip_length: f64,
    rv_flag_fee: f64,
    pv_fixed_cost: f64,
    rv_cost: f64,
    rv_cost_overridden: bool,
    demand: f64,
    preferred_arrival: f64,
    s_highway: f64,
    s_curb_rv: f64,
    s_curb_pv: f64,
    pub(crate) delta_rv: f64,
    pub(crate) delta_pv: f64,
    base_fee: f64,
    #[serde(skip)]
    warnings: Vec<Warning>,
}

/// Fixed RV charge `λ·L + u^R`.
pub fn fixed_cost_rv(lambda_dist: f64, trip_length: f64, rv_flag_fee: f64) -> f64 {
    lambda_dist * trip_length + rv_flag_fee
}

/// Converts a per-minute rate to per hour.
pub fn per_minute_to_per_hour(rate: f64) -> f64 {
    rate * 60.0
}

/// Converts a per-hour rate to per minute.
pub fn per_hour_to_per_minute(rate: f64) -> f64 {
    rate / 60.0
}

fn finite(name: &'static str, v: f64) -> Result<f64, ValidationError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ValidationError::NonFinite(name))
    }
}

fn positive(name: &'static str, v: f64) -> Result<f64, ValidationError> {
    if finite(name, v)? > 0.0 {
        Ok(v)
    } else {
        Err(ValidationError::NonPositive(name))
    }
}

fn nonnegative(name: &'static str, v: f64) -> Result<f64, ValidationError> {
    if finite(name, v)? >= 0.0 {
        Ok(v)
    } else {
        Err(ValidationError::Negative(name))
    }
}

/// Validates raw values. Every violation maps to exactly one named error.
pub fn build_parameters(raw: &RawParams) -> Result<ModelParams, ValidationError> {
    let alpha = positive("alpha", raw.alpha)?;
    let beta = positive("beta", raw.beta)?;
    let pi = match (raw.pi, raw.pi_per_minute) {
        (Some(h), None) => nonnegative("pi", h)?,
        (None, Some(m)) => per_minute_to_per_hour(nonnegative("pi_per_minute", m)?),
        _ => return Err(ValidationError::FareRate),
    };
    let lambda_dist = nonnegative("lambda_dist", raw.lambda_dist)?;
    let trip_length = nonnegative("trip_length", raw.trip_length)?;
    let rv_flag_fee = nonnegative("rv_flag_fee", raw.rv_flag_fee)?;
    let pv_fixed_cost = nonnegative("pv_fixed_cost", raw.pv_fixed_cost)?;
    let demand = nonnegative("demand", raw.demand)?;
    let preferred_arrival = finite("preferred_arrival", raw.preferred_arrival)?;
    let s_highway = positive("s_highway", raw.s_highway)?;
    let s_curb_rv = positive("s_curb_rv", raw.s_curb_rv)?;
    let s_curb_pv = positive("s_curb_pv", raw.s_curb_pv)?;
    let delta_rv = finite("delta_rv", raw.delta_rv)?;
    let delta_pv = finite("delta_pv", raw.delta_pv)?;
    let base_fee = finite("base_fee", raw.base_fee)?;
    let (rv_cost, rv_cost_overridden) = match raw.rv_fixed_cost {
        Some(c) => (nonnegative("rv_fixed_cost", c)?, true),
        None => (fixed_cost_rv(lambda_dist, trip_length, rv_flag_fee), false),
    };

    if beta >= alpha {
        return Err(ValidationError::BetaNotBelowAlpha { alpha, beta });
    }
    if s_curb_rv >= s_highway {
        return Err(ValidationError::CurbRvNotBelowHighway { curb: s_curb_rv, highway: s_highway });
    }
    if s_curb_pv >= s_highway {
        return Err(ValidationError::CurbPvNotBelowHighway { curb: s_curb_pv, highway: s_highway });
    }
    if pv_fixed_cost <= rv_cost {
        return Err(ValidationError::PvNotCostlier { pv: pv_fixed_cost, rv: rv_cost });
    }
    if !(0.0..1.0).contains(&delta_rv) {
        return Err(ValidationError::DeltaRvRange(delta_rv));
    }
    if !(0.0..1.0).contains(&delta_pv) {
        return Err(ValidationError::DeltaPvRange(delta_pv));
    }
    let mut warnings = Vec::new();
    let gamma = match raw.gamma {
        Some(g) => {
            if !g.is_finite() || g <= 0.0 {
                return Err(ValidationError::GammaNonPositive(g));
            }
            if g <= beta {
                warnings.push(Warning::GammaNotAboveBeta { beta, gamma: g });
            }
            Some(g)
        }
        None => None,
    };
    if delta_rv == 0.0 {
        warnings.push(Warning::DeltaRvZero);
    }

    Ok(ModelParams {
        alpha,
        beta,
        gamma,
        pi,
        lambda_dist,
        trip_length,
        rv_flag_fee,
        pv_fixed_cost,
        rv_cost,
        rv_cost_overridden,
        demand,
        preferred_arrival,
        s_highway,
        s_curb_rv,
        s_curb_pv,
        delta_rv,
        delta_pv,
        base_fee,
        warnings,
    })
}

/// Error reading a config file.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

/// Parses a TOML config; unknown keys are rejected.
pub fn parse_raw(text: &str) -> Result<RawParams, toml::de::Error> {
    toml::from_str(text)
}

/// Parses and validates a TOML config.
pub fn params_from_toml(text: &str) -> Result<ModelParams, ConfigError> {
    Ok(build_parameters(&parse_raw(text)?)?)
}

impl ModelParams {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }
    /// RV time-based fare rate per hour.
    pub fn pi(&self) -> f64 {
        self.pi
    }
    pub fn lambda_dist(&self) -> f64 {
        self.lambda_dist
    }
    pub fn trip_length(&self) -> f64 {
        self.trip_length
    }
    pub fn rv_flag_fee(&self) -> f64 {
        self.rv_flag_fee
    }
    /// Daily fixed PV cost `u^P`.
    pub fn pv_fixed_cost(&self) -> f64 {
        self.pv_fixed_cost
    }
    /// Fixed RV charge `c^R`.
    pub fn rv_fixed_cost(&self) -> f64 {
        self.rv_cost
    }
    pub fn rv_cost_overridden(&self) -> bool {
        self.rv_cost_overridden
    }
    /// `u^P − c^R`, positive by validation.
    pub fn cost_gap(&self) -> f64 {
        self.pv_fixed_cost - self.rv_cost
    }
    pub fn demand(&self) -> f64 {
        self.demand
    }
    /// Preferred arrival as a clock time in hours.
    pub fn preferred_arrival(&self) -> f64 {
        self.preferred_arrival
    }
    pub fn s_highway(&self) -> f64 {
        self.s_highway
    }
    pub fn s_curb(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Rv => self.s_curb_rv,
            Mode::Pv => self.s_curb_pv,
        }
    }
    pub fn s_curb_rv(&self) -> f64 {
        self.s_curb_rv
    }
    pub fn s_curb_pv(&self) -> f64 {
        self.s_curb_pv
    }
    pub fn delta_rv(&self) -> f64 {
        self.delta_rv
    }
    pub fn delta_pv(&self) -> f64 {
        self.delta_pv
    }
    pub fn base_fee(&self) -> f64 {
        self.base_fee
    }
    pub fn warnings(&self) -> &[Warning] {
        &self.warnings
    }

    /// Value of in-vehicle time for `mode`: `α + π` for RV, `α` for PV.
    pub fn time_value(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Rv => self.alpha + self.pi,
            Mode::Pv => self.alpha,
        }
    }

    /// Fixed cost for `mode`: `c^R` or `u^P`.
    pub fn fixed_cost(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Rv => self.rv_cost,
            Mode::Pv => self.pv_fixed_cost,
        }
    }

    /// Generalized cost of a commuter of `mode` leaving home at `depart` and
    /// reaching work at `arrive` (hours relative to the preferred arrival).
    ///
    /// Without γ, late arrival is inadmissible and costs `+∞` beyond a 1e-9 h
    /// slack.
    pub fn trip_cost(&self, mode: Mode, depart: f64, arrive: f64) -> f64 {
        let travel = self.time_value(mode) * (arrive - depart);
        let schedule = if arrive <= 0.0 {
            -self.beta * arrive
        } else {
            match self.gamma {
                Some(g) => g * arrive,
                None if arrive <= 1e-9 => 0.0,
                None => f64::INFINITY,
            }
        };
        travel + schedule + self.fixed_cost(mode)
    }

    /// Copy with `gamma` removed (no-late-arrival mode).
    pub fn without_late(&self) -> ModelParams {
        ModelParams { gamma: None, ..self.clone() }
    }

    /// Requires γ, as late-arrival operations do.
    pub fn require_gamma(&self) -> Result<f64, ValidationError> {
        self.gamma.ok_or(ValidationError::MissingGamma)
    }

    /// Raw values reproducing this parameter set.
    pub fn to_raw(&self) -> RawParams {
        RawParams {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            pi: Some(self.pi),
            pi_per_minute: None,
            lambda_dist: self.lambda_dist,
            trip_length: self.trip_length,
            rv_flag_fee: self.rv_flag_fee,
            pv_fixed_cost: self.pv_fixed_cost,
            rv_fixed_cost: self.rv_cost_overridden.then_some(self.rv_cost),
            demand: self.demand,
            preferred_arrival: self.preferred_arrival,
            s_highway: self.s_highway,
            s_curb_rv: self.s_curb_rv,
            s_curb_pv: self.s_curb_pv,
            delta_rv: self.delta_rv,
            delta_pv: self.delta_pv,
            base_fee: self.base_fee,
        }
    }

    /// Formats a model time (hours relative to the preferred arrival) as a
    /// clock time `H:MM:SS`.
    pub fn clock(&self, t: f64) -> String {
        format_clock(self.preferred_arrival + t)
    }
}

/// Formats clock hours as `H:MM:SS`, rounded to the nearest second.
pub fn format_clock(hours: f64) -> String {
    let total = (hours * 3600.0).round() as i64;
    let sign = if total < 0 { "-" } else { "" };
    let s = total.abs();
    format!("{sign}{}:{:02}:{:02}", s / 3600, (s / 60) % 60, s % 60)
}

/// Parses `H:MM` or `H:MM:SS` into clock hours.
pub fn parse_clock(text: &str) -> Option<f64> {
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let parts: Vec<&str> = body.split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        return None;
    }
    let mut secs = 0i64;
    for (i, part) in parts.iter().enumerate() {
        let v: i64 = part.parse().ok()?;
        if i > 0 && !(0..60).contains(&v) {
            return None;
        }
        secs += v * [3600, 60, 1][i];
    }
    let h = secs as f64 / 3600.0;
    Some(if neg { -h } else { h })
}
