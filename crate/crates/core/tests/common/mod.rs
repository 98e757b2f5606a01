//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use proptest::prelude::*;
use tandem_curb::{build_parameters, ModelParams, RawParams};

pub fn hk_raw() -> RawParams {
    RawParams {
        alpha: 120.0,
        beta: 100.0,
        gamma: None,
        pi: None,
        pi_per_minute: Some(1.9),
        lambda_dist: 9.5,
        trip_length: 9.0,
        rv_flag_fee: 27.0,
        pv_fixed_cost: 200.0,
        rv_fixed_cost: None,
        demand: 7158.0,
        preferred_arrival: 9.0,
        s_highway: 5700.0,
        s_curb_rv: 1800.0,
        s_curb_pv: 2100.0,
        delta_rv: 0.1,
        delta_pv: 0.1,
        base_fee: 0.0,
    }
}

pub fn hk() -> ModelParams {
    build_parameters(&hk_raw()).unwrap()
}

/// Corridor with α = 6.4, β = 3.9, π = 8, c^R = 10, N = 3000, s_H = 2500.
pub fn synthetic_raw(s_rv: f64, s_pv: f64, gap: f64) -> RawParams {
    RawParams {
        alpha: 6.4,
        beta: 3.9,
        gamma: None,
        pi: Some(8.0),
        pi_per_minute: None,
        lambda_dist: 0.0,
        trip_length: 0.0,
        rv_flag_fee: 0.0,
        pv_fixed_cost: 10.0 + gap,
        rv_fixed_cost: Some(10.0),
        demand: 3000.0,
        preferred_arrival: 9.0,
        s_highway: 2500.0,
        s_curb_rv: s_rv,
        s_curb_pv: s_pv,
        delta_rv: 0.1,
        delta_pv: 0.1,
        base_fee: 0.0,
    }
}

pub fn synthetic(s_rv: f64, s_pv: f64, gap: f64, delta_pv: f64) -> ModelParams {
    build_parameters(&RawParams { delta_pv, ..synthetic_raw(s_rv, s_pv, gap) }).unwrap()
}

/// Late-arrival corridor with N = 6500, s_H = 5500, γ = 4.8, δ = 0.3.
pub fn late_example_raw() -> RawParams {
    RawParams {
        alpha: 4.0,
        beta: 3.0,
        gamma: Some(4.8),
        pi: Some(4.0),
        pi_per_minute: None,
        lambda_dist: 0.0,
        trip_length: 0.0,
        rv_flag_fee: 0.0,
        pv_fixed_cost: 11.0,
        rv_fixed_cost: Some(10.0),
        demand: 6500.0,
        preferred_arrival: 9.0,
        s_highway: 5500.0,
        s_curb_rv: 4000.0,
        s_curb_pv: 4500.0,
        delta_rv: 0.3,
        delta_pv: 0.3,
        base_fee: 0.0,
    }
}

/// The late corridor with curb capacities low enough for the curb to queue
/// before the highway.
pub fn late_l7() -> ModelParams {
    build_parameters(&RawParams {
        s_curb_rv: 3400.0,
        s_curb_pv: 3000.0,
        delta_rv: 0.05,
        delta_pv: 0.05,
        ..late_example_raw()
    })
    .unwrap()
}

/// One representative instance per no-late scenario, as
/// `(label, s_C^R, s_C^P, u^P − c^R)` on the synthetic corridor.
pub const REPRESENTATIVES: [(&str, f64, f64, f64); 8] = [
    ("S1", 1500.0, 300.0, 8.0),
    ("S2", 1700.0, 300.0, 5.0),
    ("S3", 300.0, 300.0, 1.0),
    ("S4", 1300.0, 1500.0, 5.0),
    ("S5", 400.0, 1000.0, 1.0),
    ("S6", 1900.0, 300.0, 8.0),
    ("S7", 2300.0, 900.0, 3.0),
    ("S8", 1900.0, 300.0, 1.0),
];

/// Valid no-late parameter sets spanning both capacity regimes, every
/// scenario and both zero and positive PV spillover.
pub fn raw_params() -> impl Strategy<Value = RawParams> {
    (
        (2.0..12.0f64, 0.1..0.9f64, 0.0..10.0f64, 0.0..1.0f64),
        (500.0..5500.0f64, 1000.0..6000.0f64, 0.05..0.95f64, 0.05..0.95f64),
        (0.0..0.5f64, prop_oneof![Just(0.0), 0.0..0.5f64]),
    )
        .prop_map(|((alpha, beta_frac, pi, gap_frac), (n, sh, fr, fp), (dr, dp))| RawParams {
            alpha,
            beta: alpha * beta_frac,
            gamma: None,
            pi: Some(pi),
            pi_per_minute: None,
            lambda_dist: 0.0,
            trip_length: 0.0,
            rv_flag_fee: 0.0,
            pv_fixed_cost: 10.0 + 20.0 * gap_frac * gap_frac,
            rv_fixed_cost: Some(10.0),
            demand: n,
            preferred_arrival: 9.0,
            s_highway: sh,
            s_curb_rv: sh * fr,
            s_curb_pv: sh * fp,
            delta_rv: dr,
            delta_pv: dp,
            base_fee: 0.0,
        })
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}
