//! Parameter sweeps and the Hong Kong case report.
//!
//! Grid points are evaluated in parallel and emitted in grid order, so the
//! same spec always yields the same rows. Points that fail validation or
//! solving stay in the output with a status instead of aborting the sweep.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::classify::{classify, ScenarioId};
use crate::late::solve_late;
use crate::metrics::{metrics, metrics_priced, pricing_gain, MetricsReport, PricingGain};
use crate::params::{build_parameters, params_from_toml, Mode, ModelParams, RawParams, Spillover};
use crate::pricing::{optimal_pricing, optimal_pricing_late, PricingScheme};
use crate::solver::{solve, EquilibriumSolution};

/// Bundled Hong Kong corridor configuration.
pub const HK_CONFIG: &str = include_str!("../data/hk.toml");

pub fn hong_kong() -> ModelParams {
    params_from_toml(HK_CONFIG).expect("bundled config is valid")
}

/// Parameters a sweep axis can move.
pub const SWEEPABLE: [&str; 13] = [
    "s_curb_rv",
    "s_curb_pv",
    "s_highway",
    "cost_gap",
    "demand",
    "alpha",
    "beta",
    "gamma",
    "pi",
    "delta",
    "delta_rv",
    "delta_pv",
    "pv_fixed_cost",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("unknown sweep parameter `{0}` (expected one of {list})", list = SWEEPABLE.join(", "))]
    UnknownParameter(String),
    #[error("axis `{0}` needs at least 2 points")]
    TooFewPoints(String),
    #[error("axis `{name}` range [{start}, {end}] is not finite and increasing")]
    BadRange { name: String, start: f64, end: f64 },
    #[error("expected {expected} axes, got {got}")]
    AxisCount { expected: usize, got: usize },
}

/// Sets `name` on `raw`. `cost_gap` moves `u^P` so that `u^P − c^R` equals
/// `value`; `delta` sets both spillover intensities.
pub fn set_param(raw: &mut RawParams, name: &str, value: f64) -> Result<(), SweepError> {
    match name {
        "s_curb_rv" => raw.s_curb_rv = value,
        "s_curb_pv" => raw.s_curb_pv = value,
        "s_highway" => raw.s_highway = value,
        "demand" => raw.demand = value,
        "alpha" => raw.alpha = value,
        "beta" => raw.beta = value,
        "gamma" => raw.gamma = Some(value),
        "pi" => (raw.pi, raw.pi_per_minute) = (Some(value), None),
        "delta" => (raw.delta_rv, raw.delta_pv) = (value, value),
        "delta_rv" => raw.delta_rv = value,
        "delta_pv" => raw.delta_pv = value,
        "pv_fixed_cost" => raw.pv_fixed_cost = value,
        "cost_gap" => {
            let c_r = raw.rv_fixed_cost.unwrap_or(raw.lambda_dist * raw.trip_length + raw.rv_flag_fee);
            raw.pv_fixed_cost = c_r + value;
        }
        _ => return Err(SweepError::UnknownParameter(name.to_string())),
    }
    Ok(())
}

/// Evenly spaced values of one parameter, both ends included.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Axis {
    pub name: String,
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(name: &str, start: f64, end: f64, points: usize) -> Self {
        Axis { name: name.to_string(), start, end, points }
    }

    /// Axis from `start` to `end` in steps of `step`.
    pub fn stepped(name: &str, start: f64, end: f64, step: f64) -> Self {
        let points = ((end - start) / step).round() as usize + 1;
        Axis::new(name, start, start + step * (points - 1) as f64, points)
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        (0..n).map(|i| self.start + (self.end - self.start) * i as f64 / (n - 1) as f64).collect()
    }

    fn validate(&self) -> Result<(), SweepError> {
        if !SWEEPABLE.contains(&self.name.as_str()) {
            return Err(SweepError::UnknownParameter(self.name.clone()));
        }
        if self.points < 2 {
            return Err(SweepError::TooFewPoints(self.name.clone()));
        }
        if !(self.start.is_finite() && self.end.is_finite() && self.end > self.start) {
            return Err(SweepError::BadRange { name: self.name.clone(), start: self.start, end: self.end });
        }
        Ok(())
    }
}

/// A sweep: axes over a base parameter set. The first axis varies slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: RawParams,
    pub axes: Vec<Axis>,
    pub spillover: Spillover,
    /// Use the late-arrival solver and pricing.
    pub late: bool,
}

impl SweepSpec {
    pub fn new(base: RawParams, axes: Vec<Axis>) -> Self {
        SweepSpec { base, axes, spillover: Spillover::Bi, late: false }
    }

    fn validate(&self, axes: Option<usize>) -> Result<(), SweepError> {
        if let Some(n) = axes {
            if self.axes.len() != n {
                return Err(SweepError::AxisCount { expected: n, got: self.axes.len() });
            }
        }
        self.axes.iter().try_for_each(Axis::validate)
    }

    /// Every grid point, in row-major order.
    pub fn grid(&self) -> Vec<Vec<f64>> {
        let mut points = vec![Vec::new()];
        for axis in &self.axes {
            let values = axis.values();
            points = points
                .into_iter()
                .flat_map(|p| values.iter().map(move |&v| [p.clone(), vec![v]].concat()))
                .collect();
        }
        points
    }

    fn params_at(&self, coords: &[f64]) -> Result<ModelParams, String> {
        let mut raw = self.base.clone();
        for (axis, &v) in self.axes.iter().zip(coords) {
            set_param(&mut raw, &axis.name, v).map_err(|e| e.to_string())?;
        }
        build_parameters(&raw).map_err(|e| e.to_string())
    }
}

/// A plain table of strings, written as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header)?;
        for r in &self.rows {
            out.write_record(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// One evaluated grid point of a scenario map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapPoint {
    pub coords: Vec<f64>,
    pub scenario: Option<ScenarioId>,
    pub status: String,
}

/// Scenario of every grid point, from the classifier alone.
pub fn sweep_scenario_map(spec: &SweepSpec) -> Result<Vec<MapPoint>, SweepError> {
    spec.validate(Some(2))?;
    Ok(spec
        .grid()
        .into_par_iter()
        .map(|coords| match spec.params_at(&coords) {
            Ok(p) => MapPoint { scenario: Some(classify(&p, spec.spillover)), coords, status: "ok".into() },
            Err(e) => MapPoint { coords, scenario: None, status: format!("invalid: {e}") },
        })
        .collect())
}

pub fn scenario_map_table(spec: &SweepSpec, points: &[MapPoint]) -> Table {
    let mut header: Vec<String> = spec.axes.iter().map(|a| a.name.clone()).collect();
    header.extend(["scenario".into(), "status".into()]);
    let rows = points
        .iter()
        .map(|pt| {
            let mut r: Vec<String> = pt.coords.iter().map(|&v| num(v)).collect();
            r.push(pt.scenario.map(|s| s.label().to_string()).unwrap_or_default());
            r.push(pt.status.clone());
            r
        })
        .collect();
    Table { header, rows }
}

/// No-toll and priced metrics at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsPoint {
    pub coords: Vec<f64>,
    pub scenario: String,
    pub equilibrium: Option<MetricsReport>,
    pub optimum: Option<MetricsReport>,
    pub gain: Option<PricingGain>,
    pub status: String,
}

fn metrics_point(spec: &SweepSpec, coords: Vec<f64>) -> MetricsPoint {
    let mut pt = MetricsPoint {
        coords,
        scenario: String::new(),
        equilibrium: None,
        optimum: None,
        gain: None,
        status: "ok".into(),
    };
    let p = match spec.params_at(&pt.coords) {
        Ok(p) => p,
        Err(e) => {
            pt.status = format!("invalid: {e}");
            return pt;
        }
    };
    let mut notes = Vec::new();
    if spec.late {
        match solve_late(&p, spec.spillover) {
            Ok(s) => {
                pt.scenario = s.scenario.label().into();
                pt.equilibrium = Some(metrics(&s, &p));
            }
            Err(e) => notes.push(format!("equilibrium: {e}")),
        }
        match optimal_pricing_late(&p) {
            Ok(s) => pt.optimum = Some(metrics_priced(&s, &p)),
            Err(e) => notes.push(format!("pricing: {e}")),
        }
    } else {
        pt.scenario = classify(&p, spec.spillover).label().into();
        match solve(&p, spec.spillover) {
            Ok(s) => pt.equilibrium = Some(metrics(&s, &p)),
            Err(e) => notes.push(format!("equilibrium: {e}")),
        }
        match optimal_pricing(&p) {
            Ok(s) => pt.optimum = Some(metrics_priced(&s, &p)),
            Err(e) => notes.push(format!("pricing: {e}")),
        }
    }
    if let (Some(e), Some(o)) = (&pt.equilibrium, &pt.optimum) {
        pt.gain = Some(pricing_gain(e, o));
    }
    if !notes.is_empty() {
        pt.status = notes.join("; ");
    }
    pt
}

/// No-toll and priced metrics over a grid of any dimension.
pub fn sweep_metrics(spec: &SweepSpec) -> Result<Vec<MetricsPoint>, SweepError> {
    spec.validate(None)?;
    Ok(spec.grid().into_par_iter().map(|c| metrics_point(spec, c)).collect())
}

/// Metric curves along a single axis.
pub fn sweep_scalar(spec: &SweepSpec) -> Result<Vec<MetricsPoint>, SweepError> {
    spec.validate(Some(1))?;
    sweep_metrics(spec)
}

pub fn metrics_table(spec: &SweepSpec, points: &[MetricsPoint]) -> Table {
    let mut header: Vec<String> = spec.axes.iter().map(|a| a.name.clone()).collect();
    header.extend(
        [
            "scenario",
            "sc_e",
            "c_e",
            "n_rv_e",
            "n_pv_e",
            "tqt_h",
            "tqt_cr",
            "tqt_cp",
            "sc_o",
            "c_o",
            "n_rv_o",
            "sc_reduction",
            "cost_change",
            "status",
        ]
        .map(String::from),
    );
    let rows = points
        .iter()
        .map(|pt| {
            let mut r: Vec<String> = pt.coords.iter().map(|&v| num(v)).collect();
            r.push(pt.scenario.clone());
            let e = pt.equilibrium.as_ref();
            r.push(opt(e.map(|m| m.social_cost)));
            r.push(opt(e.map(|m| m.cost())));
            r.push(opt(e.map(|m| m.n_rv)));
            r.push(opt(e.map(|m| m.n_pv)));
            for b in 0..3 {
                r.push(opt(e.map(|m| m.tqt[b])));
            }
            let o = pt.optimum.as_ref();
            r.push(opt(o.map(|m| m.social_cost)));
            r.push(opt(o.map(|m| m.cost())));
            r.push(opt(o.map(|m| m.n_rv)));
            r.push(opt(pt.gain.map(|g| g.sc_reduction)));
            r.push(opt(pt.gain.map(|g| g.cost_change)));
            r.push(pt.status.clone());
            r
        })
        .collect();
    Table { header, rows }
}

/// A reported quantity next to its published value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub name: &'static str,
    pub computed: String,
    pub published: &'static str,
    /// Relative deviation for numbers, minutes for clock times.
    pub deviation: f64,
}

/// Hong Kong before/after pricing report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub scenario: ScenarioId,
    pub equilibrium: MetricsReport,
    pub optimum: MetricsReport,
    pub gain: PricingGain,
    /// Highway queue onset and dissipation, model hours.
    pub highway_queue: Option<(f64, f64)>,
    pub rows: Vec<Comparison>,
}

impl CaseReport {
    pub fn render(&self) -> String {
        let mut out = format!(
            "scenario {}\n{:<22} {:>16} {:>16} {:>10}\n",
            self.scenario, "quantity", "computed", "published", "deviation"
        );
        for r in &self.rows {
            let dev = if r.name.contains("interval") || r.name.contains("queue") {
                format!("{:+.1} min", r.deviation)
            } else {
                format!("{:+.2}%", 100.0 * r.deviation)
            };
            out += &format!("{:<22} {:>16} {:>16} {:>10}\n", r.name, r.computed, r.published, dev);
        }
        out += &format!("social cost reduction  {:.2}%\n", 100.0 * self.gain.sc_reduction);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CaseError {
    #[error("equilibrium: {0}")]
    Equilibrium(#[from] crate::solver::SolveError),
    #[error("pricing: {0}")]
    Pricing(#[from] crate::pricing::PricingError),
}

fn clock_deviation(p: &ModelParams, t: f64, published: &str) -> f64 {
    let target = crate::params::parse_clock(published).expect("valid clock literal");
    60.0 * (t + p.preferred_arrival() - target)
}

fn interval_row(p: &ModelParams, name: &'static str, w: (f64, f64), published: &'static str) -> Comparison {
    let (a, b) = published.trim_matches(['[', ']']).split_once(", ").expect("interval literal");
    let dev = clock_deviation(p, w.0, a).abs().max(clock_deviation(p, w.1, b).abs());
    Comparison { name, computed: format!("[{}, {}]", p.clock(w.0), p.clock(w.1)), published, deviation: dev }
}

fn value_row(name: &'static str, x: f64, published: &'static str) -> Comparison {
    let target: f64 = published.replace(',', "").parse().expect("numeric literal");
    Comparison { name, computed: format!("{x:.2}"), published, deviation: (x - target) / target }
}

/// Runs the case study on `p` and sets the results beside the published ones.
pub fn run_case(p: &ModelParams, spill: Spillover) -> Result<CaseReport, CaseError> {
    let sol: EquilibriumSolution = solve(p, spill)?;
    let scheme: PricingScheme = optimal_pricing(p)?;
    let equilibrium = metrics(&sol, p);
    let optimum = metrics_priced(&scheme, p);
    let gain = pricing_gain(&equilibrium, &optimum);
    let highway_queue = sol.build_curves(p).highway_queue_window(1e-6);
    let mut rows = vec![
        interval_row(p, "RV interval", sol.window(Mode::Rv).unwrap_or_default(), "[6:35, 7:58]"),
        interval_row(p, "PV interval", sol.window(Mode::Pv).unwrap_or_default(), "[7:29, 7:44]"),
        value_row("N^R", equilibrium.n_rv, "4027"),
        value_row("C", equilibrium.cost(), "351.27"),
        value_row("SC", equilibrium.social_cost, "2,515,133.79"),
    ];
    if let Some((on, off)) = highway_queue {
        rows.push(interval_row(p, "highway queue", (on, off), "[7:29, 8:15]"));
    }
    let end = |t: Option<f64>| t.unwrap_or(0.0);
    rows.extend([
        interval_row(p, "priced RV interval", (scheme.so_t0_rv, end(scheme.so_t1_rv)), "[6:41, 9:00]"),
        interval_row(p, "priced PV interval", (scheme.so_t0_pv, end(scheme.so_t1_pv)), "[7:35, 9:00]"),
        value_row("priced N^R", optimum.n_rv, "4173"),
        value_row("priced C", optimum.cost(), "342.12"),
        value_row("priced SC", optimum.social_cost, "1,752,941.70"),
        value_row("RV fee cap", scheme.fee_cap(Mode::Rv) - scheme.base_fee, "231.67"),
        value_row("PV fee cap", scheme.fee_cap(Mode::Pv) - scheme.base_fee, "141.67"),
    ]);
    Ok(CaseReport { scenario: sol.scenario, equilibrium, optimum, gain, highway_queue, rows })
}

/// The Hong Kong case on the bundled configuration.
pub fn run_case_hk() -> Result<CaseReport, CaseError> {
    run_case(&hong_kong(), Spillover::Bi)
}
