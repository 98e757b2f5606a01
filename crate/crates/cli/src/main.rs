//! Command-line front end: solve, simulate, price, verify and sweep the
//! bi-modal tandem-bottleneck corridor model.

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};

use tandem_curb::params::{parse_raw, ModelParams, RawParams};
use tandem_curb::sweep::{
    hong_kong, metrics_table, run_case, scenario_map_table, set_param, sweep_metrics, sweep_scenario_map,
    Axis, SweepSpec, Table, HK_CONFIG,
};
use tandem_curb::{
    build_parameters, classify, optimal_pricing, optimal_pricing_late, simulate, solve, solve_late,
    verify_equilibrium, verify_optimum, Equilibrium, Mode, Spillover, Tolerances,
};

#[derive(Parser)]
#[command(
    name = "tandem-curb",
    version,
    about = "Bi-modal corridor with tandem highway and curbside bottlenecks"
)]
struct Cli {
    /// TOML parameter file; the bundled Hong Kong corridor when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Direction of curbside spillover.
    #[arg(long, global = true, value_enum, default_value_t = Direction::Bi)]
    spillover: Direction,
    /// Allow late arrival (needs `gamma`).
    #[arg(long, global = true)]
    late: bool,
    /// Simulation step in hours.
    #[arg(long, global = true, default_value_t = 1e-3)]
    dt: f64,
    /// Relative tolerance for simulated costs.
    #[arg(long, global = true, default_value_t = 1e-2)]
    tol: f64,
    /// Output file for CSV data; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    Uni,
    Bi,
}

impl From<Direction> for Spillover {
    fn from(d: Direction) -> Self {
        match d {
            Direction::Uni => Spillover::Uni,
            Direction::Bi => Spillover::Bi,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    /// Scenario of each (s_curb_rv, s_curb_pv) point.
    Map,
    /// No-toll and priced metrics.
    Metrics,
}

#[derive(Subcommand)]
enum Command {
    /// Check the parameters and list warnings.
    Validate,
    /// Report the scenario and its thresholds.
    Classify,
    /// Solve the user equilibrium.
    Solve {
        /// Write cumulative curves and waits as CSV.
        #[arg(long)]
        curves: bool,
    },
    /// Simulate the equilibrium schedule and write queue lengths as CSV.
    Simulate,
    /// Optimal time-varying pricing and the social optimum.
    Price,
    /// Verify the equilibrium (or, with --priced, the optimum).
    Verify {
        #[arg(long)]
        priced: bool,
    },
    /// Parameter sweep written as CSV.
    Sweep {
        #[arg(long, value_enum, default_value_t = SweepKind::Metrics)]
        kind: SweepKind,
        /// Axis as NAME:START:END:POINTS; repeat for a second axis.
        #[arg(long = "axis", required = true)]
        axes: Vec<String>,
        /// Fixed override as NAME=VALUE; repeatable.
        #[arg(long = "set")]
        sets: Vec<String>,
    },
    /// Hong Kong case study beside the published results.
    CaseHk,
}

/// Failure with its exit code: 1 for bad input, 2 when the parameters fall
/// outside what a closed form covers.
struct Failure(u8, anyhow::Error);

fn input<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure(1, e.into())
}

fn regime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure(2, e.into())
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn load_raw(cli: &Cli) -> Result<RawParams, Failure> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(input)?,
        None => HK_CONFIG.to_string(),
    };
    parse_raw(&text).context("parsing config").map_err(input)
}

fn load(cli: &Cli) -> Result<ModelParams, Failure> {
    let p = build_parameters(&load_raw(cli)?).map_err(input)?;
    if cli.late {
        p.require_gamma().map_err(input)?;
        Ok(p)
    } else {
        Ok(p.without_late())
    }
}

fn sink(cli: &Cli) -> Result<Box<dyn Write>, Failure> {
    Ok(match &cli.out {
        Some(path) => Box::new(
            File::create(path).with_context(|| format!("creating {}", path.display())).map_err(input)?,
        ),
        None => Box::new(io::stdout()),
    })
}

fn write_rows<const N: usize>(cli: &Cli, header: &[&str], rows: &[[f64; N]]) -> Outcome {
    let table = Table {
        header: header.iter().map(|h| h.to_string()).collect(),
        rows: rows.iter().map(|r| r.iter().map(|x| x.to_string()).collect()).collect(),
    };
    table.write_csv(sink(cli)?).map_err(input)
}

fn run(cli: &Cli) -> Outcome {
    let spill: Spillover = cli.spillover.into();
    match &cli.command {
        Command::Validate => {
            let p = load(cli)?;
            println!(
                "valid: c^R = {}, u^P = {}, u^P - c^R = {}",
                p.rv_fixed_cost(),
                p.pv_fixed_cost(),
                p.cost_gap()
            );
            for w in p.warnings() {
                println!("warning: {w}");
            }
        }
        Command::Classify => {
            let p = load(cli)?;
            let s = classify(&p, spill);
            println!("scenario {s}");
            println!("initial phase {:?}", tandem_curb::initial_phase_regime(&p));
            println!("utilization {:?}", tandem_curb::classify_utilization(&p));
            println!("rv-only threshold {}", tandem_curb::classify::rv_only_threshold(&p));
            println!("separation threshold {}", tandem_curb::classify::separation_threshold(&p));
            println!("co-departure total {}", tandem_curb::classify::co_departure_total(&p, spill));
        }
        Command::Solve { curves } => {
            let p = load(cli)?;
            let sol: Box<dyn Equilibrium> = if cli.late {
                let s = solve_late(&p, spill).map_err(regime)?;
                print_windows(&p, &s);
                println!(
                    "t_tilde RV {}  t_tilde PV {}  highway clears {}",
                    p.clock(s.t_tilde_rv),
                    p.clock(s.t_tilde_pv),
                    p.clock(s.t_e)
                );
                Box::new(s)
            } else {
                let s = solve(&p, spill).map_err(regime)?;
                print_windows(&p, &s);
                for d in &s.diagnostics {
                    println!("note: {d}");
                }
                Box::new(s)
            };
            let m = tandem_curb::metrics(sol.as_ref(), &p);
            println!("N^R {:.2}  N^P {:.2}  C {:.4}  SC {:.2}", m.n_rv, m.n_pv, m.cost(), m.social_cost);
            println!("TQT highway {:.3}  RV curb {:.3}  PV curb {:.3}", m.tqt[0], m.tqt[1], m.tqt[2]);
            if *curves {
                let c = tandem_curb::propagate(sol.profile(), &p, spill).curves();
                let header = ["time_h", "A_H", "D_H", "A_CR", "D_CR", "A_CP", "D_CP", "w_H", "w_CR", "w_CP"];
                write_rows(cli, &header, &c.rows(p.preferred_arrival()))?;
            }
        }
        Command::Simulate => {
            let p = load(cli)?;
            let profile = if cli.late {
                solve_late(&p, spill).map_err(regime)?.profile
            } else {
                solve(&p, spill).map_err(regime)?.profile
            };
            let sim = simulate(&profile, &p, spill, cli.dt).map_err(input)?;
            let q = sim.max_queues();
            eprintln!("max queues: highway {:.2}  RV curb {:.2}  PV curb {:.2}", q[0], q[1], q[2]);
            write_rows(cli, &tandem_curb::SimulationResult::CSV_HEADER, &sim.rows())?;
        }
        Command::Price => {
            let p = load(cli)?;
            let s = if cli.late { optimal_pricing_late(&p) } else { optimal_pricing(&p) }.map_err(regime)?;
            let end = |t: Option<f64>| t.unwrap_or(0.0);
            println!("regime {:?}", s.regime);
            println!(
                "RV [{}, {}]  PV [{}, {}]",
                p.clock(s.so_t0_rv),
                p.clock(end(s.so_t1_rv)),
                p.clock(s.so_t0_pv),
                p.clock(end(s.so_t1_pv))
            );
            println!("N^R {:.2}  N^P {:.2}  C {:.4}", s.so_n_rv, s.so_n_pv, s.so_cost);
            println!(
                "fee RV [{:.2}, {:.2}]  PV [{:.2}, {:.2}]",
                s.base_fee,
                s.fee_cap(Mode::Rv),
                s.base_fee,
                s.fee_cap(Mode::Pv)
            );
            println!("SC {:.2}  revenue {:.2}", tandem_curb::social_optimum_cost(&s, &p), s.revenue());
            if cli.out.is_some() {
                let times = tandem_curb::curve::merge_times(&[&s.fee_rv, &s.fee_pv]);
                let rows: Vec<[f64; 3]> = times
                    .iter()
                    .map(|&t| [t + p.preferred_arrival(), s.fee_rv.eval(t), s.fee_pv.eval(t)])
                    .collect();
                write_rows(cli, &["time_h", "fee_rv", "fee_pv"], &rows)?;
            }
        }
        Command::Verify { priced } => {
            let p = load(cli)?;
            let tol = Tolerances { oracle_rel: cli.tol, dt: cli.dt, ..Tolerances::default() };
            let report = if *priced {
                let s =
                    if cli.late { optimal_pricing_late(&p) } else { optimal_pricing(&p) }.map_err(regime)?;
                verify_optimum(&s, &p, spill, &tol)
            } else if cli.late {
                verify_equilibrium(&solve_late(&p, spill).map_err(regime)?, &p, &tol)
            } else {
                verify_equilibrium(&solve(&p, spill).map_err(regime)?, &p, &tol)
            }
            .map_err(input)?;
            print!("{}", report.render());
            if cli.out.is_some() {
                let table = Table {
                    header: ["check", "value", "tolerance", "passed"].map(String::from).to_vec(),
                    rows: report
                        .checks
                        .iter()
                        .map(|c| {
                            vec![
                                c.name.to_string(),
                                c.value.to_string(),
                                c.tolerance.to_string(),
                                c.passed.to_string(),
                            ]
                        })
                        .collect(),
                };
                table.write_csv(sink(cli)?).map_err(input)?;
            }
            if !report.passed() {
                return Err(regime(anyhow!("verification failed")));
            }
        }
        Command::Sweep { kind, axes, sets } => {
            let mut base = load_raw(cli)?;
            if !cli.late {
                base.gamma = None;
            }
            for s in sets {
                let (name, value) =
                    s.split_once('=').ok_or_else(|| input(anyhow!("expected NAME=VALUE, got `{s}`")))?;
                set_param(&mut base, name, parse_num(value)?).map_err(input)?;
            }
            let axes = axes.iter().map(|a| parse_axis(a)).collect::<Result<Vec<_>, _>>()?;
            let spec = SweepSpec { base, axes, spillover: spill, late: cli.late };
            let table = match kind {
                SweepKind::Map => scenario_map_table(&spec, &sweep_scenario_map(&spec).map_err(input)?),
                SweepKind::Metrics => metrics_table(&spec, &sweep_metrics(&spec).map_err(input)?),
            };
            table.write_csv(sink(cli)?).map_err(input)?;
        }
        Command::CaseHk => {
            let p = if cli.config.is_some() { load(cli)? } else { hong_kong() };
            let report = run_case(&p, spill).map_err(regime)?;
            print!("{}", report.render());
        }
    }
    Ok(())
}

fn print_windows<E: Equilibrium + ?Sized>(p: &ModelParams, sol: &E) {
    println!("scenario {}", sol.label());
    for m in Mode::BOTH {
        match sol.window(m) {
            Some((a, b)) => println!("{} [{}, {}]", m.label(), p.clock(a), p.clock(b)),
            None => println!("{} unused", m.label()),
        }
    }
}

fn parse_num(s: &str) -> Result<f64, Failure> {
    s.trim().parse().with_context(|| format!("`{s}` is not a number")).map_err(input)
}

fn parse_axis(s: &str) -> Result<Axis, Failure> {
    let parts: Vec<&str> = s.split(':').collect();
    let [name, start, end, points] = parts[..] else {
        return Err(input(anyhow!("axis `{s}` must be NAME:START:END:POINTS")));
    };
    let points: usize = points.parse().with_context(|| format!("bad point count in `{s}`")).map_err(input)?;
    Ok(Axis::new(name, parse_num(start)?, parse_num(end)?, points))
}
