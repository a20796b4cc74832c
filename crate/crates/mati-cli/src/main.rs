//! `mati` — guaranteed transmission-interval analysis from the command line.
//!
//! Human-readable output prints numbers with four decimal places; JSON and
//! CSV artifacts keep full precision. Identical invocations produce
//! byte-identical artifacts. `RAYON_NUM_THREADS` bounds the worker pool used
//! by grid verification; everything else is single-threaded.

use clap::{Parser, Subcommand};
use mati_core::bound::{mati_bound, phi_flow, phi_transit_time, GainTriple};
use mati_core::cert::{certificate_to_mati, verify_certificate};
use mati_core::lmi::{baseline_carnevale, sweep_k};
use mati_core::oracle::{
    empirical_mati_decay, empirical_mati_monodromy, unit_initial_conditions, DecayTest,
    EmpiricalOutcome,
};
use mati_core::protocol::ProtocolKind;
use mati_core::schema::{load_certificate, load_scenario, load_system, sweep_to_csv, trace_to_csv,
    SweepSummaryRow};
use mati_core::sim::{simulate, NcsDynamics};
use mati_core::{Error, Result};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "mati",
    version,
    about = "Certified maximum-allowable-transmission-interval analysis",
    long_about = "Computes guaranteed transmission intervals for networked control loops, \
reproduces the certification sweep over the gain-relaxation grid, simulates hybrid \
trajectories, and cross-checks every guarantee against independent oracles.\n\n\
Human-readable numbers are printed with four decimal places; JSON/CSV artifacts keep \
full precision. Set RAYON_NUM_THREADS to bound the verification worker pool."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Guaranteed interval for a gain triple (L, gamma, lambda).
    Bound {
        /// Growth rate of the error measure along flows.
        #[arg(long = "L")]
        l: f64,
        /// Gain from the error measure to the auxiliary output.
        #[arg(long)]
        gamma: f64,
        /// Protocol contraction factor in [0, 1).
        #[arg(long)]
        lambda: f64,
        /// Also integrate the clock ODE and print the transit-time cross-check.
        #[arg(long)]
        oracle: bool,
        /// Emit full-precision JSON instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Integrate the clock ODE and emit (tau, phi) samples as CSV.
    Phi {
        #[arg(long = "L")]
        l: f64,
        #[arg(long)]
        gamma: f64,
        /// Initial clock value (lambda^-1 for a protocol with contraction lambda).
        #[arg(long)]
        phi0: f64,
        #[arg(long = "tau-end")]
        tau_end: f64,
        /// Output sample spacing (integration refines its own substeps).
        #[arg(long, default_value_t = 0.001)]
        step: f64,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Baseline and relaxation-sweep certification table over delta values.
    LinearSweep {
        /// System file ({A,E,C,F} or {A_P,B_P,K} plus protocol).
        #[arg(long)]
        system: PathBuf,
        /// Comma-separated delta list; overrides the system file. An empty
        /// string selects no rows.
        #[arg(long)]
        deltas: Option<String>,
        /// Relaxation grid spacing in (0, 1); overrides the system file.
        #[arg(long = "grid-step")]
        grid_step: Option<f64>,
        /// Write the full-precision CSV table here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Emit full-precision JSON rows instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Simulate a scenario file and report the stability verdict.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Write the full trace as CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Verify a polynomial certificate file and convert it to an interval.
    VerifyCert {
        #[arg(long)]
        certificate: PathBuf,
        /// Half-width of the verification box.
        #[arg(long = "box-half-width", default_value_t = 5.0)]
        box_half_width: f64,
        /// Grid points per axis.
        #[arg(long = "grid", default_value_t = 501)]
        grid: usize,
        #[arg(long)]
        json: bool,
    },
    /// Locate the empirical stability boundary over constant periods.
    Empirical {
        /// System file; round robin uses the monodromy radius, other
        /// protocols a seeded decay test.
        #[arg(long)]
        system: PathBuf,
        /// Bracket low end (must be stable).
        #[arg(long)]
        lo: f64,
        /// Bracket high end.
        #[arg(long)]
        hi: f64,
        /// Unit initial conditions for the decay test.
        #[arg(long, default_value_t = 20)]
        count: usize,
        /// Seed for the initial-condition sampler.
        #[arg(long, default_value_t = 11)]
        seed: u64,
        #[arg(long, default_value_t = 200.0)]
        horizon: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        /// Norm ratio below which a run counts as settled.
        #[arg(long, default_value_t = 1e-6)]
        ratio: f64,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 0 success, 2 usage, 3 ingestion, 4 solver/convergence, 5 verification fail.
/// (Usage errors from flag parsing exit 2 via clap before `run` is reached.)
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Domain(_) => 2,
        Error::Io { .. } | Error::Input { .. } => 3,
        Error::NoCertificate(_) | Error::Convergence(_) | Error::SolverStall { .. } => 4,
        Error::CertificationFailed(_) => 5,
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Bound { l, gamma, lambda, oracle, json } => cmd_bound(l, gamma, lambda, oracle, json),
        Cmd::Phi { l, gamma, phi0, tau_end, step, out } => {
            cmd_phi(l, gamma, phi0, tau_end, step, out)
        }
        Cmd::LinearSweep { system, deltas, grid_step, out, json } => {
            cmd_linear_sweep(&system, deltas.as_deref(), grid_step, out.as_deref(), json)
        }
        Cmd::Simulate { scenario, trace, json } => cmd_simulate(&scenario, trace.as_deref(), json),
        Cmd::VerifyCert { certificate, box_half_width, grid, json } => {
            cmd_verify_cert(&certificate, box_half_width, grid, json)
        }
        Cmd::Empirical { system, lo, hi, count, seed, horizon, step, ratio, json } => {
            cmd_empirical(&system, lo, hi, count, seed, horizon, step, ratio, json)
        }
    }
}

fn write_artifact(path: &std::path::Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents)
        .map_err(|source| Error::Io { path: path.display().to_string(), source })
}

fn cmd_bound(l: f64, gamma: f64, lambda: f64, oracle: bool, json: bool) -> Result<()> {
    let g = GainTriple::new(l, gamma, lambda)?;
    let bound = mati_bound(g);
    let transit = if oracle { Some(phi_transit_time(g)?) } else { None };
    if json {
        let payload = serde_json::json!({
            "gains": g,
            "bound": bound,
            "oracle_transit_time": transit,
        });
        println!("{}", serde_json::to_string_pretty(&payload).expect("serializable"));
        return Ok(());
    }
    println!("tau_mati  {:.4}   (regime {:?}, r {:.4})", bound.value, bound.regime, bound.r);
    if let Some(t) = transit {
        println!("oracle    {:.4}   (|difference| {:.1e})", t, (t - bound.value).abs());
    }
    Ok(())
}

fn cmd_phi(
    l: f64,
    gamma: f64,
    phi0: f64,
    tau_end: f64,
    step: f64,
    out: Option<PathBuf>,
) -> Result<()> {
    let traj = phi_flow(l, gamma, phi0, tau_end, step)?;
    let mut csv = String::from("tau,phi\n");
    for (tau, phi) in &traj.samples {
        csv.push_str(&format!("{tau},{phi}\n"));
    }
    match out {
        Some(path) => write_artifact(&path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn parse_deltas(flag: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for part in flag.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let v: f64 = part
            .parse()
            .map_err(|_| Error::domain(format!("cannot parse delta value '{part}'")))?;
        if !(v > 0.0) {
            return Err(Error::domain(format!("deltas must be positive, got {v}")));
        }
        out.push(v);
    }
    Ok(out)
}

fn cmd_linear_sweep(
    system: &std::path::Path,
    deltas_flag: Option<&str>,
    grid_step_flag: Option<f64>,
    out: Option<&std::path::Path>,
    json: bool,
) -> Result<()> {
    let config = load_system(system)?;
    let deltas = match deltas_flag {
        Some(flag) => parse_deltas(flag)?,
        None => config.deltas.clone().ok_or_else(|| {
            Error::domain("no deltas given: pass --deltas or list them in the system file")
        })?,
    };
    let grid_step = grid_step_flag.or(config.grid_step).unwrap_or(0.001);

    let mut rows = Vec::new();
    for &delta in &deltas {
        let base = baseline_carnevale(&config.sys, &config.proto, delta).map_err(|e| {
            Error::NoCertificate(format!("delta = {delta}, baseline: {e}"))
        })?;
        let base_cert = base.cert.as_ref().expect("baseline row always carries its certificate");
        let sweep = sweep_k(&config.sys, &config.proto, delta, grid_step)
            .map_err(|e| Error::NoCertificate(format!("delta = {delta}, sweep: {e}")))?;
        let (best_row, best_cert) = sweep.best();
        rows.push(SweepSummaryRow {
            delta,
            tau_baseline: base_cert.tau_k,
            tau_best: best_cert.tau_k,
            k_best: best_row.k,
            improvement_pct: 100.0 * (best_cert.tau_k - base_cert.tau_k) / base_cert.tau_k,
        });
    }

    if let Some(path) = out {
        write_artifact(path, &sweep_to_csv(&rows))?;
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&rows).expect("serializable"));
        return Ok(());
    }
    println!(
        "{:>8}  {:>12}  {:>10}  {:>8}  {:>11}",
        "delta", "tau_baseline", "tau_best", "k_best", "improvement"
    );
    for r in &rows {
        println!(
            "{:>8.4}  {:>12.4}  {:>10.4}  {:>8.4}  {:>10.1}%",
            r.delta, r.tau_baseline, r.tau_best, r.k_best, r.improvement_pct
        );
    }
    Ok(())
}

fn cmd_simulate(
    scenario: &std::path::Path,
    trace_out: Option<&std::path::Path>,
    json: bool,
) -> Result<()> {
    let sc = load_scenario(scenario)?;
    let trace = simulate(&sc.dynamics, &sc.proto, &sc.schedule, &sc.x0, &sc.e0, sc.step)?;
    let settle = trace.first_time_below(1e-6);
    let verdict = if trace.diverged {
        "diverged"
    } else if settle.is_some() {
        "stable"
    } else {
        "inconclusive"
    };
    if let Some(path) = trace_out {
        write_artifact(path, &trace_to_csv(&trace))?;
    }
    if json {
        let payload = serde_json::json!({
            "verdict": verdict,
            "settle_time": settle,
            "decay_rate": trace.decay_rate(),
            "jumps": trace.jumps.len(),
            "max_interval": trace.max_interval(),
            "final_norm": trace.final_norm(),
            "initial_norm": trace.initial_norm,
        });
        println!("{}", serde_json::to_string_pretty(&payload).expect("serializable"));
        return Ok(());
    }
    println!("verdict       {verdict}");
    match settle {
        Some(t) => println!("settle_time   {t:.4}"),
        None => println!("settle_time   -"),
    }
    match trace.decay_rate() {
        Some(r) => println!("decay_rate    {r:.4}"),
        None => println!("decay_rate    -"),
    }
    println!("jumps         {}", trace.jumps.len());
    println!("max_interval  {:.4}", trace.max_interval());
    println!("final_norm    {:.4e}", trace.final_norm());
    Ok(())
}

fn cmd_verify_cert(
    certificate: &std::path::Path,
    box_half_width: f64,
    grid: usize,
    json: bool,
) -> Result<()> {
    let cert = load_certificate(certificate)?;
    let report = verify_certificate(&cert, box_half_width, grid)?;
    let bound = if report.pass {
        Some(certificate_to_mati(&cert, &report)?)
    } else {
        None
    };
    if json {
        let payload = serde_json::json!({
            "report": report,
            "bound": bound,
        });
        println!("{}", serde_json::to_string_pretty(&payload).expect("serializable"));
    } else {
        println!("pass        {}", report.pass);
        println!("min_margin  {:.4e}", report.min_margin);
        println!(
            "worst       (x {:.4}, e {:.4}, d {:.0}, d2 {:.0})",
            report.worst.x, report.worst.e, report.worst.d, report.worst.d2
        );
        println!("radial_ok   {}", report.radial_ok);
        if let Some(b) = &bound {
            println!("tau_mati    {:.4}   (regime {:?}, r {:.4})", b.value, b.regime, b.r);
        }
    }
    if !report.pass {
        // Reuse the conversion's refusal so the located witness reaches stderr.
        certificate_to_mati(&cert, &report)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_empirical(
    system: &std::path::Path,
    lo: f64,
    hi: f64,
    count: usize,
    seed: u64,
    horizon: f64,
    step: f64,
    ratio: f64,
    json: bool,
) -> Result<()> {
    let config = load_system(system)?;
    let outcome = if config.proto.kind == ProtocolKind::RoundRobin {
        let dims = config.proto.node_dims(config.sys.n_e())?;
        empirical_mati_monodromy(&config.sys, &dims, lo, hi)?
    } else {
        let test = DecayTest {
            ics: unit_initial_conditions(config.sys.n_x(), config.sys.n_e(), count, seed),
            dynamics: NcsDynamics::Linear(config.sys),
            proto: config.proto,
            horizon,
            step,
            ratio,
        };
        empirical_mati_decay(&test, lo, hi)?
    };
    let boundary = match outcome {
        EmpiricalOutcome::Boundary(b) => Some(b),
        EmpiricalOutcome::NoBoundaryInBracket => None,
    };
    if json {
        let payload = serde_json::json!({ "lo": lo, "hi": hi, "boundary": boundary });
        println!("{}", serde_json::to_string_pretty(&payload).expect("serializable"));
        return Ok(());
    }
    match boundary {
        Some(b) => println!("boundary  {b:.4}"),
        None => println!("no boundary in [{lo:.4}, {hi:.4}]"),
    }
    Ok(())
}
