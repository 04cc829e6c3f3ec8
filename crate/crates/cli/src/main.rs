use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use qutrack_core::coherence::{steady_state_coherence, SteadyState};
use qutrack_core::config::{figure_json, ExperimentConfig, FrameConfig};
use qutrack_core::profiles::{crossing_times, Crossings, Population};
use qutrack_core::propagate::{
    propagate_lab, propagate_rwa, tracking_errors, write_trajectory_csv, Trajectory,
};
use qutrack_core::reachability::{accessibility_map, asymptotic_curve};
use qutrack_core::synthesis::{sample_waveform, synthesize, write_waveform_csv, ControlField};
use qutrack_core::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_TOLERANCE: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "qutrack",
    version,
    about = "Tracking-control synthesis and verification for a noisy qubit"
)]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true, conflicts_with = "figure")]
    config: Option<PathBuf>,
    /// Output directory [default: outputs.directory from the config, else ./out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for reachability maps [default: available cores].
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Use a bundled figure scenario (1-9) instead of --config.
    #[arg(long, global = true)]
    figure: Option<u32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Synthesize the control field and write the waveform.
    Synth,
    /// Synthesize, propagate and compare against the prescription.
    Track,
    /// Synthesize and propagate, writing the trajectory only.
    Propagate,
    /// Reachability map over (Pi, Pf).
    Reach,
    /// Asymptotic coherence and steady-state table over P.
    Steady,
    /// Coherence C(t) implied by the population profile.
    Coherence,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Track => "track",
            Command::Propagate => "propagate",
            Command::Reach => "reach",
            Command::Steady => "steady",
            Command::Coherence => "coherence",
        }
    }
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Infeasible(_) | Error::Singularity { .. } => EXIT_INFEASIBLE,
            Error::Config(_)
            | Error::Domain { .. }
            | Error::Profile(_)
            | Error::InfeasibleState(_) => EXIT_CONFIG,
            Error::Capability
            | Error::Quadrature { .. }
            | Error::Integration { .. }
            | Error::Io(_) => EXIT_FAILURE,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(EXIT_FAILURE, format!("i/o error: {e}"))
    }
}

type CliResult<T> = Result<T, Failure>;

/// What one (possibly swept) run produced.
struct RunOutcome {
    label: String,
    files: Vec<String>,
    summary: Value,
    code: u8,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let text = match (&cli.config, cli.figure) {
        (Some(path), None) => fs::read_to_string(path).map_err(|e| {
            Failure::new(EXIT_CONFIG, format!("cannot read {}: {e}", path.display()))
        })?,
        (None, Some(n)) => figure_json(n)
            .ok_or_else(|| Failure::new(EXIT_CONFIG, format!("no bundled figure {n} (1-9)")))?
            .to_string(),
        _ => {
            return Err(Failure::new(
                EXIT_CONFIG,
                "give exactly one of --config or --figure",
            ))
        }
    };
    Ok(ExperimentConfig::from_json(&text)?)
}

fn run(cli: &Cli) -> CliResult<u8> {
    let cfg = load_config(cli)?;
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Failure::new(EXIT_CONFIG, "--workers must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::new(EXIT_FAILURE, e.to_string()))?;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.outputs.directory.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out)?;

    let runs = cfg.expand_sweep();
    let mut outcomes = Vec::with_capacity(runs.len());
    let mut code = 0u8;
    for (label, run_cfg) in &runs {
        let outcome = match run_one(cli.command, run_cfg, label, &out) {
            Ok(o) => o,
            Err(f) => {
                eprintln!("error{}: {}", tag(label), f.message);
                RunOutcome {
                    label: label.clone(),
                    files: Vec::new(),
                    summary: json!({ "error": f.message }),
                    code: f.code,
                }
            }
        };
        code = code.max(outcome.code);
        outcomes.push(outcome);
    }
    write_manifest(&out, cli.command, &cfg, &outcomes)?;
    Ok(code)
}

fn tag(label: &str) -> String {
    if label.is_empty() {
        String::new()
    } else {
        format!(" [{label}]")
    }
}

fn file_name(stem: &str, label: &str, ext: &str) -> String {
    if label.is_empty() {
        format!("{stem}.{ext}")
    } else {
        format!("{stem}_{label}.{ext}")
    }
}

fn create(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn run_one(cmd: Command, cfg: &ExperimentConfig, label: &str, out: &Path) -> CliResult<RunOutcome> {
    let mut files = Vec::new();
    let mut code = 0;
    let summary = match cmd {
        Command::Synth => {
            let field = build_field(cfg)?;
            let rows = sample_waveform(&field, cfg.numerics.n_samples)?;
            let name = file_name("waveform", label, "csv");
            write_waveform_csv(&rows, create(out, &name)?)?;
            files.push(name);
            let peak = rows
                .iter()
                .max_by(|a, b| a.envelope.abs().total_cmp(&b.envelope.abs()))
                .expect("n_samples >= 2");
            let crossings = crossing_summary(field.population());
            println!("feasible{}: yes", tag(label));
            println!(
                "envelope peak |A| = {:.6e} at t = {:.6}",
                peak.envelope.abs(),
                peak.t
            );
            println!("crossing times: {crossings}");
            if field.forced() {
                println!("warning: prescription violations overridden by numerics.force");
            }
            json!({
                "feasible": true,
                "forced": field.forced(),
                "envelope_peak": peak.envelope.abs(),
                "envelope_peak_time": peak.t,
                "crossings": crossings,
                "min_C_sq": field.coherence().min_csq(),
            })
        }
        Command::Track | Command::Propagate => {
            let field = build_field(cfg)?;
            let traj = propagate(cfg, &field)?;
            let name = file_name("trajectory", label, "csv");
            write_trajectory_csv(&traj, create(out, &name)?)?;
            files.push(name);
            let last = *traj.last().expect("trajectory has the initial state");
            if cmd == Command::Propagate {
                println!(
                    "final state{}: rho00 = {:.16e}, rho01 = {:.16e} {:+.16e}i",
                    tag(label),
                    last.rho00,
                    last.rho01_re,
                    last.rho01_im
                );
                json!({ "steps": traj.len() - 1, "final_rho00": last.rho00, "final_C": last.coherence() })
            } else {
                let phase = cfg.phase()?;
                let err = tracking_errors(&traj, field.population(), &phase);
                let pass = err.max_population <= cfg.numerics.tol_p
                    && err.max_phase <= cfg.numerics.tol_phi;
                let report = json!({
                    "frame": frame_name(cfg.numerics.frame),
                    "max_population_error": err.max_population,
                    "max_phase_error": err.max_phase,
                    "final_population_error": err.final_population,
                    "final_phase_error": err.final_phase,
                    "phase_defined_samples": err.phase_samples,
                    "samples": traj.len(),
                    "tol_P": cfg.numerics.tol_p,
                    "tol_Phi": cfg.numerics.tol_phi,
                    "pass": pass,
                });
                let name = file_name("report", label, "json");
                let mut w = create(out, &name)?;
                writeln!(
                    w,
                    "{}",
                    serde_json::to_string_pretty(&report).expect("json")
                )?;
                files.push(name);
                println!(
                    "tracking{} ({}): max|P_num - P| = {:.6e} (tol {}), max phase error = {:.6e} rad (tol {}) -> {}",
                    tag(label),
                    frame_name(cfg.numerics.frame),
                    err.max_population,
                    cfg.numerics.tol_p,
                    err.max_phase,
                    cfg.numerics.tol_phi,
                    if pass { "PASS" } else { "FAIL" }
                );
                if !pass {
                    code = EXIT_TOLERANCE;
                }
                report
            }
        }
        Command::Reach => {
            let rates = cfg.rates()?;
            let n = &cfg.numerics;
            let grid = accessibility_map(&rates, cfg.initial.c0, cfg.t_f, n.n_grid, n.n_t)?;
            if cfg.outputs.wants("csv") {
                let name = file_name("reach", label, "csv");
                grid.write_csv(create(out, &name)?)?;
                files.push(name);
            }
            if cfg.outputs.wants("pgm") {
                let name = file_name("reach", label, "pgm");
                grid.write_pgm(create(out, &name)?)?;
                files.push(name);
            }
            let counts: Vec<usize> = (0..4u8)
                .map(|c| {
                    grid.cells
                        .iter()
                        .filter(|cell| cell.class.code() == c)
                        .count()
                })
                .collect();
            println!(
                "reach{}: {}x{} cells; invalid {}, inaccessible {}, unitary only {}, noise accessible {} ({} outside the unitary region)",
                tag(label),
                grid.n(),
                grid.n(),
                counts[0],
                counts[1],
                counts[2],
                counts[3],
                grid.dark_outside_light()
            );
            json!({
                "metadata": grid.metadata,
                "counts": {
                    "invalid_initial": counts[0],
                    "unitary_inaccessible": counts[1],
                    "unitary_only": counts[2],
                    "noise_accessible": counts[3],
                },
                "noise_accessible_outside_unitary": grid.dark_outside_light(),
            })
        }
        Command::Steady => {
            let rates = cfg.rates()?;
            if rates.big_gamma == 0.0 || rates.gamma_total == 0.0 {
                return Err(Failure::new(
                    EXIT_INFEASIBLE,
                    "no nontrivial steady coherence without thermal noise (Gamma = 0)",
                ));
            }
            let curve = asymptotic_curve(&rates, cfg.numerics.n_points)?;
            let name = file_name("steady", label, "csv");
            let mut w = create(out, &name)?;
            writeln!(w, "P,C_inf,C_inf_sq,required_C0,k,feasible")?;
            let mut feasible_count = 0;
            for pt in &curve {
                let (c0, k, ok) = match steady_state_coherence(pt.p, &rates)? {
                    SteadyState::Steady { c0, k } => (c0, k.value(), 1),
                    SteadyState::Infeasible { .. } => (f64::NAN, f64::NAN, 0),
                };
                feasible_count += ok;
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                    pt.p, pt.re_c, pt.c_sq, c0, k, ok
                )?;
            }
            files.push(name);
            let (r1, r2) = (0.5, rates.thermal_population());
            println!(
                "steady{}: C_inf^2 vanishes at P = {r1} and P = {r2:.16e}; {feasible_count} of {} grid points admit a steady state",
                tag(label),
                curve.len()
            );
            json!({ "roots": [r1, r2], "feasible_points": feasible_count, "points": curve.len() })
        }
        Command::Coherence => {
            let sol = cfg.coherence()?;
            let name = file_name("coherence", label, "csv");
            let mut w = create(out, &name)?;
            writeln!(w, "t,P,C,C_sq")?;
            let n = cfg.numerics.n_samples;
            for i in 0..n {
                let t = cfg.t_f * i as f64 / (n - 1) as f64;
                let csq = sol.csq(t)?;
                let p = sol.profile().value_and_rate(t).0;
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e},{:.16e}",
                    t,
                    p,
                    csq.max(0.0).sqrt(),
                    csq
                )?;
            }
            files.push(name);
            println!(
                "coherence{}: min C^2 = {:.6e} at t = {} ({})",
                tag(label),
                sol.min_csq(),
                sol.argmin(),
                if sol.feasible() {
                    "feasible"
                } else {
                    "infeasible"
                }
            );
            json!({ "min_C_sq": sol.min_csq(), "argmin": sol.argmin(), "feasible": sol.feasible() })
        }
    };
    Ok(RunOutcome {
        label: label.to_string(),
        files,
        summary,
        code,
    })
}

fn frame_name(f: FrameConfig) -> &'static str {
    match f {
        FrameConfig::Lab => "lab",
        FrameConfig::Rwa => "rwa",
    }
}

fn crossing_summary<P: Population>(p: &P) -> String {
    match crossing_times(p, 1e-9) {
        Crossings::WholeInterval => "P = 1/2 on the whole interval".into(),
        Crossings::At(v) if v.is_empty() => "none".into(),
        Crossings::At(v) => v
            .iter()
            .map(|t| format!("{t}"))
            .collect::<Vec<_>>()
            .join(", "),
    }
}

fn build_field(cfg: &ExperimentConfig) -> CliResult<ControlField> {
    let rates = cfg.rates()?;
    let coherence = cfg.coherence()?;
    Ok(synthesize(
        cfg.phase()?,
        coherence,
        cfg.params()?,
        &rates,
        cfg.synthesis_options(),
    )?)
}

fn propagate(cfg: &ExperimentConfig, field: &ControlField) -> CliResult<Trajectory> {
    let params = cfg.params()?;
    let rates = cfg.rates()?;
    let rho0 = cfg.initial_state()?;
    Ok(match cfg.numerics.frame {
        FrameConfig::Lab => propagate_lab(&params, &rates, field, &rho0, cfg.t_f, cfg.lab_dt()?)?,
        FrameConfig::Rwa => propagate_rwa(&params, &rates, field, &rho0, cfg.t_f, cfg.rwa_dt())?,
    })
}

fn write_manifest(
    out: &Path,
    cmd: Command,
    cfg: &ExperimentConfig,
    runs: &[RunOutcome],
) -> CliResult<()> {
    let manifest = json!({
        "tool": "qutrack",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cmd.name(),
        "config": serde_json::to_value(cfg).expect("config serializes"),
        "runs": runs.iter().map(|r| json!({
            "label": r.label,
            "files": r.files,
            "exit_code": r.code,
            "summary": r.summary,
        })).collect::<Vec<_>>(),
    });
    let mut w = create(out, "manifest.json")?;
    writeln!(
        w,
        "{}",
        serde_json::to_string_pretty(&manifest).expect("json")
    )?;
    Ok(())
}
