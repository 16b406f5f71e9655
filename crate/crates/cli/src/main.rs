use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime};

use clap::{Args, Parser, Subcommand};
use optochaos::output::{emit_outputs, read_manifest, Manifest, RunMeta};
use optochaos::scenarios::{catalog, preset};
use optochaos::si::{si_to_dimensionless, SIParams};
use optochaos::{execute, parse_config, AnalysisKind, Error, Exec, Result, RunRequest};

#[derive(Parser)]
#[command(name = "optochaos", version, about = "Chaos in a four-mirror optomechanical cavity with driven end mirrors")]
struct Cli {
    /// Worker threads for independent initial conditions (1 = sequential).
    #[arg(long, global = true, env = "OPTOCHAOS_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write trajectory.csv.
    Simulate(RunArgs),
    /// Stroboscopic sections over a line of initial conditions (section.csv).
    Poincare(RunArgs),
    /// Lyapunov spectrum and KS entropy time series (lyapunov.csv).
    Lyapunov(RunArgs),
    /// Chaos fraction against drive amplitude (sweep.csv, sweep_detail.csv).
    Sweep(RunArgs),
    /// Named presets.
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
    /// Convert laboratory SI parameters into dimensionless model parameters.
    ConvertSi {
        /// JSON file with SI parameters; the built-in reference set if absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write si_conversion.json into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the request recorded in a manifest.json.
    Replay {
        manifest: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ScenarioAction {
    /// Print every preset id with its analysis and notes.
    List,
    /// Run a preset with its own analysis.
    Run {
        id: String,
        #[command(flatten)]
        flags: RunFlags,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset id, shorthand for a config of {"preset": ID}.
    #[arg(long)]
    preset: Option<String>,
    #[command(flatten)]
    flags: RunFlags,
}

#[derive(Args)]
struct RunFlags {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Run length (trajectory horizon, section horizon or Lyapunov t_total).
    #[arg(long)]
    horizon: Option<f64>,
    /// Adaptive relative tolerance; the absolute tolerance is tol/100.
    #[arg(long)]
    tol: Option<f64>,
    /// Seed for Gaussian initial conditions (section and sweep runs).
    #[arg(long)]
    seed: Option<u64>,
}

fn load_request(args: &RunArgs, kind: AnalysisKind) -> Result<RunRequest> {
    let text = match (&args.config, &args.preset) {
        (Some(_), Some(_)) => {
            return Err(Error::Config("give either --config or --preset, not both".into()))
        }
        (Some(path), None) => fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?,
        (None, Some(id)) => serde_json::json!({ "preset": id }).to_string(),
        (None, None) => return Err(Error::Config("a run needs --config or --preset".into())),
    };
    parse_config(&text, Some(kind))
}

fn apply_flags(req: &mut RunRequest, flags: &RunFlags) -> Result<()> {
    if let Some(h) = flags.horizon {
        req.set_horizon(h);
    }
    if let Some(tol) = flags.tol {
        req.set_tolerance(tol);
    }
    if let Some(seed) = flags.seed {
        req.set_seed(seed)?;
    }
    req.validate()
}

fn run_and_emit(command: &str, req: &RunRequest, out: &Path, threads: Option<usize>) -> Result<Manifest> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let result = execute(req, Exec::from_threads(threads))?;
    let meta = RunMeta {
        command: command.to_string(),
        threads,
        started,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
    };
    emit_outputs(out, req, &result, &meta)
}

/// Like `println!` but a closed pipe (`| head`) is not an error.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

fn report(out: &Path, m: &Manifest) {
    for f in &m.outputs {
        say!("{}  {} rows  sha256 {}", out.join(&f.file).display(), f.rows, f.sha256);
    }
    say!("{}", out.join(optochaos::output::MANIFEST_FILE).display());
    for w in &m.warnings {
        eprintln!("warning: {w}");
    }
}

fn run_command(command: &str, kind: AnalysisKind, args: &RunArgs, threads: Option<usize>) -> Result<()> {
    let mut req = load_request(args, kind)?;
    apply_flags(&mut req, &args.flags)?;
    let m = run_and_emit(command, &req, &args.flags.out, threads)?;
    report(&args.flags.out, &m);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let threads = cli.threads;
    match cli.command {
        Command::Simulate(a) => run_command("simulate", AnalysisKind::Trajectory, &a, threads),
        Command::Poincare(a) => run_command("poincare", AnalysisKind::Section, &a, threads),
        Command::Lyapunov(a) => run_command("lyapunov", AnalysisKind::Lyapunov, &a, threads),
        Command::Sweep(a) => run_command("sweep", AnalysisKind::Sweep, &a, threads),
        Command::Scenario {
            action: ScenarioAction::List,
        } => {
            for p in catalog() {
                say!("{:<8} {:<10} {}", p.id, AnalysisKind::from(p.analysis).name(), p.notes);
            }
            Ok(())
        }
        Command::Scenario {
            action: ScenarioAction::Run { id, flags },
        } => {
            let p = preset(&id)?;
            let mut req = RunRequest::from_preset(&p.id)?;
            apply_flags(&mut req, &flags)?;
            let m = run_and_emit(&format!("scenario run {}", p.id), &req, &flags.out, threads)?;
            report(&flags.out, &m);
            Ok(())
        }
        Command::ConvertSi { config, out } => {
            let si = match &config {
                Some(path) => {
                    let text = fs::read_to_string(path).map_err(|e| Error::Io {
                        path: path.clone(),
                        source: e,
                    })?;
                    serde_json::from_str::<SIParams>(&text)
                        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
                }
                None => SIParams::reference(),
            };
            let conv = si_to_dimensionless(&si)?;
            let text = serde_json::to_string_pretty(&conv).expect("conversion serializes");
            say!("{text}");
            for w in &conv.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(dir) = out {
                fs::create_dir_all(&dir).map_err(|e| Error::Io {
                    path: dir.clone(),
                    source: e,
                })?;
                let path = dir.join("si_conversion.json");
                fs::write(&path, text).map_err(|e| Error::Io { path, source: e })?;
            }
            Ok(())
        }
        Command::Replay { manifest, out } => {
            let m = read_manifest(&manifest)?;
            m.request.validate()?;
            let replayed = run_and_emit(&m.command, &m.request, &out, threads)?;
            for (a, b) in m.outputs.iter().zip(&replayed.outputs) {
                if a.sha256 != b.sha256 {
                    eprintln!("warning: {} differs from the recorded checksum", b.file);
                }
            }
            report(&out, &replayed);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.class().exit_code() as u8)
        }
    }
}
