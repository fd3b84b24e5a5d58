use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coarse_lab::scenario::{export_profiles, exit_code, run_scenario, suite, SpaceSpec};
use coarse_lab::Error;

#[derive(Parser)]
#[command(name = "coarse-lab", version, about = "Finite-scale certificates for coarse embeddings and group quasi-actions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and emit its certificate.
    Run {
        scenario: PathBuf,
        /// Write `<name>.cert.json` here instead of printing to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also export the sampled profiles (only `csv`).
        #[arg(long)]
        profiles: Option<String>,
    },
    /// Run every scenario file of a directory.
    Suite { dir: PathBuf },
    /// Validate a space file and print its basic invariants.
    CheckSpace { space: PathBuf },
}

fn init_threads() {
    if let Some(n) = std::env::var("COARSE_LAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // ignore failure: the pool may already be initialized
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn run(scenario: &Path, out: Option<&Path>, profiles: Option<&str>) -> i32 {
    let outcome = run_scenario(scenario);
    let code = exit_code(&outcome);
    let cert = match outcome {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", scenario.display());
            return code;
        }
    };
    let written = match out {
        Some(dir) => std::fs::create_dir_all(dir)
            .and_then(|_| std::fs::write(dir.join(format!("{}.cert.json", cert.scenario)), cert.to_json()))
            .map_err(Error::from),
        None => {
            print!("{}", cert.to_json());
            Ok(())
        }
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return 2;
    }
    if let Some(format) = profiles {
        let dir = out.unwrap_or(Path::new("."));
        if let Err(e) = export_profiles(&cert, dir, &cert.scenario, format) {
            eprintln!("error: {e}");
            return 2;
        }
    }
    for f in cert.failures() {
        let pair = f.witness_pair.as_ref().map(|(a, b)| format!(" at ({a}, {b})")).unwrap_or_default();
        eprintln!("FAILED {}: {} > {}{pair}", f.name, f.lhs, f.rhs);
    }
    code
}

fn run_suite(dir: &Path) -> i32 {
    let summary = match suite(dir) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    for entry in &summary.entries {
        let detail = match &entry.outcome {
            Err(e) => format!(" ({e})"),
            Ok(c) => format!(" ({} checks)", c.checked_inequalities.len()),
        };
        println!("{}: {}{detail}", entry.file.display(), entry.status());
    }
    println!("summary: {}/{} passed", summary.passed(), summary.entries.len());
    summary.exit_code()
}

fn check_space(path: &Path) -> i32 {
    let parsed = std::fs::read_to_string(path)
        .map_err(Error::from)
        .and_then(|t| serde_json::from_str::<SpaceSpec>(&t).map_err(Error::from))
        .and_then(|spec| spec.build());
    match parsed {
        Ok(space) => {
            let report = serde_json::json!({
                "points": space.len(),
                "diameter": space.diameter(),
                "uniform_discreteness": if space.len() > 1 { serde_json::json!(space.uniform_discreteness()) } else { serde_json::json!("inf") },
                "distinct_distances": space.realized_distances().len(),
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            0
        }
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            2
        }
    }
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Run { scenario, out, profiles } => run(scenario, out.as_deref(), profiles.as_deref()),
        Command::Suite { dir } => run_suite(dir),
        Command::CheckSpace { space } => check_space(space),
    };
    ExitCode::from(code as u8)
}
