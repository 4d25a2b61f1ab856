use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nncert::figure::emit_figure;
use nncert::lmi::{build_learning, write_sdpa};
use nncert::pipeline::{monte_carlo, verify, ProblemSpec, RunReport};
use nncert::sets::global_sector;
use nncert::{Network, RecoveryMode};

#[derive(Parser)]
#[command(
    name = "nncert",
    version,
    about = "Learn and verify networks against ellipsoidal reachability specs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a certified single-hidden-layer network.
    Learn {
        problem: PathBuf,
        #[arg(long)]
        mode: Option<RecoveryMode>,
        /// Weights output file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the solver iteration log as JSON lines.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Certify a network against the pairs of a problem file.
    Verify {
        weights: PathBuf,
        problem: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Monte-Carlo containment check.
    Check {
        weights: PathBuf,
        problem: PathBuf,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the learning pencil in SDPA sparse format.
    ExportSdpa {
        problem: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mode: Option<RecoveryMode>,
    },
}

fn write(path: &Path, text: &str) -> nncert::Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn summary(r: &RunReport) {
    eprintln!(
        "outcome: {:?}, margin {:e}, {} iterations, {} violations, {:.2}s",
        r.outcome,
        r.margin,
        r.iterations,
        r.total_violations(),
        r.timings.total
    );
}

fn run(cli: Cli) -> nncert::Result<i32> {
    match cli.command {
        Command::Learn {
            problem,
            mode,
            out,
            report,
            svg,
            seed,
            log,
        } => {
            let mut spec = ProblemSpec::load(&problem)?;
            if let Some(m) = mode {
                spec.mode = m;
            }
            if let Some(s) = seed {
                spec.seed = s;
            }
            let (r, cert_log) = nncert::pipeline::learn_with_log(&spec)?;
            summary(&r);
            if let Some(p) = log {
                write(&p, &cert_log)?;
            }
            if let Some(p) = report {
                write(&p, &(r.to_json()? + "\n"))?;
            }
            if let Some(net) = r.network()? {
                match out {
                    Some(p) => net.save(p)?,
                    None => println!("{}", net.to_json()),
                }
                if let Some(p) = svg {
                    write(&p, &emit_figure(&spec.pairs, &net, spec.mc_samples, spec.seed)?)?;
                }
            }
            Ok(r.outcome.exit_code())
        }
        Command::Verify {
            weights,
            problem,
            report,
        } => {
            let net = Network::load(weights)?;
            let spec = ProblemSpec::load(problem)?;
            let opts = nncert::SolveOptions {
                seed: spec.seed,
                ..spec.solver.clone()
            };
            let r = verify(&net, &spec.pairs, &opts, spec.mc_samples, spec.seed)?;
            summary(&r);
            let json = r.to_json()?;
            match report {
                Some(p) => write(&p, &(json + "\n"))?,
                None => println!("{json}"),
            }
            Ok(r.outcome.exit_code())
        }
        Command::Check {
            weights,
            problem,
            samples,
            seed,
        } => {
            let net = Network::load(weights)?;
            let spec = ProblemSpec::load(problem)?;
            let counts = monte_carlo(&net, &spec.pairs, samples, seed)?;
            println!(
                "{}",
                serde_json::json!({ "samples": samples, "seed": seed, "violations": counts })
            );
            Ok(if counts.iter().all(|&c| c == 0) { 0 } else { 2 })
        }
        Command::ExportSdpa { problem, out, mode } => {
            let spec = ProblemSpec::load(problem)?;
            let mode = mode.unwrap_or(spec.mode);
            let sec = global_sector(spec.shape.n1, mode == RecoveryMode::Strict);
            let (pencil, _) = build_learning(spec.shape, &spec.pairs, &sec, mode)?;
            write(&out, &write_sdpa(&pencil, None)?)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
