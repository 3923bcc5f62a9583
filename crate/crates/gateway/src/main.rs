use clap::{Parser, Subcommand};
use sceneweave_gateway::config::Config;
use sceneweave_gateway::replay::{self, ReplayError};
use sceneweave_gateway::{bench, server};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sceneweave", version, about = "Scene engine gateway")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the TCP/WebSocket gateway.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Replay a task script through a recorded transcript and compare to its golden.
    Replay {
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        script: PathBuf,
    },
    /// Print context-size measurements for a synthetic scene as CSV.
    Bench {
        #[arg(long)]
        scene_size: usize,
    },
    /// Run a script against its canned responses and write transcript and golden.
    #[command(hide = true)]
    Record {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        transcript_out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Serve { config } => {
            let config = match Config::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(2);
                }
            };
            let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
            match runtime.block_on(server::serve(config)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Replay { transcript, script } => match replay::replay(&transcript, &script) {
            Ok(run) => {
                println!("request_id,input_tokens,output_tokens,calls,elapsed_ms,executed,warnings");
                for r in &run.requests {
                    println!(
                        "{},{},{},{},{:.3},{},{}",
                        r.request_id,
                        r.usage.input_tokens,
                        r.usage.output_tokens,
                        r.usage.calls,
                        r.elapsed_ms,
                        r.executed.join("+"),
                        r.warnings.len()
                    );
                }
                println!("ok: matches golden");
                ExitCode::SUCCESS
            }
            Err(e @ ReplayError::GoldenMismatch { .. }) => {
                eprintln!("drift: {e}");
                ExitCode::from(1)
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(2)
            }
        },
        Command::Bench { scene_size } => {
            print!("{}", bench::to_csv(&bench::measure(scene_size)));
            ExitCode::SUCCESS
        }
        Command::Record { script, transcript_out } => match replay::record(&script) {
            Ok((script, transcript, run)) => {
                let written = replay::write_pretty(&transcript_out, &transcript)
                    .and_then(|_| replay::write_pretty(&script.golden, &run.record));
                if let Err(e) = written {
                    eprintln!("{e}");
                    return ExitCode::FAILURE;
                }
                for r in &run.requests {
                    for w in &r.warnings {
                        eprintln!("{}: {w}", r.request_id);
                    }
                }
                println!("recorded {} entries; golden at {}", transcript.len(), script.golden.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::FAILURE
            }
        },
    }
}
