//! Command-line driver for the two-party engine.

use clap::{Parser, Subcommand, ValueEnum};
use secrel::pipeline::{run_pipeline, PipelineConfig, PipelineOutput};
use secrel::transport::{run_protocol, wire_from_stream, Mode};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "secrel",
    about = "Oblivious relational joins and shared-value training"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the full pipeline described by a config file.
    Run {
        /// TOML pipeline config; CSV paths resolve relative to it.
        #[arg(long)]
        config: PathBuf,
        /// Party index (ignored in in-process mode).
        #[arg(long, default_value_t = 0)]
        party: u8,
        #[arg(long, value_enum, default_value_t = RunAs::Inproc)]
        mode: RunAs,
        /// Listen address for TCP mode (server side).
        #[arg(long)]
        listen: Option<String>,
        /// Connect address for TCP mode (client side).
        #[arg(long)]
        connect: Option<String>,
        /// Overrides the seed in the config (must match on both sides).
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for ledger.json, model.json and trace.bin.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RunAs {
    Inproc,
    Tcp,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run {
            config,
            party,
            mode,
            listen,
            connect,
            seed,
            out,
        } => match run(config, party, mode, listen, connect, seed, out) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
    }
}

fn run(
    config: PathBuf,
    party: u8,
    mode: RunAs,
    listen: Option<String>,
    connect: Option<String>,
    seed: Option<u64>,
    out: PathBuf,
) -> Result<(), Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(&config)?;
    let mut cfg = PipelineConfig::parse(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let base = config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));

    match mode {
        RunAs::Inproc => {
            let cfg0 = cfg.clone();
            let cfg1 = cfg.clone();
            let base0 = base.clone();
            let base1 = base.clone();
            let (o0, o1, _ledger) = run_protocol(
                Mode::InProcess,
                move |w| run_pipeline(&cfg0, &base0, w),
                move |w| run_pipeline(&cfg1, &base1, w),
            )?;
            write_outputs(&out, &o0)?;
            write_outputs(&out.join("party1"), &o1)?;
            println!("pipeline complete; reports in {}", out.display());
        }
        RunAs::Tcp => {
            let stream = match (listen, connect) {
                (Some(addr), None) => {
                    let listener = TcpListener::bind(&addr)?;
                    eprintln!("listening on {addr}");
                    listener.accept()?.0
                }
                (None, Some(addr)) => TcpStream::connect(&addr)?,
                _ => return Err("tcp mode needs exactly one of --listen/--connect".into()),
            };
            let mut wire = wire_from_stream(stream, party)?;
            let output = run_pipeline(&cfg, &base, &mut wire)?;
            write_outputs(&out, &output)?;
            println!("party {party} complete; reports in {}", out.display());
        }
    }
    Ok(())
}

fn write_outputs(dir: &Path, out: &PipelineOutput) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("ledger.json"),
        serde_json::to_string_pretty(&out.ledger.to_json())?,
    )?;
    if let Some(model) = &out.model {
        std::fs::write(dir.join("model.json"), serde_json::to_string_pretty(model)?)?;
    }
    std::fs::write(dir.join("trace.bin"), out.trace.to_bytes())?;
    Ok(())
}
