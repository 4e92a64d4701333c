mod args;
mod commands;
mod config;

use std::ffi::OsString;
use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use grl_core::verify::ACCEPTANCE_SEED;
use grl_core::ExecMode;
use serde::Serialize;

use crate::args::{Cli, Command, Format, Threads};
use crate::commands::{Body, Ctx, Outcome};

pub enum Failure {
    Usage(String),
    Core(grl_core::Error),
    Io(String),
    Verify(Vec<u8>),
}

impl From<grl_core::Error> for Failure {
    fn from(e: grl_core::Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Core(grl_core::Error::Resource { .. }) | Failure::Io(_) => 4,
            Failure::Core(_) => 3,
            Failure::Verify(_) => 5,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) | Failure::Io(m) => m.clone(),
            Failure::Core(grl_core::Error::MissingConstant(reqs)) => format!(
                "missing constant(s): {}; pass --simulate to estimate them",
                reqs.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(", ")
            ),
            Failure::Core(e) => e.to_string(),
            Failure::Verify(ids) => format!(
                "verification failed for criteria {}",
                ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
            ),
        }
    }
}

/// Reproducibility header carried by every output.
#[derive(Serialize)]
struct Header<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    config: &'a Cli,
}

#[derive(Serialize)]
struct Document<'a> {
    header: Header<'a>,
    result: serde_json::Value,
}

fn parse(argv: Vec<OsString>) -> Cli {
    let cli = Cli::try_parse_from(&argv).unwrap_or_else(|e| e.exit());
    let Some(path) = cli.config.clone() else {
        return cli;
    };
    let spliced = config::load(&path).and_then(|t| config::splice(&argv, cli.command.name(), &t));
    match spliced {
        Ok(argv) => Cli::try_parse_from(argv).unwrap_or_else(|e| e.exit()),
        Err(msg) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
    }
}

fn resolve_seed(cli: &Cli) -> Result<u64, Failure> {
    if let Some(s) = cli.seed {
        return Ok(s);
    }
    match std::env::var("GRL_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("GRL_SEED must be an unsigned integer, got {v:?}"))),
        Err(_) if matches!(cli.command, Command::Verify(_)) => Ok(ACCEPTANCE_SEED),
        Err(_) => Ok(0),
    }
}

fn exec_mode(threads: Threads) -> Result<ExecMode, Failure> {
    match threads {
        Threads::Fixed(1) => Ok(ExecMode::Sequential),
        #[cfg(feature = "parallel")]
        Threads::Fixed(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure::Io(format!("cannot start {n} worker threads: {e}")))?;
            Ok(ExecMode::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Threads::Fixed(_) => {
            log::warn!("built without the `parallel` feature; running sequentially");
            Ok(ExecMode::Sequential)
        }
        Threads::Auto => Ok(ExecMode::default()),
    }
}

fn render(cli: &Cli, seed: u64, body: Body) -> Result<String, Failure> {
    let header = Header {
        tool: "grl",
        version: grl_core::VERSION,
        seed,
        config: cli,
    };
    match (cli.format, body) {
        (Format::Json, Body::Json(result) | Body::Table(result, _)) => {
            let mut s = serde_json::to_string_pretty(&Document { header, result }).expect("serializable");
            s.push('\n');
            Ok(s)
        }
        (Format::Csv, Body::Table(_, table)) => {
            let head = serde_json::to_string(&header).expect("serializable");
            Ok(format!("# {head}\n{table}"))
        }
        (Format::Csv, Body::Json(_)) => Err(Failure::Usage(format!(
            "`{}` produces a single record; use --format json",
            cli.command.name()
        ))),
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let seed = resolve_seed(cli)?;
    let ctx = Ctx {
        seed,
        exec: exec_mode(cli.threads)?,
    };
    log::debug!("seed {seed}, exec {:?}", ctx.exec);
    let Outcome { body, failed } = match &cli.command {
        Command::Simulate(a) => commands::simulate(a, &ctx)?,
        Command::Tail(a) => commands::tail(a, &ctx)?,
        Command::Ratio(a) => commands::ratio(a, &ctx)?,
        Command::Constants(a) => commands::constants(a, &ctx)?,
        Command::Asymptotics(a) => commands::asymptotics(a, &ctx)?,
        Command::Fieldlab(a) => commands::fieldlab(a, &ctx)?,
        Command::Verify(a) => commands::verify(a, &ctx)?,
    };
    let text = render(cli, seed, body)?;
    match &cli.output {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Failure::Io(format!("cannot write to stdout: {e}")))?;
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verify(failed))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = parse(std::env::args_os().collect());
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
