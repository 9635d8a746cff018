//! `miniltp`: train, evaluate and run the six-task analysis pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 model error.
//! Log verbosity follows `MINILTP_LOG` (`error`, `warn`, `info`, `debug`;
//! default `info`).

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use miniltp::config::PipelineConfig;
use miniltp::data::{read_corpus, Format};
use miniltp::metrics::evaluate;
use miniltp::pipeline::{self, Mode, OutputFormat};
use miniltp::{Error, Task};

#[derive(Parser)]
#[command(name = "miniltp", version, about = "Multi-task Chinese text analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a checkpoint from a JSON configuration.
    Train {
        /// Configuration file (see docs/config.md).
        #[arg(long)]
        config: PathBuf,
        /// `single:<task>`, `joint` or `distill`.
        #[arg(long, value_parser = parse_mode)]
        mode: Mode,
    },
    /// Analyze raw text, one sentence per line.
    Annotate {
        /// Checkpoint directory.
        #[arg(long)]
        model: PathBuf,
        /// UTF-8 text file; `-` reads standard input.
        #[arg(long)]
        input: PathBuf,
        /// `json` (one object per line, all layers) or `conllu`.
        #[arg(long, default_value = "json", value_parser = parse_output)]
        format: OutputFormat,
        /// Output file; standard output when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score predictions against gold annotations.
    Eval {
        /// One of cws, pos, ner, dep, sdp, srl.
        #[arg(long, value_parser = parse_task)]
        task: Task,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Corpus format of both files; defaults to the task's usual format.
        #[arg(long, value_parser = parse_format)]
        format: Option<Format>,
    },
    /// Write the bundled synthetic corpus and its configuration.
    ToyCorpus {
        /// Destination directory.
        #[arg(long)]
        output: PathBuf,
    },
}

fn message(e: Error) -> String {
    match e {
        Error::Data(m) => m,
        other => other.to_string(),
    }
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(message)
}

fn parse_output(s: &str) -> Result<OutputFormat, String> {
    s.parse().map_err(message)
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(message)
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(message)
}

const USAGE: u8 = 1;
const DATA: u8 = 2;
const MODEL: u8 = 3;

struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn fail(code: u8) -> impl FnOnce(Error) -> Failure {
    move |e| Failure { code, error: e.into() }
}

/// Exit code of a library error raised outside model loading.
fn code_of(e: &Error) -> u8 {
    match e {
        Error::Config(_) => USAGE,
        Error::Model(_) | Error::Divergence { .. } | Error::Contract(_) | Error::Shape { .. } => MODEL,
        _ => DATA,
    }
}

fn classify(e: Error) -> Failure {
    Failure {
        code: code_of(&e),
        error: e.into(),
    }
}

fn read_input(path: &Path) -> Result<String, Failure> {
    let mut text = String::new();
    let result = if path == Path::new("-") {
        std::io::stdin().read_to_string(&mut text).map(|_| ())
    } else {
        std::fs::File::open(path).and_then(|mut f| f.read_to_string(&mut text).map(|_| ()))
    };
    result
        .with_context(|| format!("reading {}", path.display()))
        .map_err(|error| Failure { code: DATA, error })?;
    Ok(text)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    let result = match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .context("writing standard output"),
    };
    result.map_err(|error| Failure { code: DATA, error })
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Train { config, mode } => {
            let config = PipelineConfig::load(&config).map_err(classify)?;
            let outcome = pipeline::train(&config, mode).map_err(classify)?;
            if let Some(last) = outcome.report.epochs.last() {
                log::info!("final epoch loss {:?} dev {:?}", last.loss, last.dev);
            }
            println!("{}", outcome.dir.display());
        }
        Command::Annotate {
            model,
            input,
            format,
            output,
        } => {
            let model = pipeline::load_model(&model).map_err(fail(MODEL))?;
            let text = read_input(&input)?;
            let sentences = pipeline::annotate(&model, &text).map_err(fail(DATA))?;
            let rendered = pipeline::render_annotations(&sentences, format).map_err(fail(DATA))?;
            write_output(output.as_deref(), &rendered)?;
        }
        Command::Eval {
            task,
            gold,
            pred,
            format,
        } => {
            let format = format.unwrap_or(Format::for_task(task));
            let gold = read_corpus(&gold, format).map_err(fail(DATA))?;
            let pred = read_corpus(&pred, format).map_err(fail(DATA))?;
            let report = evaluate(task, &gold, &pred).map_err(fail(DATA))?;
            let json = serde_json::to_string_pretty(&report).expect("metrics serialize");
            println!("{json}");
        }
        Command::ToyCorpus { output } => {
            let path = miniltp::toy::write_toy(&output).map_err(fail(DATA))?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MINILTP_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
