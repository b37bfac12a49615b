mod args;
mod commands;
mod settings;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Bad flag values or combinations (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

/// A numerical check failed or a loss became non-finite (exit code 3).
#[derive(Debug)]
pub struct NumericFailure(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}
impl std::error::Error for NumericFailure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if cause.is::<NumericFailure>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<catvrnn::Error>() {
            return match e {
                catvrnn::Error::NonFinite(_) => 3,
                catvrnn::Error::Config(_) | catvrnn::Error::UnsupportedCategory { .. } => 1,
                _ => 2,
            };
        }
    }
    2
}

/// The error chain, skipping causes whose text the previous message already includes.
fn describe(err: &anyhow::Error) -> String {
    let mut out = err.to_string();
    let mut last = out.clone();
    for cause in err.chain().skip(1) {
        let text = cause.to_string();
        if !last.contains(&text) {
            out.push_str(": ");
            out.push_str(&text);
        }
        last = text;
    }
    out
}

fn run() -> anyhow::Result<()> {
    let raw: Vec<String> = std::env::args().collect();
    let config_path = settings::find_config_path(&raw);
    let args = match &config_path {
        Some(p) => {
            let entries = settings::parse_config_file(p).map_err(|e| UsageError(format!("{e:#}")))?;
            settings::merge_args(raw, &entries)
        }
        None => raw,
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.print()?;
                return Ok(());
            }
            return Err(UsageError(e.render().to_string().trim_end().to_string()).into());
        }
    };
    let settings = cli.command.settings();
    let file = config_path.map_or_else(|| "none".to_string(), |p| p.display().to_string());
    eprintln!("catvrnn {}: precedence flags > file ({file}) > defaults", cli.command.name());
    eprintln!("effective settings: {settings}");
    match &cli.command {
        Command::BuildData(a) => commands::build_data(a, &settings),
        Command::Train(a) => commands::train(a, &settings),
        Command::Generate(a) => commands::generate(a, &settings),
        Command::Evaluate(a) => commands::evaluate(a, &settings),
        Command::GradCheck(a) => commands::grad_check(a, &settings),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
