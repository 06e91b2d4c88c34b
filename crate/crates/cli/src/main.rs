//! `labelprop` command line.
//!
//! Exit codes: 0 on success, 2 for usage and configuration problems, 3 for
//! unreadable or malformed data.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use labelprop::Variant;

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub const USAGE: u8 = 2;
    pub const DATA: u8 = 3;

    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: Self::USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: Self::DATA,
            message: message.into(),
        }
    }

    /// Argument errors are the caller's fault; everything else is bad data.
    pub fn from_lib(e: labelprop::Error) -> Self {
        match e {
            labelprop::Error::InvalidArgument(_) => Self::usage(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }

    /// As [`CliError::from_lib`], naming the file involved.
    pub fn at(path: &std::path::Path) -> impl Fn(labelprop::Error) -> Self + '_ {
        move |e| {
            let mut err = Self::from_lib(e);
            err.message = format!("{}: {}", path.display(), err.message);
            err
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<labelprop::Error> for CliError {
    fn from(e: labelprop::Error) -> Self {
        Self::from_lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "labelprop", version, about = "Video parsing by temporal label propagation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with full ground truth.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the frame parser and the fusion layer on a dataset manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `pipeline.variant`.
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label every frame of every video in a manifest.
    Parse {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory holding parser.svpm and fusion.svpw.
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// One of l, s, l+c, s+c, l+s, l+s+c.
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted label maps against ground truth paired by relative path.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Class count; inferred from the labels when omitted.
        #[arg(long)]
        classes: Option<usize>,
        /// Row label in the output table.
        #[arg(long, default_value = "svp")]
        method: String,
        #[arg(long)]
        exclude_background: bool,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate flow from frame A into frame B: A(p) ~ B(p + flow(p)).
    Flow {
        image_a: PathBuf,
        image_b: PathBuf,
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Render the confidence of reconstructing A from B warped by a flow.
    Confidence {
        image_a: PathBuf,
        image_b: PathBuf,
        flow: PathBuf,
        /// 8-bit grayscale PNG, value round(255 * confidence).
        out: PathBuf,
        /// Also write the exact values as a one-channel SVPP file.
        #[arg(long)]
        raw: Option<PathBuf>,
    },
    /// Dump fusion weights as CSV.
    ExportWeights {
        model: PathBuf,
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { config, out } => commands::synth(config.as_deref(), &out),
        Command::Train {
            manifest,
            config,
            variant,
            out,
        } => commands::train(&manifest, config.as_deref(), variant, &out),
        Command::Parse {
            manifest,
            models,
            config,
            variant,
            out,
        } => commands::parse(&manifest, &models, config.as_deref(), variant, &out),
        Command::Eval {
            pred,
            gt,
            config,
            classes,
            method,
            exclude_background,
            out,
        } => commands::eval(&commands::EvalArgs {
            pred: &pred,
            gt: &gt,
            config: config.as_deref(),
            classes,
            method: &method,
            exclude_background,
            out: out.as_deref(),
        }),
        Command::Flow {
            image_a,
            image_b,
            out,
            config,
        } => commands::flow(&image_a, &image_b, &out, config.as_deref()),
        Command::Confidence {
            image_a,
            image_b,
            flow,
            out,
            raw,
        } => commands::confidence(&image_a, &image_b, &flow, &out, raw.as_deref()),
        Command::ExportWeights { model, out, config } => {
            commands::export_weights(&model, &out, config.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
