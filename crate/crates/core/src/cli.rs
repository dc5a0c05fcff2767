//! Command-line front end.

use std::ffi::OsString;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::pipeline::{batch, convert_to, stem, Config, Target};
use crate::report::BatchReport;
use crate::score::VariantSelector;

#[derive(Debug, Parser)]
#[command(name = "mensura", version, about = "Convert CMME-XML mensural music to MEI")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert files or directories of CMME-XML.
    Convert(ConvertArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Mensural,
    Cmn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, clap::Args)]
struct ConvertArgs {
    /// Input files or directories.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long = "to", value_enum, default_value = "mensural")]
    target: TargetArg,
    /// Restrict CMN output to the MEI-Basic subset.
    #[arg(long)]
    mei_basic: bool,
    /// Source id of the variant reading to use, or `default`.
    #[arg(long, default_value = "default")]
    reading: String,
    #[arg(short = 'o', long = "out", default_value = ".")]
    out: PathBuf,
    /// Report format on stdout; JSON when stdout is not a terminal.
    #[arg(long, value_enum)]
    report: Option<ReportFormat>,
    /// Stop at the first file with errors.
    #[arg(long)]
    fail_fast: bool,
}

/// Validated command-line configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliConfig {
    pub inputs: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub target: Target,
    pub mei_basic: bool,
    pub reading: VariantSelector,
    pub report_format: ReportFormat,
    pub fail_fast: bool,
}

impl CliConfig {
    fn from_args(a: ConvertArgs) -> Result<Self, String> {
        let target = match a.target {
            TargetArg::Mensural => Target::Mensural,
            TargetArg::Cmn => Target::Cmn,
        };
        if target == Target::Mensural && a.mei_basic {
            return Err("--mei-basic applies only to --to cmn".into());
        }
        let report_format = a.report.unwrap_or(if std::io::stdout().is_terminal() {
            ReportFormat::Text
        } else {
            ReportFormat::Json
        });
        Ok(CliConfig {
            inputs: a.inputs,
            output_dir: a.out,
            target,
            mei_basic: a.mei_basic,
            reading: VariantSelector::parse(&a.reading),
            report_format,
            fail_fast: a.fail_fast,
        })
    }

    fn pipeline(&self) -> Config {
        Config {
            target: self.target,
            mei_basic: self.mei_basic,
            reading: self.reading.clone(),
            fail_fast: self.fail_fast,
            ..Config::default()
        }
    }
}

fn convert_all(cfg: &CliConfig) -> BatchReport {
    let pcfg = cfg.pipeline();
    let mut report = BatchReport::new();
    for input in &cfg.inputs {
        let part = if input.is_dir() {
            batch(input, &cfg.output_dir, &pcfg)
        } else {
            let out = cfg.output_dir.join(format!("{}{}", stem(input), cfg.target.suffix()));
            BatchReport::single(input.display().to_string(), convert_to(input, &out, &pcfg))
        };
        let failed = part.has_errors();
        report = report.merge(part);
        if failed && cfg.fail_fast {
            break;
        }
    }
    report
}

fn write_report(dir: &Path, report: &BatchReport) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), report.to_json() + "\n")
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 1 when any file had errors, 2 for invalid arguments.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let Command::Convert(args) = cli.command;
    let cfg = match CliConfig::from_args(args) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("error: {msg}\n\nUsage: mensura convert --to cmn --mei-basic <INPUTS>...");
            return 2;
        }
    };

    let report = convert_all(&cfg);
    if let Err(e) = write_report(&cfg.output_dir, &report) {
        eprintln!("error: cannot write report to {}: {e}", cfg.output_dir.display());
        return 1;
    }
    match cfg.report_format {
        ReportFormat::Json => println!("{}", report.to_json()),
        ReportFormat::Text => print!("{}", report.to_text()),
    }
    i32::from(report.has_errors())
}
