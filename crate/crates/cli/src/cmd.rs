//! Command line surface: each subcommand names one pipeline stage.

use std::io::{Read, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use braidflow::pipeline::{self, PipelineStage};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "braidflow",
    version,
    about = "Compile Clifford+T circuits to braided surface-code layouts"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Stage arguments shared by every single-stage subcommand.
#[derive(Debug, Args)]
pub struct StageArgs {
    /// Read input from this file instead of stdin.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Write output to this file instead of stdout.
    #[arg(long, short, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Operation parameters: `--name value`, `--name=value` or `name=value`.
    #[arg(
        trailing_var_arg = true,
        allow_hyphen_values = true,
        value_name = "PARAM"
    )]
    pub params: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Emit a generated circuit (cnot-ladder, adder, random).
    Generate {
        generator: String,
        #[command(flatten)]
        args: StageArgs,
    },
    /// Convert a `.real` file to a gate list.
    Import {
        /// Source file; stdin when omitted.
        file: Option<PathBuf>,
        #[command(flatten)]
        args: StageArgs,
    },
    /// Search for a cheaper equivalent circuit with rewrite rules.
    Rewrite(StageArgs),
    /// Decompose into initialisations, CNOTs and measurements.
    Icm(StageArgs),
    /// Scheduling and wire operations (asap, reorder-first-use, swap, recycle, delay).
    Schedule {
        action: String,
        #[command(flatten)]
        args: StageArgs,
    },
    /// T-gate analyses (t-dist, availability, enforce, report).
    Analyze {
        analysis: String,
        #[command(flatten)]
        args: StageArgs,
    },
    /// Layout construction and estimation (build, estimate).
    Layout {
        action: String,
        #[command(flatten)]
        args: StageArgs,
    },
    /// Run a plan file: one stage per line, `name key=value ...`.
    Pipeline {
        #[arg(long, value_name = "PLAN")]
        file: PathBuf,
        /// Initial input; empty when omitted.
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
        #[arg(long, short, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Print the operation registry as JSON.
    Ops,
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// Persist session artifacts under this directory.
        #[arg(long, value_name = "DIR")]
        store: Option<PathBuf>,
    },
}

/// Turns `--n 4 --seed=2 emit=report` into key/value pairs.
pub fn parse_params(raw: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = raw.iter();
    while let Some(arg) = it.next() {
        if let Some(flag) = arg.strip_prefix("--") {
            match flag.split_once('=') {
                Some((k, v)) => out.push((k.to_string(), v.to_string())),
                None => {
                    let v = it
                        .next()
                        .with_context(|| format!("--{flag} needs a value"))?;
                    out.push((flag.to_string(), v.clone()));
                }
            }
        } else if let Some((k, v)) = arg.split_once('=') {
            out.push((k.to_string(), v.to_string()));
        } else {
            bail!("unexpected argument `{arg}`");
        }
    }
    Ok(out)
}

/// The stage a single-stage subcommand stands for, if it is one.
pub fn stage_of(command: &Command) -> Result<Option<(PipelineStage, &StageArgs, bool)>> {
    let (op, args, reads_input) = match command {
        Command::Generate { generator, args } => (format!("generate.{generator}"), args, false),
        Command::Import { args, .. } => ("import.real".to_string(), args, true),
        Command::Rewrite(args) => ("rewrite".to_string(), args, true),
        Command::Icm(args) => ("icm".to_string(), args, true),
        Command::Schedule { action, args } => (format!("schedule.{action}"), args, true),
        Command::Analyze { analysis, args } => (format!("analyze.{analysis}"), args, true),
        Command::Layout { action, args } => (format!("layout.{action}"), args, true),
        _ => return Ok(None),
    };
    let stage = PipelineStage::new(&op, parse_params(&args.params)?)?;
    Ok(Some((stage, args, reads_input)))
}

fn read_source(path: Option<&PathBuf>) -> Result<String> {
    match path {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
        None => {
            let mut text = String::new();
            std::io::stdin().read_to_string(&mut text)?;
            Ok(text)
        }
    }
}

fn lines(text: &str) -> Vec<String> {
    text.lines().map(str::to_string).collect()
}

fn write_output(out: Option<&PathBuf>, bytes: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

/// Runs every subcommand except `serve`.
pub fn run(command: &Command) -> Result<()> {
    if let Some((stage, args, reads_input)) = stage_of(command)? {
        let source = match command {
            Command::Import { file, .. } => file.as_ref().or(args.input.as_ref()),
            _ => args.input.as_ref(),
        };
        let input = if reads_input || args.input.is_some() {
            lines(&read_source(source)?)
        } else {
            Vec::new()
        };
        let output = pipeline::run_pipeline(std::slice::from_ref(&stage), input)?;
        return write_output(args.out.as_ref(), &pipeline::to_bytes(&output));
    }
    match command {
        Command::Pipeline { file, input, out } => {
            let plan = std::fs::read_to_string(file)
                .with_context(|| format!("reading {}", file.display()))?;
            let stages = pipeline::parse_plan(&plan)?;
            let input = match input {
                Some(p) => lines(&read_source(Some(p))?),
                None => Vec::new(),
            };
            let output = pipeline::run_pipeline(&stages, input)?;
            write_output(out.as_ref(), &pipeline::to_bytes(&output))
        }
        Command::Ops => {
            let text = serde_json::to_string_pretty(&pipeline::operations())?;
            write_output(None, &format!("{text}\n"))
        }
        Command::Serve { .. } => bail!("serve is handled by the binary"),
        _ => unreachable!("single-stage commands handled above"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(args: &[&str]) -> Vec<String> {
        args.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn params_in_all_spellings() {
        let got = parse_params(&strings(&["--n", "4", "--seed=2", "emit=report"])).unwrap();
        assert_eq!(
            got,
            vec![
                ("n".into(), "4".into()),
                ("seed".into(), "2".into()),
                ("emit".into(), "report".into())
            ]
        );
        assert!(parse_params(&strings(&["--n"])).is_err());
        assert!(parse_params(&strings(&["loose"])).is_err());
    }

    #[test]
    fn subcommands_map_to_stages() {
        let cli = Cli::try_parse_from(["braidflow", "generate", "adder", "--n", "3"]).unwrap();
        let (stage, _, reads) = stage_of(&cli.command).unwrap().unwrap();
        assert_eq!(stage.op, "generate.adder");
        assert_eq!(stage.params["n"], "3");
        assert!(!reads);

        let cli =
            Cli::try_parse_from(["braidflow", "schedule", "swap", "--i", "0", "--j", "2"]).unwrap();
        let (stage, _, _) = stage_of(&cli.command).unwrap().unwrap();
        assert_eq!(
            stage.to_string(),
            PipelineStage::parse("schedule swap i=0 j=2")
                .unwrap()
                .to_string()
        );

        let cli = Cli::try_parse_from(["braidflow", "analyze", "nonsense"]).unwrap();
        assert!(stage_of(&cli.command).is_err());
    }
}
