//! The `efsm-infer` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::learner::{ehw_infer, LearnError, LearnerConfig};
use crate::machine::{export, format_log_line, ConcreteInput, Efsm};
use crate::oracle::{lockstep_walk, DomainSpec};
use crate::sul::{load_machine, SulError, SulSession, DEFAULT_BUDGET};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DIVERGENCE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_NON_CONVERGENCE: i32 = 4;

/// One reproducible inference run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Machine file of the simulated system, relative to the config file.
    pub machine: PathBuf,
    /// Hidden start state; the machine's initial state by default.
    #[serde(default)]
    pub start: Option<String>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(flatten)]
    pub learner: LearnerConfig,
}

fn default_budget() -> usize {
    DEFAULT_BUDGET
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if cfg.machine.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.machine = dir.join(&cfg.machine);
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Parser)]
#[command(name = "efsm-infer", version, about = "Learn register machines from a system that cannot be reset")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Dot,
    Text,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a model of the machine named in the config.
    Infer {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a machine on an input script (one input per line) and print the
    /// trace.
    Simulate {
        machine: PathBuf,
        /// Script file; standard input when omitted.
        script: Option<PathBuf>,
        #[arg(long)]
        start: Option<String>,
    },
    /// Random lockstep comparison of two machines.
    Check {
        left: PathBuf,
        right: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sampling domains as JSON; the left machine's domains by default.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Convert a machine to another format.
    Export {
        model: PathBuf,
        #[arg(long, value_enum)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// An error with the exit status it maps to.
#[derive(Debug)]
pub struct Exit {
    pub code: i32,
    pub error: anyhow::Error,
}

fn exit(code: i32) -> impl FnOnce(anyhow::Error) -> Exit {
    move |error| Exit { code, error }
}

fn validation<E: Into<anyhow::Error>>(e: E) -> Exit {
    exit(EXIT_VALIDATION)(e.into())
}

fn write(path: &Path, text: &str) -> Result<(), Exit> {
    std::fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(exit(1))
}

fn infer(config: &Path, seed: Option<u64>, out: &Path, stdout: &mut String) -> Result<(), Exit> {
    let mut cfg = RunConfig::load(config).map_err(validation)?;
    if let Some(s) = seed {
        cfg.learner.seed = s;
    }
    let machine = load_machine(&cfg.machine).map_err(validation)?;
    cfg.learner.validate(&machine.signature).map_err(validation)?;
    let mut sul = SulSession::open(machine, cfg.start.as_deref())
        .map_err(validation)?
        .with_budget(cfg.budget);
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(exit(1))?;
    write(&out.join("config.json"), &serde_json::to_string_pretty(&cfg).expect("config serialises"))?;
    let result = ehw_infer(&mut sul, &cfg.learner);
    write(&out.join("trace.log"), &sul.stats().1.to_log(1))?;
    match result {
        Ok(l) => {
            write(&out.join("events.ldjson"), &l.log.to_ldjson())?;
            write(&out.join("model.json"), &export::to_json(&l.model))?;
            write(&out.join("model.dot"), &export::to_dot(&l.model))?;
            write(&out.join("model.efsm"), &l.model.to_string())?;
            write(
                &out.join("report.json"),
                &serde_json::to_string_pretty(&serde_json::json!({
                    "stats": l.stats,
                    "synthesis": l.report,
                    "counterexamples": l.counterexamples,
                }))
                .expect("report serialises"),
            )?;
            stdout.push_str(&format!(
                "learned {} states, {} transitions\nbackbone steps: {}\noracle steps: {}\ncounterexamples: {}\n",
                l.model.states.len(),
                l.model.transitions.len(),
                l.stats.backbone_steps,
                l.stats.oracle_steps,
                l.stats.counterexamples
            ));
            Ok(())
        }
        Err(f) => {
            write(&out.join("events.ldjson"), &f.log.to_ldjson())?;
            if let Some(c) = &f.conjecture {
                write(&out.join("conjecture.json"), &serde_json::to_string_pretty(c).expect("conjecture serialises"))?;
            }
            let code = match &f.error {
                LearnError::Config(_) => EXIT_VALIDATION,
                LearnError::Budget(_) | LearnError::Sul(SulError::Budget(_)) => EXIT_BUDGET,
                LearnError::NonConvergence(_) | LearnError::Synthesis(_) => EXIT_NON_CONVERGENCE,
                LearnError::Sul(_) => 1,
            };
            Err(Exit {
                code,
                error: anyhow::Error::new(f),
            })
        }
    }
}

fn simulate(machine: &Path, script: Option<&Path>, start: Option<&str>, stdout: &mut String) -> Result<(), Exit> {
    let m = load_machine(machine).map_err(validation)?;
    let text = match script {
        Some(p) => std::fs::read_to_string(p)
            .with_context(|| format!("reading {}", p.display()))
            .map_err(validation)?,
        None => std::io::read_to_string(std::io::stdin()).context("reading standard input").map_err(validation)?,
    };
    let mut state = start.unwrap_or(&m.initial).to_string();
    let mut regs = crate::machine::RegisterConfiguration::bottom(&m.signature);
    let mut n = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = |e: anyhow::Error| validation(e.context(format!("line {}", i + 1)));
        let x: ConcreteInput = line.parse().map_err(|e| at(anyhow::anyhow!("{e}")))?;
        let step = m.step(&state, &regs, &x).map_err(|e| at(e.into()))?;
        n += 1;
        stdout.push_str(&format_log_line(n, &x, &step.output));
        stdout.push('\n');
        state = step.state;
        regs = step.registers;
    }
    Ok(())
}

fn check(left: &Path, right: &Path, steps: usize, seed: u64, config: Option<&Path>, stdout: &mut String) -> Result<(), Exit> {
    let a = load_machine(left).map_err(validation)?;
    let b = load_machine(right).map_err(validation)?;
    let domains = match config {
        Some(p) => RunConfig::load(p).map_err(validation)?.learner.domains,
        None => DomainSpec::from_machine(&a),
    };
    domains.validate(&a.signature).map_err(validation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match lockstep_walk(&a, &b, &domains, steps, &mut rng).map_err(validation)? {
        None => {
            stdout.push_str(&format!("no divergence in {steps} steps\n"));
            Ok(())
        }
        Some(d) => {
            let inputs: Vec<String> = d.inputs.iter().map(|x| x.to_string()).collect();
            Err(Exit {
                code: EXIT_DIVERGENCE,
                error: anyhow::anyhow!(
                    "divergence after {} steps: {} gives `{}` on the left and `{}` on the right",
                    d.inputs.len(),
                    inputs.join("."),
                    d.left,
                    d.right
                ),
            })
        }
    }
}

fn export_model(model: &Path, format: Format, out: Option<&Path>, stdout: &mut String) -> Result<(), Exit> {
    let m: Efsm = load_machine(model).map_err(validation)?;
    let text = match format {
        Format::Json => export::to_json(&m),
        Format::Dot => export::to_dot(&m),
        Format::Text => m.to_string(),
    };
    match out {
        Some(p) => write(p, &text),
        None => {
            stdout.push_str(&text);
            Ok(())
        }
    }
}

/// Runs one command; standard output goes to `stdout`.
pub fn execute(cli: &Cli, stdout: &mut String) -> Result<(), Exit> {
    match &cli.command {
        Command::Infer { config, seed, out } => infer(config, *seed, out, stdout),
        Command::Simulate { machine, script, start } => simulate(machine, script.as_deref(), start.as_deref(), stdout),
        Command::Check {
            left,
            right,
            steps,
            seed,
            config,
        } => check(left, right, *steps, *seed, config.as_deref(), stdout),
        Command::Export { model, format, out } => export_model(model, *format, out.as_deref(), stdout),
    }
}

/// Parses `args`, runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let mut stdout = String::new();
    let result = execute(&cli, &mut stdout);
    print!("{stdout}");
    match result {
        Ok(()) => EXIT_OK,
        Err(Exit { code, error }) => {
            eprintln!("error: {error:#}");
            code
        }
    }
}
