//! Command-line front end. Results go to the output stream, diagnostics to
//! the error stream.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::assets;
use crate::executive::{run_trial, run_trial_with, trace_to_jsonl, Policy, TrialSetup};
use crate::expharness::{self, Execution, ExperimentConfig, Format};
use crate::pddl::{self, GroundAtom, GroundTask};
use crate::planner::{self, Plan, PlanOutcome};
use crate::vqa::{QueryStyle, RemoteConfig, RemoteOracle, Target, TemplateTable};
use crate::worldsim::ImageManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "planmon", version, about = "Plan, monitor and evaluate robot task plans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct ProblemSource {
    /// Problem file.
    #[arg(long)]
    problem: Option<PathBuf>,
    /// Bundled task instead of a problem file.
    #[arg(long)]
    task: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print a shortest plan, one action per line.
    Plan {
        /// Domain file; the bundled kitchen domain if omitted.
        #[arg(long)]
        domain: Option<PathBuf>,
        #[command(flatten)]
        source: ProblemSource,
    },
    /// Check a plan file step by step against a problem.
    Validate {
        #[arg(long)]
        domain: Option<PathBuf>,
        #[command(flatten)]
        source: ProblemSource,
        #[arg(long)]
        plan: PathBuf,
    },
    /// Render the question asked about an atom or an action.
    Query {
        #[arg(long, conflicts_with = "action", required_unless_present = "action")]
        atom: Option<String>,
        #[arg(long)]
        action: Option<String>,
        /// precondition, effect, affordance or success.
        #[arg(long)]
        style: QueryStyle,
    },
    /// Run one trial of a policy on a bundled task.
    Trial {
        #[arg(long)]
        policy: Policy,
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Experiment config supplying world, oracle and budget settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Emit the event log before the result line.
        #[arg(long)]
        trace: bool,
        /// Ask a remote VQA service instead of the simulated oracle.
        #[arg(long)]
        endpoint: Option<String>,
        /// Observation image pools, JSON.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Run a full Monte Carlo sweep and write a report.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; standard output if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: Format,
        /// Run trials on one thread.
        #[arg(long)]
        serial: bool,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Domain(String),
}

fn domain_err(e: impl std::fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn dispatch<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                let _ = err.write_all(rendered.as_bytes());
                EXIT_USAGE
            } else {
                let _ = out.write_all(rendered.as_bytes());
                EXIT_OK
            };
        }
    };
    match run(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Domain(m)) => {
            let _ = writeln!(err, "{m}");
            EXIT_DOMAIN
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn load(domain: Option<&Path>, source: &ProblemSource) -> Result<GroundTask, CliError> {
    let (domain_name, domain_text) = match domain {
        Some(p) => (p.display().to_string(), read(p)?),
        None => ("kitchen.pddl".to_string(), assets::KITCHEN_DOMAIN.to_string()),
    };
    let (problem_name, problem_text) = match (&source.problem, &source.task) {
        (Some(p), _) => (p.display().to_string(), read(p)?),
        (None, Some(t)) => {
            let text = assets::problem_text(t).ok_or_else(|| unknown_task(t))?;
            (format!("{t}.pddl"), text.to_string())
        }
        (None, None) => return Err(CliError::Usage("one of --problem or --task is required".into())),
    };
    let d = pddl::parse_domain(&domain_text).map_err(|e| CliError::Domain(format!("{domain_name}:{e}")))?;
    let p = pddl::parse_problem(&problem_text, &d).map_err(|e| CliError::Domain(format!("{problem_name}:{e}")))?;
    pddl::ground(&d, &p).map_err(domain_err)
}

fn unknown_task(t: &str) -> CliError {
    CliError::Usage(format!("unknown task `{t}` (expected {})", assets::TASK_IDS.join(", ")))
}

fn run(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Plan { domain, source } => {
            let task = load(domain.as_deref(), &source)?;
            match planner::plan(&task) {
                PlanOutcome::Solved(plan) => write!(out, "{}", plan.to_text()).map_err(domain_err),
                PlanOutcome::Unsolvable => Err(CliError::Domain("unsolvable".into())),
                PlanOutcome::BudgetExceeded(n) => Err(CliError::Domain(format!("search budget exceeded after {n} expansions"))),
            }
        }
        Command::Validate { domain, source, plan } => {
            let task = load(domain.as_deref(), &source)?;
            let plan = Plan::parse(&task, &read(&plan)?).map_err(domain_err)?;
            match planner::check_plan(&task, &plan) {
                Ok(_) => writeln!(out, "valid").map_err(domain_err),
                Err(e) => Err(CliError::Domain(format!("invalid plan: {e}"))),
            }
        }
        Command::Query { atom, action, style } => {
            let templates = TemplateTable::kitchen();
            let target = match (atom, action) {
                (Some(a), _) => Target::Atom(GroundAtom::parse(&a).map_err(domain_err)?),
                (None, Some(a)) => Target::Action(find_action(&a)?),
                (None, None) => return Err(CliError::Usage("one of --atom or --action is required".into())),
            };
            let q = templates.render(&target, style).map_err(domain_err)?;
            writeln!(out, "{}", q.text).map_err(domain_err)
        }
        Command::Trial {
            policy,
            task,
            seed,
            config,
            trace,
            endpoint,
            manifest,
        } => {
            if assets::problem_text(&task).is_none() {
                return Err(unknown_task(&task));
            }
            let config = match config {
                Some(p) => ExperimentConfig::load(&p).map_err(domain_err)?,
                None => ExperimentConfig::default(),
            };
            let mut setup = TrialSetup::kitchen(&task).map_err(domain_err)?;
            setup.world.p_fail = config.world.p_fail;
            setup.world.p_regress = config.world.p_regress;
            setup.budgets = config.budgets;
            setup.record_trace = trace;
            if let Some(m) = manifest {
                setup.world.manifest = Some(ImageManifest::from_json(&read(&m)?).map_err(domain_err)?);
            }
            let result = match endpoint {
                Some(url) => {
                    let mut oracle = RemoteOracle::new(RemoteConfig::new(url));
                    run_trial_with(policy, &setup, seed, &mut oracle)
                }
                None => run_trial(policy, &setup, &config.profile().map_err(domain_err)?, seed),
            }
            .map_err(domain_err)?;
            let line = json!({
                "task": task,
                "policy": policy,
                "seed": seed,
                "completed": result.completed,
                "steps_taken": result.steps_taken,
                "replans": result.replans,
                "retries": result.retries,
                "failure_reason": result.failure_reason,
            });
            write!(out, "{}", trace_to_jsonl(&result.trace)).map_err(domain_err)?;
            writeln!(out, "{line}").map_err(domain_err)
        }
        Command::Experiment {
            config,
            seed,
            out: path,
            format,
            serial,
        } => {
            let mut config = match config {
                Some(p) => ExperimentConfig::load(&p).map_err(domain_err)?,
                None => {
                    let mut c = ExperimentConfig::default();
                    c.override_seed(std::env::var(expharness::SEED_ENV).ok().as_deref())
                        .map_err(domain_err)?;
                    c
                }
            };
            if let Some(s) = seed {
                config.master_seed = s;
            }
            let execution = if serial { Execution::Serial } else { Execution::Parallel };
            let report = expharness::run_experiment_with(&config, execution).map_err(domain_err)?;
            match path {
                Some(p) => expharness::emit_report(&report, format, &p).map_err(domain_err)?,
                None => expharness::write_report(&report, format, out).map_err(domain_err)?,
            }
            let _ = writeln!(
                err,
                "{} cells x {} trials in {:.2?}",
                report.cells.len(),
                config.trials_per_cell,
                report.wall_clock
            );
            Ok(())
        }
    }
}

/// Looks the action up in the bundled tasks, in reporting order.
fn find_action(text: &str) -> Result<pddl::GroundAction, CliError> {
    for id in assets::TASK_IDS {
        let task = assets::load_task(id).map_err(CliError::Domain)?;
        if let Some(a) = task.action_by_name(text) {
            return Ok(a.clone());
        }
    }
    Err(CliError::Domain(format!("no bundled task has an action `{text}`")))
}
