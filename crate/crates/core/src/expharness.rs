//! Monte Carlo sweeps over (task, policy) cells with Wilson intervals and
//! CSV or JSON reports.

use std::io::{self, Write};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executive::{run_trial, Budgets, Policy, TrialSetup};
use crate::rng;
use crate::vqa::OracleProfile;

/// Overrides `master_seed` when set.
pub const SEED_ENV: &str = "PLANMON_MASTER_SEED";

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("trial {trial} of ({task}, {policy}) with seed {seed} failed: {message}")]
    Trial {
        task: String,
        policy: Policy,
        trial: usize,
        seed: u64,
        message: String,
    },
    #[error("summary needs at least one trial")]
    NoTrials,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldParams {
    pub p_fail: f64,
    pub p_regress: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            p_fail: 0.25,
            p_regress: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub tasks: Vec<String>,
    pub policies: Vec<Policy>,
    pub trials_per_cell: usize,
    pub master_seed: u64,
    pub world: WorldParams,
    /// `measured` or `perfect`.
    pub oracle_profile: String,
    pub budgets: Budgets,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            tasks: crate::assets::TASK_IDS.iter().map(|t| t.to_string()).collect(),
            policies: Policy::ALL.to_vec(),
            trials_per_cell: 1000,
            master_seed: 0,
            world: WorldParams::default(),
            oracle_profile: "measured".into(),
            budgets: Budgets::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Reads a `.json` file as JSON and anything else as TOML, then applies
    /// the seed override from the environment.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)?
        } else {
            Self::from_toml(&text)?
        };
        config.override_seed(std::env::var(SEED_ENV).ok().as_deref())?;
        Ok(config)
    }

    pub fn override_seed(&mut self, value: Option<&str>) -> Result<(), HarnessError> {
        if let Some(v) = value {
            self.master_seed = v
                .trim()
                .parse()
                .map_err(|_| HarnessError::Config(format!("{SEED_ENV}=`{v}` is not a 64-bit unsigned integer")))?;
        }
        Ok(())
    }

    pub fn profile(&self) -> Result<OracleProfile, HarnessError> {
        OracleProfile::by_name(&self.oracle_profile)
            .ok_or_else(|| HarnessError::Config(format!("unknown oracle profile `{}`", self.oracle_profile)))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials_per_cell == 0 {
            return Err(HarnessError::Config("trials_per_cell must be at least 1".into()));
        }
        if let Some(t) = self.tasks.iter().find(|t| crate::assets::problem_text(t).is_none()) {
            return Err(HarnessError::Config(format!("unknown task `{t}`")));
        }
        self.budgets.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        for (name, p) in [("p_fail", self.world.p_fail), ("p_regress", self.world.p_regress)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(HarnessError::Config(format!("{name} = {p} is outside [0, 1]")));
            }
        }
        self.profile()?;
        Ok(())
    }

    /// Seed of one trial; a function of its coordinates only.
    pub fn trial_seed(&self, task: &str, policy: Policy, trial: usize) -> u64 {
        rng::derive(self.master_seed, &[rng::label(task), rng::label(policy.as_str()), trial as u64])
    }

    fn setup(&self, task: &str) -> Result<TrialSetup, HarnessError> {
        let mut s = TrialSetup::kitchen(task).map_err(|e| HarnessError::Config(e.to_string()))?;
        s.world.p_fail = self.world.p_fail;
        s.world.p_regress = self.world.p_regress;
        s.budgets = self.budgets;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub task: String,
    pub policy: Policy,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_steps: f64,
    pub mean_replans: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSeeds {
    pub task: String,
    pub policy: Policy,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub cells: Vec<CellSummary>,
    pub seeds: Vec<CellSeeds>,
    /// Not serialized, so reports stay byte-identical across runs.
    #[serde(skip)]
    pub wall_clock: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Serial,
    Parallel,
}

/// Rate and Wilson 95% interval.
pub fn summarize(successes: usize, trials: usize) -> Result<(f64, f64, f64), HarnessError> {
    if trials == 0 {
        return Err(HarnessError::NoTrials);
    }
    assert!(successes <= trials, "{successes} successes out of {trials} trials");
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let low = (center - half).clamp(0.0, p);
    let high = (center + half).clamp(p, 1.0);
    Ok((p, low, high))
}

struct Outcome {
    completed: bool,
    steps: usize,
    replans: usize,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Report, HarnessError> {
    run_experiment_with(config, Execution::Parallel)
}

pub fn run_experiment_with(config: &ExperimentConfig, execution: Execution) -> Result<Report, HarnessError> {
    let started = Instant::now();
    config.validate()?;
    let profile = config.profile()?;
    let setups = config
        .tasks
        .iter()
        .map(|t| config.setup(t))
        .collect::<Result<Vec<_>, _>>()?;
    let cells: Vec<(usize, Policy)> = (0..setups.len())
        .flat_map(|t| config.policies.iter().map(move |&p| (t, p)))
        .collect();
    let n = config.trials_per_cell;

    let one = |index: usize| -> Result<Outcome, HarnessError> {
        let (t, policy) = cells[index / n];
        let trial = index % n;
        let task = &config.tasks[t];
        let seed = config.trial_seed(task, policy, trial);
        let fail = |message: String| HarnessError::Trial {
            task: task.clone(),
            policy,
            trial,
            seed,
            message,
        };
        let result = panic::catch_unwind(AssertUnwindSafe(|| run_trial(policy, &setups[t], &profile, seed)))
            .map_err(|payload| fail(panic_message(payload.as_ref())))?
            .map_err(|e| fail(e.to_string()))?;
        Ok(Outcome {
            completed: result.completed,
            steps: result.steps_taken,
            replans: result.replans,
        })
    };
    let total = cells.len() * n;
    let outcomes: Vec<Result<Outcome, HarnessError>> = match execution {
        Execution::Serial => (0..total).map(one).collect(),
        Execution::Parallel => (0..total).into_par_iter().map(one).collect(),
    };
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut summaries = Vec::with_capacity(cells.len());
    let mut seeds = Vec::with_capacity(cells.len());
    for (c, &(t, policy)) in cells.iter().enumerate() {
        let chunk = &outcomes[c * n..(c + 1) * n];
        let successes = chunk.iter().filter(|o| o.completed).count();
        let (rate, ci_low, ci_high) = summarize(successes, n)?;
        let task = config.tasks[t].clone();
        summaries.push(CellSummary {
            task: task.clone(),
            policy,
            trials: n,
            successes,
            rate,
            ci_low,
            ci_high,
            mean_steps: chunk.iter().map(|o| o.steps as f64).sum::<f64>() / n as f64,
            mean_replans: chunk.iter().map(|o| o.replans as f64).sum::<f64>() / n as f64,
        });
        seeds.push(CellSeeds {
            seeds: (0..n).map(|i| config.trial_seed(&task, policy, i)).collect(),
            task,
            policy,
        });
    }
    Ok(Report {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        cells: summaries,
        seeds,
        wall_clock: started.elapsed(),
    })
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        format!("panic: {s}")
    } else if let Some(s) = payload.downcast_ref::<String>() {
        format!("panic: {s}")
    } else {
        "panic".into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format `{s}` (expected csv or json)")),
        }
    }
}

pub const CSV_HEADER: [&str; 9] = [
    "task",
    "policy",
    "trials",
    "successes",
    "rate",
    "ci_low",
    "ci_high",
    "mean_steps",
    "mean_replans",
];

pub fn write_report(report: &Report, format: Format, sink: &mut dyn Write) -> io::Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(sink);
            w.write_record(CSV_HEADER)?;
            for c in &report.cells {
                w.write_record([
                    c.task.clone(),
                    c.policy.to_string(),
                    c.trials.to_string(),
                    c.successes.to_string(),
                    c.rate.to_string(),
                    c.ci_low.to_string(),
                    c.ci_high.to_string(),
                    c.mean_steps.to_string(),
                    c.mean_replans.to_string(),
                ])?;
            }
            w.flush()
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut *sink, report)?;
            sink.write_all(b"\n")
        }
    }
}

pub fn emit_report(report: &Report, format: Format, path: &Path) -> Result<(), HarnessError> {
    let io_err = |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    write_report(report, format, &mut file).map_err(io_err)?;
    file.flush().map_err(io_err)
}
