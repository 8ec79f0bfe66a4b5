use planmon::cli::{dispatch, EXIT_DOMAIN, EXIT_OK, EXIT_USAGE};
use planmon::executive::Policy;
use planmon::expharness::{run_experiment_with, summarize, write_report, Execution, ExperimentConfig, Format};
use proptest::prelude::*;

fn small(trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        trials_per_cell: trials,
        master_seed: 5,
        ..ExperimentConfig::default()
    }
}

fn render(config: &ExperimentConfig, execution: Execution, format: Format) -> String {
    let report = run_experiment_with(config, execution).unwrap();
    let mut out = Vec::new();
    write_report(&report, format, &mut out).unwrap();
    String::from_utf8(out).unwrap()
}

#[test]
fn serial_and_parallel_reports_are_identical() {
    let c = small(40);
    for format in [Format::Csv, Format::Json] {
        assert_eq!(render(&c, Execution::Serial, format), render(&c, Execution::Parallel, format));
    }
}

#[test]
fn full_sweep_has_one_row_per_cell() {
    let csv = render(&small(5), Execution::Parallel, Format::Csv);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "task,policy,trials,successes,rate,ci_low,ci_high,mean_steps,mean_replans");
    assert_eq!(lines.len(), 16);
    assert!(lines[1].starts_with("clean_dishes,tpvqa,5,"));
}

#[test]
fn reliable_world_with_perfect_oracle_always_succeeds() {
    let mut c = small(1);
    c.world.p_fail = 0.0;
    c.oracle_profile = "perfect".into();
    let report = run_experiment_with(&c, Execution::Parallel).unwrap();
    assert!(report.cells.iter().all(|cell| cell.rate == 1.0));
    assert_eq!(report.seeds.len(), 15);
}

#[test]
fn seeds_depend_only_on_trial_coordinates() {
    let c = small(3);
    let report = run_experiment_with(&c, Execution::Parallel).unwrap();
    let cell = report.seeds.iter().find(|s| s.task == "eat_apple" && s.policy == Policy::TpOpenLoop).unwrap();
    assert_eq!(cell.seeds[2], c.trial_seed("eat_apple", Policy::TpOpenLoop, 2));
    let mut other = c.clone();
    other.tasks.reverse();
    other.policies = vec![Policy::TpOpenLoop];
    let report2 = run_experiment_with(&other, Execution::Serial).unwrap();
    let a = report.cells.iter().find(|x| x.task == "eat_apple" && x.policy == Policy::TpOpenLoop).unwrap();
    let b = report2.cells.iter().find(|x| x.task == "eat_apple").unwrap();
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn wilson_interval_brackets_the_rate(trials in 1usize..5000, frac in 0.0f64..=1.0) {
        let successes = ((trials as f64) * frac).round() as usize;
        let (rate, lo, hi) = summarize(successes, trials).unwrap();
        prop_assert!(0.0 <= lo && lo <= rate && rate <= hi && hi <= 1.0);
    }

    #[test]
    fn wilson_interval_narrows_with_more_trials(k in 1usize..50, num in 0usize..=4) {
        // Same rate num/4 at 4k and 8k trials.
        let (_, lo1, hi1) = summarize(num * k, 4 * k).unwrap();
        let (_, lo2, hi2) = summarize(2 * num * k, 8 * k).unwrap();
        prop_assert!(hi2 - lo2 < hi1 - lo1);
    }
}

fn run_cli(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("planmon").chain(args.iter().copied());
    let code = dispatch(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn cli_plans_bundled_and_file_tasks() {
    let (code, out, _) = run_cli(&["plan", "--task", "clean_dishes"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out, "find(plate)\npickup(plate)\nfind(sink)\nwash(plate)\n");

    let dir = tempfile::tempdir().unwrap();
    let domain = dir.path().join("kitchen.pddl");
    let problem = dir.path().join("clean_dishes.pddl");
    std::fs::write(&domain, planmon::assets::KITCHEN_DOMAIN).unwrap();
    std::fs::write(&problem, planmon::assets::CLEAN_DISHES).unwrap();
    let (code, out2, _) = run_cli(&[
        "plan",
        "--domain",
        domain.to_str().unwrap(),
        "--problem",
        problem.to_str().unwrap(),
    ]);
    assert_eq!((code, out2.lines().count()), (EXIT_OK, 4));
}

#[test]
fn cli_reports_unsolvable_and_parse_errors_as_domain_errors() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("p.pddl");
    std::fs::write(&problem, "(define (problem p) (:domain kitchen) (:init) (:goal (clean knife)))").unwrap();
    let (code, out, err) = run_cli(&["plan", "--problem", problem.to_str().unwrap()]);
    assert_eq!((code, out.as_str(), err.trim()), (EXIT_DOMAIN, "", "unsolvable"));

    std::fs::write(&problem, "(define (problem p)").unwrap();
    let (code, _, err) = run_cli(&["plan", "--problem", problem.to_str().unwrap()]);
    assert_eq!(code, EXIT_DOMAIN);
    assert!(err.starts_with(problem.to_str().unwrap()), "{err}");
}

#[test]
fn cli_validates_plans() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.txt");
    std::fs::write(&plan, "find(plate)\npickup(plate)\nfind(sink)\nwash(plate)\n").unwrap();
    let (code, out, _) = run_cli(&["validate", "--task", "clean_dishes", "--plan", plan.to_str().unwrap()]);
    assert_eq!((code, out.as_str()), (EXIT_OK, "valid\n"));

    std::fs::write(&plan, "find(plate)\npickup(plate)\nwash(plate)\n").unwrap();
    let (code, out, err) = run_cli(&["validate", "--task", "clean_dishes", "--plan", plan.to_str().unwrap()]);
    assert_eq!((code, out.as_str(), err.as_str()), (EXIT_DOMAIN, "", "invalid plan: step 3 inapplicable\n"));
}

#[test]
fn cli_renders_questions() {
    let (code, out, _) = run_cli(&["query", "--atom", "in_hand(plate)", "--style", "precondition"]);
    assert_eq!((code, out.as_str()), (EXIT_OK, "Is the plate in a robot's hand?\n"));
    let (_, out, _) = run_cli(&["query", "--action", "wash(plate)", "--style", "affordance"]);
    assert_eq!(out, "Is it possible to wash plate here?\n");
    let (code, _, _) = run_cli(&["query", "--atom", "levitating(plate)", "--style", "effect"]);
    assert_eq!(code, EXIT_DOMAIN);
}

#[test]
fn cli_usage_errors_exit_with_two() {
    for args in [
        &["frobnicate"][..],
        &["plan"],
        &["plan", "--task", "clean_dishes", "--bogus"],
        &["trial", "--policy", "palme", "--task", "clean_dishes"],
        &["trial", "--policy", "tp", "--task", "make_tea"],
        &["experiment", "--format", "xml"],
    ] {
        let (code, out, err) = run_cli(args);
        assert_eq!(code, EXIT_USAGE, "{args:?}");
        assert!(out.is_empty() && !err.is_empty(), "{args:?}");
    }
}

#[test]
fn cli_trial_output_is_seed_determined() {
    let args = ["trial", "--policy", "tpvqa", "--task", "serve_breakfast", "--seed", "3", "--trace"];
    let (code, a, _) = run_cli(&args);
    assert_eq!(code, EXIT_OK);
    assert_eq!(a, run_cli(&args).1);
    for line in a.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
    let last: serde_json::Value = serde_json::from_str(a.lines().last().unwrap()).unwrap();
    assert_eq!(last["seed"], 3);
}

#[test]
fn cli_experiment_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(&config, "tasks = [\"clean_dishes\"]\npolicies = [\"tp\", \"tpvqa\"]\ntrials_per_cell = 20\n").unwrap();
    let out = dir.path().join("r.csv");
    let args = ["experiment", "--config", config.to_str().unwrap(), "--seed", "4", "--out", out.to_str().unwrap()];
    let (code, stdout, err) = run_cli(&args);
    assert_eq!((code, stdout.as_str()), (EXIT_OK, ""));
    assert!(err.contains("2 cells"), "{err}");
    let first = std::fs::read_to_string(&out).unwrap();
    assert_eq!(first.lines().count(), 3);
    run_cli(&args);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), first);

    let (code, json, _) = run_cli(&["experiment", "--config", config.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["cells"].as_array().unwrap().len(), 2);
}
