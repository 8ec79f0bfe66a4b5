use planmon::assets::{load_task, KITCHEN_DOMAIN, TASK_IDS};
use planmon::pddl::parse_domain;
use planmon::planner::plan;
use planmon::vqa::{oracle_answer, OracleProfile, QueryStyle, TemplateTable};
use planmon::worldsim::{RegressionRules, World, WorldConfig};
use proptest::prelude::*;

fn config(p_fail: f64, p_regress: f64, seed: u64) -> WorldConfig {
    let domain = parse_domain(KITCHEN_DOMAIN).unwrap();
    WorldConfig {
        p_fail,
        p_regress,
        ..WorldConfig::new(RegressionRules::kitchen(&domain).unwrap(), seed)
    }
}

#[test]
fn failure_frequency_matches_p_fail() {
    let task = load_task("clean_dishes").unwrap();
    // goto has no preconditions, so every command gets the failure roll.
    let goto = task.action_by_name("goto(sink)").unwrap();
    let mut world = World::reset(&task, config(0.25, 0.25, 11)).unwrap();
    let n = 100_000;
    let failures = (0..n).filter(|_| !world.execute(goto).unwrap().succeeded).count();
    let rate = failures as f64 / n as f64;
    assert!((rate - 0.25).abs() < 0.005, "{rate}");
}

#[test]
fn reliable_world_follows_every_plan_to_the_goal() {
    for id in TASK_IDS {
        let task = load_task(id).unwrap();
        let mut world = World::reset(&task, config(0.0, 0.25, 1)).unwrap();
        assert!(!world.goal_reached(&task));
        for a in &plan(&task).plan().unwrap().steps {
            assert!(world.execute(a).unwrap().succeeded);
        }
        assert!(world.goal_reached(&task), "{id}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn regression_implies_failure_and_runs_are_reproducible(
        seed in any::<u64>(),
        p_fail in 0.0f64..=1.0,
        p_regress in 0.0f64..=1.0,
        picks in prop::collection::vec(0usize..1000, 1..40),
        task_index in 0usize..3,
    ) {
        let task = load_task(TASK_IDS[task_index]).unwrap();
        let run = || {
            let mut world = World::reset(&task, config(p_fail, p_regress, seed)).unwrap();
            let mut trace = Vec::new();
            for &k in &picks {
                let a = &task.actions[k % task.actions.len()];
                let o = world.execute(a).unwrap();
                trace.push((o.succeeded, o.regressed, world.goal_reached(&task)));
            }
            trace
        };
        let first = run();
        for &(succeeded, regressed, _) in &first {
            prop_assert!(!(regressed && succeeded));
        }
        prop_assert_eq!(first, run());
    }

    #[test]
    fn oracle_answers_are_reproducible(seed in any::<u64>(), task_index in 0usize..3) {
        let id = TASK_IDS[task_index];
        let task = load_task(id).unwrap();
        let mut world = World::reset(&task, config(0.25, 0.25, seed)).unwrap();
        let obs = world.observe().unwrap();
        let templates = TemplateTable::kitchen();
        let profile = OracleProfile::measured();
        let answers = |s: u64| {
            let mut rng = planmon::rng::stream(s);
            task.atoms
                .iter()
                .filter_map(|a| templates.render_atom(a, QueryStyle::PredicatePrecondition).ok())
                .map(|q| oracle_answer(&q, &obs, &profile, id, &mut rng).unwrap().reply)
                .collect::<Vec<_>>()
        };
        prop_assert_eq!(answers(seed), answers(seed));
    }
}
