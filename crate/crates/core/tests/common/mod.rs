//! Random STRIPS tasks and an explicit-state shortest-plan oracle.

use std::collections::BTreeSet;

use planmon::pddl::{applicable, apply, GroundAction, GroundAtom, GroundTask, State};
use proptest::prelude::*;

fn atom(i: usize) -> GroundAtom {
    GroundAtom::new(format!("p{i}"), Vec::<String>::new())
}

fn subset_of(mask: u16, n: usize) -> State {
    (0..n).filter(|i| mask >> i & 1 == 1).map(atom).collect()
}

prop_compose! {
    pub fn random_task()(n in 1usize..=8, k in 0usize..=12)
        (masks in prop::collection::vec((any::<u16>(), any::<u16>(), any::<u16>()), k),
         init in any::<u16>(), goal in any::<u16>(), n in Just(n)) -> GroundTask {
        let actions = masks
            .iter()
            .enumerate()
            .map(|(i, &(p, a, d))| GroundAction {
                schema: format!("a{i:02}"),
                binding: vec![],
                pre: subset_of(p & (p >> 3), n),
                add: subset_of(a, n),
                del: subset_of(d & !a, n),
            })
            .collect();
        GroundTask {
            name: "random".into(),
            objects: vec![],
            atoms: (0..n).map(atom).collect(),
            init: subset_of(init, n),
            goal: subset_of(goal & (goal >> 2), n),
            actions,
        }
    }
}

/// Level-by-level reachability over explicit state sets.
pub fn brute_force_shortest(task: &GroundTask) -> Option<usize> {
    let mut seen: BTreeSet<State> = BTreeSet::from([task.init.clone()]);
    let mut frontier = vec![task.init.clone()];
    let mut depth = 0;
    loop {
        if frontier.iter().any(|s| task.goal.is_subset(s)) {
            return Some(depth);
        }
        let mut next = Vec::new();
        for s in &frontier {
            for a in &task.actions {
                if applicable(s, a) {
                    let t = apply(s, a);
                    if seen.insert(t.clone()) {
                        next.push(t);
                    }
                }
            }
        }
        if next.is_empty() {
            return None;
        }
        frontier = next;
        depth += 1;
    }
}

