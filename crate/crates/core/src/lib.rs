//! Plan-execution monitoring: a STRIPS planner whose plans are checked
//! step by step against yes/no visual questions, with belief repair,
//! replanning and re-execution, plus a stochastic kitchen simulator and a
//! Monte Carlo harness for comparing monitoring policies.

pub mod assets;
pub mod cli;
pub mod executive;
pub mod expharness;
pub mod pddl;
pub mod planner;
pub mod rng;
pub mod vqa;
pub mod worldsim;
