//! Running protocols on generated graphs: single runs with oracle and
//! bound checks, benchmark sweeps, and invariant suites.

mod bench;
mod run;
mod verify;

pub use bench::{bench, write_csv, BenchConfig, BenchRow};
pub use run::{
    default_max_rounds, message_space, random_params, run, seeded_messages, seeded_params,
    upper_expr, Params, Protocol, RunError, RunResult, RunSummary,
};
pub use verify::{verify, CheckResult, Suite};
