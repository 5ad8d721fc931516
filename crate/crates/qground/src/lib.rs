//! File formats, evaluation and parallel drivers around `qground-core`.

pub mod checks;
pub mod eval;
pub mod io;
pub mod pddl;
pub mod pipeline;
