//! Test transformations: local persistence, peephole optimisation of
//! compiled tests, and pattern generation.

mod generate;
mod peephole;
mod persist;

pub use generate::{generate_pattern_test, generate_pattern_tests, parse_grid, test_name, Glue, PatternSpec, Shape};
pub use peephole::{optimize_asm, OptStats, PeepholeRule};
pub use persist::{persist_locals, PersistMode, PersistencePlan};
