//! Compiling source tests and checking the compiled code against them.

mod batch;
mod disasm;
mod lift;
mod lower;
mod prepare;
mod profile;
mod run;

pub use disasm::{parse_assembly, parse_listing, parse_objdump, Disassembly, Relocation, SymbolMap};
pub use lower::{lower_aarch64, LoweringOptions};
pub use prepare::{function_name, observed_registers, prepare_source};
pub use lift::asm_to_litmus;
pub use profile::{builtin_profiles, load_profiles, parse_profiles, CompilerProfile, ProfileKind};
pub use run::{compile_and_disassemble, run_pipeline, PipelineOptions, PipelineRun, Stage};
pub use batch::{run_batch, BatchEntry, BatchSummary, ProfileSummary};
