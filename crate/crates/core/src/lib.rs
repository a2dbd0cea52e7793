//! Cycle-level model of a single-issue in-order integer core paired with an
//! FP coprocessor through two blocking hardware queues, a loop transformer
//! that splits mixed integer/FP loop bodies into two communicating threads,
//! and a benchmark harness comparing sequential, memory-communication and
//! queue-communication variants of bundled kernels.

pub mod asm;
pub mod bench;
pub mod dfg;
pub mod isa;
pub mod program;
pub mod sim;
pub mod transform;

pub use asm::{parse_program, print_program, AsmError};
pub use isa::{classify, is_fp_boundary, Instruction, InstrClass, Opcode, Reg, Thread};
pub use program::Program;
