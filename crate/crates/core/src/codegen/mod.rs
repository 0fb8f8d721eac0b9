//! Lowering, DDR allocation, dependency assignment and program assembly.

pub mod ddr;
pub mod deps;
pub mod lower;

pub use deps::{accesses, assign_dependencies};
pub use ddr::{allocate_ddr, DdrPlan, DdrRegion};
pub use lower::{lower_copy, lower_group, StageIo, TensorView};
