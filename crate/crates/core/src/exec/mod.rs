//! Reference executors: a float interpreter for semantics checks, and the
//! 8-bit fixed-point graph and instruction-stream interpreters.

pub mod fixed;
pub mod float;
pub mod graph_exec;
pub mod quant;
pub mod stream_exec;

pub use fixed::{choose_radix, quantize, QTensor};
pub use graph_exec::{run_graph, QTensors, SatStats};
pub use quant::{calibrate, QuantModel};
pub use stream_exec::{run_stream, run_stream_in_order};
