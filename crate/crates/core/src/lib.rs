pub mod error;
pub mod exec;
pub mod codegen;
pub mod compile;
pub mod fusion;
pub mod ir;
pub mod isa;
pub mod search;
pub mod sim;
pub mod tiling;
pub mod zoo;

pub use error::{Error, Result};
