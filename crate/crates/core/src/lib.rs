pub mod banded;
pub mod caputo;
pub mod config;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod linear;
pub mod nonlinear;
pub mod quadrature;
pub mod report;
pub mod scheme;
pub mod selftest;
pub mod soe;
pub mod special;

pub use caputo::{CaputoMemory, DirectL1Memory, FastCaputoState, FastKernel, FastMemory};
pub use error::{Error, Result};
pub use grid::{GridSpec, Variant};
pub use quadrature::QuadratureRule;
pub use report::{ConvergenceReport, ReportRow, ScalingReport, TableReport};
pub use scheme::{KernelSource, SolveConfig, SolveStats};
pub use soe::{SoeBuildPlan, SumOfExponentials};
