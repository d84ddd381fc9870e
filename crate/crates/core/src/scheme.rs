//! Configuration and bookkeeping shared by the PDE solvers.

use std::sync::Arc;

use crate::caputo::{cached_kernel, CaputoMemory, DirectL1Memory, FastKernel, FastMemory};
use crate::error::Result;
use crate::grid::Variant;
use crate::soe::SumOfExponentials;

/// Where the fast variant gets its kernels from.
#[derive(Debug, Clone)]
pub enum KernelSource {
    /// Build (or fetch from the process cache) for `[dt, max(T, 1)]` at the run tolerance.
    Build { reduce: bool },
    /// Reuse expansions certified from some `delta <= dt`, e.g. one built for the
    /// finest grid of a sweep. `half` is only consulted by solvers that need
    /// the order-`alpha/2` kernel.
    Shared {
        alpha: Arc<SumOfExponentials>,
        half: Option<Arc<SumOfExponentials>>,
    },
}

/// Solver options common to the linear and nonlinear problems.
#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub variant: Variant,
    /// Kernel tolerance of the fast variant; ignored by the direct one.
    pub eps: f64,
    pub kernels: KernelSource,
    /// Rebuild and refactor the step matrix at every step instead of once.
    pub reassemble_each_step: bool,
}

impl SolveConfig {
    pub fn direct() -> Self {
        Self {
            variant: Variant::Direct,
            eps: 0.0,
            kernels: KernelSource::Build { reduce: true },
            reassemble_each_step: false,
        }
    }

    pub fn fast(eps: f64) -> Self {
        Self {
            variant: Variant::Fast,
            eps,
            kernels: KernelSource::Build { reduce: true },
            reassemble_each_step: false,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_kernels(mut self, kernels: KernelSource) -> Self {
        self.kernels = kernels;
        self
    }

    pub fn with_reassembly(mut self, on: bool) -> Self {
        self.reassemble_each_step = on;
        self
    }

    /// Tolerance that enters the analysis constants: zero for the direct scheme.
    pub fn analysis_eps(&self) -> f64 {
        match self.variant {
            Variant::Direct => 0.0,
            Variant::Fast => self.eps,
        }
    }
}

/// Cost and size figures of one solver run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    /// Time spent marching, excluding kernel construction.
    pub wall_seconds: f64,
    /// Time spent building kernels (zero when cached or direct).
    pub setup_seconds: f64,
    /// Exponentials in the order-`alpha` kernel (0 for direct).
    pub n_exp: usize,
    /// Exponentials in the order-`alpha/2` kernel, when used.
    pub n_exp_half: usize,
    /// Largest number of resident history scalars over the run.
    pub peak_history_scalars: usize,
    /// Achieved certificate of the order-`alpha` kernel (0 for direct).
    pub certified_error: f64,
    /// Achieved certificate of the order-`alpha/2` kernel, when used.
    pub certified_error_half: f64,
}

/// A memory for `nodes` streams plus the kernel it uses (if any).
pub(crate) struct MemorySetup {
    pub memory: Box<dyn CaputoMemory>,
    pub kernel: Option<Arc<FastKernel>>,
}

/// `which_half` selects the `alpha/2` kernel of a shared source.
pub(crate) fn make_memory(
    cfg: &SolveConfig,
    alpha: f64,
    dt: f64,
    horizon: f64,
    nodes: usize,
    which_half: bool,
) -> Result<MemorySetup> {
    match cfg.variant {
        Variant::Direct => Ok(MemorySetup {
            memory: Box::new(DirectL1Memory::new(alpha, dt, nodes)?),
            kernel: None,
        }),
        Variant::Fast => {
            let kernel = match &cfg.kernels {
                KernelSource::Build { reduce } => cached_kernel(alpha, dt, horizon, cfg.eps, *reduce)?,
                KernelSource::Shared { alpha: a, half } => {
                    let soe = if which_half {
                        half.as_ref().ok_or_else(|| {
                            crate::Error::Configuration("shared kernels lack the boundary-order expansion".into())
                        })?
                    } else {
                        a
                    };
                    Arc::new(FastKernel::new(alpha, dt, (**soe).clone())?)
                }
            };
            Ok(MemorySetup {
                memory: Box::new(FastMemory::new(Arc::clone(&kernel), nodes)),
                kernel: Some(kernel),
            })
        }
    }
}
