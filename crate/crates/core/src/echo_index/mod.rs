//! Numerical estimation of the echo index and related diagnostics.
//!
//! An ensemble of initial conditions is driven by one input realization; the
//! asymptotic tails are grouped by single linkage, and the number of groups is
//! the estimate. Pullback fibres approximate the natural association of the
//! process; bisection locates the moving basin boundary between two
//! attracting solutions.

mod cluster;
mod ensemble;
mod fibre;
mod hausdorff;
mod separatrix;

pub use cluster::{
    cluster_asymptotics, estimate_echo_index, ClusterSummary, EchoIndex, EchoIndexReport, EscalationLevel,
    IndexProtocol, ShiftCheck, WindowDiagnostic,
};
pub use ensemble::{run_ensemble, sample_initial_conditions, EnsembleRun, InitialConditions};
pub use fibre::{point_set_diameter, pullback_fibre, FibreGrid, PullbackFibre};
pub use hausdorff::hausdorff_semidistance;
pub use separatrix::{separatrix_bisect, tracking_time, BisectionStep, SeparatrixConfig, SeparatrixReport};
