//! Rotationally symmetric Ricci flow laboratory.
//!
//! Warped-product 3-metrics `ds^2 + w(s)^2 g_{S^2}`, their curvature and
//! distances, the symmetric Ricci flow, curvature estimates on flow traces,
//! conformal taming, Jacobi-field comparison bounds and Gromov–Hausdorff
//! experiments on finite metric spaces.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod comparison;
pub mod error;
pub mod estimates;
pub mod flow;
pub mod geodesic;
pub mod gh;
pub mod profiles;
pub mod quad;
pub mod reaction;
pub mod selftest;
pub mod stencil;
pub mod taming;
pub mod warped;

pub use comparison::{
    hessian_rho_check, jacobi_growth, jacobi_sweep, r_bound, r_bound_ln, HessianReport, JacobiProblem,
    JacobiResult, JacobiSweepReport,
};
pub use error::{Error, Result};
pub use estimates::{
    bishop_gromov_check, distance_monitor, lemma52_monitor, monitor_flow, smoothing_bound, volume_continuity,
};
pub use gh::{
    cone_convergence_experiment, gh_exact_small, gh_lower_bound, gh_upper_bound, sample_cone, sample_warped, ConeSpec,
    ConvergenceOptions, ConvergenceReport, Correspondence, FiniteMetricSpace, Lattice, Link,
};
pub use flow::{exact_shrinking_sphere, exact_sphere_state, run, step, FlowConfig, FlowState, FlowTrace, MonitorPair, Stepper};
pub use reaction::{
    integrate_reaction, pinching_check, pinching_sweep, verify_n11, PinchingMode, PinchingParams,
    ReactionState, Trajectory,
};
pub use selftest::{selftest, SelftestReport};
pub use profiles::{Profile, SmoothedCone};
pub use warped::{
    ball_volume, ball_volumes, controlled_growth_check, curvature, model_volume, CurvatureField,
    Fiber, GrowthReport, RadialGrid, Topology, WarpedMetric,
};
