//! Configuration-manifold primitives.
//!
//! Charts are single global coordinate charts on ℝⁿ. The flat chart is
//! exact; curved charts take a user metric `q ↦ g(q)` whose derivatives are
//! taken by central finite differences with step `1e-5·(1+|q_i|)`.

mod chart;
mod expmap;
mod frame;
mod trajectory;

pub use chart::{fd_step, Christoffel, MetricChart, MetricFn, MetricKind, Potential};
pub use expmap::{exp_map, log_map, ExpOptions};
pub use frame::{
    coordinate_h1_norm_sq, frame_h1_norm_sq, parallel_frame, Frame, FrameOptions, V_TOL,
};
pub use trajectory::{
    hamiltonian, solve_classical_trajectory, ClassicalTrajectory, TrajectoryOptions,
    TrajectorySolver,
};

/// Hermite cubic through `(q0, v0)` at `s = 0` and `(q1, v1)` at `s = 1`,
/// with `h` the physical step. Returns position and velocity at `s`.
pub(crate) fn hermite(
    q0: &nalgebra::DVector<f64>,
    v0: &nalgebra::DVector<f64>,
    q1: &nalgebra::DVector<f64>,
    v1: &nalgebra::DVector<f64>,
    h: f64,
    s: f64,
) -> (nalgebra::DVector<f64>, nalgebra::DVector<f64>) {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let d00 = 6.0 * s2 - 6.0 * s;
    let d10 = 3.0 * s2 - 4.0 * s + 1.0;
    let d01 = -6.0 * s2 + 6.0 * s;
    let d11 = 3.0 * s2 - 2.0 * s;
    let q = q0 * h00 + v0 * (h10 * h) + q1 * h01 + v1 * (h11 * h);
    let v = (q0 * d00 + q1 * d01) / h + v0 * d10 + v1 * d11;
    (q, v)
}
