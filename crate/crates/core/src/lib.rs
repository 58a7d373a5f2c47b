//! Maximum a posteriori Kalman smoothing when the process and measurement
//! noise covariances are known smooth functions of the state.
//!
//! The smoother minimizes
//!
//! ```text
//! K(x) = 1/2 |V(x) c(x)|^2 - log det V(x)
//! ```
//!
//! where `c(x)` stacks the process and measurement residuals and `V(x)` is
//! the block-diagonal matrix of inverse Cholesky factors. Each outer
//! Gauss-Newton iteration linearizes `V c` and `diag V`, solves the resulting
//! convex log-barrier subproblem with a damped primal-dual Newton method, and
//! backtracks along the direction. All linear algebra is block tridiagonal,
//! so every iteration costs `O(n^3 N)` like the classic smoother.
//!
//! Modules:
//!
//! * [`blocktri`]: block-tridiagonal Cholesky factor and solve.
//! * [`statespace`]: the model trait, `c(x)`, `V(x)` and the Jacobian of `c`.
//! * [`objective`]: `K(x)`, its gradient and the subproblem data.
//! * [`subproblem`]: the interior-point direction solve.
//! * [`ggn`]: the outer loop.
//! * [`classic`]: linear-Gaussian Kalman filter and RTS smoother.
//! * [`experiment`]: the synthetic benchmark used by the CLI.

pub mod blocktri;
pub mod classic;
pub mod error;
pub mod experiment;
pub mod ggn;
pub mod objective;
pub mod statespace;
pub mod subproblem;
#[doc(hidden)]
pub mod testing;

pub use blocktri::{BlockTriFactorization, BlockTridiagonalMatrix};
pub use error::{Result, SmootherError};
pub use ggn::{smooth, GgnConfig, GgnTrace, SmootherSolution, Status};
pub use objective::{assemble_subproblem, eval_k, grad_k, ObjectiveEval, SubproblemData};
pub use statespace::{FactorDerivative, StateSequence, StateSpaceModel};
pub use subproblem::{solve_subproblem, InnerOptions, KktTriple, SubproblemResult};
