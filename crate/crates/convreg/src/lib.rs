//! Convex regression by shape-constrained least squares.
//!
//! Fits a convex function to observations `(x̄_ℓ, ȳ_ℓ)` by solving
//!
//! ```text
//!   minimize    ½ Σ_ℓ (y_ℓ − ȳ_ℓ)²   (+ γ/2 ‖ξ‖² when regularized)
//!   subject to  y_{ℓ₂} − y_{ℓ₁} + ξ_{ℓ₁}ᵀ(x̄_{ℓ₁} − x̄_{ℓ₂}) ≥ 0
//!               for every ordered pair (ℓ₁, ℓ₂),
//! ```
//!
//! where `y_ℓ` is the fitted value and `ξ_ℓ` a subgradient at `x̄_ℓ`. The
//! constraints force the fitted values to lie on some convex function; the
//! fitted model extends to all of `R^n` as the max-affine function
//! `f̂(x) = max_ℓ { y_ℓ + ξ_ℓᵀ(x − x̄_ℓ) }`.
//!
//! Four solvers are provided, all sharing the matrix-free constraint
//! operators from [`ops`]:
//!
//! * [`papg`] — an accelerated proximal gradient method on a partial dual:
//!   the points are split into `K` blocks, only the cross-block constraints
//!   are dualized, and each gradient evaluation solves `K` independent block
//!   QPs (optionally in parallel). Includes a continuation scheme that
//!   drives the regularization to zero geometrically.
//! * [`ipm`] — a primal-dual path-following interior-point method whose
//!   Newton systems are solved through a block-arrowhead factorization
//!   ([`arrowhead`]) in `O(N³ + N²n² + 2Nn³)` flops per step instead of
//!   `O(N³(n+1)³)` for a dense solve.
//! * [`asm`] — a primal active-set method with incremental Cholesky
//!   updates/downdates of the working-set Gram matrix.
//! * [`admm`] — a multi-block ADMM on the unregularized problem.
//!
//! [`synth`] generates reproducible synthetic benchmark instances and
//! [`oracle`] certifies solutions at small scale with an independent dense
//! solver, including the least-norm subgradient selection for the
//! unregularized problem.

pub mod admm;
pub mod arrowhead;
pub mod asm;
pub mod bounds;
pub mod dataset;
pub mod error;
pub mod io;
pub mod ipm;
pub mod la;
pub mod ops;
pub mod oracle;
pub mod papg;
pub mod report;
pub mod synth;

pub use dataset::{Dataset, Partition, PrimalPoint};
pub use error::Error;
pub use report::{RunCaps, SolveReport, StopRule, Termination};
