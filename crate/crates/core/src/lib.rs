//! Truthful-in-expectation mechanism for combinatorial public projects with
//! matroid-rank-sum valuations.
//!
//! The allocation rule maximizes expected welfare *after* rounding: it solves
//! `max_x E_{S∼r_k(x)}[Σ_i v_i(S)]` over `{x ∈ [0,1]^m : Σx ≤ k}`, where `r_k` is
//! the k-bounded-lottery rounding scheme, and then samples `S ∼ r_k(x*)`. The
//! objective is concave for rank-sum valuations and its value and gradient are
//! exact lottery-value queries, so the rule is maximal-in-distributional-range
//! and VCG payments make it truthful in expectation.

pub mod error;
pub mod io;
pub mod lottery;
pub mod mechanism;
pub mod sets;
pub mod solver;
pub mod valuations;
pub mod verify;

pub use error::{Error, Result};
pub use lottery::{FractionalSolution, Rounding};
pub use mechanism::{Instance, MechanismConfig, MechanismOutcome};
pub use sets::ProjectSet;
pub use solver::{ConvexProgram, SolveReport, SolverConfig};
pub use valuations::{
    CoveragePoint, LotterySpec, Matroid, MatroidKind, MrsValuation, RankTerm, Representation,
};
