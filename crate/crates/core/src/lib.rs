//! Optimal tie-breaker designs for the two-line regression model.
//!
//! Subjects with running variable `x` are assigned treatment `z = 1` with
//! probability `p(x)`. Designs are compared through the `(1 + z)`-weighted
//! moments `E_p(z)`, `E_p(xz)` and `E_p(x^2 z)`, which fix the information
//! matrix of the regression `y = b0 + b1 x + b2 z + b3 x z + noise`.

pub mod criteria;
pub mod design;
pub mod dist;
pub mod error;
pub mod lp;
pub mod scalar;
pub mod solve_continuous;
pub mod solve_discrete;
pub mod verify;

pub use design::{build_design, convex_combination, is_monotone, moments, DesignFunction, DesignKind, MomentTriple};
pub use dist::{make_distribution, Distribution, DistributionSpec};
pub use error::{Error, Result};
pub use criteria::{Constraints, CriterionSpec, CustomCriterion, Gain};
pub use solve_continuous::{
    canonical_form, optimal_design, solve_extremal, tradeoff_sweep, uniform_closed_form, xz_max, DesignForm,
    DesignParams, ExtremalKind, OptimalDesignResult, TradeoffRecord,
};
pub use solve_discrete::{lp_oracle_discrete, optimal_design_discrete, solve_extremal_discrete, DiscreteInstance, Sense};
pub use verify::{fit_two_line, simulate_variance, SimConfig, SimReport};
