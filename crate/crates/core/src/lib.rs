//! Bilateral trade: welfare and gains-from-trade guarantees of simple
//! mechanisms on finite joint value distributions, exact decisions of
//! Bayesian implementability, and the distribution families that separate
//! mechanism classes.

pub mod constructions;
pub mod dist;
pub mod double_auction;
pub mod error;
pub mod ic;
pub mod io;
pub mod mechanisms;
pub mod metrics;
pub mod repro;
pub mod rules;
pub mod scalar;

pub use dist::{build_joint, cdf, condition, Atom, Cell, DiscreteJoint, Marginal, Side};
pub use error::{Error, Result};
pub use mechanisms::{MechCell, Mechanism, TieBreak};
pub use metrics::{evaluate, rule_value, Evaluation, Objective};
pub use rules::{AllocationRule, RuleCell};
pub use scalar::{Mode, Rational, Scalar, TOLERANCE};
