//! Expected welfare and gains from trade, optimal benchmarks, and ratios.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dist::DiscreteJoint;
use crate::error::{Error, Result};
use crate::mechanisms::Mechanism;
use crate::rules::AllocationRule;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Welfare,
    Gft,
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "welfare" => Ok(Objective::Welfare),
            "gft" => Ok(Objective::Gft),
            other => Err(Error::Input(format!("unknown objective `{other}`"))),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Welfare => "welfare",
            Objective::Gft => "gft",
        })
    }
}

/// `E[max(s, b)]`.
pub fn opt_welfare<S: Scalar>(dist: &DiscreteJoint<S>) -> S {
    dist.expectation(|c| c.s.clone().max_of(c.b.clone()))
}

/// `E[max(b - s, 0)]`.
pub fn opt_gft<S: Scalar>(dist: &DiscreteJoint<S>) -> S {
    dist.expectation(|c| (c.b.clone() - &c.s).max_of(S::zero()))
}

pub fn optimum<S: Scalar>(dist: &DiscreteJoint<S>, objective: Objective) -> S {
    match objective {
        Objective::Welfare => opt_welfare(dist),
        Objective::Gft => opt_gft(dist),
    }
}

/// `num / den`, absent when `den` is zero.
pub fn ratio<S: Scalar>(num: &S, den: &S) -> Option<S> {
    if den.is_zero_tol() {
        None
    } else {
        Some(num.clone() / den)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation<S> {
    pub welfare: S,
    pub gft: S,
    pub opt_welfare: S,
    pub opt_gft: S,
    pub ratio_welfare: Option<S>,
    pub ratio_gft: Option<S>,
}

/// Expected gains from trade of trade probabilities aligned with `dist`.
fn gft_of<'a, S: Scalar>(dist: &DiscreteJoint<S>, xs: impl Iterator<Item = &'a S>) -> S {
    dist.cells().iter().zip(xs).map(|(c, x)| x.clone() * &c.p * (c.b.clone() - &c.s)).sum()
}

fn evaluation<S: Scalar>(dist: &DiscreteJoint<S>, gft: S) -> Evaluation<S> {
    let welfare = dist.expectation(|c| c.s.clone()) + &gft;
    let opt_welfare = opt_welfare(dist);
    let opt_gft = opt_gft(dist);
    Evaluation {
        ratio_welfare: ratio(&opt_welfare, &welfare),
        ratio_gft: if opt_gft.is_zero_tol() { None } else { ratio(&opt_gft, &gft) },
        welfare,
        gft,
        opt_welfare,
        opt_gft,
    }
}

/// Welfare counts `x b + (1 - x) s` per cell, so randomized mechanisms are
/// evaluated in expectation.
pub fn evaluate<S: Scalar>(mech: &Mechanism<S>, dist: &DiscreteJoint<S>) -> Result<Evaluation<S>> {
    mech.check_support(dist)?;
    Ok(evaluation(dist, gft_of(dist, mech.cells().iter().map(|c| &c.x))))
}

pub fn evaluate_rule<S: Scalar>(rule: &AllocationRule<S>, dist: &DiscreteJoint<S>) -> Result<Evaluation<S>> {
    rule.check_support(dist)?;
    Ok(evaluation(dist, gft_of(dist, rule.cells().iter().map(|c| &c.x))))
}

pub fn rule_value<S: Scalar>(rule: &AllocationRule<S>, dist: &DiscreteJoint<S>, objective: Objective) -> Result<S> {
    rule.check_support(dist)?;
    let gft = gft_of(dist, rule.cells().iter().map(|c| &c.x));
    Ok(match objective {
        Objective::Welfare => dist.expectation(|c| c.s.clone()) + &gft,
        Objective::Gft => gft,
    })
}
