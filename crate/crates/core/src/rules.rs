//! Allocation rules: a trade probability for every cell of a joint.

use serde::Serialize;

use crate::dist::{Cell, DiscreteJoint};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RuleCell<S> {
    pub s: S,
    pub b: S,
    pub x: S,
}

/// Cells are kept in the order of the joint they were built for.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AllocationRule<S> {
    cells: Vec<RuleCell<S>>,
}

impl<S: Scalar> AllocationRule<S> {
    pub fn from_fn<F: FnMut(&Cell<S>) -> S>(dist: &DiscreteJoint<S>, mut f: F) -> Self {
        let cells = dist.cells().iter().map(|c| RuleCell { s: c.s.clone(), b: c.b.clone(), x: f(c) }).collect();
        AllocationRule { cells }
    }

    pub fn from_indicator<F: FnMut(&Cell<S>) -> bool>(dist: &DiscreteJoint<S>, mut f: F) -> Self {
        Self::from_fn(dist, |c| if f(c) { S::one() } else { S::zero() })
    }

    pub fn all_trade(dist: &DiscreteJoint<S>) -> Self {
        Self::from_indicator(dist, |_| true)
    }

    pub fn no_trade(dist: &DiscreteJoint<S>) -> Self {
        Self::from_indicator(dist, |_| false)
    }

    /// Builds a rule from cells in any order, matching them to `dist`.
    pub fn for_joint(dist: &DiscreteJoint<S>, cells: Vec<RuleCell<S>>) -> Result<Self> {
        let mut slots: Vec<Option<S>> = vec![None; dist.len()];
        for c in cells {
            if c.x.definitely_lt(&S::zero()) || c.x.definitely_gt(&S::one()) {
                return Err(Error::Parameter(format!("trade probability {} outside [0, 1]", c.x)));
            }
            let i = dist.position(&c.s, &c.b).ok_or(Error::SupportMismatch)?;
            if slots[i].replace(c.x).is_some() {
                return Err(Error::SupportMismatch);
            }
        }
        let cells = dist
            .cells()
            .iter()
            .zip(slots)
            .map(|(c, x)| x.map(|x| RuleCell { s: c.s.clone(), b: c.b.clone(), x }))
            .collect::<Option<Vec<_>>>()
            .ok_or(Error::SupportMismatch)?;
        Ok(AllocationRule { cells })
    }

    pub(crate) fn from_raw(cells: Vec<RuleCell<S>>) -> Self {
        AllocationRule { cells }
    }

    pub fn cells(&self) -> &[RuleCell<S>] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn trades(&self, i: usize) -> bool {
        self.cells[i].x.definitely_gt(&S::zero())
    }

    pub fn trade_count(&self) -> usize {
        (0..self.cells.len()).filter(|&i| self.trades(i)).count()
    }

    pub fn is_deterministic(&self) -> bool {
        self.cells.iter().all(|c| c.x.is_zero_tol() || c.x.approx_eq(&S::one()))
    }

    pub fn check_support(&self, dist: &DiscreteJoint<S>) -> Result<()> {
        check_aligned(dist, self.cells.iter().map(|c| (&c.s, &c.b)), self.cells.len())
    }
}

pub(crate) fn check_aligned<'a, S: Scalar>(
    dist: &DiscreteJoint<S>,
    keys: impl Iterator<Item = (&'a S, &'a S)>,
    len: usize,
) -> Result<()> {
    if len != dist.len() {
        return Err(Error::SupportMismatch);
    }
    for (c, (s, b)) in dist.cells().iter().zip(keys) {
        if !c.s.approx_eq(s) || !c.b.approx_eq(b) {
            return Err(Error::SupportMismatch);
        }
    }
    Ok(())
}
