//! Distribution families on which simple mechanisms perform worst, and the
//! allocation rules studied on them.
//!
//! Families whose definition involves `e` are discretized floats. All other
//! families are generic over [`Scalar`] and exact when built with [`Rational`].
//!
//! [`Rational`]: crate::scalar::Rational

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::dist::{discretize_on, Density, DiscreteJoint, Grid, Marginal, Rounding, Side};
use crate::error::{Error, Result};
use crate::metrics::opt_welfare;
use crate::rules::AllocationRule;
use crate::scalar::{cmp_scalar, Scalar};

fn check_grid(grid: f64) -> Result<()> {
    if grid > 0.0 && grid.is_finite() {
        Ok(())
    } else {
        Err(Error::DegenerateGrid(grid.to_string()))
    }
}

/// Buyer values on `[1, k]` with `Pr(b >= p) = 1/p`, so every offer on the
/// grid earns revenue 1. Without the top atom the truncated density is
/// renormalized instead.
///
/// Discretized downward: `Pr(b >= p)` is exact at grid offers.
pub fn equal_revenue_buyer(k: f64, atom_at_top: bool, grid: f64) -> Result<Marginal<f64>> {
    if !(k > 1.0) || !k.is_finite() {
        return Err(Error::Parameter(format!("equal revenue support needs k > 1, got {k}")));
    }
    check_grid(grid)?;
    let density = if atom_at_top {
        Density::new().with_piece(1.0, k, |b| -1.0 / b).with_atom(k, 1.0 / k)
    } else {
        let scale = 1.0 / (1.0 - 1.0 / k);
        Density::new().with_piece(1.0, k, move |b| -scale / b)
    };
    discretize_on(&density, Grid::Uniform(grid), Rounding::Down)
}

/// Seller CDF `(b/e) / (b - s + eps)` on `[0, b(e-1)/e + eps]`, with the
/// mass `F(0)` as an atom at zero.
fn equal_profit_density(b: f64, eps: f64) -> Density {
    let top = b * (E - 1.0) / E + eps;
    let cdf = move |s: f64| (b / E) / (b - s + eps);
    Density::new().with_atom(0.0, cdf(0.0)).with_piece(0.0, top, cdf)
}

/// Seller values for which a buyer of value `b` earns `b/e` from every
/// offer in the support. Discretized upward: `F(p)` is exact at grid offers.
pub fn equal_profit_seller(b: f64, grid: f64) -> Result<Marginal<f64>> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::Parameter(format!("buyer value must be positive, got {b}")));
    }
    check_grid(grid)?;
    discretize_on(&equal_profit_density(b, 0.0), Grid::Uniform(grid), Rounding::Up)
}

/// Buyer value 1, seller drawn from `equal_profit_seller(1)`.
pub fn tightness_distribution(grid: f64) -> Result<DiscreteJoint<f64>> {
    let seller = equal_profit_seller(1.0, grid)?;
    Ok(DiscreteJoint::independent(&seller, &Marginal::point(1.0)))
}

/// Correlated family on which every mechanism that is dominant-strategy for
/// the seller loses a constant factor.
#[derive(Clone, Debug)]
pub struct OneSidedLb {
    pub k: u32,
    pub eps: Option<f64>,
    pub grid: Option<f64>,
    /// The isolated top buyer value `k + 1`.
    pub top: f64,
    pub joint: DiscreteJoint<f64>,
}

/// Buyer density `1/(b+eps)^2` on `[1, k]` and the remaining mass at `k+1`.
pub fn one_sided_buyer_density(k: u32, eps: f64) -> Density {
    let kf = f64::from(k);
    Density::new()
        .with_piece(1.0, kf, move |b| -1.0 / (b + eps))
        .with_atom(kf + 1.0, 1.0 / (kf + eps) + eps / (1.0 + eps))
}

/// Builds the family on a scale-graded grid: buyer values use step `n*grid`
/// on `[n, n+1)` and are pushed down; the seller conditional at buyer value
/// `b` uses step `max(1, floor(b))*grid` and is pushed up. Every value is a
/// multiple of `grid`.
pub fn one_sided_lb(k: u32, eps: f64, grid: f64) -> Result<OneSidedLb> {
    if k < 2 {
        return Err(Error::Parameter(format!("k must be at least 2, got {k}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Parameter(format!("eps must lie in (0, 1), got {eps}")));
    }
    check_grid(grid)?;
    let buyer = discretize_on(&one_sided_buyer_density(k, eps), Grid::Graded(grid), Rounding::Down)?;
    let mut cells = Vec::new();
    for atom in buyer.atoms() {
        let step = atom.v.floor().max(1.0) * grid;
        let seller = discretize_on(&equal_profit_density(atom.v, eps), Grid::Uniform(step), Rounding::Up)?;
        cells.extend(seller.atoms().iter().map(|s| (s.v, atom.v, s.p * atom.p)));
    }
    let joint = DiscreteJoint::new(cells)?;
    Ok(OneSidedLb { k, eps: Some(eps), grid: Some(grid), top: f64::from(k) + 1.0, joint })
}

impl OneSidedLb {
    /// Recovers the family structure from a bare joint: the largest buyer
    /// value must be an integer `k + 1` isolated above `[1, k]`.
    pub fn from_joint(joint: DiscreteJoint<f64>) -> Result<Self> {
        let buyers = joint.values(Side::Buyer);
        let top = *buyers.last().ok_or_else(|| Error::Family("empty joint".into()))?;
        let k = top - 1.0;
        if k < 2.0 || !k.approx_eq(&k.round()) {
            return Err(Error::Family(format!("top buyer value {top} is not an integer k+1 with k >= 2")));
        }
        let below = &buyers[..buyers.len() - 1];
        if below.iter().any(|b| b.definitely_lt(&1.0) || b.definitely_gt(&k)) {
            return Err(Error::Family("buyer values below the top must lie in [1, k]".into()));
        }
        if !joint.cells().iter().any(|c| c.s == 0.0) {
            return Err(Error::Family("no seller atom at zero".into()));
        }
        Ok(OneSidedLb { k: k.round() as u32, eps: None, grid: None, top, joint })
    }

    /// Welfare of `xp_rule(p)` for every `p` at once.
    pub fn welfare_profile(&self) -> XpProfile {
        let mut base = 0.0;
        let mut column = Vec::new();
        let mut rows = Vec::new();
        for c in self.joint.cells() {
            if c.b.approx_eq(&self.top) {
                base += c.p * c.b;
            } else if c.s == 0.0 {
                column.push((c.b, c.p * c.b));
            } else {
                base += c.p * c.s;
                rows.push((c.s, c.p * (c.b - c.s)));
            }
        }
        column.sort_by(|a, b| cmp_scalar(&a.0, &b.0));
        rows.sort_by(|a, b| cmp_scalar(&a.0, &b.0));
        let mut column_suffix = vec![0.0; column.len() + 1];
        for i in (0..column.len()).rev() {
            column_suffix[i] = column_suffix[i + 1] + column[i].1;
        }
        let mut row_prefix = vec![0.0; rows.len() + 1];
        for i in 0..rows.len() {
            row_prefix[i + 1] = row_prefix[i] + rows[i].1;
        }
        XpProfile {
            base,
            column_values: column.into_iter().map(|c| c.0).collect(),
            column_suffix,
            row_values: rows.into_iter().map(|r| r.0).collect(),
            row_prefix,
            opt: opt_welfare(&self.joint),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct XpPoint {
    pub p: f64,
    pub welfare: f64,
    pub ratio: f64,
}

/// Prefix sums over the cells whose trade decision depends on `p`.
#[derive(Clone, Debug)]
pub struct XpProfile {
    base: f64,
    column_values: Vec<f64>,
    column_suffix: Vec<f64>,
    row_values: Vec<f64>,
    row_prefix: Vec<f64>,
    pub opt: f64,
}

impl XpProfile {
    pub fn welfare_at(&self, p: f64) -> f64 {
        let i = self.column_values.partition_point(|b| b.definitely_lt(&p));
        let j = self.row_values.partition_point(|s| s.le_tol(&p));
        self.base + self.column_suffix[i] + self.row_prefix[j]
    }

    pub fn point(&self, p: f64) -> XpPoint {
        let welfare = self.welfare_at(p);
        XpPoint { p, welfare, ratio: self.opt / welfare }
    }

    /// Best `p`. The welfare only changes at support values, so those
    /// (and 0) are the only candidates.
    pub fn best(&self) -> XpPoint {
        let mut best = self.point(0.0);
        for &p in self.column_values.iter().chain(&self.row_values) {
            let w = self.welfare_at(p);
            if w > best.welfare {
                best = XpPoint { p, welfare: w, ratio: self.opt / w };
            }
        }
        best
    }
}

/// Trade iff `b = k+1`, or `s = 0` and `p <= b <= k`, or `0 < s <= p`.
pub fn xp_rule(lb: &OneSidedLb, p: f64) -> AllocationRule<f64> {
    AllocationRule::from_indicator(&lb.joint, |c| {
        if c.b.approx_eq(&lb.top) {
            true
        } else if c.s == 0.0 {
            c.b.ge_tol(&p)
        } else {
            c.s.le_tol(&p)
        }
    })
}

/// Finite-`k` lower bound on the ratio of every `x_p`.
pub fn one_sided_bound(k: u32) -> f64 {
    let kf = f64::from(k);
    let ln = kf.ln();
    (ln + 1.0 + 1.0 / kf) / ((1.0 - 1.0 / E) * ln + 1.6 + 1.0 / kf)
}

/// Independent 2x2 joint with buyer values {1, b2} and seller values {0, s2}.
#[derive(Clone, Debug, PartialEq)]
pub struct SimpleTwoByTwo<S> {
    pub x1: S,
    pub q1: S,
    pub eps: S,
    pub b2: S,
    pub s2: S,
    pub joint: DiscreteJoint<S>,
}

/// `x1 = Pr(b = 1)`, `q1 = Pr(s = 0)`. The values are chosen so that the
/// row and column rules tie and the welfare-maximizing rule is not
/// implementable.
pub fn simple_2x2<S: Scalar>(x1: S, q1: S, eps: S) -> Result<SimpleTwoByTwo<S>> {
    let (zero, one) = (S::zero(), S::one());
    if !(x1 > zero && x1 < one && q1 > zero && q1 < one) {
        return Err(Error::Parameter(format!("need 0 < x1, q1 < 1, got x1={x1}, q1={q1}")));
    }
    if eps < zero {
        return Err(Error::Parameter(format!("eps must be non-negative, got {eps}")));
    }
    let x2 = one.clone() - &x1;
    let q2 = one.clone() - &q1;
    let b2 = one.clone() / &x2 + x1.clone() / (x2.clone() * &q2) + eps.clone() / &q1;
    let s2 = b2.clone() * &q2 + q1.clone() / &x2 + &eps;
    if !(b2 > s2 && s2 > one) {
        return Err(Error::Parameter(format!("ordering b2 > s2 > 1 fails: b2={b2}, s2={s2}")));
    }
    let joint = DiscreteJoint::new(vec![
        (zero.clone(), one.clone(), x1.clone() * &q1),
        (s2.clone(), one.clone(), x1.clone() * &q2),
        (zero, b2.clone(), x2.clone() * &q1),
        (s2.clone(), b2.clone(), x2 * &q2),
    ])?;
    Ok(SimpleTwoByTwo { x1, q1, eps, b2, s2, joint })
}

/// `(s2 - x1/x2, q2/q1 * (b2 - s2) + 1)`. When the first exceeds the
/// second, neither the welfare-maximizing rule nor the diagonal rule is
/// Bayesian implementable.
pub fn two_by_two_sides<S: Scalar>(x1: &S, q1: &S, b2: &S, s2: &S) -> (S, S) {
    let x2 = S::one() - x1;
    let q2 = S::one() - q1;
    let lhs = s2.clone() - x1.clone() / &x2;
    let rhs = q2 / q1 * (b2.clone() - s2) + S::one();
    (lhs, rhs)
}

impl<S: Scalar> SimpleTwoByTwo<S> {
    pub fn infeasibility_sides(&self) -> (S, S) {
        two_by_two_sides(&self.x1, &self.q1, &self.b2, &self.s2)
    }

    /// Trade whenever `b >= s`.
    pub fn optimal_rule(&self) -> AllocationRule<S> {
        AllocationRule::from_indicator(&self.joint, |c| c.s <= c.b)
    }

    /// Trade on (0, 1) and (s2, b2).
    pub fn diagonal_rule(&self) -> AllocationRule<S> {
        AllocationRule::from_indicator(&self.joint, |c| (c.s == S::zero()) == (c.b == S::one()))
    }

    /// Trade whenever `s = 0`.
    pub fn column_rule(&self) -> AllocationRule<S> {
        AllocationRule::from_indicator(&self.joint, |c| c.s == S::zero())
    }

    /// Trade whenever `b = b2`.
    pub fn row_rule(&self) -> AllocationRule<S> {
        AllocationRule::from_indicator(&self.joint, |c| c.b == self.b2)
    }
}

/// Parameters of an independent joint on {0, s2} x {1, b2}.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoByTwoShape<S> {
    pub x1: S,
    pub q1: S,
    pub b2: S,
    pub s2: S,
}

impl<S: Scalar> TwoByTwoShape<S> {
    pub fn of(dist: &DiscreteJoint<S>) -> Result<Self> {
        let sellers = dist.values(Side::Seller);
        let buyers = dist.values(Side::Buyer);
        if dist.len() != 4 || sellers.len() != 2 || buyers.len() != 2 {
            return Err(Error::Family("expected a full 2x2 support".into()));
        }
        if !sellers[0].is_zero_tol() || !buyers[0].approx_eq(&S::one()) {
            return Err(Error::Family("expected seller values {0, s2} and buyer values {1, b2}".into()));
        }
        let (s2, b2) = (sellers[1].clone(), buyers[1].clone());
        let x1 = dist.marginal(Side::Buyer).atoms()[0].p.clone();
        let q1 = dist.marginal(Side::Seller).atoms()[0].p.clone();
        for c in dist.cells() {
            let pb = if c.b.approx_eq(&S::one()) { x1.clone() } else { S::one() - &x1 };
            let ps = if c.s.is_zero_tol() { q1.clone() } else { S::one() - &q1 };
            if !c.p.approx_eq(&(pb * &ps)) {
                return Err(Error::Family("seller and buyer values are not independent".into()));
            }
        }
        Ok(TwoByTwoShape { x1, q1, b2, s2 })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LFamily {
    /// Seller value is 0 unless the buyer has the top value.
    WelfareCorrelated,
    /// Independent values; off the L the seller value exceeds the buyer's.
    GftIndependent,
}

/// Parameters of an L-shaped joint. Indices are 0-based: `b[0] = 1`,
/// `s[0] = 0`, and the L is the column `s = 0` plus the row `b = b[k-1]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LShapedSpec<S> {
    pub k: usize,
    pub eps: Option<S>,
    pub b: Vec<S>,
    pub s: Vec<S>,
    /// Buyer marginal.
    pub x: Vec<S>,
    /// Seller probabilities: conditional on the top buyer value for the
    /// correlated family, unconditional for the independent one.
    pub q: Vec<S>,
    pub family: LFamily,
}

fn pow2<S: Scalar>(e: i32) -> S {
    S::from_i64(2).powi(e)
}

fn check_k(k: usize) -> Result<()> {
    if (2..=62).contains(&k) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("k must lie in [2, 62], got {k}")))
    }
}

fn check_eps<S: Scalar>(eps: &S) -> Result<()> {
    if *eps > S::zero() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("eps must be positive, got {eps}")))
    }
}

fn l_buyer_probs<S: Scalar>(k: usize) -> Vec<S> {
    let mut x: Vec<S> = (1..k).map(|i| pow2(-(i as i32))).collect();
    x.push(pow2(-(k as i32 - 1)));
    x
}

/// Correlated L-shaped family in standard form whose best implementable
/// welfare ratio grows with `k`.
pub fn l_shaped_welfare<S: Scalar>(k: usize, eps: S) -> Result<(DiscreteJoint<S>, LShapedSpec<S>)> {
    check_k(k)?;
    check_eps(&eps)?;
    let ki = k as i64;
    let x = l_buyer_probs::<S>(k);
    let mut q = vec![S::ratio(1, 2)];
    q.extend((1..k).map(|_| S::ratio(1, 2 * (ki - 1))));
    let mut b: Vec<S> = (1..k).map(|i| pow2::<S>(i as i32 - 1) * S::ratio(ki, ki - 1 + i as i64)).collect();
    let xk = x[k - 1].clone();
    let top = (S::one() - &xk + q[0].clone() * &xk + x[0].clone() * (q[0].clone() + &q[1]) / &q[1])
        / (q[0].clone() * &xk)
        + &eps;
    b.push(top.clone());
    let mut s = vec![S::zero()];
    for j in 1..k {
        s.push(top.clone() - x[j - 1].clone() * &b[j - 1] / (xk.clone() * &q[j]));
    }
    let spec = LShapedSpec { k, eps: Some(eps), b, s, x, q, family: LFamily::WelfareCorrelated };
    spec.validate()?;
    Ok((spec.joint()?, spec))
}

/// Independent L-shaped family in standard form whose best implementable
/// gains-from-trade ratio grows with `k`.
pub fn l_shaped_gft<S: Scalar>(k: usize, eps: S) -> Result<(DiscreteJoint<S>, LShapedSpec<S>)> {
    check_k(k)?;
    check_eps(&eps)?;
    let ki = k as i64;
    let x = l_buyer_probs::<S>(k);
    let q: Vec<S> = (0..k).map(|_| S::ratio(1, ki)).collect();
    let mut b: Vec<S> = (1..k).map(|i| pow2::<S>(i as i32) / S::from_i64(1 + i as i64)).collect();
    let xk = x[k - 1].clone();
    let top = S::from_i64(2) / &xk + &eps;
    b.push(top.clone());
    let mut s = vec![S::zero()];
    for j in 1..k {
        s.push(top.clone() - x[j - 1].clone() * &b[j - 1] / &xk);
    }
    let spec = LShapedSpec { k, eps: Some(eps), b, s, x, q, family: LFamily::GftIndependent };
    spec.validate()?;
    Ok((spec.joint()?, spec))
}

impl<S: Scalar> LShapedSpec<S> {
    pub fn validate(&self) -> Result<()> {
        let k = self.k;
        if k < 2 || self.b.len() != k || self.s.len() != k || self.x.len() != k || self.q.len() != k {
            return Err(Error::Parameter("spec vectors must all have length k >= 2".into()));
        }
        if !self.b[0].approx_eq(&S::one()) || !self.s[0].is_zero_tol() {
            return Err(Error::Ordering("need b_1 = 1 and s_1 = 0".into()));
        }
        for i in 1..k {
            if !self.b[i - 1].definitely_lt(&self.b[i]) {
                return Err(Error::Ordering(format!("b_{} >= b_{}", i, i + 1)));
            }
            if !self.s[i - 1].definitely_lt(&self.s[i]) {
                return Err(Error::Ordering(format!("s_{} >= s_{}", i, i + 1)));
            }
        }
        if !self.s[k - 1].definitely_lt(&self.b[k - 1]) {
            return Err(Error::Ordering("s_k >= b_k".into()));
        }
        if self.family == LFamily::GftIndependent && !self.s[1].definitely_gt(&self.b[k - 2]) {
            return Err(Error::Ordering("s_2 <= b_{k-1}".into()));
        }
        Ok(())
    }

    /// Joint probability of (s[j], b[i]).
    pub fn cell_prob(&self, i: usize, j: usize) -> S {
        match self.family {
            LFamily::GftIndependent => self.x[i].clone() * &self.q[j],
            LFamily::WelfareCorrelated => {
                if i == self.k - 1 {
                    self.x[i].clone() * &self.q[j]
                } else if j == 0 {
                    self.x[i].clone()
                } else {
                    S::zero()
                }
            }
        }
    }

    pub fn joint(&self) -> Result<DiscreteJoint<S>> {
        let mut cells = Vec::new();
        for i in 0..self.k {
            for j in 0..self.k {
                let p = self.cell_prob(i, j);
                if p > S::zero() {
                    cells.push((self.s[j].clone(), self.b[i].clone(), p));
                }
            }
        }
        DiscreteJoint::new(cells)
    }

    /// Reads the spec back from a joint with an L-shaped support.
    pub fn infer(dist: &DiscreteJoint<S>) -> Result<Self> {
        let b = dist.values(Side::Buyer);
        let s = dist.values(Side::Seller);
        let k = b.len();
        if k < 2 || s.len() != k {
            return Err(Error::Family("need k >= 2 buyer values and as many seller values".into()));
        }
        let prob = |i: usize, j: usize| dist.prob(&s[j], &b[i]);
        let in_l = |i: usize, j: usize| i == k - 1 || j == 0;
        for i in 0..k {
            for j in 0..k {
                if in_l(i, j) && prob(i, j) <= S::zero() {
                    return Err(Error::Family(format!("L cell ({}, {}) has no mass", s[j], b[i])));
                }
            }
        }
        let x: Vec<S> = dist.marginal(Side::Buyer).atoms().iter().map(|a| a.p.clone()).collect();
        let off_l = (0..k - 1).any(|i| (1..k).any(|j| prob(i, j) > S::zero()));
        let spec = if off_l {
            let q: Vec<S> = dist.marginal(Side::Seller).atoms().iter().map(|a| a.p.clone()).collect();
            for i in 0..k {
                for j in 0..k {
                    if !prob(i, j).approx_eq(&(x[i].clone() * &q[j])) {
                        return Err(Error::Family("support is not an L and values are not independent".into()));
                    }
                }
            }
            LShapedSpec { k, eps: None, b, s, x, q, family: LFamily::GftIndependent }
        } else {
            let q: Vec<S> = (0..k).map(|j| prob(k - 1, j) / &x[k - 1]).collect();
            LShapedSpec { k, eps: None, b, s, x, q, family: LFamily::WelfareCorrelated }
        };
        spec.validate().map_err(|e| Error::Family(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionEntry<S> {
    /// 1-based indices as in the conditions' statement.
    pub i: usize,
    pub j: Option<usize>,
    pub lhs: S,
    pub rhs: S,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StandardFormReport<S> {
    pub pass: bool,
    /// Strict: `lhs < rhs` for every `1 <= i < j < k`. Rules trading in
    /// more than `k` cells are then infeasible.
    pub strict: Vec<ConditionEntry<S>>,
    /// Equalities `Pr(0, b_i) b_i = Pr(s_{i+1}, b_k) (b_k - s_{i+1})`, which
    /// make all `k`-cell threshold rules tie.
    pub balance: Vec<ConditionEntry<S>>,
}

pub fn check_standard_form<S: Scalar>(spec: &LShapedSpec<S>) -> StandardFormReport<S> {
    let k = spec.k;
    let top = k - 1;
    let p = |i: usize, j: usize| spec.cell_prob(i, j);
    let corner = p(top, 0);
    let bk = &spec.b[top];
    let mut strict = Vec::new();
    for i in 0..k - 1 {
        for j in i + 1..k - 1 {
            let row_mass: S = (1..=j).map(|r| p(top, r)).sum();
            let lhs = row_mass / &corner * (bk.clone() - &spec.s[j]) + &spec.b[i];
            let column_mass: S = (i..k - 1).map(|r| p(r, 0)).sum();
            let rhs = spec.s[j].clone() - spec.b[i].clone() * column_mass / &corner;
            let holds = lhs.definitely_lt(&rhs);
            strict.push(ConditionEntry { i: i + 1, j: Some(j + 1), lhs, rhs, holds });
        }
    }
    let mut balance = Vec::new();
    for i in 0..k - 1 {
        let lhs = p(i, 0) * &spec.b[i];
        let rhs = p(top, i + 1) * (bk.clone() - &spec.s[i + 1]);
        let holds = lhs.approx_eq(&rhs);
        balance.push(ConditionEntry { i: i + 1, j: None, lhs, rhs, holds });
    }
    let pass = strict.iter().chain(&balance).all(|e| e.holds);
    StandardFormReport { pass, strict, balance }
}

/// Correlated family on which every fixed price loses a factor of order `k`.
pub fn dsic_unbounded<S: Scalar>(k: u32, eps: S) -> Result<DiscreteJoint<S>> {
    if !(3..=12).contains(&k) {
        return Err(Error::Parameter(format!("k must lie in [3, 12], got {k}")));
    }
    let kk = S::from_i64(i64::from(k));
    let bound = S::one() / kk.powi(k as i32);
    if !(eps > S::zero() && eps < bound) {
        return Err(Error::Parameter(format!("eps must lie in (0, k^-k), got {eps}")));
    }
    let powers: Vec<S> = (0..=k).map(|i| kk.powi(i as i32)).collect();
    let mut buyers = vec![S::zero()];
    buyers.extend(powers[1..].iter().cloned());
    let mut sellers = vec![S::zero()];
    sellers.extend(powers[..k as usize].iter().cloned());
    let background = eps.clone() / S::from_i64(i64::from(k) * i64::from(k + 1));
    let mut cells = Vec::new();
    let mut diagonal = S::zero();
    for b in &buyers {
        for s in &sellers {
            let on_diagonal = *b > S::zero() && s.clone() * &kk == *b;
            if on_diagonal {
                let p = S::one() / b;
                diagonal += &p;
                cells.push((s.clone(), b.clone(), p));
            } else if !(b.is_zero_tol() && s.is_zero_tol()) {
                cells.push((s.clone(), b.clone(), background.clone()));
            }
        }
    }
    cells.push((S::zero(), S::zero(), S::one() - diagonal - eps));
    DiscreteJoint::new(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn equal_revenue_offers_earn_one() {
        let m = equal_revenue_buyer(8.0, true, 1e-3).unwrap();
        assert!((m.atoms().iter().map(|a| a.p).sum::<f64>() - 1.0).abs() < 1e-9);
        for p in [1.0, 1.5, 2.0, 3.25, 7.999, 8.0] {
            assert!((p * m.survival(&p) - 1.0).abs() < 1e-9, "p = {p}");
        }
        assert!(matches!(equal_revenue_buyer(0.5, true, 1e-3), Err(Error::Parameter(_))));
        let flat = equal_revenue_buyer(4.0, false, 1e-2).unwrap();
        assert!((flat.max() - 4.0).abs() > 1e-3);
    }

    #[test]
    fn equal_profit_offers_earn_one_over_e() {
        let m = equal_profit_seller(1.0, 1e-3).unwrap();
        assert!((m.cdf(&0.0) - 1.0 / E).abs() < 1e-12);
        for a in m.atoms() {
            assert!(((1.0 - a.v) * m.cdf(&a.v) - 1.0 / E).abs() < 1e-9);
        }
        let top = 1.0 - 1.0 / E;
        assert!((m.max() - top).abs() < 1e-12);
        let above = top + 0.1;
        assert!(((1.0 - above) * m.cdf(&above) - (1.0 - above)).abs() < 1e-12);
        assert!((1.0 - above) < 1.0 / E);
    }

    #[test]
    fn tightness_has_unit_optimum() {
        let j = tightness_distribution(1e-3).unwrap();
        assert!((opt_welfare(&j) - 1.0).abs() < 1e-12);
        assert!((j.prob(&0.0, &1.0) - 1.0 / E).abs() < 1e-12);
    }

    #[test]
    fn simple_2x2_limit_values() {
        let t = simple_2x2(r(57, 100), r(716, 1000), Rational::zero()).unwrap();
        assert!((t.b2.to_f64() - 6.993).abs() < 1e-3);
        assert!((t.s2.to_f64() - 3.651).abs() < 1e-3);
        let opt = opt_welfare(&t.joint).to_f64();
        assert!((opt - 4.006).abs() < 1e-3);
        let (lhs, rhs) = t.infeasibility_sides();
        assert_eq!(lhs, rhs);
        let t = simple_2x2(r(57, 100), r(716, 1000), r(1, 1_000_000)).unwrap();
        let (lhs, rhs) = t.infeasibility_sides();
        assert!(lhs > rhs);
        assert!(simple_2x2(r(1, 1), r(1, 2), Rational::zero()).is_err());
    }

    #[test]
    fn two_by_two_shape_roundtrip() {
        let t = simple_2x2(r(57, 100), r(716, 1000), r(1, 1000)).unwrap();
        let shape = TwoByTwoShape::of(&t.joint).unwrap();
        assert_eq!(shape.x1, t.x1);
        assert_eq!(shape.q1, t.q1);
        assert_eq!(shape.b2, t.b2);
        let skew = DiscreteJoint::new(vec![
            (r(0, 1), r(1, 1), r(1, 2)),
            (r(2, 1), r(1, 1), r(1, 8)),
            (r(0, 1), r(3, 1), r(1, 8)),
            (r(2, 1), r(3, 1), r(1, 4)),
        ])
        .unwrap();
        assert!(matches!(TwoByTwoShape::of(&skew), Err(Error::Family(_))));
    }

    #[test]
    fn l_shaped_small_k_limits() {
        let eps = r(1, 1_000_000);
        let (_, w) = l_shaped_welfare(2, eps.clone()).unwrap();
        assert_eq!(w.b, vec![r(1, 1), r(7, 1) + &eps]);
        assert_eq!(w.s, vec![r(0, 1), r(5, 1) + &eps]);
        assert_eq!(w.x, vec![r(1, 2), r(1, 2)]);
        assert_eq!(w.q, vec![r(1, 2), r(1, 2)]);
        let (_, g) = l_shaped_gft(2, eps.clone()).unwrap();
        assert_eq!(g.b, vec![r(1, 1), r(4, 1) + &eps]);
        assert_eq!(g.s, vec![r(0, 1), r(3, 1) + &eps]);
        assert_eq!(g.q, vec![r(1, 2), r(1, 2)]);
        assert!(matches!(l_shaped_welfare(2, Rational::zero()), Err(Error::Parameter(_))));
    }

    #[test]
    fn l_shaped_infer_roundtrip() {
        for k in 2..=5 {
            let (j, spec) = l_shaped_welfare(k, r(1, 1_000_000)).unwrap();
            let mut inferred = LShapedSpec::infer(&j).unwrap();
            inferred.eps = spec.eps.clone();
            assert_eq!(inferred, spec);
            let (j, spec) = l_shaped_gft(k, r(1, 1_000_000)).unwrap();
            let mut inferred = LShapedSpec::infer(&j).unwrap();
            inferred.eps = spec.eps.clone();
            assert_eq!(inferred, spec);
        }
        let t = simple_2x2(r(57, 100), r(716, 1000), r(1, 1_000_000)).unwrap();
        assert_eq!(LShapedSpec::infer(&t.joint).unwrap().family, LFamily::GftIndependent);
    }

    #[test]
    fn standard_form_detects_perturbation() {
        let (_, spec) = l_shaped_welfare(4, r(1, 1_000_000)).unwrap();
        assert!(check_standard_form(&spec).pass);
        let mut bent = spec.clone();
        bent.s[2] = bent.s[2].clone() + r(1, 1000);
        let report = check_standard_form(&bent);
        assert!(!report.pass);
        let failed: Vec<usize> = report.balance.iter().filter(|e| !e.holds).map(|e| e.i).collect();
        assert_eq!(failed, vec![2]);
    }

    #[test]
    fn dsic_family_masses() {
        let j = dsic_unbounded(3, r(1, 100)).unwrap();
        assert_eq!(j.prob(&r(1, 1), &r(3, 1)), r(1, 3));
        assert_eq!(j.prob(&r(3, 1), &r(9, 1)), r(1, 9));
        assert_eq!(j.prob(&r(9, 1), &r(27, 1)), r(1, 27));
        assert_eq!(j.len(), 16);
        assert!(opt_welfare(&j) >= r(3, 1));
        assert!(dsic_unbounded(3, r(1, 27)).is_err());
    }
}
