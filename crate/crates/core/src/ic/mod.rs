//! Incentive compatibility: checking priced mechanisms, deciding whether an
//! allocation rule admits Bayesian incentive-compatible, ex-post individually
//! rational payments, and searching for the best implementable rule.

pub mod lp;

use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::constructions::LShapedSpec;
use crate::dist::{DiscreteJoint, Side};
use crate::error::{Error, Result};
use crate::mechanisms::Mechanism;
use crate::metrics::{optimum, ratio, rule_value, Objective};
use crate::rules::{AllocationRule, RuleCell};
use crate::scalar::{Rational, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IcMode {
    Bic,
    Dsic,
}

impl FromStr for IcMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bic" => Ok(IcMode::Bic),
            "dsic" => Ok(IcMode::Dsic),
            other => Err(Error::Input(format!("unknown incentive mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    SellerBic,
    BuyerBic,
    SellerDsic,
    BuyerDsic,
    /// Payment at least `x s`.
    IrLower,
    /// Payment at most `x b`.
    IrUpper,
}

/// Which inequality. For incentive constraints `truthful` and `deviation`
/// are values of the deviating side and `counterpart` is the other agent's
/// value (DSIC only). For IR `truthful` is `s` and `counterpart` is `b`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstraintId<S> {
    pub kind: ConstraintKind,
    pub truthful: S,
    pub deviation: Option<S>,
    pub counterpart: Option<S>,
}

/// The constraint is `lhs >= rhs`; recorded when it fails. BIC sides are
/// conditional expected utilities.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation<S> {
    #[serde(flatten)]
    pub constraint: ConstraintId<S>,
    pub lhs: S,
    pub rhs: S,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Payment<S> {
    pub s: S,
    pub b: S,
    pub p: S,
}

/// Nonnegative combination of constraints that sums to `0 >= positive`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificateTerm<S> {
    #[serde(flatten)]
    pub constraint: ConstraintId<S>,
    pub multiplier: S,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityReport<S> {
    pub feasible: bool,
    /// Price on every trading cell, when payments were solved for.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payments: Option<Vec<Payment<S>>>,
    pub violations: Vec<Violation<S>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Vec<CertificateTerm<S>>>,
}

impl<S: Scalar> ConstraintId<S> {
    fn convert<T: Scalar>(&self) -> ConstraintId<T> {
        ConstraintId {
            kind: self.kind,
            truthful: self.truthful.convert(),
            deviation: self.deviation.as_ref().map(Scalar::convert),
            counterpart: self.counterpart.as_ref().map(Scalar::convert),
        }
    }
}

impl<S: Scalar> FeasibilityReport<S> {
    pub fn convert<T: Scalar>(&self) -> FeasibilityReport<T> {
        FeasibilityReport {
            feasible: self.feasible,
            payments: self.payments.as_ref().map(|ps| {
                ps.iter().map(|p| Payment { s: p.s.convert(), b: p.b.convert(), p: p.p.convert() }).collect()
            }),
            violations: self
                .violations
                .iter()
                .map(|v| Violation { constraint: v.constraint.convert(), lhs: v.lhs.convert(), rhs: v.rhs.convert() })
                .collect(),
            certificate: self.certificate.as_ref().map(|c| {
                c.iter()
                    .map(|t| CertificateTerm { constraint: t.constraint.convert(), multiplier: t.multiplier.convert() })
                    .collect()
            }),
        }
    }

    /// Payments as a price vector aligned with `dist`'s cells.
    pub fn prices(&self, dist: &DiscreteJoint<S>) -> Option<Vec<S>> {
        let payments = self.payments.as_ref()?;
        let mut prices = vec![S::zero(); dist.len()];
        for p in payments {
            prices[dist.position(&p.s, &p.b)?] = p.p.clone();
        }
        Some(prices)
    }
}

/// `constant + sum coef * t[var]`.
#[derive(Clone, Debug)]
struct Affine<S> {
    constant: S,
    terms: Vec<(usize, S)>,
}

impl<S: Scalar> Affine<S> {
    fn zero() -> Self {
        Affine { constant: S::zero(), terms: Vec::new() }
    }

    fn add_scaled(&mut self, other: &Affine<S>, w: &S) {
        self.constant += other.constant.clone() * w;
        self.terms.extend(other.terms.iter().map(|(v, c)| (*v, c.clone() * w)));
    }

    fn add_constant(&mut self, c: S) {
        self.constant += c;
    }

    fn value(&self) -> S {
        debug_assert!(self.terms.is_empty());
        self.constant.clone()
    }
}

/// Incentive and IR inequalities `lhs >= rhs` for allocation `x` and
/// transfers `t`, where `t[i]` may contain payment variables. Reports of a
/// value that meet no support cell mean no trade and no transfer.
fn constraints<S: Scalar>(
    dist: &DiscreteJoint<S>,
    x: &[S],
    t: &[Affine<S>],
    mode: IcMode,
) -> Vec<(ConstraintId<S>, Affine<S>, Affine<S>)> {
    let cells = dist.cells();
    let mut out = Vec::new();
    for (i, c) in cells.iter().enumerate() {
        let mut lower = Affine::zero();
        lower.add_constant(x[i].clone() * &c.s);
        let id = |kind| ConstraintId { kind, truthful: c.s.clone(), deviation: None, counterpart: Some(c.b.clone()) };
        out.push((id(ConstraintKind::IrLower), t[i].clone(), lower));
        let mut upper = Affine::zero();
        upper.add_constant(x[i].clone() * &c.b);
        out.push((id(ConstraintKind::IrUpper), upper, t[i].clone()));
    }
    // Seller utility t + (1 - x) s; buyer utility x b - t.
    let seller_utility = |s: &S, j: Option<usize>| -> Affine<S> {
        match j {
            Some(j) => {
                let mut u = t[j].clone();
                u.add_constant((S::one() - &x[j]) * s);
                u
            }
            None => Affine { constant: s.clone(), terms: Vec::new() },
        }
    };
    let buyer_utility = |b: &S, j: Option<usize>| -> Affine<S> {
        match j {
            Some(j) => {
                let mut u = Affine::zero();
                u.add_scaled(&t[j], &-S::one());
                u.add_constant(x[j].clone() * b);
                u
            }
            None => Affine::zero(),
        }
    };
    let sellers = dist.values(Side::Seller);
    let buyers = dist.values(Side::Buyer);
    match mode {
        IcMode::Bic => {
            for (side, others) in [(Side::Seller, &sellers), (Side::Buyer, &buyers)] {
                for cond in dist.conditionals(side) {
                    for dev in others.iter().filter(|d| !d.approx_eq(&cond.value)) {
                        let mut truthful = Affine::zero();
                        let mut deviating = Affine::zero();
                        for (&i, atom) in cond.cells.iter().zip(cond.marginal.atoms()) {
                            let (u, d) = match side {
                                Side::Seller => (
                                    seller_utility(&cond.value, Some(i)),
                                    seller_utility(&cond.value, dist.position(dev, &cells[i].b)),
                                ),
                                Side::Buyer => (
                                    buyer_utility(&cond.value, Some(i)),
                                    buyer_utility(&cond.value, dist.position(&cells[i].s, dev)),
                                ),
                            };
                            truthful.add_scaled(&u, &atom.p);
                            deviating.add_scaled(&d, &atom.p);
                        }
                        let kind = match side {
                            Side::Seller => ConstraintKind::SellerBic,
                            Side::Buyer => ConstraintKind::BuyerBic,
                        };
                        let id = ConstraintId {
                            kind,
                            truthful: cond.value.clone(),
                            deviation: Some(dev.clone()),
                            counterpart: None,
                        };
                        out.push((id, truthful, deviating));
                    }
                }
            }
        }
        IcMode::Dsic => {
            for (i, c) in cells.iter().enumerate() {
                for dev in sellers.iter().filter(|d| !d.approx_eq(&c.s)) {
                    let id = ConstraintId {
                        kind: ConstraintKind::SellerDsic,
                        truthful: c.s.clone(),
                        deviation: Some(dev.clone()),
                        counterpart: Some(c.b.clone()),
                    };
                    out.push((id, seller_utility(&c.s, Some(i)), seller_utility(&c.s, dist.position(dev, &c.b))));
                }
                for dev in buyers.iter().filter(|d| !d.approx_eq(&c.b)) {
                    let id = ConstraintId {
                        kind: ConstraintKind::BuyerDsic,
                        truthful: c.b.clone(),
                        deviation: Some(dev.clone()),
                        counterpart: Some(c.s.clone()),
                    };
                    out.push((id, buyer_utility(&c.b, Some(i)), buyer_utility(&c.b, dist.position(&c.s, dev))));
                }
            }
        }
    }
    out
}

/// Lists every violated incentive or ex-post IR constraint of `mech`.
pub fn check_ic<S: Scalar>(mech: &Mechanism<S>, dist: &DiscreteJoint<S>, mode: IcMode) -> Result<FeasibilityReport<S>> {
    mech.check_support(dist)?;
    let x: Vec<S> = mech.cells().iter().map(|c| c.x.clone()).collect();
    let t: Vec<Affine<S>> = mech.cells().iter().map(|c| Affine { constant: c.t.clone(), terms: Vec::new() }).collect();
    let violations: Vec<Violation<S>> = constraints(dist, &x, &t, mode)
        .into_iter()
        .filter_map(|(id, lhs, rhs)| {
            let (lhs, rhs) = (lhs.value(), rhs.value());
            lhs.definitely_lt(&rhs).then(|| Violation { constraint: id, lhs, rhs })
        })
        .collect();
    Ok(FeasibilityReport { feasible: violations.is_empty(), payments: None, violations, certificate: None })
}

/// Decides whether some payments make the deterministic `rule` Bayesian
/// incentive compatible and ex-post IR. Solved in exact arithmetic.
pub fn implementable<S: Scalar>(rule: &AllocationRule<S>, dist: &DiscreteJoint<S>) -> Result<FeasibilityReport<S>> {
    rule.check_support(dist)?;
    if !rule.is_deterministic() {
        return Err(Error::Randomized);
    }
    if S::MODE == crate::scalar::Mode::Exact {
        let exact_dist: DiscreteJoint<Rational> = dist.convert()?;
        let x: Vec<bool> = (0..rule.len()).map(|i| rule.trades(i)).collect();
        return Ok(implementable_exact(&exact_dist, &x).convert());
    }
    let exact_dist: DiscreteJoint<Rational> = dist.convert()?;
    let rule_cells = rule
        .cells()
        .iter()
        .map(|c| RuleCell { s: c.s.convert(), b: c.b.convert(), x: c.x.convert::<Rational>() })
        .collect();
    let exact_rule = AllocationRule::for_joint(&exact_dist, rule_cells)?;
    let x: Vec<bool> = (0..exact_rule.len()).map(|i| exact_rule.trades(i)).collect();
    let report = implementable_exact(&exact_dist, &x);
    // Map payments back onto the caller's cells.
    let mut out = report.convert::<S>();
    if let Some(payments) = out.payments.as_mut() {
        let ordered: Vec<&RuleCell<S>> = rule.cells().iter().filter(|c| c.x.approx_eq(&S::one())).collect();
        for (p, c) in payments.iter_mut().zip(ordered) {
            p.s = c.s.clone();
            p.b = c.b.clone();
        }
    }
    Ok(out)
}

/// `trades[i]` says whether cell `i` of `dist` trades.
pub(crate) fn implementable_exact(dist: &DiscreteJoint<Rational>, trades: &[bool]) -> FeasibilityReport<Rational> {
    let mut var_of = vec![None; dist.len()];
    let mut vars = 0;
    for (i, &tr) in trades.iter().enumerate() {
        if tr {
            var_of[i] = Some(vars);
            vars += 1;
        }
    }
    let x: Vec<Rational> = trades.iter().map(|&tr| if tr { Rational::one() } else { Rational::zero() }).collect();
    let t: Vec<Affine<Rational>> = var_of
        .iter()
        .map(|v| match v {
            Some(v) => Affine { constant: Rational::zero(), terms: vec![(*v, Rational::one())] },
            None => Affine::zero(),
        })
        .collect();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (id, lhs, rhs) in constraints(dist, &x, &t, IcMode::Bic) {
        let mut coeffs = vec![BigRational::from_integer(0.into()); vars];
        let mut touched = vec![false; vars];
        for (v, c) in lhs.terms {
            coeffs[v] += c.as_big();
            touched[v] = true;
        }
        for (v, c) in rhs.terms {
            coeffs[v] -= c.as_big();
            touched[v] = true;
        }
        let rhs_value = (rhs.constant - &lhs.constant).as_big().clone();
        let sparse: Vec<(usize, BigRational)> = coeffs
            .into_iter()
            .enumerate()
            .filter(|(v, c)| touched[*v] && *c != BigRational::from_integer(0.into()))
            .collect();
        if sparse.is_empty() && rhs_value <= BigRational::from_integer(0.into()) {
            continue;
        }
        ids.push(id);
        rows.push(lp::Row { coeffs: sparse, rhs: rhs_value });
    }
    match lp::solve(vars, &rows) {
        lp::Outcome::Feasible(y) => {
            let payments = (0..dist.len())
                .filter_map(|i| {
                    var_of[i].map(|v| {
                        let c = &dist.cells()[i];
                        Payment { s: c.s.clone(), b: c.b.clone(), p: Rational::from_big(y[v].clone()) }
                    })
                })
                .collect();
            FeasibilityReport { feasible: true, payments: Some(payments), violations: Vec::new(), certificate: None }
        }
        lp::Outcome::Infeasible(lambda) => {
            let certificate = ids
                .into_iter()
                .zip(lambda)
                .filter(|(_, l)| *l != BigRational::from_integer(0.into()))
                .map(|(constraint, l)| CertificateTerm { constraint, multiplier: Rational::from_big(l) })
                .collect();
            FeasibilityReport {
                feasible: false,
                payments: None,
                violations: Vec::new(),
                certificate: Some(certificate),
            }
        }
    }
}

/// Threshold description of a rule on an L-shaped joint. Indices are
/// 0-based into the sorted values of the `LShapedSpec`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ThresholdRule {
    /// Column cells `(0, b_i)` below the top trade iff `i >= buyer`; `None`
    /// means never.
    pub buyer: Option<usize>,
    /// Row cells `(s_j, b_k)` with `j >= 1` trade iff `j <= seller`; 0 means
    /// never.
    pub seller: usize,
    /// Trade at `(0, b_k)`.
    pub corner: bool,
}

impl fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.buyer {
            Some(i) => write!(f, "b>=b{}", i + 1)?,
            None => f.write_str("b>=inf")?,
        }
        match self.seller {
            0 => f.write_str(" s<=0")?,
            j => write!(f, " s<=s{}", j + 1)?,
        }
        f.write_str(if self.corner { " corner" } else { " no-corner" })
    }
}

impl ThresholdRule {
    /// All `2 (k + 1) k` threshold rules.
    pub fn all(k: usize) -> Vec<ThresholdRule> {
        let mut out = Vec::with_capacity(2 * (k + 1) * k);
        for buyer in (0..k).map(Some).chain([None]) {
            for seller in 0..k {
                for corner in [true, false] {
                    out.push(ThresholdRule { buyer, seller, corner });
                }
            }
        }
        out
    }

    /// Whether cell `(s_j, b_i)` trades.
    pub fn trades(&self, k: usize, i: usize, j: usize) -> bool {
        let top = k - 1;
        match (i == top, j == 0) {
            (true, true) => self.corner,
            (false, true) => self.buyer.is_some_and(|t| i >= t),
            (true, false) => j <= self.seller,
            (false, false) => false,
        }
    }

    pub fn materialize<S: Scalar>(&self, spec: &LShapedSpec<S>, dist: &DiscreteJoint<S>) -> Result<AllocationRule<S>> {
        let mut cells = Vec::new();
        for i in 0..spec.k {
            for j in 0..spec.k {
                if spec.cell_prob(i, j) > S::zero() {
                    let x = if self.trades(spec.k, i, j) { S::one() } else { S::zero() };
                    cells.push(RuleCell { s: spec.s[j].clone(), b: spec.b[i].clone(), x });
                }
            }
        }
        AllocationRule::for_joint(dist, cells)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdOutcome<S> {
    pub threshold: ThresholdRule,
    pub rule: AllocationRule<S>,
    pub welfare: S,
    pub gft: S,
    pub report: FeasibilityReport<S>,
    /// For feasible rules: whether the solved payments are constant on the
    /// traded column cells below the top and on the traded row cells.
    pub equal_block_payments: Option<bool>,
}

fn blocks_equal<S: Scalar>(spec: &LShapedSpec<S>, t: &ThresholdRule, dist: &DiscreteJoint<S>, prices: &[S]) -> bool {
    let k = spec.k;
    let column: Vec<&S> = (0..k - 1)
        .filter(|&i| t.trades(k, i, 0))
        .filter_map(|i| dist.position(&spec.s[0], &spec.b[i]).map(|p| &prices[p]))
        .collect();
    let row: Vec<&S> = (1..k)
        .filter(|&j| t.trades(k, k - 1, j))
        .filter_map(|j| dist.position(&spec.s[j], &spec.b[k - 1]).map(|p| &prices[p]))
        .collect();
    column.windows(2).all(|w| w[0].approx_eq(w[1])) && row.windows(2).all(|w| w[0].approx_eq(w[1]))
}

/// Feeds every threshold rule of an L-shaped joint through `implementable`.
pub fn enumerate_thresholds<S: Scalar>(dist: &DiscreteJoint<S>) -> Result<Vec<ThresholdOutcome<S>>> {
    let spec = LShapedSpec::infer(dist)?;
    let exact: DiscreteJoint<Rational> = dist.convert()?;
    let exact_spec = LShapedSpec::infer(&exact)?;
    let rules = ThresholdRule::all(spec.k);
    let outcomes: Vec<Result<ThresholdOutcome<S>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = rules
            .chunks(rules.len().div_ceil(workers()))
            .map(|chunk| {
                let (spec, exact, exact_spec) = (&spec, &exact, &exact_spec);
                scope.spawn(move || {
                    chunk
                        .iter()
                        .map(|t| {
                            let exact_rule = t.materialize(exact_spec, exact)?;
                            let trades: Vec<bool> = (0..exact_rule.len()).map(|i| exact_rule.trades(i)).collect();
                            let report: FeasibilityReport<S> = implementable_exact(exact, &trades).convert();
                            let rule = t.materialize(spec, dist)?;
                            let equal_block_payments = report.prices(dist).map(|p| blocks_equal(spec, t, dist, &p));
                            Ok(ThresholdOutcome {
                                threshold: *t,
                                welfare: rule_value(&rule, dist, Objective::Welfare)?,
                                gft: rule_value(&rule, dist, Objective::Gft)?,
                                rule,
                                report,
                                equal_block_payments,
                            })
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("threshold worker panicked")).collect()
    });
    outcomes.into_iter().collect()
}

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).clamp(1, 16)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Every subset of cells with `b >= s`.
    Exhaustive,
    /// Threshold rules of an L-shaped joint.
    Threshold,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exhaustive" => Ok(Strategy::Exhaustive),
            "threshold" => Ok(Strategy::Threshold),
            other => Err(Error::Input(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Largest number of cells with `b >= s` the exhaustive search accepts.
pub const EXHAUSTIVE_LIMIT: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BestRule<S> {
    pub rule: AllocationRule<S>,
    pub value: S,
    /// Optimum over value; absent when the value is zero.
    pub ratio: Option<S>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ThresholdRule>,
    pub report: FeasibilityReport<S>,
}

pub fn best_implementable<S: Scalar>(
    dist: &DiscreteJoint<S>,
    objective: Objective,
    strategy: Strategy,
) -> Result<BestRule<S>> {
    let opt = optimum(dist, objective);
    match strategy {
        Strategy::Threshold => {
            let mut best: Option<ThresholdOutcome<S>> = None;
            for o in enumerate_thresholds(dist)? {
                if !o.report.feasible {
                    continue;
                }
                let value = |o: &ThresholdOutcome<S>| match objective {
                    Objective::Welfare => o.welfare.clone(),
                    Objective::Gft => o.gft.clone(),
                };
                if best.as_ref().map_or(true, |b| value(&o).definitely_gt(&value(b))) {
                    best = Some(o);
                }
            }
            let o = best.expect("the no-trade threshold rule is always implementable");
            let value = match objective {
                Objective::Welfare => o.welfare,
                Objective::Gft => o.gft,
            };
            Ok(BestRule {
                ratio: ratio(&opt, &value),
                rule: o.rule,
                value,
                threshold: Some(o.threshold),
                report: o.report,
            })
        }
        Strategy::Exhaustive => {
            let exact: DiscreteJoint<Rational> = dist.convert()?;
            let open: Vec<usize> = (0..exact.len()).filter(|&i| exact.cells()[i].s <= exact.cells()[i].b).collect();
            if open.len() > EXHAUSTIVE_LIMIT {
                return Err(Error::Scale { cells: open.len(), limit: EXHAUSTIVE_LIMIT });
            }
            let gains: Vec<Rational> = open
                .iter()
                .map(|&i| {
                    let c = &exact.cells()[i];
                    c.p.clone() * (c.b.clone() - &c.s)
                })
                .collect();
            let mut subsets: Vec<(Rational, u32)> = (0..1u32 << open.len())
                .map(|mask| {
                    let v = (0..open.len()).filter(|&j| mask >> j & 1 == 1).map(|j| gains[j].clone()).sum::<Rational>();
                    (v, mask)
                })
                .collect();
            subsets.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            for (_, mask) in subsets {
                let mut trades = vec![false; exact.len()];
                for (j, &i) in open.iter().enumerate() {
                    trades[i] = mask >> j & 1 == 1;
                }
                let report = implementable_exact(&exact, &trades);
                if report.feasible {
                    let rule = AllocationRule::from_raw(
                        dist.cells()
                            .iter()
                            .zip(&trades)
                            .map(|(c, &tr)| RuleCell {
                                s: c.s.clone(),
                                b: c.b.clone(),
                                x: if tr { S::one() } else { S::zero() },
                            })
                            .collect(),
                    );
                    let value = rule_value(&rule, dist, objective)?;
                    return Ok(BestRule {
                        ratio: ratio(&opt, &value),
                        rule,
                        value,
                        threshold: None,
                        report: report.convert(),
                    });
                }
            }
            unreachable!("the empty rule is always implementable")
        }
    }
}
