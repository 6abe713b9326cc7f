//! Priced allocation rules: fixed prices, take-it-or-leave-it offers by
//! either side, and an explicit randomized mechanism for 2x2 joints.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constructions::TwoByTwoShape;
use crate::dist::{DiscreteJoint, Marginal, Side};
use crate::error::{Error, Result};
use crate::metrics::opt_welfare;
use crate::rules::{check_aligned, AllocationRule, RuleCell};
use crate::scalar::Scalar;

/// One cell of a mechanism. `t` is the expected payment from buyer to
/// seller; for a deterministic trade it is the price.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Deserialize<'de>"))]
pub struct MechCell<S> {
    pub s: S,
    pub b: S,
    pub x: S,
    pub t: S,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Mechanism<S> {
    cells: Vec<MechCell<S>>,
    randomized: bool,
}

impl<S: Scalar> Mechanism<S> {
    /// Matches cells given in any order to `dist`.
    pub fn for_joint(dist: &DiscreteJoint<S>, cells: Vec<MechCell<S>>) -> Result<Self> {
        let mut transfers = Vec::with_capacity(cells.len());
        let mut rule_cells = Vec::with_capacity(cells.len());
        for c in cells {
            transfers.push((c.s.clone(), c.b.clone(), c.t));
            rule_cells.push(RuleCell { s: c.s, b: c.b, x: c.x });
        }
        let rule = AllocationRule::for_joint(dist, rule_cells)?;
        let mut t = vec![S::zero(); dist.len()];
        for (s, b, value) in transfers {
            let i = dist.position(&s, &b).ok_or(Error::SupportMismatch)?;
            t[i] = value;
        }
        Ok(Self::with_transfers(&rule, t))
    }

    /// Deterministic mechanism: `prices[i]` is paid when cell `i` trades.
    pub fn from_prices(rule: &AllocationRule<S>, prices: Vec<S>) -> Self {
        let t = rule.cells().iter().zip(prices).map(|(c, p)| c.x.clone() * &p).collect();
        Self::with_transfers(rule, t)
    }

    pub fn with_transfers(rule: &AllocationRule<S>, transfers: Vec<S>) -> Self {
        let cells: Vec<MechCell<S>> = rule
            .cells()
            .iter()
            .zip(transfers)
            .map(|(c, t)| MechCell { s: c.s.clone(), b: c.b.clone(), x: c.x.clone(), t })
            .collect();
        let randomized = !rule.is_deterministic();
        Mechanism { cells, randomized }
    }

    pub fn cells(&self) -> &[MechCell<S>] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn is_randomized(&self) -> bool {
        self.randomized
    }

    pub fn rule(&self) -> AllocationRule<S> {
        AllocationRule::from_raw(
            self.cells.iter().map(|c| RuleCell { s: c.s.clone(), b: c.b.clone(), x: c.x.clone() }).collect(),
        )
    }

    /// Price conditional on trade, if the cell trades.
    pub fn price(&self, i: usize) -> Option<S> {
        let c = &self.cells[i];
        if c.x.definitely_gt(&S::zero()) {
            Some(c.t.clone() / &c.x)
        } else {
            None
        }
    }

    pub fn check_support(&self, dist: &DiscreteJoint<S>) -> Result<()> {
        check_aligned(dist, self.cells.iter().map(|c| (&c.s, &c.b)), self.cells.len())
    }

    pub fn convert<T: Scalar>(&self, dist: &DiscreteJoint<T>) -> Result<Mechanism<T>> {
        let cells = self
            .cells
            .iter()
            .map(|c| MechCell { s: c.s.convert(), b: c.b.convert(), x: c.x.convert(), t: c.t.convert() })
            .collect();
        Mechanism::for_joint(dist, cells)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieBreak {
    Lowest,
    Highest,
}

impl FromStr for TieBreak {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" | "lowest" => Ok(TieBreak::Lowest),
            "high" | "highest" => Ok(TieBreak::Highest),
            other => Err(Error::Input(format!("unknown tie-break `{other}`"))),
        }
    }
}

impl fmt::Display for TieBreak {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TieBreak::Lowest => "lowest",
            TieBreak::Highest => "highest",
        })
    }
}

/// Index of the best profit; ties go to the first or the last candidate.
fn pick<S: Scalar>(profits: &[S], tie: TieBreak) -> usize {
    let mut best = 0;
    for (i, p) in profits.iter().enumerate().skip(1) {
        if p.definitely_gt(&profits[best]) || (tie == TieBreak::Highest && p.approx_eq(&profits[best])) {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Offer<S> {
    /// Value of the agent making the offer.
    pub value: S,
    pub offer: S,
    pub profit: S,
}

/// Profit-maximizing offer of a buyer with value `b` against seller values
/// distributed as `seller`. Candidates are `floor` (default 0) and the
/// seller atoms in `[floor, b]`.
pub fn buyer_offer<S: Scalar>(b: &S, seller: &Marginal<S>, tie: TieBreak, floor: Option<&S>) -> Offer<S> {
    let lo = floor.cloned().unwrap_or_else(S::zero);
    let mut candidates = vec![lo.clone()];
    candidates.extend(seller.values().filter(|v| v.definitely_gt(&lo) && v.le_tol(b)).cloned());
    let cdf = seller.cdf_sorted(&candidates);
    let profits: Vec<S> = candidates.iter().zip(&cdf).map(|(p, f)| (b.clone() - p) * f).collect();
    let i = pick(&profits, tie);
    Offer { value: b.clone(), offer: candidates[i].clone(), profit: profits[i].clone() }
}

/// Profit-maximizing offer of a seller with value `s` against buyer values
/// distributed as `buyer`. Candidates are `s` and the buyer atoms above it.
pub fn seller_offer<S: Scalar>(s: &S, buyer: &Marginal<S>, tie: TieBreak) -> Offer<S> {
    let mut candidates = vec![s.clone()];
    candidates.extend(buyer.values().filter(|v| v.definitely_gt(s)).cloned());
    let survival = buyer.survival_sorted(&candidates);
    let profits: Vec<S> = candidates.iter().zip(&survival).map(|(p, g)| (p.clone() - s) * g).collect();
    let i = pick(&profits, tie);
    Offer { value: s.clone(), offer: candidates[i].clone(), profit: profits[i].clone() }
}

/// Trade on every cell with `s <= p <= b`, at price `p`.
pub fn fixed_price<S: Scalar>(dist: &DiscreteJoint<S>, p: &S) -> Mechanism<S> {
    let rule = AllocationRule::from_indicator(dist, |c| c.s.le_tol(p) && p.le_tol(&c.b));
    Mechanism::from_prices(&rule, vec![p.clone(); dist.len()])
}

/// Mechanism in which one side's offer depends only on its own value.
fn offer_mechanism<S: Scalar>(dist: &DiscreteJoint<S>, side: Side, offers: &[Offer<S>]) -> Mechanism<S> {
    let mut prices = vec![S::zero(); dist.len()];
    for (cond, offer) in dist.conditionals(side).iter().zip(offers) {
        for &i in &cond.cells {
            prices[i] = offer.offer.clone();
        }
    }
    let mut i = 0;
    let rule = AllocationRule::from_indicator(dist, |c| {
        let p = &prices[i];
        i += 1;
        match side {
            Side::Buyer => c.s.le_tol(p),
            Side::Seller => p.le_tol(&c.b),
        }
    });
    Mechanism::from_prices(&rule, prices)
}

/// Offer of every buyer value, ascending in the buyer value.
pub fn buyer_offers<S: Scalar>(dist: &DiscreteJoint<S>, tie: TieBreak) -> Vec<Offer<S>> {
    dist.conditionals(Side::Buyer).iter().map(|c| buyer_offer(&c.value, &c.marginal, tie, None)).collect()
}

/// Offer of every seller value, ascending in the seller value.
pub fn seller_offers<S: Scalar>(dist: &DiscreteJoint<S>, tie: TieBreak) -> Vec<Offer<S>> {
    dist.conditionals(Side::Seller).iter().map(|c| seller_offer(&c.value, &c.marginal, tie)).collect()
}

/// The buyer makes the profit-maximizing take-it-or-leave-it offer.
pub fn buyer_offering<S: Scalar>(dist: &DiscreteJoint<S>, tie: TieBreak) -> Mechanism<S> {
    offer_mechanism(dist, Side::Buyer, &buyer_offers(dist, tie))
}

/// The seller makes the profit-maximizing take-it-or-leave-it offer.
pub fn seller_offering<S: Scalar>(dist: &DiscreteJoint<S>, tie: TieBreak) -> Mechanism<S> {
    offer_mechanism(dist, Side::Seller, &seller_offers(dist, tie))
}

/// Most grid offers considered for a single buyer value.
pub const MAX_GRID_OFFERS: i64 = 5_000_000;

/// `j * delta` for `0 <= j * delta <= b`.
pub fn offer_grid<S: Scalar>(delta: &S, b: &S) -> Result<Vec<S>> {
    let n = (b.clone() / delta).floor_i64();
    if n > MAX_GRID_OFFERS {
        return Err(Error::Parameter(format!("offer grid of {n} points is too fine; raise eps")));
    }
    Ok((0..=n.max(0)).map(|j| S::from_i64(j) * delta).collect())
}

fn grid_step<S: Scalar>(dist: &DiscreteJoint<S>, eps: &S) -> Result<S> {
    if !eps.definitely_gt(&S::zero()) {
        return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
    }
    let opt = opt_welfare(dist);
    if !opt.definitely_gt(&S::zero()) {
        return Err(Error::Parameter("optimal welfare is zero".into()));
    }
    Ok(eps.clone() * &opt)
}

/// Offers of the buyer restricted to multiples of `delta = eps * OPT`,
/// ties to the lowest.
pub fn eps_buyer_offers<S: Scalar>(dist: &DiscreteJoint<S>, eps: &S) -> Result<Vec<Offer<S>>> {
    let delta = grid_step(dist, eps)?;
    dist.conditionals(Side::Buyer)
        .iter()
        .map(|c| {
            let grid = offer_grid(&delta, &c.value)?;
            let cdf = c.marginal.cdf_sorted(&grid);
            let profits: Vec<S> = grid.iter().zip(&cdf).map(|(p, f)| (c.value.clone() - p) * f).collect();
            let i = pick(&profits, TieBreak::Lowest);
            Ok(Offer { value: c.value.clone(), offer: grid[i].clone(), profit: profits[i].clone() })
        })
        .collect()
}

pub fn eps_buyer_offering<S: Scalar>(dist: &DiscreteJoint<S>, eps: &S) -> Result<Mechanism<S>> {
    Ok(offer_mechanism(dist, Side::Buyer, &eps_buyer_offers(dist, eps)?))
}

/// Moves every atom up to the nearest multiple of `delta`.
pub fn push_up<S: Scalar>(m: &Marginal<S>, delta: &S) -> Marginal<S> {
    let atoms = m.atoms().iter().map(|a| (S::from_i64((a.v.clone() / delta).ceil_i64()) * delta, a.p.clone()));
    Marginal::new(atoms).expect("pushing atoms keeps unit mass")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OfferDisagreement<S> {
    pub buyer: S,
    pub grid_offer: S,
    pub pushed_offer: S,
}

/// Buyer values whose grid offer differs from the unrestricted offer
/// against the seller conditional pushed up to the grid.
pub fn eps_offering_disagreements<S: Scalar>(dist: &DiscreteJoint<S>, eps: &S) -> Result<Vec<OfferDisagreement<S>>> {
    let delta = grid_step(dist, eps)?;
    let grid = eps_buyer_offers(dist, eps)?;
    let mut out = Vec::new();
    for (c, g) in dist.conditionals(Side::Buyer).iter().zip(grid) {
        let pushed = buyer_offer(&c.value, &push_up(&c.marginal, &delta), TieBreak::Lowest, None);
        if !pushed.offer.approx_eq(&g.offer) {
            out.push(OfferDisagreement { buyer: c.value.clone(), grid_offer: g.offer, pushed_offer: pushed.offer });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OfferPoint<S> {
    pub offer: S,
    pub profit: S,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OfferCurve<S> {
    /// The agent making the offers.
    pub side: Side,
    pub value: S,
    pub points: Vec<OfferPoint<S>>,
}

/// Expected profit of an agent with `value` on `side` from each offer.
/// Buyer: `(v - p) Pr(s <= p | v)`. Seller: `(p - v) Pr(b >= p | v)`.
pub fn offer_profit_curve<S: Scalar>(
    dist: &DiscreteJoint<S>,
    side: Side,
    value: &S,
    offers: &[S],
) -> Result<OfferCurve<S>> {
    let cond = dist.condition(side, value)?;
    let mut offers = offers.to_vec();
    offers.sort_by(crate::scalar::cmp_scalar);
    let points = match side {
        Side::Buyer => {
            let cdf = cond.cdf_sorted(&offers);
            offers
                .into_iter()
                .zip(cdf)
                .map(|(p, f)| OfferPoint { profit: (value.clone() - &p) * f, offer: p })
                .collect()
        }
        Side::Seller => {
            let survival = cond.survival_sorted(&offers);
            offers
                .into_iter()
                .zip(survival)
                .map(|(p, g)| OfferPoint { profit: (p.clone() - value) * g, offer: p })
                .collect()
        }
    };
    Ok(OfferCurve { side, value: value.clone(), points })
}

/// Trade probability on (0, 1) in the randomized 2x2 mechanism.
pub fn gap_trade_probability<S: Scalar>() -> S {
    S::ratio(999, 1000)
}

/// Expected payment on (0, b2) in the randomized 2x2 mechanism.
pub fn gap_mid_transfer<S: Scalar>() -> S {
    S::ratio(233, 100)
}

/// The randomized mechanism for the independent 2x2 joint with
/// `x1 = 57/100`, `q1 = 716/1000`.
pub fn randomized_gap_mechanism<S: Scalar>(dist: &DiscreteJoint<S>) -> Result<Mechanism<S>> {
    let shape = TwoByTwoShape::of(dist)?;
    if !shape.x1.approx_eq(&S::ratio(57, 100)) || !shape.q1.approx_eq(&S::ratio(716, 1000)) {
        return Err(Error::Family(format!(
            "expected x1 = 57/100 and q1 = 716/1000, got x1 = {}, q1 = {}",
            shape.x1, shape.q1
        )));
    }
    randomized_two_by_two(dist, &gap_trade_probability(), &gap_mid_transfer())
}

/// Trades with probability `r` at (0, 1) for an expected payment `r`, always
/// at (0, b2) for `t_mid`, always at (s2, b2) for `s2`, never at (s2, 1).
pub fn randomized_two_by_two<S: Scalar>(dist: &DiscreteJoint<S>, r: &S, t_mid: &S) -> Result<Mechanism<S>> {
    let shape = TwoByTwoShape::of(dist)?;
    if r.definitely_lt(&S::zero()) || r.definitely_gt(&S::one()) {
        return Err(Error::Parameter(format!("trade probability {r} outside [0, 1]")));
    }
    let (zero, one) = (S::zero(), S::one());
    let cells = vec![
        MechCell { s: zero.clone(), b: one.clone(), x: r.clone(), t: r.clone() },
        MechCell { s: shape.s2.clone(), b: one, x: zero.clone(), t: zero.clone() },
        MechCell { s: zero, b: shape.b2.clone(), x: S::one(), t: t_mid.clone() },
        MechCell { s: shape.s2.clone(), b: shape.b2, x: S::one(), t: shape.s2 },
    ];
    Mechanism::for_joint(dist, cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn fixed_price_trades_inside_interval() {
        let d = DiscreteJoint::new(vec![(r(0, 1), r(1, 1), r(1, 2)), (r(2, 1), r(3, 1), r(1, 2))]).unwrap();
        let m = fixed_price(&d, &r(1, 2));
        assert_eq!(m.cells()[0].x, r(1, 1));
        assert_eq!(m.cells()[0].t, r(1, 2));
        assert_eq!(m.cells()[1].x, r(0, 1));
        assert_eq!(m.price(1), None);
    }

    #[test]
    fn buyer_offer_ties() {
        let m = Marginal::new(vec![(r(0, 1), r(1, 2)), (r(1, 2), r(1, 2))]).unwrap();
        // profit at 0 is 1/2, at 1/2 is 1/2
        let low = buyer_offer(&r(1, 1), &m, TieBreak::Lowest, None);
        let high = buyer_offer(&r(1, 1), &m, TieBreak::Highest, None);
        assert_eq!(low.offer, r(0, 1));
        assert_eq!(high.offer, r(1, 2));
        let floored = buyer_offer(&r(1, 1), &m, TieBreak::Lowest, Some(&r(1, 4)));
        assert_eq!(floored.offer, r(1, 2));
    }

    #[test]
    fn seller_offer_prefers_revenue() {
        let d = DiscreteJoint::new(vec![(r(0, 1), r(1, 1), r(1, 2)), (r(0, 1), r(10, 1), r(1, 2))]).unwrap();
        let offers = seller_offers(&d, TieBreak::Lowest);
        assert_eq!(offers[0].offer, r(10, 1));
        assert_eq!(offers[0].profit, r(5, 1));
        let m = seller_offering(&d, TieBreak::Highest);
        assert_eq!(m.cells()[0].x, r(0, 1));
        assert_eq!(m.cells()[1].t, r(10, 1));
    }

    #[test]
    fn grid_offers() {
        let grid = offer_grid(&r(1, 4), &r(1, 1)).unwrap();
        assert_eq!(grid, vec![r(0, 1), r(1, 4), r(1, 2), r(3, 4), r(1, 1)]);
        let d = DiscreteJoint::new(vec![(r(0, 1), r(1, 1), r(1, 1))]).unwrap();
        assert!(matches!(eps_buyer_offering(&d, &r(0, 1)), Err(Error::Parameter(_))));
        assert!(matches!(offer_grid(&1e-9, &1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn push_up_moves_to_grid() {
        let m = Marginal::new(vec![(r(3, 10), r(1, 1))]).unwrap();
        assert_eq!(push_up(&m, &r(1, 4)).atoms()[0].v, r(1, 2));
    }

    #[test]
    fn tie_break_parse() {
        assert_eq!("low".parse::<TieBreak>().unwrap(), TieBreak::Lowest);
        assert_eq!("HIGHEST".parse::<TieBreak>().unwrap(), TieBreak::Highest);
        assert!("middle".parse::<TieBreak>().is_err());
    }
}
