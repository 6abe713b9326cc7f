//! Many unit-supply sellers and unit-demand buyers: trade reduction and a
//! hybrid that falls back to a buyer offer when only one trade is efficient.

use serde::{Deserialize, Serialize};

use crate::dist::Marginal;
use crate::error::{Error, Result};
use crate::mechanisms::{buyer_offer, TieBreak};
use crate::scalar::{cmp_scalar, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Deserialize<'de>"))]
pub struct DoubleAuctionInstance<S> {
    pub sellers: Vec<S>,
    pub buyers: Vec<S>,
}

impl<S: Scalar> DoubleAuctionInstance<S> {
    pub fn new(sellers: Vec<S>, buyers: Vec<S>) -> Result<Self> {
        if sellers.is_empty() || buyers.is_empty() {
            return Err(Error::Input("need at least one seller and one buyer".into()));
        }
        for (field, values) in [("seller value", &sellers), ("buyer value", &buyers)] {
            if let Some(v) = values.iter().find(|v| v.definitely_lt(&S::zero())) {
                return Err(Error::NegativeValue { field, value: v.to_string() });
            }
        }
        Ok(DoubleAuctionInstance { sellers, buyers })
    }

    /// Seller indices by ascending value, ties by index.
    pub fn sellers_ascending(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.sellers.len()).collect();
        idx.sort_by(|&i, &j| cmp_scalar(&self.sellers[i], &self.sellers[j]).then(i.cmp(&j)));
        idx
    }

    /// Buyer indices by descending value, ties by index.
    pub fn buyers_descending(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.buyers.len()).collect();
        idx.sort_by(|&i, &j| cmp_scalar(&self.buyers[j], &self.buyers[i]).then(i.cmp(&j)));
        idx
    }

    /// Sum of the `n` largest values among all agents, `n` the number of
    /// sellers.
    pub fn optimal_welfare(&self) -> S {
        let mut all: Vec<&S> = self.sellers.iter().chain(&self.buyers).collect();
        all.sort_by(|a, b| cmp_scalar(*b, *a));
        all.into_iter().take(self.sellers.len()).cloned().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EfficientTrades {
    pub q: usize,
    /// (seller, buyer) pairs, most efficient first.
    pub pairs: Vec<(usize, usize)>,
}

/// Longest prefix of sorted sellers and buyers with `b > s`.
pub fn efficient_trades<S: Scalar>(inst: &DoubleAuctionInstance<S>) -> EfficientTrades {
    let pairs: Vec<(usize, usize)> = inst
        .sellers_ascending()
        .into_iter()
        .zip(inst.buyers_descending())
        .take_while(|&(i, j)| inst.buyers[j].definitely_gt(&inst.sellers[i]))
        .collect();
    EfficientTrades { q: pairs.len(), pairs }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trade<S> {
    pub seller: usize,
    pub buyer: usize,
    pub buyer_pays: S,
    pub seller_receives: S,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DaRule {
    TradeReduction,
    BuyerOffer,
    NoTrade,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DAOutcome<S> {
    pub rule: DaRule,
    pub trades: Vec<Trade<S>>,
    pub buyer_payments: S,
    pub seller_receipts: S,
    /// Values of the buyers who trade plus values of the sellers who keep
    /// their item.
    pub welfare: S,
}

impl<S: Scalar> DAOutcome<S> {
    fn new(inst: &DoubleAuctionInstance<S>, rule: DaRule, trades: Vec<Trade<S>>) -> Self {
        let mut sold = vec![false; inst.sellers.len()];
        let mut welfare = S::zero();
        for t in &trades {
            sold[t.seller] = true;
            welfare += &inst.buyers[t.buyer];
        }
        for (v, s) in inst.sellers.iter().zip(sold) {
            if !s {
                welfare += v;
            }
        }
        DAOutcome {
            rule,
            buyer_payments: trades.iter().map(|t| t.buyer_pays.clone()).sum(),
            seller_receipts: trades.iter().map(|t| t.seller_receives.clone()).sum(),
            trades,
            welfare,
        }
    }
}

/// The `q - 1` most efficient pairs trade; buyers pay the `q`-th highest
/// buyer value and sellers receive the `q`-th lowest seller value.
pub fn trade_reduction<S: Scalar>(inst: &DoubleAuctionInstance<S>) -> Result<DAOutcome<S>> {
    let eff = efficient_trades(inst);
    if eff.q < 2 {
        return Err(Error::TooFewTrades(eff.q));
    }
    let (last_s, last_b) = eff.pairs[eff.q - 1];
    let (pay, receive) = (&inst.buyers[last_b], &inst.sellers[last_s]);
    let trades = eff.pairs[..eff.q - 1]
        .iter()
        .map(|&(seller, buyer)| Trade { seller, buyer, buyer_pays: pay.clone(), seller_receives: receive.clone() })
        .collect();
    Ok(DAOutcome::new(inst, DaRule::TradeReduction, trades))
}

/// Trade reduction with two or more efficient trades. With exactly one, the
/// highest buyer makes the lowest seller its profit-maximizing offer, at
/// least `price_floor`, against `cond_seller`. With none, nothing happens.
pub fn hybrid<S: Scalar>(
    inst: &DoubleAuctionInstance<S>,
    cond_seller: &Marginal<S>,
    price_floor: &S,
) -> Result<DAOutcome<S>> {
    let eff = efficient_trades(inst);
    match eff.q {
        0 => Ok(DAOutcome::new(inst, DaRule::NoTrade, Vec::new())),
        1 => {
            let (seller, buyer) = eff.pairs[0];
            let offer = buyer_offer(&inst.buyers[buyer], cond_seller, TieBreak::Lowest, Some(price_floor)).offer;
            let trades = if inst.sellers[seller].le_tol(&offer) && offer.le_tol(&inst.buyers[buyer]) {
                vec![Trade { seller, buyer, buyer_pays: offer.clone(), seller_receives: offer }]
            } else {
                Vec::new()
            };
            Ok(DAOutcome::new(inst, DaRule::BuyerOffer, trades))
        }
        _ => trade_reduction(inst),
    }
}

/// Second-highest buyer value, or zero with a single buyer.
pub fn second_highest_buyer<S: Scalar>(inst: &DoubleAuctionInstance<S>) -> S {
    inst.buyers_descending().get(1).map(|&j| inst.buyers[j].clone()).unwrap_or_else(S::zero)
}
