//! Values computed independently in the test (hand arithmetic, quadrature,
//! brute force) and compared with the library.

mod common;

use std::f64::consts::E;

use bitrade_core::constructions::{
    equal_profit_seller, l_shaped_gft, l_shaped_welfare, one_sided_lb, simple_2x2, tightness_distribution, xp_rule,
    LShapedSpec,
};
use bitrade_core::double_auction::{efficient_trades, hybrid, trade_reduction, DaRule, DoubleAuctionInstance};
use bitrade_core::ic::lp::{certifies, solve, Outcome, Row};
use bitrade_core::ic::{best_implementable, check_ic, enumerate_thresholds, implementable, IcMode, Strategy};
use bitrade_core::mechanisms::{buyer_offer, fixed_price, seller_offer};
use bitrade_core::metrics::{evaluate, opt_gft, opt_welfare, rule_value};
use bitrade_core::repro::{repro, ReproParams};
use bitrade_core::{DiscreteJoint, Marginal, Objective, Rational, Scalar, Side, TieBreak};
use common::r;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

fn eps6() -> Rational {
    r(1, 1_000_000)
}

fn ints(v: &[i64]) -> Vec<Rational> {
    v.iter().map(|&x| Rational::integer(x)).collect()
}

fn relative_gap(a: &Rational, b: &Rational) -> Rational {
    (a.clone() - b).abs_val() / b
}

#[test]
fn two_by_two_cells_are_products_of_marginals() {
    let (x1, q1) = (r(57, 100), r(716, 1000));
    let t = simple_2x2(x1.clone(), q1.clone(), eps6()).unwrap();
    let one = Rational::one();
    let expected = [
        (Rational::zero(), one.clone(), x1.clone() * &q1),
        (t.s2.clone(), one.clone(), x1.clone() * (one.clone() - &q1)),
        (Rational::zero(), t.b2.clone(), (one.clone() - &x1) * &q1),
        (t.s2.clone(), t.b2.clone(), (one.clone() - &x1) * (one - &q1)),
    ];
    for (s, b, p) in expected {
        assert_eq!(t.joint.prob(&s, &b), p);
    }
    assert_eq!(t.joint.prob(&Rational::zero(), &Rational::one()), r(40812, 100000));
    assert_eq!(t.joint.prob(&t.s2, &t.b2), r(12212, 100000));
}

#[test]
fn two_by_two_row_and_column_welfare_by_hand() {
    let (x1, q1) = (r(57, 100), r(716, 1000));
    let t = simple_2x2(x1.clone(), q1.clone(), eps6()).unwrap();
    let (x2, q2) = (Rational::one() - &x1, Rational::one() - &q1);
    // Column: trade whenever s = 0; the (s2, 1) cell keeps s2, (s2, b2) keeps s2.
    let column = x1.clone() * &q1 + x2.clone() * &q1 * &t.b2 + x1.clone() * &q2 * &t.s2 + x2.clone() * &q2 * &t.s2;
    // Row: trade whenever b = b2; (0, 1) keeps 0 and (s2, 1) keeps s2.
    let row = x1.clone() * &q2 * &t.s2 + x2.clone() * &t.b2;
    assert_eq!(rule_value(&t.column_rule(), &t.joint, Objective::Welfare).unwrap(), column);
    assert_eq!(rule_value(&t.row_rule(), &t.joint, Objective::Welfare).unwrap(), row);
    let opt = x1.clone() * &q1 + x1 * &q2 * &t.s2 + x2 * &t.b2;
    assert_eq!(opt_welfare(&t.joint), opt);
}

#[test]
fn two_by_two_optimal_rule_violates_the_hand_derived_inequality() {
    let (x1, q1) = (r(57, 100), r(716, 1000));
    let t = simple_2x2(x1.clone(), q1.clone(), eps6()).unwrap();
    let (x2, q2) = (Rational::one() - &x1, Rational::one() - &q1);
    let lhs = t.s2.clone() - x1 / &x2;
    let rhs = q2 / &q1 * (t.b2.clone() - &t.s2) + Rational::one();
    assert!(lhs > rhs);
    assert!(!implementable(&t.optimal_rule(), &t.joint).unwrap().feasible);
    // The row rule is a fixed price at s2, dominant-strategy by construction.
    let fp = fixed_price(&t.joint, &t.s2);
    assert_eq!(fp.rule(), t.row_rule());
    assert!(check_ic(&fp, &t.joint, IcMode::Dsic).unwrap().violations.is_empty());
    assert!(implementable(&t.row_rule(), &t.joint).unwrap().feasible);
}

#[test]
fn discretized_tightness_seller_matches_quadrature() {
    let density = |s: f64| 1.0 / (E * (1.0 - s).powi(2));
    let top = (E - 1.0) / E;
    let total = 1.0 / E + simpson(density, 0.0, top, 20_000);
    assert!((total - 1.0).abs() < 1e-6);
    let m = equal_profit_seller(1.0, 1e-4).unwrap();
    let mass: f64 = m.atoms().iter().map(|a| a.p).sum();
    assert!((mass - total).abs() < 1e-6);
    for p in [0.1, 0.25, 0.5, 0.6] {
        let continuous = 1.0 / E + simpson(density, 0.0, p, 20_000);
        assert!((m.cdf(&p) - continuous).abs() < 1e-6, "F({p})");
    }
}

#[test]
fn fixed_price_zero_on_tightness_matches_quadrature() {
    let d = tightness_distribution(1e-4).unwrap();
    let top = (E - 1.0) / E;
    let mean_seller = simpson(|s| s / (E * (1.0 - s).powi(2)), 0.0, top, 20_000);
    let expected = 1.0 / E + mean_seller;
    let eval = evaluate(&fixed_price(&d, &0.0), &d).unwrap();
    assert!((eval.welfare - expected).abs() < 1e-3);
    assert!((expected - (E - 1.0) / E).abs() < 1e-9);
    assert!((eval.opt_welfare - 1.0).abs() < 1e-9);
}

#[test]
fn equal_profit_offers_all_tie() {
    let m = equal_profit_seller(1.0, 1e-3).unwrap();
    let high = buyer_offer(&1.0, &m, TieBreak::Highest, None);
    assert!((high.offer - *m.max()).abs() < 1e-12);
    assert!((high.profit - 1.0 / E).abs() < 1e-3);
    let low = buyer_offer(&1.0, &m, TieBreak::Lowest, None);
    assert_eq!(low.offer, 0.0);
    for a in m.atoms().iter().step_by(37) {
        assert!(((1.0 - a.v) * m.cdf(&a.v) - 1.0 / E).abs() < 2e-3, "offer {}", a.v);
    }
}

#[test]
fn seller_offer_two_atoms_brute_force() {
    let buyers = Marginal::new(vec![(r(1, 1), r(1, 2)), (r(10, 1), r(1, 2))]).unwrap();
    let zero = seller_offer(&Rational::zero(), &buyers, TieBreak::Lowest);
    assert_eq!(zero.offer, Rational::integer(10));
    assert_eq!(zero.profit, Rational::integer(5));
    // With s = 3, offers 4 and 10 earn (4-3)*1 and (10-3)/4.
    let buyers = Marginal::new(vec![(r(4, 1), r(3, 4)), (r(10, 1), r(1, 4))]).unwrap();
    let brute = |s: i64| {
        [4i64, 10]
            .into_iter()
            .map(|p| (Rational::integer(p - s) * buyers.survival(&Rational::integer(p)), p))
            .max_by(|a, b| a.0.cmp(&b.0))
            .unwrap()
    };
    for s in [0, 3] {
        let got = seller_offer(&Rational::integer(s), &buyers, TieBreak::Lowest);
        let (profit, p) = brute(s);
        assert_eq!(got.offer, Rational::integer(p));
        assert_eq!(got.profit, profit);
    }
}

#[test]
fn one_sided_optimum_matches_quadrature() {
    let (k, eps) = (4u32, 0.01);
    let lb = one_sided_lb(k, eps, 1e-2).unwrap();
    let kf = f64::from(k);
    let top_mass = 1.0 / (kf + eps) + eps / (1.0 + eps);
    let continuous = simpson(|b| b / (b + eps).powi(2), 1.0, kf, 20_000) + (kf + 1.0) * top_mass;
    let opt = opt_welfare(&lb.joint);
    assert!((opt - continuous).abs() / continuous < 1e-2, "{opt} vs {continuous}");
    let buyer_mass = simpson(|b| 1.0 / (b + eps).powi(2), 1.0, kf, 20_000) + top_mass;
    assert!((buyer_mass - 1.0).abs() < 1e-9);
}

#[test]
fn xp_profile_agrees_with_rule_evaluation() {
    let lb = one_sided_lb(3, 0.01, 0.05).unwrap();
    let profile = lb.welfare_profile();
    let mut probes: Vec<f64> = lb.joint.values(Side::Seller).into_iter().step_by(3).collect();
    probes.extend(lb.joint.values(Side::Buyer).into_iter().step_by(5));
    probes.extend([0.0, 0.333, 1.7, 2.95, 10.0]);
    for p in probes {
        let direct = rule_value(&xp_rule(&lb, p), &lb.joint, Objective::Welfare).unwrap();
        assert!((profile.welfare_at(p) - direct).abs() < 1e-9, "p = {p}");
    }
    let best = profile.best();
    let brute = lb
        .joint
        .values(Side::Seller)
        .into_iter()
        .chain(lb.joint.values(Side::Buyer))
        .map(|p| rule_value(&xp_rule(&lb, p), &lb.joint, Objective::Welfare).unwrap())
        .fold(f64::MIN, f64::max);
    assert!((best.welfare - brute).abs() < 1e-9);
}

#[test]
fn xp_rule_at_zero_and_between_support_values() {
    let lb = one_sided_lb(3, 0.01, 0.05).unwrap();
    let rule = xp_rule(&lb, 0.0);
    for (c, rc) in lb.joint.cells().iter().zip(rule.cells()) {
        let expected = c.b == lb.top || c.s == 0.0;
        assert_eq!(rc.x == 1.0, expected, "cell ({}, {})", c.s, c.b);
    }
    let mut support: Vec<f64> = lb.joint.values(Side::Seller);
    support.extend(lb.joint.values(Side::Buyer));
    support.sort_by(f64::total_cmp);
    support.dedup();
    for w in support.windows(2).step_by(11) {
        let gap = w[1] - w[0];
        if gap < 1e-6 {
            continue;
        }
        let a = xp_rule(&lb, w[0] + gap / 3.0);
        let b = xp_rule(&lb, w[0] + 2.0 * gap / 3.0);
        assert_eq!(a, b, "between {} and {}", w[0], w[1]);
    }
}

#[test]
fn l_shaped_small_k_values() {
    let eps = eps6();
    let tol = Rational::integer(10) * &eps;
    let (d, spec) = l_shaped_welfare(2, eps.clone()).unwrap();
    assert!(relative_gap(&spec.b[1], &Rational::integer(7)) <= tol);
    assert!(relative_gap(&spec.s[1], &Rational::integer(5)) <= tol);
    assert_eq!(spec.x, vec![r(1, 2), r(1, 2)]);
    assert_eq!(spec.q, vec![r(1, 2), r(1, 2)]);
    // OPT = 1/2 + 1/2 * 7 = 4 and the best rule keeps the top row: 7/2.
    assert!(relative_gap(&opt_welfare(&d), &Rational::integer(4)) <= tol);
    let best = best_implementable(&d, Objective::Welfare, Strategy::Threshold).unwrap();
    assert!(relative_gap(&best.value, &r(7, 2)) <= tol);
    assert!(relative_gap(&best.ratio.unwrap(), &r(8, 7)) <= tol);

    let (d, spec) = l_shaped_gft(2, eps.clone()).unwrap();
    assert!(relative_gap(&spec.b[1], &Rational::integer(4)) <= tol);
    assert!(relative_gap(&spec.s[1], &Rational::integer(3)) <= tol);
    // OPT-GFT = (1/2)(1/2)(1) + (1/2)(1/2)(4) + (1/2)(1/2)(4 - 3) = 3/2.
    assert!(relative_gap(&opt_gft(&d), &r(3, 2)) <= tol);
    let best = best_implementable(&d, Objective::Gft, Strategy::Threshold).unwrap();
    assert!(relative_gap(&best.value, &r(5, 4)) <= tol);
    assert!(relative_gap(&best.ratio.unwrap(), &r(6, 5)) <= tol);

    // 1 + (H_4 - 1)/(H_4 + 1) with H_4 = 25/12.
    let (d, _) = l_shaped_gft(4, eps).unwrap();
    let best = best_implementable(&d, Objective::Gft, Strategy::Threshold).unwrap();
    assert!(relative_gap(&best.ratio.unwrap(), &r(50, 37)) <= tol);
}

fn trade_count(t: &bitrade_core::ic::ThresholdRule, k: usize) -> usize {
    (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).filter(|&(i, j)| t.trades(k, i, j)).count()
}

fn welfare_by_hand(
    d: &DiscreteJoint<Rational>,
    spec: &LShapedSpec<Rational>,
    t: &bitrade_core::ic::ThresholdRule,
) -> Rational {
    let mut w = Rational::zero();
    for i in 0..spec.k {
        for j in 0..spec.k {
            let p = d.prob(&spec.s[j], &spec.b[i]);
            let v = if t.trades(spec.k, i, j) { &spec.b[i] } else { &spec.s[j] };
            w += p * v;
        }
    }
    w
}

#[test]
fn feasible_k_trade_thresholds_tie() {
    for k in [3usize, 4] {
        for (d, spec) in [l_shaped_welfare(k, eps6()).unwrap(), l_shaped_gft(k, eps6()).unwrap()] {
            let outcomes = enumerate_thresholds(&d).unwrap();
            assert_eq!(outcomes.len(), 2 * (k + 1) * k);
            let tied: Vec<_> =
                outcomes.iter().filter(|o| o.report.feasible && trade_count(&o.threshold, k) == k).collect();
            assert!(!tied.is_empty(), "k={k} {:?}", spec.family);
            for o in &tied {
                assert_eq!(o.welfare, welfare_by_hand(&d, &spec, &o.threshold));
                assert_eq!(o.welfare, tied[0].welfare);
                assert_eq!(o.gft, tied[0].gft);
            }
        }
    }
}

#[test]
fn large_threshold_rules_are_infeasible() {
    for k in [3usize, 4] {
        for (d, spec) in [l_shaped_welfare(k, eps6()).unwrap(), l_shaped_gft(k, eps6()).unwrap()] {
            for o in enumerate_thresholds(&d).unwrap() {
                let n = trade_count(&o.threshold, k);
                let limit = if o.threshold.corner { k + 1 } else { k };
                if n >= limit {
                    assert!(!o.report.feasible, "{} feasible on k={k} {:?}", o.threshold, spec.family);
                }
            }
        }
    }
}

#[test]
fn top_row_fixed_price_is_feasible() {
    let (d, spec) = l_shaped_welfare(3, eps6()).unwrap();
    let outcomes = enumerate_thresholds(&d).unwrap();
    let row =
        outcomes.iter().find(|o| o.threshold.buyer.is_none() && o.threshold.seller == 2 && o.threshold.corner).unwrap();
    assert!(row.report.feasible);
    let fp = fixed_price(&d, &spec.s[2]);
    assert_eq!(fp.rule(), row.rule);
    assert!(check_ic(&fp, &d, IcMode::Bic).unwrap().violations.is_empty());
}

#[test]
fn double_auction_worked_examples() {
    let inst = DoubleAuctionInstance::new(ints(&[1, 3]), ints(&[5, 4])).unwrap();
    let eff = efficient_trades(&inst);
    assert_eq!(eff.q, 2);
    let out = trade_reduction(&inst).unwrap();
    assert_eq!(out.trades.len(), 1);
    assert_eq!((out.trades[0].seller, out.trades[0].buyer), (0, 0));
    assert_eq!(out.buyer_payments, Rational::integer(4));
    assert_eq!(out.seller_receipts, Rational::integer(3));
    // Buyer 5 gets the item from seller 1, seller 3 keeps the item: 5 + 3.
    assert_eq!(out.welfare, Rational::integer(8));

    let inst = DoubleAuctionInstance::new(ints(&[0, 0, 0]), ints(&[3, 3, 3])).unwrap();
    let out = trade_reduction(&inst).unwrap();
    assert_eq!(efficient_trades(&inst).q, 3);
    assert_eq!(out.trades.len(), 2);
    assert!(out.trades.iter().all(|t| t.buyer_pays == Rational::integer(3) && t.seller_receives.is_zero_tol()));

    let inst = DoubleAuctionInstance::new(ints(&[0]), ints(&[10, 2])).unwrap();
    let out = hybrid(&inst, &Marginal::point(Rational::zero()), &Rational::integer(2)).unwrap();
    assert_eq!(out.rule, DaRule::BuyerOffer);
    assert_eq!(out.trades[0].buyer_pays, Rational::integer(2));
    assert_eq!(out.welfare, Rational::integer(10));

    let inst = DoubleAuctionInstance::new(ints(&[4, 9]), ints(&[3, 1])).unwrap();
    let out = hybrid(&inst, &Marginal::point(Rational::integer(4)), &Rational::one()).unwrap();
    assert_eq!(out.rule, DaRule::NoTrade);
    assert_eq!(out.welfare, Rational::integer(13));
}

#[test]
fn hybrid_offer_against_a_two_point_seller() {
    // Buyer 10, seller 0 or 6 equally likely, floor 1: offer 1 earns 9/2,
    // offer 6 earns 4. The floor offer wins.
    let inst = DoubleAuctionInstance::new(ints(&[0]), ints(&[10, 1])).unwrap();
    let cond = Marginal::new(vec![(r(0, 1), r(1, 2)), (r(6, 1), r(1, 2))]).unwrap();
    let out = hybrid(&inst, &cond, &Rational::one()).unwrap();
    assert_eq!(out.trades[0].buyer_pays, Rational::one());
    let out = hybrid(&inst, &cond, &Rational::integer(5)).unwrap();
    // Floor 5: (10-5)/2 = 5/2 against (10-6) = 4, so 6.
    assert_eq!(out.trades[0].buyer_pays, Rational::integer(6));
}

#[test]
fn repro_welfare_target_small_k() {
    let out = repro("thm5.2", &ReproParams { k: Some(2), eps: Some("1/1000000".into()), grid: None }).unwrap();
    assert!(out.target.pass);
    assert!((out.target.expected - 8.0 / 7.0).abs() < 1e-12);
    assert!((out.target.computed - 8.0 / 7.0).abs() < 1e-5);
    assert!(!out.table.rows.is_empty());
}

fn big(n: i64) -> BigRational {
    BigRational::from_integer(n.into())
}

#[test]
fn lp_certificates_check_by_hand() {
    // y0 + y1 >= 3, -y0 >= -1, -y1 >= -1: infeasible.
    let rows = vec![
        Row { coeffs: vec![(0, big(1)), (1, big(1))], rhs: big(3) },
        Row { coeffs: vec![(0, big(-1))], rhs: big(-1) },
        Row { coeffs: vec![(1, big(-1))], rhs: big(-1) },
    ];
    let Outcome::Infeasible(lambda) = solve(2, &rows) else { panic!("expected infeasible") };
    assert!(certifies(2, &rows, &lambda));
    let mut combo = [BigRational::zero(), BigRational::zero()];
    let mut rhs = BigRational::zero();
    for (row, l) in rows.iter().zip(&lambda) {
        assert!(!l.is_negative());
        for (j, c) in &row.coeffs {
            combo[*j] += c * l;
        }
        rhs += &row.rhs * l;
    }
    assert!(combo.iter().all(|c| !c.is_positive()));
    assert!(rhs.is_positive());
    assert!(!certifies(2, &rows, &[big(1), big(0), big(0)]));

    // Loosen the first row to 2 and the system becomes feasible.
    let mut rows = rows;
    rows[0].rhs = big(2);
    let Outcome::Feasible(y) = solve(2, &rows) else { panic!("expected feasible") };
    for row in &rows {
        let lhs: BigRational = row.coeffs.iter().map(|(j, c)| c * &y[*j]).sum();
        assert!(lhs >= row.rhs);
    }
}

#[test]
fn infeasible_rules_carry_certificates() {
    let t = simple_2x2(r(57, 100), r(716, 1000), eps6()).unwrap();
    let report = implementable(&t.diagonal_rule(), &t.joint).unwrap();
    assert!(!report.feasible);
    let cert = report.certificate.unwrap();
    assert!(!cert.is_empty());
    assert!(cert.iter().all(|c| c.multiplier > Rational::zero()));
}
