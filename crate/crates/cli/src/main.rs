use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bitrade_core::constructions::{
    dsic_unbounded, equal_profit_seller, equal_revenue_buyer, l_shaped_gft, l_shaped_welfare, one_sided_lb, simple_2x2,
    tightness_distribution,
};
use bitrade_core::double_auction::{hybrid, second_highest_buyer, DoubleAuctionInstance};
use bitrade_core::ic::{best_implementable, check_ic, implementable, IcMode, Strategy};
use bitrade_core::io::{
    joint_to_json, marginal_from_json, marginal_to_json, mechanism_from_json, mechanism_to_json, parse_json,
    read_joint, rule_from_json, AnyJoint,
};
use bitrade_core::mechanisms::{
    buyer_offering, eps_buyer_offering, fixed_price, randomized_gap_mechanism, seller_offering,
};
use bitrade_core::repro::{repro, ReproParams, Table};
use bitrade_core::{evaluate, DiscreteJoint, Marginal, Mechanism, Mode, Objective, Rational, Scalar, TieBreak};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "bitrade", version, about = "Bilateral-trade mechanisms, ratios and implementability checks")]
struct Cli {
    /// Write the result to this file instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Print tables as CSV with a header row.
    #[arg(long, global = true)]
    csv: bool,

    /// Numeric mode for reading and building distributions.
    #[arg(long, global = true, env = "BITRADE_MODE")]
    mode: Option<Mode>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a distribution family.
    Dist(DistArgs),
    /// Build a mechanism on a distribution.
    Mech(MechArgs),
    /// Welfare, gains from trade and ratios of a mechanism.
    Eval {
        #[arg(long)]
        dist: PathBuf,
        #[arg(long)]
        mech: PathBuf,
    },
    /// Implementability of a rule, or incentive compatibility of a mechanism.
    Feas {
        #[arg(long)]
        dist: PathBuf,
        #[arg(long, conflicts_with = "mech", required_unless_present = "mech")]
        rule: Option<PathBuf>,
        #[arg(long)]
        mech: Option<PathBuf>,
        /// Incentive notion used with --mech.
        #[arg(long, default_value = "bic")]
        ic: IcMode,
    },
    /// Best implementable deterministic rule.
    Best {
        #[arg(long)]
        dist: PathBuf,
        #[arg(long, default_value = "welfare")]
        objective: Objective,
        #[arg(long, default_value = "exhaustive")]
        strategy: Strategy,
    },
    /// Trade reduction / buyer-offer hybrid on a multi-unit market.
    Da {
        /// Comma-separated seller values.
        #[arg(long, value_delimiter = ',', required = true)]
        sellers: Vec<String>,
        /// Comma-separated buyer values.
        #[arg(long, value_delimiter = ',', required = true)]
        buyers: Vec<String>,
        /// Marginal of the lowest seller's value; defaults to a point mass at
        /// the reported value.
        #[arg(long)]
        cond: Option<PathBuf>,
        /// Smallest offer with one efficient trade; defaults to the second
        /// highest buyer value.
        #[arg(long)]
        floor: Option<String>,
    },
    /// Recompute one headline ratio and its table.
    Repro {
        /// thm3.1, thm4.1, thm5.1, thm5.2, thm5.4, thmA.1 or claimB.1.
        id: String,
        #[arg(long)]
        k: Option<u32>,
        #[arg(long)]
        eps: Option<String>,
        #[arg(long)]
        grid: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Tightness,
    EqualRevenue,
    EqualProfit,
    OneSidedLb,
    #[value(name = "simple-2x2")]
    Simple2x2,
    LShapedWelfare,
    LShapedGft,
    DsicUnbounded,
}

#[derive(Args)]
struct DistArgs {
    family: Family,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    grid: Option<f64>,
    /// Buyer value for equal-profit.
    #[arg(long)]
    b: Option<f64>,
    /// Pr(b = 1) for simple-2x2.
    #[arg(long)]
    x1: Option<String>,
    /// Pr(s = 0) for simple-2x2.
    #[arg(long)]
    q1: Option<String>,
    /// Renormalize equal-revenue instead of putting an atom at k.
    #[arg(long)]
    no_top_atom: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MechName {
    FixedPrice,
    BuyerOffering,
    SellerOffering,
    EpsBuyerOffering,
    RandomizedGap,
}

#[derive(Args)]
struct MechArgs {
    name: MechName,
    #[arg(long)]
    dist: PathBuf,
    #[arg(long)]
    price: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    /// low or high; defaults to low for buyers and high for sellers.
    #[arg(long)]
    tie: Option<TieBreak>,
}

/// What a command produced: a JSON document, optionally a table, and
/// whether its check passed.
struct Output {
    json: Value,
    table: Option<Table>,
    pass: bool,
}

impl Output {
    fn ok(json: Value) -> Self {
        Output { json, table: None, pass: true }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn parse_or<S: Scalar>(text: &Option<String>, default: S) -> Result<S> {
    Ok(match text {
        Some(t) => S::parse(t)?,
        None => default,
    })
}

fn approx_only(mode: Option<Mode>, family: &str) -> Result<()> {
    if mode == Some(Mode::Exact) {
        bail!("{family} involves e and is only available in approx mode");
    }
    Ok(())
}

fn joint_table<S: Scalar>(d: &DiscreteJoint<S>) -> Table {
    let mut t = Table::new(&["s", "b", "p"]);
    for c in d.cells() {
        t.push([c.s.to_string(), c.b.to_string(), c.p.to_string()]);
    }
    t
}

fn marginal_table<S: Scalar>(m: &Marginal<S>) -> Table {
    let mut t = Table::new(&["v", "p"]);
    for a in m.atoms() {
        t.push([a.v.to_string(), a.p.to_string()]);
    }
    t
}

fn mech_table<S: Scalar>(m: &Mechanism<S>) -> Table {
    let mut t = Table::new(&["s", "b", "x", "t"]);
    for c in m.cells() {
        t.push([c.s.to_string(), c.b.to_string(), c.x.to_string(), c.t.to_string()]);
    }
    t
}

fn joint_out<S: Scalar>(d: &DiscreteJoint<S>) -> Output {
    Output { json: joint_to_json(d), table: Some(joint_table(d)), pass: true }
}

fn exact_family<S: Scalar>(a: &DistArgs) -> Result<Output> {
    let d = match a.family {
        Family::Simple2x2 => {
            let x1 = parse_or(&a.x1, S::ratio(57, 100))?;
            let q1 = parse_or(&a.q1, S::ratio(716, 1000))?;
            simple_2x2(x1, q1, parse_or(&a.eps, S::ratio(1, 1_000_000))?)?.joint
        }
        Family::LShapedWelfare => {
            l_shaped_welfare(a.k.unwrap_or(4) as usize, parse_or(&a.eps, S::ratio(1, 1_000_000))?)?.0
        }
        Family::LShapedGft => l_shaped_gft(a.k.unwrap_or(4) as usize, parse_or(&a.eps, S::ratio(1, 1_000_000))?)?.0,
        Family::DsicUnbounded => {
            let k = a.k.unwrap_or(4);
            let kk = S::from_i64(i64::from(k));
            let default = S::one() / (kk.powi(k as i32) * S::from_i64(2));
            dsic_unbounded(k, parse_or(&a.eps, default)?)?
        }
        _ => unreachable!("continuous families are handled separately"),
    };
    Ok(joint_out(&d))
}

fn dist(a: &DistArgs, mode: Option<Mode>) -> Result<Output> {
    let eps = |default: f64| parse_or(&a.eps, default);
    match a.family {
        Family::Tightness => {
            approx_only(mode, "tightness")?;
            Ok(joint_out(&tightness_distribution(a.grid.unwrap_or(1e-4))?))
        }
        Family::EqualRevenue => {
            approx_only(mode, "equal-revenue")?;
            let m = equal_revenue_buyer(f64::from(a.k.unwrap_or(10)), !a.no_top_atom, a.grid.unwrap_or(1e-3))?;
            Ok(Output { json: marginal_to_json(&m), table: Some(marginal_table(&m)), pass: true })
        }
        Family::EqualProfit => {
            approx_only(mode, "equal-profit")?;
            let m = equal_profit_seller(a.b.unwrap_or(1.0), a.grid.unwrap_or(1e-3))?;
            Ok(Output { json: marginal_to_json(&m), table: Some(marginal_table(&m)), pass: true })
        }
        Family::OneSidedLb => {
            approx_only(mode, "one-sided-lb")?;
            let lb = one_sided_lb(a.k.unwrap_or(16), eps(1e-3)?, a.grid.unwrap_or(1e-2))?;
            Ok(joint_out(&lb.joint))
        }
        _ => match mode.unwrap_or(Mode::Exact) {
            Mode::Exact => exact_family::<Rational>(a),
            Mode::Approx => exact_family::<f64>(a),
        },
    }
}

fn mech<S: Scalar>(a: &MechArgs, d: &DiscreteJoint<S>) -> Result<Output> {
    let m = match a.name {
        MechName::FixedPrice => {
            let Some(p) = &a.price else { bail!("fixed-price needs --price") };
            fixed_price(d, &S::parse(p)?)
        }
        MechName::BuyerOffering => buyer_offering(d, a.tie.unwrap_or(TieBreak::Lowest)),
        MechName::SellerOffering => seller_offering(d, a.tie.unwrap_or(TieBreak::Highest)),
        MechName::EpsBuyerOffering => {
            let Some(e) = &a.eps else { bail!("eps-buyer-offering needs --eps") };
            eps_buyer_offering(d, &S::parse(e)?)?
        }
        MechName::RandomizedGap => randomized_gap_mechanism(d)?,
    };
    Ok(Output { json: mechanism_to_json(&m), table: Some(mech_table(&m)), pass: true })
}

fn eval<S: Scalar>(d: &DiscreteJoint<S>, mech_doc: &Value) -> Result<Output> {
    let m = mechanism_from_json(mech_doc, d)?;
    Ok(Output::ok(serde_json::to_value(evaluate(&m, d)?)?))
}

fn feas<S: Scalar>(d: &DiscreteJoint<S>, rule: Option<&Value>, mech: Option<&Value>, ic: IcMode) -> Result<Output> {
    let report = match (rule, mech) {
        (Some(doc), _) => implementable(&rule_from_json(doc, d)?, d)?,
        (None, Some(doc)) => check_ic(&mechanism_from_json(doc, d)?, d, ic)?,
        (None, None) => bail!("give --rule or --mech"),
    };
    let pass = report.feasible && report.violations.is_empty();
    Ok(Output { json: serde_json::to_value(report)?, table: None, pass })
}

fn best<S: Scalar>(d: &DiscreteJoint<S>, objective: Objective, strategy: Strategy) -> Result<Output> {
    Ok(Output::ok(serde_json::to_value(best_implementable(d, objective, strategy)?)?))
}

fn da<S: Scalar>(
    sellers: &[String],
    buyers: &[String],
    cond: Option<&Value>,
    floor: &Option<String>,
) -> Result<Output> {
    let parse = |v: &[String]| v.iter().map(|x| S::parse(x.trim())).collect::<bitrade_core::Result<Vec<S>>>();
    let inst = DoubleAuctionInstance::new(parse(sellers)?, parse(buyers)?)?;
    let cond = match cond {
        Some(doc) => marginal_from_json(doc)?,
        None => {
            let lowest = inst.sellers_ascending()[0];
            Marginal::point(inst.sellers[lowest].clone())
        }
    };
    let floor = parse_or(floor, second_highest_buyer(&inst))?;
    Ok(Output::ok(serde_json::to_value(hybrid(&inst, &cond, &floor)?)?))
}

/// Runs `$body` with `$d` bound to the joint in its own numeric mode.
macro_rules! with_joint {
    ($joint:expr, $d:ident => $body:expr) => {
        match $joint {
            AnyJoint::Exact($d) => $body,
            AnyJoint::Approx($d) => $body,
        }
    };
}

fn run(cli: &Cli) -> Result<Output> {
    let mode = cli.mode;
    let load = |p: &Path| -> Result<AnyJoint> { Ok(read_joint(&read(p)?, mode)?) };
    let doc = |p: &Path| -> Result<Value> { Ok(parse_json(&read(p)?)?) };
    match &cli.command {
        Command::Dist(a) => dist(a, mode),
        Command::Mech(a) => with_joint!(load(&a.dist)?, d => mech(a, &d)),
        Command::Eval { dist, mech } => {
            let m = doc(mech)?;
            with_joint!(load(dist)?, d => eval(&d, &m))
        }
        Command::Feas { dist, rule, mech, ic } => {
            let rule = rule.as_deref().map(doc).transpose()?;
            let mech = mech.as_deref().map(doc).transpose()?;
            with_joint!(load(dist)?, d => feas(&d, rule.as_ref(), mech.as_ref(), *ic))
        }
        Command::Best { dist, objective, strategy } => with_joint!(load(dist)?, d => best(&d, *objective, *strategy)),
        Command::Da { sellers, buyers, cond, floor } => {
            let cond = cond.as_deref().map(doc).transpose()?;
            match mode.unwrap_or(Mode::Exact) {
                Mode::Exact => da::<Rational>(sellers, buyers, cond.as_ref(), floor),
                Mode::Approx => da::<f64>(sellers, buyers, cond.as_ref(), floor),
            }
        }
        Command::Repro { id, k, eps, grid } => {
            let out = repro(id, &ReproParams { k: *k, eps: eps.clone(), grid: *grid })?;
            Ok(Output { json: serde_json::to_value(&out)?, pass: out.target.pass, table: Some(out.table) })
        }
    }
}

fn render(cli: &Cli, out: &Output) -> Result<String> {
    if cli.csv {
        match &out.table {
            Some(t) => Ok(t.to_csv()),
            None => bail!("this command has no table to print as CSV"),
        }
    } else {
        Ok(serde_json::to_string_pretty(&out.json)? + "\n")
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli).and_then(|out| {
        let text = render(&cli, &out)?;
        match &cli.out {
            Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
            None => print!("{text}"),
        }
        Ok(out.pass)
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
