//! Finite joint distributions over (seller value, buyer value), their
//! marginals and conditionals, and grid discretization of densities.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cmp_scalar, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Seller,
    Buyer,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Seller => Side::Buyer,
            Side::Buyer => Side::Seller,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Seller => "seller",
            Side::Buyer => "buyer",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cell<S> {
    pub s: S,
    pub b: S,
    pub p: S,
}

impl<S> Cell<S> {
    pub fn value(&self, side: Side) -> &S {
        match side {
            Side::Seller => &self.s,
            Side::Buyer => &self.b,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Atom<S> {
    pub v: S,
    pub p: S,
}

/// Distribution of one agent's value: atoms sorted ascending, unit mass.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Marginal<S> {
    atoms: Vec<Atom<S>>,
}

fn check_unit_mass<S: Scalar>(total: &S) -> Result<()> {
    let tol = S::tolerance().max(0.0);
    let ok = if tol == 0.0 { *total == S::one() } else { (total.to_f64() - 1.0).abs() <= tol };
    if ok {
        Ok(())
    } else {
        Err(Error::ProbabilityMass { total: total.to_string() })
    }
}

fn check_probability<S: Scalar>(p: &S) -> Result<()> {
    if *p > S::zero() {
        Ok(())
    } else {
        Err(Error::NegativeValue { field: "probability", value: p.to_string() })
    }
}

fn check_finite<S: Scalar>(v: &S) -> Result<()> {
    if v.to_f64().is_nan() {
        Err(Error::Parse(v.to_string()))
    } else {
        Ok(())
    }
}

impl<S: Scalar> Marginal<S> {
    pub fn new<I: IntoIterator<Item = (S, S)>>(input: I) -> Result<Self> {
        let mut atoms: Vec<Atom<S>> = Vec::new();
        for (v, p) in input {
            check_finite(&v)?;
            check_finite(&p)?;
            check_probability(&p)?;
            atoms.push(Atom { v, p });
        }
        atoms.sort_by(|a, b| cmp_scalar(&a.v, &b.v));
        let atoms = merge_atoms(atoms);
        let total: S = atoms.iter().map(|a| a.p.clone()).sum();
        check_unit_mass(&total)?;
        Ok(Marginal { atoms })
    }

    pub fn point(v: S) -> Self {
        Marginal { atoms: vec![Atom { v, p: S::one() }] }
    }

    pub(crate) fn from_sorted(atoms: Vec<Atom<S>>) -> Self {
        Marginal { atoms }
    }

    pub fn atoms(&self) -> &[Atom<S>] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = &S> {
        self.atoms.iter().map(|a| &a.v)
    }

    pub fn min(&self) -> &S {
        &self.atoms[0].v
    }

    pub fn max(&self) -> &S {
        &self.atoms[self.atoms.len() - 1].v
    }

    /// Pr(X <= v), right-continuous.
    pub fn cdf(&self, v: &S) -> S {
        self.atoms.iter().filter(|a| a.v.le_tol(v)).map(|a| a.p.clone()).sum()
    }

    /// Pr(X >= v).
    pub fn survival(&self, v: &S) -> S {
        self.atoms.iter().filter(|a| a.v.ge_tol(v)).map(|a| a.p.clone()).sum()
    }

    /// `cdf` at every point of an ascending slice, in one pass.
    pub fn cdf_sorted(&self, points: &[S]) -> Vec<S> {
        let mut out = Vec::with_capacity(points.len());
        let mut acc = S::zero();
        let mut i = 0;
        for p in points {
            while i < self.atoms.len() && self.atoms[i].v.le_tol(p) {
                acc += &self.atoms[i].p;
                i += 1;
            }
            out.push(acc.clone());
        }
        out
    }

    /// `survival` at every point of an ascending slice, in one pass.
    pub fn survival_sorted(&self, points: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); points.len()];
        let mut acc = S::zero();
        let mut i = self.atoms.len();
        for (slot, p) in out.iter_mut().zip(points).rev() {
            while i > 0 && self.atoms[i - 1].v.ge_tol(p) {
                acc += &self.atoms[i - 1].p;
                i -= 1;
            }
            *slot = acc.clone();
        }
        out
    }

    pub fn mean(&self) -> S {
        self.atoms.iter().map(|a| a.v.clone() * &a.p).sum()
    }

    pub fn mass_at(&self, v: &S) -> S {
        self.atoms.iter().filter(|a| a.v.approx_eq(v)).map(|a| a.p.clone()).sum()
    }
}

fn merge_atoms<S: Scalar>(sorted: Vec<Atom<S>>) -> Vec<Atom<S>> {
    let mut out: Vec<Atom<S>> = Vec::with_capacity(sorted.len());
    for a in sorted {
        match out.last_mut() {
            Some(last) if last.v.approx_eq(&a.v) => last.p += a.p,
            _ => out.push(a),
        }
    }
    out
}

/// Conditional distribution of the other side given one side's value.
#[derive(Clone, Debug, PartialEq)]
pub struct Conditional<S> {
    pub value: S,
    /// Marginal probability of `value`.
    pub mass: S,
    pub marginal: Marginal<S>,
    /// Indices into the joint's cells, in the marginal's atom order.
    pub cells: Vec<usize>,
}

/// Finite joint distribution. Cells are unique and sorted by (s, b).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscreteJoint<S> {
    cells: Vec<Cell<S>>,
}

impl<S: Scalar> DiscreteJoint<S> {
    pub fn new<I: IntoIterator<Item = (S, S, S)>>(cells: I) -> Result<Self> {
        let mut out = Vec::new();
        for (s, b, p) in cells {
            check_finite(&s)?;
            check_finite(&b)?;
            check_finite(&p)?;
            if s.definitely_lt(&S::zero()) {
                return Err(Error::NegativeValue { field: "seller value", value: s.to_string() });
            }
            if b.definitely_lt(&S::zero()) {
                return Err(Error::NegativeValue { field: "buyer value", value: b.to_string() });
            }
            check_probability(&p)?;
            out.push(Cell { s, b, p });
        }
        if out.is_empty() {
            return Err(Error::ProbabilityMass { total: "0".into() });
        }
        out.sort_by(|x, y| cmp_scalar(&x.s, &y.s).then_with(|| cmp_scalar(&x.b, &y.b)));
        let mut merged: Vec<Cell<S>> = Vec::with_capacity(out.len());
        for c in out {
            match merged.last_mut() {
                Some(last) if last.s.approx_eq(&c.s) && last.b.approx_eq(&c.b) => last.p += c.p,
                _ => merged.push(c),
            }
        }
        let total: S = merged.iter().map(|c| c.p.clone()).sum();
        check_unit_mass(&total)?;
        Ok(DiscreteJoint { cells: merged })
    }

    /// Product of a seller and a buyer marginal.
    pub fn independent(seller: &Marginal<S>, buyer: &Marginal<S>) -> Self {
        let mut cells = Vec::with_capacity(seller.len() * buyer.len());
        for a in seller.atoms() {
            for c in buyer.atoms() {
                cells.push(Cell { s: a.v.clone(), b: c.v.clone(), p: a.p.clone() * &c.p });
            }
        }
        DiscreteJoint { cells }
    }

    pub fn cells(&self) -> &[Cell<S>] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn position(&self, s: &S, b: &S) -> Option<usize> {
        let start = self.cells.partition_point(|c| c.s.definitely_lt(s));
        self.cells[start..].iter().take_while(|c| c.s.approx_eq(s)).position(|c| c.b.approx_eq(b)).map(|i| start + i)
    }

    pub fn prob(&self, s: &S, b: &S) -> S {
        self.position(s, b).map(|i| self.cells[i].p.clone()).unwrap_or_else(S::zero)
    }

    /// Sorted distinct values on one side.
    pub fn values(&self, side: Side) -> Vec<S> {
        let mut v: Vec<S> = self.cells.iter().map(|c| c.value(side).clone()).collect();
        v.sort_by(cmp_scalar);
        v.dedup_by(|a, b| a.approx_eq(b));
        v
    }

    pub fn marginal(&self, side: Side) -> Marginal<S> {
        let mut atoms: Vec<Atom<S>> =
            self.cells.iter().map(|c| Atom { v: c.value(side).clone(), p: c.p.clone() }).collect();
        atoms.sort_by(|a, b| cmp_scalar(&a.v, &b.v));
        Marginal::from_sorted(merge_atoms(atoms))
    }

    /// Distribution of the other side given `given`'s value.
    pub fn condition(&self, given: Side, value: &S) -> Result<Marginal<S>> {
        let idx: Vec<usize> = match given {
            Side::Seller => {
                let start = self.cells.partition_point(|c| c.s.definitely_lt(value));
                (start..self.cells.len()).take_while(|&i| self.cells[i].s.approx_eq(value)).collect()
            }
            Side::Buyer => (0..self.cells.len()).filter(|&i| self.cells[i].b.approx_eq(value)).collect(),
        };
        if idx.is_empty() {
            return Err(Error::OutOfSupport { side: given.name(), value: value.to_string() });
        }
        Ok(self.group(given, value.clone(), idx).marginal)
    }

    /// Conditionals for every value on the `given` side, ascending.
    pub fn conditionals(&self, given: Side) -> Vec<Conditional<S>> {
        let mut order: Vec<usize> = (0..self.cells.len()).collect();
        if given == Side::Buyer {
            order.sort_by(|&i, &j| {
                let (x, y) = (&self.cells[i], &self.cells[j]);
                cmp_scalar(&x.b, &y.b).then_with(|| cmp_scalar(&x.s, &y.s))
            });
        }
        let mut out = Vec::new();
        let mut start = 0;
        while start < order.len() {
            let v = self.cells[order[start]].value(given).clone();
            let mut end = start + 1;
            while end < order.len() && self.cells[order[end]].value(given).approx_eq(&v) {
                end += 1;
            }
            out.push(self.group(given, v, order[start..end].to_vec()));
            start = end;
        }
        out
    }

    fn group(&self, given: Side, value: S, idx: Vec<usize>) -> Conditional<S> {
        let mass: S = idx.iter().map(|&i| self.cells[i].p.clone()).sum();
        let other = given.other();
        let atoms = idx
            .iter()
            .map(|&i| Atom { v: self.cells[i].value(other).clone(), p: self.cells[i].p.clone() / &mass })
            .collect();
        Conditional { value, mass, marginal: Marginal::from_sorted(atoms), cells: idx }
    }

    pub fn expectation<F: Fn(&Cell<S>) -> S>(&self, f: F) -> S {
        self.cells.iter().map(|c| f(c) * &c.p).sum()
    }

    /// Re-expresses the joint in another numeric mode and revalidates it.
    pub fn convert<T: Scalar>(&self) -> Result<DiscreteJoint<T>> {
        DiscreteJoint::new(self.cells.iter().map(|c| (c.s.convert(), c.b.convert(), c.p.convert())))
    }
}

pub fn build_joint<S: Scalar, I: IntoIterator<Item = (S, S, S)>>(cells: I) -> Result<DiscreteJoint<S>> {
    DiscreteJoint::new(cells)
}

pub fn condition<S: Scalar>(dist: &DiscreteJoint<S>, given: Side, value: &S) -> Result<Marginal<S>> {
    dist.condition(given, value)
}

pub fn cdf<S: Scalar>(m: &Marginal<S>, v: &S) -> S {
    m.cdf(v)
}

type Primitive = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// An absolutely continuous piece on `[lo, hi]`, given by an antiderivative
/// of its density.
#[derive(Clone)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    primitive: Primitive,
}

impl Piece {
    pub fn mass(&self, a: f64, c: f64) -> f64 {
        (self.primitive)(c) - (self.primitive)(a)
    }
}

impl fmt::Debug for Piece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Piece").field("lo", &self.lo).field("hi", &self.hi).finish_non_exhaustive()
    }
}

/// Piecewise density plus point masses.
#[derive(Clone, Debug, Default)]
pub struct Density {
    pub pieces: Vec<Piece>,
    pub atoms: Vec<(f64, f64)>,
}

impl Density {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_piece<F>(mut self, lo: f64, hi: f64, primitive: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.pieces.push(Piece { lo, hi, primitive: Arc::new(primitive) });
        self
    }

    pub fn with_atom(mut self, v: f64, mass: f64) -> Self {
        self.atoms.push((v, mass));
        self
    }

    pub fn total_mass(&self) -> f64 {
        self.pieces.iter().map(|p| p.mass(p.lo, p.hi)).sum::<f64>() + self.atoms.iter().map(|a| a.1).sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rounding {
    /// Mass of `(t_i, t_{i+1}]` goes to `t_{i+1}`; atoms move to the next grid point.
    Up,
    /// Mass of `[t_i, t_{i+1})` goes to `t_i`; atoms move to the previous grid point.
    Down,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Grid {
    /// Multiples of the step.
    Uniform(f64),
    /// Step `δ` below 1, step `n·δ` on `[n, n+1)` for integer `n >= 1`.
    Graded(f64),
}

impl Grid {
    fn base(&self) -> f64 {
        match *self {
            Grid::Uniform(d) | Grid::Graded(d) => d,
        }
    }

    fn validate(&self) -> Result<()> {
        let d = self.base();
        if d > 0.0 && d.is_finite() {
            Ok(())
        } else {
            Err(Error::DegenerateGrid(d.to_string()))
        }
    }

    /// (origin, step, end) of the uniform run containing `x`.
    fn run(&self, x: f64) -> (f64, f64, f64) {
        match *self {
            Grid::Uniform(d) => (0.0, d, f64::INFINITY),
            Grid::Graded(d) => {
                if x < 1.0 {
                    (0.0, d, 1.0)
                } else {
                    let n = x.floor();
                    (n, n * d, n + 1.0)
                }
            }
        }
    }

    fn slack(&self) -> f64 {
        self.base() * 1e-6
    }

    /// Grid points strictly inside `(lo, hi)`, ascending.
    pub fn points_between(&self, lo: f64, hi: f64) -> Vec<f64> {
        let eps = self.slack();
        let mut out = Vec::new();
        let mut x = lo;
        while x < hi - eps {
            let (origin, step, end) = self.run(x + eps);
            let mut j = ((x - origin) / step + 1e-9).floor() + 1.0;
            loop {
                let p = origin + j * step;
                if p >= end - eps || p >= hi - eps {
                    break;
                }
                if p > lo + eps {
                    out.push(p);
                }
                j += 1.0;
            }
            if end >= hi - eps {
                break;
            }
            if end > lo + eps {
                out.push(end);
            }
            x = end;
        }
        out
    }

    /// Smallest grid point >= x.
    pub fn ceil(&self, x: f64) -> f64 {
        let (origin, step, end) = self.run(x);
        let p = origin + ((x - origin) / step - 1e-9).ceil() * step;
        p.min(end)
    }

    /// Largest grid point <= x.
    pub fn floor(&self, x: f64) -> f64 {
        let (origin, step, _) = self.run(x);
        origin + ((x - origin) / step + 1e-9).floor() * step
    }
}

/// Push-up discretization on multiples of `step`.
pub fn discretize(density: &Density, step: f64) -> Result<Marginal<f64>> {
    discretize_on(density, Grid::Uniform(step), Rounding::Up)
}

/// Moves all mass onto grid points. Piece endpoints are kept as atom
/// locations so that the mass of a partial final cell stays inside the
/// support. The result must have unit mass.
pub fn discretize_on(density: &Density, grid: Grid, rounding: Rounding) -> Result<Marginal<f64>> {
    grid.validate()?;
    let mut atoms: Vec<Atom<f64>> = Vec::new();
    for &(v, m) in &density.atoms {
        if m < 0.0 {
            return Err(Error::NegativeValue { field: "probability", value: m.to_string() });
        }
        let at = match rounding {
            Rounding::Up => grid.ceil(v),
            Rounding::Down => grid.floor(v),
        };
        atoms.push(Atom { v: at, p: m });
    }
    for piece in &density.pieces {
        let mut breaks = Vec::with_capacity(16);
        breaks.push(piece.lo);
        breaks.extend(grid.points_between(piece.lo, piece.hi));
        breaks.push(piece.hi);
        for w in breaks.windows(2) {
            let m = piece.mass(w[0], w[1]);
            if m < -TINY {
                return Err(Error::NegativeValue { field: "probability", value: m.to_string() });
            }
            let at = match rounding {
                Rounding::Up => w[1],
                Rounding::Down => w[0],
            };
            atoms.push(Atom { v: at, p: m });
        }
    }
    atoms.retain(|a| a.p > 0.0);
    atoms.sort_by(|a, b| cmp_scalar(&a.v, &b.v));
    let atoms = merge_atoms(atoms);
    let total: f64 = atoms.iter().map(|a| a.p).sum();
    check_unit_mass(&total)?;
    Ok(Marginal::from_sorted(atoms))
}

const TINY: f64 = 1e-15;
