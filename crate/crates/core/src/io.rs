//! JSON documents for distributions, marginals, rules and mechanisms.
//!
//! Values are `"num/den"` strings or JSON numbers in either mode; exact
//! documents render rationals as strings and approximate ones as numbers.

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::dist::{DiscreteJoint, Marginal};
use crate::error::{Error, Result};
use crate::mechanisms::{MechCell, Mechanism};
use crate::rules::{AllocationRule, RuleCell};
use crate::scalar::{Mode, Rational, Scalar};

/// A joint in whichever mode its document declares.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyJoint {
    Exact(DiscreteJoint<Rational>),
    Approx(DiscreteJoint<f64>),
}

impl AnyJoint {
    pub fn mode(&self) -> Mode {
        match self {
            AnyJoint::Exact(_) => Mode::Exact,
            AnyJoint::Approx(_) => Mode::Approx,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            AnyJoint::Exact(d) => joint_to_json(d),
            AnyJoint::Approx(d) => joint_to_json(d),
        }
    }
}

pub fn scalar_from_json<S: Scalar>(v: &Value) -> Result<S> {
    match v {
        Value::String(s) => S::parse(s),
        Value::Number(n) => S::parse(&n.to_string()),
        other => Err(Error::Input(format!("expected a number or \"n/d\" string, got {other}"))),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn object<'a>(v: &'a Value, what: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| Error::Input(format!("{what} must be a JSON object")))
}

fn array<'a>(doc: &'a Map<String, Value>, key: &str) -> Result<&'a Vec<Value>> {
    doc.get(key).and_then(Value::as_array).ok_or_else(|| Error::Input(format!("missing array `{key}`")))
}

fn field<S: Scalar>(entry: &Value, key: &str) -> Result<S> {
    let v = entry.get(key).ok_or_else(|| Error::Input(format!("entry lacks `{key}`")))?;
    scalar_from_json(v)
}

pub fn parse_json(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::Input(e.to_string()))
}

/// Mode declared by a document, if any.
pub fn declared_mode(doc: &Value) -> Result<Option<Mode>> {
    match doc.get("mode") {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => s.parse().map(Some),
        Some(other) => Err(Error::Input(format!("mode must be a string, got {other}"))),
    }
}

pub fn joint_from_json<S: Scalar>(doc: &Value) -> Result<DiscreteJoint<S>> {
    let cells = array(object(doc, "distribution")?, "cells")?;
    let parsed = cells
        .iter()
        .map(|c| Ok((field(c, "s")?, field(c, "b")?, field(c, "p")?)))
        .collect::<Result<Vec<(S, S, S)>>>()?;
    DiscreteJoint::new(parsed)
}

/// Reads a joint in `mode`, or else the document's own mode, or exact.
pub fn read_joint(text: &str, mode: Option<Mode>) -> Result<AnyJoint> {
    let doc = parse_json(text)?;
    match mode.or(declared_mode(&doc)?).unwrap_or(Mode::Exact) {
        Mode::Exact => Ok(AnyJoint::Exact(joint_from_json(&doc)?)),
        Mode::Approx => Ok(AnyJoint::Approx(joint_from_json(&doc)?)),
    }
}

pub fn joint_to_json<S: Scalar>(dist: &DiscreteJoint<S>) -> Value {
    json!({ "mode": S::MODE.to_string(), "cells": to_value(&dist.cells()) })
}

pub fn marginal_from_json<S: Scalar>(doc: &Value) -> Result<Marginal<S>> {
    let atoms = array(object(doc, "marginal")?, "atoms")?;
    let parsed = atoms.iter().map(|a| Ok((field(a, "v")?, field(a, "p")?))).collect::<Result<Vec<(S, S)>>>()?;
    Marginal::new(parsed)
}

pub fn marginal_to_json<S: Scalar>(m: &Marginal<S>) -> Value {
    json!({ "mode": S::MODE.to_string(), "atoms": to_value(&m.atoms()) })
}

pub fn rule_from_json<S: Scalar>(doc: &Value, dist: &DiscreteJoint<S>) -> Result<AllocationRule<S>> {
    let cells = array(object(doc, "rule")?, "cells")?;
    let parsed = cells
        .iter()
        .map(|c| Ok(RuleCell { s: field(c, "s")?, b: field(c, "b")?, x: field(c, "x")? }))
        .collect::<Result<Vec<_>>>()?;
    AllocationRule::for_joint(dist, parsed)
}

pub fn rule_to_json<S: Scalar>(rule: &AllocationRule<S>) -> Value {
    json!({ "cells": to_value(&rule.cells()) })
}

pub fn mechanism_from_json<S: Scalar>(doc: &Value, dist: &DiscreteJoint<S>) -> Result<Mechanism<S>> {
    let cells = array(object(doc, "mechanism")?, "cells")?;
    let parsed = cells
        .iter()
        .map(|c| Ok(MechCell { s: field(c, "s")?, b: field(c, "b")?, x: field(c, "x")?, t: field(c, "t")? }))
        .collect::<Result<Vec<_>>>()?;
    Mechanism::for_joint(dist, parsed)
}

pub fn mechanism_to_json<S: Scalar>(mech: &Mechanism<S>) -> Value {
    json!({ "randomized": mech.is_randomized(), "cells": to_value(&mech.cells()) })
}
