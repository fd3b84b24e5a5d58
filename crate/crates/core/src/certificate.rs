//! Checked inequalities and the certificate document emitted by every pipeline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::space::FiniteMetricSpace;
use crate::witness::{DecayProfile, VariationSample};

/// Default slack for inequalities between computed floating-point quantities.
pub const CHECK_TOL: f64 = 1e-12;

/// One inequality `lhs <= rhs` with both sides stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness_pair: Option<(String, String)>,
}

impl Check {
    /// `lhs <= rhs` up to a relative/absolute slack of `tol`.
    pub fn le_tol(name: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        let pass = lhs <= rhs + tol * rhs.abs().max(1.0);
        Self { name: name.into(), lhs, rhs, pass, witness_pair: None }
    }

    pub fn le(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self::le_tol(name, lhs, rhs, CHECK_TOL)
    }

    /// `|lhs - rhs| <= tol`, stored as `|lhs - rhs| <= tol`.
    pub fn eq_tol(name: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        let gap = (lhs - rhs).abs();
        Self { name: name.into(), lhs: gap, rhs: tol, pass: gap <= tol, witness_pair: None }
    }

    /// Boolean condition recorded as `0 <= 0` or `1 <= 0`.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self {
            name: name.into(),
            lhs: if ok { 0.0 } else { 1.0 },
            rhs: 0.0,
            pass: ok,
            witness_pair: None,
        }
    }

    /// Attach the pair attaining the stored side, when there is one.
    pub fn with_pair(mut self, space: &FiniteMetricSpace, pair: Option<(usize, usize)>) -> Self {
        if let Some((x, y)) = pair {
            self.witness_pair = Some((space.id(x).to_string(), space.id(y).to_string()));
        }
        self
    }

    pub fn with_point(mut self, space: &FiniteMetricSpace, x: usize) -> Self {
        self.witness_pair = Some((space.id(x).to_string(), space.id(x).to_string()));
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Profiles {
    /// `(R, max ‖ξ_x − ξ_y‖)`
    pub variation: Vec<(f64, f64)>,
    /// `(S, max out-of-ball mass)`
    pub tail: Vec<(f64, f64)>,
}

impl Profiles {
    pub fn from_samples(variation: &[VariationSample], tail: &DecayProfile) -> Self {
        Self {
            variation: variation.iter().map(|v| (v.r, v.value)).collect(),
            tail: tail.samples.iter().map(|t| (t.s, t.value)).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub scenario: String,
    pub pipeline: String,
    pub pass: bool,
    #[serde(rename = "R", skip_serializing_if = "Option::is_none", default)]
    pub r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epsilon: Option<f64>,
    #[serde(rename = "S0", skip_serializing_if = "Option::is_none", default)]
    pub s0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta: Option<f64>,
    pub bounds: BTreeMap<String, f64>,
    pub checked_inequalities: Vec<Check>,
    /// Recorded but not part of `pass` (e.g. intermediate constraints).
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub informational: Vec<Check>,
    pub profiles: Profiles,
    pub truncation_flags: Vec<String>,
}

impl Certificate {
    pub fn new(scenario: impl Into<String>, pipeline: impl Into<String>) -> Self {
        Self { scenario: scenario.into(), pipeline: pipeline.into(), ..Default::default() }
    }

    pub fn extend(&mut self, checks: impl IntoIterator<Item = Check>) {
        self.checked_inequalities.extend(checks);
    }

    /// Sets `pass` to the conjunction of all checked inequalities.
    pub fn finalize(mut self) -> Self {
        self.pass = self.checked_inequalities.iter().all(|c| c.pass);
        self
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checked_inequalities.iter().filter(|c| !c.pass)
    }

    pub fn to_json(&self) -> String {
        // struct fields and BTreeMap keys serialize in a fixed order
        serde_json::to_string_pretty(self).expect("certificate serializes") + "\n"
    }
}
