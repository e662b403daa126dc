use serde::{Deserialize, Serialize};

use super::MembershipFunction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub label: String,
    pub mf: MembershipFunction,
    /// Recommendation text shown when this term dominates an output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advice: Option<String>,
}

impl Term {
    pub fn new(label: impl Into<String>, mf: MembershipFunction) -> Self {
        Self {
            label: label.into(),
            mf,
            advice: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinguisticVariable {
    pub name: String,
    /// `[lo, hi]`
    pub universe: (f64, f64),
    #[serde(default)]
    pub unit: String,
    pub terms: Vec<Term>,
}

/// Term degrees for one crisp input, in term declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Fuzzified {
    /// Value the degrees were evaluated at (after clamping).
    pub value: f64,
    /// Original input when it lay outside the universe.
    pub clamped_from: Option<f64>,
    pub degrees: Vec<(String, f64)>,
}

impl Fuzzified {
    pub fn degree(&self, term: &str) -> Option<f64> {
        self.degrees.iter().find(|(t, _)| t == term).map(|(_, d)| *d)
    }
}

impl LinguisticVariable {
    pub fn new(name: impl Into<String>, lo: f64, hi: f64, terms: Vec<Term>) -> Self {
        Self {
            name: name.into(),
            universe: (lo, hi),
            unit: String::new(),
            terms,
        }
    }

    pub fn lo(&self) -> f64 {
        self.universe.0
    }

    pub fn hi(&self) -> f64 {
        self.universe.1
    }

    pub fn term(&self, label: &str) -> Option<&Term> {
        self.terms.iter().find(|t| t.label == label)
    }

    pub fn term_index(&self, label: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.label == label)
    }

    /// Invariant violations, one message each.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let (lo, hi) = self.universe;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            out.push(format!("universe [{lo}, {hi}] must be finite with lo < hi"));
        }
        if self.terms.is_empty() {
            out.push("variable declares no terms".into());
        }
        for (i, term) in self.terms.iter().enumerate() {
            if self.terms[..i].iter().any(|t| t.label == term.label) {
                out.push(format!("duplicate term `{}`", term.label));
            }
            if let Err(msg) = term.mf.check() {
                out.push(format!("term `{}`: {msg}", term.label));
            }
        }
        out
    }

    /// Clamps `x` into the universe and evaluates every term. NaN yields
    /// all-zero degrees.
    pub fn fuzzify(&self, x: f64) -> Fuzzified {
        let (lo, hi) = self.universe;
        let (value, clamped_from) = if x.is_nan() {
            (x, None)
        } else if x < lo {
            (lo, Some(x))
        } else if x > hi {
            (hi, Some(x))
        } else {
            (x, None)
        };
        let degrees = self
            .terms
            .iter()
            .map(|t| (t.label.clone(), t.mf.eval(value)))
            .collect();
        Fuzzified {
            value,
            clamped_from,
            degrees,
        }
    }
}
