use std::collections::BTreeMap;

use chrono::{DateTime, SecondsFormat};
use serde::Serialize;

use crate::analytics::{EnpiResult, Window};
use crate::fuzzy::{Crisp, Inference, InputOrigin, LinguisticVariable};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateTrace {
    pub call: String,
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub no_data: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnpiTrace {
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub no_data: Option<String>,
    pub unit: String,
    pub aggregates: Vec<AggregateTrace>,
    /// Bad-quality samples excluded, per data point.
    pub bad_samples: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermDegree {
    pub term: String,
    pub degree: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputTrace {
    /// `measured` (an EnPI) or `derived` (an earlier stratum's output).
    pub origin: &'static str,
    pub crisp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clamped_from: Option<f64>,
    pub degrees: Vec<TermDegree>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtomTrace {
    pub variable: String,
    pub term: String,
    pub degree: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleTrace {
    pub name: String,
    /// Declaration index.
    pub index: usize,
    pub stratum: usize,
    pub weight: f64,
    pub activation: f64,
    pub strength: f64,
    pub active: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    pub atoms: Vec<AtomTrace>,
    pub consequents: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClipLevel {
    pub term: String,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputTrace {
    pub crisp: Option<f64>,
    pub no_activation: bool,
    pub dominant: Option<String>,
    pub dominant_level: f64,
    pub clip_levels: Vec<ClipLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recommendation {
    pub variable: String,
    pub term: String,
    pub strength: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub advice: Option<String>,
}

/// Everything that went into and came out of one window's evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationTrace {
    pub start_ms: i64,
    pub end_ms: i64,
    pub start: String,
    pub end: String,
    pub partial: bool,
    pub enpis: BTreeMap<String, EnpiTrace>,
    pub inputs: BTreeMap<String, InputTrace>,
    /// Descending strength, ties in declaration order.
    pub rules: Vec<RuleTrace>,
    pub outputs: BTreeMap<String, OutputTrace>,
    pub evaluation_order: Vec<Vec<String>>,
    pub recommendations: Vec<Recommendation>,
    pub warnings: Vec<String>,
}

impl EvaluationTrace {
    pub fn window(&self) -> Window {
        Window::new(self.start_ms, self.end_ms)
    }
}

pub fn iso8601(ms: i64) -> String {
    DateTime::from_timestamp_millis(ms)
        .map(|t| t.to_rfc3339_opts(SecondsFormat::AutoSi, true))
        .unwrap_or_else(|| ms.to_string())
}

/// Inputs to [`build_trace`] from one window's evaluation.
pub struct TraceParts<'a> {
    pub window: Window,
    pub partial: bool,
    pub enpis: &'a [EnpiResult],
    pub enpi_units: &'a BTreeMap<String, String>,
    /// `None` when inference could not run (e.g. empty rule base).
    pub inference: Option<&'a Inference>,
    pub variables: &'a BTreeMap<String, LinguisticVariable>,
    pub reporting_threshold: f64,
    pub warnings: Vec<String>,
}

/// Assembles a trace. Numbers are copied from the engine results, never
/// recomputed.
pub fn build_trace(parts: TraceParts<'_>) -> EvaluationTrace {
    let mut warnings = parts.warnings;
    let enpis = parts
        .enpis
        .iter()
        .map(|r| {
            if let Err(e) = &r.value {
                warnings.push(format!("EnPI `{}` has no data: {e}", r.name));
            }
            let t = EnpiTrace {
                value: r.value.clone().ok(),
                no_data: r.value.as_ref().err().map(ToString::to_string),
                unit: parts.enpi_units.get(&r.name).cloned().unwrap_or_default(),
                aggregates: r
                    .aggregates
                    .iter()
                    .map(|a| AggregateTrace {
                        call: a.call.clone(),
                        value: a.value.clone().ok(),
                        no_data: a.value.as_ref().err().map(ToString::to_string),
                    })
                    .collect(),
                bad_samples: r.bad_samples.clone(),
            };
            (r.name.clone(), t)
        })
        .collect();

    let (mut inputs, mut rules, mut outputs, mut order) =
        (BTreeMap::new(), Vec::new(), BTreeMap::new(), Vec::new());
    let mut recommendations = Vec::new();
    if let Some(inf) = parts.inference {
        warnings.extend(inf.warnings.iter().cloned());
        order = inf.evaluation_order.clone();
        for i in &inf.inputs {
            inputs.insert(
                i.variable.clone(),
                InputTrace {
                    origin: match i.origin {
                        InputOrigin::Measured => "measured",
                        InputOrigin::Derived => "derived",
                    },
                    crisp: i.crisp,
                    clamped_from: i.clamped_from,
                    degrees: i
                        .degrees
                        .iter()
                        .map(|(t, d)| TermDegree {
                            term: t.clone(),
                            degree: *d,
                        })
                        .collect(),
                },
            );
        }
        rules = inf
            .firings
            .iter()
            .map(|f| RuleTrace {
                name: f.name.clone(),
                index: f.index,
                stratum: f.stratum,
                weight: f.weight,
                activation: f.activation,
                strength: f.strength,
                active: f.strength > 0.0,
                skipped: f.skipped.clone(),
                atoms: f
                    .atoms
                    .iter()
                    .map(|a| AtomTrace {
                        variable: a.variable.clone(),
                        term: a.term.clone(),
                        degree: a.degree,
                    })
                    .collect(),
                consequents: f.consequents.iter().map(ToString::to_string).collect(),
            })
            .collect();
        rules.sort_by(|a: &RuleTrace, b: &RuleTrace| {
            b.strength.total_cmp(&a.strength).then(a.index.cmp(&b.index))
        });
        for (name, o) in &inf.outcomes {
            let level = o.dominant_level();
            if let (Crisp::Value(_), Some(term)) = (o.crisp, &o.dominant) {
                if level >= parts.reporting_threshold {
                    let advice = parts
                        .variables
                        .get(name)
                        .and_then(|v| v.term(term))
                        .and_then(|t| t.advice.clone());
                    recommendations.push(Recommendation {
                        variable: name.clone(),
                        term: term.clone(),
                        strength: level,
                        advice,
                    });
                }
            }
            outputs.insert(
                name.clone(),
                OutputTrace {
                    crisp: o.crisp.value(),
                    no_activation: o.crisp == Crisp::NoActivation,
                    dominant: o.dominant.clone(),
                    dominant_level: level,
                    clip_levels: o
                        .clip_levels
                        .iter()
                        .map(|(t, l)| ClipLevel {
                            term: t.clone(),
                            level: *l,
                        })
                        .collect(),
                },
            );
        }
    }

    EvaluationTrace {
        start_ms: parts.window.start_ms,
        end_ms: parts.window.end_ms,
        start: iso8601(parts.window.start_ms),
        end: iso8601(parts.window.end_ms),
        partial: parts.partial,
        enpis,
        inputs,
        rules,
        outputs,
        evaluation_order: order,
        recommendations,
        warnings,
    }
}
