use std::collections::BTreeMap;

use serde::Serialize;

use crate::fuzzy::{LinguisticVariable, MembershipFunction};
use crate::kb::KnowledgePackage;

use super::EvaluationTrace;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PackageIdentity {
    pub machine_id: String,
    pub machine_label: String,
    pub schema_version: String,
    /// SHA-256 of the canonical package content.
    pub content_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermEcho {
    pub label: String,
    pub mf: MembershipFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableEcho {
    pub universe: [f64; 2],
    pub unit: String,
    pub terms: Vec<TermEcho>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub norms: String,
    pub samples: usize,
    pub reporting_threshold: f64,
    pub window_length_s: f64,
    pub alignment: String,
    pub variables: BTreeMap<String, VariableEcho>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryEntry {
    pub start_ms: i64,
    pub crisp: Option<f64>,
    pub dominant: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub package: PackageIdentity,
    pub config: ConfigEcho,
    /// Ordered by window start.
    pub windows: Vec<EvaluationTrace>,
    /// Per output variable, one entry per window.
    pub summary: BTreeMap<String, Vec<SummaryEntry>>,
    pub warnings: Vec<String>,
}

impl Report {
    /// Builds a report for `pkg` (already carrying any overrides).
    pub fn new(pkg: &KnowledgePackage, mut windows: Vec<EvaluationTrace>, warnings: Vec<String>) -> Self {
        windows.sort_by_key(|w| w.start_ms);
        let mut summary: BTreeMap<String, Vec<SummaryEntry>> = BTreeMap::new();
        for w in &windows {
            for (name, o) in &w.outputs {
                summary.entry(name.clone()).or_default().push(SummaryEntry {
                    start_ms: w.start_ms,
                    crisp: o.crisp,
                    dominant: o.dominant.clone(),
                });
            }
        }
        Self {
            package: PackageIdentity {
                machine_id: pkg.machine.id.clone(),
                machine_label: pkg.machine.label.clone(),
                schema_version: pkg.schema_version.clone(),
                content_hash: pkg.content_hash(),
            },
            config: ConfigEcho {
                norms: pkg.engine.norms.as_str().to_string(),
                samples: pkg.engine.samples,
                reporting_threshold: pkg.engine.reporting_threshold,
                window_length_s: pkg.window.length_s,
                alignment: pkg.window.alignment.as_str().to_string(),
                variables: pkg.variables.iter().map(|v| (v.name.clone(), echo(v))).collect(),
            },
            windows,
            summary,
            warnings,
        }
    }
}

fn echo(v: &LinguisticVariable) -> VariableEcho {
    VariableEcho {
        universe: [v.lo(), v.hi()],
        unit: v.unit.clone(),
        terms: v
            .terms
            .iter()
            .map(|t| TermEcho {
                label: t.label.clone(),
                mf: t.mf,
            })
            .collect(),
    }
}
