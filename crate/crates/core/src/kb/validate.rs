use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::analytics::AnalyzerRegistry;
use crate::fuzzy::CompiledRuleBase;
use crate::procio::SourceSpec;
use crate::ruledsl::{is_identifier, parse_enpi, AggregateFn};

use super::KnowledgePackage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "ERROR",
            Severity::Warning => "WARNING",
        })
    }
}

/// Formats as `SEVERITY file:line entity: message`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub file: String,
    pub line: u32,
    /// Entity path such as `enpis.idle_share` or `rules.r3`.
    pub entity: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}:{} {}: {}", self.severity, self.file, self.line, self.entity, self.message)
    }
}

pub fn has_errors(diagnostics: &[Diagnostic]) -> bool {
    diagnostics.iter().any(|d| d.severity == Severity::Error)
}

struct Collector<'a> {
    pkg: &'a KnowledgePackage,
    out: Vec<Diagnostic>,
}

impl Collector<'_> {
    fn push(&mut self, severity: Severity, entity: &str, message: impl Into<String>) {
        let loc = self.pkg.location(entity);
        self.out.push(Diagnostic {
            severity,
            file: loc.file,
            line: loc.line,
            entity: entity.to_string(),
            message: message.into(),
        });
    }

    fn error(&mut self, entity: &str, message: impl Into<String>) {
        self.push(Severity::Error, entity, message);
    }

    fn warning(&mut self, entity: &str, message: impl Into<String>) {
        self.push(Severity::Warning, entity, message);
    }

    fn unique<'b>(&mut self, section: &str, kind: &str, ids: impl Iterator<Item = &'b str>) {
        let mut seen = BTreeSet::new();
        for id in ids {
            let entity = format!("{section}.{id}");
            if !is_identifier(id) {
                self.error(&entity, format!("{kind} id `{id}` is not a valid identifier"));
            }
            if !seen.insert(id) {
                self.error(&entity, format!("duplicate {kind} `{id}`"));
            }
        }
    }
}

/// Checks every package invariant using the built-in analyzers.
pub fn validate(pkg: &KnowledgePackage) -> Vec<Diagnostic> {
    validate_with(pkg, &AnalyzerRegistry::with_builtins())
}

/// Checks every package invariant; an empty result means the package is
/// valid. Analyzer names in `custom(...)` are resolved against `registry`.
pub fn validate_with(pkg: &KnowledgePackage, registry: &AnalyzerRegistry) -> Vec<Diagnostic> {
    let mut c = Collector { pkg, out: Vec::new() };

    let major = pkg.schema_version.split('.').next().unwrap_or_default();
    if major != "1" {
        c.error("schema_version", format!("unsupported schema_version `{}` (expected 1.x)", pkg.schema_version));
    }
    if !is_identifier(&pkg.machine.id) {
        c.error("machine", format!("machine id `{}` is not a valid identifier", pkg.machine.id));
    }

    c.unique("data_points", "data point", pkg.data_points.iter().map(|d| d.id.as_str()));
    for d in &pkg.data_points {
        if d.unit.trim().is_empty() {
            c.error(&format!("data_points.{}", d.id), "unit must not be empty");
        }
    }
    let data_points: BTreeSet<&str> = pkg.data_points.iter().map(|d| d.id.as_str()).collect();

    c.unique("variables", "variable", pkg.variables.iter().map(|v| v.name.as_str()));
    for v in &pkg.variables {
        for p in v.problems() {
            c.error(&format!("variables.{}", v.name), p);
        }
    }

    c.unique("enpis", "EnPI", pkg.enpis.iter().map(|e| e.name.as_str()));
    for e in &pkg.enpis {
        let entity = format!("enpis.{}", e.name);
        let expr = match parse_enpi(&e.expression_source) {
            Ok(expr) => expr,
            Err(err) => {
                c.error(&entity, format!("expression: {err}"));
                continue;
            }
        };
        if expr.divides_by_constant_zero() {
            c.error(&entity, "expression divides by constant zero");
        }
        for call in expr.aggregates() {
            for dp in &call.data_points {
                if !data_points.contains(dp.as_str()) {
                    c.error(&entity, format!("references undeclared data point `{dp}`"));
                }
            }
            if call.func == AggregateFn::Custom {
                let name = call.analyzer.as_deref().unwrap_or_default();
                if !registry.contains(name) {
                    c.error(&entity, format!("references unregistered analyzer `{name}`"));
                }
            }
        }
    }

    let variables = pkg.variable_map();
    let mut dangling = false;
    for r in &pkg.rules {
        let entity = format!("rules.{}", r.name);
        for atom in r.antecedent.atoms().into_iter().chain(r.consequents.iter()) {
            match variables.get(&atom.variable) {
                None => {
                    dangling = true;
                    c.error(&entity, format!("undeclared variable `{}`", atom.variable));
                }
                Some(v) if v.term(&atom.term).is_none() => {
                    dangling = true;
                    c.error(&entity, format!("variable `{}` has no term `{}`", atom.variable, atom.term));
                }
                Some(_) => {}
            }
        }
    }
    if pkg.rules.is_empty() {
        c.warning("rules", "rule base is empty");
    }
    if !dangling && !pkg.rules.is_empty() {
        match CompiledRuleBase::compile(&pkg.rules, &variables) {
            Ok(rb) => {
                let produced: BTreeSet<&str> =
                    pkg.rules.iter().flat_map(|r| r.output_variables()).collect();
                for src in rb.source_variables() {
                    if pkg.enpi(src).is_none() {
                        c.error(
                            &format!("variables.{src}"),
                            format!("variable `{src}` is read by rules but no EnPI named `{src}` supplies it"),
                        );
                    }
                }
                for e in &pkg.enpis {
                    if produced.contains(e.name.as_str()) {
                        c.error(
                            &format!("enpis.{}", e.name),
                            format!("`{}` is both an EnPI and concluded by rules", e.name),
                        );
                    }
                }
            }
            Err(err) => c.error("rules", err.to_string()),
        }
    }
    for e in &pkg.enpis {
        if !variables.contains_key(&e.name) {
            c.warning(
                &format!("enpis.{}", e.name),
                format!("no linguistic variable `{}`; the EnPI is reported but not used in inference", e.name),
            );
        }
    }

    let mut bound: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, b) in pkg.connector_bindings.iter().enumerate() {
        let entity = format!("connectors[{i}]");
        if !data_points.contains(b.data_point.as_str()) {
            c.error(&entity, format!("binds undeclared data point `{}`", b.data_point));
        }
        if let Some(prev) = bound.insert(&b.data_point, i) {
            c.error(&entity, format!("data point `{}` is already bound by connectors[{prev}]", b.data_point));
        }
        for p in b.problems() {
            c.error(&entity, p);
        }
        if let (SourceSpec::CsvReplay(spec), Some(root)) = (&b.source, &pkg.root) {
            if !root.join(&spec.path).is_file() {
                c.warning(&entity, format!("replay file `{}` does not exist", spec.path.display()));
            }
        }
    }

    for p in pkg.window.problems() {
        c.error("window", p);
    }
    if pkg.engine.samples < 2 {
        c.error("engine", format!("samples must be at least 2, got {}", pkg.engine.samples));
    }
    if !(0.0..=1.0).contains(&pkg.engine.reporting_threshold) {
        c.error(
            "engine",
            format!("reporting_threshold must be in [0, 1], got {}", pkg.engine.reporting_threshold),
        );
    }
    c.out
}
