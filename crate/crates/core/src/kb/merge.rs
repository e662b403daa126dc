use crate::analytics::AnalyzerRegistry;
use crate::ruledsl::print_rules;

use super::{has_errors, validate_with, Diagnostic, KnowledgePackage, Overlay};

/// Replaces items whose key matches, appends the rest in overlay order.
fn upsert<T: Clone>(base: &mut Vec<T>, overlay: &[T], key: impl Fn(&T) -> &str) {
    for item in overlay {
        match base.iter_mut().find(|b| key(b) == key(item)) {
            Some(slot) => *slot = item.clone(),
            None => base.push(item.clone()),
        }
    }
}

/// Applies `overlay` to a copy of `base` without validating the result.
pub fn apply_overlay(base: &KnowledgePackage, overlay: &Overlay) -> KnowledgePackage {
    let mut pkg = base.clone();
    if let Some(v) = &overlay.schema_version {
        pkg.schema_version = v.clone();
    }
    if let Some(m) = &overlay.machine {
        pkg.machine = m.clone();
    }
    if let Some(w) = overlay.window {
        pkg.window = w;
    }
    if let Some(e) = overlay.engine {
        pkg.engine = e;
    }
    upsert(&mut pkg.data_points, &overlay.data_points, |d| &d.id);
    upsert(&mut pkg.variables, &overlay.variables, |v| &v.name);
    upsert(&mut pkg.enpis, &overlay.enpis, |e| &e.name);
    upsert(&mut pkg.connector_bindings, &overlay.connectors, |c| &c.data_point);
    if !overlay.rules.is_empty() {
        upsert(&mut pkg.rules, &overlay.rules, |r| &r.name);
        pkg.rule_base_source = print_rules(&pkg.rules);
        for r in &overlay.rules {
            pkg.locations.remove(&format!("rules.{}", r.name));
        }
    }
    pkg
}

/// Merges temporary knowledge over a base package: entities with a known
/// id replace the base entity, new ones are appended, nothing is deleted.
/// The base is untouched; the result must validate.
pub fn merge_temporary(
    base: &KnowledgePackage,
    overlay: &Overlay,
    registry: &AnalyzerRegistry,
) -> Result<KnowledgePackage, Vec<Diagnostic>> {
    let merged = apply_overlay(base, overlay);
    let diagnostics = validate_with(&merged, registry);
    if has_errors(&diagnostics) {
        Err(diagnostics)
    } else {
        Ok(merged)
    }
}
