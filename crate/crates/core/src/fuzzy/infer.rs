use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ruledsl::{Atom, RuleAst, RuleExpr};

use super::{CompiledRuleBase, Fuzzified, LinguisticVariable};

/// Connective semantics for AND / OR. NOT is always `1 - x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norms {
    /// AND = min, OR = max.
    #[default]
    MinMax,
    /// AND = product, OR = probabilistic sum.
    Product,
}

impl Norms {
    pub fn and(self, a: f64, b: f64) -> f64 {
        match self {
            Norms::MinMax => a.min(b),
            Norms::Product => a * b,
        }
    }

    pub fn or(self, a: f64, b: f64) -> f64 {
        match self {
            Norms::MinMax => a.max(b),
            Norms::Product => a + b - a * b,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Norms::MinMax => "minmax",
            Norms::Product => "product",
        }
    }
}

impl std::str::FromStr for Norms {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "minmax" => Ok(Norms::MinMax),
            "product" => Ok(Norms::Product),
            other => Err(format!("unknown norms `{other}` (expected minmax or product)")),
        }
    }
}

pub const DEFAULT_SAMPLES: usize = 1001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    #[serde(default)]
    pub norms: Norms,
    /// Defuzzification resolution: uniform samples over the universe,
    /// endpoints included.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            norms: Norms::MinMax,
            samples: DEFAULT_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InferError {
    #[error("rule base is empty")]
    EmptyRuleBase,
    #[error("missing input for variable `{0}`")]
    MissingInput(String),
    #[error("rule `{rule}`: no degree available for `{atom}`")]
    UnresolvedAtom { rule: String, atom: String },
    #[error("defuzzification needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
}

/// Term degrees keyed by variable then term.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DegreeTable(BTreeMap<String, BTreeMap<String, f64>>);

impl DegreeTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, variable: &str, term: &str, degree: f64) {
        self.0
            .entry(variable.to_string())
            .or_default()
            .insert(term.to_string(), degree);
    }

    pub fn insert_fuzzified(&mut self, variable: &str, f: &Fuzzified) {
        for (term, d) in &f.degrees {
            self.insert(variable, term, *d);
        }
    }

    pub fn get(&self, variable: &str, term: &str) -> Option<f64> {
        self.0.get(variable)?.get(term).copied()
    }
}

/// Truth degree of a rule's antecedent under `norms`, multiplied by the rule
/// weight.
pub fn firing_strength(rule: &RuleAst, degrees: &DegreeTable, norms: Norms) -> Result<f64, InferError> {
    let raw = eval_antecedent(&rule.antecedent, degrees, norms).map_err(|atom| {
        InferError::UnresolvedAtom {
            rule: rule.name.clone(),
            atom: atom.to_string(),
        }
    })?;
    Ok((raw * rule.weight).clamp(0.0, 1.0))
}

fn eval_antecedent<'a>(expr: &'a RuleExpr, degrees: &DegreeTable, norms: Norms) -> Result<f64, &'a Atom> {
    Ok(match expr {
        RuleExpr::Atom(a) => degrees.get(&a.variable, &a.term).ok_or(a)?,
        RuleExpr::Not(e) => 1.0 - eval_antecedent(e, degrees, norms)?,
        RuleExpr::And(l, r) => norms.and(
            eval_antecedent(l, degrees, norms)?,
            eval_antecedent(r, degrees, norms)?,
        ),
        RuleExpr::Or(l, r) => norms.or(
            eval_antecedent(l, degrees, norms)?,
            eval_antecedent(r, degrees, norms)?,
        ),
    })
}

/// Uniformly sampled membership values over `[lo, hi]`, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSet {
    pub lo: f64,
    pub hi: f64,
    pub values: Vec<f64>,
}

impl SampledSet {
    pub fn x(&self, i: usize) -> f64 {
        sample_point(self.lo, self.hi, self.values.len(), i)
    }
}

/// `i`-th of `n` uniform points on `[lo, hi]`; the last point is exactly `hi`.
pub fn sample_point(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    if i + 1 >= n {
        hi
    } else {
        lo + (hi - lo) * (i as f64) / ((n - 1) as f64)
    }
}

/// Centroid `sum(w * x * mu) / sum(w * mu)` with trapezoid weights `w`
/// (half weight at both endpoints). `None` when the set is empty (all zero),
/// which callers report as "no activation".
pub fn defuzzify_centroid(set: &SampledSet) -> Option<f64> {
    let last = set.values.len().saturating_sub(1);
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, mu) in set.values.iter().enumerate() {
        let w = if last > 0 && (i == 0 || i == last) { 0.5 } else { 1.0 };
        num += w * set.x(i) * mu;
        den += w * mu;
    }
    if den > 0.0 {
        Some((num / den).clamp(set.lo, set.hi))
    } else {
        None
    }
}

/// Crisp result of an output variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Crisp {
    Value(f64),
    NoActivation,
}

impl Crisp {
    pub fn value(self) -> Option<f64> {
        match self {
            Crisp::Value(v) => Some(v),
            Crisp::NoActivation => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyOutcome {
    pub variable: String,
    /// Per-term clip level in declaration order.
    pub clip_levels: Vec<(String, f64)>,
    pub aggregated: SampledSet,
    pub crisp: Crisp,
    /// Term with the greatest clip level; first declared wins ties.
    pub dominant: Option<String>,
}

impl FuzzyOutcome {
    pub fn clip_level(&self, term: &str) -> Option<f64> {
        self.clip_levels.iter().find(|(t, _)| t == term).map(|(_, l)| *l)
    }

    pub fn dominant_level(&self) -> f64 {
        self.dominant
            .as_deref()
            .and_then(|t| self.clip_level(t))
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputOrigin {
    /// Supplied by the caller (an EnPI value).
    Measured,
    /// Defuzzified output of an earlier stratum.
    Derived,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputRecord {
    pub variable: String,
    pub origin: InputOrigin,
    /// `None` when the fact is unknown (missing EnPI or no activation).
    pub crisp: Option<f64>,
    pub clamped_from: Option<f64>,
    pub degrees: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomDegree {
    pub variable: String,
    pub term: String,
    pub degree: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleFiring {
    /// Declaration index.
    pub index: usize,
    pub name: String,
    pub stratum: usize,
    pub weight: f64,
    /// Antecedent truth before weighting.
    pub activation: f64,
    pub strength: f64,
    pub atoms: Vec<AtomDegree>,
    pub consequents: Vec<Atom>,
    /// Set when the rule could not be evaluated because an antecedent
    /// variable has no known value.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub outcomes: BTreeMap<String, FuzzyOutcome>,
    /// Source variables first, then consumed derived variables in the order
    /// they became known.
    pub inputs: Vec<InputRecord>,
    /// One entry per rule, declaration order.
    pub firings: Vec<RuleFiring>,
    pub evaluation_order: Vec<Vec<String>>,
    pub warnings: Vec<String>,
}

/// Runs the stratified Mamdani pipeline. Every source variable must be
/// present in `inputs`.
pub fn infer(
    rule_base: &CompiledRuleBase,
    variables: &BTreeMap<String, LinguisticVariable>,
    inputs: &BTreeMap<String, f64>,
    config: &EngineConfig,
) -> Result<Inference, InferError> {
    infer_with_unknowns(rule_base, variables, inputs, &BTreeSet::new(), config)
}

/// Like [`infer`], but source variables listed in `unknown` are treated as
/// facts without a value: rules reading them are skipped rather than failing
/// the run.
pub fn infer_with_unknowns(
    rule_base: &CompiledRuleBase,
    variables: &BTreeMap<String, LinguisticVariable>,
    inputs: &BTreeMap<String, f64>,
    unknown: &BTreeSet<String>,
    config: &EngineConfig,
) -> Result<Inference, InferError> {
    if rule_base.is_empty() {
        return Err(InferError::EmptyRuleBase);
    }
    if config.samples < 2 {
        return Err(InferError::TooFewSamples(config.samples));
    }
    let var = |name: &str| {
        variables
            .get(name)
            .expect("compiled rule base references only known variables")
    };

    let mut degrees = DegreeTable::new();
    let mut unknown_vars: BTreeSet<String> = BTreeSet::new();
    let mut records = Vec::new();
    let mut warnings = Vec::new();

    for source in rule_base.source_variables() {
        if unknown.contains(source) {
            unknown_vars.insert(source.clone());
            records.push(InputRecord {
                variable: source.clone(),
                origin: InputOrigin::Measured,
                crisp: None,
                clamped_from: None,
                degrees: Vec::new(),
            });
            continue;
        }
        let x = *inputs
            .get(source)
            .ok_or_else(|| InferError::MissingInput(source.clone()))?;
        let v = var(source);
        let f = v.fuzzify(x);
        if let Some(orig) = f.clamped_from {
            warnings.push(format!(
                "input `{source}` = {orig} outside universe [{}, {}]; clamped to {}",
                v.lo(),
                v.hi(),
                f.value
            ));
        }
        degrees.insert_fuzzified(source, &f);
        records.push(InputRecord {
            variable: source.clone(),
            origin: InputOrigin::Measured,
            crisp: Some(f.value),
            clamped_from: f.clamped_from,
            degrees: f.degrees,
        });
    }

    let mut clips: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut firings: Vec<Option<RuleFiring>> = vec![None; rule_base.rules().len()];
    let mut outcomes = BTreeMap::new();

    for (k, stratum) in rule_base.strata().iter().enumerate() {
        for &ri in &stratum.rules {
            let rule = &rule_base.rules()[ri];
            let missing: Vec<&str> = rule
                .input_variables()
                .into_iter()
                .filter(|v| unknown_vars.contains(*v))
                .collect();
            let mut firing = RuleFiring {
                index: ri,
                name: rule.name.clone(),
                stratum: k,
                weight: rule.weight,
                activation: 0.0,
                strength: 0.0,
                atoms: Vec::new(),
                consequents: rule.consequents.clone(),
                skipped: None,
            };
            if !missing.is_empty() {
                firing.skipped = Some(format!("no value for {}", missing.join(", ")));
            } else {
                for atom in rule.antecedent.atoms() {
                    let degree = degrees.get(&atom.variable, &atom.term).ok_or_else(|| {
                        InferError::UnresolvedAtom {
                            rule: rule.name.clone(),
                            atom: atom.to_string(),
                        }
                    })?;
                    firing.atoms.push(AtomDegree {
                        variable: atom.variable.clone(),
                        term: atom.term.clone(),
                        degree,
                    });
                }
                firing.activation = eval_antecedent(&rule.antecedent, &degrees, config.norms)
                    .expect("atoms resolved above")
                    .clamp(0.0, 1.0);
                firing.strength = firing_strength(rule, &degrees, config.norms)?;
                for c in &rule.consequents {
                    let v = var(&c.variable);
                    let idx = v.term_index(&c.term).expect("compiled term");
                    let levels = clips
                        .entry(c.variable.as_str())
                        .or_insert_with(|| vec![0.0; v.terms.len()]);
                    levels[idx] = levels[idx].max(firing.strength);
                }
            }
            firings[ri] = Some(firing);
        }

        for name in &stratum.outputs {
            let v = var(name);
            let levels = clips
                .get(name.as_str())
                .cloned()
                .unwrap_or_else(|| vec![0.0; v.terms.len()]);
            let outcome = aggregate(v, &levels, config.samples);
            if !rule_base.dependents(name).is_empty() {
                match outcome.crisp {
                    Crisp::Value(c) => {
                        let f = v.fuzzify(c);
                        degrees.insert_fuzzified(name, &f);
                        records.push(InputRecord {
                            variable: name.clone(),
                            origin: InputOrigin::Derived,
                            crisp: Some(f.value),
                            clamped_from: None,
                            degrees: f.degrees,
                        });
                    }
                    Crisp::NoActivation => {
                        unknown_vars.insert(name.clone());
                        records.push(InputRecord {
                            variable: name.clone(),
                            origin: InputOrigin::Derived,
                            crisp: None,
                            clamped_from: None,
                            degrees: Vec::new(),
                        });
                    }
                }
            }
            outcomes.insert(name.clone(), outcome);
        }
    }

    Ok(Inference {
        outcomes,
        inputs: records,
        firings: firings
            .into_iter()
            .map(|f| f.expect("every rule belongs to a stratum"))
            .collect(),
        evaluation_order: rule_base.evaluation_order(),
        warnings,
    })
}

/// Clips each term at its level, max-aggregates and defuzzifies.
fn aggregate(var: &LinguisticVariable, levels: &[f64], samples: usize) -> FuzzyOutcome {
    let (lo, hi) = var.universe;
    let active: Vec<(usize, f64)> = levels
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, l)| *l > 0.0)
        .collect();
    let values = (0..samples)
        .map(|i| {
            let x = sample_point(lo, hi, samples, i);
            active
                .iter()
                .map(|&(t, level)| var.terms[t].mf.eval(x).min(level))
                .fold(0.0, f64::max)
        })
        .collect();
    let aggregated = SampledSet { lo, hi, values };
    let crisp = match defuzzify_centroid(&aggregated) {
        Some(c) => Crisp::Value(c),
        None => Crisp::NoActivation,
    };
    let mut dominant: Option<(usize, f64)> = None;
    for &(t, level) in &active {
        if dominant.is_none_or(|(_, best)| level > best) {
            dominant = Some((t, level));
        }
    }
    FuzzyOutcome {
        variable: var.name.clone(),
        clip_levels: var
            .terms
            .iter()
            .zip(levels)
            .map(|(t, l)| (t.label.clone(), *l))
            .collect(),
        aggregated,
        crisp,
        dominant: dominant.map(|(t, _)| var.terms[t].label.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuzzy::{MembershipFunction, Term};
    use crate::ruledsl::parse_rules;

    fn tri(label: &str, a: f64, b: f64, c: f64) -> Term {
        Term::new(label, MembershipFunction::triangular(a, b, c))
    }

    fn table(entries: &[(&str, &str, f64)]) -> DegreeTable {
        let mut t = DegreeTable::new();
        for (v, term, d) in entries {
            t.insert(v, term, *d);
        }
        t
    }

    fn rule(src: &str) -> RuleAst {
        parse_rules(src).unwrap().remove(0)
    }

    #[test]
    fn and_is_min() {
        let r = rule("RULE r: IF a IS x AND b IS y THEN o IS p;");
        let t = table(&[("a", "x", 0.3), ("b", "y", 0.7)]);
        assert_eq!(firing_strength(&r, &t, Norms::MinMax).unwrap(), 0.3);
        assert!((firing_strength(&r, &t, Norms::Product).unwrap() - 0.21).abs() < 1e-15);
    }

    #[test]
    fn not_is_complement() {
        let r = rule("RULE r: IF NOT a IS x THEN o IS p;");
        let s = firing_strength(&r, &table(&[("a", "x", 0.2)]), Norms::MinMax).unwrap();
        assert!((s - 0.8).abs() < 1e-15);
    }

    #[test]
    fn weight_scales_strength() {
        let r = rule("RULE r: IF a IS x THEN o IS p WITH 0.5;");
        let s = firing_strength(&r, &table(&[("a", "x", 0.6)]), Norms::MinMax).unwrap();
        assert!((s - 0.3).abs() < 1e-15);
    }

    #[test]
    fn or_norms() {
        let r = rule("RULE r: IF a IS x OR b IS y THEN o IS p;");
        let t = table(&[("a", "x", 0.5), ("b", "y", 0.4)]);
        assert_eq!(firing_strength(&r, &t, Norms::MinMax).unwrap(), 0.5);
        assert!((firing_strength(&r, &t, Norms::Product).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn unresolved_atom() {
        let r = rule("RULE r: IF a IS x THEN o IS p;");
        let err = firing_strength(&r, &DegreeTable::new(), Norms::MinMax).unwrap_err();
        assert!(matches!(err, InferError::UnresolvedAtom { .. }));
    }

    #[test]
    fn centroid_of_symmetric_clipped_triangle() {
        let mf = MembershipFunction::triangular(0.0, 2.0, 4.0);
        let n = 1001;
        let values = (0..n).map(|i| mf.eval(sample_point(0.0, 4.0, n, i)).min(0.5)).collect();
        let c = defuzzify_centroid(&SampledSet { lo: 0.0, hi: 4.0, values }).unwrap();
        assert!((c - 2.0).abs() < 1e-9, "{c}");
    }

    #[test]
    fn centroid_of_skewed_triangle() {
        // Reference 5/3 from the analytic triangle centroid (a + b + c) / 3.
        let mf = MembershipFunction::triangular(0.0, 1.0, 4.0);
        let n = 1001;
        let values = (0..n).map(|i| mf.eval(sample_point(0.0, 4.0, n, i))).collect();
        let c = defuzzify_centroid(&SampledSet { lo: 0.0, hi: 4.0, values }).unwrap();
        assert!((c - 5.0 / 3.0).abs() < 1e-3, "{c}");
    }

    #[test]
    fn empty_set_has_no_centroid() {
        let set = SampledSet { lo: 0.0, hi: 1.0, values: vec![0.0; 11] };
        assert_eq!(defuzzify_centroid(&set), None);
    }

    fn xy_vars() -> BTreeMap<String, LinguisticVariable> {
        let mut m = BTreeMap::new();
        m.insert("x".into(), LinguisticVariable::new("x", 0.0, 2.0, vec![tri("a", 0.0, 1.0, 2.0), tri("c", 1.0, 2.0, 2.0)]));
        m.insert("y".into(), LinguisticVariable::new("y", 0.0, 2.0, vec![tri("b", 0.0, 1.0, 2.0), tri("d", 1.0, 2.0, 2.0)]));
        m.insert("z".into(), LinguisticVariable::new("z", 0.0, 2.0, vec![tri("b", 0.0, 1.0, 2.0)]));
        m
    }

    #[test]
    fn full_activation_of_symmetric_term() {
        let vars = xy_vars();
        let rb = CompiledRuleBase::compile(&parse_rules("RULE r: IF x IS a THEN y IS b;").unwrap(), &vars).unwrap();
        let inputs = BTreeMap::from([("x".to_string(), 1.0)]);
        let out = infer(&rb, &vars, &inputs, &EngineConfig::default()).unwrap();
        let y = &out.outcomes["y"];
        assert!((y.crisp.value().unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(y.dominant.as_deref(), Some("b"));
        assert_eq!(y.clip_levels, vec![("b".into(), 1.0), ("d".into(), 0.0)]);
    }

    #[test]
    fn chain_runs_in_order_and_relays_crisp_value() {
        let vars = xy_vars();
        let rules = parse_rules("RULE r2: IF y IS b THEN z IS b;\nRULE r1: IF x IS a THEN y IS b;").unwrap();
        let rb = CompiledRuleBase::compile(&rules, &vars).unwrap();
        assert_eq!(rb.evaluation_order(), vec![vec!["y".to_string()], vec!["z".to_string()]]);
        let inputs = BTreeMap::from([("x".to_string(), 1.0)]);
        let out = infer(&rb, &vars, &inputs, &EngineConfig::default()).unwrap();
        assert_eq!(out.firings[1].stratum, 0);
        assert_eq!(out.firings[0].stratum, 1);
        let relayed = &out.inputs[1];
        assert_eq!(relayed.variable, "y");
        assert_eq!(relayed.origin, InputOrigin::Derived);
        assert!((out.outcomes["z"].crisp.value().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_activation_is_not_a_number() {
        let vars = xy_vars();
        let rb = CompiledRuleBase::compile(&parse_rules("RULE r: IF x IS c THEN y IS b;").unwrap(), &vars).unwrap();
        let inputs = BTreeMap::from([("x".to_string(), 0.5)]);
        let out = infer(&rb, &vars, &inputs, &EngineConfig::default()).unwrap();
        assert_eq!(out.outcomes["y"].crisp, Crisp::NoActivation);
        assert_eq!(out.outcomes["y"].dominant, None);
    }

    #[test]
    fn missing_and_unknown_inputs() {
        let vars = xy_vars();
        let rb = CompiledRuleBase::compile(&parse_rules("RULE r: IF x IS a THEN y IS b;").unwrap(), &vars).unwrap();
        let err = infer(&rb, &vars, &BTreeMap::new(), &EngineConfig::default()).unwrap_err();
        assert_eq!(err, InferError::MissingInput("x".into()));
        let unknown = BTreeSet::from(["x".to_string()]);
        let out = infer_with_unknowns(&rb, &vars, &BTreeMap::new(), &unknown, &EngineConfig::default()).unwrap();
        assert!(out.firings[0].skipped.is_some());
        assert_eq!(out.outcomes["y"].crisp, Crisp::NoActivation);
    }

    #[test]
    fn empty_rule_base_rejected() {
        let vars = xy_vars();
        let rb = CompiledRuleBase::compile(&[], &vars).unwrap();
        let err = infer(&rb, &vars, &BTreeMap::new(), &EngineConfig::default()).unwrap_err();
        assert_eq!(err, InferError::EmptyRuleBase);
    }

    #[test]
    fn clamped_input_warns() {
        let vars = xy_vars();
        let rb = CompiledRuleBase::compile(&parse_rules("RULE r: IF x IS c THEN y IS b;").unwrap(), &vars).unwrap();
        let inputs = BTreeMap::from([("x".to_string(), 7.0)]);
        let out = infer(&rb, &vars, &inputs, &EngineConfig::default()).unwrap();
        assert_eq!(out.inputs[0].clamped_from, Some(7.0));
        assert_eq!(out.firings[0].strength, 1.0);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn dominant_ties_go_to_first_declared() {
        let v = LinguisticVariable::new("o", 0.0, 1.0, vec![tri("p", 0.0, 0.25, 0.5), tri("q", 0.5, 0.75, 1.0)]);
        let out = aggregate(&v, &[0.4, 0.4], 101);
        assert_eq!(out.dominant.as_deref(), Some("p"));
        let out = aggregate(&v, &[0.4, 0.41], 101);
        assert_eq!(out.dominant.as_deref(), Some("q"));
    }
}
