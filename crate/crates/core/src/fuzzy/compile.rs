use std::collections::{BTreeMap, HashMap};

use crate::ruledsl::RuleAst;

use super::LinguisticVariable;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompileError {
    #[error("rule `{rule}`: unknown variable `{variable}`")]
    UnknownVariable { rule: String, variable: String },
    #[error("rule `{rule}`: variable `{variable}` has no term `{term}`")]
    UnknownTerm {
        rule: String,
        variable: String,
        term: String,
    },
    #[error("cyclic variable dependency: {}", path.join(" -> "))]
    Cycle { path: Vec<String> },
}

/// A group of rules whose antecedents are fully known once every earlier
/// stratum has run.
#[derive(Debug, Clone, PartialEq)]
pub struct Stratum {
    /// Rule indices in declaration order.
    pub rules: Vec<usize>,
    /// Variables whose last producing rule lives in this stratum; they are
    /// defuzzified right after it.
    pub outputs: Vec<String>,
}

/// Rule base checked against its variables and split into topologically
/// ordered strata for forward chaining.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledRuleBase {
    rules: Vec<RuleAst>,
    strata: Vec<Stratum>,
    rule_stratum: Vec<usize>,
    sources: Vec<String>,
    dependents: BTreeMap<String, Vec<usize>>,
}

impl CompiledRuleBase {
    pub fn compile(
        rules: &[RuleAst],
        variables: &BTreeMap<String, LinguisticVariable>,
    ) -> Result<Self, CompileError> {
        for rule in rules {
            let atoms = rule.antecedent.atoms().into_iter().chain(rule.consequents.iter());
            for atom in atoms {
                let var = variables.get(&atom.variable).ok_or_else(|| {
                    CompileError::UnknownVariable {
                        rule: rule.name.clone(),
                        variable: atom.variable.clone(),
                    }
                })?;
                if var.term(&atom.term).is_none() {
                    return Err(CompileError::UnknownTerm {
                        rule: rule.name.clone(),
                        variable: atom.variable.clone(),
                        term: atom.term.clone(),
                    });
                }
            }
        }

        let mut producers: HashMap<&str, Vec<usize>> = HashMap::new();
        let mut produced_order: Vec<&str> = Vec::new();
        for (i, rule) in rules.iter().enumerate() {
            for v in rule.output_variables() {
                let entry = producers.entry(v).or_default();
                if entry.is_empty() {
                    produced_order.push(v);
                }
                entry.push(i);
            }
        }

        if let Some(path) = find_cycle(rules, &producers, &produced_order) {
            return Err(CompileError::Cycle { path });
        }

        // level(v) = 0 for measured inputs, otherwise one past the deepest
        // stratum of any rule producing v.
        let mut level: HashMap<&str, usize> = HashMap::new();
        let mut rule_stratum = vec![usize::MAX; rules.len()];
        for i in 0..rules.len() {
            stratum_of(i, rules, &producers, &mut level, &mut rule_stratum);
        }
        for v in &produced_order {
            level_of(v, rules, &producers, &mut level, &mut rule_stratum);
        }

        let depth = rule_stratum.iter().map(|s| s + 1).max().unwrap_or(0);
        let mut strata = vec![
            Stratum {
                rules: Vec::new(),
                outputs: Vec::new()
            };
            depth
        ];
        for (i, s) in rule_stratum.iter().enumerate() {
            strata[*s].rules.push(i);
        }
        for v in &produced_order {
            strata[level[v] - 1].outputs.push(v.to_string());
        }

        let mut sources: Vec<String> = Vec::new();
        let mut dependents: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, rule) in rules.iter().enumerate() {
            for v in rule.input_variables() {
                if !producers.contains_key(v) && !sources.iter().any(|s| s == v) {
                    sources.push(v.to_string());
                }
                dependents.entry(v.to_string()).or_default().push(i);
            }
        }

        Ok(Self {
            rules: rules.to_vec(),
            strata,
            rule_stratum,
            sources,
            dependents,
        })
    }

    pub fn rules(&self) -> &[RuleAst] {
        &self.rules
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    pub fn stratum_of_rule(&self, index: usize) -> usize {
        self.rule_stratum[index]
    }

    /// Variables that must be supplied as crisp inputs, in first-use order.
    pub fn source_variables(&self) -> &[String] {
        &self.sources
    }

    /// Derived variables grouped by the stratum after which they are known.
    pub fn evaluation_order(&self) -> Vec<Vec<String>> {
        self.strata.iter().map(|s| s.outputs.clone()).collect()
    }

    /// Rules consuming `variable` in their antecedent.
    pub fn dependents(&self, variable: &str) -> &[usize] {
        self.dependents.get(variable).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

fn stratum_of<'a>(
    rule: usize,
    rules: &'a [RuleAst],
    producers: &HashMap<&'a str, Vec<usize>>,
    level: &mut HashMap<&'a str, usize>,
    rule_stratum: &mut [usize],
) -> usize {
    if rule_stratum[rule] != usize::MAX {
        return rule_stratum[rule];
    }
    let mut s = 0;
    for v in rules[rule].input_variables() {
        s = s.max(level_of(v, rules, producers, level, rule_stratum));
    }
    rule_stratum[rule] = s;
    s
}

fn level_of<'a>(
    var: &'a str,
    rules: &'a [RuleAst],
    producers: &HashMap<&'a str, Vec<usize>>,
    level: &mut HashMap<&'a str, usize>,
    rule_stratum: &mut [usize],
) -> usize {
    if let Some(l) = level.get(var) {
        return *l;
    }
    let l = match producers.get(var) {
        None => 0,
        Some(ps) => {
            let mut deepest = 0;
            for &p in ps {
                deepest = deepest.max(stratum_of(p, rules, producers, level, rule_stratum));
            }
            deepest + 1
        }
    };
    level.insert(var, l);
    l
}

/// Depth-first search over "depends on" edges (consequent variable to the
/// antecedent variables of its producing rules), starting from produced
/// variables in declaration order. Returns the first cycle found.
fn find_cycle(
    rules: &[RuleAst],
    producers: &HashMap<&str, Vec<usize>>,
    roots: &[&str],
) -> Option<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    let deps = |v: &str| -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for &r in producers.get(v).map(Vec::as_slice).unwrap_or(&[]) {
            for u in rules[r].input_variables() {
                if !out.iter().any(|o| o == u) {
                    out.push(u.to_string());
                }
            }
        }
        out
    };

    let mut marks: HashMap<String, Mark> = HashMap::new();
    for root in roots {
        if marks.contains_key(*root) {
            continue;
        }
        // Iterative DFS: each frame holds a node and its pending children.
        let mut first = deps(root);
        first.reverse();
        let mut stack: Vec<(String, Vec<String>)> = vec![(root.to_string(), first)];
        marks.insert(root.to_string(), Mark::Active);
        while let Some((_, children)) = stack.last_mut() {
            match children.pop() {
                None => {
                    let (node, _) = stack.pop().expect("non-empty stack");
                    marks.insert(node, Mark::Done);
                }
                Some(child) => match marks.get(&child) {
                    Some(Mark::Active) => {
                        let start = stack.iter().position(|(n, _)| *n == child).unwrap_or(0);
                        let cycle: Vec<String> =
                            stack[start..].iter().rev().map(|(n, _)| n.clone()).collect();
                        return Some(canonical_cycle(cycle));
                    }
                    Some(Mark::Done) => {}
                    None => {
                        marks.insert(child.clone(), Mark::Active);
                        let mut grand = deps(&child);
                        grand.reverse();
                        stack.push((child, grand));
                    }
                },
            }
        }
    }
    None
}

/// Closes `cycle` (given in data-flow order) starting from its smallest
/// variable name, so the message does not depend on search order.
fn canonical_cycle(mut cycle: Vec<String>) -> Vec<String> {
    let first = (0..cycle.len()).min_by_key(|&i| &cycle[i]).unwrap_or(0);
    cycle.rotate_left(first);
    if let Some(head) = cycle.first().cloned() {
        cycle.push(head);
    }
    cycle
}
