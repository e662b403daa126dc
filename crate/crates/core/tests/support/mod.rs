//! Generators and independent oracles shared by the integration suites.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use ess_core::analytics::{Sample, TimeSeries};
use ess_core::fuzzy::{LinguisticVariable, MembershipFunction, Norms, Term};
use ess_core::ruledsl::{is_keyword, Atom, RuleAst, RuleExpr};
use rand::seq::SliceRandom;
use rand::Rng;

// ---------------------------------------------------------------------------
// rule syntax

pub fn identifier(rng: &mut impl Rng) -> String {
    const FIRST: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_";
    const REST: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_0123456789";
    loop {
        let len = rng.gen_range(1..10);
        let mut s = String::new();
        s.push(FIRST[rng.gen_range(0..FIRST.len())] as char);
        for _ in 1..len {
            s.push(REST[rng.gen_range(0..REST.len())] as char);
        }
        if !is_keyword(&s) {
            return s;
        }
    }
}

/// Random antecedent of depth at most `depth`.
pub fn random_expr(rng: &mut impl Rng, depth: usize) -> RuleExpr {
    if depth <= 1 || rng.gen_bool(0.25) {
        return RuleExpr::atom(&identifier(rng), &identifier(rng));
    }
    match rng.gen_range(0..3) {
        0 => RuleExpr::not(random_expr(rng, depth - 1)),
        1 => RuleExpr::and(random_expr(rng, depth - 1), random_expr(rng, depth - 1)),
        _ => RuleExpr::or(random_expr(rng, depth - 1), random_expr(rng, depth - 1)),
    }
}

pub fn random_rule(rng: &mut impl Rng, name: String, depth: usize) -> RuleAst {
    let mut targets = BTreeSet::new();
    while targets.len() < rng.gen_range(1..4) {
        targets.insert(identifier(rng));
    }
    let consequents = targets.into_iter().map(|v| Atom::new(v, identifier(rng))).collect();
    let rule = RuleAst::new(name, random_expr(rng, depth), consequents);
    match rng.gen_range(0..3) {
        0 => rule,
        1 => rule.with_weight(rng.gen_range(1..=20) as f64 / 20.0),
        _ => rule.with_weight(1.0 - rng.gen::<f64>()),
    }
}

/// A rule base with distinct names, antecedent depth at most `depth`.
pub fn random_rules(rng: &mut impl Rng, depth: usize) -> Vec<RuleAst> {
    let n = rng.gen_range(1..6);
    let mut names = BTreeSet::new();
    while names.len() < n {
        names.insert(identifier(rng));
    }
    let mut names: Vec<String> = names.into_iter().collect();
    names.shuffle(rng);
    names.into_iter().map(|name| random_rule(rng, name, depth)).collect()
}

/// Flips the case of every keyword in `source` at random.
pub fn scramble_keyword_case(rng: &mut impl Rng, source: &str) -> String {
    let mut out = String::new();
    for (i, word) in source.split(' ').enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let bare = word.trim_start_matches('(').trim_end_matches([')', ';', ':', ',']);
        if is_keyword(bare) && bare.chars().all(|c| c.is_ascii_uppercase()) {
            out.extend(word.chars().map(|c| {
                if rng.gen_bool(0.5) {
                    c.to_ascii_lowercase()
                } else {
                    c
                }
            }));
        } else {
            out.push_str(word);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// fuzzy systems

pub fn random_mf(rng: &mut impl Rng) -> MembershipFunction {
    let centre: f64 = rng.gen_range(0.0..1.0);
    match rng.gen_range(0..3) {
        0 => {
            let (l, r) = (rng.gen_range(0.15..0.6), rng.gen_range(0.15..0.6));
            MembershipFunction::triangular(centre - l, centre, centre + r)
        }
        1 => {
            let (l, top, r) = (rng.gen_range(0.1..0.5), rng.gen_range(0.0..0.3), rng.gen_range(0.1..0.5));
            MembershipFunction::trapezoidal(centre - top / 2.0 - l, centre - top / 2.0, centre + top / 2.0, centre + top / 2.0 + r)
        }
        _ => MembershipFunction::gaussian(centre, rng.gen_range(0.08..0.3)),
    }
}

/// `mf` drawn on `[0, 1]`, stretched onto `[lo, lo + width]`.
fn stretch(mf: MembershipFunction, lo: f64, width: f64) -> MembershipFunction {
    let x = |u: f64| lo + u * width;
    match mf {
        MembershipFunction::Triangular(a, b, c) => MembershipFunction::triangular(x(a), x(b), x(c)),
        MembershipFunction::Trapezoidal(a, b, c, d) => MembershipFunction::trapezoidal(x(a), x(b), x(c), x(d)),
        MembershipFunction::Gaussian(m, s) => MembershipFunction::gaussian(x(m), s * width),
    }
}

/// Variable on a random universe between 0.5 and 2 wide.
pub fn random_variable(rng: &mut impl Rng, name: &str) -> LinguisticVariable {
    let lo = rng.gen_range(-100.0..100.0);
    let width = rng.gen_range(0.5..2.0);
    let terms = (0..rng.gen_range(2..5))
        .map(|i| Term::new(format!("t{i}"), stretch(random_mf(rng), lo, width)))
        .collect();
    LinguisticVariable::new(name, lo, lo + width, terms)
}

/// Inputs, optional chained intermediate `m`, outputs `y0`/`y1`.
pub struct RandomSystem {
    pub variables: BTreeMap<String, LinguisticVariable>,
    pub rules: Vec<RuleAst>,
    pub inputs: BTreeMap<String, f64>,
}

fn random_antecedent(rng: &mut impl Rng, pool: &[&LinguisticVariable], depth: usize) -> RuleExpr {
    if depth <= 1 || rng.gen_bool(0.4) {
        let v = pool.choose(rng).unwrap();
        let t = v.terms.choose(rng).unwrap();
        return RuleExpr::atom(&v.name, &t.label);
    }
    match rng.gen_range(0..4) {
        0 => RuleExpr::not(random_antecedent(rng, pool, depth - 1)),
        1 | 2 => RuleExpr::and(random_antecedent(rng, pool, depth - 1), random_antecedent(rng, pool, depth - 1)),
        _ => RuleExpr::or(random_antecedent(rng, pool, depth - 1), random_antecedent(rng, pool, depth - 1)),
    }
}

pub fn random_system<R: Rng>(rng: &mut R) -> RandomSystem {
    let mut variables = BTreeMap::new();
    let n_in = rng.gen_range(1..4);
    let inputs: Vec<LinguisticVariable> = (0..n_in).map(|i| random_variable(rng, &format!("x{i}"))).collect();
    let chained = rng.gen_bool(0.6);
    let m = random_variable(rng, "m");
    let outputs: Vec<LinguisticVariable> = (0..rng.gen_range(1..3)).map(|i| random_variable(rng, &format!("y{i}"))).collect();

    let in_pool: Vec<&LinguisticVariable> = inputs.iter().collect();
    let mut all_pool = in_pool.clone();
    if chained {
        all_pool.push(&m);
    }
    let mut rules = Vec::new();
    let mut push = |rng: &mut R, pool: &[&LinguisticVariable], target: &LinguisticVariable| {
        let t = target.terms.choose(rng).unwrap();
        let name = format!("r{}", rules.len());
        let mut rule = RuleAst::new(name, random_antecedent(rng, pool, 3), vec![Atom::new(&target.name, &t.label)]);
        if rng.gen_bool(0.3) {
            rule = rule.with_weight(rng.gen_range(0.2..1.0));
        }
        rules.push(rule);
    };
    if chained {
        for _ in 0..rng.gen_range(1..4) {
            push(rng, &in_pool, &m);
        }
    }
    for y in &outputs {
        for _ in 0..rng.gen_range(1..4) {
            push(rng, &all_pool, y);
        }
    }
    rules.shuffle(rng);

    let values = inputs.iter().map(|v| (v.name.clone(), rng.gen_range(v.lo()..v.hi()))).collect();
    for v in inputs.into_iter().chain(outputs) {
        variables.insert(v.name.clone(), v);
    }
    if chained {
        variables.insert("m".into(), m);
    }
    RandomSystem {
        variables,
        rules,
        inputs: values,
    }
}

// ---------------------------------------------------------------------------
// dense-grid inference oracle

pub fn oracle_membership(mf: &MembershipFunction, x: f64) -> f64 {
    match *mf {
        MembershipFunction::Triangular(a, b, c) => oracle_membership(&MembershipFunction::Trapezoidal(a, b, b, c), x),
        MembershipFunction::Trapezoidal(a, b, c, d) => {
            let rise = if b > a { (x - a) / (b - a) } else if x >= a { 1.0 } else { 0.0 };
            let fall = if d > c { (d - x) / (d - c) } else if x <= d { 1.0 } else { 0.0 };
            rise.min(fall).clamp(0.0, 1.0)
        }
        MembershipFunction::Gaussian(m, s) => (-(x - m) * (x - m) / (2.0 * s * s)).exp(),
    }
}

fn oracle_truth(e: &RuleExpr, facts: &BTreeMap<String, f64>, vars: &BTreeMap<String, LinguisticVariable>, norms: Norms) -> f64 {
    match e {
        RuleExpr::Atom(a) => {
            let v = &vars[&a.variable];
            let x = facts[&a.variable].clamp(v.lo(), v.hi());
            oracle_membership(&v.term(&a.term).unwrap().mf, x)
        }
        RuleExpr::Not(e) => 1.0 - oracle_truth(e, facts, vars, norms),
        RuleExpr::And(l, r) => {
            let (a, b) = (oracle_truth(l, facts, vars, norms), oracle_truth(r, facts, vars, norms));
            match norms {
                Norms::MinMax => a.min(b),
                Norms::Product => a * b,
            }
        }
        RuleExpr::Or(l, r) => {
            let (a, b) = (oracle_truth(l, facts, vars, norms), oracle_truth(r, facts, vars, norms));
            match norms {
                Norms::MinMax => a.max(b),
                Norms::Product => a + b - a * b,
            }
        }
    }
}

/// Centroid of the clipped, max-aggregated output by midpoint integration
/// over `grid` cells. `None` if the aggregate has zero area.
pub fn oracle_centroid(var: &LinguisticVariable, levels: &BTreeMap<String, f64>, grid: usize) -> Option<f64> {
    let h = (var.hi() - var.lo()) / grid as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..grid {
        let x = var.lo() + (i as f64 + 0.5) * h;
        let mu = var
            .terms
            .iter()
            .map(|t| oracle_membership(&t.mf, x).min(levels.get(&t.label).copied().unwrap_or(0.0)))
            .fold(0.0, f64::max);
        num += x * mu * h;
        den += mu * h;
    }
    (den > 0.0).then(|| num / den)
}

/// Crisp output per concluded variable (`None` for no activation), found by
/// repeatedly firing every rule whose antecedent facts are all known until
/// nothing changes. Variables concluded by no rule are inputs.
pub fn oracle_infer(
    vars: &BTreeMap<String, LinguisticVariable>,
    rules: &[RuleAst],
    inputs: &BTreeMap<String, f64>,
    norms: Norms,
    grid: usize,
) -> BTreeMap<String, Option<f64>> {
    let concluded: BTreeSet<String> = rules.iter().flat_map(|r| r.consequents.iter().map(|c| c.variable.clone())).collect();
    let mut facts: BTreeMap<String, f64> = inputs.clone();
    let mut result: BTreeMap<String, Option<f64>> = BTreeMap::new();
    loop {
        let mut progressed = false;
        for target in &concluded {
            if result.contains_key(target) {
                continue;
            }
            let producers: Vec<&RuleAst> = rules.iter().filter(|r| r.consequents.iter().any(|c| &c.variable == target)).collect();
            let known = |v: &String| inputs.contains_key(v) || result.contains_key(v);
            let ready = producers.iter().all(|r| r.antecedent.atoms().iter().all(|a| known(&a.variable)));
            if !ready {
                continue;
            }
            let mut levels: BTreeMap<String, f64> = BTreeMap::new();
            for r in &producers {
                let blocked = r.antecedent.atoms().iter().any(|a| !facts.contains_key(&a.variable));
                if blocked {
                    continue;
                }
                let s = (oracle_truth(&r.antecedent, &facts, vars, norms) * r.weight).clamp(0.0, 1.0);
                for c in r.consequents.iter().filter(|c| &c.variable == target) {
                    let l = levels.entry(c.term.clone()).or_insert(0.0);
                    *l = l.max(s);
                }
            }
            let crisp = oracle_centroid(&vars[target], &levels, grid);
            if let Some(c) = crisp {
                facts.insert(target.clone(), c);
            }
            result.insert(target.clone(), crisp);
            progressed = true;
        }
        if !progressed {
            return result;
        }
    }
}

// ---------------------------------------------------------------------------
// time series

/// Sorted random series on roughly `[0, span_ms)`, with occasional bad
/// samples. Timestamps are distinct.
pub fn random_series(rng: &mut impl Rng, data_point: &str, span_ms: i64, counter: bool) -> TimeSeries {
    let n = rng.gen_range(0..40);
    let mut ts: BTreeSet<i64> = BTreeSet::new();
    for _ in 0..n {
        ts.insert(rng.gen_range(0..span_ms));
    }
    let mut level = 0.0;
    let samples = ts
        .into_iter()
        .map(|t| {
            let v = if counter {
                level += rng.gen_range(0..5) as f64;
                level
            } else {
                rng.gen_range(-50.0..500.0)
            };
            if rng.gen_bool(0.1) {
                Sample::bad(t, rng.gen_range(-1e6..1e6))
            } else {
                Sample::good(t, v)
            }
        })
        .collect();
    TimeSeries::new(data_point, samples).expect("sorted, distinct")
}

// ---------------------------------------------------------------------------
// modbus polling

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use ess_core::procio::{run_modbus_poller, ModbusSpec, PollerStats, SampleEnvelope};

/// A poller running on its own thread, recording each sample with the
/// instant it arrived.
pub struct PollRun {
    stop: Arc<AtomicBool>,
    seen: Arc<Mutex<Vec<(Instant, SampleEnvelope)>>>,
    handle: JoinHandle<PollerStats>,
}

impl PollRun {
    pub fn start(spec: ModbusSpec) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let seen = Arc::new(Mutex::new(Vec::new()));
        let handle = {
            let (stop, seen) = (stop.clone(), seen.clone());
            thread::spawn(move || {
                run_modbus_poller("p", &spec, &stop, |e| seen.lock().unwrap().push((Instant::now(), e)))
            })
        };
        Self { stop, seen, handle }
    }

    pub fn samples(&self) -> Vec<(Instant, SampleEnvelope)> {
        self.seen.lock().unwrap().clone()
    }

    /// Waits up to `limit` for a sample matching `pred` that arrived after `since`.
    pub fn wait_for(&self, since: Instant, limit: Duration, pred: impl Fn(&SampleEnvelope) -> bool) -> bool {
        let deadline = Instant::now() + limit;
        while Instant::now() < deadline {
            if self.samples().iter().any(|(t, e)| *t >= since && pred(e)) {
                return true;
            }
            thread::sleep(Duration::from_millis(10));
        }
        false
    }

    pub fn finish(self) -> (Vec<(Instant, SampleEnvelope)>, PollerStats) {
        self.stop.store(true, Ordering::SeqCst);
        let stats = self.handle.join().unwrap();
        let seen = self.seen.lock().unwrap().clone();
        (seen, stats)
    }
}

/// Shortest gap between consecutive bad samples.
pub fn min_bad_gap(samples: &[(Instant, SampleEnvelope)]) -> Option<Duration> {
    let bad: Vec<Instant> = samples.iter().filter(|(_, e)| !e.sample.is_good()).map(|(t, _)| *t).collect();
    bad.windows(2).map(|w| w[1] - w[0]).min()
}
