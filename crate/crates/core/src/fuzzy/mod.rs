//! Mamdani inference engine: membership functions, linguistic variables,
//! rule-base compilation into forward-chaining strata, and the
//! fuzzify / fire / clip / aggregate / defuzzify pipeline.

mod compile;
mod infer;
mod membership;
mod variable;

pub use compile::{CompileError, CompiledRuleBase, Stratum};
pub use infer::{
    defuzzify_centroid, firing_strength, infer, infer_with_unknowns, sample_point, AtomDegree,
    Crisp, DegreeTable, EngineConfig, FuzzyOutcome, InferError, Inference, InputOrigin,
    InputRecord, Norms, RuleFiring, SampledSet, DEFAULT_SAMPLES,
};
pub use membership::MembershipFunction;
pub use variable::{Fuzzified, LinguisticVariable, Term};

/// Evaluates `mf` at `x`.
pub fn eval_membership(mf: &MembershipFunction, x: f64) -> f64 {
    mf.eval(x)
}

/// Degrees of every term of `var` at `x` (clamped into the universe).
pub fn fuzzify(var: &LinguisticVariable, x: f64) -> Fuzzified {
    var.fuzzify(x)
}
