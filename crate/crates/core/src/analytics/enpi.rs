use std::collections::BTreeMap;

use crate::ruledsl::{AggregateCall, AggregateFn, BinOp, EnpiExpr};

use super::{aggregate, AnalyzerRegistry, NoData, WindowSnapshot};

/// One aggregate call as evaluated for a window.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRecord {
    /// Canonical source text of the call, e.g. `integral(power)`.
    pub call: String,
    pub value: Result<f64, NoData>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnpiResult {
    pub name: String,
    pub value: Result<f64, NoData>,
    /// In left-to-right source order.
    pub aggregates: Vec<AggregateRecord>,
    /// Bad-quality samples excluded, per referenced data point.
    pub bad_samples: BTreeMap<String, usize>,
}

/// Evaluates an EnPI expression over one window. Any no-data operand
/// propagates; division by zero yields [`NoData::DivisionByZero`].
pub fn evaluate_enpi(
    name: &str,
    expr: &EnpiExpr,
    snapshot: &WindowSnapshot,
    registry: &AnalyzerRegistry,
) -> EnpiResult {
    let calls = expr.aggregates();
    let mut bad_samples = BTreeMap::new();
    for call in &calls {
        for dp in &call.data_points {
            bad_samples.insert(dp.clone(), snapshot.bad_samples(dp));
        }
    }
    let aggregates: Vec<AggregateRecord> = calls
        .iter()
        .map(|c| AggregateRecord {
            call: c.to_string(),
            value: evaluate_call(c, snapshot, registry),
        })
        .collect();
    let mut next = aggregates.iter().map(|a| a.value.clone());
    let value = eval(expr, &mut next).and_then(|v| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(NoData::NonFinite)
        }
    });
    EnpiResult {
        name: name.to_string(),
        value,
        aggregates,
        bad_samples,
    }
}

fn eval(
    expr: &EnpiExpr,
    aggregates: &mut impl Iterator<Item = Result<f64, NoData>>,
) -> Result<f64, NoData> {
    match expr {
        EnpiExpr::Number(n) => Ok(*n),
        EnpiExpr::Aggregate(_) => aggregates.next().expect("one record per aggregate call"),
        EnpiExpr::Binary { op, lhs, rhs } => {
            // Both sides are consumed so the record iterator stays aligned.
            let l = eval(lhs, aggregates);
            let r = eval(rhs, aggregates);
            let (l, r) = (l?, r?);
            if *op == BinOp::Div && r == 0.0 {
                return Err(NoData::DivisionByZero);
            }
            Ok(op.apply(l, r))
        }
    }
}

/// Evaluates a single aggregate call, resolving `custom` through `registry`.
pub fn evaluate_call(
    call: &AggregateCall,
    snapshot: &WindowSnapshot,
    registry: &AnalyzerRegistry,
) -> Result<f64, NoData> {
    if call.func == AggregateFn::Custom {
        let name = call.analyzer.clone().unwrap_or_default();
        let analyzer = registry
            .get(&name)
            .ok_or_else(|| NoData::UnknownAnalyzer { name: name.clone() })?;
        return match analyzer.call(snapshot, &call.data_points) {
            Some(v) if v.is_finite() => Ok(v),
            Some(_) => Err(NoData::NonFinite),
            None => Err(NoData::Analyzer { name }),
        };
    }
    let dp = call.data_points.first().map(String::as_str);
    let result = aggregate(
        call.func,
        dp.and_then(|d| snapshot.series(d)),
        dp.and_then(|d| snapshot.carry(d)),
        snapshot.window,
        call.threshold,
    );
    match (result, dp) {
        (Err(NoData::NoSamples { .. }), Some(d)) => Err(NoData::NoSamples {
            data_point: d.to_string(),
        }),
        (r, _) => r,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{Sample, TimeSeries, Window};
    use crate::ruledsl::parse_enpi;

    fn snapshot(window: Window, series: &[(&str, &[(i64, f64)])]) -> WindowSnapshot {
        let mut s = WindowSnapshot::new(window);
        for (dp, pts) in series {
            let ts = TimeSeries::new(*dp, pts.iter().map(|&(t, v)| Sample::good(t, v)).collect()).unwrap();
            s.series.insert(dp.to_string(), ts);
        }
        s
    }

    fn eval_src(src: &str, snap: &WindowSnapshot) -> EnpiResult {
        evaluate_enpi("x", &parse_enpi(src).unwrap(), snap, &AnalyzerRegistry::with_builtins())
    }

    #[test]
    fn energy_per_part() {
        let snap = snapshot(
            Window::new(0, 3_600_000),
            &[("power", &[(0, 1000.0)]), ("parts", &[(0, 10.0), (1_800_000, 14.0)])],
        );
        let r = eval_src("integral(power) / sum_delta(parts)", &snap);
        assert_eq!(r.value, Ok(9.0e5));
        assert_eq!(r.aggregates[0].call, "integral(power)");
        assert_eq!(r.aggregates[0].value, Ok(3.6e6));
        assert_eq!(r.aggregates[1].value, Ok(4.0));
    }

    #[test]
    fn idle_ratio() {
        let snap = snapshot(Window::new(0, 200_000), &[("power", &[(0, 50.0), (100_000, 500.0)])]);
        assert_eq!(eval_src("duration_below(power, 100) / window_length()", &snap).value, Ok(0.5));
    }

    #[test]
    fn zero_delta_is_no_data() {
        let snap = snapshot(
            Window::new(0, 3_600_000),
            &[("power", &[(0, 1000.0)]), ("parts", &[(0, 10.0), (1000, 10.0)])],
        );
        let r = eval_src("integral(power) / sum_delta(parts)", &snap);
        assert_eq!(r.value, Err(NoData::DivisionByZero));
        assert_eq!(r.aggregates[1].value, Ok(0.0));
    }

    #[test]
    fn missing_operand_propagates() {
        let snap = snapshot(Window::new(0, 1000), &[("power", &[(0, 1.0)])]);
        let r = eval_src("integral(power) + 1 / mean(parts)", &snap);
        assert_eq!(r.value, Err(NoData::NoSamples { data_point: "parts".into() }));
        assert_eq!(r.aggregates.len(), 2);
    }

    #[test]
    fn custom_analyzer() {
        let snap = snapshot(Window::new(0, 10_000), &[("t", &[(0, 0.0), (1000, 2.0), (2000, 4.0)])]);
        assert_eq!(eval_src("custom(\"linreg_slope\", t) * 60", &snap).value, Ok(120.0));
        let r = eval_src("custom(\"nope\", t)", &snap);
        assert_eq!(r.value, Err(NoData::UnknownAnalyzer { name: "nope".into() }));
    }
}
