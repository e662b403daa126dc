use std::fmt::Write as _;
use std::str::FromStr;

use crate::fuzzy::{sample_point, LinguisticVariable, Term};

use super::{iso8601, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
    Plotdata,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "markdown" => Ok(ReportFormat::Markdown),
            "plotdata" => Ok(ReportFormat::Plotdata),
            _ => Err(format!("unknown format `{s}` (expected json, markdown or plotdata)")),
        }
    }
}

/// Renders a report. Plot data is returned as a bundle of files, each
/// introduced by a `# file: NAME` line; see [`plotdata_files`].
pub fn render_report(report: &Report, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => render_json(report).into_bytes(),
        ReportFormat::Markdown => render_markdown(report).into_bytes(),
        ReportFormat::Plotdata => {
            let mut out = String::new();
            for (name, body) in plotdata_files(report) {
                let _ = writeln!(out, "# file: {name}");
                out.push_str(&body);
            }
            out.into_bytes()
        }
    }
}

/// Canonical JSON: keys sorted, two-space indent, trailing newline.
pub fn render_json(report: &Report) -> String {
    let value = serde_json::to_value(report).expect("report serializes");
    canonical_json(&value)
}

pub fn canonical_json(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

/// Compact canonical JSON on one line, for newline-delimited streams.
pub fn render_json_line(report: &Report) -> String {
    let value = serde_json::to_value(report).expect("report serializes");
    let mut s = value.to_string();
    s.push('\n');
    s
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "no data".to_string(), |x| format!("{x:.6}"))
}

pub fn render_markdown(report: &Report) -> String {
    let mut out = String::new();
    let p = &report.package;
    let c = &report.config;
    let _ = writeln!(out, "# Energy assessment: {} ({})\n", p.machine_label, p.machine_id);
    let _ = writeln!(out, "- package hash: `{}`", p.content_hash);
    let _ = writeln!(
        out,
        "- windows: {} x {} s, {} aligned",
        report.windows.len(),
        c.window_length_s,
        c.alignment
    );
    let _ = writeln!(
        out,
        "- engine: {} norms, {} samples, recommendation threshold {}\n",
        c.norms, c.samples, c.reporting_threshold
    );

    let _ = writeln!(out, "## EnPIs\n");
    let _ = writeln!(out, "| Window start | EnPI | Value | Unit | Bad samples |");
    let _ = writeln!(out, "|---|---|---|---|---|");
    for w in &report.windows {
        for (name, e) in &w.enpis {
            let value = match (&e.value, &e.no_data) {
                (Some(v), _) => format!("{v:.6}"),
                (None, Some(why)) => format!("no data ({why})"),
                (None, None) => "no data".into(),
            };
            let bad: usize = e.bad_samples.values().sum();
            let _ = writeln!(out, "| {} | {} | {} | {} | {} |", w.start, name, value, e.unit, bad);
        }
    }

    let _ = writeln!(out, "\n## Rule activations\n");
    for w in &report.windows {
        let partial = if w.partial { " (partial)" } else { "" };
        let _ = writeln!(out, "### {} to {}{}\n", w.start, w.end, partial);
        let _ = writeln!(out, "| Rule | Strength | Weight | Antecedent degrees | Conclusion |");
        let _ = writeln!(out, "|---|---|---|---|---|");
        for r in &w.rules {
            let atoms: Vec<String> = r
                .atoms
                .iter()
                .map(|a| format!("{} IS {} = {:.4}", a.variable, a.term, a.degree))
                .collect();
            let status = match (&r.skipped, r.active) {
                (Some(why), _) => format!("skipped: {why}"),
                (None, true) => r.consequents.join(", "),
                (None, false) => format!("inactive ({})", r.consequents.join(", ")),
            };
            let _ = writeln!(
                out,
                "| {} | {:.4} | {} | {} | {} |",
                r.name,
                r.strength,
                r.weight,
                atoms.join("; "),
                status
            );
        }
        let _ = writeln!(out);
        for (name, o) in &w.outputs {
            let crisp = if o.no_activation { "no activation".to_string() } else { num(o.crisp) };
            let _ = writeln!(
                out,
                "- **{}** = {} (dominant: {} at {:.4})",
                name,
                crisp,
                o.dominant.as_deref().unwrap_or("none"),
                o.dominant_level
            );
        }
        for warning in &w.warnings {
            let _ = writeln!(out, "- warning: {warning}");
        }
        let _ = writeln!(out);
    }

    let _ = writeln!(out, "## Recommendations\n");
    let mut any = false;
    for w in &report.windows {
        for r in &w.recommendations {
            any = true;
            let advice = r.advice.as_deref().map(|a| format!(": {a}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "- {}: {} is **{}** ({:.4}){}",
                w.start, r.variable, r.term, r.strength, advice
            );
        }
    }
    if !any {
        let _ = writeln!(out, "None above the threshold.");
    }
    if !report.warnings.is_empty() {
        let _ = writeln!(out, "\n## Warnings\n");
        for w in &report.warnings {
            let _ = writeln!(out, "- {w}");
        }
    }
    out
}

/// `enpi.csv` (one row per EnPI per window) and `membership.csv` (every
/// term sampled at the engine's resolution over its universe).
pub fn plotdata_files(report: &Report) -> Vec<(String, String)> {
    let mut enpi = String::from("window_start,window_end,enpi,value,unit\n");
    for w in &report.windows {
        for (name, e) in &w.enpis {
            let value = e.value.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(enpi, "{},{},{},{},{}", iso8601(w.start_ms), iso8601(w.end_ms), name, value, e.unit);
        }
    }
    let mut membership = String::from("variable,term,x,degree\n");
    for (name, v) in &report.config.variables {
        let var = LinguisticVariable::new(
            name.clone(),
            v.universe[0],
            v.universe[1],
            v.terms.iter().map(|t| Term::new(t.label.clone(), t.mf)).collect(),
        );
        membership.push_str(&membership_rows(&var, report.config.samples));
    }
    vec![("enpi.csv".into(), enpi), ("membership.csv".into(), membership)]
}

/// `variable,term,x,degree` rows for `n` uniform samples, endpoints included.
pub fn membership_rows(var: &LinguisticVariable, n: usize) -> String {
    let mut out = String::new();
    for t in &var.terms {
        for i in 0..n {
            let x = sample_point(var.lo(), var.hi(), n, i);
            let _ = writeln!(out, "{},{},{},{}", var.name, t.label, x, t.mf.eval(x));
        }
    }
    out
}
