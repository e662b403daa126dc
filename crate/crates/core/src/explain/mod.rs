//! Explanation: per-window evaluation traces, reports, and their JSON,
//! Markdown and plot-data renderings.

mod render;
mod report;
mod trace;

pub use render::{
    canonical_json, membership_rows, plotdata_files, render_json, render_json_line, render_markdown,
    render_report, ReportFormat,
};
pub use report::{ConfigEcho, PackageIdentity, Report, SummaryEntry, TermEcho, VariableEcho};
pub use trace::{
    build_trace, iso8601, AggregateTrace, AtomTrace, ClipLevel, EnpiTrace, EvaluationTrace,
    InputTrace, OutputTrace, Recommendation, RuleTrace, TermDegree, TraceParts,
};
