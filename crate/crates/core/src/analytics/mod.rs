//! Time-series aggregation under zero-order hold, EnPI evaluation over
//! windows, and the analyzer registry behind `custom(...)`.

mod aggregate;
mod enpi;
mod registry;
mod series;

pub use aggregate::{aggregate, HeldSegment, HeldSignal, NoData};
pub use enpi::{evaluate_call, evaluate_enpi, AggregateRecord, EnpiResult};
pub use registry::{linreg_slope, Analyzer, AnalyzerFn, AnalyzerRegistry, DuplicateAnalyzer};
pub use series::{Quality, Sample, SeriesError, TimeSeries, Window, WindowSnapshot};
