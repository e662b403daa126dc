//! End-to-end evaluation: window snapshots to EnPIs, inference and traces,
//! in batch, replay-stream and live-monitor form.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant};

use crate::analytics::{evaluate_enpi, AnalyzerRegistry, WindowSnapshot};
use crate::explain::{build_trace, EvaluationTrace, Report, TraceParts};
use crate::fuzzy::{infer_with_unknowns, CompiledRuleBase, LinguisticVariable};
use crate::kb::{has_errors, validate_with, Diagnostic, KnowledgePackage};
use crate::procio::{
    batch_windows, now_ms, replay_data, run_modbus_poller, run_simulator, CsvData, SampleEnvelope,
    SourceSpec, StreamMode, WindowStream,
};
use crate::ruledsl::{parse_enpi, EnpiExpr};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("package is invalid ({} error(s))", .0.iter().filter(|d| d.severity == crate::kb::Severity::Error).count())]
    Invalid(Vec<Diagnostic>),
    #[error("package declares no connector bindings")]
    NoConnectors,
    #[error("{0}")]
    Source(String),
}

/// A validated package prepared for repeated window evaluation.
pub struct Engine {
    pkg: KnowledgePackage,
    registry: AnalyzerRegistry,
    rule_base: Option<CompiledRuleBase>,
    variables: BTreeMap<String, LinguisticVariable>,
    enpis: Vec<(String, EnpiExpr)>,
    enpi_units: BTreeMap<String, String>,
}

impl Engine {
    pub fn new(pkg: KnowledgePackage) -> Result<Self, EngineError> {
        Self::with_registry(pkg, AnalyzerRegistry::with_builtins())
    }

    pub fn with_registry(pkg: KnowledgePackage, registry: AnalyzerRegistry) -> Result<Self, EngineError> {
        let diagnostics = validate_with(&pkg, &registry);
        if has_errors(&diagnostics) {
            return Err(EngineError::Invalid(diagnostics));
        }
        let variables = pkg.variable_map();
        let rule_base = if pkg.rules.is_empty() {
            None
        } else {
            let rb = CompiledRuleBase::compile(&pkg.rules, &variables)
                .map_err(|e| EngineError::Source(e.to_string()))?;
            Some(rb)
        };
        let enpis = pkg
            .enpis
            .iter()
            .map(|e| (e.name.clone(), parse_enpi(&e.expression_source).expect("validated")))
            .collect();
        let enpi_units = pkg.enpis.iter().map(|e| (e.name.clone(), e.unit.clone())).collect();
        Ok(Self {
            pkg,
            registry,
            rule_base,
            variables,
            enpis,
            enpi_units,
        })
    }

    pub fn package(&self) -> &KnowledgePackage {
        &self.pkg
    }

    pub fn data_points(&self) -> BTreeSet<String> {
        self.pkg.data_points.iter().map(|d| d.id.clone()).collect()
    }

    /// EnPIs, inference and trace for one window. Pure in the snapshot.
    pub fn evaluate(&self, snapshot: &WindowSnapshot) -> EvaluationTrace {
        let results: Vec<_> = self
            .enpis
            .iter()
            .map(|(name, expr)| evaluate_enpi(name, expr, snapshot, &self.registry))
            .collect();
        let mut warnings = Vec::new();
        let inference = self.rule_base.as_ref().and_then(|rb| {
            let mut inputs = BTreeMap::new();
            let mut unknown = BTreeSet::new();
            for src in rb.source_variables() {
                match results.iter().find(|r| &r.name == src).map(|r| &r.value) {
                    Some(Ok(v)) => {
                        inputs.insert(src.clone(), *v);
                    }
                    _ => {
                        unknown.insert(src.clone());
                    }
                }
            }
            let config = self.pkg.engine.engine_config();
            match infer_with_unknowns(rb, &self.variables, &inputs, &unknown, &config) {
                Ok(inf) => Some(inf),
                Err(e) => {
                    warnings.push(format!("inference failed: {e}"));
                    None
                }
            }
        });
        build_trace(TraceParts {
            window: snapshot.window,
            partial: snapshot.partial,
            enpis: &results,
            enpi_units: &self.enpi_units,
            inference: inference.as_ref(),
            variables: &self.variables,
            reporting_threshold: self.pkg.engine.reporting_threshold,
            warnings,
        })
    }

    pub fn report(&self, traces: Vec<EvaluationTrace>, warnings: Vec<String>) -> Report {
        Report::new(&self.pkg, traces, warnings)
    }

    fn input_warnings(&self, data: &CsvData, duplicates: usize) -> Vec<String> {
        let mut w = data.warnings.clone();
        if duplicates > 0 {
            w.push(format!("{duplicates} sample(s) with repeated timestamps dropped"));
        }
        let known = self.data_points();
        for dp in data.data_points().difference(&known) {
            log::info!("ignoring rows for undeclared data point `{dp}`");
        }
        if data.rows.iter().all(|r| !known.contains(&r.data_point)) {
            w.push("no samples for declared data points; no windows evaluated".to_string());
        }
        w
    }

    /// Slices the whole file into windows and evaluates each.
    pub fn analyze_batch(&self, data: &CsvData) -> Report {
        let known = self.data_points();
        let (histories, duplicates) = data.histories(Some(&known));
        let traces = batch_windows(&histories, &self.pkg.window)
            .iter()
            .map(|s| self.evaluate(s))
            .collect();
        self.report(traces, self.input_warnings(data, duplicates))
    }

    /// Replays the file through the window stream, evaluating windows as
    /// they close.
    pub fn analyze_replay(&self, data: &CsvData) -> Report {
        let known = self.data_points();
        let mut stream = WindowStream::new(self.pkg.window, StreamMode::Replay, &known);
        let mut traces = Vec::new();
        let stop = AtomicBool::new(false);
        replay_data(data, Some(&known), 0.0, &stop, |env| {
            traces.extend(stream.push(env).iter().map(|s| self.evaluate(s)));
        });
        traces.extend(stream.finish_all().iter().map(|s| self.evaluate(s)));
        let duplicates = stream.stats().duplicates;
        self.report(traces, self.input_warnings(data, duplicates))
    }
}

#[derive(Debug, Clone)]
pub struct MonitorOptions {
    /// Stop after this long; `None` runs until `stop` is raised or every
    /// source is exhausted.
    pub duration: Option<Duration>,
    pub stop: Arc<AtomicBool>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MonitorSummary {
    pub windows: usize,
    pub partial_windows: usize,
    pub samples: usize,
    pub dropped_late: usize,
}

enum Event {
    Sample(SampleEnvelope),
    Finished(Vec<String>),
}

fn spawn_sources(
    pkg: &KnowledgePackage,
    tx: &mpsc::Sender<Event>,
    stop: &Arc<AtomicBool>,
) -> Result<Vec<thread::JoinHandle<()>>, EngineError> {
    let root = pkg.root.clone().unwrap_or_default();
    let mut handles = Vec::new();
    // Replay bindings sharing a file and speed are served by one reader.
    let mut replays: BTreeMap<(PathBuf, u64), Vec<String>> = BTreeMap::new();
    for b in &pkg.connector_bindings {
        let tx = tx.clone();
        let stop = stop.clone();
        let dp = b.data_point.clone();
        match &b.source {
            SourceSpec::CsvReplay(spec) => {
                replays
                    .entry((root.join(&spec.path), spec.speed_factor.to_bits()))
                    .or_default()
                    .push(dp);
            }
            SourceSpec::Modbus(spec) => {
                let spec = spec.clone();
                handles.push(thread::spawn(move || {
                    let stats = run_modbus_poller(&dp, &spec, &stop, |e| {
                        let _ = tx.send(Event::Sample(e));
                    });
                    log::info!("{dp}: poller stopped: {stats:?}");
                }));
            }
            SourceSpec::Simulator(spec) => {
                let spec = spec.clone();
                handles.push(thread::spawn(move || {
                    run_simulator(&dp, &spec, &stop, |e| {
                        let _ = tx.send(Event::Sample(e));
                    });
                }));
            }
        }
    }
    for ((path, speed), dps) in replays {
        let data = CsvData::load(&path).map_err(|e| EngineError::Source(e.to_string()))?;
        for w in &data.warnings {
            log::warn!("{}: {w}", path.display());
        }
        let (tx, stop) = (tx.clone(), stop.clone());
        handles.push(thread::spawn(move || {
            let keep: BTreeSet<String> = dps.iter().cloned().collect();
            replay_data(&data, Some(&keep), f64::from_bits(speed), &stop, |e| {
                let _ = tx.send(Event::Sample(e));
            });
            let _ = tx.send(Event::Finished(dps));
        }));
    }
    Ok(handles)
}

/// Runs every connector of the package and hands each closed window's
/// trace to `on_window`. Live sources use wall-clock window closing; a
/// package with only replay sources behaves like [`Engine::analyze_replay`].
/// On stop or timeout the open window is flushed as partial.
pub fn run_monitor(
    engine: &Engine,
    options: &MonitorOptions,
    mut on_window: impl FnMut(&EvaluationTrace),
) -> Result<MonitorSummary, EngineError> {
    let pkg = engine.package();
    if pkg.connector_bindings.is_empty() {
        return Err(EngineError::NoConnectors);
    }
    let live = pkg.connector_bindings.iter().any(|b| b.source.is_live());
    let mode = if live { StreamMode::Live } else { StreamMode::Replay };
    let sources: BTreeSet<String> = pkg.connector_bindings.iter().map(|b| b.data_point.clone()).collect();
    let mut stream = WindowStream::new(pkg.window, mode, &sources);
    let (tx, rx) = mpsc::channel();
    let source_stop = Arc::new(AtomicBool::new(false));
    let handles = spawn_sources(pkg, &tx, &source_stop)?;
    drop(tx);

    let mut summary = MonitorSummary::default();
    let mut emit = |snaps: Vec<WindowSnapshot>, summary: &mut MonitorSummary| {
        for s in snaps {
            summary.windows += 1;
            summary.partial_windows += usize::from(s.partial);
            on_window(&engine.evaluate(&s));
        }
    };
    let started = Instant::now();
    let mut exhausted = false;
    loop {
        let timed_out = options.duration.is_some_and(|d| started.elapsed() >= d);
        if timed_out || options.stop.load(Ordering::SeqCst) {
            break;
        }
        match rx.recv_timeout(Duration::from_millis(20)) {
            Ok(Event::Sample(e)) => {
                summary.samples += 1;
                let snaps = stream.push(e);
                emit(snaps, &mut summary);
            }
            Ok(Event::Finished(dps)) => {
                for dp in dps {
                    let snaps = stream.finish_source(&dp);
                    emit(snaps, &mut summary);
                }
            }
            Err(mpsc::RecvTimeoutError::Timeout) => {}
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                exhausted = true;
                break;
            }
        }
        if live {
            let snaps = stream.tick(now_ms());
            emit(snaps, &mut summary);
        }
    }
    source_stop.store(true, Ordering::SeqCst);
    for h in handles {
        let _ = h.join();
    }
    if !exhausted || live {
        if let Some(s) = stream.flush() {
            emit(vec![s], &mut summary);
        }
    }
    summary.dropped_late = stream.stats().dropped_late;
    Ok(summary)
}
