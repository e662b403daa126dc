use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use ess_core::analytics::AnalyzerRegistry;
use ess_core::explain::{plotdata_files, render_json_line, render_report, ReportFormat};
use ess_core::fuzzy::Norms;
use ess_core::kb::{load_unvalidated, validate_with, Diagnostic, KnowledgePackage, LoadError, Severity};
use ess_core::pipeline::{run_monitor, Engine, EngineError, MonitorOptions};
use ess_core::procio::{Alignment, CsvData};

#[derive(Parser)]
#[command(name = "ess", version, about = "Fuzzy expert-system shell for energy-efficiency assessment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a knowledge package; diagnostics go to standard error.
    Validate { package: PathBuf },
    /// Evaluate a CSV file window by window and write a report.
    Analyze {
        package: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output file (a directory for plotdata). Standard output if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "json")]
        format: ReportFormat,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the package's connectors and stream one JSON report per window.
    Monitor {
        package: PathBuf,
        /// Seconds to run; until interrupted if omitted.
        #[arg(long)]
        duration: Option<f64>,
        /// Appended to as newline-delimited JSON. Standard output if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args)]
struct Overrides {
    /// Window length in seconds.
    #[arg(long)]
    window_s: Option<f64>,
    #[arg(long)]
    alignment: Option<Alignment>,
    #[arg(long)]
    norms: Option<Norms>,
    /// Defuzzification resolution.
    #[arg(long)]
    samples: Option<usize>,
    /// Minimum clip level for a recommendation.
    #[arg(long)]
    threshold: Option<f64>,
}

impl Overrides {
    fn apply(&self, pkg: &mut KnowledgePackage) {
        if let Some(s) = self.window_s {
            pkg.window.length_s = s;
        }
        if let Some(a) = self.alignment {
            pkg.window.alignment = a;
        }
        if let Some(n) = self.norms {
            pkg.engine.norms = n;
        }
        if let Some(n) = self.samples {
            pkg.engine.samples = n;
        }
        if let Some(t) = self.threshold {
            pkg.engine.reporting_threshold = t;
        }
    }
}

enum Failure {
    Validation(Vec<Diagnostic>),
    Io(String),
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.diagnostics())
        } else {
            Failure::Io(e.to_string())
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Invalid(d) => Failure::Validation(d),
            other => Failure::Io(other.to_string()),
        }
    }
}

fn io_failure(path: &Path) -> impl FnOnce(io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

fn print_diagnostics(diagnostics: &[Diagnostic]) {
    for d in diagnostics {
        eprintln!("{d}");
    }
}

fn log_warnings(diagnostics: &[Diagnostic]) {
    for d in diagnostics.iter().filter(|d| d.severity == Severity::Warning) {
        log::warn!("{d}");
    }
}

fn prepare(package: &Path, overrides: &Overrides) -> Result<Engine, Failure> {
    let mut pkg = load_unvalidated(package)?;
    overrides.apply(&mut pkg);
    log_warnings(&validate_with(&pkg, &AnalyzerRegistry::with_builtins()));
    Ok(Engine::new(pkg)?)
}

fn validate(package: &Path) -> Result<(), Failure> {
    let pkg = load_unvalidated(package)?;
    let diagnostics = validate_with(&pkg, &AnalyzerRegistry::with_builtins());
    if diagnostics.iter().any(|d| d.severity == Severity::Error) {
        return Err(Failure::Validation(diagnostics));
    }
    print_diagnostics(&diagnostics);
    Ok(())
}

fn analyze(
    package: &Path,
    data: &Path,
    out: Option<&Path>,
    format: ReportFormat,
    overrides: &Overrides,
) -> Result<(), Failure> {
    let engine = prepare(package, overrides)?;
    let csv = CsvData::load(data).map_err(|e| Failure::Io(e.to_string()))?;
    let report = engine.analyze_batch(&csv);
    for w in &report.warnings {
        log::warn!("{w}");
    }
    match (format, out) {
        (ReportFormat::Plotdata, Some(dir)) => {
            fs::create_dir_all(dir).map_err(io_failure(dir))?;
            for (name, body) in plotdata_files(&report) {
                let path = dir.join(name);
                fs::write(&path, body).map_err(io_failure(&path))?;
            }
        }
        (_, Some(path)) => fs::write(path, render_report(&report, format)).map_err(io_failure(path))?,
        (_, None) => io::stdout()
            .write_all(&render_report(&report, format))
            .map_err(|e| Failure::Io(e.to_string()))?,
    }
    Ok(())
}

fn monitor(package: &Path, duration: Option<f64>, out: Option<&Path>, overrides: &Overrides) -> Result<(), Failure> {
    let engine = prepare(package, overrides)?;
    let duration = match duration {
        Some(d) if d.is_finite() && d >= 0.0 => Some(Duration::from_secs_f64(d)),
        Some(d) => return Err(Failure::Io(format!("invalid --duration {d}"))),
        None => None,
    };
    let mut sink: Box<dyn Write> = match out {
        Some(path) => Box::new(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(io_failure(path))?,
        ),
        None => Box::new(io::stdout()),
    };
    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = stop.clone();
        if let Err(e) = ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst)) {
            log::warn!("cannot install interrupt handler: {e}");
        }
    }
    let options = MonitorOptions { duration, stop };
    let mut write_error = None;
    let summary = run_monitor(&engine, &options, |trace| {
        let report = engine.report(vec![trace.clone()], Vec::new());
        let line = render_json_line(&report);
        if let Err(e) = sink.write_all(line.as_bytes()).and_then(|()| sink.flush()) {
            write_error.get_or_insert(e);
        }
    })?;
    log::info!("monitor finished: {summary:?}");
    match write_error {
        Some(e) => Err(Failure::Io(e.to_string())),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ESS_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { package } => validate(package),
        Command::Analyze {
            package,
            data,
            out,
            format,
            overrides,
        } => analyze(package, data, out.as_deref(), *format, overrides),
        Command::Monitor {
            package,
            duration,
            out,
            overrides,
        } => monitor(package, *duration, out.as_deref(), overrides),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(diagnostics)) => {
            print_diagnostics(&diagnostics);
            ExitCode::from(1)
        }
        Err(Failure::Io(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
