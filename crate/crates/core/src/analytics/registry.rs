use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::WindowSnapshot;

/// Plug-in analyzer. Must be a deterministic, reentrant function of the
/// snapshot and must not perform I/O. `None` means "no value".
pub type AnalyzerFn = Arc<dyn Fn(&WindowSnapshot, &[String]) -> Option<f64> + Send + Sync>;

#[derive(Clone)]
pub struct Analyzer {
    pub name: String,
    pub description: String,
    func: AnalyzerFn,
}

impl Analyzer {
    pub fn call(&self, snapshot: &WindowSnapshot, data_points: &[String]) -> Option<f64> {
        (self.func)(snapshot, data_points)
    }
}

impl fmt::Debug for Analyzer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Analyzer")
            .field("name", &self.name)
            .field("description", &self.description)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("analyzer `{0}` is already registered")]
pub struct DuplicateAnalyzer(pub String);

/// Named analyzers reachable from EnPI expressions via `custom("name", dp...)`.
#[derive(Debug, Clone, Default)]
pub struct AnalyzerRegistry {
    entries: BTreeMap<String, Analyzer>,
}

impl AnalyzerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry holding the built-in analyzers (`linreg_slope`).
    pub fn with_builtins() -> Self {
        let mut r = Self::new();
        r.register(
            "linreg_slope",
            |snap: &WindowSnapshot, dps: &[String]| linreg_slope(snap, dps.first()?),
            "least-squares slope of value against time over the window (value per second)",
        )
        .expect("empty registry");
        r
    }

    pub fn register<F>(
        &mut self,
        name: impl Into<String>,
        func: F,
        description: impl Into<String>,
    ) -> Result<&mut Self, DuplicateAnalyzer>
    where
        F: Fn(&WindowSnapshot, &[String]) -> Option<f64> + Send + Sync + 'static,
    {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(DuplicateAnalyzer(name));
        }
        self.entries.insert(
            name.clone(),
            Analyzer {
                name,
                description: description.into(),
                func: Arc::new(func),
            },
        );
        Ok(self)
    }

    pub fn get(&self, name: &str) -> Option<&Analyzer> {
        self.entries.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Least-squares slope over the good in-window samples of `data_point`,
/// in value units per second. Needs at least two samples.
pub fn linreg_slope(snapshot: &WindowSnapshot, data_point: &str) -> Option<f64> {
    let pts: Vec<(f64, f64)> = snapshot
        .series(data_point)?
        .samples()
        .iter()
        .filter(|s| s.is_good())
        .map(|s| ((s.timestamp_ms - snapshot.window.start_ms) as f64 / 1000.0, s.value))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, v) in &pts {
        sxy += (t - mt) * (v - mv);
        sxx += (t - mt) * (t - mt);
    }
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}
