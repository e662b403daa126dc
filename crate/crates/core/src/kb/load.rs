use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::analytics::AnalyzerRegistry;
use crate::fuzzy::LinguisticVariable;
use crate::procio::{ConnectorBinding, WindowSpec};
use crate::ruledsl::{parse_rules, print_rules, ParseError, RuleAst};

use super::{
    validate_with, DataPointSpec, Diagnostic, EngineSettings, EnpiDefinition, KbFile,
    KnowledgePackage, Location, MachineDescription, Severity,
};

pub const KB_FILE: &str = "kb.json";
pub const RULES_FILE: &str = "rules.frl";

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("knowledge base file not found: {}", .0.display())]
    KbNotFound(PathBuf),
    #[error("rule base file not found: {}", .0.display())]
    RulesNotFound(PathBuf),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{file}:{line}:{column}: {message}")]
    Json {
        file: String,
        line: u32,
        column: u32,
        message: String,
    },
    #[error("{file}: {error}")]
    Rules { file: String, error: ParseError },
    #[error("package is invalid:\n{}", format_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
}

fn format_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
}

impl LoadError {
    /// True for errors about the files' content rather than their presence.
    pub fn is_validation(&self) -> bool {
        matches!(self, LoadError::Json { .. } | LoadError::Rules { .. } | LoadError::Invalid(_))
    }

    /// The error as diagnostics, when it concerns file content.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        match self {
            LoadError::Json { file, line, message, .. } => vec![Diagnostic {
                severity: Severity::Error,
                file: file.clone(),
                line: *line,
                entity: "schema".into(),
                message: message.clone(),
            }],
            LoadError::Rules { file, error } => vec![Diagnostic {
                severity: Severity::Error,
                file: file.clone(),
                line: error.span.line,
                entity: "rules".into(),
                message: error.to_string(),
            }],
            LoadError::Invalid(d) => d.clone(),
            _ => Vec::new(),
        }
    }
}

fn read(path: &Path, missing: fn(PathBuf) -> LoadError) -> Result<String, LoadError> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => missing(path.to_path_buf()),
        _ => LoadError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })
}

fn json_error(file: &str, e: serde_json::Error) -> LoadError {
    LoadError::Json {
        file: file.to_string(),
        line: e.line() as u32,
        column: e.column() as u32,
        message: e.to_string().split(" at line ").next().unwrap_or_default().to_string(),
    }
}

/// Loads and parses a package directory without semantic validation.
pub fn load_unvalidated(root: &Path) -> Result<KnowledgePackage, LoadError> {
    if !root.is_dir() {
        return Err(LoadError::Io {
            path: root.to_path_buf(),
            source: io::Error::new(io::ErrorKind::NotFound, "package directory not found"),
        });
    }
    let kb_text = read(&root.join(KB_FILE), LoadError::KbNotFound)?;
    let rules_text = read(&root.join(RULES_FILE), LoadError::RulesNotFound)?;
    let kb: KbFile = serde_json::from_str(&kb_text).map_err(|e| json_error(KB_FILE, e))?;
    let rules = parse_rules(&rules_text).map_err(|error| LoadError::Rules {
        file: RULES_FILE.to_string(),
        error,
    })?;
    let mut pkg = KnowledgePackage {
        schema_version: kb.schema_version,
        machine: kb.machine,
        data_points: kb.data_points,
        variables: kb.variables,
        enpis: kb.enpis,
        rule_base_source: rules_text,
        rules,
        connector_bindings: kb.connectors,
        window: kb.window,
        engine: kb.engine.unwrap_or_default(),
        root: Some(root.to_path_buf()),
        locations: BTreeMap::new(),
    };
    pkg.locations = locate_entities(&pkg, &kb_text);
    Ok(pkg)
}

/// Loads, parses and validates against the built-in analyzers.
pub fn load_package(root: &Path) -> Result<KnowledgePackage, LoadError> {
    load_package_with(root, &AnalyzerRegistry::with_builtins())
}

pub fn load_package_with(root: &Path, registry: &AnalyzerRegistry) -> Result<KnowledgePackage, LoadError> {
    let pkg = load_unvalidated(root)?;
    let errors: Vec<Diagnostic> = validate_with(&pkg, registry)
        .into_iter()
        .filter(|d| d.severity == Severity::Error)
        .collect();
    if errors.is_empty() {
        Ok(pkg)
    } else {
        Err(LoadError::Invalid(errors))
    }
}

/// Writes `kb.json` and `rules.frl` (canonical form) into `dir`.
pub fn write_package(pkg: &KnowledgePackage, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(&pkg.kb_file()).map_err(io::Error::other)?;
    fs::write(dir.join(KB_FILE), json + "\n")?;
    fs::write(dir.join(RULES_FILE), print_rules(&pkg.rules))
}

/// Any subset of package sections, merged over a base package.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overlay {
    #[serde(default)]
    pub schema_version: Option<String>,
    #[serde(default)]
    pub machine: Option<MachineDescription>,
    #[serde(default)]
    pub data_points: Vec<DataPointSpec>,
    #[serde(default)]
    pub variables: Vec<LinguisticVariable>,
    #[serde(default)]
    pub enpis: Vec<EnpiDefinition>,
    #[serde(default)]
    pub window: Option<WindowSpec>,
    #[serde(default)]
    pub connectors: Vec<ConnectorBinding>,
    #[serde(default)]
    pub engine: Option<EngineSettings>,
    #[serde(skip)]
    pub rules: Vec<RuleAst>,
}

impl Overlay {
    pub fn from_json(text: &str) -> Result<Self, LoadError> {
        serde_json::from_str(text).map_err(|e| json_error(KB_FILE, e))
    }

    pub fn with_rules(mut self, source: &str) -> Result<Self, LoadError> {
        self.rules = parse_rules(source).map_err(|error| LoadError::Rules {
            file: RULES_FILE.to_string(),
            error,
        })?;
        Ok(self)
    }
}

/// Reads an overlay directory; `kb.json` and `rules.frl` are both optional.
pub fn load_overlay(dir: &Path) -> Result<Overlay, LoadError> {
    let read_opt = |name: &str| -> Result<Option<String>, LoadError> {
        match fs::read_to_string(dir.join(name)) {
            Ok(t) => Ok(Some(t)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(LoadError::Io {
                path: dir.join(name),
                source: e,
            }),
        }
    };
    let overlay = match read_opt(KB_FILE)? {
        Some(t) => Overlay::from_json(&t)?,
        None => Overlay::default(),
    };
    match read_opt(RULES_FILE)? {
        Some(src) => overlay.with_rules(&src),
        None => Ok(overlay),
    }
}

/// Line of the first `"key": "value"` pair in `text`, 1-based.
fn find_line(text: &str, key: &str, value: &str, from_line: usize) -> Option<u32> {
    let needle_key = format!("\"{key}\"");
    let needle_val = format!("\"{value}\"");
    text.lines()
        .enumerate()
        .skip(from_line)
        .find(|(_, l)| {
            l.find(&needle_key)
                .is_some_and(|k| l[k + needle_key.len()..].trim_start().trim_start_matches(':').trim_start().starts_with(&needle_val))
        })
        .map(|(i, _)| i as u32 + 1)
}

fn section_line(text: &str, key: &str) -> usize {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).unwrap_or(0)
}

fn locate_entities(pkg: &KnowledgePackage, kb_text: &str) -> BTreeMap<String, Location> {
    let mut out = BTreeMap::new();
    let kb = |line: u32| Location {
        file: KB_FILE.to_string(),
        line,
    };
    let mut put = |entity: String, section: &str, key: &str, value: &str| {
        let from = section_line(kb_text, section);
        let line = find_line(kb_text, key, value, from).unwrap_or(from as u32 + 1);
        out.insert(entity, kb(line));
    };
    put("machine".into(), "machine", "id", &pkg.machine.id);
    for d in &pkg.data_points {
        put(format!("data_points.{}", d.id), "data_points", "id", &d.id);
    }
    for v in &pkg.variables {
        put(format!("variables.{}", v.name), "variables", "name", &v.name);
    }
    for e in &pkg.enpis {
        put(format!("enpis.{}", e.name), "enpis", "name", &e.name);
    }
    for (i, c) in pkg.connector_bindings.iter().enumerate() {
        put(format!("connectors[{i}]"), "connectors", "data_point", &c.data_point);
    }
    let line = section_line(kb_text, "window") as u32 + 1;
    out.insert("window".into(), kb(line));
    let line = section_line(kb_text, "schema_version") as u32 + 1;
    out.insert("schema_version".into(), kb(line));
    if kb_text.contains("\"engine\"") {
        out.insert("engine".into(), kb(section_line(kb_text, "engine") as u32 + 1));
    }
    for r in &pkg.rules {
        out.insert(
            format!("rules.{}", r.name),
            Location {
                file: RULES_FILE.to_string(),
                line: r.span.line,
            },
        );
    }
    out
}
