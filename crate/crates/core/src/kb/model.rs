use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fuzzy::{EngineConfig, LinguisticVariable, Norms, DEFAULT_SAMPLES};
use crate::procio::{ConnectorBinding, WindowSpec};
use crate::ruledsl::{print_rules, RuleAst};

pub const SCHEMA_VERSION: &str = "1.0";
pub const DEFAULT_REPORTING_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineDescription {
    pub id: String,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub energy_notes: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataPointKind {
    Power,
    Counter,
    State,
    Generic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPointSpec {
    pub id: String,
    #[serde(default)]
    pub label: String,
    pub unit: String,
    pub kind: DataPointKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnpiDefinition {
    pub name: String,
    pub expression_source: String,
    #[serde(default)]
    pub unit: String,
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

fn default_threshold() -> f64 {
    DEFAULT_REPORTING_THRESHOLD
}

/// Optional `engine` section of `kb.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSettings {
    #[serde(default)]
    pub norms: Norms,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Minimum dominant-term clip level for a recommendation.
    #[serde(default = "default_threshold")]
    pub reporting_threshold: f64,
}

impl Default for EngineSettings {
    fn default() -> Self {
        Self {
            norms: Norms::MinMax,
            samples: DEFAULT_SAMPLES,
            reporting_threshold: DEFAULT_REPORTING_THRESHOLD,
        }
    }
}

impl EngineSettings {
    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            norms: self.norms,
            samples: self.samples,
        }
    }
}

/// Where an entity was declared, for diagnostics.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Location {
    pub file: String,
    pub line: u32,
}

/// Long-term memory: one machine with its data points, EnPIs, linguistic
/// variables, rule base and connector bindings.
///
/// Equality is structural: the package root, source locations and the
/// rule source text are ignored (rules compare as parsed ASTs).
#[derive(Debug, Clone)]
pub struct KnowledgePackage {
    pub schema_version: String,
    pub machine: MachineDescription,
    pub data_points: Vec<DataPointSpec>,
    pub variables: Vec<LinguisticVariable>,
    pub enpis: Vec<EnpiDefinition>,
    pub rule_base_source: String,
    pub rules: Vec<RuleAst>,
    pub connector_bindings: Vec<ConnectorBinding>,
    pub window: WindowSpec,
    pub engine: EngineSettings,
    /// Directory the package was loaded from.
    pub root: Option<PathBuf>,
    /// Entity path (e.g. `enpis.idle_share`) to declaration site.
    pub locations: BTreeMap<String, Location>,
}

impl PartialEq for KnowledgePackage {
    fn eq(&self, other: &Self) -> bool {
        self.schema_version == other.schema_version
            && self.machine == other.machine
            && self.data_points == other.data_points
            && self.variables == other.variables
            && self.enpis == other.enpis
            && self.rules == other.rules
            && self.connector_bindings == other.connector_bindings
            && self.window == other.window
            && self.engine == other.engine
    }
}

/// On-disk shape of `kb.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KbFile {
    pub schema_version: String,
    pub machine: MachineDescription,
    pub data_points: Vec<DataPointSpec>,
    pub variables: Vec<LinguisticVariable>,
    pub enpis: Vec<EnpiDefinition>,
    pub window: WindowSpec,
    #[serde(default)]
    pub connectors: Vec<ConnectorBinding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<EngineSettings>,
}

impl KnowledgePackage {
    pub fn kb_file(&self) -> KbFile {
        KbFile {
            schema_version: self.schema_version.clone(),
            machine: self.machine.clone(),
            data_points: self.data_points.clone(),
            variables: self.variables.clone(),
            enpis: self.enpis.clone(),
            window: self.window,
            connectors: self.connector_bindings.clone(),
            engine: Some(self.engine),
        }
    }

    pub fn variable_map(&self) -> BTreeMap<String, LinguisticVariable> {
        self.variables.iter().map(|v| (v.name.clone(), v.clone())).collect()
    }

    pub fn variable(&self, name: &str) -> Option<&LinguisticVariable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn data_point(&self, id: &str) -> Option<&DataPointSpec> {
        self.data_points.iter().find(|d| d.id == id)
    }

    pub fn enpi(&self, name: &str) -> Option<&EnpiDefinition> {
        self.enpis.iter().find(|e| e.name == name)
    }

    pub fn location(&self, entity: &str) -> Location {
        self.locations.get(entity).cloned().unwrap_or_else(|| Location {
            file: if entity == "rules" || entity.starts_with("rules.") { "rules.frl" } else { "kb.json" }.to_string(),
            line: 1,
        })
    }

    /// SHA-256 over the canonical `kb.json` and the printed rule base, hex.
    pub fn content_hash(&self) -> String {
        let value = serde_json::to_value(self.kb_file()).expect("package serializes");
        let mut h = Sha256::new();
        h.update(value.to_string().as_bytes());
        h.update(b"\n");
        h.update(print_rules(&self.rules).as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
