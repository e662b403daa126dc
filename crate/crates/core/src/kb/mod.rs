//! Knowledge packages: the on-disk long-term memory (`kb.json` +
//! `rules.frl`), validation diagnostics, and merging of temporary overlays.

mod load;
mod merge;
mod model;
mod validate;

pub use load::{
    load_overlay, load_package, load_package_with, load_unvalidated, write_package, LoadError,
    Overlay, KB_FILE, RULES_FILE,
};
pub use merge::{apply_overlay, merge_temporary};
pub use model::{
    DataPointKind, DataPointSpec, EngineSettings, EnpiDefinition, KbFile, KnowledgePackage,
    Location, MachineDescription, DEFAULT_REPORTING_THRESHOLD, SCHEMA_VERSION,
};
pub use validate::{has_errors, validate, validate_with, Diagnostic, Severity};
