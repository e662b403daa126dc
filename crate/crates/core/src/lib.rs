pub mod analytics;
pub mod explain;
pub mod fuzzy;
pub mod kb;
pub mod pipeline;
pub mod procio;
pub mod ruledsl;
