//! Scenario harness: configuration, the end-to-end pipeline and the
//! comparison metrics.

pub mod config;
pub mod demos;
pub mod metrics;
pub mod oracle;
pub mod scenario;

pub use config::{derive_seed, ResolvedScenario, Scanning, ScenarioConfig};
pub use metrics::{envelope_mask, grain_size, pearson, MetricsReport};
pub use oracle::{run_oracle, OracleReport};
pub use scenario::{run_scenario, write_artifacts, ScenarioOutcome};
