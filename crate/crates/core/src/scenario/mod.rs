//! Experiment harness: scenario files, seeded episode batches and output
//! artifacts.

mod artifact;
mod config;
mod runner;

use std::path::PathBuf;

use thiserror::Error;

pub use artifact::{
    format_sig9, render_csv, render_summary, round_sig9, write_artifact, RunSummary, Stat,
    CSV_HEADER,
};
pub use config::{
    default_roster, parse_config, parse_config_str, AgentSpec, DefenseMode, ExperimentConfig,
    GatingMode, ScenarioConfig, TomParams, TopologySpec,
};
pub use runner::{run_episode, run_scenario, EpisodeRecord, EpisodeRun, RunArtifact};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{}: {message}", path.as_ref().map_or("config".to_string(), |p| p.display().to_string()))]
    Parse {
        path: Option<PathBuf>,
        message: String,
    },
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Comms(#[from] crate::comms::CommsError),
    #[error(transparent)]
    Policy(#[from] crate::policy::PolicyError),
    #[error(transparent)]
    Trust(#[from] crate::trust::TrustError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("serializing summary: {0}")]
    Json(#[from] serde_json::Error),
}

impl ScenarioError {
    pub(crate) fn invalid(field: &str, message: impl Into<String>) -> Self {
        ScenarioError::Invalid {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
