//! Versioned JSON envelopes for every emitted artifact.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::Error;
use crate::game::Game;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report<T> {
    /// `absorb/v1/<kind>`.
    pub schema: String,
    pub version: u32,
    /// SHA-256 of the canonical instance JSON.
    pub instance_hash: Option<String>,
    pub config: RunConfig,
    pub result: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(kind: &str, g: Option<&Game>, config: &RunConfig, result: T) -> Self {
        Report {
            schema: format!("absorb/v{SCHEMA_VERSION}/{kind}"),
            version: SCHEMA_VERSION,
            instance_hash: g.map(Game::content_hash),
            config: config.clone(),
            result,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub schema: String,
    pub error: String,
    pub message: String,
    pub exit_code: i32,
}

impl ErrorReport {
    pub fn new(e: &Error) -> Self {
        ErrorReport {
            schema: format!("absorb/v{SCHEMA_VERSION}/error"),
            error: e.kind().to_string(),
            message: e.to_string(),
            exit_code: e.exit_code(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}
