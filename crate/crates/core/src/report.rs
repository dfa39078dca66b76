//! The JSON report written by every CLI subcommand.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::game::{DirectMechanism, FiniteGame};
use crate::solver::ValueCertificate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub command: String,
    /// 64-bit FNV-1a of the canonical game file, as 16 hex digits.
    pub game_hash: String,
    #[serde(default)]
    pub principal: Option<String>,
    #[serde(default)]
    pub kind: Option<String>,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub gap_bound: Option<f64>,
    #[serde(default)]
    pub witness: Option<Value>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Omitted when timing is disabled so reports compare byte for byte.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<u64>,
    /// Tolerances, modes and caps actually used.
    pub settings: BTreeMap<String, Value>,
    #[serde(default)]
    pub verdict: Option<String>,
    pub summary: String,
    #[serde(default)]
    pub details: Value,
}

pub fn hash_hex(hash: u64) -> String {
    format!("{hash:016x}")
}

impl SolveReport {
    pub fn new(command: &str, game: &FiniteGame) -> Self {
        Self::with_hash(command, hash_hex(game.game_hash()))
    }

    /// For runs without a single input game.
    pub fn with_hash(command: &str, game_hash: String) -> Self {
        Self {
            command: command.to_string(),
            game_hash,
            principal: None,
            kind: None,
            value: None,
            gap_bound: None,
            witness: None,
            seed: None,
            runtime_ms: None,
            settings: BTreeMap::new(),
            verdict: None,
            summary: String::new(),
            details: Value::Null,
        }
    }

    pub fn setting(mut self, key: &str, value: impl Serialize) -> Self {
        self.settings.insert(
            key.to_string(),
            serde_json::to_value(value).expect("setting serialises"),
        );
        self
    }

    /// Copies principal, kind, value, gap bound and witness from a certificate.
    pub fn with_certificate(mut self, game: &FiniteGame, cert: &ValueCertificate) -> Self {
        self.principal = Some(game.principals()[cert.principal].id.clone());
        self.kind = Some(cert.kind.as_str().to_string());
        self.value = Some(cert.value);
        self.gap_bound = Some(cert.gap_bound);
        self.witness = Some(mechanisms_json(game, &cert.witness));
        self
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }
}

/// Direct mechanisms in the labelled file format.
pub fn mechanisms_json(game: &FiniteGame, mechanisms: &[DirectMechanism]) -> Value {
    let files: Vec<_> = mechanisms
        .iter()
        .map(|m| game.direct_mechanism_to_file(m))
        .collect();
    serde_json::to_value(files).expect("mechanism files serialise")
}
