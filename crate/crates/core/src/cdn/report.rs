//! JSON report for one simulated scenario.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{AttackOutcome, Hop, MutationKind, TamperTarget, TranscriptEntry};
use crate::agent::AgentCounters;
use crate::integrity::PageLoad;
use crate::proxy::StatsSnapshot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioVerdict {
    Pass,
    Fail,
    /// The attack succeeded, as it must when the run deliberately breaks a
    /// trust assumption (e.g. a poisoned DNS zone).
    ExpectedFailure,
    InfrastructureError,
}

impl ScenarioVerdict {
    /// Process exit code for the CLI.
    pub fn exit_code(self) -> i32 {
        match self {
            ScenarioVerdict::Pass => 0,
            ScenarioVerdict::Fail | ScenarioVerdict::ExpectedFailure => 2,
            ScenarioVerdict::InfrastructureError => 3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SentinelHit {
    pub sentinel: String,
    pub hop: Hop,
    pub index: usize,
}

/// One request in the scripted browsing session, as the user agent saw it.
#[derive(Debug, Clone, Serialize)]
pub struct ClientStep {
    pub name: String,
    pub method: String,
    pub url: String,
    pub status: Option<u16>,
    pub sealed: bool,
    pub error: Option<String>,
    pub security_error: bool,
    #[serde(skip)]
    pub body: bytes::Bytes,
}

impl ClientStep {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MutationTrial {
    pub index: usize,
    pub target: TamperTarget,
    pub kind: MutationKind,
    pub seed: u64,
    pub applied: bool,
    pub detected: bool,
    pub outcome: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct MutationSummary {
    pub trials: usize,
    pub applied: usize,
    pub detected: usize,
    /// target → (trials, detected)
    pub by_target: BTreeMap<String, (usize, usize)>,
    pub details: Vec<MutationTrial>,
}

impl MutationSummary {
    pub fn all_detected(&self) -> bool {
        self.trials > 0 && self.applied == self.trials && self.detected == self.trials
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TranscriptReport {
    pub scenario: String,
    pub verdict: ScenarioVerdict,
    pub reason: String,
    pub seed: u64,
    pub adversary: String,
    pub sentinel_hits: Vec<SentinelHit>,
    pub page_blocked: bool,
    pub page: PageLoad,
    pub steps: Vec<ClientStep>,
    pub attacks: Vec<AttackOutcome>,
    pub proxy: StatsSnapshot,
    pub origin_hits: BTreeMap<String, u64>,
    pub origin_authenticated: u64,
    pub agent: AgentCounters,
    pub cache: CacheStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mutations: Option<MutationSummary>,
    pub transcript: Vec<TranscriptEntry>,
}

impl TranscriptReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn step(&self, name: &str) -> Option<&ClientStep> {
        self.steps.iter().find(|s| s.name == name)
    }
}
