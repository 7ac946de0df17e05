use serde::{Deserialize, Serialize};

use crate::chain::ApiChain;
use crate::graph::Graph;
use crate::planner::StepTrace;
use crate::sequentializer::SequenceBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Proposed,
    Confirmed,
    Executing,
    Done,
    Failed,
}

impl Status {
    /// Allowed forward transitions: proposed, confirmed, executing, then
    /// done or failed.
    pub fn can_become(self, next: Status) -> bool {
        use Status::*;
        matches!((self, next), (Proposed, Confirmed) | (Confirmed, Executing) | (Executing, Done) | (Executing, Failed))
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Status::Done | Status::Failed)
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Status::Proposed => "proposed",
            Status::Confirmed => "confirmed",
            Status::Executing => "executing",
            Status::Done => "done",
            Status::Failed => "failed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Started,
    Finished,
    Error,
    NeedsConfirmation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepEvent {
    pub seq: u64,
    pub step_index: usize,
    pub kind: EventKind,
    pub payload: String,
    /// Milliseconds since the Unix epoch.
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub question: String,
    pub graph: Graph,
    pub sequences: SequenceBundle,
    pub proposed: ApiChain,
    /// Reference chains the proposal was scored against.
    pub references: Vec<ApiChain>,
    pub trace: Vec<StepTrace>,
    pub seed: u64,
    pub status: Status,
    pub events: Vec<StepEvent>,
    pub report: Option<String>,
    pub created_at: u64,
    pub updated_at: u64,
}

impl Session {
    pub fn last_seq(&self) -> u64 {
        self.events.last().map_or(0, |e| e.seq)
    }

    pub fn events_since(&self, since: u64) -> &[StepEvent] {
        let start = self.events.partition_point(|e| e.seq <= since);
        &self.events[start..]
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            id: self.id.clone(),
            question: self.question.clone(),
            status: self.status,
            steps: self.proposed.len(),
            created_at: self.created_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub question: String,
    pub status: Status,
    pub steps: usize,
    pub created_at: u64,
}
