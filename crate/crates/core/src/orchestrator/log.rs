//! Append-only session log: one JSON record per line. Session state is a
//! pure fold over the records.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::session::{Session, Status, StepEvent};
use crate::chain::ApiChain;
use crate::graph::{parse_graph, GraphError};
use crate::planner::StepTrace;
use crate::sequentializer::{sequentialize, PathCoverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Record {
    SessionCreated { id: String, question: String, graph_document: String, at: u64 },
    ChainProposed { chain: ApiChain, references: Vec<ApiChain>, trace: Vec<StepTrace>, seed: u64, at: u64 },
    ChainEdited { chain: ApiChain, at: u64 },
    StatusChanged { status: Status, #[serde(default, skip_serializing_if = "Option::is_none")] report: Option<String>, at: u64 },
    StepEvent { event: StepEvent },
}

impl Record {
    pub fn at(&self) -> u64 {
        match self {
            Record::SessionCreated { at, .. }
            | Record::ChainProposed { at, .. }
            | Record::ChainEdited { at, .. }
            | Record::StatusChanged { at, .. } => *at,
            Record::StepEvent { event } => event.at,
        }
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("log io: {0}")]
    Io(#[from] io::Error),
    #[error("record {record}: {message}")]
    Decode { record: usize, message: String },
    #[error("record {record}: {message}")]
    Invalid { record: usize, message: String },
    #[error("stored graph: {0}")]
    Graph(#[from] GraphError),
    #[error("log is empty")]
    Empty,
}

pub struct LogWriter {
    file: File,
    records: usize,
}

impl LogWriter {
    pub fn create(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create_new(true).append(true).open(path)?;
        Ok(Self { file, records: 0 })
    }

    /// Appends to an existing log that already holds `records` records.
    pub fn open(path: &Path, records: usize) -> io::Result<Self> {
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self { file, records })
    }

    pub fn records(&self) -> usize {
        self.records
    }

    /// Writes one record as a single line with one `write_all`.
    pub fn append(&mut self, record: &Record) -> io::Result<()> {
        let mut line = serde_json::to_string(record).map_err(io::Error::other)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        self.records += 1;
        Ok(())
    }
}

pub fn read_log(path: &Path) -> Result<Vec<Record>, ReplayError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| ReplayError::Decode { record: i + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

/// First record: builds the session skeleton.
pub fn start(record: &Record, path_cover: &PathCoverConfig) -> Result<Session, ReplayError> {
    let Record::SessionCreated { id, question, graph_document, at } = record else {
        return Err(ReplayError::Invalid { record: 1, message: "log must start with session-created".into() });
    };
    let graph = parse_graph(graph_document)?;
    let sequences = sequentialize(&graph, path_cover);
    Ok(Session {
        id: id.clone(),
        question: question.clone(),
        graph,
        sequences,
        proposed: ApiChain::default(),
        references: Vec::new(),
        trace: Vec::new(),
        seed: 0,
        status: Status::Proposed,
        events: Vec::new(),
        report: None,
        created_at: *at,
        updated_at: *at,
    })
}

/// Applies a non-initial record; `index` is its 1-based position for
/// error messages.
pub fn apply(session: &mut Session, record: &Record, index: usize) -> Result<(), ReplayError> {
    let invalid = |message: String| ReplayError::Invalid { record: index, message };
    match record {
        Record::SessionCreated { .. } => return Err(invalid("duplicate session-created".into())),
        Record::ChainProposed { chain, references, trace, seed, .. } => {
            if session.status != Status::Proposed {
                return Err(invalid(format!("chain proposed while {}", session.status)));
            }
            session.proposed = chain.clone();
            session.references = references.clone();
            session.trace = trace.clone();
            session.seed = *seed;
        }
        Record::ChainEdited { chain, .. } => {
            if session.status != Status::Proposed {
                return Err(invalid(format!("chain edited while {}", session.status)));
            }
            session.proposed = chain.clone();
        }
        Record::StatusChanged { status, report, .. } => {
            if !session.status.can_become(*status) {
                return Err(invalid(format!("transition {} -> {status}", session.status)));
            }
            session.status = *status;
            if report.is_some() {
                session.report = report.clone();
            }
        }
        Record::StepEvent { event } => {
            if event.seq <= session.last_seq() {
                return Err(invalid(format!("event seq {} after {}", event.seq, session.last_seq())));
            }
            session.events.push(event.clone());
        }
    }
    session.updated_at = session.updated_at.max(record.at());
    Ok(())
}

/// Folds a whole log into a session.
pub fn replay(records: &[Record], path_cover: &PathCoverConfig) -> Result<Session, ReplayError> {
    let (first, rest) = records.split_first().ok_or(ReplayError::Empty)?;
    let mut session = start(first, path_cover)?;
    for (i, rec) in rest.iter().enumerate() {
        apply(&mut session, rec, i + 2)?;
    }
    Ok(session)
}
