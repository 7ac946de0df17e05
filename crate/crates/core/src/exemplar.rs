//! Stored (question, chain) exemplars and nearest-question lookup.

use std::sync::Arc;

use thiserror::Error;

use crate::chain::{parse_inline_chain, ApiChain, ChainError};
use crate::embed::{EmbedError, Embedder, Embedding};
use crate::index::{default_tau, IndexError, IndexParams, TauMgIndex, VectorSet, DEFAULT_BEAM};
use crate::planner::{PlanError, RefSource, ReferenceSet};

pub const BUILTIN_EXEMPLARS: &str = include_str!("../data/exemplars.tsv");

#[derive(Debug, Error)]
pub enum ExemplarError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    Chain { line: usize, source: ChainError },
    #[error("exemplar store is empty")]
    Empty,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exemplar {
    pub question: String,
    pub chain: ApiChain,
}

/// Parses `Q<TAB>question<TAB>chain` records; blank and `#` lines are skipped.
pub fn parse_exemplars(text: &str) -> Result<Vec<Exemplar>, ExemplarError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        let mut parts = raw.splitn(3, '\t');
        let (tag, question, chain) = (parts.next(), parts.next(), parts.next());
        let (Some("Q"), Some(question), Some(chain)) = (tag, question, chain) else {
            return Err(ExemplarError::Parse { line, message: "expected `Q<TAB>question<TAB>chain`".into() });
        };
        let chain = parse_inline_chain(chain, line).map_err(|source| ExemplarError::Chain { line, source })?;
        if chain.is_empty() {
            return Err(ExemplarError::Parse { line, message: "empty chain".into() });
        }
        out.push(Exemplar { question: question.trim().to_string(), chain });
    }
    Ok(out)
}

pub struct ExemplarStore {
    exemplars: Vec<Exemplar>,
    vectors: VectorSet,
    index: TauMgIndex,
}

impl ExemplarStore {
    pub fn new(embedder: &Arc<dyn Embedder>, exemplars: Vec<Exemplar>) -> Result<Self, ExemplarError> {
        if exemplars.is_empty() {
            return Err(ExemplarError::Empty);
        }
        let mut vectors = VectorSet::new(crate::embed::EMBED_DIM);
        for e in &exemplars {
            vectors.push(embedder.embed(&e.question)?.values())?;
        }
        let index = TauMgIndex::build(&vectors, &IndexParams::new(default_tau(&vectors, 0)))?;
        Ok(Self { exemplars, vectors, index })
    }

    pub fn from_text(embedder: &Arc<dyn Embedder>, text: &str) -> Result<Self, ExemplarError> {
        Self::new(embedder, parse_exemplars(text)?)
    }

    pub fn builtin(embedder: &Arc<dyn Embedder>) -> Result<Self, ExemplarError> {
        Self::from_text(embedder, BUILTIN_EXEMPLARS)
    }

    pub fn exemplars(&self) -> &[Exemplar] {
        &self.exemplars
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    /// Up to `k` exemplars nearest to `query`, closest first.
    pub fn nearest(&self, query: &Embedding, k: usize) -> Result<Vec<&Exemplar>, ExemplarError> {
        let k = k.clamp(1, self.len());
        let hits = self.index.search(&self.vectors, query.values(), k, DEFAULT_BEAM.max(k))?;
        Ok(hits.iter().map(|h| &self.exemplars[h.id as usize]).collect())
    }
}

/// Chains of the `k` stored questions nearest to `query`.
pub fn reference_chains(query: &Embedding, store: &ExemplarStore, k: usize) -> Result<ReferenceSet, ExemplarError> {
    let chains = store.nearest(query, k)?.into_iter().map(|e| e.chain.clone()).collect();
    ReferenceSet::new(chains, RefSource::RetrievedExemplar).map_err(|e| match e {
        PlanError::NoReferences => ExemplarError::Empty,
        other => ExemplarError::Parse { line: 0, message: other.to_string() },
    })
}
