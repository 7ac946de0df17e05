//! Registry of analysis APIs with embedding-based retrieval.
//!
//! Registry file format, one record per api:
//!
//! ```text
//! api <id>
//! desc <free text>
//! in <graph|graph-pair|value|none>
//! out <graph|value|report>
//! exec <builtin:name|external:name>
//! ```

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::ApiCall;
use crate::embed::{EmbedError, Embedder, Embedding, HashingEmbedder, EMBED_DIM};
use crate::index::{default_tau, IndexError, IndexParams, TauMgIndex, VectorSet, DEFAULT_BEAM};
use crate::tools::{self, ApiResult, ExecContext, ToolError};

/// The registry shipped with the crate.
pub const BUILTIN_REGISTRY: &str = include_str!("../data/registry.txt");

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("api `{0}` is already registered")]
    Duplicate(String),
    #[error("registry is empty")]
    Empty,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("api `{0}` has an empty description")]
    EmptyDescription(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputKind {
    Graph,
    GraphPair,
    Value,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputKind {
    Graph,
    Value,
    Report,
}

impl FromStr for InputKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "graph" => Ok(Self::Graph),
            "graph-pair" => Ok(Self::GraphPair),
            "value" => Ok(Self::Value),
            "none" => Ok(Self::None),
            _ => Err(format!("unknown input kind `{s}`")),
        }
    }
}

impl fmt::Display for InputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Graph => "graph",
            Self::GraphPair => "graph-pair",
            Self::Value => "value",
            Self::None => "none",
        })
    }
}

impl FromStr for OutputKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "graph" => Ok(Self::Graph),
            "value" => Ok(Self::Value),
            "report" => Ok(Self::Report),
            _ => Err(format!("unknown output kind `{s}`")),
        }
    }
}

impl fmt::Display for OutputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Graph => "graph",
            Self::Value => "value",
            Self::Report => "report",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "name", rename_all = "lowercase")]
pub enum ExecTag {
    Builtin(String),
    External(String),
}

impl FromStr for ExecTag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            Some(("builtin", name)) if tools::BUILTINS.contains(&name) => Ok(Self::Builtin(name.into())),
            Some(("builtin", name)) => Err(format!("unknown builtin tool `{name}`")),
            Some(("external", name)) if !name.is_empty() => Ok(Self::External(name.into())),
            _ => Err(format!("expected `builtin:<tool>` or `external:<name>`, found `{s}`")),
        }
    }
}

impl fmt::Display for ExecTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Builtin(n) => write!(f, "builtin:{n}"),
            Self::External(n) => write!(f, "external:{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiSpec {
    pub id: String,
    pub description: String,
    pub input: InputKind,
    pub output: OutputKind,
    pub exec: ExecTag,
}

impl ApiSpec {
    pub fn to_record(&self) -> String {
        format!("api {}\ndesc {}\nin {}\nout {}\nexec {}\n", self.id, self.description, self.input, self.output, self.exec)
    }
}

/// Parses registry records. Blank lines and `#` comments are ignored.
pub fn parse_registry(text: &str) -> Result<Vec<ApiSpec>, RegistryError> {
    #[derive(Default)]
    struct Partial {
        start: usize,
        id: String,
        desc: Option<String>,
        input: Option<InputKind>,
        output: Option<OutputKind>,
        exec: Option<ExecTag>,
    }
    fn finish(p: Partial) -> Result<ApiSpec, RegistryError> {
        let missing = |field: &str| RegistryError::Parse { line: p.start, message: format!("api `{}` is missing `{field}`", p.id) };
        Ok(ApiSpec {
            description: p.desc.clone().ok_or_else(|| missing("desc"))?,
            input: p.input.ok_or_else(|| missing("in"))?,
            output: p.output.ok_or_else(|| missing("out"))?,
            exec: p.exec.clone().ok_or_else(|| missing("exec"))?,
            id: p.id,
        })
    }
    let mut specs = Vec::new();
    let mut cur: Option<Partial> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| RegistryError::Parse { line: line_no, message };
        let (key, value) = line.split_once(char::is_whitespace).map(|(k, v)| (k, v.trim())).unwrap_or((line, ""));
        if key == "api" {
            if value.is_empty() || value.contains(char::is_whitespace) {
                return Err(err("expected `api <id>`".into()));
            }
            if let Some(p) = cur.take() {
                specs.push(finish(p)?);
            }
            cur = Some(Partial { start: line_no, id: value.to_string(), ..Default::default() });
            continue;
        }
        let p = cur.as_mut().ok_or_else(|| err(format!("`{key}` before any `api` line")))?;
        match key {
            "desc" => p.desc = Some(value.to_string()),
            "in" => p.input = Some(value.parse().map_err(err)?),
            "out" => p.output = Some(value.parse().map_err(err)?),
            "exec" => p.exec = Some(value.parse().map_err(err)?),
            other => return Err(err(format!("unknown field `{other}`"))),
        }
    }
    if let Some(p) = cur {
        specs.push(finish(p)?);
    }
    Ok(specs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieved {
    pub spec: ApiSpec,
    /// Cosine similarity, recovered as `1 − δ²/2` on unit vectors.
    pub score: f32,
}

/// API registry with a lazily (re)built τ-MG over description embeddings.
pub struct Registry {
    specs: Vec<ApiSpec>,
    by_id: HashMap<String, usize>,
    vectors: VectorSet,
    embedder: Arc<dyn Embedder>,
    index: RwLock<Option<Arc<TauMgIndex>>>,
    beam: usize,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry").field("apis", &self.specs.len()).field("embedder", &self.embedder.describe()).finish()
    }
}

impl Default for Registry {
    fn default() -> Self {
        Self::new(Arc::new(HashingEmbedder::default()))
    }
}

impl Registry {
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        Self {
            specs: Vec::new(),
            by_id: HashMap::new(),
            vectors: VectorSet::new(EMBED_DIM),
            embedder,
            index: RwLock::new(None),
            beam: DEFAULT_BEAM,
        }
    }

    pub fn from_specs(embedder: Arc<dyn Embedder>, specs: Vec<ApiSpec>) -> Result<Self, RegistryError> {
        let mut r = Self::new(embedder);
        for s in specs {
            r.register(s)?;
        }
        Ok(r)
    }

    pub fn from_text(embedder: Arc<dyn Embedder>, text: &str) -> Result<Self, RegistryError> {
        Self::from_specs(embedder, parse_registry(text)?)
    }

    /// The shipped registry with the hashing embedder.
    pub fn builtin() -> Self {
        Self::from_text(Arc::new(HashingEmbedder::default()), BUILTIN_REGISTRY).expect("shipped registry is valid")
    }

    pub fn register(&mut self, spec: ApiSpec) -> Result<(), RegistryError> {
        if self.by_id.contains_key(&spec.id) {
            return Err(RegistryError::Duplicate(spec.id));
        }
        if spec.description.trim().is_empty() {
            return Err(RegistryError::EmptyDescription(spec.id));
        }
        let e = self.embedder.embed(&spec.description)?;
        self.vectors.push(e.values())?;
        self.by_id.insert(spec.id.clone(), self.specs.len());
        self.specs.push(spec);
        *self.index.get_mut().unwrap_or_else(|p| p.into_inner()) = None;
        Ok(())
    }

    pub fn specs(&self) -> &[ApiSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ApiSpec> {
        self.by_id.get(id).map(|&i| &self.specs[i])
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn embed(&self, text: &str) -> Result<Embedding, RegistryError> {
        Ok(self.embedder.embed(text)?)
    }

    /// Description embeddings, in registration order.
    pub fn vectors(&self) -> &VectorSet {
        &self.vectors
    }

    fn index(&self) -> Result<Arc<TauMgIndex>, RegistryError> {
        if let Some(ix) = self.index.read().unwrap_or_else(|p| p.into_inner()).as_ref() {
            return Ok(ix.clone());
        }
        let mut slot = self.index.write().unwrap_or_else(|p| p.into_inner());
        if let Some(ix) = slot.as_ref() {
            return Ok(ix.clone());
        }
        if self.vectors.is_empty() {
            return Err(RegistryError::Empty);
        }
        let params = IndexParams::new(default_tau(&self.vectors, 0));
        let ix = Arc::new(TauMgIndex::build(&self.vectors, &params)?);
        *slot = Some(ix.clone());
        Ok(ix)
    }

    /// The `k` apis closest to `question`, best first.
    pub fn retrieve_apis(&self, question: &str, k: usize) -> Result<Vec<Retrieved>, RegistryError> {
        if self.is_empty() {
            return Err(RegistryError::Empty);
        }
        let q = self.embed(question)?;
        self.retrieve_by_embedding(&q, k)
    }

    pub fn retrieve_by_embedding(&self, query: &Embedding, k: usize) -> Result<Vec<Retrieved>, RegistryError> {
        let index = self.index()?;
        let k = k.min(self.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        let hits = index.search(&self.vectors, query.values(), k, self.beam.max(k))?;
        Ok(hits
            .into_iter()
            .map(|h| Retrieved { spec: self.specs[h.id as usize].clone(), score: 1.0 - h.distance * h.distance / 2.0 })
            .collect())
    }

    /// Runs one call against the execution context.
    pub fn execute(&self, call: &ApiCall, ctx: &ExecContext<'_>) -> Result<ApiResult, ToolError> {
        let spec = self.get(&call.api).ok_or_else(|| ToolError::UnknownApi(call.api.clone()))?;
        match &spec.exec {
            ExecTag::Builtin(tool) => tools::run_builtin(tool, call, ctx),
            ExecTag::External(_) => Err(ToolError::NotExecutable(spec.id.clone())),
        }
    }

    pub fn to_text(&self) -> String {
        self.specs.iter().map(|s| s.to_record()).collect::<Vec<_>>().join("\n")
    }
}
