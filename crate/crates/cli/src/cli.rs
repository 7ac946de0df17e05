use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use graphchain_core::chain::parse_chain;
use graphchain_core::embed::{embedder_from_spec, Embedder};
use graphchain_core::exemplar::{reference_chains, ExemplarStore};
use graphchain_core::index::{default_tau, IndexParams, TauMgIndex, VectorSet, DEFAULT_BEAM, DEFAULT_MAX_DEGREE};
use graphchain_core::metric::{optimal_matching, DEFAULT_ALPHA};
use graphchain_core::orchestrator::{Orchestrator, OrchestratorConfig, EMBED_BACKEND_ENV, SEED_ENV};
use graphchain_core::planner::{generate_chain, RolloutConfig};
use graphchain_core::registry::{parse_registry, ApiSpec, ExecTag, InputKind, OutputKind, Registry, BUILTIN_REGISTRY};
use graphchain_core::sequentializer::{sequentialize, PathCoverConfig};
use graphchain_core::tools::GraphStore;
use graphchain_core::{parse_graph, Exec};

use crate::client::Client;
use crate::error::CliError;
use crate::server::{router, AppState};

#[derive(Debug, Parser)]
#[command(name = "graphchain", version, about = "Answer questions about graphs with retrieved API chains")]
pub struct Cli {
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print path sequences of a graph.
    Seq(SeqArgs),
    /// Optimal matching loss between two chain files.
    Loss(LossArgs),
    /// Plan a chain for a question.
    Plan(PlanArgs),
    /// Build, query or audit a vector index.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Inspect or extend the api registry.
    #[command(subcommand)]
    Apis(ApisCommand),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Talk to a running service.
    #[command(subcommand)]
    Session(SessionCommand),
}

#[derive(Debug, Args)]
pub struct SeqArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Maximum path length in edges.
    #[arg(long = "l", default_value_t = 2)]
    pub l: usize,
    /// Keep only paths that cover a new edge.
    #[arg(long)]
    pub minimize: bool,
    /// Also print motif-level sequences.
    #[arg(long = "super")]
    pub super_level: bool,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    #[arg(long)]
    pub chain: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub question: String,
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub r: usize,
    #[arg(long, default_value_t = 8)]
    pub max_len: usize,
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub exhaustive: bool,
    /// Offer the reference chains' apis as candidates too.
    #[arg(long)]
    pub reference_apis: bool,
    /// Exemplars used as references.
    #[arg(long, default_value_t = 1)]
    pub references: usize,
    #[command(flatten)]
    pub sources: Sources,
}

#[derive(Debug, Clone, Args)]
pub struct Sources {
    /// Registry file; the shipped registry when absent.
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Exemplar log; the shipped exemplars when absent.
    #[arg(long)]
    pub exemplars: Option<PathBuf>,
    /// `hashing` or `external:<url>`.
    #[arg(long, env = EMBED_BACKEND_ENV, default_value = "hashing")]
    pub embed_backend: String,
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    Build {
        #[arg(long)]
        vectors: PathBuf,
        /// Defaults to 0.05 of the sampled mean pairwise distance.
        #[arg(long)]
        tau: Option<f32>,
        #[arg(long, default_value_t = DEFAULT_MAX_DEGREE)]
        max_degree: usize,
        #[arg(long)]
        out: PathBuf,
    },
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        vectors: PathBuf,
        /// Vector file of queries.
        #[arg(long)]
        query: PathBuf,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_BEAM)]
        beam: usize,
    },
    Audit {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_DEGREE)]
        max_degree: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum ApisCommand {
    List {
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// Append an api record to a registry file.
    Add {
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        desc: String,
        #[arg(long = "in")]
        input: InputKind,
        #[arg(long = "out")]
        output: OutputKind,
        #[arg(long)]
        exec: ExecTag,
    },
    Retrieve {
        #[arg(long)]
        question: String,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long, env = EMBED_BACKEND_ENV, default_value = "hashing")]
        embed_backend: String,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Graph store directory.
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long, default_value = "sessions")]
    pub log_dir: PathBuf,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub sources: Sources,
}

#[derive(Debug, Subcommand)]
pub enum SessionCommand {
    Submit {
        #[command(flatten)]
        server: ServerArg,
        #[arg(long)]
        question: String,
        #[arg(long)]
        graph: PathBuf,
    },
    Confirm {
        #[command(flatten)]
        server: ServerArg,
        id: String,
        /// Replacement chain file.
        #[arg(long)]
        chain: Option<PathBuf>,
    },
    Execute {
        #[command(flatten)]
        server: ServerArg,
        id: String,
    },
    /// Print events, following until the run ends.
    Tail {
        #[command(flatten)]
        server: ServerArg,
        id: String,
        #[arg(long, default_value_t = 0)]
        since: u64,
        /// Stop after one poll.
        #[arg(long)]
        once: bool,
    },
}

#[derive(Debug, Clone, Args)]
pub struct ServerArg {
    #[arg(long, env = "GRAPHCHAIN_SERVER", default_value = "http://127.0.0.1:8080")]
    pub server: String,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })
}

fn registry_from(path: Option<&Path>, embedder: Arc<dyn Embedder>) -> Result<Registry, CliError> {
    let text = match path {
        Some(p) => read(p)?,
        None => BUILTIN_REGISTRY.to_string(),
    };
    Ok(Registry::from_text(embedder, &text)?)
}

impl Sources {
    fn load(&self) -> Result<(Registry, ExemplarStore), CliError> {
        let embedder = embedder_from_spec(&self.embed_backend)?;
        let registry = registry_from(self.registry.as_deref(), embedder.clone())?;
        let exemplars = match &self.exemplars {
            Some(p) => ExemplarStore::from_text(&embedder, &read(p)?)?,
            None => ExemplarStore::builtin(&embedder)?,
        };
        Ok((registry, exemplars))
    }
}

/// Runs one command, writing its normal output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    let mut text = String::new();
    match cli.command {
        Command::Seq(a) => {
            let g = parse_graph(&read(&a.graph)?)?;
            let cfg = PathCoverConfig { max_len: a.l.max(1), minimize: a.minimize, exec };
            let bundle = sequentialize(&g, &cfg);
            for s in &bundle.base_sequences {
                writeln!(text, "base: {}", s.join(" "))?;
            }
            if a.super_level {
                for s in &bundle.super_sequences {
                    writeln!(text, "super: {}", s.join(" "))?;
                }
            }
        }
        Command::Loss(a) => {
            let c = parse_chain(&read(&a.chain)?)?;
            let r = parse_chain(&read(&a.reference)?)?;
            if !(a.alpha > 0.0) {
                return Err(CliError::Usage("--alpha must be positive".into()));
            }
            let m = optimal_matching(&c, &r, a.alpha);
            writeln!(text, "X: {}", m.loss.x)?;
            writeln!(text, "Y: {}", m.loss.y)?;
            writeln!(text, "alpha: {}", m.loss.alpha)?;
            writeln!(text, "total: {}", m.loss.total)?;
            let pairs: Vec<String> = m.matching.pairs().iter().map(|(i, j)| format!("{i}->{j}")).collect();
            writeln!(text, "matching: {}", pairs.join(" "))?;
        }
        Command::Plan(a) => {
            if a.r == 0 || a.max_len == 0 || a.k == 0 {
                return Err(CliError::Usage("--r, --max-len and --k must be at least 1".into()));
            }
            let g = parse_graph(&read(&a.graph)?)?;
            let (registry, exemplars) = a.sources.load()?;
            let q = registry.embed(&a.question)?;
            let refs = reference_chains(&q, &exemplars, a.references)?;
            let cfg = RolloutConfig {
                r: a.r,
                k: a.k,
                max_len: a.max_len,
                seed: a.seed,
                exhaustive: a.exhaustive,
                reference_apis: a.reference_apis,
                exec,
                ..RolloutConfig::default()
            };
            let plan = generate_chain(&a.question, &g, &registry, &refs, &cfg)?;
            text.push_str(&plan.chain.to_text());
            for step in &plan.trace {
                let scores: Vec<String> = step.scores.iter().map(|c| format!("{}={}", c.api, c.score)).collect();
                writeln!(text, "# step {} chose {}: {}", step.step, step.chosen, scores.join(" "))?;
            }
        }
        Command::Index(cmd) => run_index(cmd, exec, &mut text)?,
        Command::Apis(cmd) => run_apis(cmd, &mut text)?,
        Command::Serve(a) => {
            out.flush()?;
            return serve(a, exec);
        }
        Command::Session(cmd) => run_session(cmd, &mut text)?,
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

fn run_index(cmd: IndexCommand, exec: Exec, text: &mut String) -> Result<(), CliError> {
    match cmd {
        IndexCommand::Build { vectors, tau, max_degree, out } => {
            let set = VectorSet::parse(&read(&vectors)?)?;
            let tau = tau.unwrap_or_else(|| default_tau(&set, 0));
            let params = IndexParams::new(tau).with_max_degree(max_degree).with_exec(exec);
            let index = TauMgIndex::build(&set, &params)?;
            std::fs::write(&out, index.to_text()).map_err(|source| CliError::Write { path: out.clone(), source })?;
            writeln!(text, "built {} nodes, {} edges ({} repair), tau {}, entry {}", index.len(), index.edge_count(), index.repair_edge_count(), index.tau(), index.entry_point())?;
        }
        IndexCommand::Query { index, vectors, query, k, beam } => {
            let set = VectorSet::parse(&read(&vectors)?)?;
            let idx = TauMgIndex::parse(&read(&index)?)?;
            let queries = VectorSet::parse(&read(&query)?)?;
            for qi in 0..queries.len() as u32 {
                let hits = idx.search(&set, queries.get(qi), k, beam)?;
                let cells: Vec<String> = hits.iter().map(|h| format!("{}:{}", h.id, h.distance)).collect();
                writeln!(text, "{qi}\t{}", cells.join(" "))?;
            }
        }
        IndexCommand::Audit { index, vectors, max_degree } => {
            let set = VectorSet::parse(&read(&vectors)?)?;
            let idx = TauMgIndex::parse(&read(&index)?)?;
            let report = idx.audit(&set, max_degree)?;
            writeln!(text, "edges checked: {}", report.edges_checked)?;
            writeln!(text, "triples checked: {}", report.triples_checked)?;
            writeln!(text, "violations: {}", report.violations.len())?;
            writeln!(text, "order violations: {}", report.order_violations.len())?;
            writeln!(text, "missing witnesses: {}", report.missing_witnesses.len())?;
            writeln!(text, "reachable: {}", report.reachable)?;
            if !report.is_sound() {
                return Err(CliError::Unsound(text.clone()));
            }
            writeln!(text, "sound")?;
        }
    }
    Ok(())
}

fn run_apis(cmd: ApisCommand, text: &mut String) -> Result<(), CliError> {
    match cmd {
        ApisCommand::List { registry } => {
            let specs = match registry {
                Some(p) => parse_registry(&read(&p)?)?,
                None => parse_registry(BUILTIN_REGISTRY)?,
            };
            for s in specs {
                writeln!(text, "{}\t{} -> {}\t{}\t{}", s.id, s.input, s.output, s.exec, s.description)?;
            }
        }
        ApisCommand::Add { registry, id, desc, input, output, exec } => {
            let existing = if registry.exists() { read(&registry)? } else { String::new() };
            let mut specs = if existing.trim().is_empty() { Vec::new() } else { parse_registry(&existing)? };
            let spec = ApiSpec { id, description: desc, input, output, exec };
            specs.push(spec.clone());
            let mut check = Registry::new(embedder_from_spec("hashing")?);
            for s in specs {
                check.register(s)?;
            }
            let mut body = existing;
            if !body.is_empty() && !body.ends_with("\n\n") {
                body.push_str(if body.ends_with('\n') { "\n" } else { "\n\n" });
            }
            body.push_str(&spec.to_record());
            std::fs::write(&registry, body).map_err(|source| CliError::Write { path: registry.clone(), source })?;
            writeln!(text, "added {}", spec.id)?;
        }
        ApisCommand::Retrieve { question, k, registry, embed_backend } => {
            if k == 0 {
                return Err(CliError::Usage("--k must be at least 1".into()));
            }
            let reg = registry_from(registry.as_deref(), embedder_from_spec(&embed_backend)?)?;
            for hit in reg.retrieve_apis(&question, k)? {
                writeln!(text, "{}\t{:.4}\t{}", hit.spec.id, hit.score, hit.spec.description)?;
            }
        }
    }
    Ok(())
}

/// Builds the orchestrator the service runs on.
pub fn build_orchestrator(a: &ServeArgs, exec: Exec) -> Result<Orchestrator, CliError> {
    let (registry, exemplars) = a.sources.load()?;
    let store = match &a.store {
        Some(dir) => GraphStore::load_dir(dir)?,
        None => GraphStore::default(),
    };
    let mut cfg = OrchestratorConfig::default();
    cfg.rollout.exec = exec;
    cfg.path_cover.exec = exec;
    if let Some(seed) = a.seed {
        cfg.rollout.seed = seed;
    }
    Ok(Orchestrator::open(Arc::new(registry), Arc::new(exemplars), Arc::new(store), &a.log_dir, cfg)?)
}

fn serve(a: ServeArgs, exec: Exec) -> Result<(), CliError> {
    let orchestrator = Arc::new(build_orchestrator(&a, exec)?);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port)).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(AppState::new(orchestrator)))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

fn run_session(cmd: SessionCommand, text: &mut String) -> Result<(), CliError> {
    match cmd {
        SessionCommand::Submit { server, question, graph } => {
            let view = Client::new(&server.server).submit(&question, &read(&graph)?)?;
            writeln!(text, "session {} ({})", view.id, view.status)?;
            text.push_str(&view.chain_text);
        }
        SessionCommand::Confirm { server, id, chain } => {
            let chain = chain.map(|p| read(&p)).transpose()?;
            let view = Client::new(&server.server).confirm(&id, chain.as_deref())?;
            writeln!(text, "session {} ({})", view.id, view.status)?;
            text.push_str(&view.chain_text);
        }
        SessionCommand::Execute { server, id } => {
            let view = Client::new(&server.server).execute(&id)?;
            writeln!(text, "session {} ({})", view.id, view.status)?;
        }
        SessionCommand::Tail { server, id, since, once } => {
            let client = Client::new(&server.server);
            let mut cursor = since;
            loop {
                let page = client.events(&id, cursor)?;
                for e in &page.events {
                    writeln!(text, "{}\t{}\t{:?}\t{}", e.seq, e.step_index, e.kind, e.payload.replace('\n', " | "))?;
                }
                cursor = page.next_since;
                if once || page.status.is_terminal() {
                    writeln!(text, "status: {}", page.status)?;
                    break;
                }
                std::thread::sleep(std::time::Duration::from_millis(200));
            }
        }
    }
    Ok(())
}
