//! Built-in executable graph APIs.
//!
//! Graph-consuming tools read the `graph` argument when bound (a prior step
//! output or a store graph name); otherwise they use the most recent graph
//! produced by an earlier step, falling back to the user's graph.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::chain::{ApiCall, Binding};
use crate::ged::{similarity, SimilarityMethod};
use crate::graph::{edge_key, parse_graph, Graph, GraphBuilder, GraphError, NodeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToolError {
    #[error("unknown api `{0}`")]
    UnknownApi(String),
    #[error("api `{0}` is an external stub and cannot be executed locally")]
    NotExecutable(String),
    #[error("argument `{arg}`: {reason}")]
    Unresolvable { arg: String, reason: String },
    #[error("argument `{arg}`: expected {expected}, found {found}")]
    TypeMismatch { arg: String, expected: String, found: String },
    #[error("{0}")]
    Failed(String),
}

/// Output of one executed step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "lowercase")]
pub enum ApiResult {
    Value(Value),
    Graph(Graph),
    Report(String),
}

impl ApiResult {
    pub fn kind(&self) -> &'static str {
        match self {
            ApiResult::Value(_) => "value",
            ApiResult::Graph(_) => "graph",
            ApiResult::Report(_) => "report",
        }
    }

    /// One-line human-readable form used in step events and reports.
    pub fn render(&self) -> String {
        match self {
            ApiResult::Value(v) => v.to_string(),
            ApiResult::Graph(g) => format!("graph {} ({} nodes, {} edges)", g.name(), g.node_count(), g.edge_count()),
            ApiResult::Report(t) => t.clone(),
        }
    }
}

/// Graphs available to similarity search, sorted by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GraphStore {
    graphs: Vec<Graph>,
}

impl GraphStore {
    pub fn new(mut graphs: Vec<Graph>) -> Self {
        graphs.sort_by(|a, b| a.name().cmp(b.name()));
        Self { graphs }
    }

    /// Loads every file in `dir` as a graph document.
    pub fn load_dir(dir: &Path) -> Result<Self, StoreError> {
        let mut graphs = Vec::new();
        let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.path());
        for entry in entries {
            let path = entry.path();
            if !path.is_file() {
                continue;
            }
            let text = std::fs::read_to_string(&path)?;
            let g = parse_graph(&text).map_err(|source| StoreError::Graph { path: path.display().to_string(), source })?;
            graphs.push(g);
        }
        Ok(Self::new(graphs))
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn get(&self, name: &str) -> Option<&Graph> {
        self.graphs.iter().find(|g| g.name() == name)
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("reading graph store: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}: {source}")]
    Graph { path: String, source: GraphError },
}

/// Everything a tool may read while executing one step.
pub struct ExecContext<'a> {
    pub graph: &'a Graph,
    pub store: &'a GraphStore,
    /// Calls and outputs of the steps executed so far.
    pub steps: &'a [ApiCall],
    pub outputs: &'a [ApiResult],
}

impl ExecContext<'_> {
    fn output(&self, arg: &str, k: usize) -> Result<&ApiResult, ToolError> {
        self.outputs.get(k).ok_or_else(|| ToolError::Unresolvable {
            arg: arg.to_string(),
            reason: format!("step {k} has not produced an output"),
        })
    }

    fn graph_input(&self, call: &ApiCall) -> Result<Graph, ToolError> {
        match call.args.get("graph") {
            Some(Binding::StepOutput(k)) => match self.output("graph", *k)? {
                ApiResult::Graph(g) => Ok(g.clone()),
                other => Err(ToolError::TypeMismatch { arg: "graph".into(), expected: "graph".into(), found: other.kind().into() }),
            },
            Some(Binding::Literal(name)) => self
                .store
                .get(name)
                .cloned()
                .ok_or_else(|| ToolError::Unresolvable { arg: "graph".into(), reason: format!("no stored graph named `{name}`") }),
            None => Ok(self
                .outputs
                .iter()
                .rev()
                .find_map(|o| match o {
                    ApiResult::Graph(g) => Some(g.clone()),
                    _ => None,
                })
                .unwrap_or_else(|| self.graph.clone())),
        }
    }

    fn literal<'c>(&self, call: &'c ApiCall, arg: &str) -> Result<Option<&'c str>, ToolError> {
        match call.args.get(arg) {
            None => Ok(None),
            Some(Binding::Literal(s)) => Ok(Some(s)),
            Some(Binding::StepOutput(_)) => Err(ToolError::TypeMismatch { arg: arg.into(), expected: "literal".into(), found: "step output".into() }),
        }
    }

    fn required<'c>(&self, call: &'c ApiCall, arg: &str) -> Result<&'c str, ToolError> {
        self.literal(call, arg)?
            .ok_or_else(|| ToolError::Unresolvable { arg: arg.into(), reason: "required argument is not bound".into() })
    }
}

/// Names of the built-in tools.
pub const BUILTINS: &[&str] = &[
    "load_graph",
    "node_count",
    "edge_count",
    "degree_stats",
    "connected_components",
    "shortest_path",
    "classify_graph",
    "similarity_search",
    "detect_suspect_edges",
    "edit_edges",
    "report",
];

pub fn run_builtin(tool: &str, call: &ApiCall, ctx: &ExecContext<'_>) -> Result<ApiResult, ToolError> {
    match tool {
        "load_graph" => match ctx.literal(call, "name")? {
            Some(name) => ctx
                .store
                .get(name)
                .cloned()
                .map(ApiResult::Graph)
                .ok_or_else(|| ToolError::Unresolvable { arg: "name".into(), reason: format!("no stored graph named `{name}`") }),
            None => Ok(ApiResult::Graph(ctx.graph.clone())),
        },
        "node_count" => Ok(ApiResult::Value(json!(ctx.graph_input(call)?.node_count()))),
        "edge_count" => Ok(ApiResult::Value(json!(ctx.graph_input(call)?.edge_count()))),
        "degree_stats" => Ok(ApiResult::Value(degree_stats(&ctx.graph_input(call)?))),
        "connected_components" => {
            let comps = connected_components(&ctx.graph_input(call)?);
            Ok(ApiResult::Value(json!({ "count": comps.len(), "components": comps })))
        }
        "shortest_path" => {
            let g = ctx.graph_input(call)?;
            let from = resolve_node(&g, "from", ctx.required(call, "from")?)?;
            let to = resolve_node(&g, "to", ctx.required(call, "to")?)?;
            let hops = g.bfs_distances(from).expect("resolved node").get(&to).copied();
            Ok(ApiResult::Value(json!({ "from": from, "to": to, "hops": hops })))
        }
        "classify_graph" => Ok(ApiResult::Value(json!(classify_graph(&ctx.graph_input(call)?)))),
        "similarity_search" => {
            let g = ctx.graph_input(call)?;
            let k = match ctx.literal(call, "k")? {
                Some(s) => s.parse::<usize>().map_err(|_| ToolError::TypeMismatch { arg: "k".into(), expected: "integer".into(), found: s.into() })?,
                None => 3,
            };
            let hits: Vec<Value> = similarity_search(&g, ctx.store, k)
                .into_iter()
                .map(|h| json!({ "name": h.name, "score": h.score, "method": h.method }))
                .collect();
            Ok(ApiResult::Value(json!({ "results": hits })))
        }
        "detect_suspect_edges" => {
            let edges: Vec<[NodeId; 2]> = detect_suspect_edges(&ctx.graph_input(call)?).into_iter().map(|(a, b)| [a, b]).collect();
            Ok(ApiResult::Value(json!({ "edges": edges })))
        }
        "edit_edges" => {
            let g = ctx.graph_input(call)?;
            let remove = edge_list_arg(call, ctx, "remove")?;
            let add = edge_list_arg(call, ctx, "add")?;
            edit_edges(&g, &remove, &add).map(ApiResult::Graph)
        }
        "report" => {
            let title = ctx.literal(call, "title")?.unwrap_or("Report");
            Ok(ApiResult::Report(render_report(title, ctx.steps, ctx.outputs)))
        }
        other => Err(ToolError::UnknownApi(other.to_string())),
    }
}

pub fn render_report(title: &str, steps: &[ApiCall], outputs: &[ApiResult]) -> String {
    let mut lines = vec![title.replace('_', " ")];
    for (i, (call, out)) in steps.iter().zip(outputs).enumerate() {
        if matches!(out, ApiResult::Report(_)) {
            continue;
        }
        lines.push(format!("step {i} {}: {}", call.api, out.render()));
    }
    lines.join("\n")
}

fn resolve_node(g: &Graph, arg: &str, key: &str) -> Result<NodeId, ToolError> {
    let by_label = g.sorted_ids().into_iter().find(|&id| g.label(id) == Some(key));
    by_label
        .or_else(|| key.parse::<NodeId>().ok().filter(|&id| g.contains(id)))
        .ok_or_else(|| ToolError::Unresolvable { arg: arg.into(), reason: format!("no node labeled or numbered `{key}`") })
}

fn degree_stats(g: &Graph) -> Value {
    if g.is_empty() {
        return json!({ "min": 0, "mean": 0.0, "max": 0 });
    }
    let degs: Vec<usize> = g.node_ids().map(|id| g.degree(id)).collect();
    let mean = degs.iter().sum::<usize>() as f64 / degs.len() as f64;
    json!({ "min": degs.iter().min(), "mean": mean, "max": degs.iter().max() })
}

/// Components as ascending id lists, ordered by smallest member.
pub fn connected_components(g: &Graph) -> Vec<Vec<NodeId>> {
    let mut seen = BTreeSet::new();
    let mut comps = Vec::new();
    for id in g.sorted_ids() {
        if seen.contains(&id) {
            continue;
        }
        let mut comp: Vec<NodeId> = g.bfs_distances(id).expect("known id").into_keys().collect();
        comp.sort_unstable();
        seen.extend(comp.iter().copied());
        comps.push(comp);
    }
    comps
}

const ELEMENTS: &[&str] = &[
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca", "Sc", "Ti", "V",
    "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru",
    "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn",
    "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh",
    "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
    // aromatic atoms in SMILES notation
    "b", "c", "n", "o", "p", "s",
];

pub fn is_chemical_symbol(label: &str) -> bool {
    ELEMENTS.contains(&label)
}

/// `molecule` when every label is a chemical symbol and no atom has more
/// than four bonds, `social` otherwise; `unknown` for an empty graph.
pub fn classify_graph(g: &Graph) -> &'static str {
    if g.is_empty() {
        "unknown"
    } else if g.nodes().iter().all(|n| is_chemical_symbol(&n.label)) && g.max_degree() <= 4 {
        "molecule"
    } else {
        "social"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityHit {
    pub name: String,
    pub score: f64,
    pub method: SimilarityMethod,
}

/// Top-`k` store graphs by similarity, score descending then name.
pub fn similarity_search(g: &Graph, store: &GraphStore, k: usize) -> Vec<SimilarityHit> {
    let mut hits: Vec<SimilarityHit> = store
        .graphs()
        .iter()
        .map(|s| {
            let sim = similarity(g, s);
            SimilarityHit { name: s.name().to_string(), score: sim.score, method: sim.method }
        })
        .collect();
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.name.cmp(&b.name)));
    hits.truncate(k);
    hits
}

/// Edges whose endpoints stay within two hops of each other without the
/// edge, i.e. edges closing a triangle.
pub fn detect_suspect_edges(g: &Graph) -> Vec<(NodeId, NodeId)> {
    let mut out: Vec<(NodeId, NodeId)> = g
        .edges()
        .iter()
        .filter(|e| {
            let nb = g.neighbors(e.b);
            g.neighbors(e.a).iter().any(|x| nb.binary_search(x).is_ok())
        })
        .map(|e| e.key())
        .collect();
    out.sort_unstable();
    out
}

fn parse_edge_list(arg: &str, text: &str) -> Result<Vec<(NodeId, NodeId)>, ToolError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let (a, b) = pair.split_once('-').ok_or_else(|| ToolError::Unresolvable { arg: arg.into(), reason: format!("expected `a-b`, found `{pair}`") })?;
            let id = |s: &str| s.trim().parse::<NodeId>().map_err(|_| ToolError::Unresolvable { arg: arg.into(), reason: format!("bad node id `{s}`") });
            Ok((id(a)?, id(b)?))
        })
        .collect()
}

fn edge_list_arg(call: &ApiCall, ctx: &ExecContext<'_>, arg: &str) -> Result<Vec<(NodeId, NodeId)>, ToolError> {
    match call.args.get(arg) {
        None => Ok(Vec::new()),
        Some(Binding::Literal(s)) => parse_edge_list(arg, s),
        Some(Binding::StepOutput(k)) => {
            let mismatch = |found: &str| ToolError::TypeMismatch { arg: arg.into(), expected: "edge list".into(), found: found.into() };
            let ApiResult::Value(v) = ctx.output(arg, *k)? else {
                return Err(mismatch(ctx.outputs[*k].kind()));
            };
            let edges = v.get("edges").and_then(Value::as_array).ok_or_else(|| mismatch("value without `edges`"))?;
            edges
                .iter()
                .map(|e| match e.as_array().map(|p| (p.first().and_then(Value::as_u64), p.get(1).and_then(Value::as_u64))) {
                    Some((Some(a), Some(b))) => Ok((a, b)),
                    _ => Err(mismatch("malformed edge")),
                })
                .collect()
        }
    }
}

fn edit_edges(g: &Graph, remove: &[(NodeId, NodeId)], add: &[(NodeId, NodeId)]) -> Result<Graph, ToolError> {
    let drop: BTreeSet<(NodeId, NodeId)> = remove.iter().map(|&(a, b)| edge_key(a, b)).collect();
    for &(a, b) in &drop {
        if !g.has_edge(a, b) {
            return Err(ToolError::Failed(format!("cannot remove missing edge {a}-{b}")));
        }
    }
    let mut builder = GraphBuilder::new(g.name());
    for n in g.nodes() {
        builder.add_node(n.id, n.label.clone()).expect("unique ids");
    }
    for e in g.edges().iter().filter(|e| !drop.contains(&e.key())) {
        builder.add_edge(e.a, e.b, e.label.clone()).expect("valid edge");
    }
    for &(a, b) in add {
        builder.add_edge(a, b, None).map_err(|e| ToolError::Failed(format!("cannot add edge {a}-{b}: {e}")))?;
    }
    Ok(builder.build())
}

/// Label histogram, used for graph previews.
pub fn label_summary(g: &Graph) -> Vec<(String, usize)> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for n in g.nodes() {
        *counts.entry(n.label.as_str()).or_default() += 1;
    }
    let mut v: Vec<(String, usize)> = counts.into_iter().map(|(l, c)| (l.to_string(), c)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_abc() -> Graph {
        parse_graph("graph p\nnode 0 a\nnode 1 b\nnode 2 c\nedge 0 1\nedge 1 2").unwrap()
    }

    fn run(tool: &str, call: ApiCall, g: &Graph, store: &GraphStore, outputs: &[ApiResult]) -> Result<ApiResult, ToolError> {
        let steps: Vec<ApiCall> = outputs.iter().map(|_| ApiCall::new("x")).collect();
        run_builtin(tool, &call, &ExecContext { graph: g, store, steps: &steps, outputs })
    }

    #[test]
    fn components_and_paths() {
        let g = path_abc();
        let store = GraphStore::default();
        let out = run("connected_components", ApiCall::new("connected_components"), &g, &store, &[]).unwrap();
        assert_eq!(out, ApiResult::Value(json!({"count": 1, "components": [[0, 1, 2]]})));
        let call = ApiCall::new("shortest_path").with_arg("from", Binding::Literal("a".into())).with_arg("to", Binding::Literal("c".into()));
        let out = run("shortest_path", call, &g, &store, &[]).unwrap();
        assert_eq!(out, ApiResult::Value(json!({"from": 0, "to": 2, "hops": 2})));
        let missing = run("shortest_path", ApiCall::new("shortest_path"), &g, &store, &[]);
        assert!(matches!(missing, Err(ToolError::Unresolvable { .. })));
    }

    #[test]
    fn similarity_prefers_same_shape() {
        let tri = parse_graph("graph q\nnode 0 C\nnode 1 C\nnode 2 O\nedge 0 1\nedge 1 2\nedge 0 2").unwrap();
        let store_tri = parse_graph("graph tri_cco\nnode 0 C\nnode 1 O\nnode 2 C\nedge 0 1\nedge 1 2\nedge 0 2").unwrap();
        let store_path = parse_graph("graph path_ccc\nnode 0 C\nnode 1 C\nnode 2 C\nedge 0 1\nedge 1 2").unwrap();
        let store = GraphStore::new(vec![store_path, store_tri]);
        let hits = similarity_search(&tri, &store, 2);
        assert_eq!(hits[0].name, "tri_cco");
        assert_eq!(hits[0].score, 1.0);
    }

    #[test]
    fn suspect_edges_then_edit() {
        let g = parse_graph("graph s\nnode 0 x\nnode 1 y\nnode 2 z\nnode 3 w\nedge 0 1\nedge 1 2\nedge 0 2\nedge 2 3").unwrap();
        let store = GraphStore::default();
        let detected = run("detect_suspect_edges", ApiCall::new("d"), &g, &store, &[]).unwrap();
        assert_eq!(detected, ApiResult::Value(json!({"edges": [[0, 1], [0, 2], [1, 2]]})));
        let call = ApiCall::new("edit_edges").with_arg("remove", Binding::StepOutput(0)).with_arg("add", Binding::Literal("1-3".into()));
        let ApiResult::Graph(edited) = run("edit_edges", call, &g, &store, &[detected]).unwrap() else { panic!() };
        assert_eq!(edited.edge_count(), 2);
        assert!(edited.has_edge(1, 3) && edited.has_edge(2, 3));
    }

    #[test]
    fn type_mismatch_on_graph_argument() {
        let g = path_abc();
        let store = GraphStore::default();
        let call = ApiCall::new("node_count").with_arg("graph", Binding::StepOutput(0));
        let err = run("node_count", call, &g, &store, &[ApiResult::Value(json!(3))]).unwrap_err();
        assert!(matches!(err, ToolError::TypeMismatch { .. }));
    }

    #[test]
    fn classification() {
        assert_eq!(classify_graph(&parse_graph("graph m\nnode 0 C\nnode 1 O\nedge 0 1").unwrap()), "molecule");
        assert_eq!(classify_graph(&path_abc()), "social");
        assert_eq!(classify_graph(&Graph::empty("e")), "unknown");
    }

    #[test]
    fn report_lists_prior_outputs() {
        let steps = vec![ApiCall::new("node_count"), ApiCall::new("edge_count")];
        let text = render_report("Summary", &steps, &[ApiResult::Value(json!(3)), ApiResult::Value(json!(2))]);
        assert_eq!(text, "Summary\nstep 0 node_count: 3\nstep 1 edge_count: 2");
    }
}
