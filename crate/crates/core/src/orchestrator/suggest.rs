use crate::graph::Graph;
use crate::tools::classify_graph;

const GENERIC: &[&str] = &["What type of graph is this?", "How many nodes and edges does this graph have?", "Summarize this graph."];

const MOLECULE: &[&str] = &[
    "What molecules are similar to this graph?",
    "Is this molecule toxic?",
    "What are the degree statistics of this molecule?",
];

const SOCIAL: &[&str] = &[
    "Is this social network connected?",
    "Which communities exist in this network?",
    "Who are the most influential users?",
    "Are there suspicious edges in this graph?",
];

/// Template questions keyed off the graph's type.
pub fn suggest_questions(g: &Graph) -> Vec<String> {
    let specific: &[&str] = match classify_graph(g) {
        "molecule" => MOLECULE,
        "social" => SOCIAL,
        _ => &[],
    };
    specific.iter().chain(GENERIC).map(|s| s.to_string()).collect()
}
