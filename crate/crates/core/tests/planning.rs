use std::sync::Arc;

use graphchain_core::chain::{ApiCall, ApiChain, END};
use graphchain_core::embed::{Embedder, HashingEmbedder};
use graphchain_core::exemplar::{reference_chains, Exemplar, ExemplarStore};
use graphchain_core::graph::{parse_graph, GraphBuilder};
use graphchain_core::metric::chain_distance;
use graphchain_core::planner::{
    extend, generate_chain, plan_with_provider, propose_candidates, rollout, rollout_losses, score_api, CandidateSet, RefSource, ReferenceSet,
    RolloutConfig,
};
use graphchain_core::registry::{ApiSpec, ExecTag, InputKind, OutputKind, Registry};
use graphchain_core::Exec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(id: &str, desc: &str, input: InputKind) -> ApiSpec {
    ApiSpec { id: id.into(), description: desc.into(), input, output: OutputKind::Graph, exec: ExecTag::External(id.into()) }
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

fn brute_ranking(registry: &Registry, question: &str) -> Vec<(String, f64)> {
    let q = registry.embed(question).unwrap();
    let mut all: Vec<(String, f64)> =
        registry.specs().iter().map(|s| (s.id.clone(), cosine(q.values(), registry.embed(&s.description).unwrap().values()))).collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    all
}

const WORDS: [&str; 24] = [
    "graph", "node", "edge", "count", "rank", "path", "cycle", "tree", "molecule", "atom", "bond", "ring", "cluster", "degree", "weight",
    "flow", "cut", "match", "color", "embed", "label", "motif", "walk", "score",
];

fn random_registry(seed: u64, n: usize) -> Registry {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs = (0..n)
        .map(|i| {
            let words: Vec<&str> = (0..rng.random_range(3..7)).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
            spec(&format!("api_{i:02}"), &format!("{} {i}", words.join(" ")), InputKind::Graph)
        })
        .collect();
    Registry::from_specs(Arc::new(HashingEmbedder::default()), specs).unwrap()
}

#[test]
fn retrieval_matches_brute_force_cosine() {
    let registry = random_registry(31, 50);
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..40 {
        let question: Vec<&str> = (0..4).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
        let question = question.join(" ");
        let got = registry.retrieve_apis(&question, 5).unwrap();
        let want = brute_ranking(&registry, &question);
        for (g, w) in got.iter().zip(&want) {
            assert!((g.score as f64 - w.1).abs() < 1e-4, "{question}: {} {} vs {} {}", g.spec.id, g.score, w.0, w.1);
        }
        let got_ids: Vec<&str> = got.iter().map(|r| r.spec.id.as_str()).collect();
        let want_ids: Vec<&str> = want.iter().take(5).map(|w| w.0.as_str()).collect();
        let strictly_ordered = want.windows(2).take(5).all(|p| p[0].1 - p[1].1 > 1e-5);
        if strictly_ordered {
            assert_eq!(got_ids, want_ids, "{question}");
        }
    }
}

#[test]
fn every_api_finds_itself() {
    let registry = random_registry(33, 50);
    for s in registry.specs() {
        assert_eq!(registry.retrieve_apis(&s.description, 1).unwrap()[0].spec.id, s.id);
    }
}

fn twelve() -> Registry {
    let specs = vec![
        spec("load", "load the graph", InputKind::None),
        spec("components", "count connected components", InputKind::Graph),
        spec("largest", "largest connected component", InputKind::Graph),
        spec("report", "write a report of the answer", InputKind::Graph),
        spec("pagerank", "rank nodes by pagerank", InputKind::Graph),
        spec("triangles", "count triangles", InputKind::Graph),
        spec("diameter", "graph diameter", InputKind::Graph),
        spec("coloring", "greedy vertex coloring", InputKind::Graph),
        spec("bridges", "find bridge edges", InputKind::Graph),
        spec("kcore", "k core decomposition", InputKind::Graph),
        spec("average", "average of numbers", InputKind::Value),
        spec("similar", "similar graph search", InputKind::Graph),
    ];
    Registry::from_specs(Arc::new(HashingEmbedder::default()), specs).unwrap()
}

#[test]
fn proposals_follow_retrieval_rank() {
    let registry = twelve();
    let q = registry.embed("count components").unwrap();
    let want: Vec<String> = brute_ranking(&registry, "count components").into_iter().take(4).map(|p| p.0).collect();
    let empty = propose_candidates(&ApiChain::partial(Vec::new()), &registry, &q, 4).unwrap();
    let expected: Vec<String> = want.iter().filter(|id| registry.get(id).unwrap().input != InputKind::Value).cloned().collect();
    assert_eq!(empty.apis, expected);
    let started = propose_candidates(&ApiChain::partial(vec![ApiCall::new("load")]), &registry, &q, 4).unwrap();
    assert_eq!(started.apis.last().map(String::as_str), Some(END));
    assert_eq!(started.len(), expected.len() + 1);
}

#[test]
fn single_api_registry() {
    let registry = Registry::from_specs(Arc::new(HashingEmbedder::default()), vec![spec("only", "the only api", InputKind::None)]).unwrap();
    let q = registry.embed("anything").unwrap();
    assert_eq!(propose_candidates(&ApiChain::partial(Vec::new()), &registry, &q, 3).unwrap().apis, vec!["only"]);
    assert_eq!(propose_candidates(&ApiChain::partial(vec![ApiCall::new("only")]), &registry, &q, 3).unwrap().apis, vec!["only", END]);
}

fn alphabet_provider(apis: &'static [&'static str]) -> impl Fn(&ApiChain) -> CandidateSet + Sync {
    move |partial: &ApiChain| {
        let mut c: Vec<&str> = apis.to_vec();
        if !partial.is_empty() {
            c.push(END);
        }
        CandidateSet::new(c)
    }
}

/// Best loss over every completion of `prefix` within `max_len` steps.
fn enumerate_best(prefix: &[&str], apis: &[&str], refs: &[ApiChain], max_len: usize) -> f64 {
    let here = refs.iter().map(|r| chain_distance(&ApiChain::from_ids(prefix), r, 1.0)).fold(f64::INFINITY, f64::min);
    if prefix.len() == max_len {
        return here;
    }
    let mut best = here;
    for a in apis {
        let mut next = prefix.to_vec();
        next.push(a);
        best = best.min(enumerate_best(&next, apis, refs, max_len));
    }
    best
}

fn arb_ref() -> impl Strategy<Value = ApiChain> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]), 1..=3).prop_map(|ids| ApiChain::from_ids(&ids))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exhaustive_steps_pick_an_optimal_candidate(reference in arb_ref(), prefix in prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]), 0..2)) {
        const APIS: &[&str] = &["a", "b", "c"];
        let provider = alphabet_provider(APIS);
        let refs = ReferenceSet::new(vec![reference.clone()], RefSource::Dataset).unwrap();
        let cfg = RolloutConfig { max_len: 4, exhaustive: true, ..RolloutConfig::default() };
        let partial = ApiChain::partial(prefix.iter().map(|a| ApiCall::new(*a)).collect());
        let cand = provider(&partial);
        let step = extend(&partial, &cand, &refs, &provider, &cfg, 0);
        let refs_v = vec![reference];
        let value = |api: &str| {
            if api == END {
                chain_distance(&ApiChain::from_ids(&prefix), &refs_v[0], 1.0)
            } else {
                let mut p = prefix.clone();
                p.push(api);
                enumerate_best(&p, APIS, &refs_v, 4)
            }
        };
        let best = cand.apis.iter().map(|a| value(a)).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(value(&step.chosen), best);
        for s in &step.scores {
            prop_assert_eq!(-s.score, value(&s.api));
        }
    }

    #[test]
    fn rollout_sets_are_nested(seed in any::<u64>(), reference in arb_ref()) {
        let provider = alphabet_provider(&["a", "b", "c"]);
        let refs = ReferenceSet::new(vec![reference], RefSource::Dataset).unwrap();
        let cfg = RolloutConfig { max_len: 5, ..RolloutConfig::default() };
        let partial = ApiChain::partial(vec![ApiCall::new("a")]);
        let long = rollout_losses("b", &partial, &refs, &provider, &cfg, seed, 32);
        let short = rollout_losses("b", &partial, &refs, &provider, &cfg, seed, 8);
        prop_assert_eq!(&long[..8], &short[..]);
        let mut prev = f64::INFINITY;
        for r in 1..=32 {
            let m = long[..r].iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(m <= prev);
            prev = m;
        }
    }

    #[test]
    fn rollouts_are_well_formed(seed in any::<u64>(), max_len in 1usize..6) {
        let provider = alphabet_provider(&["a", "b", "c"]);
        let cfg = RolloutConfig { max_len, ..RolloutConfig::default() };
        let partial = ApiChain::partial(Vec::new());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = rollout(&partial, "a", &provider, &cfg, &mut rng);
        prop_assert!(!c.partial);
        prop_assert!(!c.is_empty() && c.len() <= max_len);
        prop_assert_eq!(c.steps[0].api.as_str(), "a");
        prop_assert!(c.steps.iter().all(|s| s.api != END));
        let mut again = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(rollout(&partial, "a", &provider, &cfg, &mut again), c);
    }
}

#[test]
fn forced_termination_and_end_only_providers() {
    let provider = alphabet_provider(&["a", "b"]);
    let cfg = RolloutConfig { max_len: 3, ..RolloutConfig::default() };
    let partial = ApiChain::partial(vec![ApiCall::new("a"), ApiCall::new("b")]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert_eq!(rollout(&partial, "a", &provider, &cfg, &mut rng).api_ids(), vec!["a", "b", "a"]);
    let only_end = |_: &ApiChain| CandidateSet::new([END]);
    assert_eq!(rollout(&ApiChain::partial(Vec::new()), "x", &only_end, &cfg, &mut rng).api_ids(), vec!["x"]);
}

#[test]
fn exhaustive_score_for_a_dead_end() {
    let provider = alphabet_provider(&["load", "report", "filter"]);
    let reference = ApiChain::from_ids(&["load", "report"]);
    let refs = ReferenceSet::new(vec![reference.clone()], RefSource::Dataset).unwrap();
    let cfg = RolloutConfig { max_len: 2, exhaustive: true, ..RolloutConfig::default() };
    let score = score_api("filter", &ApiChain::partial(Vec::new()), &refs, &provider, &cfg, 0);
    let best = enumerate_best(&["filter"], &["load", "report", "filter"], std::slice::from_ref(&reference), 2);
    assert_eq!(score, -best);
    let done = score_api("report", &ApiChain::partial(vec![ApiCall::new("load")]), &refs, &provider, &cfg, 0);
    assert_eq!(done, 0.0);
}

#[test]
fn ties_go_to_the_smaller_id() {
    let provider = |_: &ApiChain| CandidateSet::new(["b", "a"]);
    let refs = ReferenceSet::new(vec![ApiChain::from_ids(&["z"])], RefSource::Dataset).unwrap();
    let cfg = RolloutConfig { max_len: 1, exhaustive: true, ..RolloutConfig::default() };
    let step = extend(&ApiChain::partial(Vec::new()), &CandidateSet::new(["b", "a"]), &refs, &provider, &cfg, 0);
    assert_eq!(step.chosen, "a");
}

#[test]
fn plans_agree_across_execution_modes() {
    let provider = alphabet_provider(&["a", "b", "c", "d"]);
    let refs = ReferenceSet::new(vec![ApiChain::from_ids(&["a", "c", "d"]), ApiChain::from_ids(&["b", "c"])], RefSource::Dataset).unwrap();
    for seed in 0..10 {
        let par = RolloutConfig { seed, r: 8, max_len: 5, exec: Exec::Parallel, ..RolloutConfig::default() };
        let seq = RolloutConfig { exec: Exec::Sequential, ..par };
        assert_eq!(plan_with_provider(&provider, &refs, &par).unwrap(), plan_with_provider(&provider, &refs, &seq).unwrap());
    }
}

#[test]
fn small_registry_recovers_its_reference() {
    let specs = vec![
        spec("load", "load the graph", InputKind::None),
        spec("components", "count connected components", InputKind::Graph),
        spec("report", "write the report", InputKind::Graph),
    ];
    let registry = Registry::from_specs(Arc::new(HashingEmbedder::default()), specs).unwrap();
    let graph = parse_graph("graph g\nnode 0 a\nnode 1 b\nedge 0 1\n").unwrap();
    let reference = ApiChain::from_ids(&["load", "components", "report"]);
    let refs = ReferenceSet::new(vec![reference.clone()], RefSource::Dataset).unwrap();
    let cfg = RolloutConfig { max_len: 4, exhaustive: true, ..RolloutConfig::default() };
    let out = generate_chain("how many components", &graph, &registry, &refs, &cfg).unwrap();
    assert_eq!(out.chain.api_ids(), reference.api_ids());
    assert_eq!(out.trace.last().unwrap().chosen, END);

    let one = ReferenceSet::new(vec![ApiChain::from_ids(&["load"])], RefSource::Dataset).unwrap();
    let cfg = RolloutConfig { max_len: 1, ..cfg };
    assert_eq!(generate_chain("load it", &GraphBuilder::new("e").build(), &registry, &one, &cfg).unwrap().chain.api_ids(), vec!["load"]);
}

#[test]
fn seeded_plans_are_repeatable() {
    let registry = twelve();
    let graph = parse_graph("graph g\nnode 0 a\nnode 1 b\nedge 0 1\n").unwrap();
    let refs = ReferenceSet::new(vec![ApiChain::from_ids(&["load", "components", "report"])], RefSource::Dataset).unwrap();
    let cfg = RolloutConfig { seed: 42, ..RolloutConfig::default() };
    let a = generate_chain("count components", &graph, &registry, &refs, &cfg).unwrap();
    let b = generate_chain("count components", &graph, &registry, &refs, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.chain.len() <= cfg.max_len);
    a.chain.validate().unwrap();
}

#[test]
fn exemplar_lookup_matches_brute_force() {
    let embedder: Arc<dyn Embedder> = Arc::new(HashingEmbedder::default());
    let store = ExemplarStore::builtin(&embedder).unwrap();
    for probe in ["how many connected components", "who is influential", "is the molecule toxic", "remove noisy edges", "shortest path"] {
        let q = embedder.embed(probe).unwrap();
        let mut ranked: Vec<(f64, &Exemplar)> =
            store.exemplars().iter().map(|e| (cosine(q.values(), embedder.embed(&e.question).unwrap().values()), e)).collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
        let got = store.nearest(&q, 1).unwrap()[0];
        assert!((cosine(q.values(), embedder.embed(&got.question).unwrap().values()) - ranked[0].0).abs() < 1e-5, "{probe}");
    }
    for e in store.exemplars() {
        let q = embedder.embed(&e.question).unwrap();
        assert_eq!(store.nearest(&q, 1).unwrap()[0].question, e.question);
    }
    let q = embedder.embed("anything").unwrap();
    assert_eq!(reference_chains(&q, &store, 1000).unwrap().chains().len(), store.len());
    assert!(reference_chains(&q, &store, 2).unwrap().sources().iter().all(|s| *s == RefSource::RetrievedExemplar));
}

#[test]
fn single_exemplar_store_always_answers_with_it() {
    let embedder: Arc<dyn Embedder> = Arc::new(HashingEmbedder::default());
    let store = ExemplarStore::from_text(&embedder, "Q\tcount nodes\tload_graph; node_count\n").unwrap();
    let q = embedder.embed("what molecules are toxic").unwrap();
    assert_eq!(reference_chains(&q, &store, 3).unwrap().chains()[0].api_ids(), vec!["load_graph", "node_count"]);
}
