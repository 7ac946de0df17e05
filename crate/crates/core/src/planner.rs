//! Chain generation by search with random rollouts.
//!
//! Starting from an empty partial chain, every candidate API `a` is scored
//! by completing `partial + [a]` into full chains (random rollouts, or full
//! enumeration in exhaustive mode) and taking the best loss of any
//! completion against any reference chain. The best-scoring candidate is
//! appended and the loop repeats until the end sentinel wins or the length
//! cap is reached.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ApiCall, ApiChain, Binding, END};
use crate::embed::Embedding;
use crate::exec::{self, Exec};
use crate::graph::Graph;
use crate::metric::{chain_distance, DEFAULT_ALPHA, INDEL_COST};
use crate::registry::{InputKind, OutputKind, Registry, RegistryError};

/// Exhaustive scoring falls back to rollouts when a candidate has more
/// completions than this.
pub const EXH_CAP: usize = 10_000;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("no candidate apis for the first step")]
    NoCandidates,
    #[error("reference set is empty")]
    NoReferences,
    #[error("reference chain {0} is partial or empty")]
    PartialReference(usize),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    #[default]
    Min,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    /// Rollouts per candidate.
    pub r: usize,
    /// Candidates retrieved per step.
    pub k: usize,
    pub max_len: usize,
    pub alpha: f64,
    pub seed: u64,
    pub exhaustive: bool,
    #[serde(default)]
    pub aggregate: Aggregate,
    /// Also offer every api used by a reference chain, ranked among the
    /// retrieved ones by the same score.
    #[serde(default)]
    pub reference_apis: bool,
    #[serde(default)]
    pub exec: Exec,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self { r: 16, k: 8, max_len: 8, alpha: DEFAULT_ALPHA, seed: 0, exhaustive: false, aggregate: Aggregate::Min, reference_apis: false, exec: Exec::default() }
    }
}

/// Ordered, duplicate-free candidate api ids; [`END`] is always last when
/// present.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub apis: Vec<String>,
}

impl CandidateSet {
    pub fn new<S: Into<String>>(apis: impl IntoIterator<Item = S>) -> Self {
        let mut out: Vec<String> = Vec::new();
        let mut end = false;
        for a in apis {
            let a = a.into();
            if a == END {
                end = true;
            } else if !out.contains(&a) {
                out.push(a);
            }
        }
        if end {
            out.push(END.to_string());
        }
        Self { apis: out }
    }

    pub fn len(&self) -> usize {
        self.apis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.apis.is_empty()
    }

    pub fn contains(&self, api: &str) -> bool {
        self.apis.iter().any(|a| a == api)
    }
}

/// Supplies the candidate set for a partial chain.
pub trait CandidateProvider: Sync {
    fn candidates(&self, partial: &ApiChain) -> CandidateSet;
}

impl<F> CandidateProvider for F
where
    F: Fn(&ApiChain) -> CandidateSet + Sync,
{
    fn candidates(&self, partial: &ApiChain) -> CandidateSet {
        self(partial)
    }
}

/// Registry-backed candidates: the top-`k` apis for the question, filtered
/// by whether their input can be supplied, plus [`END`] once the chain is
/// non-empty. Retrieval runs once; filtering runs per call.
pub struct RegistryCandidates<'r> {
    registry: &'r Registry,
    ranked: Vec<(String, InputKind, OutputKind)>,
    user_graph: bool,
}

impl<'r> RegistryCandidates<'r> {
    pub fn new(registry: &'r Registry, question: &Embedding, k: usize, user_graph: bool) -> Result<Self, RegistryError> {
        Self::with_extra(registry, question, k, user_graph, &[])
    }

    /// As [`Self::new`], with `extra` api ids admitted besides the top `k`.
    /// Everything stays in retrieval order.
    pub fn with_extra(registry: &'r Registry, question: &Embedding, k: usize, user_graph: bool, extra: &[&str]) -> Result<Self, RegistryError> {
        let top = registry.retrieve_by_embedding(question, k.max(1))?;
        let mut ranked: Vec<(String, InputKind, OutputKind)> = top.into_iter().map(|r| (r.spec.id, r.spec.input, r.spec.output)).collect();
        let missing: Vec<&str> = extra.iter().copied().filter(|id| registry.get(id).is_some() && !ranked.iter().any(|(r, _, _)| r == id)).collect();
        if !missing.is_empty() {
            let all = registry.retrieve_by_embedding(question, registry.len())?;
            let admitted: Vec<String> = ranked.iter().map(|(id, _, _)| id.clone()).chain(missing.iter().map(|s| s.to_string())).collect();
            ranked = all.into_iter().filter(|r| admitted.contains(&r.spec.id)).map(|r| (r.spec.id, r.spec.input, r.spec.output)).collect();
        }
        Ok(Self { registry, ranked, user_graph })
    }
}

impl CandidateProvider for RegistryCandidates<'_> {
    fn candidates(&self, partial: &ApiChain) -> CandidateSet {
        let produced = |kind: OutputKind| partial.steps.iter().any(|s| self.registry.get(&s.api).is_some_and(|spec| spec.output == kind));
        let graph_available = self.user_graph || produced(OutputKind::Graph);
        let value_available = produced(OutputKind::Value);
        let usable = |input: InputKind| match input {
            InputKind::None => true,
            InputKind::Graph | InputKind::GraphPair => graph_available,
            InputKind::Value => value_available,
        };
        let apis = self.ranked.iter().filter(|(_, input, _)| usable(*input)).map(|(id, _, _)| id.clone());
        let end = (!partial.is_empty()).then(|| END.to_string());
        CandidateSet::new(apis.chain(end))
    }
}

/// [`RegistryCandidates`] for a question embedding.
pub fn propose_candidates(partial: &ApiChain, registry: &Registry, question: &Embedding, k: usize) -> Result<CandidateSet, RegistryError> {
    Ok(RegistryCandidates::new(registry, question, k, true)?.candidates(partial))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefSource {
    Dataset,
    RetrievedExemplar,
}

/// Non-empty list of full reference chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    chains: Vec<ApiChain>,
    sources: Vec<RefSource>,
}

impl ReferenceSet {
    pub fn new(chains: Vec<ApiChain>, source: RefSource) -> Result<Self, PlanError> {
        if chains.is_empty() {
            return Err(PlanError::NoReferences);
        }
        if let Some(i) = chains.iter().position(|c| c.partial || c.is_empty()) {
            return Err(PlanError::PartialReference(i));
        }
        let sources = vec![source; chains.len()];
        Ok(Self { chains, sources })
    }

    pub fn chains(&self) -> &[ApiChain] {
        &self.chains
    }

    pub fn sources(&self) -> &[RefSource] {
        &self.sources
    }

    /// Smallest optimal-matching loss of `chain` against any reference.
    pub fn best_loss(&self, chain: &ApiChain, alpha: f64) -> f64 {
        self.chains.iter().map(|r| chain_distance(chain, r, alpha)).fold(f64::INFINITY, f64::min)
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Deterministic substream key for `(seed, parts...)`.
pub fn stream_key(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// Extends `partial + [api]` to a full chain by uniform draws from the
/// successive candidate sets, stopping at [`END`] or `max_len`.
pub fn rollout<R: Rng + ?Sized>(
    partial: &ApiChain,
    api: &str,
    provider: &dyn CandidateProvider,
    cfg: &RolloutConfig,
    rng: &mut R,
) -> ApiChain {
    let mut chain = ApiChain::partial(partial.steps.clone());
    if api != END {
        chain.push(ApiCall::new(api));
        while chain.len() < cfg.max_len {
            let cand = provider.candidates(&chain);
            if cand.is_empty() {
                break;
            }
            let pick = &cand.apis[rng.random_range(0..cand.len())];
            if pick == END {
                break;
            }
            chain.push(ApiCall::new(pick.as_str()));
        }
    }
    chain.partial = false;
    chain
}

/// Number of full completions of `chain`, or `None` past `cap`.
fn count_completions(chain: &mut ApiChain, provider: &dyn CandidateProvider, max_len: usize, cap: usize) -> Option<usize> {
    if chain.len() >= max_len {
        return Some(1);
    }
    let cand = provider.candidates(chain);
    let mut total = 0usize;
    if cand.is_empty() {
        return Some(1);
    }
    for api in &cand.apis {
        if api == END {
            total += 1;
        } else {
            chain.push(ApiCall::new(api.as_str()));
            let sub = count_completions(chain, provider, max_len, cap.saturating_sub(total));
            chain.steps.pop();
            total += sub?;
        }
        if total > cap {
            return None;
        }
    }
    Some(total)
}

/// Smallest loss any extension of `chain` can reach: each step beyond a
/// reference's length is unmatched.
fn extension_bound(chain: &ApiChain, refs: &ReferenceSet, alpha: f64) -> f64 {
    let longest = refs.chains().iter().map(ApiChain::len).max().unwrap_or(0);
    chain.len().saturating_sub(longest) as f64 * (INDEL_COST + alpha)
}

fn best_completion(chain: &mut ApiChain, provider: &dyn CandidateProvider, refs: &ReferenceSet, cfg: &RolloutConfig, best: &mut f64) {
    if extension_bound(chain, refs, cfg.alpha) >= *best {
        return;
    }
    let finish = |chain: &ApiChain, best: &mut f64| *best = best.min(refs.best_loss(&ApiChain::full(chain.steps.clone()), cfg.alpha));
    let cand = if chain.len() >= cfg.max_len { CandidateSet::default() } else { provider.candidates(chain) };
    if cand.is_empty() {
        finish(chain, best);
        return;
    }
    for api in &cand.apis {
        if api == END {
            finish(chain, best);
        } else {
            chain.push(ApiCall::new(api.as_str()));
            best_completion(chain, provider, refs, cfg, best);
            chain.steps.pop();
        }
    }
}

/// Negated loss, with a zero loss scoring `+0.0`.
fn score_of(loss: f64) -> f64 {
    if loss == 0.0 {
        0.0
    } else {
        -loss
    }
}

/// Score of appending `api` to `partial`: the negated best (or mean, per
/// `cfg.aggregate`) loss over its completions. `stream` seeds the rollouts;
/// rollout `i` uses its own substream so rollout sets are nested in `r`.
pub fn score_api(
    api: &str,
    partial: &ApiChain,
    refs: &ReferenceSet,
    provider: &dyn CandidateProvider,
    cfg: &RolloutConfig,
    stream: u64,
) -> f64 {
    let mut base = ApiChain::partial(partial.steps.clone());
    if api == END {
        return score_of(refs.best_loss(&ApiChain::full(base.steps), cfg.alpha));
    }
    base.push(ApiCall::new(api));
    if cfg.exhaustive && count_completions(&mut base.clone(), provider, cfg.max_len, EXH_CAP).is_some() {
        let mut best = f64::INFINITY;
        best_completion(&mut base, provider, refs, cfg, &mut best);
        return score_of(best);
    }
    let losses = rollout_losses(api, partial, refs, provider, cfg, stream, cfg.r.max(1));
    let agg = match cfg.aggregate {
        Aggregate::Min => losses.iter().copied().fold(f64::INFINITY, f64::min),
        Aggregate::Mean => losses.iter().sum::<f64>() / losses.len() as f64,
    };
    score_of(agg)
}

/// Losses of the first `r` rollouts of `partial + [api]` on `stream`.
pub fn rollout_losses(
    api: &str,
    partial: &ApiChain,
    refs: &ReferenceSet,
    provider: &dyn CandidateProvider,
    cfg: &RolloutConfig,
    stream: u64,
    r: usize,
) -> Vec<f64> {
    exec::map_range(cfg.exec, r, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_key(stream, &[i as u64]));
        let chain = rollout(partial, api, provider, cfg, &mut rng);
        refs.best_loss(&chain, cfg.alpha)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub api: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step: usize,
    pub scores: Vec<CandidateScore>,
    pub chosen: String,
}

/// Picks the best-scoring candidate. Ties go to the smallest api id, with
/// [`END`] after every real api.
pub fn choose(scores: &[CandidateScore]) -> Option<&CandidateScore> {
    let key = |c: &CandidateScore| (c.api == END, c.api.clone());
    scores.iter().reduce(|best, c| match c.score.total_cmp(&best.score) {
        std::cmp::Ordering::Greater => c,
        std::cmp::Ordering::Equal if key(c) < key(best) => c,
        _ => best,
    })
}

/// Scores every candidate (in parallel per `cfg.exec`) and returns the
/// trace for step `step`. The caller appends `trace.chosen` unless it is
/// [`END`].
pub fn extend(
    partial: &ApiChain,
    cand: &CandidateSet,
    refs: &ReferenceSet,
    provider: &dyn CandidateProvider,
    cfg: &RolloutConfig,
    step: usize,
) -> StepTrace {
    let ranked: Vec<(usize, &String)> = cand.apis.iter().enumerate().collect();
    let inner = RolloutConfig { exec: Exec::Sequential, ..*cfg };
    let scores: Vec<CandidateScore> = exec::map_slice(cfg.exec, &ranked, |&(rank, api)| {
        let stream = stream_key(cfg.seed, &[step as u64, rank as u64]);
        CandidateScore { api: api.clone(), score: score_api(api, partial, refs, provider, &inner, stream) }
    });
    let chosen = choose(&scores).map(|c| c.api.clone()).unwrap_or_else(|| END.to_string());
    StepTrace { step, scores, chosen }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub chain: ApiChain,
    pub trace: Vec<StepTrace>,
}

/// Runs the extend loop with any candidate provider.
pub fn plan_with_provider(provider: &dyn CandidateProvider, refs: &ReferenceSet, cfg: &RolloutConfig) -> Result<PlanOutcome, PlanError> {
    let mut chain = ApiChain::partial(Vec::new());
    let mut trace = Vec::new();
    while chain.len() < cfg.max_len {
        let cand = provider.candidates(&chain);
        if cand.is_empty() {
            if chain.is_empty() {
                return Err(PlanError::NoCandidates);
            }
            break;
        }
        let step = extend(&chain, &cand, refs, provider, cfg, trace.len());
        let done = step.chosen == END;
        if !done {
            chain.push(ApiCall::new(step.chosen.as_str()));
        }
        trace.push(step);
        if done {
            break;
        }
    }
    if chain.is_empty() {
        return Err(PlanError::NoCandidates);
    }
    chain.partial = false;
    inherit_bindings(&mut chain, refs);
    Ok(PlanOutcome { chain, trace })
}

/// Plans a chain for `question` over `graph` against `refs`.
pub fn generate_chain(question: &str, graph: &Graph, registry: &Registry, refs: &ReferenceSet, cfg: &RolloutConfig) -> Result<PlanOutcome, PlanError> {
    let q = registry.embed(question)?;
    let mut extra: Vec<&str> = Vec::new();
    if cfg.reference_apis {
        for api in refs.chains().iter().flat_map(|c| c.steps.iter().map(|s| s.api.as_str())) {
            if !extra.contains(&api) {
                extra.push(api);
            }
        }
    }
    let provider = RegistryCandidates::with_extra(registry, &q, cfg.k, !graph.is_empty(), &extra)?;
    plan_with_provider(&provider, refs, cfg)
}

/// Copies argument bindings from the first reference step with the same api
/// id. Step references are remapped to the latest earlier generated step
/// with the referenced api, and dropped when there is none.
fn inherit_bindings(chain: &mut ApiChain, refs: &ReferenceSet) {
    for i in 0..chain.len() {
        let api = chain.steps[i].api.clone();
        let Some((r, j)) = refs
            .chains()
            .iter()
            .find_map(|r| r.steps.iter().position(|s| s.api == api).map(|j| (r, j)))
        else {
            continue;
        };
        let mut args = std::collections::BTreeMap::new();
        for (name, b) in &r.steps[j].args {
            match b {
                Binding::Literal(_) => {
                    args.insert(name.clone(), b.clone());
                }
                Binding::StepOutput(k) => {
                    let target = &r.steps[*k].api;
                    if let Some(p) = (0..i).rev().find(|&p| &chain.steps[p].api == target) {
                        args.insert(name.clone(), Binding::StepOutput(p));
                    }
                }
            }
        }
        chain.steps[i].args = args;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn refs(chains: &[&[&str]]) -> ReferenceSet {
        ReferenceSet::new(chains.iter().map(|c| ApiChain::from_ids(c)).collect(), RefSource::Dataset).unwrap()
    }

    fn fixed(apis: &'static [&'static str]) -> impl Fn(&ApiChain) -> CandidateSet + Sync {
        move |c: &ApiChain| {
            let end = (!c.is_empty()).then_some(END);
            CandidateSet::new(apis.iter().copied().chain(end))
        }
    }

    #[test]
    fn candidate_set_puts_end_last() {
        let c = CandidateSet::new([END, "b", "a", "b"]);
        assert_eq!(c.apis, vec!["b", "a", END]);
    }

    #[test]
    fn rollout_at_cap_is_exact() {
        let cfg = RolloutConfig { max_len: 3, ..Default::default() };
        let p = ApiChain::partial(vec![ApiCall::new("x"), ApiCall::new("y")]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = rollout(&p, "z", &fixed(&["a", "b"]), &cfg, &mut rng);
        assert_eq!(c.api_ids(), vec!["x", "y", "z"]);
        assert!(!c.partial);
    }

    #[test]
    fn rollout_stops_on_end_only_provider() {
        let only_end = |_: &ApiChain| CandidateSet::new([END]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = rollout(&ApiChain::partial(vec![]), "a", &only_end, &RolloutConfig::default(), &mut rng);
        assert_eq!(c.api_ids(), vec!["a"]);
    }

    #[test]
    fn rollout_is_seed_deterministic() {
        let cfg = RolloutConfig::default();
        let prov = fixed(&["a", "b", "c"]);
        let run = |s| rollout(&ApiChain::partial(vec![]), "a", &prov, &cfg, &mut ChaCha8Rng::seed_from_u64(s));
        assert_eq!(run(42), run(42));
    }

    #[test]
    fn exhaustive_score_of_exact_completion_is_zero() {
        let cfg = RolloutConfig { exhaustive: true, max_len: 3, ..Default::default() };
        let r = refs(&[&["a", "b"]]);
        let s = score_api("a", &ApiChain::partial(vec![]), &r, &fixed(&["a", "b"]), &cfg, 0);
        assert_eq!(s, 0.0);
        let s_end = score_api(END, &ApiChain::partial(vec![ApiCall::new("a"), ApiCall::new("b")]), &r, &fixed(&["a"]), &cfg, 0);
        assert_eq!(s_end, 0.0);
    }

    #[test]
    fn tie_break_prefers_smaller_id_and_end_last() {
        let s = |api: &str, score| CandidateScore { api: api.into(), score };
        assert_eq!(choose(&[s("b", -1.0), s("a", -1.0)]).unwrap().api, "a");
        assert_eq!(choose(&[s(END, -1.0), s("z", -1.0)]).unwrap().api, "z");
        assert_eq!(choose(&[s("b", -1.0), s("a", -2.0)]).unwrap().api, "b");
    }

    #[test]
    fn single_candidate_is_appended() {
        let cfg = RolloutConfig { max_len: 1, ..Default::default() };
        let out = plan_with_provider(&fixed(&["load"]), &refs(&[&["load"]]), &cfg).unwrap();
        assert_eq!(out.chain.api_ids(), vec!["load"]);
    }

    #[test]
    fn no_candidates_is_an_error() {
        let none = |_: &ApiChain| CandidateSet::default();
        assert!(matches!(plan_with_provider(&none, &refs(&[&["a"]]), &RolloutConfig::default()), Err(PlanError::NoCandidates)));
    }

    #[test]
    fn reference_set_validation() {
        assert!(matches!(ReferenceSet::new(vec![], RefSource::Dataset), Err(PlanError::NoReferences)));
        assert!(matches!(ReferenceSet::new(vec![ApiChain::partial(vec![])], RefSource::Dataset), Err(PlanError::PartialReference(0))));
    }

    #[test]
    fn bindings_follow_reference() {
        let r = ReferenceSet::new(
            vec![crate::chain::parse_chain("detect_suspect_edges\nedit_edges remove=$0\nshortest_path from=a to=b\n").unwrap()],
            RefSource::Dataset,
        )
        .unwrap();
        let mut c = ApiChain::from_ids(&["load_graph", "detect_suspect_edges", "edit_edges", "shortest_path"]);
        inherit_bindings(&mut c, &r);
        assert_eq!(c.steps[2].args["remove"], Binding::StepOutput(1));
        assert_eq!(c.steps[3].args["from"], Binding::Literal("a".into()));
        c.validate().unwrap();
    }
}
