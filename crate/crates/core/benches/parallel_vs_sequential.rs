use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use graphchain_core::chain::{ApiChain, END};
use graphchain_core::index::{default_tau, IndexParams, TauMgIndex, VectorSet};
use graphchain_core::metric::exhaustive_matching;
use graphchain_core::planner::{extend, CandidateSet, RefSource, ReferenceSet, RolloutConfig};
use graphchain_core::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Exec); 2] = [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)];

fn vectors(n: usize, dim: usize) -> VectorSet {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rows: Vec<Vec<f32>> = (0..n).map(|_| (0..dim).map(|_| rng.random::<f32>()).collect()).collect();
    VectorSet::from_rows(dim, &rows).unwrap()
}

fn index_build(c: &mut Criterion) {
    let set = vectors(2000, 16);
    let tau = default_tau(&set, 7);
    let mut group = c.benchmark_group("index_build_2000x16");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| TauMgIndex::build(black_box(&set), &IndexParams::new(tau).with_exec(exec)).unwrap())
        });
    }
    group.finish();
}

fn matching(c: &mut Criterion) {
    let a = ApiChain::from_ids(&["load", "filter", "rank", "load", "report", "rank", "filter"]);
    let b = ApiChain::from_ids(&["filter", "load", "rank", "rank", "report", "load", "filter"]);
    let mut group = c.benchmark_group("exhaustive_matching_7x7");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |bench, &exec| {
            bench.iter(|| exhaustive_matching(black_box(&a), black_box(&b), 1.0, exec))
        });
    }
    group.finish();
}

fn planner_step(c: &mut Criterion) {
    let apis = ["a", "b", "c", "d", "e", "f"];
    let provider = move |partial: &ApiChain| {
        let mut cand: Vec<&str> = apis.to_vec();
        if !partial.is_empty() {
            cand.push(END);
        }
        CandidateSet::new(cand)
    };
    let refs = ReferenceSet::new(vec![ApiChain::from_ids(&["a", "c", "e", "b"]), ApiChain::from_ids(&["b", "d", "f"])], RefSource::Dataset).unwrap();
    let partial = ApiChain::partial(Vec::new());
    let cand = provider(&partial);
    let mut group = c.benchmark_group("planner_step_r64");
    for (name, exec) in MODES {
        let cfg = RolloutConfig { r: 64, max_len: 6, exec, ..RolloutConfig::default() };
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| extend(black_box(&partial), &cand, &refs, &provider, cfg, 0))
        });
    }
    group.finish();
}

criterion_group!(benches, index_build, matching, planner_step);
criterion_main!(benches);
