use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use dsmcts::features::{mcts_features, state_features};
use dsmcts::mcts::{search, RolloutEvaluator, SearchConfig};
use dsmcts::uncertainty::labels_from_trace;
use dsmcts::{Architecture, GameState, Network};

fn midgame() -> GameState {
    let mut s = GameState::new(5).unwrap();
    for idx in [12, 6, 18, 8, 16, 2] {
        s = s.play_index(idx).unwrap();
    }
    s
}

fn net(filters: usize, blocks: usize) -> Network {
    Network::random(Architecture::state_net(5, filters, blocks), &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
}

fn game(c: &mut Criterion) {
    let s = midgame();
    c.bench_function("legal_indices", |b| b.iter(|| black_box(&s).legal_indices()));
    let rollout = RolloutEvaluator { playouts: 1, seed: 0 };
    c.bench_function("rollout_eval", |b| b.iter(|| dsmcts::Evaluator::evaluate(&rollout, black_box(&s))));
}

fn network(c: &mut Criterion) {
    let s = midgame();
    let x = state_features(&s);
    for (f, k) in [(16, 1), (32, 2)] {
        let n = net(f, k);
        c.bench_function(&format!("forward_{f}x{k}"), |b| b.iter(|| n.forward(black_box(&x), None).unwrap()));
    }
}

fn tree(c: &mut Criterion) {
    let s = midgame();
    let n = net(16, 1);
    let mut g = c.benchmark_group("search");
    g.sample_size(20);
    g.bench_function("pv_search_400", |b| b.iter(|| search(s, 400, &n, SearchConfig::default(), 1).unwrap()));
    let trace = search(s, 400, &n, SearchConfig::default(), 1).unwrap();
    g.bench_function("labels_400", |b| b.iter(|| labels_from_trace(black_box(&trace), 400, 0.05).unwrap()));
    g.bench_function("mcts_features_200", |b| b.iter(|| mcts_features(black_box(&trace), 200).unwrap()));
    g.finish();
}

criterion_group!(benches, game, network, tree);
criterion_main!(benches);
