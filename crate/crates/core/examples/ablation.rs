//! Retriever x metric x negative-examples grid on the planted benchmark.
//!
//!     cargo run --example ablation -- [n_claims] [epochs] [dim]

use std::sync::Arc;
use std::time::Instant;

use claimforge::evalharness::{ablation_matrix, AblationSpec};
use claimforge::ingest::{make_planted_benchmark, PlantedConfig};
use claimforge::lexedit::Lexicon;
use claimforge::policy::PolicyConfig;
use claimforge::searchenv::{build_index, BackendKind, EndpointConfig};
use claimforge::trajgen::GenConfig;

fn main() {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(240);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(6);
    let dim: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(32);

    let bench = make_planted_benchmark(&PlantedConfig::new(n, 11));
    let lex = Lexicon::bundled();
    let claims = bench.tokenized(&lex);
    let (train_claims, eval_claims) = claims.split_at(n * 5 / 6);
    let endpoints: Vec<_> = [BackendKind::Bm25, BackendKind::Knn]
        .into_iter()
        .map(|k| Arc::new(build_index(&bench.corpus, k, &EndpointConfig::default()).unwrap()))
        .collect();

    let spec = AblationSpec {
        gen: GenConfig {
            top_n_sequences: 20,
            ..GenConfig::default()
        },
        policy: PolicyConfig {
            embed_dim: dim,
            epochs,
            learning_rate: 1e-3,
            ..PolicyConfig::default()
        },
        ..AblationSpec::default()
    };
    let t = Instant::now();
    let table = ablation_matrix(&spec, &endpoints, &bench.corpus, train_claims, eval_claims, &lex).unwrap();
    print!("{}", table.render());
    for r in &table.rows {
        println!("{} {} {} trajectories {}", r.backend.as_str(), r.metric.as_str(), r.variant.as_str(), r.trajectories);
    }
    println!("grid done in {:.1?}", t.elapsed());
}
