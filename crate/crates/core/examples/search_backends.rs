//! Queries BM25 and the HNSW kNN endpoint with the same claims and scores
//! each ranking under all three metrics.
//!
//!     cargo run --example search_backends -- 100

use std::sync::Arc;
use std::time::Instant;

use claimforge::ingest::{make_planted_benchmark, PlantedConfig};
use claimforge::searchenv::{build_index, BackendKind, EndpointConfig, Metric, RewardEnv, RewardSpec};

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let bench = make_planted_benchmark(&PlantedConfig::new(n, 3));

    for kind in [BackendKind::Bm25, BackendKind::Knn] {
        let t = Instant::now();
        let ep = Arc::new(build_index(&bench.corpus, kind, &EndpointConfig::default()).unwrap());
        println!("{} over {} docs, built in {:.1?}", kind.as_str(), ep.len(), t.elapsed());

        let c = &bench.claims[0];
        for h in ep.search(&c.claim, 3).unwrap() {
            println!("  {:>8.4} {}", h.score, h.doc_id);
        }
        for metric in [Metric::Ap, Metric::Recall, Metric::Rr] {
            let env = RewardEnv::new(ep.clone(), &bench.corpus, RewardSpec::new(metric, 50));
            let mean = bench
                .claims
                .iter()
                .map(|c| env.reward_text(&c.claim_id, &c.claim).unwrap())
                .sum::<f64>()
                / n as f64;
            println!("  mean {}@50 {mean:.4}", metric.as_str());
        }
    }
}
