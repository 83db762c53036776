//! Starts the HTTP service on a planted corpus with both backends and no
//! policy loaded.
//!
//!     cargo run --example serve_api -- 127.0.0.1:8080
//!     curl -s localhost:8080/v1/tokenize -d '{"text":"the cats ran"}' -H 'content-type: application/json'

use std::collections::BTreeMap;
use std::sync::Arc;

use claimforge::apiservice::{serve, ServiceState};
use claimforge::ingest::{make_planted_benchmark, PlantedConfig};
use claimforge::lexedit::Lexicon;
use claimforge::searchenv::{build_index, BackendKind, EndpointConfig, RewardEnv, RewardSpec};

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let addr = std::env::args().nth(1).unwrap_or_else(|| "127.0.0.1:8080".into());
    let bench = make_planted_benchmark(&PlantedConfig::new(100, 7));
    let mut envs = BTreeMap::new();
    for kind in [BackendKind::Bm25, BackendKind::Knn] {
        let ep = Arc::new(build_index(&bench.corpus, kind, &EndpointConfig::default()).unwrap());
        envs.insert(kind, RewardEnv::new(ep, &bench.corpus, RewardSpec::default()));
    }
    let first = &bench.claims[0];
    println!("try claim_id {:?} with text {:?}", first.claim_id, first.claim);
    let state = ServiceState {
        lexicon: Lexicon::bundled(),
        corpus: bench.corpus,
        envs,
        policy: None,
    };
    println!("listening on {addr}");
    serve(Arc::new(state), addr.parse().expect("socket address")).await
}
