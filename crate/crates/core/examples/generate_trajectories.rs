//! Searches edit sequences for a few planted claims and prints the
//! trajectories under both reward modes.
//!
//!     cargo run --example generate_trajectories -- 5

use std::sync::Arc;

use claimforge::ingest::{make_planted_benchmark, PlantedConfig};
use claimforge::lexedit::{EditAction, Lexicon};
use claimforge::searchenv::{build_index, BackendKind, EndpointConfig, RewardEnv, RewardSpec};
use claimforge::trajgen::{search_paths, GenConfig, RewardMode};

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let bench = make_planted_benchmark(&PlantedConfig::new(60, 21));
    let lex = Lexicon::bundled();
    let ep = Arc::new(build_index(&bench.corpus, BackendKind::Bm25, &EndpointConfig::default()).unwrap());
    let env = RewardEnv::new(ep, &bench.corpus, RewardSpec::default());
    let cfg = GenConfig {
        top_n_sequences: 2,
        ..GenConfig::default()
    };

    for claim in bench.tokenized(&lex).iter().take(n) {
        let out = search_paths(claim, &env, &lex, &cfg).unwrap();
        println!(
            "{} {:?}: original {:.3}, best {:.3}, {} states scored",
            out.claim_id, out.status, out.original_reward, out.max_seen_reward, out.states_scored
        );
        for t in out.trajectories(&[RewardMode::Dense, RewardMode::Sparse]) {
            let steps: Vec<String> = t
                .steps
                .iter()
                .map(|s| format!("{} r={:.3} rtg={:.3}", EditAction::unflatten(s.action).unwrap(), s.reward, s.rtg))
                .collect();
            println!("  {:?}: {}", t.mode, steps.join(" | "));
        }
    }
}
