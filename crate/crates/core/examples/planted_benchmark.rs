//! Builds the planted benchmark and reports its headroom.
//!
//!     cargo run --example planted_benchmark -- 200 7

use std::sync::Arc;
use std::time::Instant;

use claimforge::ingest::{make_planted_benchmark, PlantedConfig};
use claimforge::lexedit::{apply_action, legal_actions, tokenize, Lexicon};
use claimforge::searchenv::{build_index, BackendKind, EndpointConfig, RewardEnv, RewardSpec};
use claimforge::trajgen::{search_paths, GenConfig, GenStatus};
use rand::seq::SliceRandom;
use rand::SeedableRng;

fn main() {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);

    let t = Instant::now();
    let bench = make_planted_benchmark(&PlantedConfig::new(n, seed));
    println!("{} claims, {} docs, built in {:.1?}", bench.claims.len(), bench.corpus.len(), t.elapsed());
    for c in bench.claims.iter().take(3) {
        let doc = bench.corpus.doc(&c.relevant_doc_ids[0]).unwrap();
        println!("  claim {:?}\n    doc {:?}", c.claim, doc.text);
    }
    let (r0, best) = (bench.mean_original(), bench.mean_best());
    println!("original mean {r0:.4}, answer-key mean {best:.4}, relative headroom {:.1}%", 100.0 * (best - r0) / r0);

    let lex = Lexicon::bundled();
    let ep = Arc::new(build_index(&bench.corpus, BackendKind::Bm25, &EndpointConfig::default()).unwrap());
    let env = RewardEnv::new(ep, &bench.corpus, RewardSpec::default());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (mut random_sum, mut improved, mut perfect, mut none) = (0.0, 0, 0, 0);
    for c in &bench.claims {
        let mut claim = tokenize(&c.claim, &lex).unwrap().with_claim_id(&c.claim_id);
        let out = search_paths(&claim, &env, &lex, &GenConfig::default()).unwrap();
        match out.status {
            GenStatus::Improved => improved += 1,
            GenStatus::AlreadyPerfect => perfect += 1,
            GenStatus::NoImprovementFound => none += 1,
        }
        for _ in 0..4 {
            if let Some(&a) = legal_actions(&claim, &lex).choose(&mut rng) {
                claim = apply_action(&claim, a, &lex).unwrap();
            }
        }
        random_sum += env.reward(&claim).unwrap();
    }
    println!("random 4-edit mean {:.4}", random_sum / n as f64);
    println!("search: {improved} improved, {perfect} already perfect, {none} without improving path");
}
