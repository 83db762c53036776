//! Trains a small decision transformer, saves it, reloads it and rewrites
//! held-out claims step by step.
//!
//!     cargo run --example rewrite_claim

use std::sync::Arc;

use claimforge::ingest::{make_planted_benchmark, PlantedConfig};
use claimforge::lexedit::Lexicon;
use claimforge::policy::{train, PolicyConfig, RolloutOptions, TrainedPolicy};
use claimforge::searchenv::{build_index, BackendKind, EndpointConfig, RewardEnv, RewardSpec};
use claimforge::trajgen::{generate_dataset, GenConfig, RewardMode};

fn main() {
    let bench = make_planted_benchmark(&PlantedConfig::new(160, 5));
    let lex = Lexicon::bundled();
    let ep = Arc::new(build_index(&bench.corpus, BackendKind::Bm25, &EndpointConfig::default()).unwrap());
    let env = RewardEnv::new(ep, &bench.corpus, RewardSpec::default());
    let claims = bench.tokenized(&lex);
    let (train_claims, held_out) = claims.split_at(140);

    let data = generate_dataset(train_claims, &env, &lex, &GenConfig::default(), &[RewardMode::Dense]).unwrap();
    let cfg = PolicyConfig {
        embed_dim: 32,
        epochs: 4,
        learning_rate: 1e-3,
        ..PolicyConfig::default()
    };
    let (policy, report) = train(&data.trajectories, &cfg).unwrap();
    println!("{} trajectories, loss {:.3} -> {:.3}", data.trajectories.len(), report.initial_loss, report.epoch_losses.last().unwrap());

    let path = std::env::temp_dir().join("claimforge-example.ckpt");
    policy.save(&path).unwrap();
    let policy = TrainedPolicy::load(&path).unwrap();
    println!("checkpoint at {}, target rtg {:.3}", path.display(), policy.target_rtg());

    for claim in held_out.iter().take(6) {
        let r = policy.rollout(claim, &env, &lex, &RolloutOptions::default()).unwrap();
        println!("\n{:.3}  {}", r.original_reward, claim.text());
        let mut cur = claim.clone();
        for (a, reward) in r.actions.iter().zip(&r.rewards) {
            cur = claimforge::lexedit::apply_action(&cur, *a, &lex).unwrap();
            println!("{reward:.3}  {}   ({a})", cur.text());
        }
        println!("stopped: {:?}", r.stop);
    }
}
