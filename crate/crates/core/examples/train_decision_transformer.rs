//! Generates trajectories on the planted benchmark, trains a decision
//! transformer and rolls it out on held-out claims.
//!
//!     cargo run --example train_decision_transformer -- [epochs] [dim] [lr]

use std::sync::Arc;
use std::time::Instant;

use claimforge::ingest::{make_planted_benchmark, PlantedConfig};
use claimforge::lexedit::{apply_action, tokenize, Lexicon, TokenizedClaim};
use claimforge::policy::{random_policy, train, PolicyConfig, RolloutOptions};
use claimforge::searchenv::{build_index, BackendKind, EndpointConfig, RewardEnv, RewardSpec};
use claimforge::trajgen::{generate_dataset, GenConfig, RewardMode};

fn main() {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let dim: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(64);
    let lr: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1e-3);

    let bench = make_planted_benchmark(&PlantedConfig::new(600, 7));
    let lex = Lexicon::bundled();
    let ep = Arc::new(build_index(&bench.corpus, BackendKind::Bm25, &EndpointConfig::default()).unwrap());
    let env = RewardEnv::new(ep, &bench.corpus, RewardSpec::default());
    let claims: Vec<TokenizedClaim> = bench
        .claims
        .iter()
        .map(|c| tokenize(&c.claim, &lex).unwrap().with_claim_id(&c.claim_id))
        .collect();
    let (train_claims, dev_claims) = claims.split_at(500);

    let t = Instant::now();
    let gen = GenConfig {
        top_n_sequences: 20,
        ..GenConfig::default()
    };
    let report = generate_dataset(train_claims, &env, &lex, &gen, &[RewardMode::Dense]).unwrap();
    println!(
        "{} trajectories ({} improved, {} perfect, {} stuck) in {:.1?}",
        report.trajectories.len(),
        report.improved,
        report.already_perfect,
        report.no_improvement,
        t.elapsed()
    );

    let cfg = PolicyConfig {
        embed_dim: dim,
        epochs,
        learning_rate: lr,
        ..PolicyConfig::default()
    };
    let t = Instant::now();
    let (policy, tr) = train(&report.trajectories, &cfg).unwrap();
    println!("trained in {:.1?}: initial {:.3}, epochs {:?}", t.elapsed(), tr.initial_loss, tr.epoch_losses);
    println!("target rtg {:.3}", policy.target_rtg());

    let (mut orig, mut dt, mut rnd) = (0.0, 0.0, 0.0);
    for c in dev_claims {
        let r = policy.rollout(c, &env, &lex, &RolloutOptions::default()).unwrap();
        orig += r.original_reward;
        dt += r.final_reward();
        let mut cur = c.clone();
        for a in random_policy(c, 4, 0, &lex) {
            cur = apply_action(&cur, a, &lex).unwrap();
        }
        rnd += env.reward(&cur).unwrap();
    }
    let n = dev_claims.len() as f64;
    let best: f64 = bench.answer_key[500..].iter().map(|e| e.best_reward).sum::<f64>() / n;
    let (orig, dt, rnd) = (orig / n, dt / n, rnd / n);
    println!("dev: random {rnd:.4}  original {orig:.4}  dt {dt:.4}  best {best:.4}  recovered {:.1}%", 100.0 * (dt - orig) / (best - orig));
}
