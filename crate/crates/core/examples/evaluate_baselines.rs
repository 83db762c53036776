//! Original claim, random edits, decision transformer and the one-step
//! classifier on held-out planted claims, with report files written to
//! `target/baselines/`.
//!
//!     cargo run --example evaluate_baselines -- [n_claims] [epochs]

use std::sync::Arc;
use std::time::Instant;

use claimforge::evalharness::{evaluate, Identity, PolicyRewriter, RandomEdits, ReportBundle, DEFAULT_FLAT_EPSILON};
use claimforge::ingest::{make_planted_benchmark, PlantedConfig};
use claimforge::lexedit::Lexicon;
use claimforge::policy::{first_step_pairs, train, train_classifier, PolicyConfig};
use claimforge::searchenv::{build_index, BackendKind, EndpointConfig, RewardEnv, RewardSpec};
use claimforge::trajgen::{generate_dataset, GenConfig, RewardMode};

fn main() {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(600);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let n_train = n * 5 / 6;

    let bench = make_planted_benchmark(&PlantedConfig::new(n, 7));
    let lex = Lexicon::bundled();
    let ep = Arc::new(build_index(&bench.corpus, BackendKind::Bm25, &EndpointConfig::default()).unwrap());
    let env = RewardEnv::new(ep, &bench.corpus, RewardSpec::default());
    let claims = bench.tokenized(&lex);
    let (train_claims, dev_claims) = claims.split_at(n_train);

    let gen = GenConfig {
        top_n_sequences: 20,
        ..GenConfig::default()
    };
    let data = generate_dataset(train_claims, &env, &lex, &gen, &[RewardMode::Dense]).unwrap();
    println!("{} trajectories", data.trajectories.len());

    let cfg = PolicyConfig {
        embed_dim: 64,
        epochs,
        learning_rate: 1e-3,
        ..PolicyConfig::default()
    };
    let t = Instant::now();
    let (dt, _) = train(&data.trajectories, &cfg).unwrap();
    let (cls, _) = train_classifier(&first_step_pairs(&data.trajectories), &cfg).unwrap();
    println!("trained both in {:.1?}", t.elapsed());

    let reports = vec![
        evaluate(&Identity, dev_claims, &env, &lex).unwrap(),
        evaluate(&RandomEdits { n_edits: 4, seed: 0 }, dev_claims, &env, &lex).unwrap(),
        evaluate(&PolicyRewriter::new(&cls, "classifier"), dev_claims, &env, &lex).unwrap(),
        evaluate(&PolicyRewriter::new(&dt, "dt"), dev_claims, &env, &lex).unwrap(),
    ];
    let best: f64 = bench.answer_key[n_train..].iter().map(|e| e.best_reward).sum::<f64>() / dev_claims.len() as f64;
    for r in &reports {
        let rec = r.headroom_recovered(best).map_or("-".into(), |x| format!("{:.1}%", 100.0 * x));
        println!("{:<12}{:.4}  edits {:.2}  recovered {rec}", r.rewriter, r.rewritten_mean, r.mean_edits);
    }
    println!("answer key  {best:.4}");

    let bundle = ReportBundle::new(reports, cfg.block_size, DEFAULT_FLAT_EPSILON);
    for a in &bundle.actions {
        println!("{:<14}n={:<4} up {:<4} same {:<4} down {:<4} mean delta {:?}", a.kind.as_str(), a.count, a.improved, a.unchanged, a.decreased, a.mean_delta);
    }
    bundle.write("target/baselines").unwrap();
}
