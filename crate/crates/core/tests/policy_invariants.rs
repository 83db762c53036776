use std::sync::Arc;

use claimforge::ingest::{make_planted_benchmark, PlantedConfig};
use claimforge::lexedit::{legal_actions, Lexicon, TokenizedClaim};
use claimforge::policy::{
    first_step_pairs, train, train_classifier, ClassifierVariant, PolicyConfig, PolicyKind, RolloutOptions, StopReason,
    TrainedPolicy,
};
use claimforge::searchenv::{build_index, BackendKind, EndpointConfig, RewardEnv, RewardSpec};
use claimforge::trajgen::{generate_dataset, GenConfig, RewardMode, Step, Trajectory};

struct Fixture {
    lex: Lexicon,
    env: RewardEnv,
    claims: Vec<TokenizedClaim>,
    trajectories: Vec<Trajectory>,
}

fn fixture() -> Fixture {
    let lex = Lexicon::bundled();
    let bench = make_planted_benchmark(&PlantedConfig::new(60, 13));
    let ep = Arc::new(build_index(&bench.corpus, BackendKind::Bm25, &EndpointConfig::default()).unwrap());
    let env = RewardEnv::new(ep, &bench.corpus, RewardSpec::default());
    let claims = bench.tokenized(&lex);
    let trajectories = generate_dataset(&claims, &env, &lex, &GenConfig::default(), &[RewardMode::Dense])
        .unwrap()
        .trajectories;
    Fixture {
        lex,
        env,
        claims,
        trajectories,
    }
}

fn small() -> PolicyConfig {
    PolicyConfig {
        embed_dim: 16,
        n_heads: 2,
        epochs: 2,
        learning_rate: 1e-3,
        ..PolicyConfig::default()
    }
}

#[test]
fn later_steps_do_not_leak_into_earlier_logits() {
    let policy = TrainedPolicy::init(PolicyKind::DecisionTransformer, small()).unwrap();
    let full: Vec<Trajectory> = (0..3)
        .map(|b| Trajectory {
            claim_id: format!("c{b}"),
            mode: RewardMode::Dense,
            steps: (0..4)
                .map(|i| Step {
                    rtg: 2.0 - 0.3 * i as f64,
                    state: format!("state {b} number {i} of the claim"),
                    action: (b * 40 + i * 9) % 128,
                    reward: 0.3,
                })
                .collect(),
            max_seen_reward: 0.9,
            original_reward: 0.1,
        })
        .collect();
    let before = policy.dt_forward(&full).unwrap();
    for t_change in 1..4 {
        let mut probed = full.clone();
        for t in &mut probed {
            let s = &mut t.steps[t_change];
            s.state = "completely different words here".into();
            s.action = (s.action + 17) % 128;
            s.rtg += 3.0;
        }
        let after = policy.dt_forward(&probed).unwrap();
        for b in 0..full.len() {
            for step in 0..t_change {
                for a in 0..128 {
                    assert_eq!(before[[b, step, a]], after[[b, step, a]], "step {step} saw a change at {t_change}");
                }
            }
            let moved = (0..128).any(|a| before[[b, t_change, a]] != after[[b, t_change, a]]);
            assert!(moved, "step {t_change} should depend on its own inputs");
        }
    }
}

#[test]
fn rollouts_are_legal_and_rtg_is_bookkept() {
    let f = fixture();
    let (dt, _) = train(&f.trajectories, &small()).unwrap();
    let (mut cls, _) = train_classifier(&first_step_pairs(&f.trajectories), &small()).unwrap();
    for claim in &f.claims {
        let r = dt.rollout(claim, &f.env, &f.lex, &RolloutOptions::default()).unwrap();
        let mut cur = claim.clone();
        let mut spent = 0.0;
        for (i, a) in r.actions.iter().enumerate() {
            assert!(legal_actions(&cur, &f.lex).contains(a), "{a:?} illegal for {:?}", cur.tokens());
            cur = claimforge::lexedit::apply_action(&cur, *a, &f.lex).unwrap();
            assert_eq!(f.env.reward(&cur).unwrap(), r.rewards[i]);
            spent += r.rewards[i];
            assert!((dt.target_rtg() - spent - r.rtg_remaining[i]).abs() < 1e-9);
        }
        assert_eq!(cur.tokens(), r.final_claim.tokens());
        assert!(r.actions.len() <= 4);
        if r.original_reward >= 1.0 {
            assert_eq!(r.stop, StopReason::AlreadyPerfect);
        }

        cls.set_classifier_variant(ClassifierVariant::Once);
        let once = cls.rollout(claim, &f.env, &f.lex, &RolloutOptions::default()).unwrap();
        assert!(once.actions.len() <= 1);
        cls.set_classifier_variant(ClassifierVariant::Iterated);
        let iterated = cls.rollout(claim, &f.env, &f.lex, &RolloutOptions::default()).unwrap();
        assert_eq!(once.actions.first(), iterated.actions.first());
    }
}

#[test]
fn terminate_on_illegal_never_applies_illegal_edits() {
    let f = fixture();
    let policy = TrainedPolicy::init(PolicyKind::DecisionTransformer, small()).unwrap();
    let opts = RolloutOptions {
        terminate_on_illegal: true,
        ..RolloutOptions::default()
    };
    for claim in &f.claims {
        let r = policy.rollout(claim, &f.env, &f.lex, &opts).unwrap();
        let mut cur = claim.clone();
        for a in &r.actions {
            assert!(legal_actions(&cur, &f.lex).contains(a));
            cur = claimforge::lexedit::apply_action(&cur, *a, &f.lex).unwrap();
        }
        if r.stop == StopReason::IllegalAction {
            assert!(r.actions.len() < 4);
        }
    }
}

#[test]
fn checkpoint_reproduces_rollouts() {
    let f = fixture();
    let (dt, _) = train(&f.trajectories, &small()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dt.ckpt");
    dt.save(&path).unwrap();
    let loaded = TrainedPolicy::load(&path).unwrap();
    assert_eq!(loaded, dt);
    for claim in f.claims.iter().take(10) {
        let a = dt.rollout(claim, &f.env, &f.lex, &RolloutOptions::default()).unwrap();
        let b = loaded.rollout(claim, &f.env, &f.lex, &RolloutOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn loss_drops_over_training() {
    let f = fixture();
    let cfg = PolicyConfig {
        epochs: 10,
        ..small()
    };
    let (_, report) = train(&f.trajectories, &cfg).unwrap();
    assert!(report.epoch_losses[9] < report.epoch_losses[0], "{:?}", report.epoch_losses);
    assert!((report.initial_loss - (128f64).ln()).abs() < 0.1);
}
