//! Acceptance gate. Runs every primary criterion, prints one PASS/FAIL line
//! each and exits non-zero if any failed.
//!
//!     cargo test --test acceptance                 # everything
//!     cargo test --test acceptance -- learning     # names containing "learning"

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::process::Command;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use claimforge::evalharness::{ablation_matrix, evaluate, AblationSpec, AblationVariant, PolicyRewriter, RandomEdits, Identity};
use claimforge::ingest::{make_planted_benchmark, PlantedBenchmark, PlantedConfig};
use claimforge::lexedit::{apply_action, legal_actions, tokenize, EditAction, EditKind, LexError, Lexicon, TokenizedClaim};
use claimforge::policy::{first_step_pairs, gradient_check, train, train_classifier, PolicyConfig, PolicyKind, TrainedPolicy};
use claimforge::searchenv::{
    ap_at_k, build_index, recall_at_k, reciprocal_rank, BackendKind, Bm25Index, EmbeddingProvider, EndpointConfig, Hnsw,
    HnswParams, Metric, RewardEnv, RewardSpec,
};
use claimforge::trajgen::{compute_rtg, generate_dataset, search_paths, GenConfig, RewardMode};

type Check = fn() -> Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- metrics

fn precision_at(ranking: &[u32], rel: &HashSet<u32>, i: usize) -> f64 {
    let distinct: HashSet<u32> = ranking[..i].iter().copied().filter(|d| rel.contains(d)).collect();
    distinct.len() as f64 / i as f64
}

fn oracle_ap(ranking: &[u32], rel: &HashSet<u32>, k: usize) -> f64 {
    if rel.is_empty() || k == 0 {
        return 0.0;
    }
    let top = &ranking[..ranking.len().min(k)];
    let mut total = 0.0;
    for i in 0..top.len() {
        let first = !top[..i].contains(&top[i]);
        if rel.contains(&top[i]) && first {
            total += precision_at(top, rel, i + 1);
        }
    }
    total / rel.len().min(k) as f64
}

fn oracle_recall(ranking: &[u32], rel: &HashSet<u32>, k: usize) -> f64 {
    if rel.is_empty() {
        return 0.0;
    }
    let found = rel.iter().filter(|d| ranking.iter().take(k).any(|x| x == *d)).count();
    found as f64 / rel.len() as f64
}

fn oracle_rr(ranking: &[u32], rel: &HashSet<u32>, k: usize) -> f64 {
    for (i, d) in ranking.iter().enumerate().take(k) {
        if rel.contains(d) {
            return 1.0 / (i as f64 + 1.0);
        }
    }
    0.0
}

fn metric_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let pool = rng.gen_range(1..80u32);
        let len = rng.gen_range(0..=pool as usize);
        let mut ranking: Vec<u32> = (0..pool).collect();
        ranking.shuffle(&mut rng);
        ranking.truncate(len);
        if case % 10 == 0 && !ranking.is_empty() {
            // duplicates in the ranking must count once
            let d = ranking[rng.gen_range(0..ranking.len())];
            ranking.insert(rng.gen_range(0..=ranking.len()), d);
        }
        let rel: HashSet<u32> = (0..pool).filter(|_| rng.gen_bool(0.2)).collect();
        let k = rng.gen_range(0..100);
        for (got, want) in [
            (ap_at_k(&ranking, &rel, k), oracle_ap(&ranking, &rel, k)),
            (recall_at_k(&ranking, &rel, k), oracle_recall(&ranking, &rel, k)),
            (reciprocal_rank(&ranking, &rel, k), oracle_rr(&ranking, &rel, k)),
        ] {
            worst = worst.max((got - want).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("max error {worst:e}"))?;
    Ok(format!("1000 cases x 3 metrics, max |error| {worst:e}"))
}

// ---------------------------------------------------------------- bm25

fn okapi(docs: &[Vec<&str>], query: &[&str], k1: f64, b: f64) -> Vec<f64> {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.len()).sum::<usize>() as f64 / n;
    docs.iter()
        .map(|d| {
            query
                .iter()
                .map(|t| {
                    let df = docs.iter().filter(|x| x.contains(t)).count() as f64;
                    let tf = d.iter().filter(|x| *x == t).count() as f64;
                    let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                    idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * d.len() as f64 / avgdl))
                })
                .sum()
        })
        .collect()
}

fn bm25_oracle() -> Result<String, String> {
    const WORDS: [&str; 12] = ["cat", "dog", "fish", "bird", "cow", "owl", "ant", "bee", "elk", "fox", "yak", "emu"];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut compared = 0;
    for _ in 0..50 {
        let n_docs = rng.gen_range(1..=20);
        let docs: Vec<Vec<&str>> = (0..n_docs)
            .map(|_| (0..rng.gen_range(1..12)).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect())
            .collect();
        let texts: Vec<String> = docs.iter().map(|d| d.join(" ")).collect();
        let index = Bm25Index::build(texts.iter().map(String::as_str), 1.2, 0.75);
        for _ in 0..5 {
            let query: Vec<&str> = (0..rng.gen_range(1..5)).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect();
            let want = okapi(&docs, &query, 1.2, 0.75);
            let mut got = vec![0.0; docs.len()];
            for (d, s) in index.score_all(&query.join(" ")) {
                got[d as usize] = s;
            }
            for (g, w) in got.iter().zip(&want) {
                worst = worst.max((g - w).abs());
                compared += 1;
            }
        }
    }
    ensure(worst <= 1e-9, || format!("max error {worst:e}"))?;
    Ok(format!("50 corpora, {compared} doc scores, max |error| {worst:e}"))
}

// ---------------------------------------------------------------- hnsw

fn hnsw_recall() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let vocab: Vec<String> = (0..5000).map(|i| format!("w{i}")).collect();
    // skewed word frequencies, roughly like text
    let word = |rng: &mut ChaCha8Rng| {
        let u: f64 = rng.gen();
        &vocab[((u * u) * vocab.len() as f64) as usize]
    };
    let docs: Vec<Vec<&String>> = (0..10_000)
        .map(|_| (0..rng.gen_range(8..30)).map(|_| word(&mut rng)).collect())
        .collect();
    let provider = EmbeddingProvider::HashedBow { dim: 256 };
    let texts: Vec<String> = docs.iter().map(|d| d.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" ")).collect();
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let vectors = provider.embed_many(&refs).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let graph = Hnsw::build(&vectors, 256, HnswParams::default());
    let build = t.elapsed();

    let mut total = 0.0;
    for _ in 0..200 {
        let base = &docs[rng.gen_range(0..docs.len())];
        let mut q: Vec<&str> = base.choose_multiple(&mut rng, 5).map(|s| s.as_str()).collect();
        q.push(word(&mut rng));
        q.push(word(&mut rng));
        let qv = provider.embed(&q.join(" ")).map_err(|e| e.to_string())?;
        let mut exact: Vec<(f32, u32)> = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (1.0 - v.iter().zip(&qv).map(|(a, b)| a * b).sum::<f32>(), i as u32))
            .collect();
        exact.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let truth: HashSet<u32> = exact[..10].iter().map(|e| e.1).collect();
        let found = graph.search(&qv, 10, 100).iter().filter(|(id, _)| truth.contains(id)).count();
        total += found as f64 / 10.0;
    }
    let recall = total / 200.0;
    ensure(recall >= 0.90, || format!("recall@10 {recall:.3} < 0.90"))?;
    Ok(format!("10k docs, 200 queries, mean top-10 overlap {recall:.3} (build {build:.1?})"))
}

// ---------------------------------------------------------------- lexedit

fn action_algebra() -> Result<String, String> {
    let lex = Lexicon::bundled();
    let mut words = lex.vocabulary();
    words.extend(["zzyzx", "qwerty", ",", ".", "Earth", "RAN"].map(String::from));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut applied = 0;
    for _ in 0..10_000 {
        let len = rng.gen_range(1..40);
        let text = (0..len).map(|_| words[rng.gen_range(0..words.len())].as_str()).collect::<Vec<_>>().join(" ");
        let claim = tokenize(&text, &lex).map_err(|e| e.to_string())?;
        let flat = rng.gen_range(0..128);
        let a = EditAction::unflatten(flat).map_err(|e| e.to_string())?;
        ensure(a.flatten() == flat && a.position < 32, || format!("{flat} does not round-trip"))?;
        ensure(EditAction::unflatten(128 + flat).is_err(), || "out-of-range id accepted".into())?;
        let legal = legal_actions(&claim, &lex);
        match apply_action(&claim, a, &lex) {
            Ok(next) => {
                ensure(legal.contains(&a), || format!("{a:?} applied but not listed legal"))?;
                let want = match a.kind {
                    EditKind::Remove => claim.len() - 1,
                    EditKind::AddSynonym => claim.len() + 1,
                    EditKind::SwapSynonym | EditKind::PresentTense => claim.len(),
                };
                ensure(next.len() == want, || format!("{a:?} on {text:?}: length {} want {want}", next.len()))?;
                ensure(next.pos().len() == next.len(), || "pos/tokens length differ".into())?;
                ensure(next.edit_history().last() == Some(&a), || "edit not recorded".into())?;
                ensure(apply_action(&claim, a, &lex).ok() == Some(next), || "non-deterministic edit".into())?;
                applied += 1;
            }
            Err(LexError::IllegalAction { .. }) => {
                ensure(!legal.contains(&a), || format!("{a:?} listed legal but rejected"))?;
            }
            Err(e) => return Err(e.to_string()),
        }
    }
    Ok(format!("10000 cases ({applied} legal edits applied)"))
}

// ---------------------------------------------------------------- trajgen

fn planted_env(bench: &PlantedBenchmark, backend: BackendKind) -> RewardEnv {
    let ep = Arc::new(build_index(&bench.corpus, backend, &EndpointConfig::default()).expect("planted corpus indexes"));
    RewardEnv::new(ep, &bench.corpus, RewardSpec::default())
}

type OraclePaths = BTreeMap<(Vec<String>, usize), (Vec<usize>, Vec<f64>)>;

/// Every strictly improving edit sequence of length <= depth, by plain
/// recursion over all 128 ids. Keeps the first (lexicographically smallest)
/// sequence per (final state, length) among maximal sequences.
fn improving_sequences(claim: &TokenizedClaim, env: &RewardEnv, lex: &Lexicon, depth: usize) -> OraclePaths {
    fn go(
        node: &TokenizedClaim,
        r: f64,
        path: &mut Vec<usize>,
        rewards: &mut Vec<f64>,
        ctx: (&RewardEnv, &Lexicon, usize),
        out: &mut OraclePaths,
    ) {
        let (env, lex, depth) = ctx;
        let mut extended = false;
        if path.len() < depth {
            for flat in 0..128 {
                let Ok(child) = apply_action(node, EditAction::unflatten(flat).unwrap(), lex) else { continue };
                let rc = env.reward(&child).unwrap();
                if rc > r {
                    extended = true;
                    path.push(flat);
                    rewards.push(rc);
                    go(&child, rc, path, rewards, ctx, out);
                    path.pop();
                    rewards.pop();
                }
            }
        }
        if !path.is_empty() && !extended {
            out.entry((node.key(), path.len())).or_insert_with(|| (path.clone(), rewards.clone()));
        }
    }
    let mut out = BTreeMap::new();
    let r0 = env.reward(claim).unwrap();
    if r0 < 1.0 {
        go(claim, r0, &mut Vec::new(), &mut Vec::new(), (env, lex, depth), &mut out);
    }
    out
}

fn trajectory_soundness() -> Result<String, String> {
    let lex = Lexicon::bundled();
    let bench = make_planted_benchmark(&PlantedConfig::new(500, 21));
    let env = planted_env(&bench, BackendKind::Bm25);
    let claims = bench.tokenized(&lex);
    let report = generate_dataset(&claims, &env, &lex, &GenConfig::default(), &[RewardMode::Dense])
        .map_err(|e| e.to_string())?;
    for t in &report.trajectories {
        let r = t.rewards();
        ensure(r[0] > t.original_reward && r.windows(2).all(|w| w[1] > w[0]), || {
            format!("{}: rewards {:?} from {}", t.claim_id, r, t.original_reward)
        })?;
        ensure(t.final_reward() > t.original_reward && t.steps.len() <= 4, || format!("{}: bad final", t.claim_id))?;
    }

    // short claims: windows of at most six tokens cut from planted claims
    let mut corpus = bench.corpus.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut short = Vec::new();
    for (i, c) in claims.iter().enumerate().take(150) {
        let n = rng.gen_range(3..=6).min(c.len());
        let s = rng.gen_range(0..=c.len() - n);
        let id = format!("short{i}");
        let rel = corpus.relevant(c.claim_id()).unwrap().clone();
        corpus.set_relevance(&id, rel.iter()).map_err(|e| e.to_string())?;
        short.push(TokenizedClaim::from_tokens(id, c.tokens()[s..s + n].to_vec(), Vec::new(), &lex).map_err(|e| e.to_string())?);
    }
    let env = RewardEnv::new(env.endpoint_arc(), &corpus, RewardSpec::default());
    let (mut with_paths, mut n_paths) = (0, 0);
    for c in &short {
        let want = improving_sequences(c, &env, &lex, 4);
        let got = search_paths(c, &env, &lex, &GenConfig::unpruned(4)).map_err(|e| e.to_string())?;
        let got: OraclePaths = got
            .paths
            .iter()
            .map(|p| {
                (
                    (p.final_state.key(), p.actions.len()),
                    (p.actions.iter().map(|a| a.flatten()).collect(), p.rewards.clone()),
                )
            })
            .collect();
        ensure(got == want, || format!("{}: search {} paths, oracle {}", c.claim_id(), got.len(), want.len()))?;
        with_paths += usize::from(!want.is_empty());
        n_paths += want.len();
    }
    Ok(format!(
        "{} trajectories monotone on 500 claims; {} short claims match the oracle ({with_paths} with {n_paths} paths)",
        report.trajectories.len(),
        short.len()
    ))
}

fn rtg_formulas() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let n = rng.gen_range(1..10);
        // multiples of 1/1024: sums are exact in binary floating point
        let rewards: Vec<f64> = (0..n).map(|_| rng.gen_range(-1024..=1024) as f64 / 1024.0).collect();
        let max_seen = rewards.iter().copied().fold(0.0, f64::max) + rng.gen_range(0..64) as f64 / 1024.0;
        let dense = compute_rtg(&rewards, RewardMode::Dense, max_seen);
        for (t, &v) in dense.iter().enumerate() {
            let want: f64 = rewards[t..].iter().sum();
            ensure(v == want, || format!("dense R_{t} = {v}, want {want} for {rewards:?}"))?;
        }
        let sparse = compute_rtg(&rewards, RewardMode::Sparse, max_seen);
        let mut want = vec![0.0; n];
        want[n - 1] = max_seen;
        ensure(sparse == want, || format!("sparse {sparse:?} for {rewards:?}"))?;
    }
    Ok("1000 sequences, dense and sparse exact".into())
}

// ---------------------------------------------------------------- policy

fn gradient() -> Result<String, String> {
    let lex = Lexicon::bundled();
    let bench = make_planted_benchmark(&PlantedConfig::new(40, 8));
    let env = planted_env(&bench, BackendKind::Bm25);
    let data = generate_dataset(&bench.tokenized(&lex), &env, &lex, &GenConfig::default(), &[RewardMode::Dense])
        .map_err(|e| e.to_string())?;
    let trajs: Vec<_> = data.trajectories.into_iter().take(6).collect();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for kind in [PolicyKind::DecisionTransformer, PolicyKind::Classifier] {
        let policy = TrainedPolicy::init(kind, PolicyConfig::tiny()).map_err(|e| e.to_string())?;
        let g = gradient_check(&policy, &trajs, 1e-5, 1e-6).map_err(|e| e.to_string())?;
        ensure(g.max_rel_error <= 1e-3, || format!("{kind:?}: {} off by {:e}", g.worst_parameter, g.max_rel_error))?;
        worst = worst.max(g.max_rel_error);
        checked += g.checked;
    }
    Ok(format!("{checked} scalars across both policy kinds, max relative error {worst:.2e}"))
}

struct LearningRun {
    random: f64,
    original: f64,
    dt: f64,
    classifier: f64,
    best: f64,
    first_loss: f64,
    last_loss: f64,
}

impl LearningRun {
    fn recovered(&self, x: f64) -> f64 {
        (x - self.original) / (self.best - self.original)
    }
}

fn learning_run() -> &'static LearningRun {
    static RUN: OnceLock<LearningRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let lex = Lexicon::bundled();
        let bench = make_planted_benchmark(&PlantedConfig::new(600, 7));
        let env = planted_env(&bench, BackendKind::Bm25);
        let claims = bench.tokenized(&lex);
        let (train_claims, dev) = claims.split_at(500);
        let gen = GenConfig {
            top_n_sequences: 20,
            ..GenConfig::default()
        };
        let data = generate_dataset(train_claims, &env, &lex, &gen, &[RewardMode::Dense]).unwrap();
        let cfg = PolicyConfig {
            embed_dim: 64,
            epochs: 10,
            learning_rate: 1e-3,
            ..PolicyConfig::default()
        };
        let (dt, report) = train(&data.trajectories, &cfg).unwrap();
        let (cls, _) = train_classifier(&first_step_pairs(&data.trajectories), &cfg).unwrap();
        let eval = |r: &dyn claimforge::evalharness::Rewriter| evaluate(r, dev, &env, &lex).unwrap();
        let original = eval(&Identity);
        LearningRun {
            random: eval(&RandomEdits { n_edits: 4, seed: 0 }).rewritten_mean,
            original: original.rewritten_mean,
            dt: eval(&PolicyRewriter::new(&dt, "dt")).rewritten_mean,
            classifier: eval(&PolicyRewriter::new(&cls, "classifier")).rewritten_mean,
            best: bench.answer_key[500..].iter().map(|e| e.best_reward).sum::<f64>() / dev.len() as f64,
            first_loss: report.epoch_losses[0],
            last_loss: *report.epoch_losses.last().unwrap(),
        }
    })
}

fn learning_signal() -> Result<String, String> {
    let r = learning_run();
    let rec = r.recovered(r.dt);
    let line = format!(
        "dev means: random {:.4} < original {:.4} < dt {:.4} (answer key {:.4}); recovered {:.1}% of headroom; loss {:.3} -> {:.3}",
        r.random,
        r.original,
        r.dt,
        r.best,
        100.0 * rec,
        r.first_loss,
        r.last_loss
    );
    ensure(r.random < r.original && r.original < r.dt && rec >= 0.5 && r.last_loss < r.first_loss, || line.clone())?;
    Ok(line)
}

fn classifier_parity() -> Result<String, String> {
    let r = learning_run();
    let (dt, cls) = (r.recovered(r.dt), r.recovered(r.classifier));
    let line = format!("classifier recovered {:.1}%, dt {:.1}%", 100.0 * cls, 100.0 * dt);
    ensure((cls - dt).abs() <= 0.2 * dt, || line.clone())?;
    Ok(line)
}

// ---------------------------------------------------------------- evalharness

fn ablation() -> Result<String, String> {
    let lex = Lexicon::bundled();
    let bench = make_planted_benchmark(&PlantedConfig::new(240, 11));
    let claims = bench.tokenized(&lex);
    let (train_claims, eval_claims) = claims.split_at(200);
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
            embed_dim: 32,
            epochs: 6,
            learning_rate: 1e-3,
            ..PolicyConfig::default()
        },
        ..AblationSpec::default()
    };
    let table = ablation_matrix(&spec, &endpoints, &bench.corpus, train_claims, eval_claims, &lex).map_err(|e| e.to_string())?;
    print!("{}", table.render().lines().map(|l| format!("      {l}\n")).collect::<String>());
    ensure(table.rows.len() == 2 * 3 * 3, || format!("{} rows", table.rows.len()))?;
    let mut worst = f64::INFINITY;
    for b in [BackendKind::Bm25, BackendKind::Knn] {
        for m in Metric::ALL {
            let up = table.get(b, m, AblationVariant::UpOnly).map_err(|e| e.to_string())?;
            let both = table.get(b, m, AblationVariant::UpDown).map_err(|e| e.to_string())?;
            ensure(up >= 0.9 * both, || format!("{b}/{m}: up-only {up:.4} < 0.9 x up+down {both:.4}"))?;
            if both > 0.0 {
                worst = worst.min(up / both);
            }
        }
    }
    Ok(format!("12 cells complete; smallest up-only / up+down ratio {worst:.3}"))
}

fn run_pipeline(bin: &str, dir: &Path) -> Result<Vec<u8>, String> {
    let run = |args: &[&str]| -> Result<(), String> {
        let out = Command::new(bin).args(args).current_dir(dir).output().map_err(|e| e.to_string())?;
        ensure(out.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    };
    run(&["fixtures", "--planted", "--n", "60", "--seed", "3", "--out", "fx"])?;
    run(&["gen", "--corpus", "fx/corpus.jsonl", "--claims", "fx/train.jsonl", "--top-n", "10", "--seed", "3", "--out", "tr.jsonl"])?;
    run(&["train", "--trajectories", "tr.jsonl", "--dim", "16", "--epochs", "2", "--seed", "3", "--out", "dt.ckpt"])?;
    run(&["eval", "--ckpt", "dt.ckpt", "--corpus", "fx/corpus.jsonl", "--claims", "fx/dev.jsonl", "--seed", "3", "--report", "rep"])?;
    std::fs::read(dir.join("rep/report.json")).map_err(|e| e.to_string())
}

fn determinism() -> Result<String, String> {
    let bin = env!("CARGO_BIN_EXE_claimforge");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_pipeline(bin, a.path())?;
    let second = run_pipeline(bin, b.path())?;
    ensure(first == second, || "report.json differs between runs".into())?;
    Ok(format!("fixtures -> gen -> train -> eval twice, report.json identical ({} bytes)", first.len()))
}

fn main() {
    let checks: &[(&str, Check)] = &[
        ("metric-oracle", metric_oracle),
        ("bm25-oracle", bm25_oracle),
        ("hnsw-recall", hnsw_recall),
        ("action-algebra", action_algebra),
        ("trajectory-soundness", trajectory_soundness),
        ("rtg-formulas", rtg_formulas),
        ("gradient-check", gradient),
        ("learning-signal", learning_signal),
        ("classifier-parity", classifier_parity),
        ("ablation-matrix", ablation),
        ("determinism", determinism),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (name, check) in checks {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let took = t.elapsed();
        match result {
            Ok(detail) => println!("PASS  {name:<22} {detail}  [{took:.1?}]"),
            Err(detail) => {
                println!("FAIL  {name:<22} {detail}  [{took:.1?}]");
                failed.push(*name);
            }
        }
    }
    if !failed.is_empty() {
        println!("{} acceptance criteria failed: {}", failed.len(), failed.join(", "));
        std::process::exit(1);
    }
}
