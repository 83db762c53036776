use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use claimforge::apiservice::{self, ServiceState};
use claimforge::evalharness::{
    ablation_matrix, evaluate, AblationSpec, Identity, PolicyRewriter, RandomEdits, ReportBundle, DEFAULT_FLAT_EPSILON,
};
use claimforge::ingest::{load_dataset, make_planted_benchmark, save_claims, save_corpus, save_jsonl, Dataset, PlantedConfig};
use claimforge::lexedit::{apply_action, tokenize, Lexicon, TokenizedClaim};
use claimforge::policy::{
    first_step_pairs, train, train_classifier, ClassifierVariant, PolicyConfig, RolloutOptions, StateEncoderKind,
    TrainedPolicy,
};
use claimforge::searchenv::{
    build_index, load_snapshot, save_snapshot, BackendKind, EndpointConfig, Metric, RewardEnv, RewardSpec, SearchEndpoint,
};
use claimforge::trajgen::{dataset_stats, generate_dataset, read_trajectories, write_trajectories, GenConfig, RewardMode};

type BoxError = Box<dyn std::error::Error>;

#[derive(Parser)]
#[command(name = "claimforge", version, about = "Rewrite claims into better search queries")]
struct Cli {
    /// Directory with synonyms.tsv, pos.tsv and verbs.tsv (default: bundled lexicon)
    #[arg(long, global = true)]
    lexicon: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the planted benchmark (corpus, claims, train/dev split, answer key)
    Fixtures {
        #[arg(long, required = true)]
        planted: bool,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Fraction of claims in train.jsonl; the rest go to dev.jsonl
        #[arg(long, default_value_t = 5.0 / 6.0)]
        train_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate training trajectories by breadth-first edit search
    Gen {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long, default_value_t = 50)]
        top_n: usize,
        #[arg(long, default_value_t = 0.03)]
        min_improvement: f64,
        #[arg(long, default_value_t = 0.05)]
        prune_prob: f64,
        #[arg(long)]
        include_negative: bool,
        #[arg(long, value_delimiter = ',', default_value = "dense")]
        modes: Vec<RewardMode>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a decision transformer or the one-step classifier
    Train {
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Dt)]
        mode: Mode,
        /// Keep only trajectories of this reward mode
        #[arg(long, default_value = "dense")]
        rtg: RewardMode,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 4)]
        heads: usize,
        #[arg(long, default_value_t = 128)]
        dim: usize,
        #[arg(long, default_value_t = 4)]
        block_size: usize,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 3e-4)]
        lr: f64,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value = "trainable")]
        state_encoder: StateEncoderKind,
        #[arg(long, value_enum, default_value_t = Variant::Iterated)]
        classifier_variant: Variant,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rewrite one claim with a trained policy
    Rewrite {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        claim: String,
        /// Claim whose relevance judgments score each edit
        #[arg(long)]
        claim_id: String,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        target_rtg: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Compare original claims, random edits and a trained policy
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = DEFAULT_FLAT_EPSILON)]
        flat_epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        target_rtg: Option<f64>,
        /// Also run the retriever x metric x negatives grid, training on these claims
        #[arg(long)]
        ablation_train: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        ablation_epochs: usize,
        #[arg(long, default_value_t = 64)]
        ablation_dim: usize,
    },
    /// Serve the /v1/ JSON API
    Serve {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        claims: PathBuf,
        /// Index snapshots to load instead of building
        #[arg(long)]
        index: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "bm25,knn")]
        backends: Vec<BackendKind>,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: std::net::SocketAddr,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Dt,
    Classifier,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Once,
    Iterated,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    claims: PathBuf,
    #[arg(long, default_value = "bm25")]
    backend: BackendKind,
    #[arg(long, default_value = "ap")]
    metric: Metric,
    #[arg(long, default_value_t = 50)]
    k: usize,
    /// Index snapshot: loaded if present, otherwise built and written here
    #[arg(long)]
    index: Option<PathBuf>,
}

fn endpoint(data: &Dataset, backend: BackendKind, index: Option<&Path>) -> Result<Arc<SearchEndpoint>, BoxError> {
    if let Some(p) = index.filter(|p| p.exists()) {
        let ep = load_snapshot(p)?;
        if ep.kind() != backend {
            return Err(format!("{} holds a {} index, not {backend}", p.display(), ep.kind()).into());
        }
        return Ok(Arc::new(ep));
    }
    let ep = build_index(&data.corpus, backend, &EndpointConfig::default())?;
    if let Some(p) = index {
        save_snapshot(&ep, p)?;
    }
    Ok(Arc::new(ep))
}

struct Loaded {
    data: Dataset,
    env: RewardEnv,
    claims: Vec<TokenizedClaim>,
}

fn load(a: &DataArgs, lex: &Lexicon) -> Result<Loaded, BoxError> {
    let data = load_dataset(&a.claims, &a.corpus)?;
    let ep = endpoint(&data, a.backend, a.index.as_deref())?;
    let env = RewardEnv::new(ep, &data.corpus, RewardSpec::new(a.metric, a.k));
    let claims = tokenize_all(&data, lex)?;
    Ok(Loaded { data, env, claims })
}

fn tokenize_all(data: &Dataset, lex: &Lexicon) -> Result<Vec<TokenizedClaim>, BoxError> {
    data.claims
        .iter()
        .map(|c| Ok(tokenize(&c.claim, lex)?.with_claim_id(&c.claim_id)))
        .collect()
}

fn run(cli: Cli) -> Result<(), BoxError> {
    let lex = match &cli.lexicon {
        Some(dir) => Lexicon::load_dir(dir)?,
        None => Lexicon::bundled(),
    };
    match cli.cmd {
        Cmd::Fixtures {
            n,
            seed,
            train_fraction,
            out,
            ..
        } => {
            if n == 0 {
                return Err("--n must be at least 1".into());
            }
            std::fs::create_dir_all(&out)?;
            let bench = make_planted_benchmark(&PlantedConfig::new(n, seed));
            let cut = ((n as f64 * train_fraction).round() as usize).min(n);
            save_corpus(&bench.corpus, out.join("corpus.jsonl"))?;
            save_claims(&bench.claims, out.join("claims.jsonl"))?;
            save_claims(&bench.claims[..cut], out.join("train.jsonl"))?;
            save_claims(&bench.claims[cut..], out.join("dev.jsonl"))?;
            save_jsonl(&bench.answer_key, out.join("answer_key.jsonl"))?;
            println!(
                "{} claims ({cut} train), {} documents; mean reward original {:.4}, answer key {:.4}",
                bench.claims.len(),
                bench.corpus.len(),
                bench.mean_original(),
                bench.mean_best()
            );
        }
        Cmd::Gen {
            data,
            depth,
            top_n,
            min_improvement,
            prune_prob,
            include_negative,
            modes,
            seed,
            out,
        } => {
            let l = load(&data, &lex)?;
            let cfg = GenConfig {
                max_depth: depth,
                min_improvement,
                random_prune_prob: prune_prob,
                top_n_sequences: top_n,
                include_negative,
                seed,
            };
            let report = generate_dataset(&l.claims, &l.env, &lex, &cfg, &modes)?;
            write_trajectories(&report.trajectories, &out)?;
            let stats = dataset_stats(&report.trajectories);
            println!(
                "{} trajectories from {} claims ({} improved, {} already perfect, {} without improvement); {} states scored",
                report.trajectories.len(),
                l.claims.len(),
                report.improved,
                report.already_perfect,
                report.no_improvement,
                report.states_scored
            );
            println!("{}", serde_json::to_string_pretty(&stats)?);
        }
        Cmd::Train {
            trajectories,
            mode,
            rtg,
            layers,
            heads,
            dim,
            block_size,
            epochs,
            lr,
            batch_size,
            state_encoder,
            classifier_variant,
            seed,
            out,
        } => {
            let trajs: Vec<_> = read_trajectories(&trajectories)?.into_iter().filter(|t| t.mode == rtg).collect();
            let cfg = PolicyConfig {
                n_layers: layers,
                n_heads: heads,
                embed_dim: dim,
                block_size,
                epochs,
                learning_rate: lr,
                batch_size,
                state_encoder,
                seed,
                ..PolicyConfig::default()
            };
            let (mut policy, report) = match mode {
                Mode::Dt => train(&trajs, &cfg)?,
                Mode::Classifier => train_classifier(&first_step_pairs(&trajs), &cfg)?,
            };
            policy.set_classifier_variant(match classifier_variant {
                Variant::Once => ClassifierVariant::Once,
                Variant::Iterated => ClassifierVariant::Iterated,
            });
            policy.save(&out)?;
            println!(
                "{} examples, {} steps, loss {:.4} -> {:.4}, target rtg {:.4}, {} parameters",
                report.examples,
                report.optimizer_steps,
                report.initial_loss,
                report.epoch_losses.last().copied().unwrap_or(report.initial_loss),
                policy.target_rtg(),
                policy.parameter_count()
            );
        }
        Cmd::Rewrite {
            ckpt,
            claim,
            claim_id,
            data,
            target_rtg,
            json,
        } => rewrite(&lex, &ckpt, &claim, claim_id, data, target_rtg, json)?,
        Cmd::Eval {
            ckpt,
            data,
            report,
            flat_epsilon,
            seed,
            target_rtg,
            ablation_train,
            ablation_epochs,
            ablation_dim,
        } => {
            let policy = TrainedPolicy::load(&ckpt)?;
            let l = load(&data, &lex)?;
            let mut dt = PolicyRewriter::new(&policy, "policy");
            dt.options.target_rtg = target_rtg;
            let block = policy.config().block_size;
            let reports = vec![
                evaluate(&Identity, &l.claims, &l.env, &lex)?,
                evaluate(&RandomEdits { n_edits: block, seed }, &l.claims, &l.env, &lex)?,
                evaluate(&dt, &l.claims, &l.env, &lex)?,
            ];
            for r in &reports {
                let rel = r.relative_improvement.map_or("-".into(), |x| format!("{:+.1}%", 100.0 * x));
                println!("{:<10}{:.4}  ({rel} vs original, {:.2} edits)", r.rewriter, r.rewritten_mean, r.mean_edits);
            }
            let mut bundle = ReportBundle::new(reports, block, flat_epsilon);
            if let Some(train_path) = ablation_train {
                let train_data = load_dataset(&train_path, &data.corpus)?;
                let train_claims = tokenize_all(&train_data, &lex)?;
                let endpoints = vec![
                    endpoint(&l.data, BackendKind::Bm25, None)?,
                    endpoint(&l.data, BackendKind::Knn, None)?,
                ];
                let spec = AblationSpec {
                    k: data.k,
                    policy: PolicyConfig {
                        embed_dim: ablation_dim,
                        epochs: ablation_epochs,
                        seed,
                        ..policy.config().clone()
                    },
                    gen: GenConfig {
                        seed,
                        ..GenConfig::default()
                    },
                    ..AblationSpec::default()
                };
                let table = ablation_matrix(&spec, &endpoints, &l.data.corpus, &train_claims, &l.claims, &lex)?;
                print!("{}", table.render());
                bundle.ablation = Some(table);
            }
            bundle.write(&report)?;
            println!("report written to {}", report.display());
        }
        Cmd::Serve {
            corpus,
            claims,
            index,
            backends,
            ckpt,
            addr,
        } => {
            let data = load_dataset(&claims, &corpus)?;
            let mut envs = BTreeMap::new();
            for p in &index {
                let ep = Arc::new(load_snapshot(p)?);
                envs.insert(ep.kind(), RewardEnv::new(ep, &data.corpus, RewardSpec::default()));
            }
            for b in backends {
                if !envs.contains_key(&b) {
                    let ep = endpoint(&data, b, None)?;
                    envs.insert(b, RewardEnv::new(ep, &data.corpus, RewardSpec::default()));
                }
            }
            let policy = ckpt.map(TrainedPolicy::load).transpose()?;
            let state = Arc::new(ServiceState {
                lexicon: lex,
                corpus: data.corpus,
                envs,
                policy,
            });
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(apiservice::serve(state, addr))?;
        }
    }
    Ok(())
}

fn rewrite(
    lex: &Lexicon,
    ckpt: &Path,
    text: &str,
    id: String,
    data: DataArgs,
    target_rtg: Option<f64>,
    json: bool,
) -> Result<(), BoxError> {
    let policy = TrainedPolicy::load(ckpt)?;
    let claim = tokenize(text, lex)?.with_claim_id(&id);
    let opts = RolloutOptions {
        target_rtg,
        ..RolloutOptions::default()
    };
    let dataset = load_dataset(&data.claims, &data.corpus)?;
    let ep = endpoint(&dataset, data.backend, data.index.as_deref())?;
    let env = RewardEnv::new(ep, &dataset.corpus, RewardSpec::new(data.metric, data.k));
    if !env.has_claim(&id) {
        return Err(format!("no relevance judgments for claim {id:?}").into());
    }
    let r = policy.rollout(&claim, &env, lex, &opts)?;
    let mut cur = claim.clone();
    let mut steps = Vec::new();
    for (a, reward) in r.actions.iter().zip(&r.rewards) {
        cur = apply_action(&cur, *a, lex)?;
        steps.push(serde_json::json!({
            "flat": a.flatten(),
            "kind": a.kind.as_str(),
            "position": a.position,
            "text": cur.text(),
            "reward": reward,
        }));
    }
    if json {
        let out = serde_json::json!({
            "claim_id": id,
            "original": claim.text(),
            "original_reward": r.original_reward,
            "steps": steps,
            "final": r.final_claim.text(),
            "final_reward": r.final_reward(),
            "stop": r.stop,
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        println!("{:>3}  {:.4}  {}", "", r.original_reward, claim.text());
        for s in &steps {
            println!(
                "{:>3}  {:.4}  {} @{} -> {}",
                s["flat"].as_u64().unwrap_or_default(),
                s["reward"].as_f64().unwrap_or_default(),
                s["kind"].as_str().unwrap_or_default(),
                s["position"],
                s["text"].as_str().unwrap_or_default()
            );
        }
        println!("stop: {:?}", r.stop);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
