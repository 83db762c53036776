//! Offline policies over the 128-way edit space: a decision transformer
//! conditioned on returns-to-go, a single-step classifier, and a uniform
//! random baseline.

mod checkpoint;
mod model;
mod params;
mod tape;

use std::collections::BTreeMap;

use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexedit::{apply_action, legal_actions, legal_mask, EditAction, Lexicon, TokenizedClaim, ACTION_SPACE};
use crate::searchenv::embed::fnv1a;
use crate::searchenv::{RewardEnv, SearchError};
use crate::trajgen::{RewardMode, Trajectory};

use model::{DtBatch, StateFeatures};
use params::{collect_grads, Adam, ParamStore};
use tape::Tape;

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("no training examples")]
    EmptyDataset,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid policy config: {0}")]
    InvalidConfig(String),
    #[error("action id {0} outside the 128-way space")]
    BadAction(usize),
    #[error("operation needs a {expected} policy")]
    WrongKind { expected: &'static str },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateEncoderKind {
    Trainable,
    Frozen,
}

impl std::str::FromStr for StateEncoderKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "trainable" => Ok(StateEncoderKind::Trainable),
            "frozen" => Ok(StateEncoderKind::Frozen),
            other => Err(format!("unknown state encoder {other:?} (expected trainable or frozen)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    DecisionTransformer,
    Classifier,
}

/// How the classifier is used at inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierVariant {
    /// A single edit.
    Once,
    /// Up to `block_size` edits, re-classifying after each one.
    #[default]
    Iterated,
}

impl std::str::FromStr for ClassifierVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "once" => Ok(ClassifierVariant::Once),
            "iterated" => Ok(ClassifierVariant::Iterated),
            other => Err(format!("unknown classifier variant {other:?} (expected once or iterated)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub embed_dim: usize,
    /// K: maximum edits per episode.
    pub block_size: usize,
    pub state_encoder: StateEncoderKind,
    pub action_vocab: usize,
    /// Hash buckets of the trainable token table.
    pub vocab_buckets: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            n_layers: 2,
            n_heads: 4,
            embed_dim: 128,
            block_size: 4,
            state_encoder: StateEncoderKind::Trainable,
            action_vocab: ACTION_SPACE,
            vocab_buckets: 4096,
            learning_rate: 3e-4,
            epochs: 5,
            batch_size: 32,
            grad_clip: 1.0,
            seed: 0,
        }
    }
}

impl PolicyConfig {
    /// The published model size; far too slow for one CPU.
    pub fn paper() -> Self {
        PolicyConfig {
            n_layers: 6,
            n_heads: 8,
            embed_dim: 768,
            ..PolicyConfig::default()
        }
    }

    /// One layer, one head, eight dimensions. Used for gradient checks.
    pub fn tiny() -> Self {
        PolicyConfig {
            n_layers: 1,
            n_heads: 1,
            embed_dim: 8,
            vocab_buckets: 64,
            ..PolicyConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::InvalidConfig(m.to_string()));
        if self.n_heads == 0 || self.embed_dim == 0 || self.embed_dim % self.n_heads != 0 {
            return bad("embed_dim must be a positive multiple of n_heads");
        }
        if self.block_size == 0 {
            return bad("block_size must be >= 1");
        }
        if self.action_vocab != ACTION_SPACE {
            return bad("action_vocab must be 128");
        }
        if self.vocab_buckets == 0 || self.batch_size == 0 {
            return bad("vocab_buckets and batch_size must be >= 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

/// Per-epoch training telemetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    /// Loss of the untrained model on the whole set.
    pub initial_loss: f64,
    pub examples: usize,
    pub optimizer_steps: usize,
}

/// Inference-time running state of the decision transformer.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeContext {
    pub rtg_remaining: f64,
    /// Returns-to-go fed at each earlier step.
    pub rtgs_so_far: Vec<f64>,
    pub states_so_far: Vec<String>,
    pub actions_so_far: Vec<usize>,
    pub step: usize,
}

impl EpisodeContext {
    pub fn new(target_rtg: f64) -> Self {
        EpisodeContext {
            rtg_remaining: target_rtg,
            rtgs_so_far: Vec::new(),
            states_so_far: Vec::new(),
            actions_so_far: Vec::new(),
            step: 0,
        }
    }

    /// Records a taken step and decrements the return-to-go by its reward.
    pub fn record(&mut self, state: String, action: usize, reward: f64) {
        self.rtgs_so_far.push(self.rtg_remaining);
        self.states_so_far.push(state);
        self.actions_so_far.push(action);
        self.rtg_remaining -= reward;
        self.step += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    AlreadyPerfect,
    ReachedPerfect,
    StepLimit,
    NoLegalAction,
    IllegalAction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub original: TokenizedClaim,
    pub original_reward: f64,
    pub final_claim: TokenizedClaim,
    pub actions: Vec<EditAction>,
    pub rewards: Vec<f64>,
    /// Return-to-go after each step (empty for non-conditioned policies).
    pub rtg_remaining: Vec<f64>,
    pub stop: StopReason,
}

impl Rollout {
    pub fn final_reward(&self) -> f64 {
        self.rewards.last().copied().unwrap_or(self.original_reward)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutOptions {
    /// Overrides the checkpoint's stored target.
    pub target_rtg: Option<f64>,
    /// End the episode when the unmasked argmax is illegal instead of masking.
    pub terminate_on_illegal: bool,
    pub classifier_variant: Option<ClassifierVariant>,
}

impl Default for RolloutOptions {
    fn default() -> Self {
        RolloutOptions {
            target_rtg: None,
            terminate_on_illegal: false,
            classifier_variant: None,
        }
    }
}

/// A trained (or freshly initialized) policy of either kind.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPolicy {
    kind: PolicyKind,
    config: PolicyConfig,
    store: ParamStore,
    target_rtg: f64,
    reward_mode: Option<RewardMode>,
    classifier_variant: ClassifierVariant,
}

/// 90th percentile (nearest rank) of the given values; 1.0 when empty.
pub fn percentile_90(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 1.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((0.9 * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

fn argmax(logits: &[f64], allowed: Option<&[bool; ACTION_SPACE]>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &l) in logits.iter().enumerate() {
        if allowed.is_some_and(|m| !m[i]) {
            continue;
        }
        if best.is_none_or(|(_, b)| l > b) {
            best = Some((i, l));
        }
    }
    best.map(|(i, _)| i)
}

impl TrainedPolicy {
    /// Untrained weights, seeded by `config.seed`.
    pub fn init(kind: PolicyKind, config: PolicyConfig) -> Result<Self, PolicyError> {
        config.validate()?;
        let store = match kind {
            PolicyKind::DecisionTransformer => model::init_dt(&config),
            PolicyKind::Classifier => model::init_classifier(&config),
        };
        Ok(TrainedPolicy {
            kind,
            config,
            store,
            target_rtg: 1.0,
            reward_mode: None,
            classifier_variant: ClassifierVariant::default(),
        })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn target_rtg(&self) -> f64 {
        self.target_rtg
    }

    pub fn set_target_rtg(&mut self, rtg: f64) {
        self.target_rtg = rtg;
    }

    pub fn reward_mode(&self) -> Option<RewardMode> {
        self.reward_mode
    }

    pub fn classifier_variant(&self) -> ClassifierVariant {
        self.classifier_variant
    }

    pub fn set_classifier_variant(&mut self, v: ClassifierVariant) {
        self.classifier_variant = v;
    }

    pub fn parameter_count(&self) -> usize {
        self.store.scalar_count()
    }

    fn require(&self, kind: PolicyKind) -> Result<(), PolicyError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(PolicyError::WrongKind {
                expected: match kind {
                    PolicyKind::DecisionTransformer => "decision transformer",
                    PolicyKind::Classifier => "classifier",
                },
            })
        }
    }

    /// The encoder's state vector for `text` (length `embed_dim`).
    pub fn encode_state(&self, text: &str) -> Vec<f64> {
        let f = model::featurize(&self.config, text);
        let table = self.store.get(model::table_name(&self.config));
        let mut out = vec![0.0; self.config.embed_dim];
        for (row, w) in f.groups {
            for (o, x) in out.iter_mut().zip(table.row(row)) {
                *o += w * x;
            }
        }
        out
    }

    fn episode_batch(&self, trajectories: &[Trajectory]) -> Result<DtBatch, PolicyError> {
        let k = self.config.block_size;
        let mut batch = DtBatch::default();
        for t in trajectories {
            if t.steps.len() > k {
                return Err(PolicyError::ShapeMismatch(format!(
                    "trajectory for {} has {} steps, block size is {k}",
                    t.claim_id,
                    t.steps.len()
                )));
            }
            if let Some(s) = t.steps.iter().find(|s| s.action >= ACTION_SPACE) {
                return Err(PolicyError::BadAction(s.action));
            }
            let rtg: Vec<f64> = t.steps.iter().map(|s| s.rtg).collect();
            let states = t.steps.iter().map(|s| model::featurize(&self.config, &s.state)).collect();
            let actions: Vec<usize> = t.steps.iter().map(|s| s.action).collect();
            batch.push_episode(k, &rtg, states, &actions);
        }
        Ok(batch)
    }

    /// Action logits for every step of every trajectory, left-padded to K:
    /// shape `(batch, K, 128)`. Padded rows are whatever the network emits
    /// for masked positions and carry no meaning.
    pub fn dt_forward(&self, trajectories: &[Trajectory]) -> Result<Array3<f64>, PolicyError> {
        self.require(PolicyKind::DecisionTransformer)?;
        let batch = self.episode_batch(trajectories)?;
        let mut t = Tape::new();
        let vars = self.store.load(&mut t);
        let logits = model::dt_graph(&mut t, &self.store, &vars, &self.config, &batch);
        let k = self.config.block_size;
        Ok(t.value(logits)
            .clone()
            .into_shape_with_order((trajectories.len(), k, ACTION_SPACE))
            .expect("rows are batch * K"))
    }

    fn loss_graph(&self, tape: &mut Tape, examples: &Examples) -> tape::Var {
        let vars = self.store.load(tape);
        match examples {
            Examples::Episodes(batch) => {
                let logits = model::dt_graph(tape, &self.store, &vars, &self.config, batch);
                let weights = batch.valid.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
                tape.cross_entropy(logits, batch.actions.clone(), weights)
            }
            Examples::FirstSteps(states, actions) => {
                let logits = model::classifier_graph(tape, &self.store, &vars, &self.config, states);
                tape.cross_entropy(logits, actions.clone(), vec![1.0; actions.len()])
            }
        }
    }

    /// Mean cross-entropy over non-padded steps.
    pub fn loss(&self, trajectories: &[Trajectory]) -> Result<f64, PolicyError> {
        let examples = self.examples(trajectories)?;
        let mut t = Tape::new();
        let l = self.loss_graph(&mut t, &examples);
        Ok(t.value(l)[[0, 0]])
    }

    fn examples(&self, trajectories: &[Trajectory]) -> Result<Examples, PolicyError> {
        match self.kind {
            PolicyKind::DecisionTransformer => Ok(Examples::Episodes(self.episode_batch(trajectories)?)),
            PolicyKind::Classifier => {
                let pairs = first_step_pairs(trajectories);
                self.pair_examples(&pairs)
            }
        }
    }

    fn pair_examples(&self, pairs: &[(String, usize)]) -> Result<Examples, PolicyError> {
        if let Some(&(_, a)) = pairs.iter().find(|(_, a)| *a >= ACTION_SPACE) {
            return Err(PolicyError::BadAction(a));
        }
        Ok(Examples::FirstSteps(
            pairs.iter().map(|(s, _)| model::featurize(&self.config, s)).collect(),
            pairs.iter().map(|(_, a)| *a).collect(),
        ))
    }

    /// Logits for the next action given the episode so far and the current state.
    pub fn action_logits(&self, ctx: &EpisodeContext, state: &str) -> Result<Vec<f64>, PolicyError> {
        self.require(PolicyKind::DecisionTransformer)?;
        let k = self.config.block_size;
        // keep the most recent K-1 steps of history
        let start = ctx.states_so_far.len().saturating_sub(k - 1);
        let mut rtg: Vec<f64> = ctx.rtgs_so_far[start..].to_vec();
        rtg.push(ctx.rtg_remaining);
        let mut states: Vec<StateFeatures> = ctx.states_so_far[start..]
            .iter()
            .map(|s| model::featurize(&self.config, s))
            .collect();
        states.push(model::featurize(&self.config, state));
        let mut actions = ctx.actions_so_far[start..].to_vec();
        actions.push(0);
        let mut batch = DtBatch::default();
        batch.push_episode(k, &rtg, states, &actions);
        let mut t = Tape::new();
        let vars = self.store.load(&mut t);
        let logits = model::dt_graph(&mut t, &self.store, &vars, &self.config, &batch);
        Ok(t.value(logits).row(k - 1).to_vec())
    }

    pub fn classify_logits(&self, state: &str) -> Result<Vec<f64>, PolicyError> {
        self.require(PolicyKind::Classifier)?;
        let mut t = Tape::new();
        let vars = self.store.load(&mut t);
        let f = vec![model::featurize(&self.config, state)];
        let logits = model::classifier_graph(&mut t, &self.store, &vars, &self.config, &f);
        Ok(t.value(logits).row(0).to_vec())
    }

    /// Unmasked argmax of the classifier.
    pub fn classify(&self, state: &str) -> Result<usize, PolicyError> {
        Ok(argmax(&self.classify_logits(state)?, None).expect("128 logits"))
    }

    /// Edits `claim` step by step until it scores 1.0, no legal edit is
    /// left, or K edits were made.
    pub fn rollout(
        &self,
        claim: &TokenizedClaim,
        env: &RewardEnv,
        lexicon: &Lexicon,
        opts: &RolloutOptions,
    ) -> Result<Rollout, PolicyError> {
        let original_reward = env.reward(claim)?;
        let mut out = Rollout {
            original: claim.clone(),
            original_reward,
            final_claim: claim.clone(),
            actions: Vec::new(),
            rewards: Vec::new(),
            rtg_remaining: Vec::new(),
            stop: StopReason::AlreadyPerfect,
        };
        if original_reward >= 1.0 {
            return Ok(out);
        }
        let max_steps = match (self.kind, opts.classifier_variant.unwrap_or(self.classifier_variant)) {
            (PolicyKind::Classifier, ClassifierVariant::Once) => 1,
            _ => self.config.block_size,
        };
        let mut ctx = EpisodeContext::new(opts.target_rtg.unwrap_or(self.target_rtg));
        out.stop = StopReason::StepLimit;
        for _ in 0..max_steps {
            let mask = legal_mask(&out.final_claim, lexicon);
            if !mask.iter().any(|&m| m) {
                out.stop = StopReason::NoLegalAction;
                break;
            }
            let text = out.final_claim.text();
            let logits = match self.kind {
                PolicyKind::DecisionTransformer => self.action_logits(&ctx, &text)?,
                PolicyKind::Classifier => self.classify_logits(&text)?,
            };
            let choice = if opts.terminate_on_illegal {
                let a = argmax(&logits, None).expect("128 logits");
                if !mask[a] {
                    out.stop = StopReason::IllegalAction;
                    break;
                }
                a
            } else {
                argmax(&logits, Some(&mask)).expect("some action is legal")
            };
            let action = EditAction::unflatten(choice).expect("index below 128");
            out.final_claim = apply_action(&out.final_claim, action, lexicon).expect("masked to legal");
            let r = env.reward(&out.final_claim)?;
            ctx.record(text, choice, r);
            out.actions.push(action);
            out.rewards.push(r);
            if self.kind == PolicyKind::DecisionTransformer {
                out.rtg_remaining.push(ctx.rtg_remaining);
            }
            if r >= 1.0 {
                out.stop = StopReason::ReachedPerfect;
                break;
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), PolicyError> {
        checkpoint::save(self, path.as_ref())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, PolicyError> {
        checkpoint::load(path.as_ref())
    }
}

enum Examples {
    Episodes(DtBatch),
    FirstSteps(Vec<StateFeatures>, Vec<usize>),
}

impl Examples {
    fn len(&self) -> usize {
        match self {
            Examples::Episodes(b) => b.valid.len(),
            Examples::FirstSteps(_, a) => a.len(),
        }
    }

    /// Sub-batch of the given example indices (episodes for the DT).
    fn subset(&self, k: usize, idx: &[usize]) -> Examples {
        match self {
            Examples::Episodes(b) => {
                let mut out = DtBatch::default();
                for &i in idx {
                    let r = i * k..(i + 1) * k;
                    out.rtg.extend_from_slice(&b.rtg[r.clone()]);
                    out.states.extend_from_slice(&b.states[r.clone()]);
                    out.actions.extend_from_slice(&b.actions[r.clone()]);
                    out.time.extend_from_slice(&b.time[r.clone()]);
                    out.valid.extend_from_slice(&b.valid[r]);
                }
                Examples::Episodes(out)
            }
            Examples::FirstSteps(s, a) => Examples::FirstSteps(
                idx.iter().map(|&i| s[i].clone()).collect(),
                idx.iter().map(|&i| a[i]).collect(),
            ),
        }
    }

    fn units(&self, k: usize) -> usize {
        match self {
            Examples::Episodes(b) => b.valid.len() / k,
            Examples::FirstSteps(_, a) => a.len(),
        }
    }

    fn weight(&self) -> f64 {
        match self {
            Examples::Episodes(b) => b.valid.iter().filter(|&&v| v).count() as f64,
            Examples::FirstSteps(_, a) => a.len() as f64,
        }
    }
}

/// `(state, action)` of every trajectory's first step.
pub fn first_step_pairs(trajectories: &[Trajectory]) -> Vec<(String, usize)> {
    trajectories
        .iter()
        .filter_map(|t| t.steps.first().map(|s| (s.state.clone(), s.action)))
        .collect()
}

fn fit(policy: &mut TrainedPolicy, examples: &Examples) -> TrainReport {
    let cfg = policy.config.clone();
    let k = cfg.block_size;
    let mut adam = Adam::new(&policy.store, cfg.learning_rate, cfg.grad_clip);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let initial_loss = {
        let mut t = Tape::new();
        let l = policy.loss_graph(&mut t, examples);
        t.value(l)[[0, 0]]
    };
    let mut order: Vec<usize> = (0..examples.units(k)).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut steps = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut sum, mut weight) = (0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let sub = examples.subset(k, chunk);
            let w = sub.weight();
            if w == 0.0 {
                continue;
            }
            let mut t = Tape::new();
            let loss = policy.loss_graph(&mut t, &sub);
            sum += t.value(loss)[[0, 0]] * w;
            weight += w;
            let grads = collect_grads(&policy.store, t.backward(loss));
            adam.step(&mut policy.store, &grads);
            steps += 1;
        }
        let l = if weight > 0.0 { sum / weight } else { 0.0 };
        log::info!("epoch {} loss {:.5}", epoch + 1, l);
        epoch_losses.push(l);
    }
    TrainReport {
        epoch_losses,
        initial_loss,
        examples: examples.len(),
        optimizer_steps: steps,
    }
}

/// Trains a decision transformer on trajectories of one reward mode.
/// The inference target return-to-go is set to the 90th percentile of the
/// trajectories' initial returns-to-go.
pub fn train(trajectories: &[Trajectory], cfg: &PolicyConfig) -> Result<(TrainedPolicy, TrainReport), PolicyError> {
    if trajectories.iter().all(|t| t.steps.is_empty()) {
        return Err(PolicyError::EmptyDataset);
    }
    let mut policy = TrainedPolicy::init(PolicyKind::DecisionTransformer, cfg.clone())?;
    let examples = Examples::Episodes(policy.episode_batch(trajectories)?);
    let initial: Vec<f64> = trajectories.iter().map(|t| t.initial_rtg()).collect();
    policy.target_rtg = percentile_90(&initial);
    policy.reward_mode = trajectories.first().map(|t| t.mode);
    let report = fit(&mut policy, &examples);
    Ok((policy, report))
}

/// Trains the single-step classifier on `(state, action)` pairs.
pub fn train_classifier(pairs: &[(String, usize)], cfg: &PolicyConfig) -> Result<(TrainedPolicy, TrainReport), PolicyError> {
    if pairs.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    let mut policy = TrainedPolicy::init(PolicyKind::Classifier, cfg.clone())?;
    let examples = policy.pair_examples(pairs)?;
    let report = fit(&mut policy, &examples);
    Ok((policy, report))
}

/// Per-claim RNG seed for the random baseline.
pub fn claim_seed(seed: u64, claim_id: &str) -> u64 {
    let mut key = seed.to_le_bytes().to_vec();
    key.extend_from_slice(claim_id.as_bytes());
    fnv1a(&key)
}

/// `n_edits` uniformly drawn legal edits applied in sequence. Stops early
/// only if nothing is legal.
pub fn random_policy(claim: &TokenizedClaim, n_edits: usize, seed: u64, lexicon: &Lexicon) -> Vec<EditAction> {
    let mut rng = ChaCha8Rng::seed_from_u64(claim_seed(seed, claim.claim_id()));
    let mut cur = claim.clone();
    let mut out = Vec::with_capacity(n_edits);
    for _ in 0..n_edits {
        let Some(&a) = legal_actions(&cur, lexicon).choose(&mut rng) else { break };
        cur = apply_action(&cur, a, lexicon).expect("legal");
        out.push(a);
    }
    out
}

/// Result of comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_parameter: String,
    pub checked: usize,
    /// Per-parameter worst relative error.
    pub per_parameter: BTreeMap<String, f64>,
}

/// Checks every trainable scalar's gradient of the training loss on
/// `trajectories` against `(L(p+h) - L(p-h)) / 2h`. Relative error is
/// `|a - f| / max(|a|, |f|, floor)`.
pub fn gradient_check(policy: &TrainedPolicy, trajectories: &[Trajectory], h: f64, floor: f64) -> Result<GradCheck, PolicyError> {
    let examples = policy.examples(trajectories)?;
    let mut t = Tape::new();
    let l = policy.loss_graph(&mut t, &examples);
    let grads = collect_grads(&policy.store, t.backward(l));
    let mut probe = policy.clone();
    let loss_at = |p: &TrainedPolicy| {
        let mut t = Tape::new();
        let l = p.loss_graph(&mut t, &examples);
        t.value(l)[[0, 0]]
    };
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst_parameter: String::new(),
        checked: 0,
        per_parameter: BTreeMap::new(),
    };
    for id in 0..policy.store.len() {
        if !policy.store.trainable[id] {
            continue;
        }
        let name = policy.store.names[id].clone();
        let shape = policy.store.values[id].dim();
        let mut worst = 0.0f64;
        for r in 0..shape.0 {
            for c in 0..shape.1 {
                let orig = probe.store.values[id][[r, c]];
                probe.store.values[id][[r, c]] = orig + h;
                let up = loss_at(&probe);
                probe.store.values[id][[r, c]] = orig - h;
                let down = loss_at(&probe);
                probe.store.values[id][[r, c]] = orig;
                let fd = (up - down) / (2.0 * h);
                let an = grads[id].as_ref().map_or(0.0, |g| g[[r, c]]);
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(floor);
                worst = worst.max(rel);
                report.checked += 1;
            }
        }
        if worst > report.max_rel_error || report.worst_parameter.is_empty() {
            report.max_rel_error = report.max_rel_error.max(worst);
            report.worst_parameter = name.clone();
        }
        report.per_parameter.insert(name, worst);
    }
    Ok(report)
}
