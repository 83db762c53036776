//! Offline trajectory generation by depth-limited breadth-first search over
//! edit sequences.
//!
//! From the original claim, every legal edit is applied and scored. By
//! default only strict improvements are expanded; children whose relative
//! gain is under `min_improvement` are pruned, and survivors are dropped at
//! random with probability `random_prune_prob`. Identical token sequences on
//! the same level are merged (first one wins). Every leaf of the resulting
//! tree is a candidate edit path; the `top_n_sequences` paths with the
//! largest final gain become trajectories.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexedit::{apply_action, legal_actions, EditAction, EditKind, Lexicon, TokenizedClaim, ACTION_SPACE};
use crate::searchenv::embed::fnv1a;
use crate::searchenv::{RewardEnv, SearchError};

/// Denominator floor for relative improvement when the parent scores 0.
pub const IMPROVEMENT_EPS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TrajGenError {
    #[error("no improving edit sequence found")]
    NoImprovementFound,
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    Dense,
    Sparse,
}

impl std::str::FromStr for RewardMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "dense" => Ok(RewardMode::Dense),
            "sparse" => Ok(RewardMode::Sparse),
            other => Err(format!("unknown reward mode {other:?} (expected dense or sparse)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub rtg: f64,
    /// Query text before the action is applied.
    pub state: String,
    pub action: usize,
    /// Reward of the query after the action.
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub claim_id: String,
    pub mode: RewardMode,
    pub steps: Vec<Step>,
    pub max_seen_reward: f64,
    /// Reward of the unedited claim.
    #[serde(default)]
    pub original_reward: f64,
}

impl Trajectory {
    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn final_reward(&self) -> f64 {
        self.steps.last().map_or(self.original_reward, |s| s.reward)
    }

    pub fn initial_rtg(&self) -> f64 {
        self.steps.first().map_or(0.0, |s| s.rtg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub max_depth: usize,
    pub min_improvement: f64,
    pub random_prune_prob: f64,
    pub top_n_sequences: usize,
    pub include_negative: bool,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_depth: 4,
            min_improvement: 0.03,
            random_prune_prob: 0.05,
            top_n_sequences: 50,
            include_negative: false,
            seed: 0,
        }
    }
}

impl GenConfig {
    /// Exhaustive improvement-only search: no threshold, no random pruning.
    pub fn unpruned(max_depth: usize) -> Self {
        GenConfig {
            max_depth,
            min_improvement: 0.0,
            random_prune_prob: 0.0,
            top_n_sequences: usize::MAX,
            ..GenConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrajGenError> {
        if self.max_depth == 0 {
            return Err(TrajGenError::InvalidConfig("max_depth must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.random_prune_prob) {
            return Err(TrajGenError::InvalidConfig("random_prune_prob must be in [0, 1)".into()));
        }
        if self.top_n_sequences == 0 {
            return Err(TrajGenError::InvalidConfig("top_n_sequences must be >= 1".into()));
        }
        if self.min_improvement < 0.0 {
            return Err(TrajGenError::InvalidConfig("min_improvement must be >= 0".into()));
        }
        Ok(())
    }
}

/// Returns-to-go: suffix sums (dense) or zeros with `max_seen` on the last step (sparse).
pub fn compute_rtg(rewards: &[f64], mode: RewardMode, max_seen: f64) -> Vec<f64> {
    match mode {
        RewardMode::Dense => {
            let mut out = vec![0.0; rewards.len()];
            let mut acc = 0.0;
            for (i, r) in rewards.iter().enumerate().rev() {
                acc += r;
                out[i] = acc;
            }
            out
        }
        RewardMode::Sparse => {
            let mut out = vec![0.0; rewards.len()];
            if let Some(last) = out.last_mut() {
                *last = max_seen;
            }
            out
        }
    }
}

/// One root-to-leaf edit sequence found by the search.
#[derive(Debug, Clone, PartialEq)]
pub struct EditPath {
    pub actions: Vec<EditAction>,
    /// `states[i]` is the query text before `actions[i]`.
    pub states: Vec<String>,
    pub rewards: Vec<f64>,
    pub final_state: TokenizedClaim,
}

impl EditPath {
    pub fn final_reward(&self) -> f64 {
        *self.rewards.last().expect("paths are non-empty")
    }

    pub fn to_trajectory(&self, mode: RewardMode, original_reward: f64, max_seen: f64) -> Trajectory {
        let rtg = compute_rtg(&self.rewards, mode, max_seen);
        Trajectory {
            claim_id: self.final_state.claim_id().to_string(),
            mode,
            steps: self
                .actions
                .iter()
                .zip(&self.states)
                .zip(&self.rewards)
                .zip(rtg)
                .map(|(((a, s), r), rtg)| Step {
                    rtg,
                    state: s.clone(),
                    action: a.flatten(),
                    reward: *r,
                })
                .collect(),
            max_seen_reward: max_seen,
            original_reward,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenStatus {
    Improved,
    AlreadyPerfect,
    NoImprovementFound,
}

/// Everything the search learned about one claim.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub claim_id: String,
    pub original_reward: f64,
    pub max_seen_reward: f64,
    pub status: GenStatus,
    /// Ranked best-first, already cut to `top_n_sequences`.
    pub paths: Vec<EditPath>,
    /// Number of distinct states scored.
    pub states_scored: usize,
}

impl SearchOutcome {
    pub fn trajectories(&self, modes: &[RewardMode]) -> Vec<Trajectory> {
        let mut out = Vec::with_capacity(self.paths.len() * modes.len());
        for p in &self.paths {
            for &m in modes {
                out.push(p.to_trajectory(m, self.original_reward, self.max_seen_reward));
            }
        }
        out
    }
}

#[derive(Clone)]
struct Node {
    claim: TokenizedClaim,
    reward: f64,
    actions: Vec<EditAction>,
    states: Vec<String>,
    rewards: Vec<f64>,
}

/// Caches rewards by lowercased token sequence.
pub(crate) struct RewardMemo<'a> {
    env: &'a RewardEnv,
    cache: HashMap<Vec<String>, f64>,
}

impl<'a> RewardMemo<'a> {
    pub(crate) fn new(env: &'a RewardEnv) -> Self {
        RewardMemo {
            env,
            cache: HashMap::new(),
        }
    }

    pub(crate) fn reward(&mut self, claim: &TokenizedClaim) -> Result<f64, SearchError> {
        match self.cache.entry(claim.key()) {
            Entry::Occupied(e) => Ok(*e.get()),
            Entry::Vacant(e) => Ok(*e.insert(self.env.reward(claim)?)),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.cache.len()
    }
}

fn prune_draw(seed: u64, claim_id: &str, path: &[EditAction], action: EditAction) -> f64 {
    let mut key = Vec::with_capacity(claim_id.len() + 16 + path.len() + 1);
    key.extend_from_slice(&seed.to_le_bytes());
    key.extend_from_slice(claim_id.as_bytes());
    key.push(0xff);
    key.extend(path.iter().map(|a| a.flatten() as u8));
    key.push(action.flatten() as u8);
    ChaCha8Rng::seed_from_u64(fnv1a(&key)).gen::<f64>()
}

/// Runs the pruned BFS for one claim.
pub fn search_paths(
    claim: &TokenizedClaim,
    env: &RewardEnv,
    lexicon: &Lexicon,
    cfg: &GenConfig,
) -> Result<SearchOutcome, TrajGenError> {
    cfg.validate()?;
    let mut memo = RewardMemo::new(env);
    let r0 = memo.reward(claim)?;
    let mut outcome = SearchOutcome {
        claim_id: claim.claim_id().to_string(),
        original_reward: r0,
        max_seen_reward: r0,
        status: GenStatus::AlreadyPerfect,
        paths: Vec::new(),
        states_scored: 1,
    };
    if r0 >= 1.0 {
        return Ok(outcome);
    }

    let mut level = vec![Node {
        claim: claim.clone(),
        reward: r0,
        actions: Vec::new(),
        states: Vec::new(),
        rewards: Vec::new(),
    }];
    let mut leaves: Vec<Node> = Vec::new();
    for depth in 1..=cfg.max_depth {
        let mut next: Vec<Node> = Vec::new();
        let mut seen: HashMap<Vec<String>, usize> = HashMap::new();
        for node in level {
            let mut expanded = false;
            for action in legal_actions(&node.claim, lexicon) {
                let child = apply_action(&node.claim, action, lexicon).expect("legal action applies");
                let r = memo.reward(&child)?;
                outcome.max_seen_reward = outcome.max_seen_reward.max(r);
                let delta = r - node.reward;
                let keep = if cfg.include_negative { delta != 0.0 } else { delta > 0.0 };
                if !keep || delta.abs() / node.reward.max(IMPROVEMENT_EPS) < cfg.min_improvement {
                    continue;
                }
                if cfg.random_prune_prob > 0.0
                    && prune_draw(cfg.seed, claim.claim_id(), &node.actions, action) < cfg.random_prune_prob
                {
                    continue;
                }
                expanded = true;
                let key = child.key();
                if let Some(&existing) = seen.get(&key) {
                    if next[existing].reward >= r {
                        continue;
                    }
                }
                let mut actions = node.actions.clone();
                actions.push(action);
                let mut states = node.states.clone();
                states.push(node.claim.text());
                let mut rewards = node.rewards.clone();
                rewards.push(r);
                let child_node = Node {
                    claim: child,
                    reward: r,
                    actions,
                    states,
                    rewards,
                };
                match seen.entry(key) {
                    Entry::Occupied(e) => next[*e.get()] = child_node,
                    Entry::Vacant(e) => {
                        e.insert(next.len());
                        next.push(child_node);
                    }
                }
            }
            if !expanded && depth > 1 {
                leaves.push(node);
            }
        }
        level = next;
        if level.is_empty() {
            break;
        }
    }
    leaves.extend(level);
    outcome.states_scored = memo.len();

    let mut paths: Vec<EditPath> = leaves
        .into_iter()
        .filter(|n| !n.actions.is_empty())
        .filter(|n| {
            if cfg.include_negative {
                n.reward != r0
            } else {
                n.reward > r0
            }
        })
        .map(|n| EditPath {
            actions: n.actions,
            states: n.states,
            rewards: n.rewards,
            final_state: n.claim,
        })
        .collect();
    let gain = |p: &EditPath| {
        let g = p.final_reward() - r0;
        if cfg.include_negative {
            g.abs()
        } else {
            g
        }
    };
    paths.sort_by(|a, b| {
        gain(b)
            .total_cmp(&gain(a))
            .then(a.actions.len().cmp(&b.actions.len()))
            .then_with(|| a.actions.cmp(&b.actions))
    });
    paths.truncate(cfg.top_n_sequences);
    outcome.status = if paths.is_empty() {
        GenStatus::NoImprovementFound
    } else {
        GenStatus::Improved
    };
    outcome.paths = paths;
    Ok(outcome)
}

/// Trajectories for one claim, one per kept path and requested mode.
///
/// A claim that already scores 1.0 yields an empty list; a claim whose
/// search finds nothing yields `NoImprovementFound`.
pub fn generate_trajectories(
    claim: &TokenizedClaim,
    env: &RewardEnv,
    lexicon: &Lexicon,
    cfg: &GenConfig,
    modes: &[RewardMode],
) -> Result<Vec<Trajectory>, TrajGenError> {
    let outcome = search_paths(claim, env, lexicon, cfg)?;
    match outcome.status {
        GenStatus::NoImprovementFound => Err(TrajGenError::NoImprovementFound),
        _ => Ok(outcome.trajectories(modes)),
    }
}

/// Counts per claim outcome plus the trajectories, in claim order then rank.
#[derive(Debug, Clone, Default)]
pub struct GenReport {
    pub trajectories: Vec<Trajectory>,
    pub improved: usize,
    pub already_perfect: usize,
    pub no_improvement: usize,
    pub states_scored: usize,
}

/// Runs the search over many claims; claims are independent work units.
pub fn generate_dataset(
    claims: &[TokenizedClaim],
    env: &RewardEnv,
    lexicon: &Lexicon,
    cfg: &GenConfig,
    modes: &[RewardMode],
) -> Result<GenReport, TrajGenError> {
    cfg.validate()?;
    let outcomes: Vec<SearchOutcome> = claims
        .par_iter()
        .map(|c| search_paths(c, env, lexicon, cfg))
        .collect::<Result<_, _>>()?;
    let mut report = GenReport::default();
    for o in outcomes {
        match o.status {
            GenStatus::Improved => report.improved += 1,
            GenStatus::AlreadyPerfect => report.already_perfect += 1,
            GenStatus::NoImprovementFound => report.no_improvement += 1,
        }
        report.states_scored += o.states_scored;
        report.trajectories.extend(o.trajectories(modes));
    }
    Ok(report)
}

/// Best reward reachable within `depth` edits, by exhaustive search.
/// Returns the reward, one path achieving it (shortest, then lowest flat
/// ids) and the number of distinct states scored.
pub fn best_reachable(
    claim: &TokenizedClaim,
    env: &RewardEnv,
    lexicon: &Lexicon,
    depth: usize,
) -> Result<(f64, Vec<EditAction>, usize), SearchError> {
    let mut memo = RewardMemo::new(env);
    let r0 = memo.reward(claim)?;
    let mut best = (r0, Vec::new());
    let mut visited: HashSet<Vec<String>> = HashSet::new();
    visited.insert(claim.key());
    let mut level = vec![claim.clone()];
    for _ in 0..depth {
        if best.0 >= 1.0 {
            break;
        }
        let mut next = Vec::new();
        for node in &level {
            for action in legal_actions(node, lexicon) {
                let child = apply_action(node, action, lexicon).expect("legal action applies");
                if !visited.insert(child.key()) {
                    continue;
                }
                let r = memo.reward(&child)?;
                if r > best.0 {
                    best = (r, child.edit_history().to_vec());
                    if r >= 1.0 {
                        return Ok((best.0, best.1, memo.len()));
                    }
                }
                next.push(child);
            }
        }
        level = next;
    }
    Ok((best.0, best.1, memo.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindStats {
    pub kind: EditKind,
    pub count: usize,
    pub fraction: f64,
    pub mean_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub trajectories: usize,
    pub steps: usize,
    pub claims: usize,
    pub claims_improved: usize,
    pub mean_best_gain: f64,
    pub per_kind: Vec<KindStats>,
}

/// Per-action-kind frequency and mean reward change, plus per-claim gains.
pub fn dataset_stats(trajectories: &[Trajectory]) -> DatasetStats {
    let mut counts = [0usize; 4];
    let mut delta_sums = [0.0f64; 4];
    let mut best_gain: BTreeMap<&str, f64> = BTreeMap::new();
    let mut steps = 0usize;
    for t in trajectories {
        let mut prev = t.original_reward;
        for s in &t.steps {
            let kind = s.action.min(ACTION_SPACE - 1) / crate::lexedit::MAX_POSITIONS;
            counts[kind] += 1;
            delta_sums[kind] += s.reward - prev;
            prev = s.reward;
            steps += 1;
        }
        let gain = t.final_reward() - t.original_reward;
        let e = best_gain.entry(t.claim_id.as_str()).or_insert(f64::NEG_INFINITY);
        *e = e.max(gain);
    }
    let per_kind = EditKind::ALL
        .iter()
        .map(|&kind| {
            let i = kind.index();
            KindStats {
                kind,
                count: counts[i],
                fraction: if steps == 0 { 0.0 } else { counts[i] as f64 / steps as f64 },
                mean_delta: if counts[i] == 0 { 0.0 } else { delta_sums[i] / counts[i] as f64 },
            }
        })
        .collect();
    let claims_improved = best_gain.values().filter(|&&g| g > 0.0).count();
    let mean_best_gain = if best_gain.is_empty() {
        0.0
    } else {
        best_gain.values().sum::<f64>() / best_gain.len() as f64
    };
    DatasetStats {
        trajectories: trajectories.len(),
        steps,
        claims: best_gain.len(),
        claims_improved,
        mean_best_gain,
        per_kind,
    }
}

pub fn write_trajectories(trajectories: &[Trajectory], path: impl AsRef<Path>) -> Result<(), TrajGenError> {
    let mut w = BufWriter::new(File::create(path)?);
    for t in trajectories {
        serde_json::to_writer(&mut w, t).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectories(path: impl AsRef<Path>) -> Result<Vec<Trajectory>, TrajGenError> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Trajectory = serde_json::from_str(&line).map_err(|e| TrajGenError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if t.steps.iter().any(|s| s.action >= ACTION_SPACE) {
            return Err(TrajGenError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: "action id outside [0, 128)".into(),
            });
        }
        out.push(t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexedit::tokenize;
    use crate::searchenv::{build_index, BackendKind, Corpus, EndpointConfig, RewardSpec};
    use std::sync::Arc;

    #[test]
    fn rtg_examples() {
        let d = compute_rtg(&[0.2, 0.5, 0.9], RewardMode::Dense, 0.9);
        for (a, b) in d.iter().zip([1.6, 1.4, 0.9]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(compute_rtg(&[0.2, 0.5, 0.9], RewardMode::Sparse, 0.9), vec![0.0, 0.0, 0.9]);
        assert_eq!(compute_rtg(&[0.7], RewardMode::Dense, 0.7), vec![0.7]);
    }

    #[test]
    fn config_validation() {
        assert!(GenConfig { max_depth: 0, ..GenConfig::default() }.validate().is_err());
        assert!(GenConfig { random_prune_prob: 1.0, ..GenConfig::default() }.validate().is_err());
        assert!(GenConfig { top_n_sequences: 0, ..GenConfig::default() }.validate().is_err());
        assert!(GenConfig::default().validate().is_ok());
    }

    fn stop_lexicon() -> Lexicon {
        Lexicon::from_tsv("", "the\tSTOP\ncat\tNOUN\n", "").unwrap()
    }

    fn the_cat_env() -> (RewardEnv, Corpus) {
        let mut c = Corpus::new();
        c.add_doc("a", "wow omg").unwrap();
        c.add_doc("b", "wow wow").unwrap();
        c.add_doc("rel", "cat").unwrap();
        c.add_doc("z", "dog cat").unwrap();
        c.add_doc("y", "bird cow cat").unwrap();
        c.set_relevance("q", ["rel"]).unwrap();
        let ep = Arc::new(build_index(&c, BackendKind::Bm25, &EndpointConfig::default()).unwrap());
        (RewardEnv::new(ep, &c, RewardSpec::default()), c)
    }

    #[test]
    fn already_perfect_yields_nothing() {
        let (env, _) = the_cat_env();
        let lex = stop_lexicon();
        let claim = tokenize("cat", &lex).unwrap().with_claim_id("q");
        let out = generate_trajectories(&claim, &env, &lex, &GenConfig::default(), &[RewardMode::Dense]).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn no_improvement_is_reported() {
        let (env, _) = the_cat_env();
        let lex = stop_lexicon();
        // nothing to remove that helps: the relevant doc is unreachable
        let claim = tokenize("zebra", &lex).unwrap().with_claim_id("q");
        let err = generate_trajectories(&claim, &env, &lex, &GenConfig::default(), &[RewardMode::Dense]);
        assert!(matches!(err, Err(TrajGenError::NoImprovementFound)));
    }

    #[test]
    fn dense_and_sparse_share_columns() {
        let (env, _) = the_cat_env();
        let lex = stop_lexicon();
        let claim = tokenize("wow omg cat", &lex).unwrap().with_claim_id("q");
        let out = search_paths(&claim, &env, &lex, &GenConfig::unpruned(4)).unwrap();
        assert_eq!(out.status, GenStatus::Improved);
        let trajs = out.trajectories(&[RewardMode::Dense, RewardMode::Sparse]);
        for pair in trajs.chunks(2) {
            let (d, s) = (&pair[0], &pair[1]);
            assert_eq!(d.steps.len(), s.steps.len());
            for (a, b) in d.steps.iter().zip(&s.steps) {
                assert_eq!((a.action, &a.state, a.reward), (b.action, &b.state, b.reward));
            }
            assert_eq!(s.steps.last().unwrap().rtg, out.max_seen_reward);
        }
    }

    #[test]
    fn stats_hand_computed() {
        let t = |claim: &str, orig: f64, steps: &[(usize, f64)]| Trajectory {
            claim_id: claim.into(),
            mode: RewardMode::Dense,
            steps: steps
                .iter()
                .map(|&(a, r)| Step {
                    rtg: 0.0,
                    state: String::new(),
                    action: a,
                    reward: r,
                })
                .collect(),
            max_seen_reward: 1.0,
            original_reward: orig,
        };
        let data = vec![
            t("c1", 0.2, &[(96, 0.5), (0, 0.75)]),
            t("c1", 0.2, &[(97, 0.3)]),
            t("c2", 0.5, &[(32, 0.25), (98, 1.0)]),
        ];
        let s = dataset_stats(&data);
        assert_eq!(s.steps, 5);
        assert_eq!(s.claims, 2);
        assert_eq!(s.claims_improved, 2);
        // c1 best gain 0.55, c2 best gain 0.5
        assert!((s.mean_best_gain - 0.525).abs() < 1e-12);
        let remove = &s.per_kind[3];
        assert_eq!(remove.count, 3);
        assert!((remove.fraction - 0.6).abs() < 1e-12);
        // deltas 0.3, 0.1, 0.75
        assert!((remove.mean_delta - 1.15 / 3.0).abs() < 1e-12);
        assert!((s.per_kind[0].mean_delta - 0.25).abs() < 1e-12);
        assert!((s.per_kind[1].mean_delta + 0.25).abs() < 1e-12);
        assert_eq!(s.per_kind[2].count, 0);

        let all_remove = dataset_stats(&[t("c", 0.0, &[(96, 0.5), (100, 0.7)])]);
        assert_eq!(all_remove.per_kind[3].fraction, 1.0);
        assert_eq!(all_remove.per_kind[0].fraction, 0.0);
    }

    #[test]
    fn trajectory_file_round_trip() {
        let (env, _) = the_cat_env();
        let lex = stop_lexicon();
        let claim = tokenize("wow omg cat", &lex).unwrap().with_claim_id("q");
        let trajs = generate_trajectories(&claim, &env, &lex, &GenConfig::unpruned(3), &[RewardMode::Dense]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        write_trajectories(&trajs, &p).unwrap();
        assert_eq!(read_trajectories(&p).unwrap(), trajs);
        let line = std::fs::read_to_string(&p).unwrap();
        let v: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
        assert_eq!(v["mode"], "dense");
        assert!(v["steps"][0]["action"].is_u64());
    }
}
