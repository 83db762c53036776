//! Evaluation of rewriters against original claims, the per-turn score
//! curve, per-action outcome statistics and the retriever x metric x
//! negative-examples ablation grid.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexedit::{apply_action, EditAction, EditKind, Lexicon, TokenizedClaim};
use crate::policy::{random_policy, train, PolicyConfig, PolicyError, Rollout, RolloutOptions, StopReason, TrainedPolicy};
use crate::searchenv::{BackendKind, Corpus, Metric, RewardEnv, RewardSpec, SearchEndpoint, SearchError};
use crate::trajgen::{generate_dataset, GenConfig, RewardMode, TrajGenError};

/// Default threshold under which a claim's score change counts as flat.
pub const DEFAULT_FLAT_EPSILON: f64 = 0.01;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("ablation table has no cell for {backend} / {metric} / {variant}")]
    MissingCell {
        backend: BackendKind,
        metric: Metric,
        variant: String,
    },
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    TrajGen(#[from] TrajGenError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Anything that turns a claim into a (possibly edited) query.
pub trait Rewriter: Sync {
    fn name(&self) -> String;
    fn rewrite(&self, claim: &TokenizedClaim, env: &RewardEnv, lexicon: &Lexicon) -> Result<Rollout, EvalError>;
}

fn unedited(claim: &TokenizedClaim, reward: f64, stop: StopReason) -> Rollout {
    Rollout {
        original: claim.clone(),
        original_reward: reward,
        final_claim: claim.clone(),
        actions: Vec::new(),
        rewards: Vec::new(),
        rtg_remaining: Vec::new(),
        stop,
    }
}

/// Leaves the claim alone.
pub struct Identity;

impl Rewriter for Identity {
    fn name(&self) -> String {
        "original".into()
    }

    fn rewrite(&self, claim: &TokenizedClaim, env: &RewardEnv, _: &Lexicon) -> Result<Rollout, EvalError> {
        Ok(unedited(claim, env.reward(claim)?, StopReason::StepLimit))
    }
}

/// `n_edits` uniformly random legal edits, seeded per claim. No early stop.
pub struct RandomEdits {
    pub n_edits: usize,
    pub seed: u64,
}

impl Rewriter for RandomEdits {
    fn name(&self) -> String {
        "random".into()
    }

    fn rewrite(&self, claim: &TokenizedClaim, env: &RewardEnv, lexicon: &Lexicon) -> Result<Rollout, EvalError> {
        let mut out = unedited(claim, env.reward(claim)?, StopReason::StepLimit);
        let actions = random_policy(claim, self.n_edits, self.seed, lexicon);
        if actions.len() < self.n_edits {
            out.stop = StopReason::NoLegalAction;
        }
        for a in actions {
            out.final_claim = apply_action(&out.final_claim, a, lexicon).expect("sampled from legal actions");
            out.rewards.push(env.reward(&out.final_claim)?);
            out.actions.push(a);
        }
        Ok(out)
    }
}

/// A trained decision transformer or classifier with fixed rollout options.
pub struct PolicyRewriter<'a> {
    pub policy: &'a TrainedPolicy,
    pub options: RolloutOptions,
    pub label: String,
}

impl<'a> PolicyRewriter<'a> {
    pub fn new(policy: &'a TrainedPolicy, label: impl Into<String>) -> Self {
        PolicyRewriter {
            policy,
            options: RolloutOptions::default(),
            label: label.into(),
        }
    }
}

impl Rewriter for PolicyRewriter<'_> {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn rewrite(&self, claim: &TokenizedClaim, env: &RewardEnv, lexicon: &Lexicon) -> Result<Rollout, EvalError> {
        Ok(self.policy.rollout(claim, env, lexicon, &self.options)?)
    }
}

/// One claim's evaluation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub claim_id: String,
    pub original_text: String,
    pub final_text: String,
    pub original_reward: f64,
    pub final_reward: f64,
    pub actions: Vec<usize>,
    /// Reward after each edit.
    pub rewards: Vec<f64>,
    pub stop: StopReason,
}

impl RolloutRecord {
    pub fn from_rollout(r: &Rollout) -> Self {
        RolloutRecord {
            claim_id: r.original.claim_id().to_string(),
            original_text: r.original.text(),
            final_text: r.final_claim.text(),
            original_reward: r.original_reward,
            final_reward: r.final_reward(),
            actions: r.actions.iter().map(|a| a.flatten()).collect(),
            rewards: r.rewards.clone(),
            stop: r.stop,
        }
    }

    /// Reward at turn `t` (1 = original), if the record got that far.
    pub fn reward_at_turn(&self, t: usize) -> Option<f64> {
        match t {
            0 => None,
            1 => Some(self.original_reward),
            t => self.rewards.get(t - 2).copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rewriter: String,
    pub backend: BackendKind,
    pub metric: Metric,
    pub k: usize,
    pub n_claims: usize,
    pub original_mean: f64,
    pub rewritten_mean: f64,
    /// `(rewritten - original) / original`; absent when the original mean is 0.
    pub relative_improvement: Option<f64>,
    pub mean_edits: f64,
    #[serde(skip)]
    pub records: Vec<RolloutRecord>,
}

impl EvalReport {
    /// Share of the gap to `best` closed by the rewriter; `None` without headroom.
    pub fn headroom_recovered(&self, best_mean: f64) -> Option<f64> {
        let gap = best_mean - self.original_mean;
        (gap > 0.0).then(|| (self.rewritten_mean - self.original_mean) / gap)
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Rewrites every claim and averages rewards. Claims are processed in
/// parallel; records keep input order.
pub fn evaluate(
    rewriter: &dyn Rewriter,
    claims: &[TokenizedClaim],
    env: &RewardEnv,
    lexicon: &Lexicon,
) -> Result<EvalReport, EvalError> {
    for c in claims {
        if !env.has_claim(c.claim_id()) {
            return Err(SearchError::UnknownClaim(c.claim_id().to_string()).into());
        }
    }
    let records: Vec<RolloutRecord> = claims
        .par_iter()
        .map(|c| rewriter.rewrite(c, env, lexicon).map(|r| RolloutRecord::from_rollout(&r)))
        .collect::<Result<_, _>>()?;
    let original_mean = mean(records.iter().map(|r| r.original_reward));
    let rewritten_mean = mean(records.iter().map(|r| r.final_reward));
    let spec = env.spec();
    Ok(EvalReport {
        rewriter: rewriter.name(),
        backend: env.endpoint().kind(),
        metric: spec.metric,
        k: spec.k,
        n_claims: records.len(),
        original_mean,
        rewritten_mean,
        relative_improvement: (original_mean > 0.0).then(|| (rewritten_mean - original_mean) / original_mean),
        mean_edits: mean(records.iter().map(|r| r.actions.len() as f64)),
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Improved,
    Unchanged,
    Decreased,
}

impl Segment {
    pub const ALL: [Segment; 3] = [Segment::Improved, Segment::Unchanged, Segment::Decreased];

    pub fn of(begin: f64, end: f64, flat_epsilon: f64) -> Segment {
        if end > begin + flat_epsilon {
            Segment::Improved
        } else if end < begin - flat_epsilon {
            Segment::Decreased
        } else {
            Segment::Unchanged
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Segment::Improved => "improved",
            Segment::Unchanged => "unchanged",
            Segment::Decreased => "decreased",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCurveRow {
    pub turn: usize,
    pub segment: Segment,
    pub count: usize,
    pub mean: f64,
}

/// Mean reward per turn (1 = original claim, K+1 = after K edits), split by
/// whether the claim's final score rose, stayed within `flat_epsilon`, or
/// fell. A record contributes to a turn only if it reached it.
pub fn step_curve(records: &[RolloutRecord], k: usize, flat_epsilon: f64) -> Vec<StepCurveRow> {
    let mut rows = Vec::new();
    for seg in Segment::ALL {
        let members: Vec<&RolloutRecord> = records
            .iter()
            .filter(|r| Segment::of(r.original_reward, r.final_reward, flat_epsilon) == seg)
            .collect();
        for turn in 1..=k + 1 {
            let vals: Vec<f64> = members.iter().filter_map(|r| r.reward_at_turn(turn)).collect();
            if vals.is_empty() {
                continue;
            }
            rows.push(StepCurveRow {
                turn,
                segment: seg,
                count: vals.len(),
                mean: mean(vals.iter().copied()),
            });
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionStats {
    pub kind: EditKind,
    pub count: usize,
    pub improved: usize,
    pub unchanged: usize,
    pub decreased: usize,
    /// Mean reward change over steps that changed the reward.
    pub mean_delta: Option<f64>,
}

/// Per edit kind: how often each step raised, kept or lowered the reward.
pub fn action_analysis(records: &[RolloutRecord]) -> Vec<ActionStats> {
    let mut stats: Vec<ActionStats> = EditKind::ALL
        .iter()
        .map(|&kind| ActionStats {
            kind,
            count: 0,
            improved: 0,
            unchanged: 0,
            decreased: 0,
            mean_delta: None,
        })
        .collect();
    let mut sums = [0.0f64; 4];
    for r in records {
        let mut prev = r.original_reward;
        for (&a, &rew) in r.actions.iter().zip(&r.rewards) {
            let kind = EditAction::unflatten(a).expect("recorded ids are valid").kind.index();
            let delta = rew - prev;
            prev = rew;
            let s = &mut stats[kind];
            s.count += 1;
            if delta > 0.0 {
                s.improved += 1;
            } else if delta < 0.0 {
                s.decreased += 1;
            } else {
                s.unchanged += 1;
            }
            sums[kind] += delta;
        }
    }
    for (s, sum) in stats.iter_mut().zip(sums) {
        let changed = s.improved + s.decreased;
        s.mean_delta = (changed > 0).then(|| sum / changed as f64);
    }
    stats
}

/// Which column of the ablation table a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    Claim,
    UpOnly,
    UpDown,
}

impl AblationVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            AblationVariant::Claim => "claim",
            AblationVariant::UpOnly => "rl_up_only",
            AblationVariant::UpDown => "rl_up_down",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub backend: BackendKind,
    pub metric: Metric,
    pub variant: AblationVariant,
    pub mean: f64,
    pub trajectories: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn get(&self, backend: BackendKind, metric: Metric, variant: AblationVariant) -> Result<f64, EvalError> {
        self.rows
            .iter()
            .find(|r| r.backend == backend && r.metric == metric && r.variant == variant)
            .map(|r| r.mean)
            .ok_or_else(|| EvalError::MissingCell {
                backend,
                metric,
                variant: variant.as_str().to_string(),
            })
    }

    /// Aligned text: one line per retriever and variant, one column per metric.
    pub fn render(&self) -> String {
        let mut backends: Vec<BackendKind> = self.rows.iter().map(|r| r.backend).collect();
        backends.dedup();
        let mut metrics: Vec<Metric> = Vec::new();
        for r in &self.rows {
            if !metrics.contains(&r.metric) {
                metrics.push(r.metric);
            }
        }
        let mut out = format!("{:<8}{:<14}", "backend", "variant");
        for m in &metrics {
            out.push_str(&format!("{:>10}", m.as_str()));
        }
        out.push('\n');
        for &b in &backends {
            for v in [AblationVariant::Claim, AblationVariant::UpOnly, AblationVariant::UpDown] {
                if !self.rows.iter().any(|r| r.backend == b && r.variant == v) {
                    continue;
                }
                out.push_str(&format!("{:<8}{:<14}", b.as_str(), v.as_str()));
                for &m in &metrics {
                    match self.get(b, m, v) {
                        Ok(x) => out.push_str(&format!("{:>10.4}", x)),
                        Err(_) => out.push_str(&format!("{:>10}", "-")),
                    }
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Axes and training settings for the ablation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub backends: Vec<BackendKind>,
    pub metrics: Vec<Metric>,
    pub negatives: Vec<bool>,
    pub k: usize,
    pub reward_mode: RewardMode,
    pub gen: GenConfig,
    pub policy: PolicyConfig,
}

impl Default for AblationSpec {
    fn default() -> Self {
        AblationSpec {
            backends: vec![BackendKind::Bm25, BackendKind::Knn],
            metrics: Metric::ALL.to_vec(),
            negatives: vec![false, true],
            k: 50,
            reward_mode: RewardMode::Dense,
            gen: GenConfig::default(),
            policy: PolicyConfig::default(),
        }
    }
}

/// Generates, trains and evaluates one decision transformer per cell.
/// `endpoints` must hold one endpoint per backend on the axis.
pub fn ablation_matrix(
    spec: &AblationSpec,
    endpoints: &[Arc<SearchEndpoint>],
    corpus: &Corpus,
    train_claims: &[TokenizedClaim],
    eval_claims: &[TokenizedClaim],
    lexicon: &Lexicon,
) -> Result<AblationTable, EvalError> {
    let mut table = AblationTable::default();
    for &backend in &spec.backends {
        let endpoint = endpoints
            .iter()
            .find(|e| e.kind() == backend)
            .ok_or_else(|| EvalError::MissingCell {
                backend,
                metric: spec.metrics.first().copied().unwrap_or(Metric::Ap),
                variant: "endpoint".into(),
            })?;
        for &metric in &spec.metrics {
            let env = RewardEnv::new(endpoint.clone(), corpus, RewardSpec::new(metric, spec.k));
            let base = evaluate(&Identity, eval_claims, &env, lexicon)?;
            table.rows.push(AblationRow {
                backend,
                metric,
                variant: AblationVariant::Claim,
                mean: base.original_mean,
                trajectories: 0,
            });
            for &neg in &spec.negatives {
                let (report, n) = ablation_cell(spec, neg, &env, train_claims, eval_claims, lexicon)?;
                log::info!("ablation {backend}/{metric}/neg={neg}: {:.4} from {n} trajectories", report.rewritten_mean);
                table.rows.push(AblationRow {
                    backend,
                    metric,
                    variant: if neg { AblationVariant::UpDown } else { AblationVariant::UpOnly },
                    mean: report.rewritten_mean,
                    trajectories: n,
                });
            }
        }
    }
    Ok(table)
}

/// One grid cell: trajectories under `env`, a fresh policy, evaluation.
/// Returns the report and the number of training trajectories.
pub fn ablation_cell(
    spec: &AblationSpec,
    include_negative: bool,
    env: &RewardEnv,
    train_claims: &[TokenizedClaim],
    eval_claims: &[TokenizedClaim],
    lexicon: &Lexicon,
) -> Result<(EvalReport, usize), EvalError> {
    let gen = GenConfig {
        include_negative,
        max_depth: spec.policy.block_size,
        ..spec.gen.clone()
    };
    let data = generate_dataset(train_claims, env, lexicon, &gen, &[spec.reward_mode])?;
    let n = data.trajectories.len();
    if n == 0 {
        // nothing to learn from: the policy is the unedited claim
        let mut r = evaluate(&Identity, eval_claims, env, lexicon)?;
        r.rewriter = "dt".into();
        return Ok((r, 0));
    }
    let (policy, _) = train(&data.trajectories, &spec.policy)?;
    let report = evaluate(&PolicyRewriter::new(&policy, "dt"), eval_claims, env, lexicon)?;
    Ok((report, n))
}

/// Everything an evaluation run writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub reports: Vec<EvalReport>,
    pub flat_epsilon: f64,
    pub step_curve: Vec<StepCurveRow>,
    pub actions: Vec<ActionStats>,
    pub ablation: Option<AblationTable>,
}

impl ReportBundle {
    /// Curve and action statistics are taken from the last report (the
    /// rewriter under study); earlier reports are baselines.
    pub fn new(reports: Vec<EvalReport>, block_size: usize, flat_epsilon: f64) -> Self {
        let (step_curve, actions) = match reports.last() {
            Some(r) => (step_curve(&r.records, block_size, flat_epsilon), action_analysis(&r.records)),
            None => (Vec::new(), action_analysis(&[])),
        };
        ReportBundle {
            reports,
            flat_epsilon,
            step_curve,
            actions,
            ablation: None,
        }
    }

    /// Writes `report.json`, `per_claim.csv`, `step_curve.csv`,
    /// `actions.csv`, `ablation.csv` (when present), `plots.json` and
    /// `plots.gp`. Nothing time-dependent is written.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(), EvalError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)? + "\n")?;

        let mut w = csv::Writer::from_path(dir.join("per_claim.csv"))?;
        w.write_record([
            "rewriter",
            "claim_id",
            "original_reward",
            "final_reward",
            "edits",
            "actions",
            "stop",
            "original_text",
            "final_text",
        ])?;
        for r in &self.reports {
            for rec in &r.records {
                let actions: Vec<String> = rec.actions.iter().map(|a| a.to_string()).collect();
                w.write_record([
                    r.rewriter.clone(),
                    rec.claim_id.clone(),
                    rec.original_reward.to_string(),
                    rec.final_reward.to_string(),
                    rec.actions.len().to_string(),
                    actions.join(" "),
                    serde_json::to_value(rec.stop)?.as_str().unwrap_or_default().to_string(),
                    rec.original_text.clone(),
                    rec.final_text.clone(),
                ])?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("step_curve.csv"))?;
        w.write_record(["turn", "segment", "count", "mean"])?;
        for r in &self.step_curve {
            w.write_record([r.turn.to_string(), r.segment.as_str().into(), r.count.to_string(), r.mean.to_string()])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("actions.csv"))?;
        w.write_record(["kind", "count", "improved", "unchanged", "decreased", "mean_delta"])?;
        for a in &self.actions {
            w.write_record([
                a.kind.as_str().to_string(),
                a.count.to_string(),
                a.improved.to_string(),
                a.unchanged.to_string(),
                a.decreased.to_string(),
                a.mean_delta.map_or(String::new(), |d| d.to_string()),
            ])?;
        }
        w.flush()?;

        if let Some(t) = &self.ablation {
            let mut w = csv::Writer::from_path(dir.join("ablation.csv"))?;
            w.write_record(["backend", "metric", "variant", "mean", "trajectories"])?;
            for r in &t.rows {
                w.write_record([
                    r.backend.as_str().to_string(),
                    r.metric.as_str().to_string(),
                    r.variant.as_str().to_string(),
                    r.mean.to_string(),
                    r.trajectories.to_string(),
                ])?;
            }
            w.flush()?;
        }

        let mut series: BTreeMap<&str, Vec<(usize, f64, usize)>> = BTreeMap::new();
        for r in &self.step_curve {
            series.entry(r.segment.as_str()).or_default().push((r.turn, r.mean, r.count));
        }
        let plots = serde_json::json!({
            "step_curve": series,
            "action_mean_delta": self.actions.iter().map(|a| (a.kind.as_str(), a.mean_delta)).collect::<Vec<_>>(),
        });
        fs::write(dir.join("plots.json"), serde_json::to_string_pretty(&plots)? + "\n")?;
        fs::write(dir.join("plots.gp"), GNUPLOT)?;
        Ok(())
    }
}

const GNUPLOT: &str = r#"# gnuplot plots.gp  (reads step_curve.csv and actions.csv)
set datafile separator ","
set terminal pngcairo size 900,400
set output "step_curve.png"
set xlabel "turn"
set ylabel "mean reward"
set key outside
plot for [seg in "improved unchanged decreased"] \
    "< awk -F, -v s=".seg." 'NR>1 && $2==s' step_curve.csv" using 1:4 with linespoints title seg
set output "actions.png"
set style data histogram
set style fill solid
set ylabel "mean reward change"
plot "actions.csv" using 6:xtic(1) skip 1 title "mean delta"
"#;
