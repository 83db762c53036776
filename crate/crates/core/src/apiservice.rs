//! JSON-over-HTTP access to the edit engine, the search endpoints, reward
//! scoring and policy suggestions. Every route lives under `/v1/`. The
//! service keeps no session state: the client sends the current tokens with
//! each request.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::lexedit::{apply_action, legal_actions, tokenize, EditAction, LexError, Lexicon, PosCategory, TokenizedClaim};
use crate::policy::{EpisodeContext, PolicyError, PolicyKind, RolloutOptions, TrainedPolicy};
use crate::searchenv::{BackendKind, Corpus, Metric, RewardEnv, RewardSpec, SearchError};

pub const SNIPPET_CHARS: usize = 200;

/// Everything the handlers read. Immutable once built.
pub struct ServiceState {
    pub lexicon: Lexicon,
    pub corpus: Corpus,
    /// One reward environment per loaded backend; the request picks metric and cutoff.
    pub envs: BTreeMap<BackendKind, RewardEnv>,
    pub policy: Option<TrainedPolicy>,
}

impl ServiceState {
    fn env(&self, backend: BackendKind, metric: Metric, k: usize) -> Result<RewardEnv, ApiError> {
        let env = self.envs.get(&backend).ok_or_else(|| {
            ApiError::new("UnknownBackend", format!("backend {backend} is not loaded"))
        })?;
        Ok(env.with_spec(RewardSpec::new(metric, k)))
    }
}

/// Error body: `{"error": {"code": ..., "message": ...}}`, always status 400.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

impl ApiError {
    fn new(code: &str, message: impl Into<String>) -> Self {
        ApiError {
            code: code.into(),
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (StatusCode::BAD_REQUEST, Json(serde_json::json!({ "error": self }))).into_response()
    }
}

impl From<LexError> for ApiError {
    fn from(e: LexError) -> Self {
        let code = match e {
            LexError::EmptyClaim => "EmptyClaim",
            LexError::IllegalAction { .. } | LexError::OutOfRange(_) => "IllegalAction",
            _ => "LexiconError",
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<SearchError> for ApiError {
    fn from(e: SearchError) -> Self {
        let code = match e {
            SearchError::UnknownClaim(_) => "UnknownClaim",
            SearchError::EmptyQuery => "EmptyClaim",
            _ => "SearchError",
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<PolicyError> for ApiError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::Search(s) => s.into(),
            other => ApiError::new("PolicyError", other.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new("MalformedBody", e.body_text())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegalAction {
    pub kind: String,
    pub position: usize,
    pub flat: usize,
}

impl From<EditAction> for LegalAction {
    fn from(a: EditAction) -> Self {
        LegalAction {
            kind: a.kind.as_str().into(),
            position: a.position,
            flat: a.flatten(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizeRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimView {
    pub text: String,
    pub tokens: Vec<String>,
    pub pos: Vec<PosCategory>,
    pub legal_actions: Vec<LegalAction>,
}

impl ClaimView {
    fn of(claim: &TokenizedClaim, lexicon: &Lexicon) -> Self {
        ClaimView {
            text: claim.text(),
            tokens: claim.tokens().to_vec(),
            pos: claim.pos().to_vec(),
            legal_actions: legal_actions(claim, lexicon).into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplyRequest {
    pub tokens: Vec<String>,
    pub action_flat: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplyResponse {
    pub new_text: String,
    pub tokens: Vec<String>,
    pub pos: Vec<PosCategory>,
    pub legal_actions: Vec<LegalAction>,
}

fn default_backend() -> BackendKind {
    BackendKind::Bm25
}

fn default_metric() -> Metric {
    Metric::Ap
}

fn default_k() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub text: String,
    pub claim_id: String,
    #[serde(default = "default_backend")]
    pub backend: BackendKind,
    #[serde(default = "default_metric")]
    pub metric: Metric,
    #[serde(default = "default_k")]
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDoc {
    pub doc_id: String,
    pub score: f64,
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub reward: f64,
    pub ranking: Vec<RankedDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestRequest {
    pub text: String,
    pub claim_id: String,
    #[serde(default)]
    pub target_rtg: Option<f64>,
    #[serde(default = "default_backend")]
    pub backend: BackendKind,
    #[serde(default = "default_metric")]
    pub metric: Metric,
    #[serde(default = "default_k")]
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub flat: usize,
    pub kind: String,
    pub position: usize,
    /// Policy probability renormalized over the legal actions.
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewStep {
    pub flat: usize,
    pub kind: String,
    pub position: usize,
    pub text: String,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestResponse {
    pub original_reward: f64,
    pub actions: Vec<Suggestion>,
    pub rollout_preview: Vec<PreviewStep>,
}

/// Cuts `text` to at most `max` characters, backing off to the last space.
pub fn snippet(text: &str, max: usize) -> String {
    if text.chars().count() <= max {
        return text.to_string();
    }
    let cut: String = text.chars().take(max).collect();
    let next_is_space = text.chars().nth(max).is_some_and(char::is_whitespace);
    if next_is_space {
        return cut.trim_end().to_string();
    }
    match cut.rfind(char::is_whitespace) {
        Some(i) => cut[..i].trim_end().to_string(),
        None => cut,
    }
}

/// Rebuilds a claim from client-held tokens. POS tags are recomputed from the
/// lexicon rather than trusted from the request.
fn claim_from_tokens(tokens: &[String], lexicon: &Lexicon) -> Result<TokenizedClaim, ApiError> {
    Ok(TokenizedClaim::from_tokens("", tokens.to_vec(), Vec::new(), lexicon)?)
}

fn do_score(state: &ServiceState, req: &ScoreRequest) -> Result<ScoreResponse, ApiError> {
    let env = state.env(req.backend, req.metric, req.k)?;
    let reward = env.reward_text(&req.claim_id, &req.text)?;
    let ranking = env
        .endpoint()
        .search(&req.text, req.k)?
        .into_iter()
        .map(|h| {
            let snippet = state.corpus.doc(&h.doc_id).map_or(String::new(), |d| snippet(&d.text, SNIPPET_CHARS));
            RankedDoc {
                doc_id: h.doc_id,
                score: h.score,
                snippet,
            }
        })
        .collect();
    Ok(ScoreResponse { reward, ranking })
}

fn do_suggest(state: &ServiceState, req: &SuggestRequest) -> Result<SuggestResponse, ApiError> {
    let policy = state
        .policy
        .as_ref()
        .ok_or_else(|| ApiError::new("NoPolicy", "the service was started without a checkpoint"))?;
    let env = state.env(req.backend, req.metric, req.k)?;
    let claim = tokenize(&req.text, &state.lexicon)?.with_claim_id(&req.claim_id);
    let original_reward = env.reward(&claim)?;

    let logits = match policy.kind() {
        PolicyKind::DecisionTransformer => {
            let ctx = EpisodeContext::new(req.target_rtg.unwrap_or(policy.target_rtg()));
            policy.action_logits(&ctx, &claim.text())?
        }
        PolicyKind::Classifier => policy.classify_logits(&claim.text())?,
    };
    let legal = legal_actions(&claim, &state.lexicon);
    let top = legal.iter().map(|a| logits[a.flatten()]).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = legal.iter().map(|a| (logits[a.flatten()] - top).exp()).sum();
    let mut actions: Vec<Suggestion> = legal
        .iter()
        .map(|a| Suggestion {
            flat: a.flatten(),
            kind: a.kind.as_str().into(),
            position: a.position,
            predicted: (logits[a.flatten()] - top).exp() / z,
        })
        .collect();
    // ties go to the lower id, as in the rollout's argmax
    actions.sort_by(|a, b| b.predicted.total_cmp(&a.predicted).then(a.flat.cmp(&b.flat)));

    let opts = RolloutOptions {
        target_rtg: req.target_rtg,
        ..RolloutOptions::default()
    };
    let rollout = policy.rollout(&claim, &env, &state.lexicon, &opts)?;
    let mut cur = claim.clone();
    let mut rollout_preview = Vec::new();
    for (&a, &reward) in rollout.actions.iter().zip(&rollout.rewards) {
        cur = apply_action(&cur, a, &state.lexicon)?;
        rollout_preview.push(PreviewStep {
            flat: a.flatten(),
            kind: a.kind.as_str().into(),
            position: a.position,
            text: cur.text(),
            reward,
        });
    }
    Ok(SuggestResponse {
        original_reward,
        actions,
        rollout_preview,
    })
}

type Shared = Arc<ServiceState>;

async fn blocking<T: Send + 'static>(
    state: Shared,
    f: impl FnOnce(&ServiceState) -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| ApiError::new("Internal", e.to_string()))?
}

async fn health(State(state): State<Shared>) -> Json<serde_json::Value> {
    Json(serde_json::json!({
        "status": "ok",
        "backends": state.envs.keys().map(|b| b.as_str()).collect::<Vec<_>>(),
        "policy": state.policy.as_ref().map(|p| p.kind()),
    }))
}

async fn corpus_stats(State(state): State<Shared>) -> Json<serde_json::Value> {
    let docs = state.corpus.docs();
    let tokens: usize = docs.iter().map(|d| d.text.split_whitespace().count()).sum();
    Json(serde_json::json!({
        "documents": docs.len(),
        "claims_with_judgments": state.corpus.relevance().len(),
        "mean_doc_tokens": if docs.is_empty() { 0.0 } else { tokens as f64 / docs.len() as f64 },
    }))
}

async fn tokenize_route(
    State(state): State<Shared>,
    body: Result<Json<TokenizeRequest>, JsonRejection>,
) -> Result<Json<ClaimView>, ApiError> {
    let Json(req) = body?;
    let claim = tokenize(&req.text, &state.lexicon)?;
    Ok(Json(ClaimView::of(&claim, &state.lexicon)))
}

async fn apply_route(
    State(state): State<Shared>,
    body: Result<Json<ApplyRequest>, JsonRejection>,
) -> Result<Json<ApplyResponse>, ApiError> {
    let Json(req) = body?;
    let claim = claim_from_tokens(&req.tokens, &state.lexicon)?;
    let action = EditAction::unflatten(req.action_flat)?;
    let next = apply_action(&claim, action, &state.lexicon)?;
    let view = ClaimView::of(&next, &state.lexicon);
    Ok(Json(ApplyResponse {
        new_text: view.text,
        tokens: view.tokens,
        pos: view.pos,
        legal_actions: view.legal_actions,
    }))
}

async fn score_route(
    State(state): State<Shared>,
    body: Result<Json<ScoreRequest>, JsonRejection>,
) -> Result<Json<ScoreResponse>, ApiError> {
    let Json(req) = body?;
    blocking(state, move |s| do_score(s, &req)).await.map(Json)
}

async fn suggest_route(
    State(state): State<Shared>,
    body: Result<Json<SuggestRequest>, JsonRejection>,
) -> Result<Json<SuggestResponse>, ApiError> {
    let Json(req) = body?;
    blocking(state, move |s| do_suggest(s, &req)).await.map(Json)
}

pub fn router(state: Arc<ServiceState>) -> Router {
    let v1 = Router::new()
        .route("/health", get(health))
        .route("/corpus/stats", get(corpus_stats))
        .route("/tokenize", post(tokenize_route))
        .route("/apply", post(apply_route))
        .route("/score", post(score_route))
        .route("/suggest", post(suggest_route))
        .with_state(state);
    Router::new().nest("/v1", v1)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(state: Arc<ServiceState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}/v1/", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snippet_breaks_on_words() {
        assert_eq!(snippet("short", 200), "short");
        assert_eq!(snippet("alpha beta gamma", 12), "alpha beta");
        assert_eq!(snippet("alpha beta gamma", 10), "alpha beta");
        assert_eq!(snippet("abcdefghij", 4), "abcd");
        let long = "word ".repeat(100);
        let s = snippet(&long, SNIPPET_CHARS);
        assert!(s.chars().count() <= SNIPPET_CHARS && s.ends_with("word"));
    }
}
