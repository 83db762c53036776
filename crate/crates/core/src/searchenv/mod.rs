//! Simulated search endpoints, retrieval metrics and the reward function.
//!
//! An endpoint is opaque to its callers: text goes in, a ranked list of
//! `(doc_id, score)` comes out. Rankings are sorted by descending score with
//! ties broken by ascending `doc_id`.

pub mod bm25;
pub mod embed;
pub mod hnsw;
pub mod metrics;
mod snapshot;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexedit::{split_tokens, TokenizedClaim};

pub use bm25::Bm25Index;
pub use embed::{EmbeddingProvider, ExternalEmbedder};
pub use hnsw::{Hnsw, HnswParams};
pub use metrics::{ap_at_k, recall_at_k, reciprocal_rank};
pub use snapshot::{load_snapshot, read_snapshot, save_snapshot, write_snapshot, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("corpus has no documents")]
    EmptyCorpus,
    #[error("query has no tokens")]
    EmptyQuery,
    #[error("text has no embeddable tokens")]
    EmptyText,
    #[error("no relevance judgments for claim {0:?}")]
    UnknownClaim(String),
    #[error("embedding service unavailable: {0}")]
    EmbeddingServiceUnavailable(String),
    #[error("duplicate doc_id {0:?}")]
    DuplicateDoc(String),
    #[error("claim {claim_id:?} references unknown doc {doc_id:?}")]
    DanglingReference { claim_id: String, doc_id: String },
    #[error("bad index snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lowercased tokens with alphanumeric content; shared by BM25 and hashing.
pub fn analyze(text: &str) -> Vec<String> {
    split_tokens(text)
        .into_iter()
        .filter(|t| t.chars().any(char::is_alphanumeric))
        .map(|t| t.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
}

/// Documents plus claim relevance judgments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
    relevance: BTreeMap<String, BTreeSet<String>>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_doc(&mut self, doc_id: impl Into<String>, text: impl Into<String>) -> Result<(), SearchError> {
        let doc_id = doc_id.into();
        if self.by_id.contains_key(&doc_id) {
            return Err(SearchError::DuplicateDoc(doc_id));
        }
        self.by_id.insert(doc_id.clone(), self.docs.len());
        self.docs.push(Document {
            doc_id,
            text: text.into(),
        });
        Ok(())
    }

    pub fn set_relevance<I, S>(&mut self, claim_id: &str, doc_ids: I) -> Result<(), SearchError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = BTreeSet::new();
        for d in doc_ids {
            let d = d.into();
            if !self.by_id.contains_key(&d) {
                return Err(SearchError::DanglingReference {
                    claim_id: claim_id.to_string(),
                    doc_id: d,
                });
            }
            set.insert(d);
        }
        self.relevance.insert(claim_id.to_string(), set);
        Ok(())
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn doc(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn relevant(&self, claim_id: &str) -> Option<&BTreeSet<String>> {
        self.relevance.get(claim_id)
    }

    pub fn relevance(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.relevance
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Bm25,
    Knn,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Bm25 => "bm25",
            BackendKind::Knn => "knn",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "bm25" => Ok(BackendKind::Bm25),
            "knn" => Ok(BackendKind::Knn),
            other => Err(format!("unknown backend {other:?} (expected bm25 or knn)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Ap,
    Recall,
    Rr,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Ap, Metric::Recall, Metric::Rr];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Ap => "ap",
            Metric::Recall => "recall",
            Metric::Rr => "rr",
        }
    }

    pub fn score<T: Eq + std::hash::Hash>(self, ranking: &[T], relevant: &HashSet<T>, k: usize) -> f64 {
        match self {
            Metric::Ap => ap_at_k(ranking, relevant, k),
            Metric::Recall => recall_at_k(ranking, relevant, k),
            Metric::Rr => reciprocal_rank(ranking, relevant, k),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "ap" | "map" => Ok(Metric::Ap),
            "recall" => Ok(Metric::Recall),
            "rr" | "mrr" => Ok(Metric::Rr),
            other => Err(format!("unknown metric {other:?} (expected ap, recall or rr)")),
        }
    }
}

/// Which metric at which cutoff defines the scalar reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub metric: Metric,
    pub k: usize,
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec {
            metric: Metric::Ap,
            k: 50,
        }
    }
}

impl RewardSpec {
    pub fn new(metric: Metric, k: usize) -> Self {
        RewardSpec { metric, k: k.max(1) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub doc_id: String,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct EndpointConfig {
    pub top_k: usize,
    pub k1: f64,
    pub b: f64,
    pub hnsw: HnswParams,
    pub embedder: EmbeddingProvider,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            top_k: 100,
            k1: bm25::DEFAULT_K1,
            b: bm25::DEFAULT_B,
            hnsw: HnswParams::default(),
            embedder: EmbeddingProvider::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Backend {
    Bm25(Bm25Index),
    Knn {
        provider: EmbeddingProvider,
        graph: Hnsw,
    },
}

/// A build-once, query-many search endpoint.
#[derive(Debug, Clone)]
pub struct SearchEndpoint {
    top_k: usize,
    doc_ids: Vec<String>,
    /// position of each doc in ascending doc_id order, for tie-breaking
    id_rank: Vec<u32>,
    id_lookup: HashMap<String, u32>,
    backend: Backend,
}

fn id_ranks(doc_ids: &[String]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..doc_ids.len()).collect();
    order.sort_by(|&a, &b| doc_ids[a].cmp(&doc_ids[b]));
    let mut rank = vec![0u32; doc_ids.len()];
    for (r, i) in order.into_iter().enumerate() {
        rank[i] = r as u32;
    }
    rank
}

pub fn build_index(
    corpus: &Corpus,
    kind: BackendKind,
    config: &EndpointConfig,
) -> Result<SearchEndpoint, SearchError> {
    SearchEndpoint::build(corpus, kind, config)
}

impl SearchEndpoint {
    pub fn build(corpus: &Corpus, kind: BackendKind, config: &EndpointConfig) -> Result<Self, SearchError> {
        if corpus.is_empty() {
            return Err(SearchError::EmptyCorpus);
        }
        let texts: Vec<&str> = corpus.docs().iter().map(|d| d.text.as_str()).collect();
        let backend = match kind {
            BackendKind::Bm25 => Backend::Bm25(Bm25Index::build(texts.iter().copied(), config.k1, config.b)),
            BackendKind::Knn => {
                let vectors = config.embedder.embed_many(&texts)?;
                let graph = Hnsw::build(&vectors, config.embedder.dim(), config.hnsw);
                Backend::Knn {
                    provider: config.embedder.clone(),
                    graph,
                }
            }
        };
        let doc_ids = corpus.docs().iter().map(|d| d.doc_id.clone()).collect();
        Ok(Self::from_parts(doc_ids, config.top_k, backend))
    }

    pub(crate) fn from_parts(doc_ids: Vec<String>, top_k: usize, backend: Backend) -> Self {
        let id_rank = id_ranks(&doc_ids);
        let id_lookup = doc_ids
            .iter()
            .enumerate()
            .map(|(i, d)| (d.clone(), i as u32))
            .collect();
        SearchEndpoint {
            top_k,
            doc_ids,
            id_rank,
            id_lookup,
            backend,
        }
    }

    pub(crate) fn backend(&self) -> &Backend {
        &self.backend
    }

    pub(crate) fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn kind(&self) -> BackendKind {
        match self.backend {
            Backend::Bm25(_) => BackendKind::Bm25,
            Backend::Knn { .. } => BackendKind::Knn,
        }
    }

    pub fn top_k(&self) -> usize {
        self.top_k
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    /// Ranked results cut at the endpoint's `top_k`.
    pub fn query(&self, text: &str) -> Result<Vec<Hit>, SearchError> {
        self.search(text, self.top_k)
    }

    /// Ranked results cut at `k`.
    pub fn search(&self, text: &str, k: usize) -> Result<Vec<Hit>, SearchError> {
        Ok(self
            .ranked(text, k)?
            .into_iter()
            .map(|(d, score)| Hit {
                doc_id: self.doc_ids[d as usize].clone(),
                score,
            })
            .collect())
    }

    fn ranked(&self, text: &str, k: usize) -> Result<Vec<(u32, f64)>, SearchError> {
        if split_tokens(text).is_empty() {
            return Err(SearchError::EmptyQuery);
        }
        let mut scored: Vec<(u32, f64)> = match &self.backend {
            Backend::Bm25(idx) => idx.score_all(text),
            Backend::Knn { provider, graph } => match provider.embed(text) {
                Ok(q) => {
                    let ef = graph.params().ef_search.max(k);
                    graph
                        .search(&q, k, ef)
                        .into_iter()
                        .map(|(id, dist)| (id, 1.0 - dist as f64))
                        .collect()
                }
                Err(SearchError::EmptyText) => Vec::new(),
                Err(e) => return Err(e),
            },
        };
        let order = |a: &(u32, f64), b: &(u32, f64)| {
            b.1.total_cmp(&a.1)
                .then(self.id_rank[a.0 as usize].cmp(&self.id_rank[b.0 as usize]))
        };
        if scored.len() > k && k > 0 {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_by(order);
        scored.truncate(k);
        Ok(scored)
    }
}

/// Reward computation for one endpoint and reward spec.
#[derive(Debug, Clone)]
pub struct RewardEnv {
    endpoint: Arc<SearchEndpoint>,
    spec: RewardSpec,
    relevance: Arc<HashMap<String, HashSet<u32>>>,
}

impl RewardEnv {
    pub fn new(endpoint: Arc<SearchEndpoint>, corpus: &Corpus, spec: RewardSpec) -> Self {
        let n = endpoint.len() as u32;
        let mut relevance = HashMap::new();
        for (claim, docs) in corpus.relevance() {
            // docs missing from the endpoint can never be retrieved but still count
            let mut set = HashSet::new();
            for (j, d) in docs.iter().enumerate() {
                set.insert(endpoint.id_lookup.get(d).copied().unwrap_or(n + j as u32));
            }
            relevance.insert(claim.clone(), set);
        }
        RewardEnv {
            endpoint,
            spec,
            relevance: Arc::new(relevance),
        }
    }

    /// Same endpoint and judgments under another metric or cutoff.
    pub fn with_spec(&self, spec: RewardSpec) -> Self {
        RewardEnv {
            endpoint: Arc::clone(&self.endpoint),
            spec,
            relevance: Arc::clone(&self.relevance),
        }
    }

    pub fn endpoint(&self) -> &SearchEndpoint {
        &self.endpoint
    }

    pub fn endpoint_arc(&self) -> Arc<SearchEndpoint> {
        Arc::clone(&self.endpoint)
    }

    pub fn spec(&self) -> RewardSpec {
        self.spec
    }

    pub fn has_claim(&self, claim_id: &str) -> bool {
        self.relevance.contains_key(claim_id)
    }

    pub fn reward(&self, claim: &TokenizedClaim) -> Result<f64, SearchError> {
        self.reward_text(claim.claim_id(), &claim.text())
    }

    pub fn reward_text(&self, claim_id: &str, text: &str) -> Result<f64, SearchError> {
        let relevant = self
            .relevance
            .get(claim_id)
            .ok_or_else(|| SearchError::UnknownClaim(claim_id.to_string()))?;
        let ranking: Vec<u32> = self
            .endpoint
            .ranked(text, self.spec.k)?
            .into_iter()
            .map(|(d, _)| d)
            .collect();
        Ok(self.spec.metric.score(&ranking, relevant, self.spec.k))
    }
}

/// One-shot reward: detokenize, query, score.
pub fn reward(
    endpoint: &Arc<SearchEndpoint>,
    claim: &TokenizedClaim,
    spec: RewardSpec,
    corpus: &Corpus,
) -> Result<f64, SearchError> {
    let relevant = corpus
        .relevant(claim.claim_id())
        .ok_or_else(|| SearchError::UnknownClaim(claim.claim_id().to_string()))?;
    let ranking: Vec<String> = endpoint
        .search(&claim.text(), spec.k)?
        .into_iter()
        .map(|h| h.doc_id)
        .collect();
    let relevant: HashSet<String> = relevant.iter().cloned().collect();
    Ok(spec.metric.score(&ranking, &relevant, spec.k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexedit::{tokenize, Lexicon};

    fn cats() -> Corpus {
        let mut c = Corpus::new();
        c.add_doc("d1", "cat sat").unwrap();
        c.add_doc("d2", "dog sat").unwrap();
        c.add_doc("d3", "cat cat").unwrap();
        c
    }

    #[test]
    fn bm25_rank_order() {
        let ep = build_index(&cats(), BackendKind::Bm25, &EndpointConfig::default()).unwrap();
        let hits = ep.query("cat").unwrap();
        let ids: Vec<&str> = hits.iter().map(|h| h.doc_id.as_str()).collect();
        assert_eq!(ids, ["d3", "d1"]);
        assert!(ep.query("zebra").unwrap().is_empty());
        assert!(matches!(ep.query("  "), Err(SearchError::EmptyQuery)));
    }

    #[test]
    fn empty_corpus_rejected() {
        let err = build_index(&Corpus::new(), BackendKind::Bm25, &EndpointConfig::default());
        assert!(matches!(err, Err(SearchError::EmptyCorpus)));
    }

    #[test]
    fn ties_break_by_doc_id() {
        let mut c = Corpus::new();
        c.add_doc("b", "apple").unwrap();
        c.add_doc("a", "apple").unwrap();
        c.add_doc("c", "apple").unwrap();
        let ep = build_index(&c, BackendKind::Bm25, &EndpointConfig::default()).unwrap();
        let ids: Vec<String> = ep.query("apple").unwrap().into_iter().map(|h| h.doc_id).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        let ids: Vec<String> = ep.search("apple", 2).unwrap().into_iter().map(|h| h.doc_id).collect();
        assert_eq!(ids, ["a", "b"]);
    }

    #[test]
    fn knn_self_query_first_and_rewards() {
        let mut c = cats();
        c.add_doc("d4", "a bird flew over the lake").unwrap();
        c.set_relevance("q1", ["d4"]).unwrap();
        let ep = Arc::new(build_index(&c, BackendKind::Knn, &EndpointConfig::default()).unwrap());
        assert_eq!(ep.query("a bird flew over the lake").unwrap()[0].doc_id, "d4");
        let lex = Lexicon::bundled();
        let claim = tokenize("a bird flew over the lake", &lex).unwrap().with_claim_id("q1");
        let env = RewardEnv::new(Arc::clone(&ep), &c, RewardSpec::new(Metric::Rr, 50));
        assert_eq!(env.reward(&claim).unwrap(), 1.0);
        assert_eq!(reward(&ep, &claim, RewardSpec::new(Metric::Rr, 50), &c).unwrap(), 1.0);
    }

    #[test]
    fn reward_zero_without_overlap_and_unknown_claim() {
        let mut c = cats();
        c.set_relevance("q", ["d2"]).unwrap();
        let ep = Arc::new(build_index(&c, BackendKind::Bm25, &EndpointConfig::default()).unwrap());
        let env = RewardEnv::new(ep, &c, RewardSpec::default());
        assert_eq!(env.reward_text("q", "zebra stripes").unwrap(), 0.0);
        assert!(matches!(env.reward_text("nope", "cat"), Err(SearchError::UnknownClaim(_))));
    }

    #[test]
    fn dangling_relevance_rejected() {
        let mut c = cats();
        assert!(matches!(
            c.set_relevance("q", ["d9"]),
            Err(SearchError::DanglingReference { .. })
        ));
    }
}
