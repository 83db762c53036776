//! Synthetic benchmark with known headroom.
//!
//! Each relevant document is a clean template sentence (base-form verb,
//! canonical member of each synonym pair). Its claim is a corrupted copy: the
//! verb is inflected, a word may be replaced by its synonym, and distractor
//! words are inserted. Decoy documents are built from the corrupted tokens
//! so the corrupted claim retrieves them ahead of its own document. Every
//! corruption can be undone by one of the four edits, so the clean sentence
//! is reachable within `max_corruptions` steps.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClaimRecord, Label};
use crate::lexedit::{detokenize, tokenize, Lexicon, PosCategory, TokenizedClaim};
use crate::searchenv::{build_index, BackendKind, Corpus, EndpointConfig, RewardEnv, RewardSpec};
use crate::trajgen::best_reachable;

/// Words with no lexicon entry; they can only be removed.
const NOISE_WORDS: &[&str] = &[
    "viral", "shocking", "breaking", "unbelievable", "insane", "omg", "wow", "fake", "crazy", "huh",
];

const TEMPLATES: &[&str] = &[
    "the {adj} {n1} {verb} the {n2} in {place}",
    "{place} {verb} a {adj} {n1} for the {n2}",
    "the {n1} of {place} {verb} the {adj} {n2}",
    "a {adj} {n1} {verb} {n2} near {place}",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub n_claims: usize,
    pub seed: u64,
    pub decoys_per_claim: usize,
    pub background_docs: usize,
    /// Probability that the verb is inflected.
    pub p_inflect: f64,
    /// Probability that one noun or adjective is replaced by its synonym.
    pub p_synonym: f64,
    pub max_distractors: usize,
    /// Cap on the number of corruptions (hence on the repair depth).
    pub max_corruptions: usize,
    pub answer_key_depth: usize,
}

impl PlantedConfig {
    pub fn new(n_claims: usize, seed: u64) -> Self {
        PlantedConfig {
            n_claims,
            seed,
            decoys_per_claim: 4,
            background_docs: n_claims,
            p_inflect: 0.7,
            p_synonym: 0.6,
            max_distractors: 2,
            max_corruptions: 4,
            answer_key_depth: 4,
        }
    }
}

/// Best reward reachable from the original claim by exhaustive search
/// (BM25, AP@50).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerKeyEntry {
    pub claim_id: String,
    pub original_reward: f64,
    pub best_reward: f64,
    pub best_actions: Vec<usize>,
    pub corruptions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedBenchmark {
    pub claims: Vec<ClaimRecord>,
    pub corpus: Corpus,
    pub answer_key: Vec<AnswerKeyEntry>,
}

impl PlantedBenchmark {
    pub fn mean_original(&self) -> f64 {
        mean(self.answer_key.iter().map(|e| e.original_reward))
    }

    pub fn mean_best(&self) -> f64 {
        mean(self.answer_key.iter().map(|e| e.best_reward))
    }

    /// Claims `[from, to)` with their answer-key entries.
    pub fn split(&self, from: usize, to: usize) -> (&[ClaimRecord], &[AnswerKeyEntry]) {
        (&self.claims[from..to], &self.answer_key[from..to])
    }

    /// Every claim tokenized and tagged with its id.
    pub fn tokenized(&self, lexicon: &Lexicon) -> Vec<TokenizedClaim> {
        self.claims
            .iter()
            .map(|c| {
                tokenize(&c.claim, lexicon)
                    .expect("planted claims are never empty")
                    .with_claim_id(&c.claim_id)
            })
            .collect()
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

struct Vocab {
    nouns: Vec<String>,
    adjs: Vec<String>,
    places: Vec<String>,
    verbs: Vec<(String, Vec<String>)>,
    distractors: Vec<String>,
    filler: Vec<String>,
}

impl Vocab {
    fn from_lexicon(lex: &Lexicon) -> Self {
        // A pair is usable when it maps back onto itself; the canonical word
        // (the one documents use) is the lexicographically smaller one.
        let canonical = |cat: PosCategory| -> Vec<String> {
            lex.words_tagged(cat)
                .into_iter()
                .filter(|w| lex.tag(w) == cat)
                .filter(|w| match lex.synonyms(w).first() {
                    Some(s) => lex.synonyms(s).first() == Some(w) && w < s && lex.tag(s) == cat,
                    None => false,
                })
                .collect()
        };
        let nouns = canonical(PosCategory::Noun);
        let adjs = canonical(PosCategory::Adjective);
        let places: Vec<String> = lex
            .words_tagged(PosCategory::Noun)
            .into_iter()
            .filter(|w| lex.synonyms(w).is_empty())
            .collect();
        let verbs: Vec<(String, Vec<String>)> = lex
            .words_tagged(PosCategory::Verb)
            .into_iter()
            .filter(|w| lex.verb_base(w).is_none() && lex.synonyms(w).is_empty() && !lex.is_stopword(w))
            .filter_map(|w| {
                let infl = lex.inflections_of(&w);
                (!infl.is_empty()).then_some((w, infl))
            })
            .collect();
        let mut distractors: Vec<String> = lex
            .words_tagged(PosCategory::Adverb)
            .into_iter()
            .filter(|w| lex.tag(w) == PosCategory::Adverb)
            .filter(|w| !lex.vocabulary().iter().any(|v| lex.synonyms(v).contains(w)))
            .collect();
        distractors.extend(NOISE_WORDS.iter().map(|s| s.to_string()));
        let mut filler = nouns.clone();
        filler.extend(places.iter().cloned());
        Vocab {
            nouns,
            adjs,
            places,
            verbs,
            distractors,
            filler,
        }
    }
}

struct Planted {
    clean: Vec<String>,
    corrupted: Vec<String>,
    /// Tokens present only in the corrupted claim.
    injected: Vec<String>,
    corruptions: usize,
}

fn pick<'a, R: Rng>(rng: &mut R, v: &'a [String]) -> &'a String {
    v.choose(rng).expect("vocabulary is non-empty")
}

fn plant_one<R: Rng>(rng: &mut R, vocab: &Vocab, lex: &Lexicon, cfg: &PlantedConfig) -> Planted {
    let template = TEMPLATES.choose(rng).expect("templates");
    let n1 = pick(rng, &vocab.nouns).clone();
    let mut n2 = pick(rng, &vocab.nouns).clone();
    while n2 == n1 {
        n2 = pick(rng, &vocab.nouns).clone();
    }
    let adj = pick(rng, &vocab.adjs).clone();
    let place = pick(rng, &vocab.places).clone();
    let (verb, inflections) = vocab.verbs.choose(rng).expect("verbs");
    let clean: Vec<String> = template
        .replace("{adj}", &adj)
        .replace("{n1}", &n1)
        .replace("{n2}", &n2)
        .replace("{place}", &place)
        .replace("{verb}", verb)
        .split(' ')
        .map(str::to_string)
        .collect();

    let mut corrupted = clean.clone();
    let mut injected = Vec::new();
    let mut corruptions = 0;
    if rng.gen_bool(cfg.p_inflect) && corruptions < cfg.max_corruptions {
        let i = corrupted.iter().position(|t| t == verb).expect("verb in template");
        corrupted[i] = inflections.choose(rng).expect("inflections").clone();
        injected.push(corrupted[i].clone());
        corruptions += 1;
    }
    if rng.gen_bool(cfg.p_synonym) && corruptions < cfg.max_corruptions {
        let target = [&n1, &n2, &adj][rng.gen_range(0..3)];
        let i = corrupted.iter().position(|t| t == target).expect("word in template");
        corrupted[i] = lex.synonyms(target)[0].clone();
        injected.push(corrupted[i].clone());
        corruptions += 1;
    }
    let room = cfg.max_corruptions - corruptions;
    let n_distract = if room == 0 {
        0
    } else {
        rng.gen_range(1..=cfg.max_distractors.min(room).max(1))
    };
    for _ in 0..n_distract {
        let mut d = pick(rng, &vocab.distractors).clone();
        while corrupted.contains(&d) {
            d = pick(rng, &vocab.distractors).clone();
        }
        let at = rng.gen_range(0..=corrupted.len());
        corrupted.insert(at, d.clone());
        injected.push(d);
        corruptions += 1;
    }
    Planted {
        clean,
        corrupted,
        injected,
        corruptions,
    }
}

fn decoy<R: Rng>(rng: &mut R, p: &Planted, j: usize, lex: &Lexicon) -> String {
    // Most of the content the claim shares with its document, minus one
    // word, plus a repeated corruption token.
    let mut words: Vec<String> = p
        .clean
        .iter()
        .filter(|t| p.corrupted.contains(t) && !lex.is_stopword(t))
        .cloned()
        .collect();
    if words.len() > 1 {
        let drop = rng.gen_range(0..words.len());
        words.remove(drop);
    }
    let main = &p.injected[j % p.injected.len()];
    words.push(main.clone());
    words.push(main.clone());
    words.shuffle(rng);
    words.join(" ")
}

/// Builds the benchmark and its answer key. Output depends only on `cfg`.
pub fn make_planted_benchmark(cfg: &PlantedConfig) -> PlantedBenchmark {
    assert!(cfg.n_claims >= 1, "n_claims must be >= 1");
    let lex = Lexicon::bundled();
    let vocab = Vocab::from_lexicon(&lex);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut corpus = Corpus::new();
    let mut claims = Vec::with_capacity(cfg.n_claims);
    let mut corruption_counts = Vec::with_capacity(cfg.n_claims);
    let mut seen_claims = BTreeSet::new();
    let mut i = 0usize;
    while claims.len() < cfg.n_claims {
        let p = plant_one(&mut rng, &vocab, &lex, cfg);
        if p.injected.is_empty() || !seen_claims.insert(p.corrupted.clone()) {
            continue;
        }
        let doc_id = format!("pd{i:05}");
        corpus
            .add_doc(doc_id.clone(), detokenize(&p.clean))
            .expect("fresh doc id");
        for j in 0..cfg.decoys_per_claim {
            corpus
                .add_doc(format!("px{i:05}_{j}"), decoy(&mut rng, &p, j, &lex))
                .expect("fresh doc id");
        }
        let claim_id = format!("pc{i:05}");
        corpus.set_relevance(&claim_id, [doc_id.as_str()]).expect("doc exists");
        claims.push(ClaimRecord {
            claim_id,
            claim: detokenize(&p.corrupted),
            relevant_doc_ids: vec![doc_id],
            label: if rng.gen_bool(0.5) { Label::Supports } else { Label::Refutes },
        });
        corruption_counts.push(p.corruptions);
        i += 1;
    }
    for b in 0..cfg.background_docs {
        let n = rng.gen_range(4..=8);
        let mut words: Vec<String> = (0..n).map(|_| pick(&mut rng, &vocab.filler).clone()).collect();
        if rng.gen_bool(0.5) {
            words.push(vocab.verbs.choose(&mut rng).expect("verbs").0.clone());
        }
        corpus.add_doc(format!("pb{b:05}"), words.join(" ")).expect("fresh doc id");
    }

    let endpoint = Arc::new(build_index(&corpus, BackendKind::Bm25, &EndpointConfig::default()).expect("non-empty corpus"));
    let env = RewardEnv::new(endpoint, &corpus, RewardSpec::default());
    let answer_key = claims
        .par_iter()
        .zip(corruption_counts.par_iter())
        .map(|(c, &corruptions)| {
            let claim = tokenize(&c.claim, &lex).expect("non-empty claim").with_claim_id(&c.claim_id);
            let (best, path, _) = best_reachable(&claim, &env, &lex, cfg.answer_key_depth).expect("claim has relevance");
            let original_reward = env.reward(&claim).expect("claim has relevance");
            AnswerKeyEntry {
                claim_id: c.claim_id.clone(),
                original_reward,
                best_reward: best,
                best_actions: path.iter().map(|a| a.flatten()).collect(),
                corruptions,
            }
        })
        .collect();
    PlantedBenchmark {
        claims,
        corpus,
        answer_key,
    }
}
