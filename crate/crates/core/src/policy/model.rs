//! Parameter layout and forward graphs for the decision transformer and the
//! single-step classifier.
//!
//! Both share a state encoder and an action head. The encoder owns a token
//! table: a trainable hashed-vocabulary embedding, or a fixed random
//! projection of the hashed bag-of-words space. A state vector is a weighted
//! sum of table rows. The action head scores `kind x position` by a dot
//! product between a kind-specific projection of the hidden state and the
//! table row of the token at that position, plus a per-action bias.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::ParamStore;
use super::tape::{Tape, Var, EMPTY_SLOT};
use super::{PolicyConfig, StateEncoderKind};
use crate::lexedit::{split_tokens, ACTION_SPACE, MAX_POSITIONS};
use crate::searchenv::embed::{fnv1a, EmbeddingProvider};
use crate::searchenv::analyze;

/// Bucket count of the hashed bag-of-words behind the frozen encoder.
pub(crate) const FROZEN_HASH_DIM: usize = 256;
const INIT_STD: f64 = 0.02;
const N_KINDS: usize = ACTION_SPACE / MAX_POSITIONS;

pub(crate) const TRAINABLE_TABLE: &str = "encoder.tokens";
pub(crate) const FROZEN_TABLE: &str = "encoder.frozen";

/// What the encoder needs to know about one state text.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct StateFeatures {
    /// Table rows and weights summed into the state vector.
    pub(crate) groups: Vec<(usize, f64)>,
    /// Table row per position, `EMPTY_SLOT` past the end.
    pub(crate) slots: Vec<usize>,
}

impl StateFeatures {
    pub(crate) fn padding() -> Self {
        StateFeatures {
            groups: Vec::new(),
            slots: vec![EMPTY_SLOT; MAX_POSITIONS],
        }
    }
}

pub(crate) fn featurize(cfg: &PolicyConfig, text: &str) -> StateFeatures {
    let tokens: Vec<String> = split_tokens(text).iter().map(|t| t.to_lowercase()).collect();
    let mut slots = vec![EMPTY_SLOT; MAX_POSITIONS];
    match cfg.state_encoder {
        StateEncoderKind::Trainable => {
            let bucket = |t: &str| (fnv1a(t.as_bytes()) % cfg.vocab_buckets as u64) as usize;
            let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
            for t in &tokens {
                *counts.entry(bucket(t)).or_default() += 1.0;
            }
            let n = tokens.len().max(1) as f64;
            for (p, t) in tokens.iter().take(MAX_POSITIONS).enumerate() {
                slots[p] = bucket(t);
            }
            StateFeatures {
                groups: counts.into_iter().map(|(b, c)| (b, c / n)).collect(),
                slots,
            }
        }
        StateEncoderKind::Frozen => {
            let provider = EmbeddingProvider::HashedBow { dim: FROZEN_HASH_DIM };
            let groups = match provider.embed(text) {
                Ok(v) => v
                    .iter()
                    .enumerate()
                    .filter(|(_, x)| **x != 0.0)
                    .map(|(i, x)| (i, *x as f64))
                    .collect(),
                Err(_) => Vec::new(),
            };
            for (p, t) in tokens.iter().take(MAX_POSITIONS).enumerate() {
                slots[p] = match analyze(t).first() {
                    Some(a) => EmbeddingProvider::bucket(a, FROZEN_HASH_DIM),
                    // the extra all-zero row
                    None => FROZEN_HASH_DIM,
                };
            }
            StateFeatures { groups, slots }
        }
    }
}

pub(crate) fn table_name(cfg: &PolicyConfig) -> &'static str {
    match cfg.state_encoder {
        StateEncoderKind::Trainable => TRAINABLE_TABLE,
        StateEncoderKind::Frozen => FROZEN_TABLE,
    }
}

fn add_encoder(store: &mut ParamStore, rng: &mut ChaCha8Rng, cfg: &PolicyConfig) {
    let d = cfg.embed_dim;
    match cfg.state_encoder {
        StateEncoderKind::Trainable => {
            store.normal(rng, TRAINABLE_TABLE, cfg.vocab_buckets, d, INIT_STD);
        }
        StateEncoderKind::Frozen => {
            let id = store.normal(rng, FROZEN_TABLE, FROZEN_HASH_DIM + 1, d, 1.0 / (d as f64).sqrt());
            store.values[id].row_mut(FROZEN_HASH_DIM).fill(0.0);
            store.trainable[id] = false;
        }
    }
}

fn add_head(store: &mut ParamStore, rng: &mut ChaCha8Rng, d: usize) {
    store.normal(rng, "head.w", d, N_KINDS * d, INIT_STD);
    store.zeros("head.b", 1, N_KINDS * d);
    store.normal(rng, "head.empty", 1, d, INIT_STD);
    store.zeros("head.bias", 1, ACTION_SPACE);
}

pub(crate) fn init_dt(cfg: &PolicyConfig) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut s = ParamStore::new();
    let d = cfg.embed_dim;
    add_encoder(&mut s, &mut rng, cfg);
    s.normal(&mut rng, "embed.rtg.w", 1, d, INIT_STD);
    s.zeros("embed.rtg.b", 1, d);
    s.normal(&mut rng, "embed.state.w", d, d, INIT_STD);
    s.zeros("embed.state.b", 1, d);
    s.normal(&mut rng, "embed.action", ACTION_SPACE, d, INIT_STD);
    s.normal(&mut rng, "embed.time", cfg.block_size, d, INIT_STD);
    for l in 0..cfg.n_layers {
        s.ones(&format!("block{l}.ln1.g"), 1, d);
        s.zeros(&format!("block{l}.ln1.b"), 1, d);
        for w in ["wq", "wk", "wv", "wo"] {
            s.normal(&mut rng, &format!("block{l}.attn.{w}"), d, d, INIT_STD);
        }
        s.zeros(&format!("block{l}.attn.bo"), 1, d);
        s.ones(&format!("block{l}.ln2.g"), 1, d);
        s.zeros(&format!("block{l}.ln2.b"), 1, d);
        s.normal(&mut rng, &format!("block{l}.mlp.w1"), d, 4 * d, INIT_STD);
        s.zeros(&format!("block{l}.mlp.b1"), 1, 4 * d);
        s.normal(&mut rng, &format!("block{l}.mlp.w2"), 4 * d, d, INIT_STD);
        s.zeros(&format!("block{l}.mlp.b2"), 1, d);
    }
    s.ones("ln_f.g", 1, d);
    s.zeros("ln_f.b", 1, d);
    add_head(&mut s, &mut rng, d);
    s
}

pub(crate) fn init_classifier(cfg: &PolicyConfig) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut s = ParamStore::new();
    let d = cfg.embed_dim;
    add_encoder(&mut s, &mut rng, cfg);
    s.normal(&mut rng, "cls.w1", d, 4 * d, INIT_STD);
    s.zeros("cls.b1", 1, 4 * d);
    s.normal(&mut rng, "cls.w2", 4 * d, d, INIT_STD);
    s.zeros("cls.b2", 1, d);
    s.ones("cls.ln.g", 1, d);
    s.zeros("cls.ln.b", 1, d);
    add_head(&mut s, &mut rng, d);
    s
}

/// `B` episodes, each left-padded to `K` steps, flattened row-major.
#[derive(Debug, Clone, Default)]
pub(crate) struct DtBatch {
    pub(crate) rtg: Vec<f64>,
    pub(crate) states: Vec<StateFeatures>,
    pub(crate) actions: Vec<usize>,
    pub(crate) time: Vec<usize>,
    pub(crate) valid: Vec<bool>,
}

impl DtBatch {
    /// Appends one episode of `n <= k` real steps.
    pub(crate) fn push_episode(&mut self, k: usize, rtg: &[f64], states: Vec<StateFeatures>, actions: &[usize]) {
        let n = states.len();
        assert!(n <= k && rtg.len() == n && actions.len() == n);
        let pad = k - n;
        for _ in 0..pad {
            self.rtg.push(0.0);
            self.states.push(StateFeatures::padding());
            self.actions.push(0);
            self.time.push(0);
            self.valid.push(false);
        }
        for (t, st) in states.into_iter().enumerate() {
            self.rtg.push(rtg[t]);
            self.states.push(st);
            self.actions.push(actions[t]);
            self.time.push(t);
            self.valid.push(true);
        }
    }

    pub(crate) fn rows(&self) -> usize {
        self.valid.len()
    }
}

fn head(tape: &mut Tape, store: &ParamStore, vars: &[Var], cfg: &PolicyConfig, h: Var, states: &[StateFeatures]) -> Var {
    let v = |n: &str| vars[store.id(n)];
    let u = tape.linear(h, v("head.w"), v("head.b"));
    let idx: Vec<usize> = states.iter().flat_map(|s| s.slots.iter().copied()).collect();
    tape.pointer(u, v(table_name(cfg)), v("head.empty"), v("head.bias"), MAX_POSITIONS, idx)
}

fn encode(tape: &mut Tape, store: &ParamStore, vars: &[Var], cfg: &PolicyConfig, states: &[StateFeatures]) -> Var {
    let groups = states.iter().map(|s| s.groups.clone()).collect();
    tape.weighted_rows(vars[store.id(table_name(cfg))], groups)
}

/// Logits for every `(episode, step)` row: `(B*K) x 128`.
pub(crate) fn dt_graph(tape: &mut Tape, store: &ParamStore, vars: &[Var], cfg: &PolicyConfig, batch: &DtBatch) -> Var {
    let v = |n: &str| vars[store.id(n)];
    let k = cfg.block_size;
    let rows = batch.rows();
    assert_eq!(rows % k, 0);

    let rtg_in = tape.input(super::tape::Mat::from_shape_vec((rows, 1), batch.rtg.clone()).expect("shape"));
    let time = tape.gather(v("embed.time"), batch.time.clone());
    let r = tape.linear(rtg_in, v("embed.rtg.w"), v("embed.rtg.b"));
    let r = tape.add(r, time);
    let sv = encode(tape, store, vars, cfg, &batch.states);
    let s = tape.linear(sv, v("embed.state.w"), v("embed.state.b"));
    let s = tape.add(s, time);
    let a = tape.gather(v("embed.action"), batch.actions.clone());
    let a = tape.add(a, time);
    let mut x = tape.interleave(vec![r, s, a]);

    let key_valid: Vec<bool> = batch.valid.iter().flat_map(|&ok| [ok, ok, ok]).collect();
    for l in 0..cfg.n_layers {
        let p = |n: &str| v(&format!("block{l}.{n}"));
        let h = tape.layer_norm(x, p("ln1.g"), p("ln1.b"));
        let q = tape.matmul(h, p("attn.wq"));
        let kk = tape.matmul(h, p("attn.wk"));
        let vv = tape.matmul(h, p("attn.wv"));
        let att = tape.attention(q, kk, vv, cfg.n_heads, 3 * k, &key_valid);
        let att = tape.linear(att, p("attn.wo"), p("attn.bo"));
        x = tape.add(x, att);
        let h = tape.layer_norm(x, p("ln2.g"), p("ln2.b"));
        let h = tape.linear(h, p("mlp.w1"), p("mlp.b1"));
        let h = tape.gelu(h);
        let h = tape.linear(h, p("mlp.w2"), p("mlp.b2"));
        x = tape.add(x, h);
    }
    let x = tape.layer_norm(x, v("ln_f.g"), v("ln_f.b"));
    let state_rows: Vec<usize> = (0..rows).map(|i| 3 * i + 1).collect();
    let hs = tape.select_rows(x, state_rows);
    head(tape, store, vars, cfg, hs, &batch.states)
}

/// Logits per state: `B x 128`.
pub(crate) fn classifier_graph(
    tape: &mut Tape,
    store: &ParamStore,
    vars: &[Var],
    cfg: &PolicyConfig,
    states: &[StateFeatures],
) -> Var {
    let v = |n: &str| vars[store.id(n)];
    let s = encode(tape, store, vars, cfg, states);
    let h = tape.linear(s, v("cls.w1"), v("cls.b1"));
    let h = tape.gelu(h);
    let h = tape.linear(h, v("cls.w2"), v("cls.b2"));
    let h = tape.add(h, s);
    let h = tape.layer_norm(h, v("cls.ln.g"), v("cls.ln.b"));
    head(tape, store, vars, cfg, h, states)
}
