//! Hierarchical navigable small world graph over unit vectors, cosine distance.
//!
//! Level assignment draws from a seeded ChaCha stream and insertion follows
//! corpus order, so a given corpus and seed always produce the same graph.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HnswParams {
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        HnswParams {
            m: 16,
            ef_construction: 200,
            ef_search: 100,
            seed: 0x5eed,
        }
    }
}

const MAX_LEVEL: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Scored {
    dist: f32,
    id: u32,
}

impl Eq for Scored {}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hnsw {
    pub(crate) params: HnswParams,
    pub(crate) dim: usize,
    pub(crate) data: Vec<f32>,
    pub(crate) levels: Vec<u8>,
    /// node -> layer -> neighbor ids
    pub(crate) links: Vec<Vec<Vec<u32>>>,
    pub(crate) entry: Option<u32>,
}

struct Visited {
    stamp: Vec<u32>,
    current: u32,
}

impl Visited {
    fn new(n: usize) -> Self {
        Visited {
            stamp: vec![0; n],
            current: 0,
        }
    }

    fn reset(&mut self, n: usize) {
        if self.stamp.len() < n {
            self.stamp.resize(n, 0);
        }
        self.current = self.current.wrapping_add(1);
        if self.current == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.current = 1;
        }
    }

    /// Returns true the first time `id` is seen since the last reset.
    fn insert(&mut self, id: u32) -> bool {
        let slot = &mut self.stamp[id as usize];
        if *slot == self.current {
            false
        } else {
            *slot = self.current;
            true
        }
    }
}

pub fn cosine_distance(a: &[f32], b: &[f32]) -> f32 {
    let mut dot = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
    }
    1.0 - dot
}

impl Hnsw {
    pub fn new(dim: usize, params: HnswParams) -> Self {
        Hnsw {
            params,
            dim,
            data: Vec::new(),
            levels: Vec::new(),
            links: Vec::new(),
            entry: None,
        }
    }

    /// Builds a graph over `vectors` inserted in order.
    pub fn build(vectors: &[Vec<f32>], dim: usize, params: HnswParams) -> Self {
        let mut g = Hnsw::new(dim, params);
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut visited = Visited::new(vectors.len());
        for v in vectors {
            assert_eq!(v.len(), dim, "vector dimension mismatch");
            let u: f64 = 1.0 - rng.gen::<f64>();
            let level = ((-u.ln() * g.level_mult()).floor() as usize).min(MAX_LEVEL);
            g.insert(v, level, &mut visited);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> HnswParams {
        self.params
    }

    fn level_mult(&self) -> f64 {
        1.0 / (self.params.m.max(2) as f64).ln()
    }

    fn max_links(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.params.m
        } else {
            self.params.m
        }
    }

    pub fn vector(&self, id: u32) -> &[f32] {
        let i = id as usize * self.dim;
        &self.data[i..i + self.dim]
    }

    fn dist_to(&self, q: &[f32], id: u32) -> f32 {
        cosine_distance(q, self.vector(id))
    }

    fn top_level(&self) -> usize {
        self.entry.map_or(0, |e| self.levels[e as usize] as usize)
    }

    fn insert(&mut self, v: &[f32], level: usize, visited: &mut Visited) {
        let id = self.levels.len() as u32;
        self.data.extend_from_slice(v);
        self.levels.push(level as u8);
        self.links.push(vec![Vec::new(); level + 1]);
        let Some(entry) = self.entry else {
            self.entry = Some(id);
            return;
        };
        let top = self.top_level();
        let mut eps = vec![Scored {
            dist: self.dist_to(v, entry),
            id: entry,
        }];
        for layer in (level + 1..=top).rev() {
            eps = self.search_layer(v, &eps, 1, layer, visited);
        }
        for layer in (0..=level.min(top)).rev() {
            let candidates = self.search_layer(v, &eps, self.params.ef_construction, layer, visited);
            let chosen = self.select_neighbors(v, &candidates, self.params.m);
            self.links[id as usize][layer] = chosen.iter().map(|s| s.id).collect();
            for s in &chosen {
                self.connect(s.id, id, layer);
            }
            eps = candidates;
        }
        if level > top {
            self.entry = Some(id);
        }
    }

    fn connect(&mut self, from: u32, to: u32, layer: usize) {
        let cap = self.max_links(layer);
        self.links[from as usize][layer].push(to);
        if self.links[from as usize][layer].len() <= cap {
            return;
        }
        let base = self.vector(from).to_vec();
        let mut cands: Vec<Scored> = self.links[from as usize][layer]
            .iter()
            .map(|&n| Scored {
                dist: self.dist_to(&base, n),
                id: n,
            })
            .collect();
        cands.sort();
        let kept = self.select_neighbors(&base, &cands, cap);
        self.links[from as usize][layer] = kept.into_iter().map(|s| s.id).collect();
    }

    /// Diversity heuristic: keep a candidate only if it is closer to the
    /// query than to every neighbor kept so far, then top up with the
    /// discarded ones. `candidates` must be sorted ascending.
    fn select_neighbors(&self, _q: &[f32], candidates: &[Scored], m: usize) -> Vec<Scored> {
        let mut kept: Vec<Scored> = Vec::with_capacity(m);
        let mut pruned = Vec::new();
        for &c in candidates {
            if kept.len() >= m {
                break;
            }
            let cv = self.vector(c.id);
            let diverse = kept
                .iter()
                .all(|k| cosine_distance(cv, self.vector(k.id)) > c.dist);
            if diverse {
                kept.push(c);
            } else {
                pruned.push(c);
            }
        }
        for c in pruned {
            if kept.len() >= m {
                break;
            }
            kept.push(c);
        }
        kept
    }

    /// Best-first search of one layer; returns up to `ef` nodes sorted ascending.
    fn search_layer(
        &self,
        q: &[f32],
        entry: &[Scored],
        ef: usize,
        layer: usize,
        visited: &mut Visited,
    ) -> Vec<Scored> {
        visited.reset(self.len());
        let mut candidates: BinaryHeap<Reverse<Scored>> = BinaryHeap::new();
        let mut best: BinaryHeap<Scored> = BinaryHeap::new();
        for &e in entry {
            if visited.insert(e.id) {
                candidates.push(Reverse(e));
                best.push(e);
            }
        }
        while best.len() > ef {
            best.pop();
        }
        while let Some(Reverse(c)) = candidates.pop() {
            if best.len() >= ef && c.dist > best.peek().expect("non-empty").dist {
                break;
            }
            for &n in &self.links[c.id as usize][layer] {
                if !visited.insert(n) {
                    continue;
                }
                let d = Scored {
                    dist: self.dist_to(q, n),
                    id: n,
                };
                if best.len() < ef || d < *best.peek().expect("non-empty") {
                    candidates.push(Reverse(d));
                    best.push(d);
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        best.into_sorted_vec()
    }

    /// Approximate `k` nearest neighbors as `(id, cosine distance)`, ascending.
    pub fn search(&self, q: &[f32], k: usize, ef: usize) -> Vec<(u32, f32)> {
        let Some(entry) = self.entry else {
            return Vec::new();
        };
        let mut visited = Visited::new(self.len());
        let mut eps = vec![Scored {
            dist: self.dist_to(q, entry),
            id: entry,
        }];
        for layer in (1..=self.top_level()).rev() {
            eps = self.search_layer(q, &eps, 1, layer, &mut visited);
        }
        let found = self.search_layer(q, &eps, ef.max(k), 0, &mut visited);
        found.into_iter().take(k).map(|s| (s.id, s.dist)).collect()
    }

    /// Exact nearest neighbors by linear scan.
    pub fn brute_force(&self, q: &[f32], k: usize) -> Vec<(u32, f32)> {
        let mut all: Vec<Scored> = (0..self.len() as u32)
            .map(|id| Scored {
                dist: self.dist_to(q, id),
                id,
            })
            .collect();
        all.sort();
        all.into_iter().take(k).map(|s| (s.id, s.dist)).collect()
    }
}
