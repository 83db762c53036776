//! Okapi BM25 over an inverted index.
//!
//! `score(q, d) = sum over query tokens t of idf(t) * tf(t,d) * (k1 + 1) / (tf(t,d) + k1 * (1 - b + b * |d| / avgdl))`
//! with `idf(t) = ln(1 + (N - df(t) + 0.5) / (df(t) + 0.5))`. Repeated query
//! tokens contribute once per occurrence.

use std::collections::HashMap;

use super::analyze;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

#[derive(Debug, Clone, PartialEq)]
pub struct Bm25Index {
    pub(crate) k1: f64,
    pub(crate) b: f64,
    /// term -> (doc, term frequency), docs ascending
    pub(crate) postings: HashMap<String, Vec<(u32, u32)>>,
    pub(crate) doc_len: Vec<u32>,
    pub(crate) avgdl: f64,
}

impl Bm25Index {
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, k1: f64, b: f64) -> Self {
        let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
        let mut doc_len = Vec::new();
        for (doc, text) in texts.into_iter().enumerate() {
            let terms = analyze(text);
            doc_len.push(terms.len() as u32);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in terms {
                *tf.entry(t).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push((doc as u32, n));
            }
        }
        for list in postings.values_mut() {
            list.sort_unstable();
        }
        let total: u64 = doc_len.iter().map(|&l| l as u64).sum();
        let avgdl = if doc_len.is_empty() {
            0.0
        } else {
            total as f64 / doc_len.len() as f64
        };
        Bm25Index {
            k1,
            b,
            postings,
            doc_len,
            avgdl,
        }
    }

    pub(crate) fn from_parts(
        k1: f64,
        b: f64,
        postings: HashMap<String, Vec<(u32, u32)>>,
        doc_len: Vec<u32>,
    ) -> Self {
        let total: u64 = doc_len.iter().map(|&l| l as u64).sum();
        let avgdl = if doc_len.is_empty() {
            0.0
        } else {
            total as f64 / doc_len.len() as f64
        };
        Bm25Index {
            k1,
            b,
            postings,
            doc_len,
            avgdl,
        }
    }

    pub fn n_docs(&self) -> usize {
        self.doc_len.len()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.n_docs() as f64;
        let df = self.postings.get(term).map_or(0, Vec::len) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Scores of every document matching at least one query term, in doc order.
    pub fn score_all(&self, query: &str) -> Vec<(u32, f64)> {
        let mut qtf: Vec<(String, u32)> = Vec::new();
        for t in analyze(query) {
            match qtf.iter_mut().find(|(q, _)| *q == t) {
                Some((_, n)) => *n += 1,
                None => qtf.push((t, 1)),
            }
        }
        let mut acc = vec![0.0f64; self.n_docs()];
        let mut touched = vec![false; self.n_docs()];
        for (term, count) in &qtf {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(term);
            for &(doc, tf) in list {
                let tf = tf as f64;
                let dl = self.doc_len[doc as usize] as f64;
                let norm = self.k1 * (1.0 - self.b + self.b * dl / self.avgdl);
                acc[doc as usize] += *count as f64 * idf * tf * (self.k1 + 1.0) / (tf + norm);
                touched[doc as usize] = true;
            }
        }
        touched
            .iter()
            .enumerate()
            .filter(|(_, &t)| t)
            .map(|(d, _)| (d as u32, acc[d]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cat_example_matches_hand_computation() {
        let idx = Bm25Index::build(["cat sat", "dog sat", "cat cat"], DEFAULT_K1, DEFAULT_B);
        let scores = idx.score_all("cat");
        assert_eq!(scores.len(), 2);
        // N=3, df(cat)=2, avgdl=2 so the length norm is k1 for every doc
        let idf = (1.0f64 + (3.0 - 2.0 + 0.5) / 2.5).ln();
        let s1 = idf * 1.0 * 2.2 / (1.0 + 1.2);
        let s3 = idf * 2.0 * 2.2 / (2.0 + 1.2);
        assert!((scores[0].1 - s1).abs() < 1e-12);
        assert!((scores[1].1 - s3).abs() < 1e-12);
        assert!(scores[1].1 > scores[0].1);
    }

    #[test]
    fn unknown_term_matches_nothing() {
        let idx = Bm25Index::build(["a b", "c"], DEFAULT_K1, DEFAULT_B);
        assert!(idx.score_all("zzz").is_empty());
    }
}
