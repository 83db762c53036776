//! Rank-based retrieval metrics. All return values in `[0, 1]`; a document
//! listed twice in a ranking counts once.

use std::collections::HashSet;
use std::hash::Hash;

/// Average precision at `k`, normalized by `min(|relevant|, k)`.
pub fn ap_at_k<T: Eq + Hash>(ranking: &[T], relevant: &HashSet<T>, k: usize) -> f64 {
    if relevant.is_empty() || k == 0 {
        return 0.0;
    }
    let mut seen = HashSet::new();
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, doc) in ranking.iter().take(k).enumerate() {
        if relevant.contains(doc) && seen.insert(doc) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / relevant.len().min(k) as f64
}

pub fn recall_at_k<T: Eq + Hash>(ranking: &[T], relevant: &HashSet<T>, k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let hits = ranking
        .iter()
        .take(k)
        .filter(|d| relevant.contains(*d))
        .collect::<HashSet<_>>()
        .len();
    hits as f64 / relevant.len() as f64
}

pub fn reciprocal_rank<T: Eq + Hash>(ranking: &[T], relevant: &HashSet<T>, k: usize) -> f64 {
    ranking
        .iter()
        .take(k)
        .position(|d| relevant.contains(d))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(ids: &[&'static str]) -> HashSet<&'static str> {
        ids.iter().copied().collect()
    }

    #[test]
    fn ap_examples() {
        let r = ["d1", "d2", "d3"];
        let ap = ap_at_k(&r, &set(&["d1", "d3"]), 3);
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!(ap_at_k(&r, &set(&["d9"]), 3), 0.0);
        assert_eq!(ap_at_k(&r, &set(&["d1", "d2"]), 3), 1.0);
        assert_eq!(ap_at_k(&r, &HashSet::new(), 3), 0.0);
    }

    #[test]
    fn recall_and_rr_examples() {
        let r = ["d2", "d1"];
        assert_eq!(recall_at_k(&r, &set(&["d1"]), 2), 1.0);
        assert_eq!(reciprocal_rank(&r, &set(&["d1"]), 2), 0.5);
        assert_eq!(recall_at_k(&r, &set(&["d1"]), 1), 0.0);
        assert_eq!(reciprocal_rank(&r, &set(&["d1"]), 1), 0.0);
        assert_eq!(reciprocal_rank(&r, &set(&["d2"]), 2), 1.0);
    }

    proptest! {
        #[test]
        fn bounded(ranking in prop::collection::vec(0u8..30, 0..40),
                   relevant in prop::collection::hash_set(0u8..30, 0..10),
                   k in 1usize..50) {
            for v in [ap_at_k(&ranking, &relevant, k), recall_at_k(&ranking, &relevant, k), reciprocal_rank(&ranking, &relevant, k)] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn appending_never_lowers_recall(ranking in prop::collection::vec(0u8..30, 0..20),
                                         extra in prop::collection::vec(0u8..30, 0..10),
                                         relevant in prop::collection::hash_set(0u8..30, 1..10)) {
            let k = ranking.len() + extra.len() + 1;
            let mut longer = ranking.clone();
            longer.extend(extra);
            prop_assert!(recall_at_k(&longer, &relevant, k) >= recall_at_k(&ranking, &relevant, k));
        }
    }
}
