//! Nearest-neighbor descriptor matching, ratio filtering and voting.
//!
//! Two search strategies are offered: brute force and an exact
//! backtracking kd-tree. They must return identical results; the kd-tree
//! exists purely as a performance path and is validated by equivalence.

mod kdtree;

pub use kdtree::KdTree;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{DescriptorKind, DescriptorPayload, DescriptorSet};

/// Reject label for views that produce no good matches.
pub const UNKNOWN_LABEL: &str = "UNKNOWN";

/// Default Lowe ratio threshold.
pub const DEFAULT_RATIO: f32 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatcherStrategy {
    BruteForce,
    KdTree,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Hamming,
    L2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatcherConfig {
    pub strategy: MatcherStrategy,
    pub metric: Metric,
    /// Lowe ratio threshold r in (0, 1).
    pub ratio_threshold: f32,
    pub kdtree_leaf_size: usize,
}

impl MatcherConfig {
    pub fn brute(metric: Metric) -> Self {
        MatcherConfig {
            strategy: MatcherStrategy::BruteForce,
            metric,
            ratio_threshold: DEFAULT_RATIO,
            kdtree_leaf_size: 16,
        }
    }

    pub fn kdtree(metric: Metric) -> Self {
        MatcherConfig {
            strategy: MatcherStrategy::KdTree,
            ..Self::brute(metric)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.ratio_threshold;
        if r.is_nan() || r <= 0.0 || r >= 1.0 {
            return Err(Error::InvalidParam(format!(
                "ratio threshold must be in (0, 1), got {}",
                self.ratio_threshold
            )));
        }
        if self.kdtree_leaf_size == 0 {
            return Err(Error::InvalidParam("kdtree_leaf_size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn compatible_with(&self, kind: DescriptorKind) -> bool {
        matches!(
            (self.metric, kind),
            (Metric::Hamming, DescriptorKind::Binary) | (Metric::L2, DescriptorKind::Float)
        )
    }
}

/// A good match between a query descriptor and a model descriptor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Match {
    pub query_idx: usize,
    /// Model view the matched descriptor came from.
    pub train_view: usize,
    /// Flat descriptor index in the model.
    pub train_idx: usize,
    /// Hamming bits or L2 distance.
    pub distance: f32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub train_idx: usize,
    pub distance: f32,
}

/// The two distinct nearest model descriptors of one query descriptor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoNearest {
    pub first: Neighbor,
    pub second: Neighbor,
}

/// Hamming distance between packed bitstrings.
pub fn hamming(a: &[u8], b: &[u8]) -> u32 {
    debug_assert_eq!(a.len(), b.len());
    let mut dist = 0u32;
    let mut chunks_a = a.chunks_exact(8);
    let mut chunks_b = b.chunks_exact(8);
    for (ca, cb) in (&mut chunks_a).zip(&mut chunks_b) {
        let wa = u64::from_le_bytes(ca.try_into().unwrap());
        let wb = u64::from_le_bytes(cb.try_into().unwrap());
        dist += (wa ^ wb).count_ones();
    }
    for (ra, rb) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
        dist += (ra ^ rb).count_ones();
    }
    dist
}

/// Euclidean distance between float vectors.
pub fn l2(a: &[f32], b: &[f32]) -> f32 {
    sq_l2(a, b).sqrt()
}

#[inline]
pub(crate) fn sq_l2(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Squared L2 with early abandon: returns None as soon as the partial sum
/// strictly exceeds `bound`. Accumulation order matches [`sq_l2`] exactly,
/// so completed distances are bit-identical with the plain routine.
#[inline]
pub(crate) fn sq_l2_bounded(a: &[f32], b: &[f32], bound: f32) -> Option<f32> {
    let mut acc = 0.0f32;
    let n = a.len();
    let mut i = 0;
    while i < n {
        let stop = (i + 16).min(n);
        while i < stop {
            let d = a[i] - b[i];
            acc += d * d;
            i += 1;
        }
        if acc > bound {
            return None;
        }
    }
    Some(acc)
}

/// Running best-two candidates ordered lexicographically by
/// (distance, index). The lexicographic rule makes the result independent
/// of visit order, which is what lets the kd-tree and brute force agree
/// exactly, ties included.
#[derive(Clone, Copy, Debug)]
pub(crate) struct BestTwo {
    pub first: (f32, usize),
    pub second: (f32, usize),
}

impl BestTwo {
    pub fn new() -> Self {
        BestTwo {
            first: (f32::INFINITY, usize::MAX),
            second: (f32::INFINITY, usize::MAX),
        }
    }

    #[inline]
    fn lex_less(a: (f32, usize), b: (f32, usize)) -> bool {
        a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
    }

    #[inline]
    pub fn offer(&mut self, dist: f32, idx: usize) {
        let cand = (dist, idx);
        if Self::lex_less(cand, self.first) {
            self.second = self.first;
            self.first = cand;
        } else if Self::lex_less(cand, self.second) {
            self.second = cand;
        }
    }

    /// Current pruning bound: anything strictly worse cannot enter.
    #[inline]
    pub fn bound(&self) -> f32 {
        self.second.0
    }
}

/// Searchable index over a flat model descriptor array.
pub enum SearchIndex {
    BruteBinary {
        bits: usize,
        data: Vec<u8>,
        count: usize,
    },
    BruteFloat {
        dims: usize,
        data: Vec<f32>,
        count: usize,
    },
    /// kd-tree over float vectors; binary descriptors are expanded to
    /// 0/1 coordinates, where squared L2 equals the Hamming count.
    Kd { metric: Metric, tree: KdTree },
}

impl SearchIndex {
    pub fn build(cfg: &MatcherConfig, payload: &DescriptorPayload, count: usize) -> Result<Self> {
        cfg.validate()?;
        let kind = match payload {
            DescriptorPayload::Binary { .. } => DescriptorKind::Binary,
            DescriptorPayload::Float { .. } => DescriptorKind::Float,
        };
        if !cfg.compatible_with(kind) {
            return Err(Error::Incompatible(format!(
                "{:?} metric cannot search {kind:?} descriptors",
                cfg.metric
            )));
        }
        match (cfg.strategy, payload) {
            (MatcherStrategy::BruteForce, DescriptorPayload::Binary { bits, data }) => {
                Ok(SearchIndex::BruteBinary {
                    bits: *bits,
                    data: data.clone(),
                    count,
                })
            }
            (MatcherStrategy::BruteForce, DescriptorPayload::Float { dims, data }) => {
                Ok(SearchIndex::BruteFloat {
                    dims: *dims,
                    data: data.clone(),
                    count,
                })
            }
            (MatcherStrategy::KdTree, DescriptorPayload::Float { dims, data }) => {
                Ok(SearchIndex::Kd {
                    metric: Metric::L2,
                    tree: KdTree::build(data.clone(), *dims, count, cfg.kdtree_leaf_size),
                })
            }
            (MatcherStrategy::KdTree, DescriptorPayload::Binary { bits, data }) => {
                let mut coords = Vec::with_capacity(bits * count);
                for i in 0..count {
                    let bytes = &data[i * (bits / 8)..(i + 1) * (bits / 8)];
                    for bit in 0..*bits {
                        let set = bytes[bit / 8] >> (bit % 8) & 1;
                        coords.push(set as f32);
                    }
                }
                Ok(SearchIndex::Kd {
                    metric: Metric::Hamming,
                    tree: KdTree::build(coords, *bits, count, cfg.kdtree_leaf_size),
                })
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SearchIndex::BruteBinary { count, .. } => *count,
            SearchIndex::BruteFloat { count, .. } => *count,
            SearchIndex::Kd { tree, .. } => tree.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn kind(&self) -> DescriptorKind {
        match self {
            SearchIndex::BruteBinary { .. } => DescriptorKind::Binary,
            SearchIndex::Kd {
                metric: Metric::Hamming,
                ..
            } => DescriptorKind::Binary,
            _ => DescriptorKind::Float,
        }
    }

    /// For each query descriptor, the two distinct nearest model
    /// descriptors with exact distances.
    pub fn knn2(&self, query: &DescriptorSet) -> Result<Vec<TwoNearest>> {
        if self.len() < 2 {
            return Err(Error::InvalidParam(format!(
                "two-nearest-neighbor search needs at least 2 model descriptors, index has {}",
                self.len()
            )));
        }
        if query.kind() != self.kind() {
            return Err(Error::Incompatible(format!(
                "query descriptors are {:?}, index holds {:?}",
                query.kind(),
                self.kind()
            )));
        }
        let mut out = Vec::with_capacity(query.len());
        for qi in 0..query.len() {
            let best = match self {
                SearchIndex::BruteBinary { bits, data, count } => {
                    let nb = bits / 8;
                    let q = query.binary(qi);
                    let mut best = BestTwo::new();
                    for ti in 0..*count {
                        let d = hamming(q, &data[ti * nb..(ti + 1) * nb]) as f32;
                        best.offer(d, ti);
                    }
                    best
                }
                SearchIndex::BruteFloat { dims, data, count } => {
                    let q = query.float(qi);
                    let mut best = BestTwo::new();
                    for ti in 0..*count {
                        let t = &data[ti * dims..(ti + 1) * dims];
                        if let Some(d) = sq_l2_bounded(q, t, best.bound()) {
                            best.offer(d, ti);
                        }
                    }
                    best
                }
                SearchIndex::Kd { metric, tree } => {
                    let mut best = BestTwo::new();
                    match metric {
                        Metric::L2 => tree.knn2(query.float(qi), &mut best),
                        Metric::Hamming => {
                            let q = query.binary(qi);
                            let bits = tree.dims();
                            let mut coords = Vec::with_capacity(bits);
                            for bit in 0..bits {
                                coords.push((q[bit / 8] >> (bit % 8) & 1) as f32);
                            }
                            tree.knn2(&coords, &mut best);
                        }
                    }
                    best
                }
            };
            // Distances leave the index as squared L2 (kd/brute float) or
            // raw Hamming counts; unify the final representation.
            let finalize = |d: f32| match self {
                SearchIndex::BruteBinary { .. } => d,
                SearchIndex::Kd {
                    metric: Metric::Hamming,
                    ..
                } => d,
                _ => d.sqrt(),
            };
            out.push(TwoNearest {
                first: Neighbor {
                    train_idx: best.first.1,
                    distance: finalize(best.first.0),
                },
                second: Neighbor {
                    train_idx: best.second.1,
                    distance: finalize(best.second.0),
                },
            });
        }
        Ok(out)
    }
}

/// Lowe's ratio test: keep (query, first) iff d1/d2 < r. A second
/// distance of exactly zero means both neighbors are duplicates of the
/// query; the match is unambiguous and kept.
pub fn ratio_filter(neighbors: &[TwoNearest], r: f32, desc_to_view: &[usize]) -> Vec<Match> {
    let mut out = Vec::new();
    for (qi, nn) in neighbors.iter().enumerate() {
        let keep = if nn.second.distance == 0.0 {
            true
        } else {
            nn.first.distance / nn.second.distance < r
        };
        if keep {
            out.push(Match {
                query_idx: qi,
                train_view: desc_to_view[nn.first.train_idx],
                train_idx: nn.first.train_idx,
                distance: nn.first.distance,
            });
        }
    }
    out
}

/// Good-match voting over model labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTally {
    /// Good-match count per label.
    pub counts: BTreeMap<String, usize>,
    /// Argmax label; ties break to the lexicographically smallest label;
    /// zero good matches yield [`UNKNOWN_LABEL`].
    pub winner: String,
    pub total_good: usize,
}

impl VoteTally {
    pub fn empty() -> Self {
        VoteTally {
            counts: BTreeMap::new(),
            winner: UNKNOWN_LABEL.to_string(),
            total_good: 0,
        }
    }
}

/// Count good matches per label (summed over each label's views) and pick
/// the winner.
pub fn vote(good_matches: &[Match], view_labels: &[String]) -> VoteTally {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for m in good_matches {
        *counts.entry(view_labels[m.train_view].clone()).or_insert(0) += 1;
    }
    let total_good = good_matches.len();
    // BTreeMap iterates labels in ascending order, so keeping a strict
    // maximum realizes the lexicographic tie rule.
    let mut winner = UNKNOWN_LABEL.to_string();
    let mut best = 0usize;
    for (label, &count) in &counts {
        if count > best {
            best = count;
            winner = label.clone();
        }
    }
    VoteTally {
        counts,
        winner,
        total_good,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn binary_set(rng: &mut Rng, n: usize, bits: usize) -> DescriptorSet {
        let mut data = vec![0u8; n * bits / 8];
        rng_fill(rng, &mut data);
        DescriptorSet {
            payload: DescriptorPayload::Binary { bits, data },
            keypoints: dummy_kps(n),
        }
    }

    fn float_set(rng: &mut Rng, n: usize, dims: usize) -> DescriptorSet {
        let data: Vec<f32> = (0..n * dims).map(|_| rng.next_f64() as f32).collect();
        DescriptorSet {
            payload: DescriptorPayload::Float { dims, data },
            keypoints: dummy_kps(n),
        }
    }

    fn dummy_kps(n: usize) -> Vec<crate::features::Keypoint> {
        (0..n)
            .map(|i| crate::features::Keypoint {
                x: i as f32,
                y: 0.0,
                scale: 1.0,
                angle: None,
                response: 0.0,
            })
            .collect()
    }

    fn rng_fill(rng: &mut Rng, buf: &mut [u8]) {
        for b in buf.iter_mut() {
            *b = (rng.next_u64() & 0xff) as u8;
        }
    }

    #[test]
    fn identical_descriptor_has_distance_zero() {
        let mut rng = Rng::seed_from(1);
        let train = binary_set(&mut rng, 10, 256);
        let query = DescriptorSet {
            payload: DescriptorPayload::Binary {
                bits: 256,
                data: train.binary(4).to_vec(),
            },
            keypoints: dummy_kps(1),
        };
        let idx = SearchIndex::build(
            &MatcherConfig::brute(Metric::Hamming),
            &train.payload,
            train.len(),
        )
        .unwrap();
        let nn = idx.knn2(&query).unwrap();
        assert_eq!(nn[0].first.train_idx, 4);
        assert_eq!(nn[0].first.distance, 0.0);
    }

    #[test]
    fn single_bit_flip_distance_one() {
        let mut rng = Rng::seed_from(2);
        let train = binary_set(&mut rng, 8, 256);
        let mut flipped = train.binary(3).to_vec();
        flipped[7] ^= 0b0001_0000;
        let query = DescriptorSet {
            payload: DescriptorPayload::Binary {
                bits: 256,
                data: flipped,
            },
            keypoints: dummy_kps(1),
        };
        let idx = SearchIndex::build(
            &MatcherConfig::brute(Metric::Hamming),
            &train.payload,
            train.len(),
        )
        .unwrap();
        let nn = idx.knn2(&query).unwrap();
        assert_eq!(nn[0].first.train_idx, 3);
        assert_eq!(nn[0].first.distance, 1.0);
    }

    fn assert_same_results(a: &[TwoNearest], b: &[TwoNearest]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.first.train_idx, y.first.train_idx);
            assert_eq!(x.first.distance, y.first.distance);
            assert_eq!(x.second.train_idx, y.second.train_idx);
            assert_eq!(x.second.distance, y.second.distance);
        }
    }

    #[test]
    fn kdtree_equals_brute_force_float() {
        let mut rng = Rng::seed_from(3);
        for round in 0..20 {
            let dims = [2, 8, 32][round % 3];
            let train = float_set(&mut rng, 100, dims);
            let query = float_set(&mut rng, 20, dims);
            let brute = SearchIndex::build(
                &MatcherConfig::brute(Metric::L2),
                &train.payload,
                train.len(),
            )
            .unwrap();
            let kd = SearchIndex::build(
                &MatcherConfig::kdtree(Metric::L2),
                &train.payload,
                train.len(),
            )
            .unwrap();
            assert_same_results(&brute.knn2(&query).unwrap(), &kd.knn2(&query).unwrap());
        }
    }

    #[test]
    fn kdtree_equals_brute_force_hamming() {
        let mut rng = Rng::seed_from(4);
        for _ in 0..20 {
            let train = binary_set(&mut rng, 80, 128);
            let query = binary_set(&mut rng, 15, 128);
            let brute = SearchIndex::build(
                &MatcherConfig::brute(Metric::Hamming),
                &train.payload,
                train.len(),
            )
            .unwrap();
            let kd = SearchIndex::build(
                &MatcherConfig::kdtree(Metric::Hamming),
                &train.payload,
                train.len(),
            )
            .unwrap();
            assert_same_results(&brute.knn2(&query).unwrap(), &kd.knn2(&query).unwrap());
        }
    }

    #[test]
    fn kdtree_handles_duplicates_like_brute() {
        // Heavy duplication stresses the tie rule.
        let dims = 4;
        let mut data = Vec::new();
        for i in 0..40 {
            let v = (i % 5) as f32;
            data.extend(std::iter::repeat_n(v, dims));
        }
        let train = DescriptorSet {
            payload: DescriptorPayload::Float { dims, data },
            keypoints: dummy_kps(40),
        };
        let query = DescriptorSet {
            payload: DescriptorPayload::Float {
                dims,
                data: vec![2.0; dims],
            },
            keypoints: dummy_kps(1),
        };
        let brute = SearchIndex::build(
            &MatcherConfig::brute(Metric::L2),
            &train.payload,
            train.len(),
        )
        .unwrap();
        let kd = SearchIndex::build(
            &MatcherConfig::kdtree(Metric::L2),
            &train.payload,
            train.len(),
        )
        .unwrap();
        let b = brute.knn2(&query).unwrap();
        let k = kd.knn2(&query).unwrap();
        assert_same_results(&b, &k);
        // Duplicates of the query: d2 == 0 and the two smallest indices win.
        assert_eq!(b[0].first.train_idx, 2);
        assert_eq!(b[0].second.train_idx, 7);
        assert_eq!(b[0].second.distance, 0.0);
    }

    #[test]
    fn incompatible_metric_rejected() {
        let mut rng = Rng::seed_from(5);
        let train = binary_set(&mut rng, 10, 128);
        assert!(matches!(
            SearchIndex::build(&MatcherConfig::brute(Metric::L2), &train.payload, 10),
            Err(Error::Incompatible(_))
        ));
    }

    #[test]
    fn tiny_train_set_rejected() {
        let mut rng = Rng::seed_from(6);
        let train = binary_set(&mut rng, 1, 128);
        let idx = SearchIndex::build(
            &MatcherConfig::brute(Metric::Hamming),
            &train.payload,
            train.len(),
        )
        .unwrap();
        let query = binary_set(&mut rng, 3, 128);
        assert!(idx.knn2(&query).is_err());
    }

    fn nn(d1: f32, d2: f32) -> TwoNearest {
        TwoNearest {
            first: Neighbor {
                train_idx: 0,
                distance: d1,
            },
            second: Neighbor {
                train_idx: 1,
                distance: d2,
            },
        }
    }

    #[test]
    fn ratio_filter_boundary_cases() {
        let views = vec![0usize, 0];
        // 1/2 = 0.5 < 0.8: kept
        assert_eq!(ratio_filter(&[nn(1.0, 2.0)], 0.8, &views).len(), 1);
        // 4/5 = 0.8 is not < 0.8: rejected
        assert_eq!(ratio_filter(&[nn(4.0, 5.0)], 0.8, &views).len(), 0);
        // d2 == 0: kept by convention
        assert_eq!(ratio_filter(&[nn(0.0, 0.0)], 0.8, &views).len(), 1);
    }

    #[test]
    fn vote_counts_and_ties() {
        let labels: Vec<String> = vec!["A".into(), "A".into(), "B".into()];
        let mk = |view: usize| Match {
            query_idx: 0,
            train_view: view,
            train_idx: 0,
            distance: 1.0,
        };
        // A gets 7 (views 0 and 1), B gets 3.
        let mut matches = Vec::new();
        matches.extend(std::iter::repeat_n(mk(0), 4));
        matches.extend(std::iter::repeat_n(mk(1), 3));
        matches.extend(std::iter::repeat_n(mk(2), 3));
        let tally = vote(&matches, &labels);
        assert_eq!(tally.winner, "A");
        assert_eq!(tally.total_good, 10);
        assert_eq!(tally.counts["A"], 7);

        // No matches: UNKNOWN.
        let empty = vote(&[], &labels);
        assert_eq!(empty.winner, UNKNOWN_LABEL);
        assert_eq!(empty.total_good, 0);

        // Tie: lexicographically smallest label wins.
        let tie: Vec<Match> = (0..5)
            .map(|i| mk(if i < 3 { 2 } else { 0 }))
            .chain(std::iter::once(mk(1)))
            .collect();
        // B: 3, A: 3
        let tally = vote(&tie, &labels);
        assert_eq!(tally.counts["A"], 3);
        assert_eq!(tally.counts["B"], 3);
        assert_eq!(tally.winner, "A");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn distances_symmetric_and_triangular(seed in any::<u64>()) {
            let mut rng = Rng::seed_from(seed);
            let bits = 128;
            let bin = binary_set(&mut rng, 3, bits);
            let (a, b, c) = (bin.binary(0), bin.binary(1), bin.binary(2));
            prop_assert_eq!(hamming(a, b), hamming(b, a));
            prop_assert!(hamming(a, c) <= hamming(a, b) + hamming(b, c));

            let fl = float_set(&mut rng, 3, 16);
            let (a, b, c) = (fl.float(0), fl.float(1), fl.float(2));
            prop_assert_eq!(l2(a, b), l2(b, a));
            prop_assert!(l2(a, c) <= l2(a, b) + l2(b, c) + 1e-6);
        }

        #[test]
        fn ratio_filter_monotone_in_r(seed in any::<u64>(), r1 in 0.05f32..0.95, r2 in 0.05f32..0.95) {
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            let mut rng = Rng::seed_from(seed);
            let pairs: Vec<TwoNearest> = (0..50)
                .map(|_| {
                    let d1 = rng.next_f64() as f32 * 10.0;
                    let d2 = d1 + rng.next_f64() as f32 * 10.0;
                    nn(d1, d2)
                })
                .collect();
            let views: Vec<usize> = vec![0; 2];
            let kept_lo: Vec<usize> =
                ratio_filter(&pairs, lo, &views).iter().map(|m| m.query_idx).collect();
            let kept_hi: Vec<usize> =
                ratio_filter(&pairs, hi, &views).iter().map(|m| m.query_idx).collect();
            for q in &kept_lo {
                prop_assert!(kept_hi.contains(q), "kept at r={lo} but not r={hi}");
            }
        }

        #[test]
        fn vote_permutation_invariant(seed in any::<u64>()) {
            let mut rng = Rng::seed_from(seed);
            let labels: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
            let matches: Vec<Match> = (0..30)
                .map(|_| Match {
                    query_idx: 0,
                    train_view: rng.below(3),
                    train_idx: 0,
                    distance: 1.0,
                })
                .collect();
            let base = vote(&matches, &labels);
            let perm = rng.permutation(matches.len());
            let shuffled: Vec<Match> = perm.iter().map(|&i| matches[i]).collect();
            prop_assert_eq!(base, vote(&shuffled, &labels));
        }

        #[test]
        fn kd_equals_brute_prop(seed in any::<u64>()) {
            let mut rng = Rng::seed_from(seed);
            let train = float_set(&mut rng, 60, 8);
            let query = float_set(&mut rng, 10, 8);
            let brute = SearchIndex::build(
                &MatcherConfig::brute(Metric::L2), &train.payload, train.len()).unwrap();
            let kd = SearchIndex::build(
                &MatcherConfig::kdtree(Metric::L2), &train.payload, train.len()).unwrap();
            let b = brute.knn2(&query).unwrap();
            let k = kd.knn2(&query).unwrap();
            for (x, y) in b.iter().zip(&k) {
                prop_assert_eq!(x.first.train_idx, y.first.train_idx);
                prop_assert_eq!(x.second.train_idx, y.second.train_idx);
            }
        }
    }
}
