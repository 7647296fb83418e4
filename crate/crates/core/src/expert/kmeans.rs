//! K-means over F1-matrix rows, silhouette-based K selection, and the
//! per-typology best-pipeline rule.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::eval::F1Matrix;
use crate::rng::Rng;

/// Restarts per clustering call; the best inertia wins.
const RESTARTS: u64 = 10;
/// Fixed internal stream for the K-selection sweep, so `choose_k` is a
/// pure function of the matrix.
const CHOOSE_K_SEED: u64 = 0xc0ff_ee00;

/// A clustering of instances by pipeline-performance profile.
#[derive(Clone, Debug, PartialEq)]
pub struct Typologies {
    pub k: usize,
    /// Instance label -> typology id (0-based, no gaps, none empty).
    pub assignment: BTreeMap<String, usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances of rows to their centroid.
    pub inertia: f64,
}

impl Typologies {
    /// Labels of each typology, ids ascending.
    pub fn members(&self) -> Vec<Vec<String>> {
        let mut groups = vec![Vec::new(); self.k];
        for (label, &t) in &self.assignment {
            groups[t].push(label.clone());
        }
        groups
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct LloydResult {
    assign: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    inertia: f64,
}

fn kmeans_pp_init(rows: &[&[f64]], k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut chosen: Vec<usize> = vec![rng.below(n)];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, rows[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let u = rng.next_f64() * total;
            let mut cum = 0.0;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                cum += w;
                if u < cum {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // All remaining mass is zero (duplicate rows): take the
            // smallest index not yet chosen.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, row) in rows.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(row, rows[next]));
        }
    }
    chosen.iter().map(|&i| rows[i].to_vec()).collect()
}

fn lloyd(rows: &[&[f64]], k: usize, rng: &mut Rng, max_iters: usize) -> LloydResult {
    let n = rows.len();
    let dims = rows[0].len();
    let mut centroids = kmeans_pp_init(rows, k, rng);
    let mut assign = vec![usize::MAX; n];
    let mut prev_inertia = f64::INFINITY;

    for _ in 0..max_iters.max(1) {
        // Assignment: nearest centroid, ties to the smaller cluster id.
        let mut new_assign = Vec::with_capacity(n);
        for row in rows {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = sq_dist(row, centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            new_assign.push(best);
        }

        // Repair empty clusters by stealing the point farthest from its
        // centroid (donors must keep at least one member).
        let mut sizes = vec![0usize; k];
        for &a in &new_assign {
            sizes[a] += 1;
        }
        for empty in 0..k {
            if sizes[empty] > 0 {
                continue;
            }
            let mut donor: Option<(f64, usize)> = None;
            for (i, &a) in new_assign.iter().enumerate() {
                if sizes[a] < 2 {
                    continue;
                }
                let d = sq_dist(rows[i], &centroids[a]);
                let better = match donor {
                    None => true,
                    Some((bd, bi)) => d > bd || (d == bd && i < bi),
                };
                if better {
                    donor = Some((d, i));
                }
            }
            if let Some((_, i)) = donor {
                sizes[new_assign[i]] -= 1;
                new_assign[i] = empty;
                sizes[empty] += 1;
            }
        }

        // Update step: centroids move to member means.
        let mut sums = vec![vec![0.0f64; dims]; k];
        let mut counts = vec![0usize; k];
        for (i, &a) in new_assign.iter().enumerate() {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(rows[i]) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for s in sums[c].iter_mut() {
                    *s /= counts[c] as f64;
                }
                centroids[c] = sums[c].clone();
            }
        }

        let inertia: f64 = rows
            .iter()
            .zip(&new_assign)
            .map(|(row, &a)| sq_dist(row, &centroids[a]))
            .sum();
        // Lloyd iterations never increase the objective; stealing a point
        // into an empty cluster zeroes its contribution after the update,
        // so the repair preserves the guarantee.
        assert!(
            inertia <= prev_inertia + 1e-9,
            "k-means inertia increased: {prev_inertia} -> {inertia}"
        );
        prev_inertia = inertia;

        let converged = new_assign == assign;
        assign = new_assign;
        if converged {
            break;
        }
    }

    LloydResult {
        assign,
        centroids,
        inertia: prev_inertia,
    }
}

/// Cluster F1-matrix rows into K typologies.
///
/// k-means++ initialization from the seed, Lloyd iterations to
/// convergence (or `max_iters`), best of 10 restarts by inertia. Cluster
/// ids are renumbered by each cluster's smallest member row, so equal
/// seeds give identical, stable numbering.
pub fn kmeans(m: &F1Matrix, k: usize, seed: u64, max_iters: usize) -> Result<Typologies> {
    let n = m.labels.len();
    if k == 0 {
        return Err(Error::InvalidParam("K must be >= 1".into()));
    }
    if k > n {
        return Err(Error::InvalidParam(format!(
            "K = {k} exceeds the {n} instances available"
        )));
    }
    let rows: Vec<&[f64]> = (0..n).map(|i| m.row(i)).collect();
    if rows.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidParam(
            "F1 matrix contains non-finite entries".into(),
        ));
    }

    let mut best: Option<LloydResult> = None;
    for restart in 0..RESTARTS {
        let mut rng = Rng::derive(seed, restart);
        let result = lloyd(&rows, k, &mut rng, max_iters);
        let replace = match &best {
            None => true,
            Some(b) => result.inertia < b.inertia,
        };
        if replace {
            best = Some(result);
        }
    }
    let best = best.expect("at least one restart ran");

    // Drop empty clusters (possible only with duplicate rows and large K)
    // and renumber by smallest member row for stable, human-friendly ids.
    let mut first_member: Vec<(usize, usize)> = Vec::new(); // (row, cluster)
    for c in 0..k {
        if let Some(row) = best.assign.iter().position(|&a| a == c) {
            first_member.push((row, c));
        }
    }
    first_member.sort_unstable();
    let renumber: BTreeMap<usize, usize> = first_member
        .iter()
        .enumerate()
        .map(|(new, &(_, old))| (old, new))
        .collect();

    let assignment: BTreeMap<String, usize> = m
        .labels
        .iter()
        .zip(&best.assign)
        .map(|(label, &a)| (label.clone(), renumber[&a]))
        .collect();
    let mut centroids = vec![Vec::new(); renumber.len()];
    for (&old, &new) in &renumber {
        centroids[new] = best.centroids[old].clone();
    }
    Ok(Typologies {
        k: renumber.len(),
        assignment,
        centroids,
        inertia: best.inertia,
    })
}

/// Mean silhouette score of a clustering over the matrix rows.
pub(crate) fn mean_silhouette(rows: &[&[f64]], assign: &[usize], k: usize) -> f64 {
    let n = rows.len();
    let mut sizes = vec![0usize; k];
    for &a in assign {
        sizes[a] += 1;
    }
    let mut total = 0.0f64;
    for i in 0..n {
        let ci = assign[i];
        if sizes[ci] <= 1 {
            // Singleton convention: silhouette 0.
            continue;
        }
        let mut intra = 0.0f64;
        let mut inter = vec![0.0f64; k];
        let mut inter_n = vec![0usize; k];
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = sq_dist(rows[i], rows[j]).sqrt();
            if assign[j] == ci {
                intra += d;
            } else {
                inter[assign[j]] += d;
                inter_n[assign[j]] += 1;
            }
        }
        let a = intra / (sizes[ci] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != ci && inter_n[c] > 0)
            .map(|c| inter[c] / inter_n[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if !b.is_finite() {
            continue;
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

/// Silhouette score for each candidate K in [2, |Y|-1].
pub fn silhouette_sweep(m: &F1Matrix) -> Vec<(usize, f64)> {
    let n = m.labels.len();
    if n < 3 {
        return Vec::new();
    }
    let rows: Vec<&[f64]> = (0..n).map(|i| m.row(i)).collect();
    let mut out = Vec::new();
    for k in 2..n {
        let Ok(t) = kmeans(m, k, CHOOSE_K_SEED, 100) else {
            continue;
        };
        let assign: Vec<usize> = m.labels.iter().map(|l| t.assignment[l]).collect();
        out.push((k, mean_silhouette(&rows, &assign, t.k)));
    }
    out
}

/// Pick K by maximum mean silhouette over [2, |Y|-1]; ties go to the
/// smaller K. Fewer than 3 instances leave no valid K below |Y|, so 1.
pub fn choose_k(m: &F1Matrix) -> usize {
    let sweep = silhouette_sweep(m);
    if sweep.is_empty() {
        return 1;
    }
    let mut best_k = sweep[0].0;
    let mut best_score = sweep[0].1;
    for &(k, score) in &sweep[1..] {
        if score > best_score {
            best_score = score;
            best_k = k;
        }
    }
    best_k
}

/// Best pipeline per typology: argmax over pipelines of the mean F1 of
/// the typology's instances; ties to the earlier pipeline in registry
/// order.
pub fn best_per_typology(m: &F1Matrix, t: &Typologies) -> BTreeMap<usize, String> {
    let mut out = BTreeMap::new();
    for (tid, members) in t.members().iter().enumerate() {
        let mut best_j = 0usize;
        let mut best_mean = f64::NEG_INFINITY;
        for j in 0..m.pipelines.len() {
            let sum: f64 = members
                .iter()
                .map(|label| {
                    let row = m
                        .labels
                        .iter()
                        .position(|l| l == label)
                        .expect("member label in matrix");
                    m.get(row, j)
                })
                .sum();
            let mean = sum / members.len() as f64;
            if mean > best_mean {
                best_mean = mean;
                best_j = j;
            }
        }
        out.insert(tid, m.pipelines[best_j].clone());
    }
    out
}
