//! Seeded k-means with k-means++ initialisation and multiple restarts.

use nalgebra::DMatrix;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, sub_seed2};

pub const DEFAULT_RESTARTS: usize = 20;
const MAX_EMPTY_RETRIES: usize = 10;
const MAX_LLOYD_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub labels: Vec<usize>,
    /// K×d cluster centers.
    pub centers: DMatrix<f64>,
    /// Within-cluster sum of squares.
    pub sse: f64,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centers.nrows()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k()];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }
}

fn sq_dist(data: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    (0..data.ncols()).map(|j| (data[(i, j)] - centers[(c, j)]).powi(2)).sum()
}

fn plus_plus_init(data: &DMatrix<f64>, k: usize, seed: u64) -> DMatrix<f64> {
    let n = data.nrows();
    let mut rng = rng_from_seed(seed);
    let mut centers = DMatrix::zeros(k, data.ncols());
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from(&data.row(first));
    let mut best: Vec<f64> = (0..n).map(|i| sq_dist(data, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in best.iter().enumerate() {
                acc += w;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from(&data.row(pick));
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(sq_dist(data, i, &centers, c));
        }
    }
    centers
}

/// One Lloyd run. Returns `None` if a cluster empties.
fn lloyd(data: &DMatrix<f64>, k: usize, seed: u64) -> Option<Clustering> {
    let n = data.nrows();
    let d = data.ncols();
    let mut centers = plus_plus_init(data, k, seed);
    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let dist = sq_dist(data, i, &centers, c);
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        let mut sums = DMatrix::<f64>::zeros(k, d);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for j in 0..d {
                sums[(labels[i], j)] += data[(i, j)];
            }
        }
        if counts.contains(&0) {
            return None;
        }
        for c in 0..k {
            for j in 0..d {
                centers[(c, j)] = sums[(c, j)] / counts[c] as f64;
            }
        }
        if !changed {
            break;
        }
    }
    let sse = (0..n).map(|i| sq_dist(data, i, &centers, labels[i])).sum();
    Some(Clustering { labels, centers, sse })
}

/// Best-of-`restarts` k-means on the rows of `data`. Ties in SSE go to the
/// lowest restart index.
pub fn kmeans(data: &DMatrix<f64>, k: usize, restarts: usize, seed: u64) -> Result<Clustering> {
    let n = data.nrows();
    if k == 0 || k > n {
        return Err(Error::Config(format!("k-means needs 1 <= K <= n, got K={k}, n={n}")));
    }
    let mut best: Option<Clustering> = None;
    for r in 0..restarts.max(1) {
        let mut run = None;
        for attempt in 0..MAX_EMPTY_RETRIES {
            if let Some(c) = lloyd(data, k, sub_seed2(seed, r as u64, attempt as u64)) {
                run = Some(c);
                break;
            }
        }
        let run = run.ok_or_else(|| Error::RetriesExhausted {
            what: format!("k-means restart {r} (empty cluster)"),
            attempts: MAX_EMPTY_RETRIES,
        })?;
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Fraction of labels that agree after the best relabelling of `found`.
/// Brute force over permutations, so only for small K.
pub fn label_accuracy(truth: &[usize], found: &[usize], k: usize) -> f64 {
    assert!(k <= 8, "label_accuracy enumerates permutations");
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0usize;
    permute(&mut perm, 0, &mut |p| {
        let hits = truth.iter().zip(found).filter(|(&t, &f)| p[f] == t).count();
        best = best.max(hits);
    });
    best as f64 / truth.len() as f64
}

fn permute(p: &mut Vec<usize>, start: usize, visit: &mut dyn FnMut(&[usize])) {
    if start == p.len() {
        visit(p);
        return;
    }
    for i in start..p.len() {
        p.swap(start, i);
        permute(p, start + 1, visit);
        p.swap(start, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> (DMatrix<f64>, Vec<usize>) {
        let centers = [[0.0, 0.0], [5.0, 5.0], [0.0, 6.0]];
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        let mut rng = rng_from_seed(4);
        for (c, ctr) in centers.iter().enumerate() {
            for _ in 0..30 {
                rows.push(ctr[0] + rng.random::<f64>() - 0.5);
                rows.push(ctr[1] + rng.random::<f64>() - 0.5);
                truth.push(c);
            }
        }
        (DMatrix::from_row_slice(90, 2, &rows), truth)
    }

    #[test]
    fn separates_well_spaced_blobs() {
        let (data, truth) = blobs();
        let c = kmeans(&data, 3, DEFAULT_RESTARTS, 1).unwrap();
        assert_eq!(label_accuracy(&truth, &c.labels, 3), 1.0);
        assert_eq!(c.sizes().iter().sum::<usize>(), 90);
    }

    #[test]
    fn deterministic_given_seed() {
        let (data, _) = blobs();
        assert_eq!(kmeans(&data, 3, 5, 9).unwrap(), kmeans(&data, 3, 5, 9).unwrap());
    }

    #[test]
    fn single_cluster_center_is_mean() {
        let (data, _) = blobs();
        let c = kmeans(&data, 1, 3, 0).unwrap();
        let mean = data.row_mean();
        assert!((c.centers.row(0) - mean).norm() < 1e-12);
    }

    #[test]
    fn identical_points_cannot_fill_two_clusters() {
        let data = DMatrix::from_element(10, 2, 1.0);
        assert!(matches!(kmeans(&data, 2, 2, 0), Err(Error::RetriesExhausted { .. })));
    }

    #[test]
    fn rejects_bad_k() {
        let data = DMatrix::from_element(3, 1, 1.0);
        assert!(kmeans(&data, 0, 1, 0).is_err());
        assert!(kmeans(&data, 4, 1, 0).is_err());
    }
}
