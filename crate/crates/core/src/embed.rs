//! Adjacency spectral embedding and dimension selection by held-out AUC.

use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::top_eigen_sym;
use crate::rng::{rng_from_seed, sub_seed2};

/// Singular values below this are treated as numerically zero.
pub const RANK_TOL: f64 = 1e-12;
pub const DEFAULT_PLATEAU_TOL: f64 = 0.005;
const MAX_FOLD_RETRIES: usize = 10;

/// `Û = QΣ^{1/2}` from the top-d singular triplets of the adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub uhat: DMatrix<f64>,
    /// Nonincreasing, strictly positive.
    pub singular_values: Vec<f64>,
    /// Sign of the eigenvalue behind each singular value (`+1` or `-1`).
    /// `Û·diag(signs)·Ûᵀ` is the rank-d truncation of the adjacency matrix.
    pub signs: Vec<f64>,
}

impl Embedding {
    pub fn n(&self) -> usize {
        self.uhat.nrows()
    }

    pub fn d(&self) -> usize {
        self.uhat.ncols()
    }

    /// `ÛÛᵀ`.
    pub fn gram(&self) -> DMatrix<f64> {
        &self.uhat * self.uhat.transpose()
    }

    /// CSV with one row per node, 17 significant digits, no header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for i in 0..self.n() {
            let row: Vec<String> = self.uhat.row(i).iter().map(|x| format!("{x:.16e}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Adjacency spectral embedding of `graph` into `d` dimensions.
///
/// The sign of every singular vector is fixed so that its largest-magnitude
/// entry is positive.
pub fn ase(graph: &Graph, d: usize) -> Result<Embedding> {
    ase_matrix(graph.weights(), d)
}

/// [`ase`] for an arbitrary symmetric matrix, e.g. an edge-probability
/// matrix with its diagonal.
pub fn ase_matrix(m: &DMatrix<f64>, d: usize) -> Result<Embedding> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Dimension(format!("expected a square matrix, got {}x{}", n, m.ncols())));
    }
    if d == 0 || d > n {
        return Err(Error::Config(format!("embedding dimension must satisfy 1 <= d <= n, got d={d}, n={n}")));
    }
    let pairs = top_eigen_sym(m, d);
    let mut uhat = pairs.vectors;
    let mut singular_values = Vec::with_capacity(d);
    let mut signs = Vec::with_capacity(d);
    for (k, &lambda) in pairs.values.iter().enumerate() {
        let sigma = lambda.abs();
        if sigma < RANK_TOL {
            return Err(Error::RankDeficient { index: k + 1, value: sigma });
        }
        let mut col = uhat.column_mut(k);
        let pivot = col
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |acc, (i, &v)| if v.abs() > acc.1.abs() { (i, v) } else { acc })
            .0;
        let flip = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        col *= flip * sigma.sqrt();
        singular_values.push(sigma);
        signs.push(lambda.signum());
    }
    Ok(Embedding { uhat, singular_values, signs })
}

/// Area under the ROC curve via the Mann-Whitney statistic; ties count half.
/// Returns `None` when one class is empty.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Average ranks over tied blocks.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if labels[k] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (pos * (pos + 1)) as f64 / 2.0;
    Some(u / (pos as f64 * neg as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AucCurve {
    pub dims: Vec<usize>,
    pub auc: Vec<f64>,
    pub chosen_d: usize,
}

impl AucCurve {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["d", "auc"])?;
        for (d, a) in self.dims.iter().zip(&self.auc) {
            wtr.write_record([d.to_string(), format!("{a:.16e}")])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AucOptions {
    pub holdout_frac: f64,
    pub folds: usize,
    pub plateau_tol: f64,
    pub seed: u64,
}

impl Default for AucOptions {
    fn default() -> Self {
        Self { holdout_frac: 0.1, folds: 5, plateau_tol: DEFAULT_PLATEAU_TOL, seed: 0 }
    }
}

/// Held-out pairs for one fold: hidden edges and an equal number of non-edges.
fn hold_out(graph: &Graph, frac: f64, seed: u64) -> Option<(Vec<(usize, usize)>, Vec<bool>)> {
    let n = graph.n();
    let mut edges = Vec::new();
    let mut non_edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if graph.weight(i, j) > 0.0 {
                edges.push((i, j));
            } else {
                non_edges.push((i, j));
            }
        }
    }
    let m = ((frac * edges.len() as f64).round() as usize).max(1).min(non_edges.len());
    if edges.is_empty() || m == 0 || m > edges.len() {
        return None;
    }
    let mut rng = rng_from_seed(seed);
    let mut pairs = Vec::with_capacity(2 * m);
    let mut labels = Vec::with_capacity(2 * m);
    let mut picked = sample(&mut rng, edges.len(), m).into_vec();
    picked.sort_unstable();
    for k in picked {
        pairs.push(edges[k]);
        labels.push(true);
    }
    let mut picked = sample(&mut rng, non_edges.len(), m).into_vec();
    picked.sort_unstable();
    for k in picked {
        pairs.push(non_edges[k]);
        labels.push(false);
    }
    Some((pairs, labels))
}

fn fold_aucs(graph: &Graph, dims: &[usize], opts: &AucOptions, fold: usize) -> Result<Vec<f64>> {
    let max_d = *dims.iter().max().expect("nonempty");
    for attempt in 0..MAX_FOLD_RETRIES {
        let seed = sub_seed2(opts.seed, fold as u64, attempt as u64);
        let Some((pairs, labels)) = hold_out(graph, opts.holdout_frac, seed) else {
            continue;
        };
        let mut masked = graph.weights().clone();
        for &(i, j) in &pairs {
            masked[(i, j)] = 0.0;
            masked[(j, i)] = 0.0;
        }
        let pairs_full = top_eigen_sym(&masked, max_d);
        let mut out = Vec::with_capacity(dims.len());
        for &d in dims {
            let scores: Vec<f64> = pairs
                .iter()
                .map(|&(i, j)| {
                    (0..d)
                        .map(|k| {
                            pairs_full.values[k].abs()
                                * pairs_full.vectors[(i, k)]
                                * pairs_full.vectors[(j, k)]
                        })
                        .sum()
                })
                .collect();
            match auc(&scores, &labels) {
                Some(a) => out.push(a),
                None => break,
            }
        }
        if out.len() == dims.len() {
            return Ok(out);
        }
    }
    Err(Error::RetriesExhausted { what: format!("AUC fold {fold} (degenerate held-out labels)"), attempts: MAX_FOLD_RETRIES })
}

/// Mean held-out AUC per candidate dimension and the smallest dimension whose
/// AUC is within `plateau_tol` of the best.
pub fn select_dim_auc(graph: &Graph, d_candidates: &[usize], opts: &AucOptions) -> Result<AucCurve> {
    if d_candidates.is_empty() {
        return Err(Error::Config("no candidate dimensions".into()));
    }
    if !(opts.holdout_frac > 0.0 && opts.holdout_frac <= 0.5) {
        return Err(Error::Config(format!("holdout fraction {} outside (0, 0.5]", opts.holdout_frac)));
    }
    if opts.folds == 0 {
        return Err(Error::Config("need at least one fold".into()));
    }
    let n = graph.n();
    if let Some(&bad) = d_candidates.iter().find(|&&d| d == 0 || d > n) {
        return Err(Error::Config(format!("candidate dimension {bad} outside 1..={n}")));
    }
    let per_fold: Vec<Vec<f64>> = (0..opts.folds)
        .into_par_iter()
        .map(|f| fold_aucs(graph, d_candidates, opts, f))
        .collect::<Result<_>>()?;
    let auc: Vec<f64> = (0..d_candidates.len())
        .map(|k| per_fold.iter().map(|f| f[k]).sum::<f64>() / opts.folds as f64)
        .collect();
    let best = auc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let chosen_d = d_candidates
        .iter()
        .zip(&auc)
        .filter(|(_, &a)| a >= best - opts.plateau_tol)
        .map(|(&d, _)| d)
        .min()
        .expect("the maximum always qualifies");
    Ok(AucCurve { dims: d_candidates.to_vec(), auc, chosen_d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgen::{gen_rdpg, LatentFactors};
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, Uniform};

    fn noiseless_graph(u: &DMatrix<f64>) -> Graph {
        let mut p = u * u.transpose();
        p.fill_diagonal(0.0);
        Graph::new(p).unwrap()
    }

    #[test]
    fn auc_edge_cases() {
        assert_eq!(auc(&[0.1, 0.9], &[false, true]), Some(1.0));
        assert_eq!(auc(&[0.9, 0.1], &[false, true]), Some(0.0));
        assert_eq!(auc(&[0.5, 0.5], &[false, true]), Some(0.5));
        assert_eq!(auc(&[0.5, 0.7], &[true, true]), None);
        // Brute-force pair count on a small tied example.
        let s = [0.1, 0.4, 0.4, 0.8, 0.3, 0.4];
        let l = [false, true, false, true, false, true];
        let mut wins = 0.0;
        let mut total = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                if l[i] && !l[j] {
                    total += 1.0;
                    wins += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        assert!((auc(&s, &l).unwrap() - wins / total).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_dimension_and_rank_deficiency() {
        let g = Graph::empty(5);
        assert!(matches!(ase(&g, 0), Err(Error::Config(_))));
        assert!(matches!(ase(&g, 6), Err(Error::Config(_))));
        assert!(matches!(ase(&g, 1), Err(Error::RankDeficient { index: 1, .. })));
    }

    #[test]
    fn full_decomposition_reproduces_adjacency() {
        let mut rng = rng_from_seed(5);
        let dist = Uniform::new(0.0, 1.0).unwrap();
        let n = 12;
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let w = dist.sample(&mut rng);
                a[(i, j)] = w;
                a[(j, i)] = w;
            }
        }
        let g = Graph::new(a.clone()).unwrap();
        let emb = ase(&g, n).unwrap();
        let signed = &emb.uhat * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(emb.signs.clone())) * emb.uhat.transpose();
        assert!((signed - &a).norm() < 1e-8);
        // Unsigned product is the matrix absolute value: its square is A².
        let g2 = emb.gram();
        assert!((&g2 * &g2 - &a * &a).norm() < 1e-8);
    }

    #[test]
    fn orthonormal_columns_and_sign_convention() {
        let u = DMatrix::from_fn(60, 2, |i, j| 0.2 + 0.5 * (((i * 7 + j * 3) % 11) as f64) / 11.0);
        let f = LatentFactors::new(u * 0.9, 1.0).unwrap();
        let g = gen_rdpg(&f, 1).unwrap();
        let emb = ase(&g, 2).unwrap();
        let q = DMatrix::from_fn(60, 2, |i, k| emb.uhat[(i, k)] / emb.singular_values[k].sqrt());
        assert!((q.transpose() * &q - DMatrix::identity(2, 2)).norm() < 1e-8);
        assert!(emb.singular_values[0] >= emb.singular_values[1]);
        for k in 0..2 {
            let col = emb.uhat.column(k);
            let max = col.iter().copied().fold(0.0_f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(max > 0.0);
        }
    }

    #[test]
    fn scale_consistency() {
        let u = DMatrix::from_fn(40, 2, |i, j| 0.1 + 0.4 * (((i * 5 + j) % 7) as f64) / 7.0);
        let g = gen_rdpg(&LatentFactors::new(u, 1.0).unwrap(), 3).unwrap();
        let e1 = ase(&g, 2).unwrap();
        let e2 = ase(&g.scaled(4.0).unwrap(), 2).unwrap();
        assert!((&e1.uhat * 2.0 - &e2.uhat).norm() < 1e-9);
        assert!((e1.gram() - e2.gram() / 4.0).norm() < 1e-9);
    }

    #[test]
    fn rotation_invariance_of_gram() {
        let u = DMatrix::from_fn(30, 2, |i, j| 0.1 + 0.5 * (((i * 3 + j * 5) % 9) as f64) / 9.0);
        let g = noiseless_graph(&u);
        let emb = ase(&g, 2).unwrap();
        let (s, c) = 1.1_f64.sin_cos();
        let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let rotated = &emb.uhat * r;
        assert!((rotated.clone() * rotated.transpose() - emb.gram()).norm() < 1e-8);
    }

    #[test]
    fn embedding_csv_has_17_significant_digits() {
        let emb = Embedding {
            uhat: DMatrix::from_row_slice(1, 2, &[0.1, -2.0 / 3.0]),
            singular_values: vec![1.0, 1.0],
            signs: vec![1.0, 1.0],
        };
        let mut buf = Vec::new();
        emb.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let parsed: Vec<f64> = text.trim().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(parsed, vec![0.1, -2.0 / 3.0]);
    }

    #[test]
    fn select_dim_validates_inputs() {
        let g = Graph::empty(10);
        let opts = AucOptions::default();
        assert!(select_dim_auc(&g, &[], &opts).is_err());
        assert!(select_dim_auc(&g, &[1], &AucOptions { holdout_frac: 0.6, ..opts }).is_err());
        assert!(matches!(select_dim_auc(&g, &[1], &opts), Err(Error::RetriesExhausted { .. })));
    }
}
