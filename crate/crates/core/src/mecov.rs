//! Per-node covariance of the spectral-embedding error and the correction
//! matrix Ω used by the bias-corrected estimator.
//!
//! For latent positions `U` with second moment `Δ_F = E[U_1U_1ᵀ]`, the
//! embedding error of a node at `x` satisfies `Cov(Û_i − U_iR) ≈ Σ(x)/n` with
//!
//! ```text
//! Σ(x) = Δ_F⁻¹ · E[(xᵀU_1)(1 − xᵀU_1) U_1U_1ᵀ] · Δ_F⁻¹
//! ```
//!
//! Both estimators below return `Σ̂/n`, i.e. covariances on the scale of a
//! single embedded row, so that `Σ_i Δ̂_i` is directly comparable with the
//! Gram matrix `ÛᵀÛ`. Expectations are replaced by averages over nodes
//! (plug-in) or over cluster centers weighted by cluster proportions.
//! Dot products are clamped to `[0, 1]` before entering a Bernoulli variance.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::Embedding;
use crate::error::{Error, Result};
use crate::kmeans::{kmeans, Clustering, DEFAULT_RESTARTS};
use crate::linalg::{condition_number_sym, symmetrize};

pub const MAX_SECOND_MOMENT_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovVariant {
    RdpgPlugin,
    SbmCluster,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeCovariances {
    pub per_node: Vec<DMatrix<f64>>,
    pub variant: CovVariant,
    pub cluster_assignments: Option<Vec<usize>>,
}

impl NodeCovariances {
    pub fn n(&self) -> usize {
        self.per_node.len()
    }

    pub fn d(&self) -> usize {
        self.per_node.first().map_or(0, |m| m.nrows())
    }

    /// Long-format CSV: `node,row,col,value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["node", "row", "col", "value"])?;
        for (i, m) in self.per_node.iter().enumerate() {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    wtr.write_record([i.to_string(), r.to_string(), c.to_string(), format!("{:.16e}", m[(r, c)])])?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

fn bernoulli_weight(dot: f64) -> f64 {
    let p = dot.clamp(0.0, 1.0);
    p * (1.0 - p)
}

fn inverse_second_moment(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let condition = condition_number_sym(m);
    if !(condition < MAX_SECOND_MOMENT_CONDITION) {
        return Err(Error::SingularSecondMoment { condition });
    }
    m.clone()
        .try_inverse()
        .map(|inv| symmetrize(&inv))
        .ok_or(Error::SingularSecondMoment { condition })
}

/// Plug-in covariance from the embedded rows themselves.
pub fn delta_rdpg(emb: &Embedding) -> Result<NodeCovariances> {
    let u = &emb.uhat;
    let n = u.nrows();
    let d = u.ncols();
    let second = (u.transpose() * u) / n as f64;
    let inv = inverse_second_moment(&second)?;
    let rows: Vec<DMatrix<f64>> = (0..n).map(|j| u.row(j).transpose() * u.row(j)).collect();
    let per_node = (0..n)
        .into_par_iter()
        .map(|i| {
            let ui = u.row(i);
            let mut inner = DMatrix::zeros(d, d);
            for (j, outer) in rows.iter().enumerate() {
                let w = bernoulli_weight(ui.dot(&u.row(j)));
                if w != 0.0 {
                    inner += outer * w;
                }
            }
            inner /= n as f64;
            symmetrize(&(&inv * inner * &inv)) / n as f64
        })
        .collect();
    Ok(NodeCovariances { per_node, variant: CovVariant::RdpgPlugin, cluster_assignments: None })
}

/// `Σ(B_q)` for every block `q` of a block model with centers `B` (K×d)
/// and class proportions `π`.
pub fn block_sigma(centers: &DMatrix<f64>, probs: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    let k = centers.nrows();
    let d = centers.ncols();
    assert_eq!(k, probs.len());
    let outers: Vec<DMatrix<f64>> = (0..k).map(|c| centers.row(c).transpose() * centers.row(c)).collect();
    let mut second = DMatrix::zeros(d, d);
    for (o, &p) in outers.iter().zip(probs) {
        second += o * p;
    }
    let inv = inverse_second_moment(&second)?;
    Ok((0..k)
        .map(|q| {
            let bq = centers.row(q);
            let mut inner = DMatrix::zeros(d, d);
            for c in 0..k {
                inner += &outers[c] * (probs[c] * bernoulli_weight(bq.dot(&centers.row(c))));
            }
            symmetrize(&(&inv * inner * &inv))
        })
        .collect())
}

/// Cluster-based covariance: k-means on the embedded rows, then the block
/// formula evaluated at the cluster centers and proportions. Every node in
/// cluster `q` receives `Σ̂(B̂_q)/n`.
pub fn delta_sbm(emb: &Embedding, k: usize, seed: u64) -> Result<NodeCovariances> {
    let n = emb.n();
    if k == 0 || n < k {
        return Err(Error::Config(format!("cluster covariance needs 1 <= K <= n, got K={k}, n={n}")));
    }
    if k < emb.d() {
        return Err(Error::Config(format!(
            "cluster covariance needs at least d={} clusters to span the embedding, got K={k}",
            emb.d()
        )));
    }
    let Clustering { labels, centers, .. } = kmeans(&emb.uhat, k, DEFAULT_RESTARTS, seed)?;
    let mut probs = vec![0.0; k];
    for &l in &labels {
        probs[l] += 1.0 / n as f64;
    }
    let sigmas = block_sigma(&centers, &probs)?;
    let per_node = labels.iter().map(|&l| &sigmas[l] / n as f64).collect();
    Ok(NodeCovariances { per_node, variant: CovVariant::SbmCluster, cluster_assignments: Some(labels) })
}

/// Block-diagonal correction matrix with `Σ_i Δ̂_i` in the leading d×d block
/// (the latent columns come first in every design) and zeros elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaMatrix {
    pub matrix: DMatrix<f64>,
    pub d: usize,
    pub q: usize,
}

impl OmegaMatrix {
    pub fn zeros(d: usize, q: usize) -> Self {
        Self { matrix: DMatrix::zeros(d + q, d + q), d, q }
    }

    pub fn latent_block(&self) -> DMatrix<f64> {
        self.matrix.view((0, 0), (self.d, self.d)).into_owned()
    }

    pub fn dim(&self) -> usize {
        self.d + self.q
    }
}

pub fn assemble_omega(cov: &NodeCovariances, q_nonlatent: usize) -> OmegaMatrix {
    let rows: Vec<usize> = (0..cov.n()).collect();
    assemble_omega_rows(cov, &rows, q_nonlatent)
}

/// As [`assemble_omega`], summing only over the nodes that enter the regression.
pub fn assemble_omega_rows(cov: &NodeCovariances, rows: &[usize], q_nonlatent: usize) -> OmegaMatrix {
    let d = cov.d();
    let mut om = OmegaMatrix::zeros(d, q_nonlatent);
    for &i in rows {
        let mut block = om.matrix.view_mut((0, 0), (d, d));
        block += &cov.per_node[i];
    }
    om.matrix = symmetrize(&om.matrix);
    om
}
