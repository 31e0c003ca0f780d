//! Undirected weighted graphs stored as dense symmetric matrices.
//!
//! Two text formats are supported, both lossless for `f64` weights:
//! an edge list (`src,dst,weight`, each undirected edge once with `src < dst`)
//! and a dense matrix (one CSV row per node, no header).

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric, nonnegative, hollow adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    weights: DMatrix<f64>,
}

impl Graph {
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        if weights.nrows() != weights.ncols() {
            return Err(Error::Dimension(format!(
                "adjacency must be square, got {}x{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        let n = weights.nrows();
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::Config(format!("nonzero diagonal at node {i}")));
            }
            for j in (i + 1)..n {
                let w = weights[(i, j)];
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(Error::Config(format!("invalid weight {w} at ({i}, {j})")));
                }
                if w != weights[(j, i)] {
                    return Err(Error::Config(format!("asymmetric weights at ({i}, {j})")));
                }
            }
        }
        Ok(Self { weights })
    }

    /// Build from a matrix already known to satisfy the invariants.
    pub(crate) fn from_trusted(weights: DMatrix<f64>) -> Self {
        debug_assert!(Self::new(weights.clone()).is_ok());
        Self { weights }
    }

    pub fn empty(n: usize) -> Self {
        Self { weights: DMatrix::zeros(n, n) }
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    /// Weighted degree of every node.
    pub fn degrees(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.weights.row(i).sum()).collect()
    }

    pub fn edge_count(&self) -> usize {
        let n = self.n();
        (0..n)
            .map(|i| ((i + 1)..n).filter(|&j| self.weights[(i, j)] > 0.0).count())
            .sum()
    }

    /// Fraction of node pairs joined by a positive weight.
    pub fn density(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return 0.0;
        }
        self.edge_count() as f64 / (n * (n - 1) / 2) as f64
    }

    pub fn binarized(&self) -> Self {
        Self { weights: self.weights.map(|w| if w > 0.0 { 1.0 } else { 0.0 }) }
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.weights * c)
    }

    /// Row-normalised neighbour average `D⁻¹A·y`. Isolated nodes get 0.
    pub fn neighbor_mean(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.n());
        let yv = DVector::from_column_slice(y);
        let ay = &self.weights * yv;
        self.degrees()
            .iter()
            .zip(ay.iter())
            .map(|(&d, &s)| if d > 0.0 { s / d } else { 0.0 })
            .collect()
    }

    /// Positive-weight pairs with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let w = self.weights[(i, j)];
                if w > 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn write_edge_list<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["src", "dst", "weight"])?;
        for (i, j, x) in self.edges() {
            wtr.write_record([i.to_string(), j.to_string(), x.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Read an edge list; `n` fixes the node count since isolated nodes
    /// do not appear in the file.
    pub fn read_edge_list<R: Read>(r: R, n: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut m = DMatrix::zeros(n, n);
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse_err = |what: &str| Error::Row { row: row + 1, message: format!("bad {what}") };
            let i: usize = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| parse_err("src"))?;
            let j: usize = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| parse_err("dst"))?;
            let x: f64 = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| parse_err("weight"))?;
            if i >= n || j >= n || i == j {
                return Err(Error::Row { row: row + 1, message: format!("invalid edge ({i}, {j})") });
            }
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
        Self::new(m)
    }

    pub fn write_dense<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for i in 0..self.n() {
            wtr.write_record(self.weights.row(i).iter().map(|x| x.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_dense<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Row { row: row + 1, message: e.to_string() })?;
            rows.push(vals);
        }
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("dense adjacency rows must all have length n".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Graph {
        let mut m = DMatrix::zeros(4, 4);
        for &(i, j, w) in &[(0, 1, 2.0), (1, 2, 0.1 + 0.2), (0, 3, 1.0 / 3.0)] {
            m[(i, j)] = w;
            m[(j, i)] = w;
        }
        Graph::new(m).unwrap()
    }

    #[test]
    fn rejects_invalid_matrices() {
        let mut m = DMatrix::zeros(3, 3);
        m[(0, 1)] = 1.0;
        assert!(Graph::new(m.clone()).is_err());
        m[(1, 0)] = 1.0;
        assert!(Graph::new(m.clone()).is_ok());
        m[(2, 2)] = 1.0;
        assert!(Graph::new(m).is_err());
        let mut neg = DMatrix::zeros(2, 2);
        neg[(0, 1)] = -1.0;
        neg[(1, 0)] = -1.0;
        assert!(Graph::new(neg).is_err());
    }

    #[test]
    fn neighbor_mean_handles_isolated_nodes() {
        let g = sample();
        let y = [1.0, 0.0, 1.0, 5.0];
        let m = g.neighbor_mean(&y);
        assert!((m[0] - (2.0 * 0.0 + 5.0 / 3.0) / (2.0 + 1.0 / 3.0)).abs() < 1e-15);
        let iso = Graph::empty(3).neighbor_mean(&[1.0, 2.0, 3.0]);
        assert_eq!(iso, vec![0.0; 3]);
    }

    #[test]
    fn density_counts_pairs() {
        let g = sample();
        assert_eq!(g.edge_count(), 3);
        assert!((g.density() - 0.5).abs() < 1e-15);
        assert_eq!(g.binarized().weight(1, 2), 1.0);
    }

    proptest! {
        #[test]
        fn csv_formats_round_trip_bit_exact(
            n in 2usize..12,
            vals in proptest::collection::vec(0.0f64..1e6, 66),
            mask in proptest::collection::vec(any::<bool>(), 66),
        ) {
            let mut m = DMatrix::zeros(n, n);
            let mut k = 0;
            for i in 0..n {
                for j in (i + 1)..n {
                    let w = if mask[k] { vals[k] / 7.0 } else { 0.0 };
                    m[(i, j)] = w;
                    m[(j, i)] = w;
                    k += 1;
                }
            }
            let g = Graph::new(m).unwrap();
            let mut buf = Vec::new();
            g.write_edge_list(&mut buf).unwrap();
            let back = Graph::read_edge_list(buf.as_slice(), n).unwrap();
            prop_assert_eq!(&back, &g);
            let mut buf = Vec::new();
            g.write_dense(&mut buf).unwrap();
            let back = Graph::read_dense(buf.as_slice()).unwrap();
            prop_assert_eq!(&back, &g);
        }
    }
}
