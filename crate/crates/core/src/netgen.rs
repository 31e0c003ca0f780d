//! Random dot product graphs and their block-model special cases.
//!
//! Latent positions `U` (n×d) define edge probabilities `P = UUᵀ`; an
//! undirected graph is drawn by sampling each upper-triangle pair
//! independently. Block models place every node on one of `K` direction rows
//! `J_k`; the degree-corrected variant multiplies each row by a lognormal
//! degree parameter and then rescales globally so that the mean off-diagonal
//! probability equals a target density.
//!
//! Lognormal degree parameters are unbounded, so at realistic densities a few
//! node pairs would otherwise receive `P_ij > 1`. The degree-corrected builder
//! therefore winsorizes the degree parameters at the largest cap for which the
//! rescaled model is a valid RDPG (`‖U_i‖² ≤ 1` for every node). Nodes below
//! the cap are untouched.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{rng_from_seed, sub_seed, Rng};

/// Tolerance for probabilities just outside `[0, 1]`.
pub const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatentKind {
    RdpgGeneric,
    Sbm,
    Dcsbm,
}

/// Parameters of the lognormal degree distribution (on the log scale).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalParams {
    pub log_mean: f64,
    pub log_sd: f64,
}

impl Default for LogNormalParams {
    fn default() -> Self {
        Self { log_mean: 0.0, log_sd: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentConfig {
    pub n: usize,
    pub d: usize,
    pub kind: LatentKind,
    /// K×d; row k is the direction of community k.
    pub cluster_directions: DMatrix<f64>,
    pub cluster_probs: Vec<f64>,
    /// `None` means Θ = I.
    pub degree_dist: Option<LogNormalParams>,
    pub target_density: Option<f64>,
    pub seed: u64,
}

impl LatentConfig {
    /// Two-community degree-corrected block model with directions
    /// `[[0.5, 0.1], [0.1, 0.5]]`, equal class probabilities and lognormal(0, 0.5)
    /// degrees.
    pub fn two_block_dcsbm(n: usize, density: f64, seed: u64) -> Self {
        Self {
            n,
            d: 2,
            kind: LatentKind::Dcsbm,
            cluster_directions: two_block_directions(),
            cluster_probs: vec![0.5, 0.5],
            degree_dist: Some(LogNormalParams::default()),
            target_density: Some(density),
            seed,
        }
    }

    /// Four-community block model on the 4×2 latent matrix
    /// `[[0.7, 0.2], [0.1, 0.6], [0.2, 0.2], [0.5, 0.5]]` with equal class probabilities.
    pub fn four_block_sbm(n: usize, seed: u64) -> Self {
        Self {
            n,
            d: 2,
            kind: LatentKind::Sbm,
            cluster_directions: four_block_directions(),
            cluster_probs: vec![0.25; 4],
            degree_dist: None,
            target_density: None,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("latent dimension d must be at least 1".into()));
        }
        if self.n < self.d {
            return Err(Error::Config(format!("need n >= d, got n={} d={}", self.n, self.d)));
        }
        if let Some(t) = self.target_density {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::Config(format!("target density {t} outside (0, 1]")));
            }
        }
        if self.kind == LatentKind::RdpgGeneric {
            return Ok(());
        }
        let k = self.cluster_directions.nrows();
        if k != self.cluster_probs.len() {
            return Err(Error::Dimension(format!(
                "{} cluster direction rows but {} cluster probabilities",
                k,
                self.cluster_probs.len()
            )));
        }
        if self.cluster_directions.ncols() != self.d {
            return Err(Error::Dimension(format!(
                "cluster directions have {} columns, expected d={}",
                self.cluster_directions.ncols(),
                self.d
            )));
        }
        if self.cluster_probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Config("cluster probabilities must be nonnegative".into()));
        }
        let total: f64 = self.cluster_probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("cluster probabilities sum to {total}, not 1")));
        }
        Ok(())
    }
}

pub fn two_block_directions() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.5])
}

pub fn four_block_directions() -> DMatrix<f64> {
    DMatrix::from_row_slice(4, 2, &[0.7, 0.2, 0.1, 0.6, 0.2, 0.2, 0.5, 0.5])
}

/// Latent positions `U = θ^{1/2} X` with `‖X_i‖ ≤ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentFactors {
    values: DMatrix<f64>,
    scale: f64,
    memberships: Option<Vec<usize>>,
}

impl LatentFactors {
    /// Validates row norms against `scale` and that `UUᵀ` lies in `[0, 1]`
    /// off the diagonal.
    pub fn new(values: DMatrix<f64>, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::Config(format!("scale must be positive, got {scale}")));
        }
        let bound = scale.sqrt() + PROB_TOL;
        for i in 0..values.nrows() {
            let norm = values.row(i).norm();
            if norm > bound {
                return Err(Error::Config(format!(
                    "row {i} has norm {norm} exceeding sqrt(scale) = {}",
                    scale.sqrt()
                )));
            }
        }
        check_probabilities(&values)?;
        Ok(Self { values, scale, memberships: None })
    }

    fn with_memberships(mut self, m: Vec<usize>) -> Self {
        self.memberships = Some(m);
        self
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    /// Community labels for block-model factors.
    pub fn memberships(&self) -> Option<&[usize]> {
        self.memberships.as_deref()
    }

    pub fn probabilities(&self) -> DMatrix<f64> {
        &self.values * self.values.transpose()
    }

    /// Mean of the off-diagonal entries of `P`.
    pub fn expected_density(&self) -> f64 {
        mean_offdiag(&self.probabilities())
    }
}

fn mean_offdiag(p: &DMatrix<f64>) -> f64 {
    let n = p.nrows();
    if n < 2 {
        return 0.0;
    }
    let total: f64 = p.sum() - p.diagonal().sum();
    total / (n * (n - 1)) as f64
}

fn check_probabilities(u: &DMatrix<f64>) -> Result<()> {
    let n = u.nrows();
    for i in 0..n {
        let ui = u.row(i);
        for j in (i + 1)..n {
            let p = ui.dot(&u.row(j));
            if p > 1.0 + PROB_TOL || p < -PROB_TOL {
                return Err(Error::InvalidProbability { row: i, col: j, value: p });
            }
        }
    }
    Ok(())
}

/// Draw an undirected graph with `A_ij ~ Bernoulli(U_i·U_j)` for `i < j`.
pub fn gen_rdpg(factors: &LatentFactors, seed: u64) -> Result<Graph> {
    let u = factors.values();
    let n = u.nrows();
    let mut rng = rng_from_seed(seed);
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let ui = u.row(i);
        for j in (i + 1)..n {
            let p = ui.dot(&u.row(j));
            if p > 1.0 + PROB_TOL || p < -PROB_TOL {
                return Err(Error::InvalidProbability { row: i, col: j, value: p });
            }
            let p = p.clamp(0.0, 1.0);
            let draw: f64 = rng.random();
            if draw < p {
                a[(i, j)] = 1.0;
                a[(j, i)] = 1.0;
            }
        }
    }
    Ok(Graph::from_trusted(a))
}

fn draw_memberships(probs: &[f64], n: usize, rng: &mut Rng) -> Vec<usize> {
    let k = probs.len();
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (c, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return c;
                }
            }
            // u landed in the rounding gap above the last cumulative value
            (0..k).rev().find(|&c| probs[c] > 0.0).unwrap_or(0)
        })
        .collect()
}

/// Mean off-diagonal of `P = UUᵀ` for block rows `U_i = θ_i J_{c_i}`,
/// computed in O(n + K²d).
fn block_mean_offdiag(theta: &[f64], members: &[usize], j: &DMatrix<f64>) -> f64 {
    let n = theta.len();
    let k = j.nrows();
    let gram = j * j.transpose();
    let mut sums = vec![0.0; k];
    let mut diag = 0.0;
    for (&t, &c) in theta.iter().zip(members) {
        sums[c] += t;
        diag += t * t * gram[(c, c)];
    }
    let mut total = 0.0;
    for a in 0..k {
        for b in 0..k {
            total += gram[(a, b)] * sums[a] * sums[b];
        }
    }
    (total - diag) / (n * (n - 1)) as f64
}

fn block_factors(theta: &[f64], members: &[usize], j: &DMatrix<f64>, mult: f64) -> DMatrix<f64> {
    let d = j.ncols();
    let root = mult.sqrt();
    DMatrix::from_fn(theta.len(), d, |i, c| root * theta[i] * j[(members[i], c)])
}

fn max_row_norm_sq(u: &DMatrix<f64>) -> f64 {
    (0..u.nrows()).map(|i| u.row(i).norm_squared()).fold(0.0, f64::max)
}

fn check_block_gram(j: &DMatrix<f64>) -> Result<()> {
    let gram = j * j.transpose();
    for a in 0..gram.nrows() {
        for b in 0..gram.ncols() {
            if gram[(a, b)] < -PROB_TOL {
                return Err(Error::InvalidProbability { row: a, col: b, value: gram[(a, b)] });
            }
        }
    }
    Ok(())
}

/// Degree-corrected block model factors `U = ΘHJ`, rescaled to the target
/// density when one is given.
pub fn build_dcsbm_factors(cfg: &LatentConfig) -> Result<LatentFactors> {
    cfg.validate()?;
    if cfg.kind != LatentKind::Dcsbm {
        return Err(Error::Config("build_dcsbm_factors requires kind = dcsbm".into()));
    }
    let j = &cfg.cluster_directions;
    check_block_gram(j)?;
    let mut rng = rng_from_seed(cfg.seed);
    let members = draw_memberships(&cfg.cluster_probs, cfg.n, &mut rng);
    let theta: Vec<f64> = match cfg.degree_dist {
        Some(p) => {
            let dist = LogNormal::new(p.log_mean, p.log_sd)
                .map_err(|e| Error::Config(format!("lognormal parameters: {e}")))?;
            (0..cfg.n).map(|_| dist.sample(&mut rng)).collect()
        }
        None => vec![1.0; cfg.n],
    };

    let norms: Vec<f64> = members.iter().map(|&c| j.row(c).norm_squared()).collect();
    // Multiplier that sends the mean off-diagonal probability to the target,
    // and the largest ‖U_i‖² it produces.
    let fit = |th: &[f64]| -> (f64, f64) {
        let mult = match cfg.target_density {
            Some(t) => t / block_mean_offdiag(th, &members, j),
            None => 1.0,
        };
        let peak = th.iter().zip(&norms).map(|(t, nm)| mult * t * t * nm).fold(0.0, f64::max);
        (mult, peak)
    };
    let capped = |cap: f64| -> Vec<f64> { theta.iter().map(|&t| t.min(cap)).collect() };

    let (mut mult, peak) = fit(&theta);
    let mut theta_used = theta.clone();
    if peak > 1.0 {
        if cfg.target_density.is_none() {
            return Err(Error::InvalidProbability { row: 0, col: 0, value: peak });
        }
        // Largest winsorizing cap keeping every ‖U_i‖² ≤ 1.
        let mut hi = theta.iter().copied().fold(0.0, f64::max);
        let mut lo = theta.iter().copied().fold(f64::INFINITY, f64::min);
        if fit(&capped(lo)).1 > 1.0 {
            return Err(Error::Config(format!(
                "target density {:?} unreachable with these cluster directions",
                cfg.target_density
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if fit(&capped(mid)).1 <= 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * hi {
                break;
            }
        }
        theta_used = capped(lo);
        mult = fit(&theta_used).0;
    }

    let values = block_factors(&theta_used, &members, j, mult);
    let scale = max_row_norm_sq(&values).max(f64::MIN_POSITIVE);
    Ok(LatentFactors::new(values, scale)?.with_memberships(members))
}

/// Block model factors: node `i` gets row `J_{c_i}`.
pub fn build_sbm_factors(cfg: &LatentConfig) -> Result<LatentFactors> {
    cfg.validate()?;
    if cfg.kind != LatentKind::Sbm {
        return Err(Error::Config("build_sbm_factors requires kind = sbm".into()));
    }
    let j = &cfg.cluster_directions;
    check_block_gram(j)?;
    let mut rng = rng_from_seed(cfg.seed);
    let members = draw_memberships(&cfg.cluster_probs, cfg.n, &mut rng);
    let ones = vec![1.0; cfg.n];
    let mult = match cfg.target_density {
        Some(t) => t / block_mean_offdiag(&ones, &members, j),
        None => 1.0,
    };
    let values = block_factors(&ones, &members, j, mult);
    let base = max_row_norm_sq(&j.clone()).max(1.0);
    Ok(LatentFactors::new(values, base * mult)?.with_memberships(members))
}

/// Generic RDPG: rows drawn uniformly from the probability simplex
/// (Dirichlet(1, ..., 1)), optionally rescaled to the target density.
pub fn build_rdpg_factors(cfg: &LatentConfig) -> Result<LatentFactors> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let gamma = Gamma::new(1.0, 1.0).expect("gamma(1, 1)");
    let mut values = DMatrix::zeros(cfg.n, cfg.d);
    for i in 0..cfg.n {
        let draws: Vec<f64> = (0..cfg.d).map(|_| gamma.sample(&mut rng)).collect();
        let total: f64 = draws.iter().sum();
        for (c, g) in draws.iter().enumerate() {
            values[(i, c)] = g / total;
        }
    }
    let mut mult = 1.0;
    if let Some(t) = cfg.target_density {
        mult = t / mean_offdiag(&(&values * values.transpose()));
        values *= mult.sqrt();
    }
    LatentFactors::new(values, mult)
}

pub fn build_factors(cfg: &LatentConfig) -> Result<LatentFactors> {
    match cfg.kind {
        LatentKind::RdpgGeneric => build_rdpg_factors(cfg),
        LatentKind::Sbm => build_sbm_factors(cfg),
        LatentKind::Dcsbm => build_dcsbm_factors(cfg),
    }
}

/// Factors and a graph drawn from them, on independent sub-streams of `cfg.seed`.
pub fn generate(cfg: &LatentConfig) -> Result<(LatentFactors, Graph)> {
    let mut c = cfg.clone();
    c.seed = sub_seed(cfg.seed, 0);
    let factors = build_factors(&c)?;
    let graph = gen_rdpg(&factors, sub_seed(cfg.seed, 1))?;
    Ok((factors, graph))
}
