//! Monte Carlo studies comparing peer-effect estimators on simulated panels.
//!
//! Each replicate draws latent positions and a graph, simulates three waves
//!
//! ```text
//! Y1 = V1
//! Y2 = m·Uβ + αY1 + V2
//! Y3 = αY2 + Uβ + ρ·L·Y2 + V3,   L = D⁻¹A
//! ```
//!
//! and regresses `Y3` on `[1, Y2, LY2]`, optionally with the embedded
//! positions and the Ω correction. Replicate seeds come from
//! `sub_seed2(master, sweep_index, replicate)`, so results do not depend on
//! thread scheduling.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::ase;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::mecov::{assemble_omega, delta_rdpg, delta_sbm, CovVariant};
use crate::netgen::{generate, two_block_directions, LatentConfig, LatentFactors, LatentKind};
use crate::peerlm::{fit_bias_corrected, fit_ols, DesignMatrix};
use crate::rng::{rng_from_seed, sub_seed, sub_seed2};

const MAX_RESAMPLE_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Study {
    /// Degree-corrected two-block model, sweep over n.
    A,
    /// Degree-corrected two-block model at fixed n, sweep over density.
    B,
    /// Four-block model, sweep over n.
    C,
    /// Two-block model at fixed n, sweep over the lagged latent multiplier m.
    D,
}

impl std::str::FromStr for Study {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Study::A),
            "B" => Ok(Study::B),
            "C" => Ok(Study::C),
            "D" => Ok(Study::D),
            other => Err(Error::Config(format!("unknown study {other:?}, expected A, B, C or D"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study: Study,
    /// n for studies A and C, density for B, m for D.
    pub sweep: Vec<f64>,
    pub reps: usize,
    pub alpha: f64,
    pub rho: f64,
    pub beta: Vec<f64>,
    /// Multiplier on Uβ in the Y2 equation when it is not being swept.
    pub m: f64,
    pub noise_sd: f64,
    /// Node count when n is not being swept.
    pub n: usize,
    /// Density for the degree-corrected model when it is not being swept.
    pub density: f64,
    pub cov: CovVariant,
    pub k_clusters: usize,
    /// Also fit with the true latent positions.
    pub include_oracle: bool,
    /// Add a constant column to every design. The generator has no constant.
    pub intercept: bool,
    pub seed: u64,
}

fn n_sweep() -> Vec<f64> {
    (1..=8).map(|k| 100.0 * k as f64).collect()
}

impl StudyConfig {
    pub fn new(study: Study, seed: u64) -> Self {
        let base = Self {
            study,
            sweep: n_sweep(),
            reps: 200,
            alpha: 0.6,
            rho: 0.3,
            beta: vec![1.0, 3.0],
            m: 1.0,
            noise_sd: 1.0,
            n: 200,
            density: 0.20,
            cov: CovVariant::RdpgPlugin,
            k_clusters: 2,
            include_oracle: false,
            intercept: false,
            seed,
        };
        match study {
            Study::A => base,
            Study::B => Self { sweep: (1..=8).map(|k| 0.05 * k as f64).collect(), ..base },
            Study::C => Self { beta: vec![1.0, 2.0], cov: CovVariant::SbmCluster, k_clusters: 4, ..base },
            Study::D => Self {
                sweep: (0..=8).map(|k| -1.0 + 0.25 * k as f64).collect(),
                cov: CovVariant::SbmCluster,
                k_clusters: 2,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.sweep.is_empty() {
            return Err(Error::Config("sweep must not be empty".into()));
        }
        if ![self.alpha, self.rho, self.m, self.noise_sd].iter().all(|v| v.is_finite()) {
            return Err(Error::Config("alpha, rho, m and noise_sd must be finite".into()));
        }
        if self.beta.len() != 2 {
            return Err(Error::Dimension(format!("beta has {} entries, the studies use d=2", self.beta.len())));
        }
        if matches!(self.study, Study::A | Study::C) {
            if let Some(bad) = self.sweep.iter().find(|&&v| !(v >= 3.0 && v.fract() == 0.0)) {
                return Err(Error::Config(format!("node-count sweep value {bad} is not an integer >= 3")));
            }
        }
        if self.study == Study::B {
            if let Some(bad) = self.sweep.iter().find(|&&v| !(v > 0.0 && v <= 1.0)) {
                return Err(Error::Config(format!("density sweep value {bad} outside (0, 1]")));
            }
        }
        Ok(())
    }

    /// Latent model for one replicate at a given sweep value.
    pub fn latent_config(&self, sweep_value: f64, seed: u64) -> LatentConfig {
        match self.study {
            Study::A => LatentConfig::two_block_dcsbm(sweep_value as usize, self.density, seed),
            Study::B => LatentConfig::two_block_dcsbm(self.n, sweep_value, seed),
            Study::C => LatentConfig::four_block_sbm(sweep_value as usize, seed),
            Study::D => LatentConfig {
                n: self.n,
                d: 2,
                kind: LatentKind::Sbm,
                cluster_directions: two_block_directions(),
                cluster_probs: vec![0.5, 0.5],
                degree_dist: None,
                target_density: None,
                seed,
            },
        }
    }

    fn panel_params(&self, sweep_value: f64) -> PanelParams {
        PanelParams {
            alpha: self.alpha,
            rho: self.rho,
            beta: self.beta.clone(),
            m: if self.study == Study::D { sweep_value } else { self.m },
            noise_sd: self.noise_sd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelParams {
    pub alpha: f64,
    pub rho: f64,
    pub beta: Vec<f64>,
    pub m: f64,
    pub noise_sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub y3: Vec<f64>,
    /// `L·Y2`, the peer term of the last wave.
    pub ly2: Vec<f64>,
}

/// Three waves of outcomes. Isolated nodes have an all-zero row of `L`.
pub fn simulate_panel(factors: &LatentFactors, graph: &Graph, params: &PanelParams, seed: u64) -> Result<Panel> {
    let n = factors.n();
    if graph.n() != n {
        return Err(Error::Dimension(format!("graph has {} nodes, factors {n}", graph.n())));
    }
    if params.beta.len() != factors.d() {
        return Err(Error::Dimension(format!("beta has {} entries, factors d={}", params.beta.len(), factors.d())));
    }
    let ub: Vec<f64> = (factors.values() * DVector::from_column_slice(&params.beta)).iter().copied().collect();
    let mut rng = rng_from_seed(seed);
    let mut noise = || -> Vec<f64> {
        (0..n).map(|_| params.noise_sd * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect::<Vec<f64>>()
    };
    let v1 = noise();
    let v2 = noise();
    let v3 = noise();
    let y1 = v1;
    let y2: Vec<f64> = (0..n).map(|i| params.m * ub[i] + params.alpha * y1[i] + v2[i]).collect();
    let ly2 = graph.neighbor_mean(&y2);
    let y3 = (0..n).map(|i| params.alpha * y2[i] + ub[i] + params.rho * ly2[i] + v3[i]).collect();
    Ok(Panel { y1, y2, y3, ly2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimator {
    #[serde(rename = "no-latent")]
    NoLatent,
    #[serde(rename = "uncorrected-uhat")]
    UncorrectedUhat,
    #[serde(rename = "bias-corrected")]
    BiasCorrected,
    #[serde(rename = "true-latent")]
    TrueLatent,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::NoLatent => "no-latent",
            Estimator::UncorrectedUhat => "uncorrected-uhat",
            Estimator::BiasCorrected => "bias-corrected",
            Estimator::TrueLatent => "true-latent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub sweep: f64,
    pub method: Estimator,
    pub mean_rho_hat: f64,
    pub bias: f64,
    pub mc_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasTable {
    pub rows: Vec<BiasRow>,
    /// Replicates redrawn after a failure, per sweep value.
    pub resampled: Vec<usize>,
}

impl BiasTable {
    pub fn get(&self, sweep: f64, method: Estimator) -> Option<&BiasRow> {
        self.rows.iter().find(|r| r.sweep == sweep && r.method == method)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["sweep", "method", "mean_rho_hat", "bias", "mc_se"])?;
        for r in &self.rows {
            wtr.write_record([
                r.sweep.to_string(),
                r.method.as_str().to_string(),
                format!("{:.16e}", r.mean_rho_hat),
                format!("{:.16e}", r.bias),
                format!("{:.16e}", r.mc_se),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// ρ̂ from each estimator on one simulated data set, in [`Estimator`] order.
pub fn replicate(cfg: &StudyConfig, sweep_value: f64, seed: u64) -> Result<Vec<f64>> {
    let lc = cfg.latent_config(sweep_value, sub_seed(seed, 0));
    let (factors, graph) = generate(&lc)?;
    let panel = simulate_panel(&factors, &graph, &cfg.panel_params(sweep_value), sub_seed(seed, 1))?;
    let n = factors.n();
    let base = if cfg.intercept {
        let w = DMatrix::from_fn(n, 3, |i, j| [1.0, panel.y2[i], panel.ly2[i]][j]);
        let labels = vec!["intercept".to_string(), "y_lag".to_string(), "peer_lag".to_string()];
        DesignMatrix::new(w, labels, None, vec![2])?
    } else {
        let w = DMatrix::from_fn(n, 2, |i, j| [panel.y2[i], panel.ly2[i]][j]);
        DesignMatrix::without_intercept(w, vec!["y_lag".to_string(), "peer_lag".to_string()], None, vec![1])?
    };
    let emb = ase(&graph, factors.d())?;
    let with_uhat = base.with_latent(emb.uhat.clone())?;
    let cov = match cfg.cov {
        CovVariant::RdpgPlugin => delta_rdpg(&emb)?,
        CovVariant::SbmCluster => delta_sbm(&emb, cfg.k_clusters, sub_seed(seed, 2))?,
    };
    let omega = assemble_omega(&cov, base.q());
    let rho = |r: crate::peerlm::EstimateReport| r.rho.expect("peer column present");
    let mut out = vec![
        rho(fit_ols(&base, &panel.y3)?),
        rho(fit_ols(&with_uhat, &panel.y3)?),
        rho(fit_bias_corrected(&with_uhat, &panel.y3, &omega)?),
    ];
    if cfg.include_oracle {
        out.push(rho(fit_ols(&base.with_latent(factors.values().clone())?, &panel.y3)?));
    }
    Ok(out)
}

/// Run every sweep value with `cfg.reps` replicates each.
///
/// A failing replicate is redrawn from a fresh sub-seed; more than 5% of
/// `reps` redraws at one sweep value aborts the study.
pub fn run_study(cfg: &StudyConfig) -> Result<BiasTable> {
    cfg.validate()?;
    let budget = (MAX_RESAMPLE_RATE * cfg.reps as f64).ceil() as usize;
    let mut methods = vec![Estimator::NoLatent, Estimator::UncorrectedUhat, Estimator::BiasCorrected];
    if cfg.include_oracle {
        methods.push(Estimator::TrueLatent);
    }
    let mut rows = Vec::new();
    let mut resampled = Vec::new();
    for (s, &value) in cfg.sweep.iter().enumerate() {
        let results: Vec<(Option<Vec<f64>>, usize, Option<Error>)> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let rep_seed = sub_seed2(cfg.seed, s as u64, r as u64);
                let mut last = None;
                for attempt in 0..=budget {
                    let seed = if attempt == 0 { rep_seed } else { sub_seed(rep_seed, attempt as u64) };
                    match replicate(cfg, value, seed) {
                        Ok(v) => return (Some(v), attempt, None),
                        Err(e) => last = Some(e),
                    }
                }
                (None, budget + 1, last)
            })
            .collect();
        let redraws: usize = results.iter().map(|(_, a, _)| *a).sum();
        if redraws > budget {
            let cause = results.into_iter().find_map(|(_, _, e)| e).map(|e| e.to_string()).unwrap_or_default();
            return Err(Error::RetriesExhausted {
                what: format!("study {:?} at sweep value {value} ({redraws} redraws; last error: {cause})", cfg.study),
                attempts: budget,
            });
        }
        resampled.push(redraws);
        let estimates: Vec<Vec<f64>> = results.into_iter().map(|(v, _, _)| v.expect("checked above")).collect();
        for (k, &method) in methods.iter().enumerate() {
            let xs: Vec<f64> = estimates.iter().map(|e| e[k]).collect();
            let (mean, se) = mean_and_se(&xs);
            rows.push(BiasRow { sweep: value, method, mean_rho_hat: mean, bias: mean - cfg.rho, mc_se: se });
        }
    }
    Ok(BiasTable { rows, resampled })
}

/// Sample mean and its standard error (sd / √reps); SE is 0 for one replicate.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
