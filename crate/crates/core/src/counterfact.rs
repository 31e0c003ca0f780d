//! Buddy-assignment intervention and its two-step cascade.
//!
//! Step 0 classifies residents with the fitted linear probability model at
//! the misclassification-minimising threshold. Step 1 gives each target a
//! synthetic successful peer that already left, with tie weight
//! `buddy_weight`, and marks targets pushed over the threshold as graduates.
//! Step 2 refits the model on the modified outcomes with every exposure
//! recomputed (graph and threshold fixed) and counts who is still predicted
//! to fail.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mecov::{assemble_omega_rows, NodeCovariances};
use crate::peerlm::{fit_bias_corrected, fit_ols, EstimateReport, Method};
use crate::pipeline::{tc_design, FittedUnit};
use crate::tcdata::ResidentTable;

pub const DEFAULT_GRID_STEP: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "percentile")]
pub enum Targeting {
    TrueFailures,
    LsiPercentile(f64),
}

impl Targeting {
    pub fn label(&self) -> String {
        match self {
            Targeting::TrueFailures => "true-failures".into(),
            Targeting::LsiPercentile(p) => format!("lsi>p{p}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterventionConfig {
    pub targeting: Targeting,
    pub buddy_weight: f64,
    pub threshold_grid: f64,
    pub seed: u64,
}

impl InterventionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.buddy_weight >= 0.0) || !self.buddy_weight.is_finite() {
            return Err(Error::Config(format!("buddy weight {} must be finite and nonnegative", self.buddy_weight)));
        }
        if let Targeting::LsiPercentile(p) = self.targeting {
            if !(p > 0.0 && p < 100.0) {
                return Err(Error::Config(format!("LSI percentile {p} outside (0, 100)")));
            }
        }
        if !(self.threshold_grid > 0.0 && self.threshold_grid <= 0.5) {
            return Err(Error::Config(format!("threshold grid step {} outside (0, 0.5]", self.threshold_grid)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub id: String,
    pub graduated: u8,
    pub pre: f64,
    pub post_step1: f64,
    pub post_step2: f64,
    pub target: bool,
    pub treated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeReport {
    pub targeting: String,
    pub buddy_weight: f64,
    pub threshold: f64,
    pub misclassification: f64,
    pub n_rows: usize,
    pub target_count: usize,
    pub treated_count: usize,
    pub failures_true: usize,
    pub below_threshold_pre: usize,
    pub below_threshold_post: usize,
    pub rho_pre: Option<f64>,
    pub rho_post: Option<f64>,
    pub trace: Vec<TraceRow>,
}

impl CascadeReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// One row per report, in the layout of a cutoff comparison table.
pub fn write_summary_csv<W: Write>(reports: &[CascadeReport], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "targeting",
        "buddy_weight",
        "threshold",
        "treated",
        "failures_true",
        "below_threshold_pre",
        "below_threshold_post",
    ])?;
    for r in reports {
        wtr.write_record([
            r.targeting.clone(),
            r.buddy_weight.to_string(),
            format!("{:.3}", r.threshold),
            r.treated_count.to_string(),
            r.failures_true.to_string(),
            r.below_threshold_pre.to_string(),
            r.below_threshold_post.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Smallest grid point `t` in `[0, 1]` minimising the share of residents with
/// `1{fitted ≥ t} ≠ s`. Returns the threshold and its error rate.
pub fn choose_threshold(fitted: &[f64], s: &[f64], step: f64) -> (f64, f64) {
    assert_eq!(fitted.len(), s.len());
    let steps = (1.0 / step).round() as usize;
    let n = fitted.len().max(1) as f64;
    let mut best = (0.0, f64::INFINITY);
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        let wrong = fitted.iter().zip(s).filter(|(&f, &y)| (f >= t) != (y == 1.0)).count();
        let rate = wrong as f64 / n;
        if rate < best.1 {
            best = (t, rate);
        }
    }
    best
}

/// Exposure after adding one successful, already-exited peer with weight
/// `buddy_weight`: `(e·T + w) / (T + w)` where `T` is the resident's total
/// tie weight. Non-targets are unchanged.
pub fn apply_buddy(targets: &[usize], exposures: &[Option<f64>], totals: &[f64], buddy_weight: f64) -> Vec<Option<f64>> {
    let mut out = exposures.to_vec();
    if buddy_weight == 0.0 {
        return out;
    }
    for &i in targets {
        if let Some(e) = exposures[i] {
            out[i] = Some(if buddy_weight.is_infinite() {
                1.0
            } else {
                (e * totals[i] + buddy_weight) / (totals[i] + buddy_weight)
            });
        }
    }
    out
}

/// Definition-1 exposure from working outcomes `s` (one per resident).
pub fn exposure_from_outcomes(residents: &ResidentTable, weights: &DMatrix<f64>, s: &[u8]) -> Vec<Option<f64>> {
    let rs = &residents.residents;
    (0..rs.len())
        .map(|i| {
            let mut num = 0.0;
            let mut den = 0.0;
            for j in 0..rs.len() {
                let w = weights[(i, j)];
                if w > 0.0 && i != j {
                    let seen = if rs[j].exit_day < rs[i].exit_day { s[j] } else { 0 };
                    num += w * seen as f64;
                    den += w;
                }
            }
            (den > 0.0).then(|| (num / den).clamp(0.0, 1.0))
        })
        .collect()
}

/// Linear interpolation percentile (the usual "type 7" definition).
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let h = (v.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Median of the positive entries of a weight matrix (upper triangle).
pub fn median_positive_weight(weights: &DMatrix<f64>) -> Option<f64> {
    let n = weights.nrows();
    let mut pos = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let w = weights[(i, j)].max(weights[(j, i)]);
            if w > 0.0 {
                pos.push(w);
            }
        }
    }
    (!pos.is_empty()).then(|| percentile(&pos, 50.0))
}

fn refit(
    residents: &ResidentTable,
    exposure: &[Option<f64>],
    rows: &[usize],
    uhat: &DMatrix<f64>,
    cov: &NodeCovariances,
    y: &[f64],
    method: Method,
) -> Result<EstimateReport> {
    let design = tc_design(residents, exposure, rows, Some(uhat))?;
    match method {
        Method::BiasCorrected => fit_bias_corrected(&design, y, &assemble_omega_rows(cov, rows, design.q())),
        Method::HomophilyOls => fit_ols(&design, y),
        other => Err(Error::Config(format!("cascade needs a linear model with the latent block, got {}", other.as_str()))),
    }
}

fn predict(
    residents: &ResidentTable,
    exposure: &[Option<f64>],
    rows: &[usize],
    uhat: &DMatrix<f64>,
    model: &EstimateReport,
) -> Result<Vec<f64>> {
    model.predict(&tc_design(residents, exposure, rows, Some(uhat))?)
}

pub fn run_cascade(residents: &ResidentTable, unit: &FittedUnit, cfg: &InterventionConfig) -> Result<CascadeReport> {
    cfg.validate()?;
    let model = &unit.model;
    let rows = &unit.rows;
    let uhat = &unit.embedding.uhat;
    let rs = &residents.residents;
    let s0: Vec<u8> = rs.iter().map(|r| r.graduated).collect();
    let y0: Vec<f64> = rows.iter().map(|&i| s0[i] as f64).collect();
    let totals: Vec<f64> = (0..rs.len())
        .map(|i| (0..rs.len()).filter(|&j| j != i).map(|j| unit.weights[(i, j)]).sum())
        .collect();

    let exposure0 = exposure_from_outcomes(residents, &unit.weights, &s0);
    let pre = predict(residents, &exposure0, rows, uhat, model)?;
    let (threshold, misclassification) = choose_threshold(&pre, &y0, cfg.threshold_grid);

    let is_target: Vec<bool> = match cfg.targeting {
        Targeting::TrueFailures => rows.iter().map(|&i| s0[i] == 0).collect(),
        Targeting::LsiPercentile(p) => {
            let lsi: Vec<f64> = rows.iter().map(|&i| rs[i].lsi).collect();
            let cut = percentile(&lsi, p);
            lsi.iter().map(|&v| v > cut).collect()
        }
    };
    let targets: Vec<usize> = rows.iter().zip(&is_target).filter(|(_, &t)| t).map(|(&i, _)| i).collect();
    let exposure1 = apply_buddy(&targets, &exposure0, &totals, cfg.buddy_weight);
    let post1 = predict(residents, &exposure1, rows, uhat, model)?;

    let mut s1 = s0.clone();
    let mut treated = vec![false; rows.len()];
    for k in 0..rows.len() {
        if is_target[k] && pre[k] < threshold && post1[k] >= threshold {
            treated[k] = true;
            s1[rows[k]] = 1;
        }
    }
    let treated_count = treated.iter().filter(|&&t| t).count();

    let (post2, rho_post) = if treated_count == 0 {
        (pre.clone(), model.rho)
    } else {
        let exposure2 = exposure_from_outcomes(residents, &unit.weights, &s1);
        if rows.iter().any(|&i| exposure2[i].is_none()) {
            return Err(Error::Config("exposure support changed during the cascade".into()));
        }
        let y1: Vec<f64> = rows.iter().map(|&i| s1[i] as f64).collect();
        let refitted = refit(residents, &exposure2, rows, uhat, &unit.covariances, &y1, model.method)?;
        (predict(residents, &exposure2, rows, uhat, &refitted)?, refitted.rho)
    };

    let trace = rows
        .iter()
        .enumerate()
        .map(|(k, &i)| TraceRow {
            id: rs[i].id.clone(),
            graduated: s0[i],
            pre: pre[k],
            post_step1: post1[k],
            post_step2: post2[k],
            target: is_target[k],
            treated: treated[k],
        })
        .collect();

    Ok(CascadeReport {
        targeting: cfg.targeting.label(),
        buddy_weight: cfg.buddy_weight,
        threshold,
        misclassification,
        n_rows: rows.len(),
        target_count: targets.len(),
        treated_count,
        failures_true: y0.iter().filter(|&&y| y == 0.0).count(),
        below_threshold_pre: pre.iter().filter(|&&p| p < threshold).count(),
        below_threshold_post: post2.iter().filter(|&&p| p < threshold).count(),
        rho_pre: model.rho,
        rho_post,
        trace,
    })
}
