//! Outcome models: least squares with and without the latent block, the
//! measurement-error corrected estimator, and a logistic fit reported as
//! average marginal effects.
//!
//! Every design is laid out as `[Û | W]`: the latent block (if any) first,
//! then the observed predictors with the intercept in column 0 of `W`. The
//! correction matrix Ω uses the same layout.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{condition_number_sym, spd_inverse, symmetrize};
use crate::mecov::OmegaMatrix;

pub const MAX_CONDITION: f64 = 1e12;
const COLLINEAR_TOL: f64 = 1e-9;
const IRLS_TOL: f64 = 1e-10;
const IRLS_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    w: DMatrix<f64>,
    uhat: Option<DMatrix<f64>>,
    w_labels: Vec<String>,
    peer_columns: Vec<usize>,
    intercept: bool,
}

impl DesignMatrix {
    /// `w` must carry the intercept in column 0; `peer_columns` index into `w`.
    pub fn new(
        w: DMatrix<f64>,
        w_labels: Vec<String>,
        uhat: Option<DMatrix<f64>>,
        peer_columns: Vec<usize>,
    ) -> Result<Self> {
        Self::build(w, w_labels, uhat, peer_columns, true)
    }

    /// A design through the origin, for generators without a constant term.
    pub fn without_intercept(
        w: DMatrix<f64>,
        w_labels: Vec<String>,
        uhat: Option<DMatrix<f64>>,
        peer_columns: Vec<usize>,
    ) -> Result<Self> {
        Self::build(w, w_labels, uhat, peer_columns, false)
    }

    fn build(
        w: DMatrix<f64>,
        w_labels: Vec<String>,
        uhat: Option<DMatrix<f64>>,
        peer_columns: Vec<usize>,
        intercept: bool,
    ) -> Result<Self> {
        let n = w.nrows();
        if w.ncols() == 0 {
            return Err(Error::Dimension("design needs at least one observed column".into()));
        }
        if w_labels.len() != w.ncols() {
            return Err(Error::Dimension(format!("{} labels for {} columns", w_labels.len(), w.ncols())));
        }
        if intercept && w.column(0).iter().any(|&x| x != 1.0) {
            return Err(Error::Config("column 0 of the design must be the intercept (all ones)".into()));
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("design contains NaN or infinite values".into()));
        }
        if let Some(u) = &uhat {
            if u.nrows() != n {
                return Err(Error::Dimension(format!("latent block has {} rows, design has {n}", u.nrows())));
            }
            if u.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config("latent block contains NaN or infinite values".into()));
            }
        }
        let first = usize::from(intercept);
        if let Some(&bad) = peer_columns.iter().find(|&&c| c < first || c >= w.ncols()) {
            return Err(Error::Dimension(format!("peer column {bad} out of range")));
        }
        Ok(Self { w, uhat, w_labels, peer_columns, intercept })
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn d(&self) -> usize {
        self.uhat.as_ref().map_or(0, |u| u.ncols())
    }

    pub fn q(&self) -> usize {
        self.w.ncols()
    }

    pub fn p(&self) -> usize {
        self.d() + self.q()
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn uhat(&self) -> Option<&DMatrix<f64>> {
        self.uhat.as_ref()
    }

    pub fn peer_columns(&self) -> &[usize] {
        &self.peer_columns
    }

    /// Same design with the latent block dropped.
    pub fn without_latent(&self) -> Self {
        Self { uhat: None, ..self.clone() }
    }

    /// Same design with a different latent block.
    pub fn with_latent(&self, uhat: DMatrix<f64>) -> Result<Self> {
        Self::build(self.w.clone(), self.w_labels.clone(), Some(uhat), self.peer_columns.clone(), self.intercept)
    }

    /// Column labels of the full design, latent block first.
    pub fn labels(&self) -> Vec<String> {
        (1..=self.d()).map(|k| format!("u{k}")).chain(self.w_labels.iter().cloned()).collect()
    }

    /// The full `[Û | W]` matrix.
    pub fn full(&self) -> DMatrix<f64> {
        match &self.uhat {
            None => self.w.clone(),
            Some(u) => {
                let d = u.ncols();
                DMatrix::from_fn(self.n(), self.p(), |i, j| if j < d { u[(i, j)] } else { self.w[(i, j - d)] })
            }
        }
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            w: self.w.select_rows(rows),
            uhat: self.uhat.as_ref().map(|u| u.select_rows(rows)),
            ..self.clone()
        }
    }

    fn peer_index_in_full(&self) -> Vec<usize> {
        self.peer_columns.iter().map(|c| c + self.d()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ols,
    HomophilyOls,
    BiasCorrected,
    LogisticAme,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ols => "ols",
            Method::HomophilyOls => "homophily-ols",
            Method::BiasCorrected => "bias-corrected",
            Method::LogisticAme => "logistic-ame",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    pub labels: Vec<String>,
    /// Linear fits: coefficients. Logistic: average marginal effects, with the
    /// intercept entry holding the raw log-odds intercept.
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Coefficient of the first peer-exposure column.
    pub rho: Option<f64>,
    pub rho_se: Option<f64>,
    pub n_obs: usize,
    pub condition_number: f64,
    /// Log-odds coefficients for the logistic fit.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub raw_coefficients: Option<Vec<f64>>,
    /// Number of latent columns leading the coefficient vector.
    pub latent_dim: usize,
}

impl EstimateReport {
    fn build(
        method: Method,
        design: &DesignMatrix,
        coefficients: Vec<f64>,
        std_errors: Vec<f64>,
        condition_number: f64,
    ) -> Self {
        let peer = design.peer_index_in_full();
        let rho = peer.first().map(|&k| coefficients[k]);
        let rho_se = peer.first().map(|&k| std_errors[k]);
        Self {
            method,
            labels: design.labels(),
            coefficients,
            std_errors,
            rho,
            rho_se,
            n_obs: design.n(),
            condition_number,
            raw_coefficients: None,
            latent_dim: design.d(),
        }
    }

    pub fn coefficient(&self, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| l == label).map(|k| self.coefficients[k])
    }

    pub fn std_error(&self, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| l == label).map(|k| self.std_errors[k])
    }

    /// Linear predictor `X·coef` for a design with the same layout.
    pub fn predict(&self, design: &DesignMatrix) -> Result<Vec<f64>> {
        if design.labels() != self.labels {
            return Err(Error::Dimension("design layout does not match the fitted model".into()));
        }
        let coef = self.raw_coefficients.as_ref().unwrap_or(&self.coefficients);
        let eta = design.full() * DVector::from_column_slice(coef);
        Ok(match self.method {
            Method::LogisticAme => eta.iter().map(|&e| logistic(e)).collect(),
            _ => eta.iter().copied().collect(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["method".to_string(), "n_obs".to_string(), "condition_number".to_string()];
        for l in &self.labels {
            h.push(l.clone());
            h.push(format!("{l}_se"));
        }
        h
    }

    pub fn csv_row(&self) -> Vec<String> {
        let mut r = vec![
            self.method.as_str().to_string(),
            self.n_obs.to_string(),
            format!("{:.16e}", self.condition_number),
        ];
        for (c, s) in self.coefficients.iter().zip(&self.std_errors) {
            r.push(format!("{c:.16e}"));
            r.push(format!("{s:.16e}"));
        }
        r
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(self.csv_header())?;
        wtr.write_record(self.csv_row())?;
        wtr.flush()?;
        Ok(())
    }
}

/// Labels of columns that are linear combinations of earlier columns.
fn collinear_columns(x: &DMatrix<f64>, labels: &[String]) -> Vec<String> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut out = Vec::new();
    for (k, label) in labels.iter().enumerate() {
        let col = x.column(k).into_owned();
        let norm = col.norm();
        let mut r = col.clone();
        for b in &basis {
            let proj = b.dot(&r);
            r -= b * proj;
        }
        if norm == 0.0 || r.norm() <= COLLINEAR_TOL * norm {
            out.push(label.clone());
        } else {
            let rn = r.norm();
            basis.push(r / rn);
        }
    }
    out
}

fn check_conditioning(x: &DMatrix<f64>, gram: &DMatrix<f64>, labels: &[String]) -> Result<f64> {
    let condition = condition_number_sym(gram);
    if condition < MAX_CONDITION {
        return Ok(condition);
    }
    let columns = collinear_columns(x, labels);
    if columns.is_empty() {
        Err(Error::IllConditioned { condition })
    } else {
        Err(Error::Collinear { columns })
    }
}

fn check_shape(design: &DesignMatrix, y: &[f64]) -> Result<()> {
    if y.len() != design.n() {
        return Err(Error::Dimension(format!("{} outcomes for {} design rows", y.len(), design.n())));
    }
    if design.n() <= design.p() {
        return Err(Error::Config(format!("need more rows ({}) than columns ({})", design.n(), design.p())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("outcome contains NaN or infinite values".into()));
    }
    Ok(())
}

/// Least squares on `[Û | W]` (or `W` alone) with classical standard errors.
/// The solve goes through a QR factorisation of the design.
pub fn fit_ols(design: &DesignMatrix, y: &[f64]) -> Result<EstimateReport> {
    check_shape(design, y)?;
    let x = design.full();
    let gram = x.transpose() * &x;
    let condition = check_conditioning(&x, &gram, &design.labels())?;
    let n = x.nrows();
    let p = x.ncols();
    let yv = DVector::from_column_slice(y);
    let qr = x.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * &yv;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Collinear { columns: collinear_columns(&x, &design.labels()) })?;
    let resid = &yv - &x * &coef;
    let sigma2 = resid.norm_squared() / (n - p) as f64;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(Error::IllConditioned { condition })?;
    let cov = &r_inv * r_inv.transpose() * sigma2;
    let se = (0..p).map(|k| cov[(k, k)].max(0.0).sqrt()).collect();
    let method = if design.d() > 0 { Method::HomophilyOls } else { Method::Ols };
    Ok(EstimateReport::build(method, design, coef.iter().copied().collect(), se, condition))
}

/// Corrected normal equations `(M − Ω)θ = M_Y` with `M = XᵀX`, `M_Y = Xᵀy`.
///
/// Standard errors use the sandwich `(M − Ω)⁻¹ M (M − Ω)⁻¹ σ̂²`, where σ̂² is the
/// residual variance net of the measurement-error contribution `θ̂ᵀΩθ̂`
/// (falling back to the raw residual variance if that difference is not
/// positive). With Ω = 0 this is exactly [`fit_ols`].
pub fn fit_bias_corrected(design: &DesignMatrix, y: &[f64], omega: &OmegaMatrix) -> Result<EstimateReport> {
    check_shape(design, y)?;
    if design.uhat().is_none() {
        return Err(Error::Config("bias correction needs a latent block".into()));
    }
    if omega.d != design.d() || omega.q != design.q() {
        return Err(Error::Dimension(format!(
            "Omega is laid out for d={}, q={} but the design has d={}, q={}",
            omega.d,
            omega.q,
            design.d(),
            design.q()
        )));
    }
    if omega.matrix.iter().all(|&v| v == 0.0) {
        let mut rep = fit_ols(design, y)?;
        rep.method = Method::BiasCorrected;
        return Ok(rep);
    }
    let x = design.full();
    let n = x.nrows();
    let p = x.ncols();
    let gram = x.transpose() * &x;
    check_conditioning(&x, &gram, &design.labels())?;
    let corrected = symmetrize(&(&gram - &omega.matrix));
    let condition = condition_number_sym(&corrected);
    let inv = spd_inverse(&corrected).ok_or(Error::OverCorrected)?;
    if !(condition < MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let yv = DVector::from_column_slice(y);
    let coef = &inv * (x.transpose() * &yv);
    let resid = &yv - &x * &coef;
    let rss = resid.norm_squared();
    let me = (coef.transpose() * &omega.matrix * &coef)[(0, 0)];
    let sigma2 = if rss - me > 0.0 { (rss - me) / (n - p) as f64 } else { rss / (n - p) as f64 };
    let cov = &inv * &gram * &inv * sigma2;
    let se = (0..p).map(|k| cov[(k, k)].max(0.0).sqrt()).collect();
    Ok(EstimateReport::build(Method::BiasCorrected, design, coef.iter().copied().collect(), se, condition))
}

pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn is_binary(col: nalgebra::DVectorView<'_, f64>) -> bool {
    col.iter().all(|&v| v == 0.0 || v == 1.0)
}

/// Logistic regression by IRLS, reported as average marginal effects.
///
/// Continuous columns: `mean_i p_i(1 − p_i) · b_k`. Binary columns: mean
/// difference of fitted probabilities with the column set to 1 and to 0.
/// Standard errors by the delta method on the inverse Fisher information.
pub fn fit_logistic_ame(design: &DesignMatrix, s: &[f64]) -> Result<EstimateReport> {
    check_shape(design, s)?;
    if s.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Config("logistic outcome must be 0/1".into()));
    }
    let ones = s.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == s.len() {
        return Err(Error::Config("logistic outcome needs both classes".into()));
    }
    let x = design.full();
    let n = x.nrows();
    let p = x.ncols();
    let gram = x.transpose() * &x;
    let condition = check_conditioning(&x, &gram, &design.labels())?;
    let sv = DVector::from_column_slice(s);

    let mut beta = DVector::zeros(p);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=IRLS_MAX_ITERS {
        iterations = it;
        let eta = &x * &beta;
        let prob = eta.map(logistic);
        let wts = prob.map(|q| q * (1.0 - q));
        let xw = DMatrix::from_fn(n, p, |i, j| x[(i, j)] * wts[i]);
        let info = symmetrize(&(x.transpose() * xw));
        let score = x.transpose() * (&sv - &prob);
        let Some(chol) = info.clone().cholesky() else {
            return Err(Error::Separation { iterations: it });
        };
        let step = chol.solve(&score);
        beta += &step;
        if beta.amax() > 1e6 {
            return Err(Error::Separation { iterations: it });
        }
        if step.amax() < IRLS_TOL {
            converged = true;
            break;
        }
    }
    let eta = &x * &beta;
    let prob = eta.map(logistic);
    let deviance: f64 = -2.0
        * s.iter()
            .zip(prob.iter())
            .map(|(&y, &q)| if y == 1.0 { q.max(1e-300).ln() } else { (1.0 - q).max(1e-300).ln() })
            .sum::<f64>();
    if deviance < 1e-6 {
        return Err(Error::Separation { iterations });
    }
    if !converged {
        return Err(Error::NoConvergence { iterations });
    }
    let wts = prob.map(|q| q * (1.0 - q));
    let xw = DMatrix::from_fn(n, p, |i, j| x[(i, j)] * wts[i]);
    let info = symmetrize(&(x.transpose() * xw));
    let cov = spd_inverse(&info).ok_or(Error::Separation { iterations })?;

    let mean_w = wts.sum() / n as f64;
    let intercept = design.has_intercept().then(|| design.d());
    let mut ame = Vec::with_capacity(p);
    let mut se = Vec::with_capacity(p);
    for k in 0..p {
        let (effect, grad) = if Some(k) == intercept {
            let mut g = DVector::zeros(p);
            g[k] = 1.0;
            (beta[k], g)
        } else if is_binary(x.column(k)) {
            let mut effect = 0.0;
            let mut g = DVector::zeros(p);
            for i in 0..n {
                let mut row = x.row(i).transpose();
                row[k] = 1.0;
                let e1 = row.dot(&beta);
                let p1 = logistic(e1);
                g += &row * (p1 * (1.0 - p1));
                row[k] = 0.0;
                let p0 = logistic(row.dot(&beta));
                g -= &row * (p0 * (1.0 - p0));
                effect += p1 - p0;
            }
            (effect / n as f64, g / n as f64)
        } else {
            // d/db [b_k · mean w_i] = e_k · mean w + b_k · mean(w_i (1 − 2p_i) x_i)
            let mut g = DVector::zeros(p);
            for i in 0..n {
                g += x.row(i).transpose() * (wts[i] * (1.0 - 2.0 * prob[i]));
            }
            g *= beta[k] / n as f64;
            g[k] += mean_w;
            (beta[k] * mean_w, g)
        };
        ame.push(effect);
        se.push((grad.transpose() * &cov * &grad)[(0, 0)].max(0.0).sqrt());
    }
    let mut rep = EstimateReport::build(Method::LogisticAme, design, ame, se, condition);
    rep.raw_coefficients = Some(beta.iter().copied().collect());
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn toy(n: usize, seed: u64) -> (DesignMatrix, Vec<f64>) {
        let mut rng = rng_from_seed(seed);
        let w = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { rng.random::<f64>() });
        let u = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>());
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let e: f64 = StandardNormal.sample(&mut rng);
                1.0 + 2.0 * w[(i, 1)] - 0.5 * w[(i, 2)] + 0.7 * u[(i, 0)] + 1.5 * u[(i, 1)] + 0.1 * e
            })
            .collect();
        let d = DesignMatrix::new(w, vec!["intercept".into(), "peer".into(), "z".into()], Some(u), vec![1]).unwrap();
        (d, y)
    }

    #[test]
    fn exact_linear_data_is_recovered() {
        let (design, _) = toy(50, 1);
        let truth = [0.7, 1.5, 1.0, 2.0, -0.5];
        let x = design.full();
        let y: Vec<f64> = (x * DVector::from_column_slice(&truth)).iter().copied().collect();
        let rep = fit_ols(&design, &y).unwrap();
        for (c, t) in rep.coefficients.iter().zip(truth) {
            assert!((c - t).abs() < 1e-10);
        }
        assert!(rep.std_errors.iter().all(|&s| s < 1e-10));
        assert_eq!(rep.rho, Some(rep.coefficients[3]));
        assert_eq!(rep.labels, vec!["u1", "u2", "intercept", "peer", "z"]);
        assert_eq!(rep.method, Method::HomophilyOls);
        assert_eq!(fit_ols(&design.without_latent(), &y).unwrap().method, Method::Ols);
    }

    #[test]
    fn collinear_columns_are_named() {
        let (design, y) = toy(30, 2);
        let mut w = design.w().clone();
        let dup = w.column(1) * 2.0;
        w.column_mut(2).copy_from(&dup);
        let bad = DesignMatrix::new(w, vec!["intercept".into(), "peer".into(), "copy".into()], None, vec![1]).unwrap();
        match fit_ols(&bad, &y) {
            Err(Error::Collinear { columns }) => assert_eq!(columns, vec!["copy".to_string()]),
            other => panic!("expected collinearity error, got {other:?}"),
        }
    }

    #[test]
    fn design_validation() {
        let w = DMatrix::from_element(5, 2, 0.5);
        assert!(DesignMatrix::new(w, vec!["a".into(), "b".into()], None, vec![]).is_err());
        let mut w = DMatrix::from_element(5, 2, 1.0);
        w[(2, 1)] = f64::NAN;
        assert!(DesignMatrix::new(w, vec!["a".into(), "b".into()], None, vec![]).is_err());
        let w = DMatrix::from_element(5, 2, 1.0);
        assert!(DesignMatrix::new(w.clone(), vec!["a".into()], None, vec![]).is_err());
        assert!(DesignMatrix::new(w, vec!["a".into(), "b".into()], None, vec![0]).is_err());
    }

    #[test]
    fn zero_omega_is_ols() {
        let (design, y) = toy(80, 3);
        let a = fit_ols(&design, &y).unwrap();
        let b = fit_bias_corrected(&design, &y, &OmegaMatrix::zeros(2, 3)).unwrap();
        for (x, z) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((x - z).abs() <= 1e-12);
        }
        for (x, z) in a.std_errors.iter().zip(&b.std_errors) {
            assert!((x - z).abs() <= 1e-12);
        }
    }

    #[test]
    fn small_omega_moves_estimate_continuously() {
        let (design, y) = toy(80, 4);
        let base = fit_ols(&design, &y).unwrap();
        let mut prev = 0.0;
        for &eps in &[1e-6, 1e-5, 1e-4] {
            let mut om = OmegaMatrix::zeros(2, 3);
            om.matrix[(0, 0)] = eps;
            om.matrix[(1, 1)] = eps;
            let c = fit_bias_corrected(&design, &y, &om).unwrap();
            let diff: f64 = c.coefficients.iter().zip(&base.coefficients).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(diff < 1e3 * eps, "diff {diff} at eps {eps}");
            assert!(diff > prev);
            prev = diff;
        }
    }

    #[test]
    fn over_correction_is_an_error() {
        let (design, y) = toy(40, 5);
        let mut om = OmegaMatrix::zeros(2, 3);
        om.matrix[(0, 0)] = 1e6;
        assert!(matches!(fit_bias_corrected(&design, &y, &om), Err(Error::OverCorrected)));
        assert!(fit_bias_corrected(&design.without_latent(), &y, &om).is_err());
        assert!(matches!(
            fit_bias_corrected(&design, &y, &OmegaMatrix::zeros(1, 3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn scale_equivariance_and_row_permutation() {
        let (design, y) = toy(60, 6);
        let mut om = OmegaMatrix::zeros(2, 3);
        om.matrix[(0, 0)] = 0.05;
        om.matrix[(1, 1)] = 0.03;
        let base = fit_bias_corrected(&design, &y, &om).unwrap();
        let y3: Vec<f64> = y.iter().map(|v| v * 3.0).collect();
        let scaled = fit_bias_corrected(&design, &y3, &om).unwrap();
        for k in 0..5 {
            assert!((scaled.coefficients[k] - 3.0 * base.coefficients[k]).abs() < 1e-10);
            assert!((scaled.std_errors[k] - 3.0 * base.std_errors[k]).abs() < 1e-10);
        }
        let order: Vec<usize> = (0..60).rev().collect();
        let yp: Vec<f64> = order.iter().map(|&i| y[i]).collect();
        let perm = fit_bias_corrected(&design.select_rows(&order), &yp, &om).unwrap();
        for k in 0..5 {
            assert!((perm.coefficients[k] - base.coefficients[k]).abs() < 1e-10);
        }
    }

    fn logistic_data(n: usize, coef: &[f64], seed: u64) -> (DesignMatrix, Vec<f64>) {
        let mut rng = rng_from_seed(seed);
        let w = DMatrix::from_fn(n, 3, |_, j| match j {
            0 => 1.0,
            1 => rng.random::<f64>(),
            _ => (rng.random::<f64>() < 0.5) as u8 as f64,
        });
        let s: Vec<f64> = (0..n)
            .map(|i| {
                let eta: f64 = (0..3).map(|j| coef[j] * w[(i, j)]).sum();
                (rng.random::<f64>() < logistic(eta)) as u8 as f64
            })
            .collect();
        (DesignMatrix::new(w, vec!["intercept".into(), "peer".into(), "white".into()], None, vec![1]).unwrap(), s)
    }

    #[test]
    fn intercept_only_logistic_matches_sample_mean() {
        let s: Vec<f64> = (0..40).map(|i| (i % 4 != 0) as u8 as f64).collect();
        let w = DMatrix::from_element(40, 1, 1.0);
        let d = DesignMatrix::new(w, vec!["intercept".into()], None, vec![]).unwrap();
        let rep = fit_logistic_ame(&d, &s).unwrap();
        let fitted = rep.predict(&d).unwrap();
        assert!((fitted[0] - 0.75).abs() < 1e-10);
    }

    #[test]
    fn zero_coefficient_has_zero_ame() {
        let (design, s) = logistic_data(500, &[0.5, 1.0, -0.5], 7);
        let rep = fit_logistic_ame(&design, &s).unwrap();
        let raw = rep.raw_coefficients.clone().unwrap();
        // AME is linear in the coefficient for continuous columns.
        let mean_w: f64 = {
            let eta = design.full() * DVector::from_vec(raw.clone());
            eta.iter().map(|&e| logistic(e) * (1.0 - logistic(e))).sum::<f64>() / 500.0
        };
        assert!((rep.coefficients[1] - raw[1] * mean_w).abs() < 1e-12);
        let ame_at_zero = 0.0 * mean_w;
        assert_eq!(ame_at_zero, 0.0);
    }

    #[test]
    fn logistic_rejects_bad_outcomes() {
        let (design, _) = logistic_data(50, &[0.0, 1.0, 0.0], 8);
        assert!(fit_logistic_ame(&design, &vec![1.0; 50]).is_err());
        assert!(fit_logistic_ame(&design, &vec![0.5; 50]).is_err());
        // Outcome perfectly determined by the peer column.
        let s: Vec<f64> = (0..50).map(|i| (design.w()[(i, 1)] > 0.5) as u8 as f64).collect();
        assert!(matches!(fit_logistic_ame(&design, &s), Err(Error::Separation { .. })));
    }

    #[test]
    fn ames_match_oracle_from_true_coefficients() {
        let truth = [0.3, 1.2, -0.8];
        let n = 2000;
        let (design, s) = logistic_data(n, &truth, 9);
        let rep = fit_logistic_ame(&design, &s).unwrap();
        let x = design.full();
        let eta = &x * DVector::from_column_slice(&truth);
        let mean_w = eta.iter().map(|&e| logistic(e) * (1.0 - logistic(e))).sum::<f64>() / n as f64;
        let oracle_peer = truth[1] * mean_w;
        let oracle_white = (0..n)
            .map(|i| {
                let base = truth[0] + truth[1] * x[(i, 1)];
                logistic(base + truth[2]) - logistic(base)
            })
            .sum::<f64>()
            / n as f64;
        assert!((rep.coefficients[1] - oracle_peer).abs() < 3.0 * rep.std_errors[1]);
        assert!((rep.coefficients[2] - oracle_white).abs() < 3.0 * rep.std_errors[2]);
        assert_eq!(rep.rho, Some(rep.coefficients[1]));
    }

    #[test]
    fn report_serialises() {
        let (design, y) = toy(30, 10);
        let rep = fit_ols(&design, &y).unwrap();
        let json = rep.to_json().unwrap();
        let back: EstimateReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.labels, rep.labels);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("method,n_obs,condition_number,u1,u1_se"));
    }
}
