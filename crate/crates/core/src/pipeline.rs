//! End-to-end estimation on a TC unit: events to graph, graph to embedding,
//! embedding to Ω, and the family of outcome regressions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::embed::{ase, select_dim_auc, AucCurve, AucOptions, Embedding};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::mecov::{assemble_omega_rows, delta_rdpg, delta_sbm, CovVariant, NodeCovariances, OmegaMatrix};
use crate::peerlm::{fit_bias_corrected, fit_logistic_ame, fit_ols, DesignMatrix, EstimateReport};
use crate::rng::sub_seed;
use crate::tcdata::{
    build_adjacency, exposure_by_race, exposure_def1, exposure_def2, exposure_weights, EventLog, ExposureVector,
    ResidentTable, TieWeights,
};

pub const DEFAULT_D: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Definition {
    #[default]
    Def1,
    Def2,
}

impl std::str::FromStr for Definition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "def1" => Ok(Definition::Def1),
            "def2" => Ok(Definition::Def2),
            other => Err(Error::Config(format!("unknown exposure definition {other:?}, expected def1 or def2"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    /// Embedding dimension; ignored when `select_d` is set.
    pub d: usize,
    pub select_d: bool,
    pub d_candidates: Vec<usize>,
    pub cov: CovVariant,
    pub k_clusters: usize,
    pub definition: Definition,
    pub binarize: bool,
    pub race_interactions: bool,
    pub logistic: bool,
    pub tie_weights: TieWeights,
    pub seed: u64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            d: DEFAULT_D,
            select_d: false,
            d_candidates: (1..=8).collect(),
            cov: CovVariant::RdpgPlugin,
            k_clusters: 2,
            definition: Definition::Def1,
            binarize: false,
            race_interactions: false,
            logistic: false,
            tie_weights: TieWeights::Summed,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub n: usize,
    pub edges: usize,
    pub density: f64,
    pub mean_degree: f64,
    pub total_weight: f64,
}

impl GraphSummary {
    pub fn of(graph: &Graph) -> Self {
        let degrees = graph.degrees();
        let n = graph.n();
        Self {
            n,
            edges: graph.edge_count(),
            density: graph.density(),
            mean_degree: if n == 0 { 0.0 } else { degrees.iter().sum::<f64>() / n as f64 },
            total_weight: degrees.iter().sum::<f64>() / 2.0,
        }
    }
}

/// One fitted specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecReport {
    pub name: String,
    pub definition: String,
    pub binarized: bool,
    pub report: EstimateReport,
}

/// Everything the cascade needs to re-fit the main specification.
#[derive(Debug, Clone)]
pub struct FittedUnit {
    pub weights: DMatrix<f64>,
    pub embedding: Embedding,
    pub covariances: NodeCovariances,
    pub rows: Vec<usize>,
    pub model: EstimateReport,
}

#[derive(Debug, Clone)]
pub struct EstimateOutput {
    pub d: usize,
    pub graph: GraphSummary,
    pub auc_curve: Option<AucCurve>,
    pub exposures: Vec<ExposureVector>,
    pub specs: Vec<SpecReport>,
    pub unit: FittedUnit,
}

const BASE_COLUMNS: [&str; 5] = ["intercept", "peer_grad", "age", "white", "lsi"];
const RACE_COLUMNS: [&str; 8] = [
    "intercept",
    "peer_grad_white",
    "peer_grad_nonwhite",
    "peer_grad_white_x_white",
    "peer_grad_nonwhite_x_white",
    "age",
    "white",
    "lsi",
];

fn labels(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

/// `[1, exposure, age, white, lsi]` on `rows`, with the latent block when given.
pub fn tc_design(
    residents: &ResidentTable,
    exposure: &[Option<f64>],
    rows: &[usize],
    uhat: Option<&DMatrix<f64>>,
) -> Result<DesignMatrix> {
    let mut w = DMatrix::zeros(rows.len(), BASE_COLUMNS.len());
    for (k, &i) in rows.iter().enumerate() {
        let r = &residents.residents[i];
        let e = exposure[i].ok_or_else(|| Error::Config(format!("resident {} has no exposure", r.id)))?;
        w.row_mut(k).copy_from_slice(&[1.0, e, r.age, r.white as f64, r.lsi]);
    }
    DesignMatrix::new(w, labels(&BASE_COLUMNS), uhat.map(|u| u.select_rows(rows)), vec![1])
}

/// Race-split design: both exposures, their interactions with the resident's
/// own white indicator, and the covariates.
pub fn tc_race_design(
    residents: &ResidentTable,
    white: &[Option<f64>],
    nonwhite: &[Option<f64>],
    rows: &[usize],
    uhat: Option<&DMatrix<f64>>,
) -> Result<DesignMatrix> {
    let mut w = DMatrix::zeros(rows.len(), RACE_COLUMNS.len());
    for (k, &i) in rows.iter().enumerate() {
        let r = &residents.residents[i];
        let (Some(ew), Some(en)) = (white[i], nonwhite[i]) else {
            return Err(Error::Config(format!("resident {} lacks a race-split exposure", r.id)));
        };
        let own = r.white as f64;
        w.row_mut(k).copy_from_slice(&[1.0, ew, en, ew * own, en * own, r.age, own, r.lsi]);
    }
    DesignMatrix::new(w, labels(&RACE_COLUMNS), uhat.map(|u| u.select_rows(rows)), vec![1, 2, 3, 4])
}

fn present(vs: &[&ExposureVector]) -> Vec<usize> {
    let n = vs[0].values.len();
    (0..n).filter(|&i| vs.iter().all(|v| v.values[i].is_some())).collect()
}

fn outcomes(residents: &ResidentTable, rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&i| residents.residents[i].graduated as f64).collect()
}

fn covariances(emb: &Embedding, opts: &EstimateOptions) -> Result<NodeCovariances> {
    match opts.cov {
        CovVariant::RdpgPlugin => delta_rdpg(emb),
        CovVariant::SbmCluster => delta_sbm(emb, opts.k_clusters, sub_seed(opts.seed, 1)),
    }
}

fn omega_for(cov: &NodeCovariances, rows: &[usize], design: &DesignMatrix) -> OmegaMatrix {
    assemble_omega_rows(cov, rows, design.q())
}

fn exposure_for(def: Definition, residents: &ResidentTable, weights: &DMatrix<f64>) -> ExposureVector {
    match def {
        Definition::Def1 => exposure_def1(residents, weights),
        Definition::Def2 => exposure_def2(residents, weights),
    }
}

/// Choose the dimension (fixed or by held-out AUC), embed, and estimate the
/// embedding-error covariances.
pub fn embed_unit(graph: &Graph, opts: &EstimateOptions) -> Result<(usize, Option<AucCurve>, Embedding, NodeCovariances)> {
    let (d, curve) = if opts.select_d {
        let candidates: Vec<usize> = opts.d_candidates.iter().copied().filter(|&d| d <= graph.n()).collect();
        let aopts = AucOptions { seed: sub_seed(opts.seed, 0), ..AucOptions::default() };
        let curve = select_dim_auc(graph, &candidates, &aopts)?;
        (curve.chosen_d, Some(curve))
    } else {
        (opts.d, None)
    };
    let emb = ase(graph, d)?;
    let cov = covariances(&emb, opts)?;
    Ok((d, curve, emb, cov))
}

pub fn run_estimate(residents: &ResidentTable, log: &EventLog, opts: &EstimateOptions) -> Result<EstimateOutput> {
    let graph = build_adjacency(log, residents, false)?;
    let weights = exposure_weights(log, residents, opts.tie_weights, false)?;
    let (d, auc_curve, emb, cov) = embed_unit(&graph, opts)?;
    let def_name = match opts.definition {
        Definition::Def1 => "def1",
        Definition::Def2 => "def2",
    };

    let exposure = exposure_for(opts.definition, residents, &weights);
    let rows = present(&[&exposure]);
    let y = outcomes(residents, &rows);
    let plain = tc_design(residents, &exposure.values, &rows, None)?;
    let latent = tc_design(residents, &exposure.values, &rows, Some(&emb.uhat))?;
    let omega = omega_for(&cov, &rows, &latent);
    let spec = |name: &str, binarized: bool, report: EstimateReport| SpecReport {
        name: name.to_string(),
        definition: def_name.to_string(),
        binarized,
        report,
    };
    let corrected = fit_bias_corrected(&latent, &y, &omega)?;
    let mut specs = vec![
        spec("ols", false, fit_ols(&plain, &y)?),
        spec("homophily-ols", false, fit_ols(&latent, &y)?),
        spec("bias-corrected", false, corrected.clone()),
    ];
    let mut exposures = vec![exposure.clone()];

    if opts.logistic {
        specs.push(spec("logistic-ame", false, fit_logistic_ame(&latent, &y)?));
    }

    if opts.race_interactions {
        let (white, nonwhite) = exposure_by_race(residents, &weights);
        let race_rows = present(&[&white, &nonwhite]);
        let yr = outcomes(residents, &race_rows);
        let design = tc_race_design(residents, &white.values, &nonwhite.values, &race_rows, Some(&emb.uhat))?;
        let om = omega_for(&cov, &race_rows, &design);
        let mut s = spec("race-bias-corrected", false, fit_bias_corrected(&design, &yr, &om)?);
        s.definition = "def1-race".into();
        specs.push(s);
        exposures.push(white);
        exposures.push(nonwhite);
    }

    if opts.binarize {
        let graph_b = graph.binarized();
        let weights_b = weights.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let emb_b = ase(&graph_b, d)?;
        let cov_b = covariances(&emb_b, opts)?;
        let exp_b = exposure_for(opts.definition, residents, &weights_b);
        let rows_b = present(&[&exp_b]);
        let yb = outcomes(residents, &rows_b);
        let design = tc_design(residents, &exp_b.values, &rows_b, Some(&emb_b.uhat))?;
        let om = omega_for(&cov_b, &rows_b, &design);
        specs.push(spec("bias-corrected-binarized", true, fit_bias_corrected(&design, &yb, &om)?));
        exposures.push(exp_b);
    }

    Ok(EstimateOutput {
        d,
        graph: GraphSummary::of(&graph),
        auc_curve,
        exposures,
        specs,
        unit: FittedUnit { weights, embedding: emb, covariances: cov, rows, model: corrected },
    })
}
