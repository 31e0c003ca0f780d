use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rolemodel::counterfact::{median_positive_weight, run_cascade, write_summary_csv, InterventionConfig, Targeting};
use rolemodel::embed::AucCurve;
use rolemodel::graph::Graph;
use rolemodel::mecov::CovVariant;
use rolemodel::pipeline::{embed_unit, run_estimate, Definition, EstimateOptions, GraphSummary};
use rolemodel::simlab::{run_study, Study, StudyConfig};
use rolemodel::tcdata::{
    build_adjacency, generate_synthetic, write_exposures, EventKind, EventLog, ResidentTable, SyntheticConfig,
    TieWeights,
};
use rolemodel::{Error, Result};
use serde::Serialize;

use crate::{
    CounterfactualArgs, CovArg, DefinitionArg, EmbedArgs, EmbedOptions, EstimateArgs, GenSyntheticArgs, SimulateArgs,
    StudyArg,
};

/// Collects the files a command writes so the manifest can list them.
struct OutDir {
    dir: PathBuf,
    files: Vec<String>,
    started: Instant,
}

impl OutDir {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new(), started: Instant::now() })
    }

    fn write<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(File::create(&path)?);
        f(&mut w)?;
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    fn finish<C: Serialize>(mut self, command: &str, seed: u64, config: &C, timing: bool) -> Result<()> {
        let mut manifest = serde_json::json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": seed,
            "config": config,
            "outputs": self.files,
        });
        if timing {
            manifest["wall_time_secs"] = serde_json::json!(self.started.elapsed().as_secs_f64());
        }
        self.write_json("manifest.json", &manifest)
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(BufReader::new(File::open(path)?))
}

/// Attach the file name to row-level parse errors.
fn in_file(path: &Path, err: Error) -> Error {
    match err {
        Error::Row { .. } | Error::Csv(_) | Error::Io(_) => {
            Error::Data { path: path.display().to_string(), message: err.to_string() }
        }
        other => other,
    }
}

fn load_unit(residents: &Path, events: &Path) -> Result<(ResidentTable, EventLog)> {
    let res = ResidentTable::read_csv(open(residents)?).map_err(|e| in_file(residents, e))?;
    let log = EventLog::read_csv(open(events)?, EventKind::Affirmations).map_err(|e| in_file(events, e))?;
    log.resolve(&res).map_err(|e| in_file(events, e))?;
    Ok((res, log))
}

fn cov_variant(c: CovArg) -> CovVariant {
    match c {
        CovArg::Rdpg => CovVariant::RdpgPlugin,
        CovArg::Sbm => CovVariant::SbmCluster,
    }
}

fn estimate_options(e: &EmbedOptions, seed: u64) -> EstimateOptions {
    EstimateOptions {
        d: e.d,
        select_d: e.select_d,
        cov: cov_variant(e.cov),
        k_clusters: e.k_clusters,
        tie_weights: if e.sender_only { TieWeights::SenderOnly } else { TieWeights::Summed },
        seed,
        ..EstimateOptions::default()
    }
}

fn write_auc(out: &mut OutDir, curve: &Option<AucCurve>) -> Result<()> {
    if let Some(c) = curve {
        out.write("auc_curve.csv", |w| c.write_csv(w))?;
    }
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let study = match a.study {
        StudyArg::A => Study::A,
        StudyArg::B => Study::B,
        StudyArg::C => Study::C,
        StudyArg::D => Study::D,
    };
    let mut cfg = StudyConfig::new(study, a.common.seed);
    cfg.reps = a.reps;
    if let Some(s) = &a.sweep {
        cfg.sweep = s.clone();
    }
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(k) = a.k_clusters {
        cfg.k_clusters = k;
    }
    if let Some(c) = a.cov {
        cfg.cov = cov_variant(c);
    }
    cfg.include_oracle = a.oracle;
    cfg.intercept = a.intercept;
    cfg.validate()?;

    let mut out = OutDir::create(&a.common.out)?;
    let table = run_study(&cfg)?;
    out.write("bias_table.csv", |w| table.write_csv(w))?;
    out.write_json("study.json", &serde_json::json!({ "study": cfg, "resampled": table.resampled }))?;
    out.finish("simulate", a.common.seed, a, a.common.timing)
}

pub fn embed(a: &EmbedArgs) -> Result<()> {
    let graph = match (&a.graph, &a.residents, &a.events) {
        (Some(g), _, _) => Graph::read_dense(open(g)?).map_err(|e| in_file(g, e))?,
        (None, Some(r), Some(e)) => {
            let (res, log) = load_unit(r, e)?;
            build_adjacency(&log, &res, false)?
        }
        _ => return Err(Error::Config("embed needs --graph or both --residents and --events".into())),
    };
    let graph = if a.binarize { graph.binarized() } else { graph };
    let opts = estimate_options(&a.embed, a.common.seed);

    let mut out = OutDir::create(&a.common.out)?;
    let (d, curve, emb, cov) = embed_unit(&graph, &opts)?;
    out.write("embedding.csv", |w| emb.write_csv(w))?;
    out.write("covariances.csv", |w| cov.write_csv(w))?;
    write_auc(&mut out, &curve)?;
    out.write_json(
        "embed_summary.json",
        &serde_json::json!({
            "d": d,
            "graph": GraphSummary::of(&graph),
            "singular_values": emb.singular_values,
            "cluster_assignments": cov.cluster_assignments,
        }),
    )?;
    out.finish("embed", a.common.seed, a, a.common.timing)
}

pub fn estimate(a: &EstimateArgs) -> Result<()> {
    let (res, log) = load_unit(&a.input.residents, &a.input.events)?;
    let opts = EstimateOptions {
        definition: match a.definition {
            DefinitionArg::Def1 => Definition::Def1,
            DefinitionArg::Def2 => Definition::Def2,
        },
        binarize: a.binarize,
        race_interactions: a.race_interactions,
        logistic: a.logistic,
        ..estimate_options(&a.embed, a.common.seed)
    };

    let mut out = OutDir::create(&a.common.out)?;
    let est = run_estimate(&res, &log, &opts)?;
    for spec in &est.specs {
        out.write(&format!("{}.csv", spec.name), |w| spec.report.write_csv(w))?;
    }
    out.write_json("estimates.json", &est.specs)?;
    let refs: Vec<_> = est.exposures.iter().collect();
    out.write("exposures.csv", |w| write_exposures(&refs, &res, w))?;
    write_auc(&mut out, &est.auc_curve)?;
    out.write_json("graph_summary.json", &serde_json::json!({ "d": est.d, "graph": est.graph }))?;
    out.finish("estimate", a.common.seed, a, a.common.timing)
}

pub fn counterfactual(a: &CounterfactualArgs) -> Result<()> {
    let (res, log) = load_unit(&a.input.residents, &a.input.events)?;
    let opts = estimate_options(&a.embed, a.common.seed);
    if a.cutoff_percentile.is_empty() && !a.true_failures {
        return Err(Error::Config("nothing to do: give --cutoff-percentile or --true-failures".into()));
    }

    let mut out = OutDir::create(&a.common.out)?;
    let est = run_estimate(&res, &log, &opts)?;
    let buddy_weight = match a.buddy_weight {
        Some(w) => w,
        None => median_positive_weight(&est.unit.weights)
            .ok_or_else(|| Error::Config("network has no positive tie weights; pass --buddy-weight".into()))?,
    };

    let mut targets: Vec<Targeting> = a.cutoff_percentile.iter().map(|&p| Targeting::LsiPercentile(p)).collect();
    if a.true_failures {
        targets.push(Targeting::TrueFailures);
    }
    let mut reports = Vec::with_capacity(targets.len());
    for t in targets {
        let cfg = InterventionConfig { targeting: t, buddy_weight, threshold_grid: a.grid_step, seed: a.common.seed };
        let report = run_cascade(&res, &est.unit, &cfg)?;
        let file = match t {
            Targeting::TrueFailures => "cascade_true_failures.json".to_string(),
            Targeting::LsiPercentile(p) => format!("cascade_lsi_p{p}.json"),
        };
        out.write_json(&file, &report)?;
        reports.push(report);
    }
    out.write("cascade_summary.csv", |w| write_summary_csv(&reports, w))?;
    out.write("model.csv", |w| est.unit.model.write_csv(w))?;
    out.finish("counterfactual", a.common.seed, a, a.common.timing)
}

pub fn gen_synthetic(a: &GenSyntheticArgs) -> Result<()> {
    let cfg = SyntheticConfig {
        n_residents: a.n_residents,
        expected_events: a.expected_events,
        rho: a.rho,
        seed: a.common.seed,
        ..SyntheticConfig::default()
    };
    let mut out = OutDir::create(&a.common.out)?;
    let unit = generate_synthetic(&cfg)?;
    out.write("residents.csv", |w| unit.residents.write_csv(w))?;
    out.write("events.csv", |w| unit.events.write_csv(w))?;
    out.write("communities.csv", |w| {
        writeln!(w, "id,community")?;
        for (r, c) in unit.residents.residents.iter().zip(&unit.community) {
            writeln!(w, "{},{c}", r.id)?;
        }
        Ok(())
    })?;
    out.finish("gen-synthetic", a.common.seed, a, a.common.timing)
}
