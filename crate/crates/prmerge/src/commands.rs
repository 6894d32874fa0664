//! Pipeline stages behind the subcommands.

use std::path::{Path, PathBuf};
use std::time::Duration;

use prmerge_core::features::{build_dataset, build_open, FeatureSchema, FeatureTable, SchemaMode};
use prmerge_core::forest::{fit, importance, partial_dependence, quantile_grid, tune, ForestParams, GridPoint};
use prmerge_core::metrics::{roc_curve, EvaluationReport};
use prmerge_core::pr::{PullRequestRecord, Timestamp};
use prmerge_core::{seed, Matrix};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::activity_io::load_events;
use crate::config::{Provenance, RunConfig};
use crate::error::{Error, Result};
use crate::ingest::{
    ingest_repo, FixtureTransport, IngestOptions, LiveTransport, Recorder, RepoRef, RepoSummary, Store, Transport,
};
use crate::matrix_io::{read_table, write_table};
use crate::model_io::{self, SavedModel};
use crate::report_io::{
    ranked_importance, read_json, write_json, write_roc_csv, ClassBalance, Report, TuneReport, TuneScore,
    REPORT_FORMAT, TUNE_FORMAT,
};
use crate::synth::{self, SynthMeta, SyntheticSpec};

pub const FEATURES_FILE: &str = "features.csv";
pub const FEATURES_META_FILE: &str = "features.json";
pub const MODEL_FILE: &str = "model.json";
pub const TUNE_FILE: &str = "tune.json";
pub const REPORT_FILE: &str = "report.json";
pub const ROC_FILE: &str = "roc.csv";
pub const PD_POINTS: usize = 25;

fn required<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Config(format!("missing {what} path")))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Debug, Clone, Default)]
pub struct IngestRequest {
    pub refresh: bool,
    pub max_pages: Option<u32>,
    /// Append every live exchange to this fixture file.
    pub record: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestSummary {
    pub repos: Vec<RepoSummary>,
}

fn ingest_repos(cfg: &RunConfig) -> Result<Vec<(RepoRef, Vec<String>)>> {
    if cfg.ingest.repos.is_empty() {
        return Err(Error::Config("no repositories to ingest".into()));
    }
    cfg.ingest
        .repos
        .iter()
        .map(|r| Ok((RepoRef::parse(&r.repo)?, r.packages.clone())))
        .collect()
}

/// Ingests the configured repositories from fixtures or the live API.
pub fn cmd_ingest(cfg: &RunConfig, req: &IngestRequest) -> Result<IngestSummary> {
    let repos = ingest_repos(cfg)?;
    required(&cfg.store, "store")?;
    match &cfg.ingest.fixtures {
        Some(dir) => {
            let transport = FixtureTransport::load(dir)?;
            cmd_ingest_with(cfg, req, &repos, &transport, &mut |_| {})
        }
        None => {
            let live = LiveTransport::from_env()?;
            let transport: Box<dyn Transport> = match &req.record {
                Some(path) => Box::new(Recorder::new(live, path)?),
                None => Box::new(live),
            };
            cmd_ingest_with(cfg, req, &repos, &transport, &mut std::thread::sleep)
        }
    }
}

pub fn cmd_ingest_with(
    cfg: &RunConfig,
    req: &IngestRequest,
    repos: &[(RepoRef, Vec<String>)],
    transport: &dyn Transport,
    sleep: &mut dyn FnMut(Duration),
) -> Result<IngestSummary> {
    let store = Store::create(required(&cfg.store, "store")?)?;
    let opts = IngestOptions {
        api: cfg.ingest.api.clone(),
        refresh: req.refresh,
        max_pages: req.max_pages,
        ..IngestOptions::default()
    };
    let mut out = Vec::new();
    for (repo, packages) in repos {
        out.push(ingest_repo(transport, &store, repo, packages, &opts, sleep)?);
    }
    Ok(IngestSummary { repos: out })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturesMeta {
    pub provenance: Provenance,
    pub mode: SchemaMode,
    pub as_of: Timestamp,
    pub rows: usize,
    pub positive_rate: f64,
}

/// Latest timestamp mentioned by any record.
pub fn latest_timestamp(prs: &[PullRequestRecord]) -> Option<Timestamp> {
    prs.iter()
        .flat_map(|p| [Some(p.created_at), p.closed_at, p.merged_at])
        .flatten()
        .max()
}

/// Builds the feature matrix from a record store and activity file.
pub fn cmd_features(cfg: &RunConfig) -> Result<FeaturesMeta> {
    let store = Store::open(required(&cfg.store, "store")?)?;
    let activity_path = required(&cfg.activity, "activity")?;
    if !activity_path.exists() {
        return Err(Error::MissingArtifact(activity_path.to_path_buf()));
    }
    let out = required(&cfg.out, "output")?;
    let prs = store.read_all()?;
    let activity = load_events(activity_path)?;
    let as_of = match cfg.as_of.or_else(|| latest_timestamp(&prs)) {
        Some(t) => t,
        None => return Err(Error::Config("empty store and no --as-of".into())),
    };
    let vectors = build_dataset(&prs, &activity, as_of)?;
    let table = FeatureTable::from_vectors(&vectors, &FeatureSchema::new(cfg.mode));
    create_dir(out)?;
    write_table(&table, &out.join(FEATURES_FILE))?;
    let meta = FeaturesMeta {
        provenance: cfg.provenance(),
        mode: cfg.mode,
        as_of,
        rows: table.len(),
        positive_rate: table.positive_rate(),
    };
    write_json(&meta, &out.join(FEATURES_META_FILE))?;
    Ok(meta)
}

fn train_rows(cfg: &RunConfig, table: &FeatureTable) -> Result<(Vec<usize>, Vec<usize>)> {
    let split = cfg.split_plan().apply(&table.created_at)?;
    Ok((split.train, split.test))
}

/// Grid search over the training rows of the configured split.
pub fn cmd_tune(cfg: &RunConfig, matrix: &Path) -> Result<TuneReport> {
    let out = required(&cfg.out, "output")?;
    let table = read_table(matrix)?;
    let (mut rows, _) = train_rows(cfg, &table)?;
    if let Some(n) = cfg.tune.sample.filter(|&n| n < rows.len()) {
        let mut rng = seed::rng(cfg.seed, "tune-sample", 0);
        let mut picked: Vec<usize> = index::sample(&mut rng, rows.len(), n)
            .into_iter()
            .map(|k| rows[k])
            .collect();
        picked.sort_unstable();
        rows = picked;
    }
    let sub = table.subset(&rows);
    let base = cfg.forest_params(sub.schema.len())?;
    let result = tune(&sub.x, &sub.y, &base, &cfg.tune.grid, cfg.tune.folds)?;
    let report = TuneReport {
        format: TUNE_FORMAT.into(),
        provenance: cfg.provenance(),
        mode: table.schema.mode(),
        folds: cfg.tune.folds,
        rows: rows.len(),
        best: GridPoint {
            ntree: result.best.ntree,
            mtry: result.best.mtry,
        },
        best_accuracy: result.best_accuracy,
        scores: result
            .scores
            .iter()
            .map(|(g, a)| TuneScore {
                ntree: g.ntree,
                mtry: g.mtry,
                accuracy: *a,
            })
            .collect(),
    };
    create_dir(out)?;
    write_json(&report, &out.join(TUNE_FILE))?;
    Ok(report)
}

/// Fits a forest on the training rows; `tuned` supplies `ntree`/`mtry`.
pub fn cmd_train(cfg: &RunConfig, matrix: &Path, tuned: Option<&Path>) -> Result<SavedModel> {
    let out = required(&cfg.out, "output")?;
    let table = read_table(matrix)?;
    let mut params: ForestParams = cfg.forest_params(table.schema.len())?;
    if let Some(path) = tuned {
        let t: TuneReport = read_json(path)?;
        if t.mode != table.schema.mode() {
            return Err(Error::SchemaMismatch(format!(
                "tuned on `{}`, training on `{}`",
                t.mode.as_str(),
                table.schema.mode().as_str()
            )));
        }
        params.ntree = t.best.ntree;
        params.mtry = t.best.mtry;
    }
    let (rows, _) = train_rows(cfg, &table)?;
    let train = table.subset(&rows);
    let model = fit(&train.x, &train.y, &params, &train.schema.columns())?;
    let saved = SavedModel {
        model,
        schema: table.schema.clone(),
        provenance: cfg.provenance(),
        split: cfg.split_plan(),
    };
    create_dir(out)?;
    model_io::save(&saved, &out.join(MODEL_FILE))?;
    Ok(saved)
}

/// Scores the test rows of the model's own split.
pub fn cmd_evaluate(cfg: &RunConfig, model_path: &Path, matrix: &Path) -> Result<Report> {
    let out = required(&cfg.out, "output")?;
    let saved = model_io::load(model_path)?;
    let table = read_table(matrix)?;
    model_io::check_schema(&saved, &table.schema)?;
    let split = saved.split.apply(&table.created_at)?;
    let train = table.subset(&split.train);
    let test = table.subset(&split.test);
    let scores = saved.model.predict_matrix(&test.x)?;
    let metrics = EvaluationReport::evaluate(&scores, &test.y, cfg.threshold)?;
    let importance = match importance(&saved.model, &train.x, &train.y) {
        Ok(report) => ranked_importance(&report),
        Err(prmerge_core::Error::FingerprintMismatch | prmerge_core::Error::NoOutOfBag) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let report = Report {
        format: REPORT_FORMAT.into(),
        provenance: cfg.provenance(),
        mode: table.schema.mode(),
        split: saved.split.clone(),
        model_fingerprint: saved.model.fingerprint().to_string(),
        train: ClassBalance::of(&train.y),
        test: ClassBalance::of(&test.y),
        metrics,
        importance,
    };
    create_dir(out)?;
    write_json(&report, &out.join(REPORT_FILE))?;
    write_roc_csv(&roc_curve(&scores, &test.y)?, &out.join(ROC_FILE))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranked {
    pub pr_id: String,
    pub probability: f64,
}

/// Scores PRs open at `as_of`, most likely to be accepted first.
pub fn rank_open(
    saved: &SavedModel,
    prs: &[PullRequestRecord],
    activity: &impl prmerge_core::activity::ActivityProvider,
    as_of: Timestamp,
) -> Result<Vec<Ranked>> {
    let open = build_open(prs, activity, as_of)?;
    let mut ranked = open
        .iter()
        .map(|o| {
            Ok(Ranked {
                pr_id: o.pr_id.clone(),
                probability: saved.model.predict_proba(&saved.schema.project(&o.predictors))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| {
        b.probability
            .total_cmp(&a.probability)
            .then_with(|| a.pr_id.cmp(&b.pr_id))
    });
    Ok(ranked)
}

/// Writes `pr_id,probability` for every open PR. Returns the row count.
pub fn cmd_rank(cfg: &RunConfig, model_path: &Path, out_csv: &Path) -> Result<usize> {
    let saved = model_io::load(model_path)?;
    let store = Store::open(required(&cfg.store, "store")?)?;
    let activity_path = required(&cfg.activity, "activity")?;
    if !activity_path.exists() {
        return Err(Error::MissingArtifact(activity_path.to_path_buf()));
    }
    let as_of = cfg.as_of.ok_or_else(|| Error::Config("rank needs --as-of".into()))?;
    let ranked = rank_open(&saved, &store.read_all()?, &load_events(activity_path)?, as_of)?;
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["pr_id", "probability"])
            .map_err(|e| Error::io(out_csv, e.into()))?;
        for r in &ranked {
            w.write_record([r.pr_id.as_str(), &format!("{:?}", r.probability)])
                .map_err(|e| Error::io(out_csv, e.into()))?;
        }
        w.flush().map_err(|e| Error::io(out_csv, e))?;
    }
    if let Some(dir) = out_csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    crate::ingest::write_atomic(out_csv, &buf)?;
    Ok(ranked.len())
}

#[derive(Debug, Clone, Default)]
pub struct ExplainRequest {
    /// Feature names; empty means every model column.
    pub features: Vec<String>,
    pub points: Option<usize>,
    /// Average over a seeded sample of at most this many rows.
    pub max_rows: Option<usize>,
}

/// Writes `<feature>.csv` (`value,contribution`) per requested feature.
pub fn cmd_explain(cfg: &RunConfig, model_path: &Path, matrix: &Path, req: &ExplainRequest) -> Result<Vec<PathBuf>> {
    let out = required(&cfg.out, "output")?;
    let saved = model_io::load(model_path)?;
    let names: Vec<String> = if req.features.is_empty() {
        saved.model.columns().to_vec()
    } else {
        req.features.clone()
    };
    let columns = names
        .iter()
        .map(|n| saved.schema.index_of(n))
        .collect::<prmerge_core::Result<Vec<_>>>()?;
    let table = read_table(matrix)?;
    model_io::check_schema(&saved, &table.schema)?;
    if table.is_empty() {
        return Err(Error::Core(prmerge_core::Error::EmptyInput("explain matrix")));
    }
    let rows = explain_rows(&table.x, req.max_rows, cfg.seed);
    create_dir(out)?;
    let mut written = Vec::new();
    for (name, &j) in names.iter().zip(&columns) {
        let grid = quantile_grid(&table.x.column(j), req.points.unwrap_or(PD_POINTS));
        let curve = partial_dependence(&saved.model, &rows, j, &grid)?;
        let path = out.join(format!("{name}.csv"));
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(["value", "contribution"])
                .map_err(|e| Error::io(&path, e.into()))?;
            for (v, c) in curve.grid.iter().zip(&curve.contribution) {
                w.write_record([format!("{v:?}"), format!("{c:?}")])
                    .map_err(|e| Error::io(&path, e.into()))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        crate::ingest::write_atomic(&path, &buf)?;
        written.push(path);
    }
    Ok(written)
}

fn explain_rows(x: &Matrix, max_rows: Option<usize>, run_seed: u64) -> Matrix {
    match max_rows {
        Some(m) if m < x.n_rows() => {
            let mut rng = seed::rng(run_seed, "explain-rows", 0);
            let mut rows = index::sample(&mut rng, x.n_rows(), m).into_vec();
            rows.sort_unstable();
            x.select_rows(&rows)
        }
        _ => x.clone(),
    }
}

/// Generates and writes a synthetic corpus.
pub fn cmd_synth(spec: &SyntheticSpec, out: &Path) -> Result<SynthMeta> {
    let corpus = synth::generate(spec)?;
    synth::write_corpus(&corpus, out)
}
