//! Run configuration: a JSON file whose values command-line flags override.

use std::fs;
use std::path::{Path, PathBuf};

use prmerge_core::features::SchemaMode;
use prmerge_core::forest::{ForestParams, GridPoint};
use prmerge_core::metrics::SplitPlan;
use prmerge_core::pr::Timestamp;
use prmerge_core::seed;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::ApiConfig;

/// Forest settings; the forest seed is derived from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestSettings {
    pub ntree: usize,
    /// `floor(sqrt(p))` when absent.
    pub mtry: Option<usize>,
    pub min_node_size: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestSettings {
    fn default() -> Self {
        Self {
            ntree: 500,
            mtry: None,
            min_node_size: 1,
            max_depth: None,
            bootstrap: true,
        }
    }
}

/// Train/test division; a random split draws its seed from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitSpec {
    Random { train_fraction: f64 },
    Temporal { cutoff: Timestamp },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Random { train_fraction: 0.7 }
    }
}

impl SplitSpec {
    /// Parses `random:0.7` or `temporal:<unix seconds>`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "bad split `{s}`; expected random:<fraction> or temporal:<unix time>"
            ))
        };
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "random" => Ok(SplitSpec::Random {
                train_fraction: value.parse().map_err(|_| bad())?,
            }),
            "temporal" => Ok(SplitSpec::Temporal {
                cutoff: value.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }

    pub fn plan(&self, run_seed: u64) -> SplitPlan {
        match *self {
            SplitSpec::Random { train_fraction } => SplitPlan::Random {
                train_fraction,
                seed: seed::derive(run_seed, "split"),
            },
            SplitSpec::Temporal { cutoff } => SplitPlan::Temporal { cutoff },
        }
    }
}

/// Hyper-parameter search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSettings {
    pub grid: Vec<GridPoint>,
    pub folds: usize,
    /// Tune on a seeded subsample of the training rows of this size.
    pub sample: Option<usize>,
}

impl Default for TuneSettings {
    fn default() -> Self {
        Self {
            grid: [100, 300, 500]
                .into_iter()
                .flat_map(|ntree| [2, 3, 4].into_iter().map(move |mtry| GridPoint { ntree, mtry }))
                .collect(),
            folds: 10,
            sample: None,
        }
    }
}

/// Parses `ntree:mtry,ntree:mtry,...`.
pub fn parse_grid(s: &str) -> Result<Vec<GridPoint>> {
    s.split(',')
        .map(|p| {
            let (n, m) = p
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("bad grid point `{p}`; expected ntree:mtry")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad grid point `{p}`")))
            };
            Ok(GridPoint {
                ntree: parse(n)?,
                mtry: parse(m)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepoEntry {
    pub repo: String,
    #[serde(default)]
    pub packages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSettings {
    pub repos: Vec<RepoEntry>,
    pub api: ApiConfig,
    pub fixtures: Option<PathBuf>,
}

/// Everything a pipeline run needs. Paths are not part of the config hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub store: Option<PathBuf>,
    pub activity: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub mode: SchemaMode,
    pub as_of: Option<Timestamp>,
    pub seed: u64,
    pub forest: ForestSettings,
    pub tune: TuneSettings,
    pub split: SplitSpec,
    pub threshold: f64,
    pub ingest: IngestSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            store: None,
            activity: None,
            out: None,
            mode: SchemaMode::Full,
            as_of: None,
            seed: 0,
            forest: ForestSettings::default(),
            tune: TuneSettings::default(),
            split: SplitSpec::default(),
            threshold: prmerge_core::metrics::DEFAULT_THRESHOLD,
            ingest: IngestSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Forest parameters for `n_features` predictors.
    pub fn forest_params(&self, n_features: usize) -> Result<ForestParams> {
        let f = &self.forest;
        let params = ForestParams {
            ntree: f.ntree,
            mtry: f.mtry.unwrap_or_else(|| ForestParams::default_mtry(n_features)),
            min_node_size: f.min_node_size,
            max_depth: f.max_depth,
            bootstrap: f.bootstrap,
            seed: seed::derive(self.seed, "forest"),
        };
        params
            .validate(n_features)
            .map_err(|e| Error::Config(format!("forest parameters: {e}")))?;
        Ok(params)
    }

    pub fn split_plan(&self) -> SplitPlan {
        self.split.plan(self.seed)
    }

    /// SHA-256 over the path-free settings.
    pub fn hash(&self) -> String {
        let settings = serde_json::json!({
            "mode": self.mode,
            "as_of": self.as_of,
            "seed": self.seed,
            "forest": self.forest,
            "tune": self.tune,
            "split": self.split,
            "threshold": self.threshold,
        });
        hex::encode(Sha256::digest(settings.to_string().as_bytes()))
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.hash(),
            seed: self.seed,
        }
    }
}

/// Stamp embedded in every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}
