use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use prmerge::commands::{self, ExplainRequest, IngestRequest};
use prmerge::config::{parse_grid, RepoEntry, RunConfig, SplitSpec};
use prmerge::synth::{Drift, SyntheticSpec};
use prmerge::{Error, Result};
use prmerge_core::features::SchemaMode;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "prmerge", version, about = "Predict which pull requests will be accepted")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Full,
    SubmissionTime,
}

impl From<Mode> for SchemaMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Full => SchemaMode::Full,
            Mode::SubmissionTime => SchemaMode::SubmissionTime,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fetch pull requests into the record store.
    Ingest {
        #[arg(long)]
        store: Option<PathBuf>,
        /// owner/name, optionally followed by =pkg1,pkg2.
        #[arg(long = "repo")]
        repos: Vec<String>,
        /// Replay recorded responses from this directory instead of the network.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Record live exchanges to this fixture file.
        #[arg(long)]
        record: Option<PathBuf>,
        #[arg(long)]
        refresh: bool,
        #[arg(long)]
        max_pages: Option<u32>,
        #[arg(long)]
        per_page: Option<u32>,
        #[arg(long)]
        base_url: Option<String>,
    },
    /// Build the feature matrix.
    Features {
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        activity: Option<PathBuf>,
        /// Collection time (unix seconds); defaults to the latest record timestamp.
        #[arg(long)]
        as_of: Option<i64>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validated grid search over ntree and mtry.
    Tune {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// ntree:mtry,ntree:mtry,...
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        folds: Option<usize>,
        /// Tune on at most this many training rows.
        #[arg(long)]
        sample: Option<usize>,
        /// random:<fraction> or temporal:<unix time>
        #[arg(long)]
        split: Option<String>,
    },
    /// Fit a forest on the training rows.
    Train {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Take ntree and mtry from a tune report.
        #[arg(long)]
        tuned: Option<PathBuf>,
        #[arg(long)]
        ntree: Option<usize>,
        #[arg(long)]
        mtry: Option<usize>,
        #[arg(long)]
        min_node_size: Option<usize>,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long)]
        split: Option<String>,
    },
    /// Score the held-out rows and write the report.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Rank open pull requests by acceptance probability.
    Rank {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        activity: Option<PathBuf>,
        #[arg(long)]
        as_of: Option<i64>,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Partial-dependence curves, one CSV per feature.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        matrix: PathBuf,
        /// Comma-separated feature names; all model columns by default.
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        max_rows: Option<usize>,
    },
    /// Generate a synthetic corpus with planted effects.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// JSON synthetic spec; flags override it.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        n_prs: Option<usize>,
        #[arg(long)]
        n_repos: Option<usize>,
        #[arg(long)]
        n_authors: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        /// Shift the base rate: <cutoff fraction>:<rate before>:<rate after>.
        #[arg(long)]
        drift: Option<String>,
    },
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json("summary", e))?;
    // a closed stdout (e.g. piped into `head`) is not a failure
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
        _ => Ok(()),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

fn load_spec(path: Option<&Path>) -> Result<SyntheticSpec> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
        None => Ok(SyntheticSpec::default()),
    }
}

fn parse_drift(s: &str) -> Result<Drift> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|v| v.parse().map_err(|_| Error::Config(format!("bad drift `{s}`"))))
        .collect::<Result<_>>()?;
    match parts[..] {
        [cutoff_fraction, rate_before, rate_after] => Ok(Drift {
            cutoff_fraction,
            rate_before,
            rate_after,
        }),
        _ => Err(Error::Config(format!(
            "bad drift `{s}`; expected fraction:before:after"
        ))),
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    match cli.command {
        Command::Ingest {
            store,
            repos,
            fixtures,
            record,
            refresh,
            max_pages,
            per_page,
            base_url,
        } => {
            set_opt(&mut cfg.store, store);
            set_opt(&mut cfg.ingest.fixtures, fixtures);
            set(&mut cfg.ingest.api.per_page, per_page);
            set(&mut cfg.ingest.api.base_url, base_url);
            if !repos.is_empty() {
                cfg.ingest.repos = repos
                    .iter()
                    .map(|r| match r.split_once('=') {
                        Some((repo, pkgs)) => RepoEntry {
                            repo: repo.to_string(),
                            packages: pkgs.split(',').filter(|p| !p.is_empty()).map(String::from).collect(),
                        },
                        None => RepoEntry {
                            repo: r.clone(),
                            packages: Vec::new(),
                        },
                    })
                    .collect();
            }
            let req = IngestRequest {
                refresh,
                max_pages,
                record,
            };
            print_json(&commands::cmd_ingest(&cfg, &req)?)
        }
        Command::Features {
            store,
            activity,
            as_of,
            mode,
            out,
        } => {
            set_opt(&mut cfg.store, store);
            set_opt(&mut cfg.activity, activity);
            set_opt(&mut cfg.as_of, as_of);
            set(&mut cfg.mode, mode.map(SchemaMode::from));
            set_opt(&mut cfg.out, out);
            print_json(&commands::cmd_features(&cfg)?)
        }
        Command::Tune {
            matrix,
            out,
            grid,
            folds,
            sample,
            split,
        } => {
            set_opt(&mut cfg.out, out);
            set(&mut cfg.tune.grid, grid.as_deref().map(parse_grid).transpose()?);
            set(&mut cfg.tune.folds, folds);
            set_opt(&mut cfg.tune.sample, sample);
            set(&mut cfg.split, split.as_deref().map(SplitSpec::parse).transpose()?);
            print_json(&commands::cmd_tune(&cfg, &matrix)?)
        }
        Command::Train {
            matrix,
            out,
            tuned,
            ntree,
            mtry,
            min_node_size,
            max_depth,
            split,
        } => {
            set_opt(&mut cfg.out, out);
            set(&mut cfg.forest.ntree, ntree);
            set_opt(&mut cfg.forest.mtry, mtry);
            set(&mut cfg.forest.min_node_size, min_node_size);
            set_opt(&mut cfg.forest.max_depth, max_depth);
            set(&mut cfg.split, split.as_deref().map(SplitSpec::parse).transpose()?);
            let saved = commands::cmd_train(&cfg, &matrix, tuned.as_deref())?;
            print_json(&serde_json::json!({
                "model": cfg.out.as_ref().map(|o| o.join(commands::MODEL_FILE)),
                "params": saved.model.params(),
                "n_train_rows": saved.model.n_train_rows(),
                "provenance": saved.provenance,
            }))
        }
        Command::Evaluate {
            model,
            matrix,
            out,
            threshold,
        } => {
            set_opt(&mut cfg.out, out);
            set(&mut cfg.threshold, threshold);
            print_json(&commands::cmd_evaluate(&cfg, &model, &matrix)?)
        }
        Command::Rank {
            model,
            store,
            activity,
            as_of,
            out,
        } => {
            set_opt(&mut cfg.store, store);
            set_opt(&mut cfg.activity, activity);
            set_opt(&mut cfg.as_of, as_of);
            let rows = commands::cmd_rank(&cfg, &model, &out)?;
            print_json(&serde_json::json!({ "ranked": rows, "out": out }))
        }
        Command::Explain {
            model,
            matrix,
            features,
            out,
            points,
            max_rows,
        } => {
            set_opt(&mut cfg.out, out);
            let req = ExplainRequest {
                features,
                points,
                max_rows,
            };
            let files = commands::cmd_explain(&cfg, &model, &matrix, &req)?;
            print_json(&serde_json::json!({ "files": files }))
        }
        Command::Synth {
            out,
            spec,
            n_prs,
            n_repos,
            n_authors,
            noise,
            drift,
        } => {
            let mut s = load_spec(spec.as_deref())?;
            set(&mut s.seed, cli.seed);
            set(&mut s.n_prs, n_prs);
            set(&mut s.n_repos, n_repos);
            set(&mut s.n_authors, n_authors);
            set(&mut s.noise_scale, noise);
            set_opt(&mut s.drift, drift.as_deref().map(parse_drift).transpose()?);
            print_json(&commands::cmd_synth(&s, &out)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = serde_json::json!({ "error": "usage", "message": e.to_string() });
            eprintln!("{err}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let err = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{err}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
