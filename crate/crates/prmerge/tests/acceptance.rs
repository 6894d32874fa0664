//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

#[path = "../../core/tests/support/corpus.rs"]
mod corpus;
#[path = "../../core/tests/support/split_oracle.rs"]
mod split_oracle;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use prmerge::commands::{
    cmd_evaluate, cmd_explain, cmd_features, cmd_synth, cmd_train, cmd_tune, ExplainRequest, FEATURES_FILE, MODEL_FILE,
    REPORT_FILE, ROC_FILE, TUNE_FILE,
};
use prmerge::config::{ForestSettings, RunConfig, SplitSpec, TuneSettings};
use prmerge::core::activity::ActivityStore;
use prmerge::core::features::{build_dataset, SchemaMode};
use prmerge::core::forest::{best_split, rfcv, ForestParams, GridPoint};
use prmerge::core::metrics::{auc_roc, confusion, Confusion};
use prmerge::core::Matrix;
use prmerge::report_io::Report;
use prmerge::synth::{planted_matrix, Drift, SynthMeta, SyntheticSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

const INFORMATIVE: [&str; 8] = [
    "age",
    "comments",
    "additions",
    "creator_total_commits",
    "creator_total_blobs",
    "creator_total_projects",
    "creator_accepted",
    "repo_accepted",
];
const NOISE: [&str; 4] = ["commits", "changed_files", "deletions", "review_comments"];
const MONOTONE: [&str; 3] = ["creator_total_commits", "creator_total_blobs", "creator_total_projects"];
const PD_TOLERANCE: f64 = 0.05;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> Result<(), String> {
    ensure(elapsed.as_secs() < limit_secs, || {
        format!("took {:.1}s, limit {limit_secs}s", elapsed.as_secs_f64())
    })
}

// ---------------------------------------------------------------- oracles

fn random_table(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<bool>) {
    let n = rng.random_range(1..=8);
    let p = rng.random_range(1..=3);
    let coarse = rng.random_bool(0.7);
    let rows = (0..n)
        .map(|_| {
            (0..p)
                .map(|_| {
                    if coarse {
                        f64::from(rng.random_range(0u8..4))
                    } else {
                        rng.random_range(-5.0..5.0)
                    }
                })
                .collect()
        })
        .collect();
    let y = (0..n).map(|_| rng.random_bool(0.5)).collect();
    (rows, y)
}

fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut twice_wins, mut pairs) = (0u64, 0u64);
    for (si, &li) in scores.iter().zip(labels) {
        for (sj, &lj) in scores.iter().zip(labels) {
            if li && !lj {
                pairs += 1;
                twice_wins += match si.partial_cmp(sj).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    twice_wins as f64 / (2 * pairs) as f64
}

fn exact(q: Option<Ratio<i128>>) -> Option<f64> {
    q.map(|q| *q.numer() as f64 / *q.denom() as f64)
}

fn ratio(a: u64, b: u64) -> Option<Ratio<i128>> {
    (b > 0).then(|| Ratio::new(a as i128, b as i128))
}

/// Textbook definitions over exact rationals.
fn hand_metrics(c: &Confusion) -> [Option<f64>; 4] {
    let (tp, fp, fn_, tn) = (c.tp, c.fp, c.fn_, c.tn);
    let n = tp + fp + fn_ + tn;
    let accuracy = ratio(tp + tn, n);
    let kappa = accuracy.and_then(|po| {
        let n2 = (n * n) as i128;
        let pe = Ratio::new(((tp + fp) * (tp + fn_) + (fn_ + tn) * (fp + tn)) as i128, n2);
        let one = Ratio::from_integer(1);
        (pe != one).then(|| (po - pe) / (one - pe))
    });
    [
        exact(accuracy),
        exact(kappa),
        exact(ratio(tp, tp + fn_)),
        exact(ratio(tn, tn + fp)),
    ]
}

fn criterion_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0AC1E);

    let mut split_mismatches = 0;
    for _ in 0..1000 {
        let (rows, y) = random_table(&mut rng);
        let x = Matrix::from_rows(&rows).map_err(|e| e.to_string())?;
        let all_rows: Vec<usize> = (0..rows.len()).collect();
        let all_features: Vec<usize> = (0..x.n_cols()).collect();
        let got = best_split(&x, &y, &all_rows, &all_features);
        let want = split_oracle::brute_force_split(&rows, &y);
        let same = match (&got, &want) {
            (None, None) => true,
            (Some(s), Some((f, t, gain))) => {
                s.feature == *f && s.threshold == *t && (s.gain - split_oracle::ratio_to_f64(*gain)).abs() < 1e-12
            }
            _ => false,
        };
        split_mismatches += usize::from(!same);
    }
    ensure(split_mismatches == 0, || format!("{split_mismatches} split mismatches"))?;

    let mut worst_auc = 0.0f64;
    let mut auc_sets = 0;
    while auc_sets < 1000 {
        let n = rng.random_range(2..=200);
        let levels = rng.random_range(2..=50);
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..levels)) / 7.0).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            continue;
        }
        let got = auc_roc(&scores, &labels).map_err(|e| e.to_string())?;
        worst_auc = worst_auc.max((got - brute_auc(&scores, &labels)).abs());
        auc_sets += 1;
    }
    ensure(worst_auc <= 1e-12, || format!("auc deviation {worst_auc:e}"))?;

    let mut metric_mismatches = 0;
    for _ in 0..100 {
        let counts: [u64; 4] = std::array::from_fn(|_| {
            if rng.random_bool(0.1) {
                0
            } else {
                rng.random_range(1..400)
            }
        });
        let want = Confusion {
            tp: counts[0],
            fp: counts[1],
            fn_: counts[2],
            tn: counts[3],
        };
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for (count, score, label) in [
            (want.tp, 0.9, true),
            (want.fp, 0.9, false),
            (want.fn_, 0.1, true),
            (want.tn, 0.1, false),
        ] {
            scores.extend(std::iter::repeat_n(score, count as usize));
            labels.extend(std::iter::repeat_n(label, count as usize));
        }
        let got = confusion(&scores, &labels, 0.5).map_err(|e| e.to_string())?;
        let implemented = [
            got.accuracy().ok(),
            got.kappa().ok(),
            got.sensitivity().ok(),
            got.specificity().ok(),
        ];
        metric_mismatches += usize::from(got != want || implemented != hand_metrics(&want));
    }
    ensure(metric_mismatches == 0, || {
        format!("{metric_mismatches} confusion-matrix mismatches")
    })?;

    within(start.elapsed(), 60)?;
    Ok(format!(
        "1000 split tables, 1000 AUC sets (max dev {worst_auc:.1e}), 100 confusion matrices; {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- leakage

fn criterion_leakage() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1EA4);
    let mut violations = Vec::new();
    for k in 0..500 {
        let (prs, events) = corpus::random_corpus(&mut rng, 40, 60);
        let base =
            build_dataset(&prs, &ActivityStore::new(events.clone()), corpus::AS_OF).map_err(|e| e.to_string())?;
        let v = &base[rng.random_range(0..base.len())];
        let created = prs.iter().find(|p| p.pr_id == v.pr_id).map(|p| p.created_at).unwrap();
        let (mprs, mevents) = corpus::mutate_future(&mut rng, &prs, &events, &v.pr_id, created);
        let mutated = build_dataset(&mprs, &ActivityStore::new(mevents), corpus::AS_OF).map_err(|e| e.to_string())?;
        match mutated.iter().find(|w| w.pr_id == v.pr_id) {
            Some(w) if corpus::bits(w) == corpus::bits(v) => {}
            _ => violations.push(format!("corpus {k}, {}", v.pr_id)),
        }
    }
    ensure(violations.is_empty(), || {
        format!("{} violations, first: {}", violations.len(), violations[0])
    })?;
    within(start.elapsed(), 60)?;
    Ok(format!(
        "500 mutated corpora, 0 violations; {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- pipeline

struct Run {
    out: PathBuf,
    matrix: PathBuf,
    model: PathBuf,
    report: Report,
    cfg: RunConfig,
}

fn pipeline_config(corpus: &Path, meta: &SynthMeta, out: &Path, mode: SchemaMode, split: SplitSpec) -> RunConfig {
    RunConfig {
        store: Some(corpus.join("store")),
        activity: Some(corpus.join("activity.csv")),
        out: Some(out.to_path_buf()),
        mode,
        as_of: Some(meta.as_of),
        seed: 7,
        forest: ForestSettings {
            ntree: 200,
            min_node_size: 10,
            ..ForestSettings::default()
        },
        tune: TuneSettings {
            grid: vec![
                GridPoint { ntree: 100, mtry: 3 },
                GridPoint { ntree: 200, mtry: 3 },
                GridPoint { ntree: 200, mtry: 4 },
            ],
            folds: 5,
            sample: Some(4000),
        },
        split,
        ..RunConfig::default()
    }
}

/// features, tune, train, evaluate.
fn run_pipeline(cfg: RunConfig) -> Result<Run, String> {
    let out = cfg.out.clone().unwrap();
    let err = |e: prmerge::Error| e.to_string();
    cmd_features(&cfg).map_err(err)?;
    let matrix = out.join(FEATURES_FILE);
    cmd_tune(&cfg, &matrix).map_err(err)?;
    cmd_train(&cfg, &matrix, Some(&out.join(TUNE_FILE))).map_err(err)?;
    let model = out.join(MODEL_FILE);
    let report = cmd_evaluate(&cfg, &model, &matrix).map_err(err)?;
    Ok(Run {
        out,
        matrix,
        model,
        report,
        cfg,
    })
}

fn synth_corpus(spec: &SyntheticSpec, dir: &Path) -> Result<SynthMeta, String> {
    cmd_synth(spec, dir).map_err(|e| e.to_string())
}

fn benchmark_spec() -> SyntheticSpec {
    SyntheticSpec {
        n_prs: 20_000,
        seed: 7,
        ..SyntheticSpec::default()
    }
}

struct Benchmark {
    full: Run,
    submission: Run,
    elapsed: Duration,
}

fn benchmark(root: &Path) -> Result<Benchmark, String> {
    let start = Instant::now();
    let corpus = root.join("corpus");
    let meta = synth_corpus(&benchmark_spec(), &corpus)?;
    let split = SplitSpec::Random { train_fraction: 0.7 };
    let full = run_pipeline(pipeline_config(
        &corpus,
        &meta,
        &root.join("full"),
        SchemaMode::Full,
        split,
    ))?;
    let submission = run_pipeline(pipeline_config(
        &corpus,
        &meta,
        &root.join("submission"),
        SchemaMode::SubmissionTime,
        split,
    ))?;
    Ok(Benchmark {
        full,
        submission,
        elapsed: start.elapsed(),
    })
}

fn criterion_recovery(b: &Benchmark) -> Outcome {
    let full = b.full.report.metrics.auc_roc;
    let sub = b.submission.report.metrics.auc_roc;
    let detail = format!(
        "full AUC {full:.4}, submission-time AUC {sub:.4} on {} held-out rows; {:.1}s",
        b.full.report.test.n,
        b.elapsed.as_secs_f64()
    );
    ensure(full >= 0.90, || format!("full AUC below 0.90: {detail}"))?;
    ensure((0.75..=full).contains(&sub), || {
        format!("submission AUC outside [0.75, full]: {detail}")
    })?;
    within(b.elapsed, 300)?;
    Ok(detail)
}

fn criterion_importance(b: &Benchmark) -> Outcome {
    let imp = &b.full.report.importance;
    let score = |name: &str| -> Result<f64, String> {
        imp.iter()
            .find(|f| f.feature == name)
            .map(|f| f.permutation)
            .ok_or_else(|| format!("no importance for {name}"))
    };
    let mut weakest = ("", f64::INFINITY);
    for name in INFORMATIVE {
        let s = score(name)?;
        if s < weakest.1 {
            weakest = (name, s);
        }
    }
    let mut strongest = ("", f64::NEG_INFINITY);
    for name in NOISE {
        let s = score(name)?;
        ensure(s.abs() < 0.02, || format!("noise feature {name} has importance {s:.4}"))?;
        if s > strongest.1 {
            strongest = (name, s);
        }
    }
    ensure(weakest.1 > strongest.1, || {
        format!(
            "informative {} ({:.4}) does not beat noise {} ({:.4})",
            weakest.0, weakest.1, strongest.0, strongest.1
        )
    })?;
    Ok(format!(
        "weakest informative {} {:.4} > strongest noise {} {:.4}",
        weakest.0, weakest.1, strongest.0, strongest.1
    ))
}

fn read_curve(path: &Path) -> Result<Vec<(f64, f64)>, String> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    reader
        .records()
        .map(|r| {
            let r = r.map_err(|e| e.to_string())?;
            let v: f64 = r[0].parse().map_err(|e| format!("{e}"))?;
            let c: f64 = r[1].parse().map_err(|e| format!("{e}"))?;
            Ok((v, c))
        })
        .collect()
}

/// Largest drop of the curve below any earlier point.
fn worst_drop(c: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for &v in c {
        peak = peak.max(v);
        worst = worst.max(peak - v);
    }
    worst
}

fn criterion_partial_dependence(b: &Benchmark) -> Outcome {
    let mut features: Vec<String> = MONOTONE.iter().map(|s| s.to_string()).collect();
    features.push("additions".into());
    let mut notes = Vec::new();
    for run in [&b.full, &b.submission] {
        let out = run.out.join("explain");
        let mut cfg = run.cfg.clone();
        cfg.out = Some(out.clone());
        let req = ExplainRequest {
            features: features.clone(),
            points: Some(25),
            max_rows: Some(1500),
        };
        cmd_explain(&cfg, &run.model, &run.matrix, &req).map_err(|e| e.to_string())?;
        let mode = run.report.mode.as_str();

        for name in MONOTONE {
            let curve = read_curve(&out.join(format!("{name}.csv")))?;
            let c: Vec<f64> = curve.iter().map(|p| p.1).collect();
            let drop = worst_drop(&c);
            ensure(drop <= PD_TOLERANCE, || format!("{mode} {name} drops by {drop:.4}"))?;
        }

        let curve = read_curve(&out.join("additions.csv"))?;
        let c: Vec<f64> = curve.iter().map(|p| p.1).collect();
        let m = (0..c.len()).fold(0, |best, i| if c[i] > c[best] { i } else { best });
        let rising = worst_drop(&c[..=m]);
        let falling = worst_drop(&c[m..].iter().rev().copied().collect::<Vec<_>>());
        ensure(rising <= PD_TOLERANCE && falling <= PD_TOLERANCE, || {
            format!("{mode} additions not unimodal: rise violation {rising:.4}, fall violation {falling:.4}")
        })?;
        let region = benchmark_spec().coefficients.sweet_spot.region();
        let argmax = curve[m].0;
        ensure(region.0 <= argmax && argmax <= region.1, || {
            format!(
                "{mode} additions argmax {argmax:.3} outside [{:.3}, {:.3}]",
                region.0, region.1
            )
        })?;
        notes.push(format!(
            "{mode}: additions argmax {argmax:.2} in [{:.2}, {:.2}]",
            region.0, region.1
        ));
    }
    Ok(notes.join("; "))
}

// ---------------------------------------------------------------- drift

fn criterion_temporal(root: &Path) -> Outcome {
    let start = Instant::now();
    let spec = SyntheticSpec {
        drift: Some(Drift {
            cutoff_fraction: 0.7,
            rate_before: 0.42,
            rate_after: 0.58,
        }),
        ..benchmark_spec()
    };
    let corpus = root.join("corpus");
    let meta = synth_corpus(&spec, &corpus)?;
    let split = SplitSpec::Temporal {
        cutoff: meta.cutoff.ok_or("drifting corpus has no cutoff")?,
    };
    let full = run_pipeline(pipeline_config(
        &corpus,
        &meta,
        &root.join("full"),
        SchemaMode::Full,
        split,
    ))?;
    let sub = run_pipeline(pipeline_config(
        &corpus,
        &meta,
        &root.join("submission"),
        SchemaMode::SubmissionTime,
        split,
    ))?;
    let r = &full.report;
    let detail = format!(
        "train {:.1}% positive, test {:.1}% positive; submission-time AUC {:.4}, full AUC {:.4}; {:.1}s",
        100.0 * r.train.positive_rate,
        100.0 * r.test.positive_rate,
        sub.report.metrics.auc_roc,
        r.metrics.auc_roc,
        start.elapsed().as_secs_f64()
    );
    ensure(sub.report.metrics.auc_roc > 0.70, || {
        format!("submission AUC too low: {detail}")
    })?;
    ensure(r.metrics.auc_roc > 0.85, || format!("full AUC too low: {detail}"))?;
    within(start.elapsed(), 300)?;
    Ok(detail)
}

// ---------------------------------------------------------------- determinism

fn criterion_determinism(root: &Path) -> Outcome {
    let spec = SyntheticSpec {
        n_prs: 3000,
        seed: 11,
        ..SyntheticSpec::default()
    };
    let mut runs = Vec::new();
    for k in 0..2 {
        let dir = root.join(format!("run{k}"));
        let corpus = dir.join("corpus");
        let meta = synth_corpus(&spec, &corpus)?;
        let cfg = pipeline_config(
            &corpus,
            &meta,
            &dir.join("out"),
            SchemaMode::Full,
            SplitSpec::Random { train_fraction: 0.7 },
        );
        runs.push(run_pipeline(cfg)?);
    }
    let files = [FEATURES_FILE, TUNE_FILE, MODEL_FILE, REPORT_FILE, ROC_FILE];
    for name in files {
        let a = fs::read(runs[0].out.join(name)).map_err(|e| e.to_string())?;
        let b = fs::read(runs[1].out.join(name)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{name} differs between runs"))?;
    }
    Ok(format!("{} byte-identical across two runs", files.join(", ")))
}

// ---------------------------------------------------------------- rfcv

fn criterion_rfcv() -> Outcome {
    let (x, y) = planted_matrix(2000, 5, 15, 3);
    let mut params = ForestParams::new(100, ForestParams::default_mtry(20), 5);
    params.min_node_size = 5;
    let curve = rfcv(&x, &y, &params, &[20, 10, 5, 2, 1], 5).map_err(|e| e.to_string())?;
    let min = curve.iter().map(|p| p.error).fold(f64::INFINITY, f64::min);
    let at5 = curve.iter().find(|p| p.n_features == 5).ok_or("no k=5 point")?.error;
    let shape = curve
        .iter()
        .map(|p| format!("{}:{:.3}", p.n_features, p.error))
        .collect::<Vec<_>>()
        .join(" ");
    ensure(at5 - min <= 0.03, || {
        format!("error at k=5 is {at5:.4}, minimum {min:.4} ({shape})")
    })?;
    Ok(format!("errors {shape}"))
}

// ---------------------------------------------------------------- driver

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .map_or_else(|| "panicked".into(), |m| format!("panicked: {m}"))),
    }
}

fn report(id: usize, name: &str, outcome: &Outcome) -> bool {
    match outcome {
        Ok(detail) => println!("criterion {id} {name}: PASS ({detail})"),
        Err(why) => println!("criterion {id} {name}: FAIL ({why})"),
    }
    outcome.is_ok()
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let root = tmp.path();
    let mut ok = true;

    ok &= report(1, "oracle equivalence", &guarded(criterion_oracles));
    ok &= report(2, "anti-leakage", &guarded(criterion_leakage));

    let bench = panic::catch_unwind(AssertUnwindSafe(|| benchmark(&root.join("benchmark"))))
        .unwrap_or_else(|_| Err("benchmark pipeline panicked".into()));
    match &bench {
        Ok(b) => {
            ok &= report(3, "planted-signal recovery", &guarded(|| criterion_recovery(b)));
            ok &= report(4, "importance fidelity", &guarded(|| criterion_importance(b)));
            ok &= report(
                5,
                "partial-dependence fidelity",
                &guarded(|| criterion_partial_dependence(b)),
            );
        }
        Err(e) => {
            for (id, name) in [
                (3, "planted-signal recovery"),
                (4, "importance fidelity"),
                (5, "partial-dependence fidelity"),
            ] {
                ok &= report(id, name, &Err(format!("benchmark failed: {e}")));
            }
        }
    }

    ok &= report(
        6,
        "temporal deployment",
        &guarded(|| criterion_temporal(&root.join("temporal"))),
    );
    ok &= report(
        7,
        "determinism",
        &guarded(|| criterion_determinism(&root.join("determinism"))),
    );
    ok &= report(8, "rfcv", &guarded(criterion_rfcv));

    if ok {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED");
        ExitCode::FAILURE
    }
}
