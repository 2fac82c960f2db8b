//! Charts and summary tables across experiment directories.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use counterprobe::counterlang::Language;
use counterprobe::probe::{ResultRecord, MAX_HIDDEN_LAYERS};
use counterprobe::transformer::{EpochLog, EvalMetrics};
use serde::{Deserialize, Serialize};

use crate::pipeline::{
    best_records, read_jsonl, BaselineRecord, TrainLog, BASELINES_FILE, CORPUS_FILE, RESULTS_FILE, TRAIN_LOG_FILE,
};
use crate::store::{read_json, write_atomic, write_json, DirLock, Store};
use crate::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvStamp {
    pub package: String,
    pub version: String,
    pub os: String,
    pub arch: String,
}

impl EnvStamp {
    pub fn current() -> Self {
        Self {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dir: String,
    pub language: String,
    pub config_hash: Option<String>,
    pub master_seed: Option<u64>,
    pub corpus_hash: Option<String>,
    /// Language-model training curve, epoch 0 being the untrained model.
    pub curve: Vec<EpochLog>,
    pub heldout: Option<EvalMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanBest {
    pub language: String,
    pub stacks: usize,
    pub mean_best_task_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingRow {
    pub higher: String,
    pub lower: String,
    pub mean_higher: f64,
    pub mean_lower: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub env: EnvStamp,
    pub runs: Vec<RunSummary>,
    pub records: Vec<ResultRecord>,
    pub baselines: Vec<BaselineRecord>,
    pub best: Vec<ResultRecord>,
    pub mean_best: Vec<MeanBest>,
    /// Expected: more counters gives higher mean best accuracy.
    pub ordering: Vec<OrderingRow>,
    pub ordering_holds: bool,
}

fn language_order(name: &str) -> (usize, String) {
    let k = name.parse::<Language>().map(Language::counters).unwrap_or(usize::MAX);
    (k, name.to_string())
}

pub fn mean_best(records: &[ResultRecord]) -> Vec<MeanBest> {
    let mut by_lang: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
    for b in best_records(records) {
        by_lang.entry(language_order(&b.language)).or_default().push(b.task_acc);
    }
    by_lang
        .into_iter()
        .map(|((_, language), accs)| MeanBest {
            language,
            stacks: accs.len(),
            mean_best_task_acc: accs.iter().sum::<f64>() / accs.len() as f64,
        })
        .collect()
}

/// Pairwise comparisons, each language against every language with fewer counters.
pub fn ordering_rows(means: &[MeanBest]) -> Vec<OrderingRow> {
    let mut rows = Vec::new();
    for hi in means.iter().rev() {
        for lo in means {
            if language_order(&lo.language).0 < language_order(&hi.language).0 {
                rows.push(OrderingRow {
                    higher: hi.language.clone(),
                    lower: lo.language.clone(),
                    mean_higher: hi.mean_best_task_acc,
                    mean_lower: lo.mean_best_task_acc,
                    holds: hi.mean_best_task_acc >= lo.mean_best_task_acc,
                });
            }
        }
    }
    rows
}

pub fn summarize(records: Vec<ResultRecord>, baselines: Vec<BaselineRecord>, runs: Vec<RunSummary>) -> Result<Summary> {
    if records.is_empty() {
        return Err(CliError::NoResults);
    }
    let best = best_records(&records);
    let means = mean_best(&records);
    let ordering = ordering_rows(&means);
    Ok(Summary {
        env: EnvStamp::current(),
        runs,
        ordering_holds: ordering.iter().all(|r| r.holds),
        records,
        baselines,
        best,
        mean_best: means,
        ordering,
    })
}

const CSV_HEADER: &str = "language,stack,arch_layers,task_acc,control_acc,selectivity,D,n_train,n_val,seed";

pub fn summary_csv(records: &[ResultRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.language, r.stack, r.arch_layers, r.task_acc, r.control_acc, r.selectivity, r.classes, r.n_train, r.n_val, r.seed
        )
        .ok();
    }
    out
}

pub fn ordering_csv(rows: &[OrderingRow]) -> String {
    let mut out = String::from("higher,lower,mean_higher,mean_lower,holds\n");
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.higher, r.lower, r.mean_higher, r.mean_lower, r.holds).ok();
    }
    out
}

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 320.0;
const LEFT: f64 = 56.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 48.0;
const TASK_COLOR: &str = "#1f5fbf";
const CONTROL_COLOR: &str = "#c8281e";

fn x_of(layers: usize) -> f64 {
    LEFT + (WIDTH - LEFT - RIGHT) * layers as f64 / MAX_HIDDEN_LAYERS as f64
}

fn y_of(acc: f64) -> f64 {
    TOP + (HEIGHT - TOP - BOTTOM) * (1.0 - acc.clamp(0.0, 1.0))
}

fn series(out: &mut String, name: &str, color: &str, points: &[(usize, f64)]) {
    let coords: Vec<String> = points
        .iter()
        .map(|&(l, a)| format!("{:.2},{:.2}", x_of(l), y_of(a)))
        .collect();
    writeln!(
        out,
        r#"<polyline class="{name}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
        coords.join(" ")
    )
    .ok();
    for &(l, a) in points {
        writeln!(
            out,
            r#"<circle class="{name}" cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}" data-arch="{l}" data-value="{a}"><title>{name} {l}: {a}</title></circle>"#,
            x_of(l),
            y_of(a)
        )
        .ok();
    }
}

/// Task and control accuracy against probe depth for one (language, stack).
pub fn chart_svg(language: &str, stack: usize, records: &[&ResultRecord]) -> String {
    let mut rs: Vec<&ResultRecord> = records.to_vec();
    rs.sort_by_key(|r| r.arch_layers);
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .ok();
    writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).ok();
    writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{language} stack {stack}</text>"#,
        WIDTH / 2.0
    )
    .ok();
    for i in 0..=4 {
        let acc = f64::from(i) / 4.0;
        let y = y_of(acc);
        writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            WIDTH - RIGHT
        )
        .ok();
        writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{acc:.2}</text>"#, LEFT - 6.0, y + 4.0).ok();
    }
    for l in 0..=MAX_HIDDEN_LAYERS {
        let x = x_of(l);
        let y = HEIGHT - BOTTOM;
        writeln!(out, r#"<line class="xtick" x1="{x:.2}" y1="{y:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, y + 5.0).ok();
        writeln!(out, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{l}</text>"#, y + 18.0).ok();
    }
    writeln!(
        out,
        r#"<line x1="{LEFT}" y1="{b:.2}" x2="{:.2}" y2="{b:.2}" stroke="black"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{b:.2}" stroke="black"/>"#,
        WIDTH - RIGHT,
        b = HEIGHT - BOTTOM
    )
    .ok();
    writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">probe hidden layers</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 8.0
    )
    .ok();
    writeln!(
        out,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">validation accuracy</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    )
    .ok();
    let task: Vec<(usize, f64)> = rs.iter().map(|r| (r.arch_layers, r.task_acc)).collect();
    let control: Vec<(usize, f64)> = rs.iter().map(|r| (r.arch_layers, r.control_acc)).collect();
    series(&mut out, "task", TASK_COLOR, &task);
    series(&mut out, "control", CONTROL_COLOR, &control);
    let lx = WIDTH - RIGHT - 90.0;
    for (i, (name, color)) in [("task", TASK_COLOR), ("control", CONTROL_COLOR)].iter().enumerate() {
        let y = TOP + 10.0 + 16.0 * i as f64;
        writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{name}</text>"#,
            lx + 18.0,
            lx + 24.0,
            y + 4.0
        )
        .ok();
    }
    out.push_str("</svg>\n");
    out
}

fn optional<T>(path: &Path, read: impl FnOnce(&Path) -> Result<T>) -> Result<Option<T>> {
    if path.exists() {
        read(path).map(Some)
    } else {
        Ok(None)
    }
}

/// Collects results, training curves and provenance hashes from one experiment directory.
pub fn load_run(dir: &Path) -> Result<(Vec<ResultRecord>, Vec<BaselineRecord>, RunSummary)> {
    let store = Store::new(dir);
    let results = store.path(RESULTS_FILE);
    if !results.exists() {
        return Err(CliError::Missing {
            path: results,
            hint: "run `probe` first".into(),
        });
    }
    let records: Vec<ResultRecord> = read_jsonl(&results)?;
    let baselines = optional(&store.path(BASELINES_FILE), read_jsonl)?.unwrap_or_default();
    let log: Option<TrainLog> = optional(&store.path(TRAIN_LOG_FILE), read_json)?;
    let probe_stamp = store.stamp("probe")?;
    let gen_stamp = store.stamp("gen")?;
    let language = records
        .first()
        .map(|r| r.language.clone())
        .or_else(|| log.as_ref().map(|l| l.language.to_string()))
        .unwrap_or_default();
    let run = RunSummary {
        dir: dir.display().to_string(),
        language,
        config_hash: probe_stamp.as_ref().map(|s| s.config_hash.clone()),
        master_seed: probe_stamp.as_ref().map(|s| s.master_seed),
        corpus_hash: gen_stamp.and_then(|s| s.outputs.get(CORPUS_FILE).cloned()),
        curve: log.as_ref().map(|l| l.epochs.clone()).unwrap_or_default(),
        heldout: log.map(|l| l.heldout),
    };
    Ok((records, baselines, run))
}

/// `path` as seen from `base`, so a report names its runs the same way wherever it is written.
fn relative_to(path: &Path, base: &Path) -> Result<PathBuf> {
    let canon = |p: &Path| p.canonicalize().map_err(|e| CliError::io(p, e));
    let (path, base) = (canon(path)?, canon(base)?);
    let common = path.components().zip(base.components()).take_while(|(a, b)| a == b).count();
    let mut rel: PathBuf = base.components().skip(common).map(|_| "..").collect();
    rel.extend(path.components().skip(common));
    if rel.as_os_str().is_empty() {
        rel.push(".");
    }
    Ok(rel)
}

/// Writes charts, `summary.csv`, `ordering.csv` and `summary.json` into `out`.
pub fn report(dirs: &[PathBuf], out: &Path) -> Result<Summary> {
    let mut records = Vec::new();
    let mut baselines = Vec::new();
    let mut runs = Vec::new();
    for dir in dirs {
        let (r, b, run) = load_run(dir)?;
        records.extend(r);
        baselines.extend(b);
        runs.push(run);
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    for (run, dir) in runs.iter_mut().zip(dirs) {
        run.dir = relative_to(dir, out)?.display().to_string();
    }
    let summary = summarize(records, baselines, runs)?;
    let _lock = DirLock::acquire(out)?;
    let mut groups: BTreeMap<((usize, String), usize), Vec<&ResultRecord>> = BTreeMap::new();
    for r in &summary.records {
        groups.entry((language_order(&r.language), r.stack)).or_default().push(r);
    }
    for (((_, language), stack), rs) in &groups {
        let path = out.join(format!("{language}_stack{stack}.svg"));
        write_atomic(&path, chart_svg(language, *stack, rs).as_bytes())?;
    }
    write_atomic(&out.join("summary.csv"), summary_csv(&summary.records).as_bytes())?;
    write_atomic(&out.join("ordering.csv"), ordering_csv(&summary.ordering).as_bytes())?;
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}
