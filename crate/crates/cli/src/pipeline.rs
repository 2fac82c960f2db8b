//! The experiment stages: gen, train, extract, probe and rasp.

use std::collections::{BTreeMap, HashSet};
use std::io::BufReader;
use std::path::Path;

use counterprobe::counterlang::Language;
use counterprobe::dataset::{
    attach_labels, read_corpus, read_probe_split, sample_corpus, write_corpus, write_probe_split, ControlMode,
    Corpus, ProbeDataset,
};
use counterprobe::probe::{
    positional_features, probe_features, probe_pair, stack_datasets, ProbeArch, ProbeResult,
    ResultRecord, SuiteOptions,
};
use counterprobe::rasp::{compile, dyck1_program, eval_program, probe_compiled};
use counterprobe::transformer::{evaluate, train_lm_with, EpochLog, EvalMetrics, TransformerConfig, TransformerModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::store::{hash_json, read_json, write_atomic, write_json, DirLock, Store};
use crate::{CliError, Result};

/// Tolerance on control accuracy around `1/D`.
pub const CONTROL_TOLERANCE: f64 = 0.05;
/// Validation size from which the control band is enforced.
pub const CONTROL_MIN_VAL: usize = 5_000;
pub const MIN_SELECTIVITY: f64 = 0.30;
pub const RASP_MIN_ACCURACY: f64 = 0.99;
pub const RASP_STRINGS: usize = 1_000;
pub const RASP_MAX_LEN: usize = 50;
/// Probe epochs on the compiled stream. Its deepest classes are rare, and a linear probe
/// is still separating them after the usual 10 epochs.
pub const RASP_PROBE_EPOCHS: usize = 100;

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const HELDOUT_FILE: &str = "heldout.jsonl";
pub const MODEL_FILE: &str = "model.cpwt";
pub const MODEL_META_FILE: &str = "model.json";
pub const TRAIN_LOG_FILE: &str = "train_log.json";
pub const PROBE_META_FILE: &str = "probe/meta.json";
pub const RESULTS_FILE: &str = "results.jsonl";
pub const DETAILS_FILE: &str = "details.json";
pub const BASELINES_FILE: &str = "baselines.jsonl";
pub const RASP_DIR: &str = "rasp";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    Skipped,
}

/// A resolved configuration bound to its output directory.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: ExperimentConfig,
    pub store: Store,
    pub force: bool,
    pub quiet: bool,
}

impl Context {
    pub fn new(cfg: ExperimentConfig, force: bool, quiet: bool) -> Self {
        let store = Store::new(cfg.output_dir.clone());
        Self {
            cfg,
            store,
            force,
            quiet,
        }
    }

    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn options(&self) -> SuiteOptions {
        SuiteOptions {
            split_ratio: self.cfg.probe.split_ratio,
            control: self.cfg.probe.control,
            training: self.cfg.probe.training(),
        }
    }

    /// Locks the directory and records the resolved configuration in it.
    fn begin(&self) -> Result<DirLock> {
        let lock = DirLock::acquire(self.store.root())?;
        let path = self.store.path("config.toml");
        let text = self.cfg.to_toml();
        if std::fs::read_to_string(&path).ok().as_deref() != Some(text.as_str()) {
            write_atomic(&path, text.as_bytes())?;
        }
        Ok(lock)
    }

    fn fresh(&self, stage: &str, key: &str, inputs: &BTreeMap<String, String>) -> Result<bool> {
        if !self.force && self.store.is_fresh(stage, key, inputs)? {
            self.note(format!("{stage}: up to date"));
            return Ok(true);
        }
        Ok(false)
    }

    fn stamp(&self, stage: &str, key: &str, inputs: BTreeMap<String, String>, files: &[String]) -> Result<()> {
        self.store
            .write_stamp(stage, key, &self.cfg.hash(), self.cfg.master_seed, inputs, files)?;
        Ok(())
    }
}

pub fn gen_key(cfg: &ExperimentConfig) -> String {
    hash_json(&("gen", &cfg.language, &cfg.corpus))
}

pub fn train_key(cfg: &ExperimentConfig) -> String {
    hash_json(&("train", gen_key(cfg), &cfg.transformer))
}

pub fn extract_key(cfg: &ExperimentConfig) -> String {
    let p = &cfg.probe;
    hash_json(&("extract", train_key(cfg), p.seed, p.split_ratio, p.control))
}

pub fn probe_key(cfg: &ExperimentConfig, stacks: &[usize]) -> String {
    let p = &cfg.probe;
    hash_json(&(
        "probe",
        extract_key(cfg),
        &p.archs,
        (p.epochs, p.lr, p.batch, p.baselines),
        stacks,
    ))
}

pub fn rasp_key(cfg: &ExperimentConfig, archs: &[usize], epochs: usize) -> String {
    let p = &cfg.probe;
    hash_json(&(
        "rasp",
        &cfg.corpus,
        (p.seed, p.split_ratio, p.control, epochs, p.lr, p.batch),
        archs,
    ))
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_corpus(BufReader::new(file)).map_err(|e| CliError::format(path, e))
}

fn corpus_bytes(corpus: &Corpus) -> Vec<u8> {
    let mut buf = Vec::new();
    write_corpus(&mut buf, corpus).expect("writing to memory");
    buf
}

/// Draws `cfg.corpus.heldout` sequences, none of which occur in `train`.
pub fn heldout_corpus(cfg: &ExperimentConfig, train: &Corpus) -> Result<Corpus> {
    let c = &cfg.corpus;
    let seen: HashSet<&[usize]> = train.samples.iter().map(|s| s.tokens.as_slice()).collect();
    let mut samples = Vec::with_capacity(c.heldout);
    for round in 0..64u64 {
        let batch = sample_corpus(cfg.language(), c.heldout, (c.min_len, c.max_len), c.heldout_seed.wrapping_add(round))?;
        samples.extend(batch.samples.into_iter().filter(|s| !seen.contains(s.tokens.as_slice())));
        if samples.len() >= c.heldout {
            samples.truncate(c.heldout);
            let corpus = Corpus {
                language: cfg.language(),
                seed: c.heldout_seed,
                samples,
            };
            return Ok(attach_labels(&cfg.language().machine()?, corpus)?);
        }
    }
    Err(CliError::Config {
        field: "corpus.heldout".into(),
        message: format!("could not draw {} sequences absent from the training corpus", c.heldout),
    })
}

pub fn training_corpus(cfg: &ExperimentConfig) -> Result<Corpus> {
    let c = &cfg.corpus;
    let corpus = sample_corpus(cfg.language(), c.n, (c.min_len, c.max_len), c.seed)?;
    Ok(attach_labels(&cfg.language().machine()?, corpus)?)
}

pub fn gen(ctx: &Context) -> Result<Outcome> {
    let _lock = ctx.begin()?;
    let key = gen_key(&ctx.cfg);
    if ctx.fresh("gen", &key, &BTreeMap::new())? {
        return Ok(Outcome::Skipped);
    }
    let corpus = training_corpus(&ctx.cfg)?;
    let heldout = heldout_corpus(&ctx.cfg, &corpus)?;
    write_atomic(&ctx.store.path(CORPUS_FILE), &corpus_bytes(&corpus))?;
    write_atomic(&ctx.store.path(HELDOUT_FILE), &corpus_bytes(&heldout))?;
    ctx.note(format!(
        "gen: {} sequences ({} tokens), {} held out",
        corpus.len(),
        corpus.token_count(),
        heldout.len()
    ));
    ctx.stamp("gen", &key, BTreeMap::new(), &[CORPUS_FILE.into(), HELDOUT_FILE.into()])?;
    Ok(Outcome::Ran)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub config_hash: String,
    pub master_seed: u64,
    pub transformer: TransformerConfig,
    pub parameters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub config_hash: String,
    pub master_seed: u64,
    pub language: Language,
    pub epochs: Vec<EpochLog>,
    pub heldout: EvalMetrics,
}

pub fn train(ctx: &Context) -> Result<Outcome> {
    let _lock = ctx.begin()?;
    let inputs = ctx
        .store
        .upstream("gen", &gen_key(&ctx.cfg), &[CORPUS_FILE, HELDOUT_FILE])?;
    let key = train_key(&ctx.cfg);
    if ctx.fresh("train", &key, &inputs)? {
        return Ok(Outcome::Skipped);
    }
    let corpus = load_corpus(&ctx.store.path(CORPUS_FILE))?;
    let heldout = load_corpus(&ctx.store.path(HELDOUT_FILE))?;
    let total = ctx.cfg.transformer.epochs;
    let (model, epochs) = train_lm_with(ctx.cfg.transformer.clone(), &corpus, |e| {
        ctx.note(format!(
            "train: epoch {:>2}/{total} loss {:.5} token acc {:.4} recognition {:.4}",
            e.epoch, e.loss, e.token_accuracy, e.recognition
        ))
    })?;
    let heldout = evaluate(&model, &heldout)?;
    ctx.note(format!("train: held-out recognition {:.4}", heldout.recognition));
    let mut weights = Vec::new();
    model.write_checkpoint(&mut weights)?;
    write_atomic(&ctx.store.path(MODEL_FILE), &weights)?;
    let meta = ModelMeta {
        config_hash: ctx.cfg.hash(),
        master_seed: ctx.cfg.master_seed,
        transformer: ctx.cfg.transformer.clone(),
        parameters: model.param_count(),
    };
    write_json(&ctx.store.path(MODEL_META_FILE), &meta)?;
    let log = TrainLog {
        config_hash: ctx.cfg.hash(),
        master_seed: ctx.cfg.master_seed,
        language: ctx.cfg.language(),
        epochs,
        heldout,
    };
    write_json(&ctx.store.path(TRAIN_LOG_FILE), &log)?;
    ctx.stamp(
        "train",
        &key,
        inputs,
        &[MODEL_FILE.into(), MODEL_META_FILE.into(), TRAIN_LOG_FILE.into()],
    )?;
    Ok(Outcome::Ran)
}

fn load_model(ctx: &Context) -> Result<TransformerModel> {
    let path = ctx.store.path(MODEL_FILE);
    let file = std::fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
    TransformerModel::read_checkpoint(ctx.cfg.transformer.clone(), BufReader::new(file))
        .map_err(|e| CliError::format(&path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackMeta {
    pub stack: usize,
    pub classes: usize,
    pub excluded: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub train_sequences: Vec<usize>,
    pub validation_sequences: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeMeta {
    pub config_hash: String,
    pub master_seed: u64,
    pub language: Language,
    pub d_model: usize,
    pub control: ControlMode,
    pub stacks: Vec<StackMeta>,
}

fn split_files(stack: usize) -> [String; 4] {
    [
        format!("probe/stack{stack}.train.cprb"),
        format!("probe/stack{stack}.val.cprb"),
        format!("probe/stack{stack}.control.train.cprb"),
        format!("probe/stack{stack}.control.val.cprb"),
    ]
}

pub fn extract(ctx: &Context) -> Result<Outcome> {
    let _lock = ctx.begin()?;
    let mut inputs = ctx.store.upstream("gen", &gen_key(&ctx.cfg), &[CORPUS_FILE])?;
    inputs.extend(ctx.store.upstream("train", &train_key(&ctx.cfg), &[MODEL_FILE])?);
    let key = extract_key(&ctx.cfg);
    if ctx.fresh("extract", &key, &inputs)? {
        return Ok(Outcome::Skipped);
    }
    let corpus = load_corpus(&ctx.store.path(CORPUS_FILE))?;
    let model = load_model(ctx)?;
    let features = model.extract_embeddings(&corpus)?;
    let datasets = stack_datasets(&features, &corpus, &ctx.options(), ctx.cfg.probe.seed)?;
    let mut files = Vec::new();
    let mut stacks = Vec::new();
    for (task, control) in &datasets {
        let names = split_files(task.stack);
        let splits = [&task.train, &task.validation, &control.train, &control.validation];
        for (name, split) in names.iter().zip(splits) {
            let mut buf = Vec::new();
            write_probe_split(&mut buf, split, task.classes)?;
            write_atomic(&ctx.store.path(name), &buf)?;
            files.push(name.clone());
        }
        stacks.push(StackMeta {
            stack: task.stack,
            classes: task.classes,
            excluded: task.excluded,
            n_train: task.train.len(),
            n_val: task.validation.len(),
            train_sequences: task.train_sequences.clone(),
            validation_sequences: task.validation_sequences.clone(),
        });
        ctx.note(format!(
            "extract: stack {} D={} train {} val {}",
            task.stack,
            task.classes,
            task.train.len(),
            task.validation.len()
        ));
    }
    let meta = ProbeMeta {
        config_hash: ctx.cfg.hash(),
        master_seed: ctx.cfg.master_seed,
        language: ctx.cfg.language(),
        d_model: ctx.cfg.transformer.d_model,
        control: ctx.cfg.probe.control,
        stacks,
    };
    write_json(&ctx.store.path(PROBE_META_FILE), &meta)?;
    files.push(PROBE_META_FILE.into());
    ctx.stamp("extract", &key, inputs, &files)?;
    Ok(Outcome::Ran)
}

fn load_split(ctx: &Context, name: &str) -> Result<counterprobe::dataset::ProbeSplit> {
    let path = ctx.store.path(name);
    let file = std::fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
    let (split, _) = read_probe_split(BufReader::new(file)).map_err(|e| CliError::format(&path, e))?;
    Ok(split)
}

fn load_stack(ctx: &Context, meta: &StackMeta) -> Result<(ProbeDataset, ProbeDataset)> {
    let [train, val, ctrain, cval] = split_files(meta.stack);
    let make = |control: bool, train, validation| ProbeDataset {
        stack: meta.stack,
        classes: meta.classes,
        control,
        train,
        validation,
        excluded: meta.excluded,
        train_sequences: meta.train_sequences.clone(),
        validation_sequences: meta.validation_sequences.clone(),
    };
    Ok((
        make(false, load_split(ctx, &train)?, load_split(ctx, &val)?),
        make(true, load_split(ctx, &ctrain)?, load_split(ctx, &cval)?),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeDetails {
    pub config_hash: String,
    pub master_seed: u64,
    pub results: Vec<ProbeResult>,
}

/// One line of the baselines file: a linear probe on inputs other than the trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineRecord {
    /// `positional` or `untrained`.
    pub baseline: String,
    pub record: ResultRecord,
}

fn jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| CliError::format(path, e)))
        .collect()
}

/// Resolves a stack selection against `k` stacks; `None` means all of them.
pub fn resolve_stacks(selection: Option<&[usize]>, k: usize) -> Result<Vec<usize>> {
    match selection {
        None => Ok((1..=k).collect()),
        Some(list) => {
            if let Some(&s) = list.iter().find(|&&s| s == 0 || s > k) {
                return Err(CliError::Usage(format!("stack {s} outside 1..={k}")));
            }
            Ok(list.to_vec())
        }
    }
}

pub fn probe(ctx: &Context, stacks: Option<&[usize]>) -> Result<Outcome> {
    let _lock = ctx.begin()?;
    let stacks = resolve_stacks(stacks, ctx.cfg.language().counters())?;
    let mut wanted: Vec<String> = vec![PROBE_META_FILE.into()];
    for &s in &stacks {
        wanted.extend(split_files(s));
    }
    let wanted_refs: Vec<&str> = wanted.iter().map(String::as_str).collect();
    let mut inputs = ctx.store.upstream("extract", &extract_key(&ctx.cfg), &wanted_refs)?;
    let baselines = ctx.cfg.probe.baselines;
    if baselines {
        inputs.extend(ctx.store.upstream("gen", &gen_key(&ctx.cfg), &[CORPUS_FILE])?);
        inputs.extend(ctx.store.upstream("train", &train_key(&ctx.cfg), &[MODEL_FILE])?);
    }
    let key = probe_key(&ctx.cfg, &stacks);
    let outcome = if ctx.fresh("probe", &key, &inputs)? {
        Outcome::Skipped
    } else {
        run_probes(ctx, &stacks, baselines)?;
        let mut files = vec![RESULTS_FILE.into(), DETAILS_FILE.into()];
        if baselines {
            files.push(BASELINES_FILE.into());
        }
        ctx.stamp("probe", &key, inputs, &files)?;
        Outcome::Ran
    };
    let records: Vec<ResultRecord> = read_jsonl(&ctx.store.path(RESULTS_FILE))?;
    let violations = probe_violations(&records);
    if !violations.is_empty() {
        return Err(CliError::Bound(violations));
    }
    Ok(outcome)
}

fn run_probes(ctx: &Context, stacks: &[usize], baselines: bool) -> Result<()> {
    let meta: ProbeMeta = read_json(&ctx.store.path(PROBE_META_FILE))?;
    let language = ctx.cfg.language().to_string();
    let archs = ctx.cfg.probe.archs();
    let training = ctx.cfg.probe.training();
    let seed = ctx.cfg.probe.seed;
    let mut results = Vec::new();
    for &s in stacks {
        let stack_meta = meta
            .stacks
            .iter()
            .find(|m| m.stack == s)
            .ok_or_else(|| CliError::format(&ctx.store.path(PROBE_META_FILE), format!("no stack {s}")))?;
        let (task, control) = load_stack(ctx, stack_meta)?;
        for &arch in &archs {
            let r = probe_pair(&language, &task, &control, arch, training, seed)?;
            ctx.note(format!(
                "probe: stack {s} layers {} task {:.4} control {:.4} (D={})",
                arch.hidden_layers, r.task_acc, r.control_acc, r.classes
            ));
            results.push(r);
        }
    }
    let records: Vec<ResultRecord> = results.iter().map(ProbeResult::record).collect();
    write_atomic(&ctx.store.path(RESULTS_FILE), &jsonl(&records))?;
    let details = ProbeDetails {
        config_hash: ctx.cfg.hash(),
        master_seed: ctx.cfg.master_seed,
        results,
    };
    write_json(&ctx.store.path(DETAILS_FILE), &details)?;
    if baselines {
        let corpus = load_corpus(&ctx.store.path(CORPUS_FILE))?;
        let trained = load_model(ctx)?;
        let untrained = TransformerModel::new(ctx.cfg.transformer.clone())?;
        let mut lines = Vec::new();
        let sets = [
            ("positional", positional_features(&trained, &corpus)),
            ("untrained", untrained.extract_embeddings(&corpus)?),
        ];
        for (name, features) in sets {
            let rs = probe_features(&features, &corpus, &[ProbeArch::linear()], &ctx.options(), seed)?;
            for r in rs.iter().filter(|r| stacks.contains(&r.stack)) {
                ctx.note(format!("probe: {name} baseline stack {} task {:.4}", r.stack, r.task_acc));
                lines.push(BaselineRecord {
                    baseline: name.into(),
                    record: r.record(),
                });
            }
        }
        write_atomic(&ctx.store.path(BASELINES_FILE), &jsonl(&lines))?;
    }
    Ok(())
}

/// Best-architecture record per (language, stack), by task accuracy; ties keep the shallower.
pub fn best_records(records: &[ResultRecord]) -> Vec<ResultRecord> {
    let mut best: Vec<ResultRecord> = Vec::new();
    for r in records {
        match best.iter_mut().find(|b| b.language == r.language && b.stack == r.stack) {
            Some(b) if r.task_acc > b.task_acc => *b = r.clone(),
            Some(_) => {}
            None => best.push(r.clone()),
        }
    }
    best
}

/// Control band and selectivity failures among probe records.
pub fn probe_violations(records: &[ResultRecord]) -> Vec<String> {
    let mut out = Vec::new();
    for r in records.iter().filter(|r| r.n_val >= CONTROL_MIN_VAL) {
        let chance = 1.0 / r.classes as f64;
        if (r.control_acc - chance).abs() > CONTROL_TOLERANCE {
            out.push(format!(
                "{} stack {} layers {}: control accuracy {:.4} outside 1/D {:.4} +- {CONTROL_TOLERANCE}",
                r.language, r.stack, r.arch_layers, r.control_acc, chance
            ));
        }
    }
    for b in best_records(records) {
        if b.selectivity < MIN_SELECTIVITY {
            out.push(format!(
                "{} stack {}: best selectivity {:.4} below {MIN_SELECTIVITY}",
                b.language, b.stack, b.selectivity
            ));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaspVerify {
    pub config_hash: String,
    pub master_seed: u64,
    pub seed: u64,
    pub strings: usize,
    pub max_len: usize,
    pub stream_width: usize,
    pub layers: usize,
    pub mismatches: usize,
    /// First few disagreeing (string, s-op) pairs.
    pub examples: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionRecord {
    pub arch_layers: usize,
    pub accuracy: f64,
    #[serde(rename = "D")]
    pub classes: usize,
    pub n_train: usize,
    pub n_val: usize,
}

pub fn rasp_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.probe.seed.wrapping_add(0x7A5_0000)
}

/// Random strings over `( )` with lengths uniform in `0..=max_len`.
pub fn random_dyck_strings(n: usize, max_len: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(0..=max_len);
            (0..len).map(|_| if rng.gen_bool(0.5) { '(' } else { ')' }).collect()
        })
        .collect()
}

pub fn rasp(ctx: &Context, archs: &[usize], epochs: usize) -> Result<Outcome> {
    let _lock = ctx.begin()?;
    let key = rasp_key(&ctx.cfg, archs, epochs);
    let files: Vec<String> = ["layout.txt", "verify.json", RESULTS_FILE, "regression.jsonl"]
        .iter()
        .map(|f| format!("{RASP_DIR}/{f}"))
        .collect();
    let outcome = if ctx.fresh("rasp", &key, &BTreeMap::new())? {
        Outcome::Skipped
    } else {
        run_rasp(ctx, archs, epochs, &files)?;
        ctx.stamp("rasp", &key, BTreeMap::new(), &files)?;
        Outcome::Ran
    };
    let verify: RaspVerify = read_json(&ctx.store.path(&files[1]))?;
    let records: Vec<ResultRecord> = read_jsonl(&ctx.store.path(&files[2]))?;
    let regression: Vec<RegressionRecord> = read_jsonl(&ctx.store.path(&files[3]))?;
    let violations = rasp_violations(&verify, &records, &regression);
    if !violations.is_empty() {
        return Err(CliError::Bound(violations));
    }
    Ok(outcome)
}

fn run_rasp(ctx: &Context, archs: &[usize], epochs: usize, files: &[String]) -> Result<()> {
    let program = dyck1_program();
    let compiled = compile(&program)?;
    write_atomic(&ctx.store.path(&files[0]), compiled.layout_text().as_bytes())?;
    let seed = rasp_seed(&ctx.cfg);
    let mut mismatches = 0;
    let mut examples = Vec::new();
    for s in random_dyck_strings(RASP_STRINGS, RASP_MAX_LEN, seed) {
        let table = eval_program(&program, &s)?;
        let acts = compiled.run(&s)?;
        for id in program.ids() {
            let name = program.name(id);
            if compiled.decode(&acts, name)? != table.get(id) {
                mismatches += 1;
                if examples.len() < 5 {
                    examples.push((s.clone(), name.to_string()));
                }
            }
        }
    }
    ctx.note(format!(
        "rasp: {RASP_STRINGS} strings, {mismatches} mismatching s-op columns, stream width {}",
        compiled.width()
    ));
    let verify = RaspVerify {
        config_hash: ctx.cfg.hash(),
        master_seed: ctx.cfg.master_seed,
        seed,
        strings: RASP_STRINGS,
        max_len: RASP_MAX_LEN,
        stream_width: compiled.width(),
        layers: compiled.layers().len(),
        mismatches,
        examples,
    };
    write_json(&ctx.store.path(&files[1]), &verify)?;

    let mut dyck = ctx.cfg.clone();
    dyck.set_language(Language::Dyck1);
    let corpus = training_corpus(&dyck)?;
    let archs: Vec<ProbeArch> = archs.iter().map(|&l| ProbeArch::new(l)).collect::<std::result::Result<_, _>>()?;
    let mut options = ctx.options();
    options.training.epochs = epochs;
    let results = probe_compiled(&compiled, &corpus, &archs, &options, ctx.cfg.probe.seed)?;
    let records: Vec<ResultRecord> = results.classification.iter().map(ProbeResult::record).collect();
    let regression: Vec<RegressionRecord> = results
        .regression
        .iter()
        .map(|r| RegressionRecord {
            arch_layers: r.arch.hidden_layers,
            accuracy: r.validation.accuracy,
            classes: r.classes,
            n_train: r.n_train,
            n_val: r.n_val,
        })
        .collect();
    for (c, r) in records.iter().zip(&regression) {
        ctx.note(format!(
            "rasp: layers {} classification {:.4} control {:.4} regression {:.4}",
            c.arch_layers, c.task_acc, c.control_acc, r.accuracy
        ));
    }
    write_atomic(&ctx.store.path(&files[2]), &jsonl(&records))?;
    write_atomic(&ctx.store.path(&files[3]), &jsonl(&regression))?;
    Ok(())
}

pub fn rasp_violations(verify: &RaspVerify, records: &[ResultRecord], regression: &[RegressionRecord]) -> Vec<String> {
    let mut out = Vec::new();
    if verify.mismatches > 0 {
        out.push(format!(
            "compiled stream disagrees with the interpreter on {} s-op columns",
            verify.mismatches
        ));
    }
    for r in records.iter().filter(|r| r.arch_layers == 0) {
        if r.task_acc < RASP_MIN_ACCURACY {
            out.push(format!("linear classification probe accuracy {:.4} below {RASP_MIN_ACCURACY}", r.task_acc));
        }
    }
    for r in regression.iter().filter(|r| r.arch_layers == 0) {
        if r.accuracy < RASP_MIN_ACCURACY {
            out.push(format!("linear regression probe accuracy {:.4} below {RASP_MIN_ACCURACY}", r.accuracy));
        }
    }
    for r in records.iter().filter(|r| r.n_val >= CONTROL_MIN_VAL) {
        let chance = 1.0 / r.classes as f64;
        if (r.control_acc - chance).abs() > CONTROL_TOLERANCE {
            out.push(format!(
                "compiled stream layers {}: control accuracy {:.4} outside 1/D {:.4} +- {CONTROL_TOLERANCE}",
                r.arch_layers, r.control_acc, chance
            ));
        }
    }
    out
}
