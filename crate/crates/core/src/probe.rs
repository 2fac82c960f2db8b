//! Feed-forward probing classifiers over frozen token embeddings.
//!
//! A probe with `L` hidden layers is `[Linear(128) -> ReLU -> Dropout(0.2)] x L` followed
//! by a linear read-out; `L = 0` is a linear probe. Inputs are standardized with the
//! training split's per-feature mean and standard deviation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::counterlang::Language;
use crate::dataset::{
    build_probe_dataset, randomize_controls, ControlMode, Corpus, DatasetError, ProbeDataset, ProbeSplit,
};
use crate::tensorcore::{xavier_uniform, Graph, Optimizer, OptimizerKind, Tensor, TensorError, Var};
use crate::transformer::{ModelError, TransformerModel};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("probing needs at least two depth classes, found {0}")]
    TooFewClasses(usize),
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("probe expects {expected}-dimensional inputs, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("label {label} outside the probe's {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("at most {max} hidden layers are supported, got {found}")]
    TooDeep { found: usize, max: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, ProbeError>;

pub const MAX_HIDDEN_LAYERS: usize = 6;
pub const HIDDEN_WIDTH: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeArch {
    pub hidden_layers: usize,
    pub width: usize,
    pub dropout: f32,
}

impl ProbeArch {
    pub fn new(hidden_layers: usize) -> Result<Self> {
        if hidden_layers > MAX_HIDDEN_LAYERS {
            return Err(ProbeError::TooDeep {
                found: hidden_layers,
                max: MAX_HIDDEN_LAYERS,
            });
        }
        Ok(Self {
            hidden_layers,
            width: HIDDEN_WIDTH,
            dropout: 0.2,
        })
    }

    pub fn linear() -> Self {
        Self::new(0).expect("0 layers")
    }

    /// Every depth from linear to the deepest supported probe.
    pub fn sweep() -> Vec<Self> {
        (0..=MAX_HIDDEN_LAYERS).map(|l| Self::new(l).expect("in range")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeTraining {
    pub epochs: usize,
    pub lr: f32,
    pub batch: usize,
}

impl Default for ProbeTraining {
    fn default() -> Self {
        Self {
            epochs: 10,
            lr: 1e-3,
            batch: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeTask {
    /// Softmax over depth classes, cross-entropy loss.
    Classification,
    /// A single real output, squared-error loss; correct when it rounds to the depth.
    Regression,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    arch: ProbeArch,
    task: ProbeTask,
    classes: usize,
    mean: Vec<f32>,
    inv_std: Vec<f32>,
    /// Alternating weight and bias tensors, input to output.
    params: Vec<Tensor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl ProbeModel {
    pub fn arch(&self) -> ProbeArch {
        self.arch
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    fn outputs(&self) -> usize {
        match self.task {
            ProbeTask::Classification => self.classes,
            ProbeTask::Regression => 1,
        }
    }

    fn standardized(&self, split: &ProbeSplit, rows: &[usize]) -> Tensor {
        let d = split.dim;
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            data.extend(
                split
                    .feature(r)
                    .iter()
                    .zip(&self.mean)
                    .zip(&self.inv_std)
                    .map(|((x, m), s)| (x - m) * s),
            );
        }
        Tensor::matrix(rows.len(), d, data).expect("shape")
    }

    fn forward<'a>(&'a self, g: &mut Graph<'a>, x: Tensor) -> Result<(Vec<Var>, Var)> {
        let vars: Vec<_> = self.params.iter().map(|p| g.param(p)).collect();
        let mut h = g.constant(x);
        let layers = vars.len() / 2;
        for (i, wb) in vars.chunks_exact(2).enumerate() {
            h = g.matmul(h, wb[0])?;
            h = g.add_row(h, wb[1])?;
            if i + 1 < layers {
                h = g.relu(h);
                h = g.dropout(h, self.arch.dropout);
            }
        }
        Ok((vars, h))
    }

    /// Raw outputs (logits, or the regression value) for every record of `split`.
    pub fn predict_raw(&self, split: &ProbeSplit) -> Result<Tensor> {
        if split.dim != self.input_dim() {
            return Err(ProbeError::DimensionMismatch {
                expected: self.input_dim(),
                found: split.dim,
            });
        }
        let mut out = Vec::with_capacity(split.len() * self.outputs());
        let rows: Vec<usize> = (0..split.len()).collect();
        for chunk in rows.chunks(1024) {
            let mut g = Graph::new();
            let (_, y) = self.forward(&mut g, self.standardized(split, chunk))?;
            out.extend_from_slice(g.value(y).data());
        }
        Ok(Tensor::matrix(split.len(), self.outputs(), out)?)
    }

    /// Predicted class per record; argmax ties go to the lower class.
    pub fn predict(&self, split: &ProbeSplit) -> Result<Vec<usize>> {
        let raw = self.predict_raw(split)?;
        Ok((0..raw.rows())
            .map(|r| match self.task {
                ProbeTask::Classification => argmax(raw.row(r)),
                ProbeTask::Regression => raw.row(r)[0].round().max(0.0) as usize,
            })
            .collect())
    }

    pub fn evaluate(&self, split: &ProbeSplit) -> Result<Evaluation> {
        let predictions = self.predict(split)?;
        evaluate_predictions(&predictions, &split.labels, self.classes)
    }
}

pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Accuracy and confusion matrix; predictions beyond the last class count as wrong and
/// are tallied in the last column.
pub fn evaluate_predictions(predictions: &[usize], labels: &[u16], classes: usize) -> Result<Evaluation> {
    let mut confusion = vec![vec![0usize; classes]; classes];
    let mut correct = 0;
    for (&p, &y) in predictions.iter().zip(labels) {
        let y = y as usize;
        if y >= classes {
            return Err(ProbeError::LabelOutOfRange { label: y, classes });
        }
        confusion[y][p.min(classes - 1)] += 1;
        correct += usize::from(p == y);
    }
    let accuracy = if labels.is_empty() {
        0.0
    } else {
        correct as f64 / labels.len() as f64
    };
    Ok(Evaluation { accuracy, confusion })
}

fn standardization(split: &ProbeSplit) -> (Vec<f32>, Vec<f32>) {
    let d = split.dim;
    let n = split.len().max(1) as f64;
    let mut mean = vec![0f64; d];
    for i in 0..split.len() {
        for (m, &x) in mean.iter_mut().zip(split.feature(i)) {
            *m += f64::from(x);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0f64; d];
    for i in 0..split.len() {
        for ((v, &x), m) in var.iter_mut().zip(split.feature(i)).zip(&mean) {
            *v += (f64::from(x) - m).powi(2);
        }
    }
    let inv_std = var
        .iter()
        .map(|v| {
            let s = (v / n).sqrt();
            if s > 1e-6 {
                (1.0 / s) as f32
            } else {
                1.0
            }
        })
        .collect();
    (mean.into_iter().map(|m| m as f32).collect(), inv_std)
}

/// Trains a probe on `train` and returns it with its per-epoch log.
pub fn fit_probe(
    train: &ProbeSplit,
    classes: usize,
    arch: ProbeArch,
    task: ProbeTask,
    training: ProbeTraining,
    seed: u64,
) -> Result<(ProbeModel, Vec<ProbeEpoch>)> {
    if train.is_empty() {
        return Err(ProbeError::EmptySplit("train"));
    }
    if task == ProbeTask::Classification && classes < 2 {
        return Err(ProbeError::TooFewClasses(classes));
    }
    if let Some(&bad) = train.labels.iter().find(|&&l| l as usize >= classes) {
        return Err(ProbeError::LabelOutOfRange {
            label: bad as usize,
            classes,
        });
    }
    let (mean, inv_std) = standardization(train);
    let outputs = match task {
        ProbeTask::Classification => classes,
        ProbeTask::Regression => 1,
    };
    let mut widths = vec![train.dim];
    widths.extend(std::iter::repeat_n(arch.width, arch.hidden_layers));
    widths.push(outputs);
    let mut params = Vec::new();
    for (i, w) in widths.windows(2).enumerate() {
        params.push(xavier_uniform(w[0], w[1], seed.wrapping_mul(1_000_003).wrapping_add(i as u64)));
        params.push(Tensor::zeros(&[1, w[1]]));
    }
    if task == ProbeTask::Regression {
        // Start the read-out at the mean target so the weights only fit the residual.
        let mean_label = train.labels.iter().map(|&l| f64::from(l)).sum::<f64>() / train.len() as f64;
        params.last_mut().expect("bias").data_mut()[0] = mean_label as f32;
    }
    let mut model = ProbeModel {
        arch,
        task,
        classes,
        mean,
        inv_std,
        params,
    };
    let mut optimizer = {
        let refs: Vec<&Tensor> = model.params.iter().collect();
        Optimizer::new(OptimizerKind::adam(), training.lr, &refs)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(training.epochs);
    let mut step_seed = seed.wrapping_mul(0x2545_F491_4F6C_DD1D);
    for epoch in 1..=training.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for batch in order.chunks(training.batch) {
            let x = model.standardized(train, batch);
            step_seed = step_seed.wrapping_add(1);
            let mut g = Graph::training(step_seed);
            let (vars, y) = model.forward(&mut g, x)?;
            let labels: Vec<usize> = batch.iter().map(|&r| train.labels[r] as usize).collect();
            let loss = match task {
                ProbeTask::Classification => g.cross_entropy(y, &labels)?,
                ProbeTask::Regression => {
                    let target: Vec<f32> = labels.iter().map(|&l| l as f32).collect();
                    g.mse(y, &target)?
                }
            };
            g.backward(loss)?;
            loss_sum += f64::from(g.value(loss).item()) * batch.len() as f64;
            let out = g.value(y);
            correct += labels
                .iter()
                .enumerate()
                .filter(|&(r, &l)| match task {
                    ProbeTask::Classification => argmax(out.row(r)) == l,
                    ProbeTask::Regression => out.row(r)[0].round() as i64 == l as i64,
                })
                .count();
            let grads: Vec<Vec<f32>> = vars
                .iter()
                .map(|&v| g.grad(v).map(<[f32]>::to_vec).unwrap_or_default())
                .collect();
            drop(g);
            let mut refs: Vec<&mut Tensor> = model.params.iter_mut().collect();
            optimizer.step(&mut refs, &grads);
        }
        log.push(ProbeEpoch {
            epoch,
            loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
        });
    }
    Ok((model, log))
}

/// Outcome of training one probe on a dataset and scoring it on the validation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRun {
    pub arch: ProbeArch,
    pub task: ProbeTask,
    pub classes: usize,
    pub control: bool,
    pub validation: Evaluation,
    pub log: Vec<ProbeEpoch>,
    /// Every training label is the same class.
    pub degenerate: bool,
    pub n_train: usize,
    pub n_val: usize,
}

/// Trains a classification probe and evaluates it on the validation split.
pub fn train_probe(dataset: &ProbeDataset, arch: ProbeArch, seed: u64) -> Result<(ProbeModel, ProbeRun)> {
    train_probe_with(dataset, arch, ProbeTask::Classification, ProbeTraining::default(), seed)
}

pub fn train_probe_with(
    dataset: &ProbeDataset,
    arch: ProbeArch,
    task: ProbeTask,
    training: ProbeTraining,
    seed: u64,
) -> Result<(ProbeModel, ProbeRun)> {
    if dataset.validation.is_empty() {
        return Err(ProbeError::EmptySplit("validation"));
    }
    let (model, log) = fit_probe(&dataset.train, dataset.classes, arch, task, training, seed)?;
    let validation = model.evaluate(&dataset.validation)?;
    let first = dataset.train.labels.first().copied();
    let degenerate = dataset.train.labels.iter().all(|&l| Some(l) == first);
    Ok((
        model,
        ProbeRun {
            arch,
            task,
            classes: dataset.classes,
            control: dataset.control,
            validation,
            log,
            degenerate,
            n_train: dataset.train.len(),
            n_val: dataset.validation.len(),
        },
    ))
}

/// One (stack, architecture) cell of a probing sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub language: String,
    pub stack: usize,
    pub arch: ProbeArch,
    pub task_acc: f64,
    pub control_acc: f64,
    pub selectivity: f64,
    pub classes: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub seed: u64,
    pub task_confusion: Vec<Vec<usize>>,
    pub control_confusion: Vec<Vec<usize>>,
    pub task_log: Vec<ProbeEpoch>,
    pub control_log: Vec<ProbeEpoch>,
    pub degenerate: bool,
}

/// The line-oriented summary record of a [`ProbeResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    pub language: String,
    pub stack: usize,
    pub arch_layers: usize,
    pub task_acc: f64,
    pub control_acc: f64,
    pub selectivity: f64,
    #[serde(rename = "D")]
    pub classes: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub seed: u64,
}

impl ProbeResult {
    pub fn record(&self) -> ResultRecord {
        ResultRecord {
            language: self.language.clone(),
            stack: self.stack,
            arch_layers: self.arch.hidden_layers,
            task_acc: self.task_acc,
            control_acc: self.control_acc,
            selectivity: self.selectivity,
            classes: self.classes,
            n_train: self.n_train,
            n_val: self.n_val,
            seed: self.seed,
        }
    }

    /// Whether control accuracy lies within `1/D +- tolerance`.
    pub fn control_in_band(&self, tolerance: f64) -> bool {
        (self.control_acc - 1.0 / self.classes as f64).abs() <= tolerance
    }
}

pub fn selectivity(task_acc: f64, control_acc: f64) -> f64 {
    task_acc - control_acc
}

/// Trains task and control probes with identical initialization and combines them.
pub fn probe_pair(
    language: &str,
    task: &ProbeDataset,
    control: &ProbeDataset,
    arch: ProbeArch,
    training: ProbeTraining,
    seed: u64,
) -> Result<ProbeResult> {
    let (_, t) = train_probe_with(task, arch, ProbeTask::Classification, training, seed)?;
    let (_, c) = train_probe_with(control, arch, ProbeTask::Classification, training, seed)?;
    Ok(ProbeResult {
        language: language.to_string(),
        stack: task.stack,
        arch,
        task_acc: t.validation.accuracy,
        control_acc: c.validation.accuracy,
        selectivity: selectivity(t.validation.accuracy, c.validation.accuracy),
        classes: task.classes,
        n_train: t.n_train,
        n_val: t.n_val,
        seed,
        task_confusion: t.validation.confusion,
        control_confusion: c.validation.confusion,
        task_log: t.log,
        control_log: c.log,
        degenerate: t.degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub split_ratio: f64,
    pub control: ControlMode,
    pub training: ProbeTraining,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            split_ratio: 0.8,
            control: ControlMode::PerRecord,
            training: ProbeTraining::default(),
        }
    }
}

/// Derived seeds so the split, the control labels and probe initialization are independent.
pub fn split_seed(seed: u64) -> u64 {
    seed ^ 0x5151_7A7A
}

pub fn control_seed(seed: u64, stack: usize) -> u64 {
    seed.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(stack as u64)
}

/// Task and control datasets for every stack of `language`.
pub fn stack_datasets(
    features: &Tensor,
    corpus: &Corpus,
    options: &SuiteOptions,
    seed: u64,
) -> Result<Vec<(ProbeDataset, ProbeDataset)>> {
    (1..=corpus.language.counters())
        .map(|stack| {
            let task = build_probe_dataset(features, corpus, stack, options.split_ratio, split_seed(seed))?;
            let control = randomize_controls(&task, control_seed(seed, stack), options.control)?;
            Ok((task, control))
        })
        .collect()
}

/// Probes every stack with every architecture; results ordered by (stack, arch).
pub fn probe_features(
    features: &Tensor,
    corpus: &Corpus,
    archs: &[ProbeArch],
    options: &SuiteOptions,
    seed: u64,
) -> Result<Vec<ProbeResult>> {
    let language = corpus.language.to_string();
    let mut results = Vec::new();
    for (task, control) in stack_datasets(features, corpus, options, seed)? {
        for &arch in archs {
            results.push(probe_pair(&language, &task, &control, arch, options.training, seed)?);
        }
    }
    Ok(results)
}

/// Probes the final hidden states of `model` on `corpus`.
pub fn run_suite(
    model: &TransformerModel,
    corpus: &Corpus,
    language: Language,
    archs: &[ProbeArch],
    seed: u64,
    options: &SuiteOptions,
) -> Result<Vec<ProbeResult>> {
    debug_assert_eq!(language, corpus.language);
    let embeddings = model.extract_embeddings(corpus)?;
    probe_features(&embeddings, corpus, archs, options, seed)
}

/// Positional vectors of each token, the inputs of the position-only baseline probe.
pub fn positional_features(model: &TransformerModel, corpus: &Corpus) -> Tensor {
    let d = model.config().d_model;
    let mut data = Vec::with_capacity(corpus.token_count() * d);
    for s in &corpus.samples {
        data.extend_from_slice(model.positional_rows(s.tokens.len()).data());
    }
    Tensor::matrix(corpus.token_count(), d, data).expect("shape")
}

/// Best task accuracy over architectures, per stack (1-based), from a result list.
pub fn best_by_stack(results: &[ProbeResult]) -> Vec<(usize, ProbeResult)> {
    let mut best: Vec<(usize, ProbeResult)> = Vec::new();
    for r in results {
        match best.iter_mut().find(|(s, _)| *s == r.stack) {
            Some((_, b)) if r.task_acc > b.task_acc => *b = r.clone(),
            Some(_) => {}
            None => best.push((r.stack, r.clone())),
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Depth is the first coordinate plus noise elsewhere.
    fn separable(n: usize, classes: usize, seed: u64) -> ProbeSplit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut split = ProbeSplit::new(4);
        for _ in 0..n {
            let label = rng.gen_range(0..classes) as u16;
            let f = [
                f32::from(label) + rng.gen_range(-0.2..0.2),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            split.push(&f, label, 0);
        }
        split
    }

    /// Larger steps so the small synthetic sets converge quickly.
    fn fast() -> ProbeTraining {
        ProbeTraining {
            epochs: 20,
            lr: 1e-2,
            batch: 32,
        }
    }

    fn dataset(train: ProbeSplit, validation: ProbeSplit, classes: usize) -> ProbeDataset {
        ProbeDataset {
            stack: 1,
            classes,
            control: false,
            train,
            validation,
            excluded: 0,
            train_sequences: vec![],
            validation_sequences: vec![],
        }
    }

    #[test]
    fn linear_probe_separates_a_coordinate_encoding() {
        let ds = dataset(separable(4000, 5, 1), separable(1000, 5, 2), 5);
        let (_, run) = train_probe_with(&ds, ProbeArch::linear(), ProbeTask::Classification, fast(), 3).unwrap();
        assert!(run.validation.accuracy >= 0.99, "{}", run.validation.accuracy);
        assert!(!run.degenerate);
    }

    #[test]
    fn same_seed_same_result() {
        let ds = dataset(separable(500, 3, 1), separable(200, 3, 2), 3);
        let arch = ProbeArch::new(1).unwrap();
        let (m1, r1) = train_probe(&ds, arch, 9).unwrap();
        let (m2, r2) = train_probe(&ds, arch, 9).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(r1, r2);
    }

    #[test]
    fn constant_labels_are_flagged_degenerate() {
        let mut train = separable(300, 3, 1);
        train.labels.iter_mut().for_each(|l| *l = 2);
        let mut val = separable(100, 3, 2);
        val.labels.iter_mut().for_each(|l| *l = 2);
        let (_, run) =
            train_probe_with(&dataset(train, val, 3), ProbeArch::linear(), ProbeTask::Classification, fast(), 0).unwrap();
        assert!(run.degenerate);
        assert_eq!(run.validation.accuracy, 1.0);
    }

    #[test]
    fn error_paths() {
        let ds = dataset(separable(10, 1, 1), separable(10, 1, 2), 1);
        assert!(matches!(train_probe(&ds, ProbeArch::linear(), 0), Err(ProbeError::TooFewClasses(1))));
        let ds = dataset(ProbeSplit::new(4), separable(10, 2, 2), 2);
        assert!(matches!(train_probe(&ds, ProbeArch::linear(), 0), Err(ProbeError::EmptySplit("train"))));
        assert!(matches!(ProbeArch::new(7), Err(ProbeError::TooDeep { .. })));
        let ds = dataset(separable(50, 2, 1), separable(10, 2, 2), 2);
        let (model, _) = train_probe(&ds, ProbeArch::linear(), 0).unwrap();
        let wrong = ProbeSplit { dim: 3, ..ProbeSplit::new(3) };
        assert!(matches!(model.evaluate(&wrong), Err(ProbeError::DimensionMismatch { .. })));
    }

    #[test]
    fn evaluation_of_fixed_predictors() {
        let labels = [0u16, 1, 2, 2, 1, 0, 2];
        let perfect: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
        let e = evaluate_predictions(&perfect, &labels, 3).unwrap();
        assert_eq!(e.accuracy, 1.0);
        for (i, row) in e.confusion.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                assert_eq!(c > 0, i == j);
            }
        }
        let majority = vec![2; labels.len()];
        let e = evaluate_predictions(&majority, &labels, 3).unwrap();
        assert!((e.accuracy - 3.0 / 7.0).abs() < 1e-12);
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
    }

    #[test]
    fn uniform_random_predictor_is_near_chance() {
        // Monte-Carlo: balanced labels, independent uniform predictions.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let classes = 5;
        let n = 20_000;
        let labels: Vec<u16> = (0..n).map(|i| (i % classes) as u16).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let acc = evaluate_predictions(&preds, &labels, classes).unwrap().accuracy;
        // 4 standard deviations of a binomial proportion at p = 0.2.
        let sd = (0.2f64 * 0.8 / n as f64).sqrt();
        assert!((acc - 0.2).abs() < 4.0 * sd, "{acc}");
    }

    #[test]
    fn regression_probe_recovers_a_coordinate() {
        let ds = dataset(separable(4000, 6, 5), separable(1000, 6, 6), 6);
        let (_, run) = train_probe_with(
            &ds,
            ProbeArch::linear(),
            ProbeTask::Regression,
            fast(),
            1,
        )
        .unwrap();
        assert!(run.validation.accuracy >= 0.99, "{}", run.validation.accuracy);
    }

    #[test]
    fn selectivity_is_antisymmetric() {
        for (a, b) in [(0.9, 0.1), (0.3, 0.35), (0.0, 1.0)] {
            assert_eq!(selectivity(a, b), -selectivity(b, a));
        }
    }

    #[test]
    fn best_by_stack_takes_the_max() {
        let mk = |stack, layers, acc| ProbeResult {
            language: "x".into(),
            stack,
            arch: ProbeArch::new(layers).unwrap(),
            task_acc: acc,
            control_acc: 0.1,
            selectivity: acc - 0.1,
            classes: 4,
            n_train: 1,
            n_val: 1,
            seed: 0,
            task_confusion: vec![],
            control_confusion: vec![],
            task_log: vec![],
            control_log: vec![],
            degenerate: false,
        };
        let rs = vec![mk(1, 0, 0.5), mk(1, 1, 0.7), mk(2, 0, 0.9), mk(2, 1, 0.6)];
        let best = best_by_stack(&rs);
        assert_eq!(best.len(), 2);
        assert_eq!(best[0].1.task_acc, 0.7);
        assert_eq!(best[1].1.task_acc, 0.9);
        assert!(best[0].1.task_acc >= rs[0].task_acc);
    }
}
