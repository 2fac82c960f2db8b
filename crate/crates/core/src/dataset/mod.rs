//! Corpus sampling and labeling, plus token-level probing datasets.

mod io;

pub use io::{
    read_corpus, read_probe_split, write_corpus, write_probe_split, PROBE_MAGIC, PROBE_VERSION,
    CORPUS_FORMAT, CORPUS_VERSION,
};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::counterlang::{CounterError, CounterMachine, DepthTrace, Language};
use crate::tensorcore::Tensor;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no feasible even length in [{min}, {max}] (need 2 <= min <= max)")]
    InfeasibleLength { min: usize, max: usize },
    #[error("sample count must be positive")]
    EmptyRequest,
    #[error("sequence {index} is not a member of {language}")]
    NotMember { index: usize, language: Language },
    #[error("corpus is not labeled")]
    Unlabeled,
    #[error("embedding rows ({rows}) do not match corpus token count ({tokens})")]
    CountMismatch { rows: usize, tokens: usize },
    #[error("split ratio {0} must lie strictly between 0 and 1")]
    BadRatio(f64),
    #[error("split leaves an empty {0} side")]
    EmptySplit(&'static str),
    #[error("stack {stack} out of range for {counters} counters")]
    BadStack { stack: usize, counters: usize },
    #[error("dataset is already a control task")]
    AlreadyControl,
    #[error("per-token-type controls need token ids, which this dataset does not carry")]
    MissingTokens,
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },
    #[error("unsupported {what} version {found} (expected {expected})")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },
    #[error(transparent)]
    Counter(#[from] CounterError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// Valid-next labels (k-hot rows over the vocabulary) and the depth trace of one sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub labels: Vec<Vec<u8>>,
    pub depths: DepthTrace,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub tokens: Vec<usize>,
    pub annotation: Option<Annotation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub language: Language,
    pub seed: u64,
    pub samples: Vec<Sample>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.samples.iter().map(|s| s.tokens.len()).sum()
    }

    pub fn is_labeled(&self) -> bool {
        self.samples.iter().all(|s| s.annotation.is_some())
    }

    /// Keeps the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            language: self.language,
            seed: self.seed,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }
}

/// Generator for sample `index` of a corpus seeded with `seed`, independent of generation order.
fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Draws `n` member strings with even target lengths uniform over `[min, max]`.
///
/// Each string is a random walk: with `r` symbols left and open sum `s`, an open symbol
/// (uniform over the pairs) is chosen with probability `(r - s) / (2r)`, forced when
/// `s = 0`; otherwise a close of a uniformly chosen open pair. Every counter is zero at
/// exactly the target length.
pub fn sample_corpus(language: Language, n: usize, len_range: (usize, usize), seed: u64) -> Result<Corpus> {
    let (min, max) = len_range;
    if n == 0 {
        return Err(DatasetError::EmptyRequest);
    }
    let lengths: Vec<usize> = (min.max(2)..=max).filter(|l| l % 2 == 0).collect();
    if min < 2 || lengths.is_empty() {
        return Err(DatasetError::InfeasibleLength { min, max });
    }
    let k = language.counters();
    let samples = (0..n)
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let target = lengths[rng.gen_range(0..lengths.len())];
            Sample {
                tokens: random_walk(&mut rng, k, target),
                annotation: None,
            }
        })
        .collect();
    Ok(Corpus {
        language,
        seed,
        samples,
    })
}

fn random_walk(rng: &mut impl Rng, k: usize, len: usize) -> Vec<usize> {
    let mut counters = vec![0usize; k];
    let mut open_sum = 0usize;
    let mut tokens = Vec::with_capacity(len);
    for t in 0..len {
        let remaining = len - t;
        let p_open = if open_sum == 0 {
            1.0
        } else {
            (remaining - open_sum) as f64 / (2 * remaining) as f64
        };
        if rng.gen_bool(p_open) {
            let pair = rng.gen_range(0..k);
            counters[pair] += 1;
            open_sum += 1;
            tokens.push(2 * pair);
        } else {
            let open: Vec<usize> = (0..k).filter(|&p| counters[p] > 0).collect();
            let pair = open[rng.gen_range(0..open.len())];
            counters[pair] -= 1;
            open_sum -= 1;
            tokens.push(2 * pair + 1);
        }
    }
    tokens
}

/// Valid-next k-hot rows and counter depths for one member sequence.
pub fn annotate(machine: &CounterMachine, tokens: &[usize]) -> std::result::Result<Annotation, CounterError> {
    let vocab = machine.alphabet().len();
    let mut config = machine.initial_config();
    let mut labels = Vec::with_capacity(tokens.len());
    for &id in tokens {
        if id >= vocab {
            return Err(CounterError::UnknownToken(id));
        }
        config = machine.step_id(&config, id);
        let mut row = vec![0u8; vocab];
        for next in machine.valid_next_from(&config) {
            row[next] = 1;
        }
        labels.push(row);
    }
    Ok(Annotation {
        labels,
        depths: machine.depth_trace_ids(tokens)?,
    })
}

/// Fills labels and depth traces, rejecting any non-member sequence.
pub fn attach_labels(machine: &CounterMachine, mut corpus: Corpus) -> Result<Corpus> {
    for (index, sample) in corpus.samples.iter_mut().enumerate() {
        if !machine.is_member_ids(&sample.tokens) {
            return Err(DatasetError::NotMember {
                index,
                language: corpus.language,
            });
        }
        sample.annotation = Some(annotate(machine, &sample.tokens)?);
    }
    Ok(corpus)
}

/// Token-level records of one split: row-major features plus class labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProbeSplit {
    pub dim: usize,
    pub features: Vec<f32>,
    pub labels: Vec<u16>,
    /// Token id at each record; empty when read back from disk.
    pub tokens: Vec<u16>,
}

impl ProbeSplit {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, feature: &[f32], label: u16, token: u16) {
        self.features.extend_from_slice(feature);
        self.labels.push(label);
        self.tokens.push(token);
    }

    pub fn histogram(&self, classes: usize) -> Vec<usize> {
        let mut h = vec![0; classes];
        for &l in &self.labels {
            if let Some(c) = h.get_mut(l as usize) {
                *c += 1;
            }
        }
        h
    }
}

/// How control labels are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlMode {
    /// An independent uniform class per record.
    #[default]
    PerRecord,
    /// One uniform class per token type, shared by every occurrence.
    PerTokenType,
}

/// Embedding/depth pairs for one stack, split by sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeDataset {
    /// 1-based stack index.
    pub stack: usize,
    /// Class count `D = 1 + max depth in the training split`.
    pub classes: usize,
    pub control: bool,
    pub train: ProbeSplit,
    pub validation: ProbeSplit,
    /// Validation records dropped for depth >= `classes`.
    pub excluded: usize,
    pub train_sequences: Vec<usize>,
    pub validation_sequences: Vec<usize>,
}

impl ProbeDataset {
    pub fn dim(&self) -> usize {
        self.train.dim
    }
}

/// Sequence-level split of `0..n`: a seeded permutation, first `round(n * ratio)` go to train.
/// Both halves are returned in ascending order.
pub fn split_sequences(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DatasetError::BadRatio(ratio));
    }
    let n_train = (n as f64 * ratio).round() as usize;
    if n_train == 0 {
        return Err(DatasetError::EmptySplit("train"));
    }
    if n_train >= n {
        return Err(DatasetError::EmptySplit("validation"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = order[..n_train].to_vec();
    let mut val = order[n_train..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

/// Pairs each token's embedding row with the depth of `stack` (1-based) after that token.
///
/// `embeddings` holds one row per corpus token, in corpus order.
pub fn build_probe_dataset(
    embeddings: &Tensor,
    corpus: &Corpus,
    stack: usize,
    ratio: f64,
    seed: u64,
) -> Result<ProbeDataset> {
    let tokens = corpus.token_count();
    if embeddings.rows() != tokens {
        return Err(DatasetError::CountMismatch {
            rows: embeddings.rows(),
            tokens,
        });
    }
    let counters = corpus.language.counters();
    if stack == 0 || stack > counters {
        return Err(DatasetError::BadStack { stack, counters });
    }
    if !corpus.is_labeled() {
        return Err(DatasetError::Unlabeled);
    }
    let (train_seq, val_seq) = split_sequences(corpus.len(), ratio, seed)?;
    let mut offsets = Vec::with_capacity(corpus.len());
    let mut acc = 0;
    for s in &corpus.samples {
        offsets.push(acc);
        acc += s.tokens.len();
    }
    let depth_of = |seq: usize| -> Vec<u32> {
        corpus.samples[seq]
            .annotation
            .as_ref()
            .expect("checked labeled")
            .depths
            .column(stack - 1)
    };
    let classes = 1 + train_seq
        .iter()
        .flat_map(|&s| depth_of(s))
        .max()
        .unwrap_or(0) as usize;
    let dim = embeddings.cols();
    let fill = |seqs: &[usize], split: &mut ProbeSplit| -> usize {
        let mut excluded = 0;
        for &s in seqs {
            for (t, d) in depth_of(s).into_iter().enumerate() {
                if d as usize >= classes {
                    excluded += 1;
                    continue;
                }
                let token = corpus.samples[s].tokens[t] as u16;
                split.push(embeddings.row(offsets[s] + t), d as u16, token);
            }
        }
        excluded
    };
    let mut train = ProbeSplit::new(dim);
    let mut validation = ProbeSplit::new(dim);
    fill(&train_seq, &mut train);
    let excluded = fill(&val_seq, &mut validation);
    Ok(ProbeDataset {
        stack,
        classes,
        control: false,
        train,
        validation,
        excluded,
        train_sequences: train_seq,
        validation_sequences: val_seq,
    })
}

/// Replaces every depth label with a seeded uniform draw over `0..classes`.
pub fn randomize_controls(dataset: &ProbeDataset, seed: u64, mode: ControlMode) -> Result<ProbeDataset> {
    if dataset.control {
        return Err(DatasetError::AlreadyControl);
    }
    let classes = dataset.classes as u16;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = dataset.clone();
    out.control = true;
    match mode {
        ControlMode::PerRecord => {
            for split in [&mut out.train, &mut out.validation] {
                for l in split.labels.iter_mut() {
                    *l = rng.gen_range(0..classes);
                }
            }
        }
        ControlMode::PerTokenType => {
            if out.train.tokens.len() != out.train.len() || out.validation.tokens.len() != out.validation.len() {
                return Err(DatasetError::MissingTokens);
            }
            let types = 1 + out
                .train
                .tokens
                .iter()
                .chain(&out.validation.tokens)
                .copied()
                .max()
                .unwrap_or(0) as usize;
            let table: Vec<u16> = (0..types).map(|_| rng.gen_range(0..classes)).collect();
            for split in [&mut out.train, &mut out.validation] {
                for (l, &tok) in split.labels.iter_mut().zip(&split.tokens) {
                    *l = table[tok as usize];
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(language: Language, strings: &[&str]) -> Corpus {
        let m = language.machine().unwrap();
        let samples = strings
            .iter()
            .map(|s| Sample {
                tokens: m.alphabet().encode(s).unwrap(),
                annotation: None,
            })
            .collect();
        attach_labels(&m, Corpus { language, seed: 0, samples }).unwrap()
    }

    #[test]
    fn small_dyck_corpus_is_members_of_requested_lengths() {
        let c = sample_corpus(Language::Dyck1, 3, (2, 4), 7).unwrap();
        let m = Language::Dyck1.machine().unwrap();
        assert_eq!(c.len(), 3);
        for s in &c.samples {
            assert!(s.tokens.len() == 2 || s.tokens.len() == 4);
            assert!(m.is_member_ids(&s.tokens));
        }
    }

    #[test]
    fn length_two_dyck_is_always_a_single_pair() {
        let c = sample_corpus(Language::Dyck1, 50, (2, 2), 1).unwrap();
        assert!(c.samples.iter().all(|s| s.tokens == vec![0, 1]));
    }

    #[test]
    fn sampling_is_deterministic_and_seed_sensitive() {
        let a = sample_corpus(Language::Shuffle(2), 40, (2, 20), 9).unwrap();
        assert_eq!(a, sample_corpus(Language::Shuffle(2), 40, (2, 20), 9).unwrap());
        assert_ne!(a, sample_corpus(Language::Shuffle(2), 40, (2, 20), 10).unwrap());
        // Samples do not depend on how many are drawn.
        let b = sample_corpus(Language::Shuffle(2), 10, (2, 20), 9).unwrap();
        assert_eq!(&a.samples[..10], &b.samples[..]);
    }

    #[test]
    fn infeasible_lengths_are_rejected() {
        for range in [(1, 4), (3, 3), (6, 4), (0, 0)] {
            assert!(matches!(
                sample_corpus(Language::Dyck1, 1, range, 0),
                Err(DatasetError::InfeasibleLength { .. })
            ));
        }
        assert!(sample_corpus(Language::Dyck1, 1, (3, 4), 0).is_ok());
        assert!(matches!(sample_corpus(Language::Dyck1, 0, (2, 4), 0), Err(DatasetError::EmptyRequest)));
    }

    #[test]
    fn labels_for_small_strings() {
        let c = labeled(Language::Dyck1, &["()", "(())"]);
        let a = c.samples[0].annotation.as_ref().unwrap();
        assert_eq!(a.labels, vec![vec![1, 1], vec![1, 0]]);
        let b = c.samples[1].annotation.as_ref().unwrap();
        assert_eq!(b.depths.column(0), vec![1, 2, 1, 0]);
        let s = labeled(Language::Shuffle(2), &["([)]"]);
        let d = &s.samples[0].annotation.as_ref().unwrap().depths;
        assert_eq!(d.rows(), vec![vec![1, 0], vec![1, 1], vec![0, 1], vec![0, 0]]);
    }

    #[test]
    fn non_members_cannot_be_labeled() {
        let m = Language::Dyck1.machine().unwrap();
        let corpus = Corpus {
            language: Language::Dyck1,
            seed: 0,
            samples: vec![Sample { tokens: vec![0, 0], annotation: None }],
        };
        assert!(matches!(attach_labels(&m, corpus), Err(DatasetError::NotMember { index: 0, .. })));
    }

    fn fake_embeddings(corpus: &Corpus, dim: usize) -> Tensor {
        let n = corpus.token_count();
        Tensor::matrix(n, dim, (0..n * dim).map(|i| i as f32).collect()).unwrap()
    }

    #[test]
    fn sequence_split_sizes() {
        let (train, val) = split_sequences(10_000, 0.8, 3).unwrap();
        assert_eq!((train.len(), val.len()), (8000, 2000));
        assert!(train.iter().all(|i| val.binary_search(i).is_err()));
        assert!(matches!(split_sequences(10, 1.0, 0), Err(DatasetError::BadRatio(_))));
        assert!(matches!(split_sequences(1, 0.5, 0), Err(DatasetError::EmptySplit(_))));
    }

    #[test]
    fn one_record_per_token_and_mismatch_detection() {
        let c = labeled(Language::Dyck1, &["(())", "()", "()()", "((()))"]);
        let e = fake_embeddings(&c, 3);
        let ds = build_probe_dataset(&e, &c, 1, 0.5, 0).unwrap();
        assert_eq!(ds.train.len() + ds.validation.len() + ds.excluded, c.token_count());
        let bad = Tensor::matrix(3, 3, vec![0.0; 9]).unwrap();
        assert!(matches!(build_probe_dataset(&bad, &c, 1, 0.5, 0), Err(DatasetError::CountMismatch { .. })));
        assert!(matches!(build_probe_dataset(&e, &c, 2, 0.5, 0), Err(DatasetError::BadStack { .. })));
    }

    #[test]
    fn deep_validation_records_are_excluded_and_counted() {
        let strings = ["()", "(())", "()()", "((((()))))"];
        let c = labeled(Language::Dyck1, &strings);
        let e = fake_embeddings(&c, 2);
        for seed in 0..20 {
            let ds = build_probe_dataset(&e, &c, 1, 0.5, seed).unwrap();
            // Reference: histogram of validation depths at or beyond the train maximum.
            let train_max = ds
                .train_sequences
                .iter()
                .flat_map(|&s| c.samples[s].annotation.as_ref().unwrap().depths.column(0))
                .max()
                .unwrap();
            let expected: usize = ds
                .validation_sequences
                .iter()
                .flat_map(|&s| c.samples[s].annotation.as_ref().unwrap().depths.column(0))
                .filter(|&d| d > train_max)
                .count();
            assert_eq!(ds.classes, train_max as usize + 1);
            assert_eq!(ds.excluded, expected);
            assert!(ds.validation.labels.iter().all(|&l| (l as usize) < ds.classes));
        }
    }

    #[test]
    fn controls_are_reproducible_and_keep_features() {
        let c = labeled(Language::Dyck1, &["(())", "()", "()()", "((()))", "(()())"]);
        let e = fake_embeddings(&c, 2);
        let ds = build_probe_dataset(&e, &c, 1, 0.6, 1).unwrap();
        let a = randomize_controls(&ds, 5, ControlMode::PerRecord).unwrap();
        let b = randomize_controls(&ds, 5, ControlMode::PerRecord).unwrap();
        assert_eq!(a, b);
        assert!(a.control);
        assert_eq!(a.train.features, ds.train.features);
        assert!(a.train.labels.iter().all(|&l| (l as usize) < ds.classes));
        assert!(matches!(randomize_controls(&a, 5, ControlMode::PerRecord), Err(DatasetError::AlreadyControl)));

        let t = randomize_controls(&ds, 5, ControlMode::PerTokenType).unwrap();
        for split in [&t.train, &t.validation] {
            for (l, tok) in split.labels.iter().zip(&split.tokens) {
                let first = t.train.tokens.iter().position(|x| x == tok).map(|i| t.train.labels[i]);
                if let Some(f) = first {
                    assert_eq!(*l, f);
                }
            }
        }
    }
}
