//! Single-layer causal encoder trained to predict the set of valid next symbols.
//!
//! `X = E[tokens] + P`, then per layer: causal multi-head attention and a position-wise
//! FFN, each wrapped in a residual connection followed by layer norm (post-norm). The
//! final hidden states `H` go through a linear decoder and a sigmoid.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Corpus;
use crate::tensorcore::{
    read_checkpoint, sinusoidal_positions, write_checkpoint, xavier_uniform, Graph, Optimizer, OptimizerKind,
    SoftmaxMask, Tensor, TensorError, Var,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("sequence length {len} exceeds the maximum of {max}")]
    TooLong { len: usize, max: usize },
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    UnknownToken { id: usize, vocab: usize },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("corpus is not labeled")]
    Unlabeled,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint does not match config: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PositionalKind {
    #[default]
    Sinusoidal,
    Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerConfig {
    pub d_model: usize,
    pub d_ffn: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub vocab: usize,
    pub max_len: usize,
    pub dropout: f32,
    pub lr: f32,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    #[serde(default)]
    pub positional: PositionalKind,
    pub layer_norm_eps: f32,
    pub optimizer: OptimizerKind,
}

impl TransformerConfig {
    pub fn new(vocab: usize, seed: u64) -> Self {
        Self {
            d_model: 32,
            d_ffn: 64,
            n_layers: 1,
            n_heads: 4,
            vocab,
            max_len: 50,
            dropout: 0.0,
            lr: 5e-3,
            epochs: 25,
            batch: 32,
            seed,
            positional: PositionalKind::Sinusoidal,
            layer_norm_eps: 1e-5,
            optimizer: OptimizerKind::rmsprop(),
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return fail("d_model must be divisible by n_heads");
        }
        if self.d_model == 0 || self.d_ffn == 0 || self.vocab == 0 || self.max_len == 0 {
            return fail("dimensions must be positive");
        }
        if self.batch == 0 {
            return fail("batch must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Named parameters in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerModel {
    config: TransformerConfig,
    names: Vec<String>,
    params: Vec<Tensor>,
    positions: Tensor,
}

struct LayerVars {
    wq: Var,
    bq: Var,
    wk: Var,
    bk: Var,
    wv: Var,
    bv: Var,
    wo: Var,
    bo: Var,
    ln1_g: Var,
    ln1_b: Var,
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
    ln2_g: Var,
    ln2_b: Var,
}

/// Outputs of one forward pass on the tape.
pub struct ForwardVars {
    pub params: Vec<Var>,
    pub hidden: Var,
    pub probs: Var,
}

const LAYER_PARAMS: [&str; 16] = [
    "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln1_g", "ln1_b", "w1", "b1", "w2", "b2", "ln2_g", "ln2_b",
];

impl TransformerModel {
    pub fn new(config: TransformerConfig) -> Result<Self> {
        config.validate()?;
        let (d, f, v) = (config.d_model, config.d_ffn, config.vocab);
        let mut names = Vec::new();
        let mut params = Vec::new();
        let mut seed = config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let mut next_seed = || {
            seed = seed.wrapping_add(1);
            seed
        };
        let mut add = |name: String, t: Tensor| {
            names.push(name);
            params.push(t);
        };
        add("tok_emb".into(), xavier_uniform(v, d, next_seed()));
        if config.positional == PositionalKind::Learned {
            add("pos_emb".into(), xavier_uniform(config.max_len, d, next_seed()));
        }
        let ones = |n: usize| Tensor::matrix(1, n, vec![1.0; n]).expect("shape");
        let zeros = |n: usize| Tensor::zeros(&[1, n]);
        for l in 0..config.n_layers {
            for name in LAYER_PARAMS {
                let t = match name {
                    "wq" | "wk" | "wv" | "wo" => xavier_uniform(d, d, next_seed()),
                    "w1" => xavier_uniform(d, f, next_seed()),
                    "w2" => xavier_uniform(f, d, next_seed()),
                    "b1" => zeros(f),
                    "ln1_g" | "ln2_g" => ones(d),
                    _ => zeros(d),
                };
                add(format!("layer{l}.{name}"), t);
            }
        }
        add("w_out".into(), xavier_uniform(v, d, next_seed()));
        add("b_out".into(), zeros(v));
        let positions = sinusoidal_positions(config.max_len, d);
        Ok(Self {
            config,
            names,
            params,
            positions,
        })
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.config
    }

    pub fn named_params(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.params)
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Positional vectors added at positions `0..len`.
    pub fn positional_rows(&self, len: usize) -> Tensor {
        let table = match self.config.positional {
            PositionalKind::Sinusoidal => &self.positions,
            PositionalKind::Learned => &self.params[1],
        };
        let d = self.config.d_model;
        Tensor::matrix(len, d, table.data()[..len * d].to_vec()).expect("shape")
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.len() > self.config.max_len {
            return Err(ModelError::TooLong {
                len: tokens.len(),
                max: self.config.max_len,
            });
        }
        if let Some(&id) = tokens.iter().find(|&&id| id >= self.config.vocab) {
            return Err(ModelError::UnknownToken {
                id,
                vocab: self.config.vocab,
            });
        }
        Ok(())
    }

    /// Records one sequence's forward pass on `g`.
    pub fn forward_on<'a>(&'a self, g: &mut Graph<'a>, tokens: &[usize]) -> Result<ForwardVars> {
        self.check_tokens(tokens)?;
        let cfg = &self.config;
        let t = tokens.len();
        let params: Vec<Var> = self.params.iter().map(|p| g.param(p)).collect();
        let mut it = params.iter().copied();
        let tok_emb = it.next().expect("tok_emb");
        let pos = match cfg.positional {
            PositionalKind::Learned => {
                let table = it.next().expect("pos_emb");
                g.gather_rows(table, &(0..t).collect::<Vec<_>>())?
            }
            PositionalKind::Sinusoidal => g.constant(self.positional_rows(t)),
        };
        let emb = g.gather_rows(tok_emb, tokens)?;
        let mut x = g.add(emb, pos)?;
        for _ in 0..cfg.n_layers {
            let mut n = || it.next().expect("layer param");
            let lv = LayerVars {
                wq: n(),
                bq: n(),
                wk: n(),
                bk: n(),
                wv: n(),
                bv: n(),
                wo: n(),
                bo: n(),
                ln1_g: n(),
                ln1_b: n(),
                w1: n(),
                b1: n(),
                w2: n(),
                b2: n(),
                ln2_g: n(),
                ln2_b: n(),
            };
            x = self.layer(g, x, &lv)?;
        }
        let w_out = it.next().expect("w_out");
        let b_out = it.next().expect("b_out");
        let logits = g.matmul_t(x, false, w_out, true)?;
        let logits = g.add_row(logits, b_out)?;
        let probs = g.sigmoid(logits);
        Ok(ForwardVars {
            params,
            hidden: x,
            probs,
        })
    }

    fn linear(g: &mut Graph<'_>, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = g.matmul(x, w)?;
        Ok(g.add_row(y, b)?)
    }

    fn layer(&self, g: &mut Graph<'_>, x: Var, p: &LayerVars) -> Result<Var> {
        let cfg = &self.config;
        let hd = cfg.head_dim();
        let q = Self::linear(g, x, p.wq, p.bq)?;
        let k = Self::linear(g, x, p.wk, p.bk)?;
        let v = Self::linear(g, x, p.wv, p.bv)?;
        let scale = 1.0 / (hd as f32).sqrt();
        let mut heads = Vec::with_capacity(cfg.n_heads);
        for h in 0..cfg.n_heads {
            let qh = g.slice_cols(q, h * hd, hd)?;
            let kh = g.slice_cols(k, h * hd, hd)?;
            let vh = g.slice_cols(v, h * hd, hd)?;
            let scores = g.matmul_t(qh, false, kh, true)?;
            let scores = g.scale(scores, scale);
            let attn = g.softmax(scores, &SoftmaxMask::Causal)?;
            heads.push(g.matmul(attn, vh)?);
        }
        let concat = g.concat_cols(&heads)?;
        let attn_out = Self::linear(g, concat, p.wo, p.bo)?;
        let attn_out = g.dropout(attn_out, cfg.dropout);
        let res1 = g.add(x, attn_out)?;
        let x1 = g.layer_norm(res1, p.ln1_g, p.ln1_b, cfg.layer_norm_eps)?;
        let hidden = Self::linear(g, x1, p.w1, p.b1)?;
        let hidden = g.relu(hidden);
        let ffn = Self::linear(g, hidden, p.w2, p.b2)?;
        let ffn = g.dropout(ffn, cfg.dropout);
        let res2 = g.add(x1, ffn)?;
        Ok(g.layer_norm(res2, p.ln2_g, p.ln2_b, cfg.layer_norm_eps)?)
    }

    /// Evaluation-mode forward pass: `(hidden T x d_model, probs T x |vocab|)`.
    pub fn forward(&self, tokens: &[usize]) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let out = self.forward_on(&mut g, tokens)?;
        Ok((g.value(out.hidden).clone(), g.value(out.probs).clone()))
    }

    /// Per-token final-layer hidden states for every sequence, concatenated in corpus order.
    pub fn extract_embeddings(&self, corpus: &Corpus) -> Result<Tensor> {
        let d = self.config.d_model;
        let mut data = Vec::with_capacity(corpus.token_count() * d);
        for s in &corpus.samples {
            let (hidden, _) = self.forward(&s.tokens)?;
            data.extend_from_slice(hidden.data());
        }
        Ok(Tensor::matrix(corpus.token_count(), d, data)?)
    }

    pub fn write_checkpoint<W: std::io::Write>(&self, w: W) -> Result<()> {
        let named: Vec<(&str, &Tensor)> = self.named_params().collect();
        Ok(write_checkpoint(w, &named)?)
    }

    pub fn read_checkpoint<R: std::io::Read>(config: TransformerConfig, r: R) -> Result<Self> {
        let mut model = Self::new(config)?;
        let loaded = read_checkpoint(r)?;
        if loaded.len() != model.params.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} parameters, found {}",
                model.params.len(),
                loaded.len()
            )));
        }
        for ((name, tensor), (want, slot)) in loaded.into_iter().zip(model.names.iter().zip(model.params.iter_mut())) {
            if &name != want || tensor.shape() != slot.shape() {
                return Err(ModelError::Checkpoint(format!(
                    "parameter {name} {:?} where {want} {:?} was expected",
                    tensor.shape(),
                    slot.shape()
                )));
            }
            *slot = tensor;
        }
        Ok(model)
    }
}

/// Recognition criterion: at every position the 0.5-thresholded prediction equals the label row.
pub fn recognize(probs: &Tensor, labels: &[Vec<u8>]) -> bool {
    probs.rows() == labels.len() && (0..labels.len()).all(|t| row_matches(probs.row(t), &labels[t]))
}

fn row_matches(probs: &[f32], label: &[u8]) -> bool {
    probs.len() == label.len() && probs.iter().zip(label).all(|(&p, &y)| (p > 0.5) == (y == 1))
}

fn target(labels: &[Vec<u8>]) -> Vec<f32> {
    labels.iter().flatten().map(|&y| f32::from(y)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub loss: f64,
    pub token_accuracy: f64,
    pub recognition: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub loss: f64,
    pub token_accuracy: f64,
    pub recognition: f64,
    pub sequences: usize,
}

#[derive(Default)]
struct Tally {
    sq_err: f64,
    entries: usize,
    tokens_ok: usize,
    tokens: usize,
    recognized: usize,
    sequences: usize,
}

impl Tally {
    fn add(&mut self, probs: &Tensor, labels: &[Vec<u8>]) {
        for (p, y) in probs.data().iter().zip(labels.iter().flatten()) {
            let d = f64::from(*p) - f64::from(*y);
            self.sq_err += d * d;
        }
        self.entries += probs.numel();
        let ok = (0..labels.len())
            .filter(|&t| row_matches(probs.row(t), &labels[t]))
            .count();
        self.tokens_ok += ok;
        self.tokens += labels.len();
        self.recognized += usize::from(ok == labels.len());
        self.sequences += 1;
    }

    fn ratio(a: usize, b: usize) -> f64 {
        if b == 0 {
            0.0
        } else {
            a as f64 / b as f64
        }
    }

    fn metrics(&self) -> EvalMetrics {
        EvalMetrics {
            loss: self.sq_err / self.entries.max(1) as f64,
            token_accuracy: Self::ratio(self.tokens_ok, self.tokens),
            recognition: Self::ratio(self.recognized, self.sequences),
            sequences: self.sequences,
        }
    }
}

/// Mean squared error, token accuracy and sequence recognition over a labeled corpus.
pub fn evaluate(model: &TransformerModel, corpus: &Corpus) -> Result<EvalMetrics> {
    let mut tally = Tally::default();
    for s in &corpus.samples {
        let labels = &s.annotation.as_ref().ok_or(ModelError::Unlabeled)?.labels;
        let (_, probs) = model.forward(&s.tokens)?;
        tally.add(&probs, labels);
    }
    Ok(tally.metrics())
}

/// Trains a fresh model on the k-hot valid-next objective.
///
/// The loss of a batch is the mean over all of its (token, vocabulary) entries.
/// Per-epoch metrics are tallied from the training forward passes; entry 0 evaluates
/// the initial model.
pub fn train_lm(config: TransformerConfig, corpus: &Corpus) -> Result<(TransformerModel, Vec<EpochLog>)> {
    train_lm_with(config, corpus, |_| {})
}

/// [`train_lm`] with a callback after every epoch.
pub fn train_lm_with(
    config: TransformerConfig,
    corpus: &Corpus,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(TransformerModel, Vec<EpochLog>)> {
    if corpus.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    if !corpus.is_labeled() {
        return Err(ModelError::Unlabeled);
    }
    let mut model = TransformerModel::new(config)?;
    let cfg = model.config.clone();
    let initial = evaluate(&model, corpus)?;
    let mut log = vec![EpochLog {
        epoch: 0,
        loss: initial.loss,
        token_accuracy: initial.token_accuracy,
        recognition: initial.recognition,
    }];
    on_epoch(&log[0]);
    let mut optimizer = {
        let refs: Vec<&Tensor> = model.params.iter().collect();
        Optimizer::new(cfg.optimizer, cfg.lr, &refs)
    };
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_0F_BA7C4);
    let mut dropout_seed = cfg.seed.wrapping_mul(31).wrapping_add(7);
    let vocab = cfg.vocab;
    let mut grads: Vec<Vec<f32>> = model.params.iter().map(|p| vec![0.0; p.numel()]).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut tally = Tally::default();
        for batch in order.chunks(cfg.batch) {
            let denom = batch.iter().map(|&i| corpus.samples[i].tokens.len()).sum::<usize>() * vocab;
            grads.iter_mut().for_each(|g| g.fill(0.0));
            for &i in batch {
                let sample = &corpus.samples[i];
                let labels = &sample.annotation.as_ref().expect("checked labeled").labels;
                dropout_seed = dropout_seed.wrapping_add(1);
                let mut g = if cfg.dropout > 0.0 {
                    Graph::training(dropout_seed)
                } else {
                    Graph::new()
                };
                let out = model.forward_on(&mut g, &sample.tokens)?;
                let loss = g.squared_error(out.probs, &target(labels), denom as f32)?;
                g.backward(loss)?;
                tally.add(g.value(out.probs), labels);
                for (acc, &v) in grads.iter_mut().zip(&out.params) {
                    if let Some(gr) = g.grad(v) {
                        for (a, b) in acc.iter_mut().zip(gr) {
                            *a += b;
                        }
                    }
                }
            }
            let mut refs: Vec<&mut Tensor> = model.params.iter_mut().collect();
            optimizer.step(&mut refs, &grads);
        }
        let m = tally.metrics();
        let entry = EpochLog {
            epoch,
            loss: m.loss,
            token_accuracy: m.token_accuracy,
            recognition: m.recognition,
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counterlang::Language;
    use crate::dataset::{attach_labels, sample_corpus};

    fn small_config(vocab: usize, seed: u64) -> TransformerConfig {
        TransformerConfig {
            max_len: 20,
            epochs: 2,
            ..TransformerConfig::new(vocab, seed)
        }
    }

    fn corpus(lang: Language, n: usize, max: usize, seed: u64) -> Corpus {
        let c = sample_corpus(lang, n, (2, max), seed).unwrap();
        attach_labels(&lang.machine().unwrap(), c).unwrap()
    }

    #[test]
    fn output_shapes_and_range() {
        let model = TransformerModel::new(TransformerConfig::new(4, 1)).unwrap();
        let (h, p) = model.forward(&[0, 2, 1, 3, 0]).unwrap();
        assert_eq!(h.shape(), &[5, 32]);
        assert_eq!(p.shape(), &[5, 4]);
        assert!(p.data().iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn rejects_long_and_unknown_inputs() {
        let model = TransformerModel::new(small_config(2, 0)).unwrap();
        assert!(matches!(model.forward(&[0; 21]), Err(ModelError::TooLong { .. })));
        assert!(matches!(model.forward(&[0, 5]), Err(ModelError::UnknownToken { id: 5, .. })));
    }

    #[test]
    fn config_validation() {
        let mut c = TransformerConfig::new(2, 0);
        c.n_heads = 5;
        assert!(TransformerModel::new(c).is_err());
    }

    #[test]
    fn later_tokens_do_not_affect_earlier_positions() {
        for positional in [PositionalKind::Sinusoidal, PositionalKind::Learned] {
            let cfg = TransformerConfig {
                positional,
                ..TransformerConfig::new(4, 3)
            };
            let model = TransformerModel::new(cfg).unwrap();
            let a = [0, 2, 1, 0, 3, 1];
            let b = [0, 2, 1, 2, 2, 0];
            let (ha, pa) = model.forward(&a).unwrap();
            let (hb, pb) = model.forward(&b).unwrap();
            for t in 0..3 {
                assert_eq!(ha.row(t), hb.row(t));
                assert_eq!(pa.row(t), pb.row(t));
            }
            assert_ne!(ha.row(3), hb.row(3));
        }
    }

    #[test]
    fn recognition_criterion() {
        let labels = vec![vec![1, 1], vec![1, 0]];
        let exact = Tensor::matrix(2, 2, vec![1.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(recognize(&exact, &labels));
        let flipped = Tensor::matrix(2, 2, vec![1.0, 1.0, 1.0, 0.7]).unwrap();
        assert!(!recognize(&flipped, &labels));
        let at_half = Tensor::matrix(2, 2, vec![0.9, 0.9, 0.9, 0.5]).unwrap();
        assert!(recognize(&at_half, &labels));
    }

    #[test]
    fn untrained_loss_is_near_a_quarter() {
        let c = corpus(Language::Shuffle(2), 50, 20, 2);
        for seed in 0..3 {
            let model = TransformerModel::new(small_config(4, seed)).unwrap();
            let m = evaluate(&model, &c).unwrap();
            assert!((0.15..=0.35).contains(&m.loss), "seed {seed}: {}", m.loss);
        }
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let c = corpus(Language::Dyck1, 120, 16, 5);
        let cfg = small_config(2, 9);
        let (m1, log1) = train_lm(cfg.clone(), &c).unwrap();
        let (m2, log2) = train_lm(cfg, &c).unwrap();
        assert_eq!(log1, log2);
        assert_eq!(m1, m2);
        assert_eq!(log1.len(), 3);
        assert!(log1.last().unwrap().loss < log1[0].loss);
    }

    #[test]
    fn empty_or_unlabeled_corpus_is_rejected() {
        let empty = Corpus {
            language: Language::Dyck1,
            seed: 0,
            samples: vec![],
        };
        assert!(matches!(train_lm(small_config(2, 0), &empty), Err(ModelError::EmptyCorpus)));
        let raw = sample_corpus(Language::Dyck1, 3, (2, 4), 0).unwrap();
        assert!(matches!(train_lm(small_config(2, 0), &raw), Err(ModelError::Unlabeled)));
    }

    #[test]
    fn embeddings_concatenate_in_corpus_order() {
        let c = corpus(Language::Dyck1, 6, 10, 1);
        let model = TransformerModel::new(small_config(2, 4)).unwrap();
        let e = model.extract_embeddings(&c).unwrap();
        assert_eq!(e.rows(), c.token_count());
        let (h0, _) = model.forward(&c.samples[0].tokens).unwrap();
        assert_eq!(&e.data()[..h0.numel()], h0.data());
        // Shared prefixes give identical rows.
        let (a, _) = model.forward(&[0, 0, 1, 1]).unwrap();
        let (b, _) = model.forward(&[0, 0, 1, 0, 1, 1]).unwrap();
        assert_eq!(&a.data()[..3 * 32], &b.data()[..3 * 32]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = TransformerModel::new(small_config(4, 8)).unwrap();
        let mut buf = Vec::new();
        model.write_checkpoint(&mut buf).unwrap();
        let back = TransformerModel::read_checkpoint(model.config().clone(), &buf[..]).unwrap();
        assert_eq!(back, model);
        let other = small_config(6, 8);
        assert!(TransformerModel::read_checkpoint(other, &buf[..]).is_err());
    }
}
