//! A small RASP interpreter and a structured residual-stream "compiled" executor.
//!
//! Programs are DAGs of s-ops built in topological order. Numbers are exact rationals so
//! that `(index + 1) * mean(...)` recovers integer counts without rounding; the stream is
//! converted to `f32` only when handed to probes.
//!
//! The compiled form gives every s-op its own disjoint range of stream dimensions
//! (numeric s-ops one dimension, categorical s-ops a one-hot block) and groups the s-ops
//! into layers: attention layers for aggregates, feed-forward blocks for elementwise ops.
//! Each layer reads only the stream, never the interpreter's tables.

use std::fmt::{self, Write as _};

use num_rational::Ratio;
use thiserror::Error;

use crate::counterlang::Language;
use crate::dataset::Corpus;
use crate::probe::{
    probe_pair, stack_datasets, train_probe_with, ProbeArch, ProbeError, ProbeResult, ProbeRun, ProbeTask,
    SuiteOptions,
};
use crate::tensorcore::Tensor;

pub type Num = Ratio<i64>;

#[derive(Debug, Error)]
pub enum RaspError {
    #[error("symbol {0:?} is not in the program's vocabulary")]
    UnknownToken(char),
    #[error("unsupported primitive: {0}")]
    Unsupported(String),
    #[error("s-op {0} is not defined")]
    UnknownSOp(String),
    #[error("s-op {name} expects a {expected} input")]
    Type { name: String, expected: &'static str },
    #[error("corpus language {0} is not dyck1")]
    NotDyck(Language),
    #[error(transparent)]
    Probe(#[from] ProbeError),
}

pub type Result<T> = std::result::Result<T, RaspError>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Num(Num),
    Cat(String),
}

impl Value {
    pub fn int(v: i64) -> Self {
        Value::Num(Num::from_integer(v))
    }

    pub fn as_num(&self) -> Option<Num> {
        match self {
            Value::Num(n) => Some(*n),
            Value::Cat(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(n) => write!(f, "{n}"),
            Value::Cat(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SOpId(usize);

/// `select(keys, queries, predicate)` marks key position `k` for query position `q`
/// when `predicate(keys[k], queries[q])` holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Predicate {
    LessEq,
    Less,
    Eq,
    GreaterEq,
    Greater,
    True,
}

impl Predicate {
    pub fn holds(self, key: Num, query: Num) -> bool {
        match self {
            Predicate::LessEq => key <= query,
            Predicate::Less => key < query,
            Predicate::Eq => key == query,
            Predicate::GreaterEq => key >= query,
            Predicate::Greater => key > query,
            Predicate::True => true,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Predicate::LessEq => "<=",
            Predicate::Less => "<",
            Predicate::Eq => "==",
            Predicate::GreaterEq => ">=",
            Predicate::Greater => ">",
            Predicate::True => "true",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Lt,
    Gt,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZipOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SOp {
    /// The input symbols, categorical over the vocabulary.
    Tokens,
    /// Position `0..T`.
    Indices,
    /// 1 where the token equals `symbol`, else 0.
    TokenIs { symbol: char },
    AddConst { input: SOpId, c: Num },
    /// 1 when `input cmp c`, else 0.
    Compare { input: SOpId, cmp: Cmp, c: Num },
    Zip { a: SOpId, b: SOpId, op: ZipOp },
    /// Mean of `values` over the selected keys; 0 when nothing is selected.
    Aggregate {
        keys: SOpId,
        queries: SOpId,
        predicate: Predicate,
        values: SOpId,
    },
    /// First branch whose condition is nonzero, else `default`.
    Case { branches: Vec<(SOpId, String)>, default: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaspProgram {
    vocab: Vec<char>,
    names: Vec<String>,
    ops: Vec<SOp>,
}

impl RaspProgram {
    pub fn new(vocab: &[char]) -> Self {
        let mut p = Self {
            vocab: vocab.to_vec(),
            names: Vec::new(),
            ops: Vec::new(),
        };
        p.push("tokens", SOp::Tokens);
        p.push("indices", SOp::Indices);
        p
    }

    fn push(&mut self, name: &str, op: SOp) -> SOpId {
        self.names.push(name.to_string());
        self.ops.push(op);
        SOpId(self.ops.len() - 1)
    }

    pub fn tokens(&self) -> SOpId {
        SOpId(0)
    }

    pub fn indices(&self) -> SOpId {
        SOpId(1)
    }

    /// Adds an s-op. Inputs must already exist, so the program stays acyclic.
    pub fn define(&mut self, name: &str, op: SOp) -> Result<SOpId> {
        let id = SOpId(self.ops.len());
        let numeric = |p: &Self, s: SOpId| -> Result<()> {
            if s.0 >= id.0 {
                return Err(RaspError::UnknownSOp(format!("#{}", s.0)));
            }
            if p.is_categorical(s) {
                return Err(RaspError::Type {
                    name: name.to_string(),
                    expected: "numeric",
                });
            }
            Ok(())
        };
        match &op {
            SOp::Tokens | SOp::Indices => {
                return Err(RaspError::Unsupported(format!("{name}: tokens/indices are built in")))
            }
            SOp::TokenIs { symbol } => {
                if !self.vocab.contains(symbol) {
                    return Err(RaspError::UnknownToken(*symbol));
                }
            }
            SOp::AddConst { input, .. } | SOp::Compare { input, .. } => numeric(self, *input)?,
            SOp::Zip { a, b, .. } => {
                numeric(self, *a)?;
                numeric(self, *b)?;
            }
            SOp::Aggregate {
                keys, queries, values, ..
            } => {
                numeric(self, *keys)?;
                numeric(self, *queries)?;
                numeric(self, *values)?;
            }
            SOp::Case { branches, .. } => {
                for (cond, _) in branches {
                    numeric(self, *cond)?;
                }
            }
        }
        Ok(self.push(name, op))
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn vocab(&self) -> &[char] {
        &self.vocab
    }

    pub fn name(&self, id: SOpId) -> &str {
        &self.names[id.0]
    }

    pub fn op(&self, id: SOpId) -> &SOp {
        &self.ops[id.0]
    }

    pub fn id(&self, name: &str) -> Result<SOpId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(SOpId)
            .ok_or_else(|| RaspError::UnknownSOp(name.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = SOpId> {
        (0..self.ops.len()).map(SOpId)
    }

    pub fn is_categorical(&self, id: SOpId) -> bool {
        matches!(self.ops[id.0], SOp::Tokens | SOp::Case { .. })
    }

    /// Category labels of a categorical s-op, in one-hot order.
    pub fn categories(&self, id: SOpId) -> Vec<String> {
        match &self.ops[id.0] {
            SOp::Tokens => self.vocab.iter().map(char::to_string).collect(),
            SOp::Case { branches, default } => {
                let mut out: Vec<String> = Vec::new();
                for label in branches.iter().map(|(_, l)| l).chain(std::iter::once(default)) {
                    if !out.contains(label) {
                        out.push(label.clone());
                    }
                }
                out
            }
            _ => Vec::new(),
        }
    }

    fn inputs(&self, id: SOpId) -> Vec<SOpId> {
        match &self.ops[id.0] {
            SOp::Tokens | SOp::Indices => vec![],
            SOp::TokenIs { .. } => vec![self.tokens()],
            SOp::AddConst { input, .. } | SOp::Compare { input, .. } => vec![*input],
            SOp::Zip { a, b, .. } => vec![*a, *b],
            SOp::Aggregate {
                keys, queries, values, ..
            } => vec![*keys, *queries, *values],
            SOp::Case { branches, .. } => branches.iter().map(|(c, _)| *c).collect(),
        }
    }

    fn encode(&self, tokens: &str) -> Result<Vec<usize>> {
        tokens
            .chars()
            .map(|c| self.vocab.iter().position(|&v| v == c).ok_or(RaspError::UnknownToken(c)))
            .collect()
    }
}

fn compare(x: Num, cmp: Cmp, c: Num) -> bool {
    match cmp {
        Cmp::Lt => x < c,
        Cmp::Gt => x > c,
        Cmp::Eq => x == c,
    }
}

fn zip(a: Num, b: Num, op: ZipOp) -> Num {
    match op {
        ZipOp::Add => a + b,
        ZipOp::Sub => a - b,
        ZipOp::Mul => a * b,
    }
}

fn bit(b: bool) -> Num {
    Num::from_integer(i64::from(b))
}

/// Mean of `values[k]` over keys selected for each query, summed in key order.
fn aggregate(keys: &[Num], queries: &[Num], predicate: Predicate, values: &[Num]) -> Vec<Num> {
    queries
        .iter()
        .map(|&q| {
            let (mut sum, mut count) = (Num::from_integer(0), 0i64);
            for (&k, &v) in keys.iter().zip(values) {
                if predicate.holds(k, q) {
                    sum += v;
                    count += 1;
                }
            }
            if count == 0 {
                Num::from_integer(0)
            } else {
                sum / count
            }
        })
        .collect()
}

fn case(branches: &[(SOpId, String)], default: &str, cond: impl Fn(SOpId) -> Num) -> String {
    branches
        .iter()
        .find(|(c, _)| cond(*c) != Num::from_integer(0))
        .map_or(default, |(_, l)| l.as_str())
        .to_string()
}

/// Per-s-op, per-position values from the reference interpreter.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    names: Vec<String>,
    values: Vec<Vec<Value>>,
}

impl ValueTable {
    pub fn get(&self, id: SOpId) -> &[Value] {
        &self.values[id.0]
    }

    pub fn by_name(&self, name: &str) -> Result<&[Value]> {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| RaspError::UnknownSOp(name.to_string()))?;
        Ok(&self.values[i])
    }

    /// Numeric column as integers; `None` if any entry is fractional or categorical.
    pub fn integers(&self, name: &str) -> Result<Option<Vec<i64>>> {
        Ok(self
            .by_name(name)?
            .iter()
            .map(|v| v.as_num().filter(|n| n.is_integer()).map(|n| n.to_integer()))
            .collect())
    }
}

pub fn eval_program(program: &RaspProgram, tokens: &str) -> Result<ValueTable> {
    let ids = program.encode(tokens)?;
    let t = ids.len();
    let mut values: Vec<Vec<Value>> = Vec::with_capacity(program.len());
    let num = |values: &Vec<Vec<Value>>, s: SOpId| -> Vec<Num> {
        values[s.0].iter().map(|v| v.as_num().expect("numeric by construction")).collect()
    };
    for id in program.ids() {
        let column: Vec<Value> = match program.op(id) {
            SOp::Tokens => ids.iter().map(|&i| Value::Cat(program.vocab[i].to_string())).collect(),
            SOp::Indices => (0..t as i64).map(Value::int).collect(),
            SOp::TokenIs { symbol } => ids
                .iter()
                .map(|&i| Value::Num(bit(program.vocab[i] == *symbol)))
                .collect(),
            SOp::AddConst { input, c } => num(&values, *input).into_iter().map(|x| Value::Num(x + c)).collect(),
            SOp::Compare { input, cmp, c } => num(&values, *input)
                .into_iter()
                .map(|x| Value::Num(bit(compare(x, *cmp, *c))))
                .collect(),
            SOp::Zip { a, b, op } => num(&values, *a)
                .into_iter()
                .zip(num(&values, *b))
                .map(|(x, y)| Value::Num(zip(x, y, *op)))
                .collect(),
            SOp::Aggregate {
                keys,
                queries,
                predicate,
                values: v,
            } => aggregate(&num(&values, *keys), &num(&values, *queries), *predicate, &num(&values, *v))
                .into_iter()
                .map(Value::Num)
                .collect(),
            SOp::Case { branches, default } => (0..t)
                .map(|p| {
                    Value::Cat(case(branches, default, |c| {
                        values[c.0][p].as_num().expect("numeric by construction")
                    }))
                })
                .collect(),
        };
        values.push(column);
    }
    Ok(ValueTable {
        names: program.names.clone(),
        values,
    })
}

/// The balanced-parentheses program: running open/close counts, their difference, and a
/// latched flag for any earlier negative balance.
pub fn dyck1_program() -> RaspProgram {
    let mut p = RaspProgram::new(&['(', ')']);
    let (indices, one) = (p.indices(), Num::from_integer(1));
    let zero = Num::from_integer(0);
    let mut build = || -> Result<()> {
        let idx1 = p.define("indices_plus_1", SOp::AddConst { input: indices, c: one })?;
        let num_prevs = |p: &mut RaspProgram, name: &str, bools: SOpId| -> Result<SOpId> {
            let frac = p.define(
                &format!("frac_{name}"),
                SOp::Aggregate {
                    keys: indices,
                    queries: indices,
                    predicate: Predicate::LessEq,
                    values: bools,
                },
            )?;
            p.define(name, SOp::Zip { a: idx1, b: frac, op: ZipOp::Mul })
        };
        let is_open = p.define("is_open", SOp::TokenIs { symbol: '(' })?;
        let is_close = p.define("is_close", SOp::TokenIs { symbol: ')' })?;
        let n_opens = num_prevs(&mut p, "n_opens", is_open)?;
        let n_closes = num_prevs(&mut p, "n_closes", is_close)?;
        let balance = p.define("balance", SOp::Zip { a: n_opens, b: n_closes, op: ZipOp::Sub })?;
        let negative = p.define("balance_negative", SOp::Compare { input: balance, cmp: Cmp::Lt, c: zero })?;
        let prev = num_prevs(&mut p, "prev_imbalances", negative)?;
        let failed = p.define("any_imbalance", SOp::Compare { input: prev, cmp: Cmp::Gt, c: zero })?;
        let balanced = p.define("balanced", SOp::Compare { input: balance, cmp: Cmp::Eq, c: zero })?;
        p.define(
            "dyck1",
            SOp::Case {
                branches: vec![(failed, "F".into()), (balanced, "T".into())],
                default: "P".into(),
            },
        )?;
        Ok(())
    };
    build().expect("built-in program is well formed");
    p
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slot {
    pub sop: SOpId,
    pub name: String,
    pub start: usize,
    pub width: usize,
    /// Category labels for one-hot slots, empty for numeric ones.
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LayerKind {
    Attention,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    pub kind: LayerKind,
    pub ops: Vec<SOpId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledStream {
    program: RaspProgram,
    slots: Vec<Slot>,
    layers: Vec<Layer>,
    width: usize,
}

/// Per-token stream contents after the last layer, `T x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    pub len: usize,
    pub width: usize,
    pub data: Vec<Num>,
}

impl Activations {
    pub fn row(&self, t: usize) -> &[Num] {
        &self.data[t * self.width..(t + 1) * self.width]
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|r| *r.numer() as f32 / *r.denom() as f32).collect()
    }
}

pub fn compile(program: &RaspProgram) -> Result<CompiledStream> {
    let mut slots = Vec::with_capacity(program.len());
    let mut start = 0;
    for id in program.ids() {
        let categories = program.categories(id);
        let width = if program.is_categorical(id) { categories.len() } else { 1 };
        slots.push(Slot {
            sop: id,
            name: program.name(id).to_string(),
            start,
            width,
            categories,
        });
        start += width;
    }
    // Longest-path level; s-ops at one level are independent and can share a layer.
    let mut level = vec![0usize; program.len()];
    let mut layers: Vec<(usize, LayerKind, Vec<SOpId>)> = Vec::new();
    for id in program.ids().skip(2) {
        let kind = match program.op(id) {
            SOp::Aggregate {
                keys,
                queries,
                predicate,
                ..
            } => {
                let causal = matches!(predicate, Predicate::LessEq | Predicate::Less | Predicate::Eq);
                if *keys != program.indices() || *queries != program.indices() || !causal {
                    return Err(RaspError::Unsupported(format!(
                        "{}: only select(indices, indices, <=|<|==) compiles to a causal layer, got {}",
                        program.name(id),
                        predicate.symbol()
                    )));
                }
                LayerKind::Attention
            }
            _ => LayerKind::Mlp,
        };
        level[id.0] = 1 + program.inputs(id).iter().map(|s| level[s.0]).max().unwrap_or(0);
        match layers.iter_mut().find(|(l, k, _)| *l == level[id.0] && *k == kind) {
            Some((_, _, ops)) => ops.push(id),
            None => layers.push((level[id.0], kind, vec![id])),
        }
    }
    layers.sort_by_key(|(l, k, _)| (*l, *k));
    Ok(CompiledStream {
        program: program.clone(),
        slots,
        layers: layers.into_iter().map(|(_, kind, ops)| Layer { kind, ops }).collect(),
        width: start,
    })
}

impl CompiledStream {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn program(&self) -> &RaspProgram {
        &self.program
    }

    pub fn slot(&self, name: &str) -> Result<&Slot> {
        let id = self.program.id(name)?;
        Ok(&self.slots[id.0])
    }

    pub fn run(&self, tokens: &str) -> Result<Activations> {
        let ids = self.program.encode(tokens)?;
        let (t, w) = (ids.len(), self.width);
        let zero = Num::from_integer(0);
        let mut x = vec![zero; t * w];
        // Embedding: token one-hot and position.
        let (tok, idx) = (&self.slots[0], &self.slots[1]);
        for (p, &i) in ids.iter().enumerate() {
            x[p * w + tok.start + i] = Num::from_integer(1);
            x[p * w + idx.start] = Num::from_integer(p as i64);
        }
        let read = |x: &[Num], s: SOpId, p: usize| x[p * w + self.slots[s.0].start];
        for layer in &self.layers {
            // Every op in a layer reads the stream as it was before the layer.
            let before = x.clone();
            for &id in &layer.ops {
                let slot = &self.slots[id.0];
                match self.program.op(id) {
                    SOp::Aggregate {
                        keys,
                        queries,
                        predicate,
                        values,
                    } => {
                        let col = |s: SOpId| (0..t).map(|p| read(&before, s, p)).collect::<Vec<_>>();
                        let out = aggregate(&col(*keys), &col(*queries), *predicate, &col(*values));
                        for (p, v) in out.into_iter().enumerate() {
                            x[p * w + slot.start] = v;
                        }
                    }
                    op => {
                        for p in 0..t {
                            self.mlp(op, slot, &before, &mut x[p * w..(p + 1) * w], p, w);
                        }
                    }
                }
            }
        }
        Ok(Activations { len: t, width: w, data: x })
    }

    /// One position of a feed-forward block: reads `before`, writes the op's slot in `row`.
    fn mlp(&self, op: &SOp, slot: &Slot, before: &[Num], row: &mut [Num], p: usize, w: usize) {
        let read = |s: SOpId| before[p * w + self.slots[s.0].start];
        match op {
            SOp::TokenIs { symbol } => {
                let tok = &self.slots[0];
                let hot = tok.categories.iter().position(|c| c.starts_with(*symbol)).expect("in vocab");
                row[slot.start] = before[p * w + tok.start + hot];
            }
            SOp::AddConst { input, c } => row[slot.start] = read(*input) + c,
            SOp::Compare { input, cmp, c } => row[slot.start] = bit(compare(read(*input), *cmp, *c)),
            SOp::Zip { a, b, op } => row[slot.start] = zip(read(*a), read(*b), *op),
            SOp::Case { branches, default } => {
                let label = case(branches, default, read);
                let hot = slot.categories.iter().position(|c| *c == label).expect("category");
                row[slot.start + hot] = Num::from_integer(1);
            }
            SOp::Tokens | SOp::Indices | SOp::Aggregate { .. } => unreachable!("not a feed-forward op"),
        }
    }

    /// Reads an s-op's values back out of the stream.
    pub fn decode(&self, acts: &Activations, name: &str) -> Result<Vec<Value>> {
        let slot = self.slot(name)?;
        Ok((0..acts.len)
            .map(|p| {
                let cells = &acts.row(p)[slot.start..slot.start + slot.width];
                if slot.categories.is_empty() {
                    Value::Num(cells[0])
                } else {
                    let hot = cells.iter().position(|c| *c == Num::from_integer(1)).unwrap_or(0);
                    Value::Cat(slot.categories[hot].clone())
                }
            })
            .collect())
    }

    /// Human-readable stream layout and layer roles.
    pub fn layout_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "stream width {}", self.width).ok();
        for s in &self.slots {
            let kind = if s.categories.is_empty() {
                "numeric".to_string()
            } else {
                format!("one-hot {{{}}}", s.categories.join(","))
            };
            writeln!(out, "  dims [{:>2}, {:>2})  {:<18} {}", s.start, s.start + s.width, s.name, kind).ok();
        }
        writeln!(out, "layers {}", self.layers.len()).ok();
        for (i, l) in self.layers.iter().enumerate() {
            let names: Vec<&str> = l.ops.iter().map(|&id| self.program.name(id)).collect();
            let kind = match l.kind {
                LayerKind::Attention => "attention",
                LayerKind::Mlp => "mlp",
            };
            writeln!(out, "  {i:>2} {kind:<9} -> {}", names.join(", ")).ok();
        }
        out
    }

    /// Stream activations of every token of `corpus`, as a `tokens x width` matrix.
    pub fn corpus_features(&self, corpus: &Corpus) -> Result<Tensor> {
        if corpus.language != Language::Dyck1 {
            return Err(RaspError::NotDyck(corpus.language));
        }
        let alphabet = corpus.language.alphabet().map_err(|e| RaspError::Unsupported(e.to_string()))?;
        let mut data = Vec::with_capacity(corpus.token_count() * self.width);
        for s in &corpus.samples {
            let text = alphabet
                .decode(&s.tokens)
                .map_err(|e| RaspError::Unsupported(e.to_string()))?;
            data.extend(self.run(&text)?.to_f32());
        }
        Ok(Tensor::matrix(corpus.token_count(), self.width, data).expect("shape"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledProbeResults {
    /// Classification task/control pairs, one per architecture.
    pub classification: Vec<ProbeResult>,
    /// Regression probes on depth, one per architecture.
    pub regression: Vec<ProbeRun>,
}

/// Probes the compiled stream for stack depth, by classification and by regression.
pub fn probe_compiled(
    compiled: &CompiledStream,
    corpus: &Corpus,
    archs: &[ProbeArch],
    options: &SuiteOptions,
    seed: u64,
) -> Result<CompiledProbeResults> {
    let features = compiled.corpus_features(corpus)?;
    let datasets = stack_datasets(&features, corpus, options, seed)?;
    let (task, ctrl) = &datasets[0];
    let mut out = CompiledProbeResults {
        classification: Vec::new(),
        regression: Vec::new(),
    };
    let name = format!("{}-compiled", corpus.language);
    for &arch in archs {
        out.classification
            .push(probe_pair(&name, task, ctrl, arch, options.training, seed)?);
        let (_, run) = train_probe_with(task, arch, ProbeTask::Regression, options.training, seed)?;
        out.regression.push(run);
    }
    Ok(out)
}
