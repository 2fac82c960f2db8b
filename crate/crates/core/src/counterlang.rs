//! Counter languages and real-time k-counter machines.
//!
//! A machine is the tuple `<Sigma, Q, q0, u, delta, F>`: at every input symbol the
//! counter-update function `u` and the transition function `delta` both see the
//! symbol, the current state and the zero-check mask of the counters. `F` is an
//! acceptance predicate over (state, zero-mask).
//!
//! Shipped languages are Dyck-1 and Shuffle-k (the shuffle of k Dyck-1 languages
//! over disjoint bracket pairs). Their machines are deterministic, so a string has
//! exactly one run.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CounterError {
    #[error("symbol {0:?} is not in the alphabet")]
    UnknownSymbol(char),
    #[error("token id {0} is out of range for the alphabet")]
    UnknownToken(usize),
    #[error("invalid prefix: counter {counter} goes negative at position {position}")]
    InvalidPrefix { position: usize, counter: usize },
    #[error("a counter language needs at least one counter (got k = {0})")]
    ZeroCounters(usize),
    #[error("k = {k} exceeds the {max} bracket pairs available")]
    TooManyPairs { k: usize, max: usize },
    #[error("duplicate symbol {0:?} in alphabet")]
    DuplicateSymbol(char),
    #[error("unknown language {0:?} (expected dyck1 or shuffleK)")]
    UnknownLanguage(String),
}

pub type Result<T> = std::result::Result<T, CounterError>;

/// Bracket pairs in the order they are handed out to counters.
pub const PAIR_TABLE: [(char, char); 6] = [
    ('(', ')'),
    ('[', ']'),
    ('{', '}'),
    ('<', '>'),
    ('a', 'b'),
    ('x', 'y'),
];

/// Pairs used once the fixed table is exhausted: the remaining ASCII letters, taken two at a time.
fn extended_pairs() -> Vec<(char, char)> {
    let mut pairs = PAIR_TABLE.to_vec();
    let lower: Vec<char> = ('a'..='z').filter(|c| !"abxy".contains(*c)).collect();
    let upper: Vec<char> = ('A'..='Z').collect();
    for letters in [lower, upper] {
        for chunk in letters.chunks_exact(2) {
            pairs.push((chunk[0], chunk[1]));
        }
    }
    pairs
}

/// Maximum number of counters for which bracket pairs can be assigned.
pub fn max_pairs() -> usize {
    extended_pairs().len()
}

/// Ordered bracket pairs plus the symbol to token-id bijection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    pairs: Vec<(char, char)>,
    symbols: Vec<char>,
    ids: HashMap<char, usize>,
}

impl Alphabet {
    /// Symbols are laid out pair by pair: `open_0, close_0, open_1, close_1, ...`.
    pub fn from_pairs(pairs: Vec<(char, char)>) -> Result<Self> {
        let symbols: Vec<char> = pairs.iter().flat_map(|&(o, c)| [o, c]).collect();
        let mut ids = HashMap::with_capacity(symbols.len());
        for (id, &s) in symbols.iter().enumerate() {
            if ids.insert(s, id).is_some() {
                return Err(CounterError::DuplicateSymbol(s));
            }
        }
        Ok(Self {
            pairs,
            symbols,
            ids,
        })
    }

    pub fn pairs(&self) -> &[(char, char)] {
        &self.pairs
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn id(&self, symbol: char) -> Result<usize> {
        self.ids
            .get(&symbol)
            .copied()
            .ok_or(CounterError::UnknownSymbol(symbol))
    }

    pub fn symbol(&self, id: usize) -> Result<char> {
        self.symbols
            .get(id)
            .copied()
            .ok_or(CounterError::UnknownToken(id))
    }

    pub fn encode(&self, s: &str) -> Result<Vec<usize>> {
        s.chars().map(|c| self.id(c)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        ids.iter().map(|&i| self.symbol(i)).collect()
    }

    /// Pair index a token belongs to, and whether it opens that pair.
    pub fn role(&self, id: usize) -> (usize, bool) {
        (id / 2, id % 2 == 0)
    }
}

/// `z(v)`: `true` (bit 1) where the counter is non-zero.
pub fn zero_check(counters: &[i64]) -> Vec<bool> {
    counters.iter().map(|&c| c != 0).collect()
}

/// One component of the counter update `u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CounterUpdate {
    /// `+m` (negative m decrements).
    Add(i64),
    /// `x0`: reset to zero.
    Reset,
}

impl CounterUpdate {
    pub fn apply(self, value: i64) -> i64 {
        match self {
            CounterUpdate::Add(m) => value + m,
            CounterUpdate::Reset => 0,
        }
    }
}

pub type StateId = usize;

type UpdateFn = dyn Fn(usize, StateId, &[bool]) -> Vec<CounterUpdate> + Send + Sync;
type TransitionFn = dyn Fn(usize, StateId, &[bool]) -> StateId + Send + Sync;
type AcceptFn = dyn Fn(StateId, &[bool]) -> bool + Send + Sync;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineConfig {
    pub state: StateId,
    pub counters: Vec<i64>,
}

/// A deterministic real-time k-counter machine.
///
/// `update` and `transition` are total functions of (symbol id, state, zero-mask).
/// `dead` marks states from which no accepting configuration is reachable.
#[derive(Clone)]
pub struct CounterMachine {
    alphabet: Alphabet,
    states: Vec<String>,
    initial: StateId,
    counters: usize,
    update: Arc<UpdateFn>,
    transition: Arc<TransitionFn>,
    accept: Arc<AcceptFn>,
    dead: BTreeSet<StateId>,
}

impl fmt::Debug for CounterMachine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CounterMachine")
            .field("alphabet", &self.alphabet.symbols)
            .field("states", &self.states)
            .field("initial", &self.initial)
            .field("counters", &self.counters)
            .finish_non_exhaustive()
    }
}

impl CounterMachine {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        alphabet: Alphabet,
        states: Vec<String>,
        initial: StateId,
        counters: usize,
        update: impl Fn(usize, StateId, &[bool]) -> Vec<CounterUpdate> + Send + Sync + 'static,
        transition: impl Fn(usize, StateId, &[bool]) -> StateId + Send + Sync + 'static,
        accept: impl Fn(StateId, &[bool]) -> bool + Send + Sync + 'static,
        dead: impl IntoIterator<Item = StateId>,
    ) -> Self {
        Self {
            alphabet,
            states,
            initial,
            counters,
            update: Arc::new(update),
            transition: Arc::new(transition),
            accept: Arc::new(accept),
            dead: dead.into_iter().collect(),
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn counters(&self) -> usize {
        self.counters
    }

    pub fn state_name(&self, state: StateId) -> &str {
        &self.states[state]
    }

    pub fn initial_config(&self) -> MachineConfig {
        MachineConfig {
            state: self.initial,
            counters: vec![0; self.counters],
        }
    }

    /// `<q, c> -> <delta(x, q, z(c)), u(x, q, z(c))(c)>`.
    pub fn step(&self, config: &MachineConfig, symbol: char) -> Result<MachineConfig> {
        let id = self.alphabet.id(symbol)?;
        Ok(self.step_id(config, id))
    }

    pub fn step_id(&self, config: &MachineConfig, id: usize) -> MachineConfig {
        let mask = zero_check(&config.counters);
        let updates = (self.update)(id, config.state, &mask);
        debug_assert_eq!(updates.len(), self.counters);
        let counters = config
            .counters
            .iter()
            .zip(&updates)
            .map(|(&c, u)| u.apply(c))
            .collect();
        MachineConfig {
            state: (self.transition)(id, config.state, &mask),
            counters,
        }
    }

    pub fn accepts_config(&self, config: &MachineConfig) -> bool {
        (self.accept)(config.state, &zero_check(&config.counters))
    }

    /// A configuration that can still be extended to an accepted string.
    ///
    /// For the shipped machines this is exactly: not in a dead state and no negative counter.
    pub fn is_viable(&self, config: &MachineConfig) -> bool {
        !self.dead.contains(&config.state) && config.counters.iter().all(|&c| c >= 0)
    }

    pub fn run(&self, s: &str) -> Result<MachineConfig> {
        let mut config = self.initial_config();
        for c in s.chars() {
            config = self.step(&config, c)?;
        }
        Ok(config)
    }

    /// Strings containing symbols outside the alphabet are not members.
    pub fn is_member(&self, s: &str) -> bool {
        self.run(s).map(|c| self.accepts_config(&c)).unwrap_or(false)
    }

    pub fn is_member_ids(&self, ids: &[usize]) -> bool {
        let mut config = self.initial_config();
        for &id in ids {
            if id >= self.alphabet.len() {
                return false;
            }
            config = self.step_id(&config, id);
        }
        self.accepts_config(&config)
    }

    pub fn depth_trace(&self, s: &str) -> Result<DepthTrace> {
        let ids = self.alphabet.encode(s)?;
        self.depth_trace_ids(&ids)
    }

    pub fn depth_trace_ids(&self, ids: &[usize]) -> Result<DepthTrace> {
        let mut config = self.initial_config();
        let mut values = Vec::with_capacity(ids.len() * self.counters);
        for (position, &id) in ids.iter().enumerate() {
            if id >= self.alphabet.len() {
                return Err(CounterError::UnknownToken(id));
            }
            config = self.step_id(&config, id);
            if let Some(counter) = config.counters.iter().position(|&c| c < 0) {
                return Err(CounterError::InvalidPrefix { position, counter });
            }
            values.extend(config.counters.iter().map(|&c| c as u32));
        }
        Ok(DepthTrace {
            counters: self.counters,
            values,
        })
    }

    /// Symbols that keep the prefix extendable to a member.
    pub fn valid_next_set(&self, prefix: &str) -> Result<BTreeSet<char>> {
        let ids = self.alphabet.encode(prefix)?;
        Ok(self
            .valid_next_ids(&ids)?
            .into_iter()
            .map(|id| self.alphabet.symbols[id])
            .collect())
    }

    pub fn valid_next_ids(&self, prefix: &[usize]) -> Result<Vec<usize>> {
        let config = self.run_prefix(prefix)?;
        Ok(self.valid_next_from(&config))
    }

    pub(crate) fn valid_next_from(&self, config: &MachineConfig) -> Vec<usize> {
        (0..self.alphabet.len())
            .filter(|&id| self.is_viable(&self.step_id(config, id)))
            .collect()
    }

    /// Runs a prefix, failing on the first non-viable configuration.
    pub fn run_prefix(&self, prefix: &[usize]) -> Result<MachineConfig> {
        let mut config = self.initial_config();
        for (position, &id) in prefix.iter().enumerate() {
            if id >= self.alphabet.len() {
                return Err(CounterError::UnknownToken(id));
            }
            config = self.step_id(&config, id);
            if !self.is_viable(&config) {
                let counter = config.counters.iter().position(|&c| c < 0).unwrap_or(0);
                return Err(CounterError::InvalidPrefix { position, counter });
            }
        }
        Ok(config)
    }
}

/// Counter values after each token: `T` rows by `k` columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthTrace {
    counters: usize,
    values: Vec<u32>,
}

impl DepthTrace {
    pub fn from_rows(counters: usize, rows: &[Vec<u32>]) -> Self {
        Self {
            counters,
            values: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn len(&self) -> usize {
        if self.counters == 0 {
            0
        } else {
            self.values.len() / self.counters
        }
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn counters(&self) -> usize {
        self.counters
    }

    pub fn row(&self, t: usize) -> &[u32] {
        &self.values[t * self.counters..(t + 1) * self.counters]
    }

    /// Depth of one stack at every position.
    pub fn column(&self, stack: usize) -> Vec<u32> {
        (0..self.len()).map(|t| self.row(t)[stack]).collect()
    }

    pub fn rows(&self) -> Vec<Vec<u32>> {
        (0..self.len()).map(|t| self.row(t).to_vec()).collect()
    }
}

/// The interleavings of `u` and `v`.
pub fn shuffle(u: &str, v: &str) -> BTreeSet<String> {
    fn go(u: &[char], v: &[char], prefix: &mut String, out: &mut BTreeSet<String>) {
        if u.is_empty() || v.is_empty() {
            let mut s = prefix.clone();
            s.extend(u.iter().chain(v));
            out.insert(s);
            return;
        }
        prefix.push(u[0]);
        go(&u[1..], v, prefix, out);
        prefix.pop();
        prefix.push(v[0]);
        go(u, &v[1..], prefix, out);
        prefix.pop();
    }
    let u: Vec<char> = u.chars().collect();
    let v: Vec<char> = v.chars().collect();
    let mut out = BTreeSet::new();
    go(&u, &v, &mut String::new(), &mut out);
    out
}

/// A shipped counter language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Language {
    Dyck1,
    Shuffle(usize),
}

impl Language {
    pub fn counters(self) -> usize {
        match self {
            Language::Dyck1 => 1,
            Language::Shuffle(k) => k,
        }
    }

    pub fn alphabet(self) -> Result<Alphabet> {
        let k = self.counters();
        if k == 0 {
            return Err(CounterError::ZeroCounters(k));
        }
        let pairs = extended_pairs();
        if k > pairs.len() {
            return Err(CounterError::TooManyPairs {
                k,
                max: pairs.len(),
            });
        }
        Alphabet::from_pairs(pairs[..k].to_vec())
    }

    pub fn machine(self) -> Result<CounterMachine> {
        match self {
            Language::Dyck1 => dyck1_machine(),
            Language::Shuffle(k) => shuffle_machine(k),
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Language::Dyck1 => write!(f, "dyck1"),
            Language::Shuffle(k) => write!(f, "shuffle{k}"),
        }
    }
}

impl FromStr for Language {
    type Err = CounterError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        if lower == "dyck1" {
            return Ok(Language::Dyck1);
        }
        let k = lower
            .strip_prefix("shuffle")
            .and_then(|rest| rest.parse::<usize>().ok())
            .ok_or_else(|| CounterError::UnknownLanguage(s.to_string()))?;
        if k == 0 {
            return Err(CounterError::ZeroCounters(0));
        }
        Ok(Language::Shuffle(k))
    }
}

impl Serialize for Language {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Language {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Which construction to use; `Shuffle` with k = 1 yields the same language as `Dyck1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LanguageKind {
    Dyck1,
    Shuffle,
}

pub fn make_language(kind: LanguageKind, k: usize) -> Result<CounterMachine> {
    if k < 1 {
        return Err(CounterError::ZeroCounters(k));
    }
    match kind {
        LanguageKind::Dyck1 => dyck1_machine(),
        LanguageKind::Shuffle => shuffle_machine(k),
    }
}

const Q0: StateId = 0;
const Q1: StateId = 1;
const Q2: StateId = 2;

/// Three states: `q0` after an open, `q1` after a close, `q2` dead.
fn dyck1_machine() -> Result<CounterMachine> {
    let alphabet = Language::Dyck1.alphabet()?;
    let update = |sym: usize, state: StateId, _mask: &[bool]| {
        if state == Q2 {
            vec![CounterUpdate::Add(0)]
        } else if sym == 0 {
            vec![CounterUpdate::Add(1)]
        } else {
            vec![CounterUpdate::Add(-1)]
        }
    };
    let transition = |sym: usize, state: StateId, mask: &[bool]| match (state, sym, mask[0]) {
        (Q2, _, _) => Q2,
        (_, 0, _) => Q0,
        (_, _, true) => Q1,
        (_, _, false) => Q2,
    };
    // <q0, 0> only occurs before any input, which admits the empty string.
    let accept = |state: StateId, mask: &[bool]| !mask[0] && (state == Q1 || state == Q0);
    Ok(CounterMachine::new(
        alphabet,
        vec!["q0".into(), "q1".into(), "q2".into()],
        Q0,
        1,
        update,
        transition,
        accept,
        [Q2],
    ))
}

const LIVE: StateId = 0;
const DEAD: StateId = 1;

fn shuffle_machine(k: usize) -> Result<CounterMachine> {
    let alphabet = Language::Shuffle(k).alphabet()?;
    let update = move |sym: usize, state: StateId, _mask: &[bool]| {
        let mut out = vec![CounterUpdate::Add(0); k];
        if state == LIVE {
            let (pair, open) = (sym / 2, sym % 2 == 0);
            out[pair] = CounterUpdate::Add(if open { 1 } else { -1 });
        }
        out
    };
    let transition = |sym: usize, state: StateId, mask: &[bool]| {
        let (pair, open) = (sym / 2, sym % 2 == 0);
        if state == DEAD || (!open && !mask[pair]) {
            DEAD
        } else {
            LIVE
        }
    };
    let accept = |state: StateId, mask: &[bool]| state == LIVE && mask.iter().all(|nz| !nz);
    Ok(CounterMachine::new(
        alphabet,
        vec!["live".into(), "dead".into()],
        LIVE,
        k,
        update,
        transition,
        accept,
        [DEAD],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dyck() -> CounterMachine {
        make_language(LanguageKind::Dyck1, 1).unwrap()
    }

    fn shuffle2() -> CounterMachine {
        make_language(LanguageKind::Shuffle, 2).unwrap()
    }

    #[test]
    fn zero_check_examples() {
        assert_eq!(zero_check(&[0, 0]), vec![false, false]);
        assert_eq!(zero_check(&[0, 3]), vec![false, true]);
        assert_eq!(zero_check(&[-2, 1, 0]), vec![true, true, false]);
    }

    #[test]
    fn dyck_steps_follow_the_diagram() {
        let m = dyck();
        let start = m.initial_config();
        let open = m.step(&start, '(').unwrap();
        assert_eq!(open, MachineConfig { state: Q0, counters: vec![1] });
        let dead = m.step(&start, ')').unwrap();
        assert_eq!(dead, MachineConfig { state: Q2, counters: vec![-1] });
        assert_eq!(m.state_name(dead.state), "q2");
        assert_eq!(m.step(&start, '['), Err(CounterError::UnknownSymbol('[')));
    }

    #[test]
    fn dyck_run_matches_worked_traces() {
        let m = dyck();
        let mut c = m.initial_config();
        let mut seen = vec![];
        for ch in "(())".chars() {
            c = m.step(&c, ch).unwrap();
            seen.push((c.counters[0], m.state_name(c.state).to_string()));
        }
        let expected = [(1, "q0"), (2, "q0"), (1, "q1"), (0, "q1")];
        for (got, want) in seen.iter().zip(expected) {
            assert_eq!((got.0, got.1.as_str()), want);
        }
        assert!(m.accepts_config(&c));
        let end = m.run("(()(").unwrap();
        assert_eq!(end, MachineConfig { state: Q0, counters: vec![2] });
        assert!(!m.accepts_config(&end));
    }

    #[test]
    fn shuffle_close_on_empty_counter_is_dead() {
        let m = shuffle2();
        let c = MachineConfig { state: LIVE, counters: vec![1, 0] };
        let next = m.step(&c, ']').unwrap();
        assert_eq!(next.state, DEAD);
        assert!(!m.is_viable(&next));
    }

    #[test]
    fn membership_examples() {
        let d = dyck();
        assert!(d.is_member("(())"));
        assert!(!d.is_member("(()("));
        assert!(d.is_member(""));
        assert!(!d.is_member(")("));
        assert!(!d.is_member("(x)"));
        let s = shuffle2();
        assert!(s.is_member("([)]"));
        assert!(s.is_member("[((]))"));
        assert!(!s.is_member("])[("));
        assert!(s.is_member(""));
        assert!(make_language(LanguageKind::Shuffle, 1).unwrap().is_member(""));
    }

    #[test]
    fn depth_trace_examples() {
        assert_eq!(dyck().depth_trace("(())").unwrap().rows(), vec![vec![1], vec![2], vec![1], vec![0]]);
        assert_eq!(dyck().depth_trace("(").unwrap().rows(), vec![vec![1]]);
        assert_eq!(
            shuffle2().depth_trace("([)]").unwrap().rows(),
            vec![vec![1, 0], vec![1, 1], vec![0, 1], vec![0, 0]]
        );
        assert_eq!(
            dyck().depth_trace("())"),
            Err(CounterError::InvalidPrefix { position: 2, counter: 0 })
        );
    }

    #[test]
    fn valid_next_examples() {
        let set = |m: &CounterMachine, p: &str| m.valid_next_set(p).unwrap().into_iter().collect::<String>();
        assert_eq!(set(&dyck(), ""), "(");
        assert_eq!(set(&dyck(), "("), "()");
        assert_eq!(set(&shuffle2(), "(["), "()[]");
        assert_eq!(set(&shuffle2(), "[]("), "()[");
        assert!(dyck().valid_next_set(")").is_err());
    }

    #[test]
    fn shuffle_examples() {
        let s = |u: &str, v: &str| shuffle(u, v).into_iter().collect::<Vec<_>>();
        assert_eq!(s("ab", ""), vec!["ab"]);
        assert_eq!(s("", "ab"), vec!["ab"]);
        assert_eq!(s("ab", "cd"), vec!["abcd", "acbd", "acdb", "cabd", "cadb", "cdab"]);
        assert_eq!(s("a", "b"), vec!["ab", "ba"]);
    }

    #[test]
    fn language_construction() {
        let d = make_language(LanguageKind::Dyck1, 1).unwrap();
        assert_eq!(d.alphabet().len(), 2);
        assert_eq!(d.counters(), 1);
        let s6 = make_language(LanguageKind::Shuffle, 6).unwrap();
        assert_eq!(s6.alphabet().len(), 12);
        assert_eq!(s6.counters(), 6);
        assert_eq!(s6.alphabet().symbols().iter().collect::<String>(), "()[]{}<>abxy");
        assert_eq!(make_language(LanguageKind::Shuffle, 0).unwrap_err(), CounterError::ZeroCounters(0));
        let big = make_language(LanguageKind::Shuffle, 9).unwrap();
        assert!(big.is_member("(cd)"));
        assert!(matches!(
            Language::Shuffle(max_pairs() + 1).machine(),
            Err(CounterError::TooManyPairs { .. })
        ));
    }

    #[test]
    fn reset_update_is_supported() {
        // Single counter machine over "(" ")" where ")" resets instead of decrementing.
        let alphabet = Alphabet::from_pairs(vec![('(', ')')]).unwrap();
        let m = CounterMachine::new(
            alphabet,
            vec!["q".into()],
            0,
            1,
            |sym, _, _| vec![if sym == 0 { CounterUpdate::Add(1) } else { CounterUpdate::Reset }],
            |_, q, _| q,
            |_, mask| !mask[0],
            [],
        );
        assert_eq!(m.run("((()").unwrap().counters, vec![0]);
        assert!(m.is_member("((()"));
        assert!(!m.is_member("(()("));
    }

    #[test]
    fn language_names_round_trip() {
        for lang in [Language::Dyck1, Language::Shuffle(2), Language::Shuffle(6)] {
            assert_eq!(lang.to_string().parse::<Language>().unwrap(), lang);
        }
        assert_eq!("Shuffle-4".parse::<Language>().unwrap(), Language::Shuffle(4));
        assert!("dyck2".parse::<Language>().is_err());
        assert!("shuffle0".parse::<Language>().is_err());
    }

    #[test]
    fn alphabet_rejects_duplicates() {
        assert_eq!(
            Alphabet::from_pairs(vec![('(', ')'), ('(', ']')]).unwrap_err(),
            CounterError::DuplicateSymbol('(')
        );
    }
}
