//! Experiment configuration, stored as TOML.

use std::path::{Path, PathBuf};

use counterprobe::counterlang::{max_pairs, Language};
use counterprobe::dataset::ControlMode;
use counterprobe::probe::{ProbeArch, ProbeTraining, MAX_HIDDEN_LAYERS};
use counterprobe::transformer::TransformerConfig;
use serde::{Deserialize, Serialize};

use crate::store::sha256_hex;
use crate::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LanguageKind {
    Dyck1,
    Shuffle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageSpec {
    pub kind: LanguageKind,
    pub k: usize,
}

impl LanguageSpec {
    pub fn from_language(language: Language) -> Self {
        match language {
            Language::Dyck1 => Self {
                kind: LanguageKind::Dyck1,
                k: 1,
            },
            Language::Shuffle(k) => Self {
                kind: LanguageKind::Shuffle,
                k,
            },
        }
    }

    pub fn language(&self) -> Language {
        match self.kind {
            LanguageKind::Dyck1 => Language::Dyck1,
            LanguageKind::Shuffle => Language::Shuffle(self.k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub n: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
    /// Held-out sequences for measuring recognition after training.
    pub heldout: usize,
    pub heldout_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// Hidden-layer counts to sweep.
    pub archs: Vec<usize>,
    pub seed: u64,
    pub split_ratio: f64,
    pub control: ControlMode,
    pub epochs: usize,
    pub lr: f32,
    pub batch: usize,
    /// Also probe positional vectors and an untrained model (linear probe only).
    pub baselines: bool,
}

impl ProbeConfig {
    pub fn archs(&self) -> Vec<ProbeArch> {
        self.archs.iter().map(|&l| ProbeArch::new(l).expect("validated")).collect()
    }

    pub fn training(&self) -> ProbeTraining {
        ProbeTraining {
            epochs: self.epochs,
            lr: self.lr,
            batch: self.batch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub language: LanguageSpec,
    pub corpus: CorpusConfig,
    pub transformer: TransformerConfig,
    pub probe: ProbeConfig,
}

impl ExperimentConfig {
    /// Standard recipe for `language`; every stage seed is derived from `master_seed`.
    pub fn new(language: Language, master_seed: u64) -> Self {
        let vocab = 2 * language.counters();
        let mut cfg = Self {
            master_seed,
            output_dir: PathBuf::from("runs").join(language.to_string()),
            language: LanguageSpec::from_language(language),
            corpus: CorpusConfig {
                n: 10_000,
                min_len: 2,
                max_len: 50,
                seed: 0,
                heldout: 2_000,
                heldout_seed: 0,
            },
            transformer: TransformerConfig::new(vocab, 0),
            probe: ProbeConfig {
                archs: (0..=MAX_HIDDEN_LAYERS).collect(),
                seed: 0,
                split_ratio: 0.8,
                control: ControlMode::PerRecord,
                epochs: 10,
                lr: 1e-3,
                batch: 32,
                baselines: true,
            },
        };
        cfg.reseed(master_seed);
        cfg
    }

    pub fn reseed(&mut self, master_seed: u64) {
        self.master_seed = master_seed;
        self.corpus.seed = master_seed;
        self.corpus.heldout_seed = master_seed.wrapping_add(1);
        self.transformer.seed = master_seed.wrapping_add(2);
        self.probe.seed = master_seed.wrapping_add(3);
    }

    /// Switches language, resizing the model's vocabulary to match.
    pub fn set_language(&mut self, language: Language) {
        self.language = LanguageSpec::from_language(language);
        self.transformer.vocab = 2 * language.counters();
    }

    pub fn language(&self) -> Language {
        self.language.language()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(CliError::Config {
                field: field.to_string(),
                message,
            })
        };
        let lang = &self.language;
        match lang.kind {
            LanguageKind::Dyck1 if lang.k != 1 => return bad("language.k", format!("dyck1 has one counter, got {}", lang.k)),
            LanguageKind::Shuffle if lang.k == 0 || lang.k > max_pairs() => {
                return bad("language.k", format!("must lie in 1..={}, got {}", max_pairs(), lang.k))
            }
            _ => {}
        }
        let c = &self.corpus;
        if c.n < 2 {
            return bad("corpus.n", "need at least 2 sequences to split".into());
        }
        if c.min_len < 2 {
            return bad("corpus.min_len", format!("must be at least 2, got {}", c.min_len));
        }
        if c.max_len < c.min_len || (c.min_len..=c.max_len).all(|l| l % 2 == 1) {
            return bad("corpus.max_len", format!("no even length in [{}, {}]", c.min_len, c.max_len));
        }
        if c.heldout == 0 {
            return bad("corpus.heldout", "must be positive".into());
        }
        let t = &self.transformer;
        if let Err(e) = t.validate() {
            return bad("transformer", e.to_string());
        }
        let vocab = 2 * self.language().counters();
        if t.vocab != vocab {
            return bad("transformer.vocab", format!("{} has {vocab} symbols, got {}", self.language(), t.vocab));
        }
        if t.max_len < c.max_len {
            return bad("transformer.max_len", format!("{} is shorter than corpus.max_len {}", t.max_len, c.max_len));
        }
        if t.epochs == 0 {
            return bad("transformer.epochs", "must be positive".into());
        }
        let p = &self.probe;
        if p.archs.is_empty() {
            return bad("probe.archs", "empty architecture list".into());
        }
        if let Some(l) = p.archs.iter().find(|&&l| l > MAX_HIDDEN_LAYERS) {
            return bad("probe.archs", format!("at most {MAX_HIDDEN_LAYERS} hidden layers, got {l}"));
        }
        if !(p.split_ratio > 0.0 && p.split_ratio < 1.0) {
            return bad("probe.split_ratio", format!("must lie in (0, 1), got {}", p.split_ratio));
        }
        if p.epochs == 0 || p.batch == 0 {
            return bad("probe", "epochs and batch must be positive".into());
        }
        if !(p.lr > 0.0) {
            return bad("probe.lr", format!("must be positive, got {}", p.lr));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config {
            field: e
                .span()
                .map(|s| format!("bytes {}..{}", s.start, s.end))
                .unwrap_or_else(|| "file".into()),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Hash of the whole configuration apart from where it is written.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        sha256_hex(c.to_toml().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_is_lossless() {
        for lang in [Language::Dyck1, Language::Shuffle(2), Language::Shuffle(6)] {
            let cfg = ExperimentConfig::new(lang, 41);
            cfg.validate().unwrap();
            let text = cfg.to_toml();
            let back = ExperimentConfig::from_toml(&text).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.to_toml(), text);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = ExperimentConfig::new(Language::Dyck1, 1).to_toml();
        let extra = text.replacen("[corpus]\n", "[corpus]\nbogus = 3\n", 1);
        let err = ExperimentConfig::from_toml(&extra).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn invalid_fields_are_named() {
        let mut cfg = ExperimentConfig::new(Language::Shuffle(2), 1);
        cfg.transformer.vocab = 6;
        assert!(cfg.validate().unwrap_err().to_string().contains("transformer.vocab"));
        let mut cfg = ExperimentConfig::new(Language::Shuffle(2), 1);
        cfg.probe.archs.push(9);
        assert!(cfg.validate().unwrap_err().to_string().contains("probe.archs"));
        let mut cfg = ExperimentConfig::new(Language::Dyck1, 1);
        cfg.corpus.min_len = 1;
        assert!(cfg.validate().unwrap_err().to_string().contains("corpus.min_len"));
        let mut cfg = ExperimentConfig::new(Language::Dyck1, 1);
        cfg.language.k = 3;
        assert!(cfg.validate().unwrap_err().to_string().contains("language.k"));
    }

    #[test]
    fn seeds_are_explicit_and_derived() {
        let cfg = ExperimentConfig::new(Language::Shuffle(4), 10);
        let text = cfg.to_toml();
        for key in ["master_seed = 10", "seed = 10", "heldout_seed = 11", "seed = 12", "seed = 13"] {
            assert!(text.contains(key), "{key} missing from\n{text}");
        }
        let mut moved = cfg.clone();
        moved.output_dir = "elsewhere".into();
        assert_eq!(moved.hash(), cfg.hash());
        let mut reseeded = cfg.clone();
        reseeded.reseed(11);
        assert_ne!(reseeded.hash(), cfg.hash());
    }
}
