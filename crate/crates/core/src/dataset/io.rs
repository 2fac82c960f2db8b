//! On-disk formats.
//!
//! Corpus: UTF-8 lines. The first line is a JSON header
//! `{"format", "version", "language", "seed", "samples", "tokens"}`; each following
//! line is one sequence `{"tokens": "([)]", "labels": [[..]], "depths": [[..]]}`.
//!
//! Probe split: magic `CPRB`, then little-endian `u32` version, record count, d_model
//! and class count, followed by records of `d_model` `f32` values and a `u16` label.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use super::{Annotation, Corpus, DatasetError, ProbeSplit, Result, Sample};
use crate::counterlang::{DepthTrace, Language};

pub const CORPUS_FORMAT: &str = "counterprobe-corpus";
pub const CORPUS_VERSION: u32 = 1;
pub const PROBE_MAGIC: &[u8; 4] = b"CPRB";
pub const PROBE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusHeader {
    format: String,
    version: u32,
    language: Language,
    seed: u64,
    samples: usize,
    tokens: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusRecord {
    tokens: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<Vec<u8>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    depths: Option<Vec<Vec<u32>>>,
}

pub fn write_corpus<W: Write>(mut w: W, corpus: &Corpus) -> Result<()> {
    let alphabet = corpus.language.alphabet()?;
    let header = CorpusHeader {
        format: CORPUS_FORMAT.into(),
        version: CORPUS_VERSION,
        language: corpus.language,
        seed: corpus.seed,
        samples: corpus.len(),
        tokens: corpus.token_count(),
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes"))?;
    for s in &corpus.samples {
        let record = CorpusRecord {
            tokens: alphabet.decode(&s.tokens)?,
            labels: s.annotation.as_ref().map(|a| a.labels.clone()),
            depths: s.annotation.as_ref().map(|a| a.depths.rows()),
        };
        writeln!(w, "{}", serde_json::to_string(&record).expect("record serializes"))?;
    }
    Ok(())
}

fn parse_err(offset: u64, message: impl Into<String>) -> DatasetError {
    DatasetError::Parse {
        offset,
        message: message.into(),
    }
}

fn json_err(line_start: u64, e: &serde_json::Error) -> DatasetError {
    parse_err(line_start + e.column().saturating_sub(1) as u64, e.to_string())
}

pub fn read_corpus<R: BufRead>(mut r: R) -> Result<Corpus> {
    let mut offset = 0u64;
    let mut line = String::new();
    let n = r.read_line(&mut line)?;
    if n == 0 {
        return Err(parse_err(0, "empty file, expected header"));
    }
    let header: CorpusHeader = serde_json::from_str(line.trim_end()).map_err(|e| json_err(0, &e))?;
    if header.format != CORPUS_FORMAT {
        return Err(parse_err(0, format!("unknown format {:?}", header.format)));
    }
    if header.version != CORPUS_VERSION {
        return Err(DatasetError::Version {
            what: "corpus",
            found: header.version,
            expected: CORPUS_VERSION,
        });
    }
    offset += n as u64;
    let alphabet = header.language.alphabet()?;
    let k = header.language.counters();
    let mut samples = Vec::with_capacity(header.samples);
    let mut tokens = 0usize;
    loop {
        line.clear();
        let n = r.read_line(&mut line)?;
        if n == 0 {
            break;
        }
        let start = offset;
        offset += n as u64;
        if !line.ends_with('\n') {
            return Err(parse_err(offset, "truncated record (missing newline)"));
        }
        let record: CorpusRecord = serde_json::from_str(line.trim_end()).map_err(|e| json_err(start, &e))?;
        let ids = alphabet
            .encode(&record.tokens)
            .map_err(|e| parse_err(start, e.to_string()))?;
        let annotation = match (record.labels, record.depths) {
            (Some(labels), Some(depths)) => {
                if labels.len() != ids.len() || depths.len() != ids.len() {
                    return Err(parse_err(start, "label/depth rows do not match token count"));
                }
                if labels.iter().any(|r| r.len() != alphabet.len()) || depths.iter().any(|r| r.len() != k) {
                    return Err(parse_err(start, "label/depth row width mismatch"));
                }
                Some(Annotation {
                    labels,
                    depths: DepthTrace::from_rows(k, &depths),
                })
            }
            (None, None) => None,
            _ => return Err(parse_err(start, "labels and depths must be given together")),
        };
        tokens += ids.len();
        samples.push(Sample { tokens: ids, annotation });
    }
    if samples.len() != header.samples || tokens != header.tokens {
        return Err(parse_err(
            offset,
            format!(
                "header declares {} samples / {} tokens, body has {} / {}",
                header.samples,
                header.tokens,
                samples.len(),
                tokens
            ),
        ));
    }
    Ok(Corpus {
        language: header.language,
        seed: header.seed,
        samples,
    })
}

pub fn write_probe_split<W: Write>(mut w: W, split: &ProbeSplit, classes: usize) -> Result<()> {
    w.write_all(PROBE_MAGIC)?;
    for v in [PROBE_VERSION, split.len() as u32, split.dim as u32, classes as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    for i in 0..split.len() {
        for x in split.feature(i) {
            w.write_all(&x.to_le_bytes())?;
        }
        w.write_all(&split.labels[i].to_le_bytes())?;
    }
    Ok(())
}

/// Reads a split and its class count. Token ids are not stored, so `tokens` comes back empty.
pub fn read_probe_split<R: Read>(mut r: R) -> Result<(ProbeSplit, usize)> {
    let mut header = [0u8; 20];
    read_at(&mut r, &mut header, 0)?;
    if &header[..4] != PROBE_MAGIC {
        return Err(parse_err(0, format!("bad magic {:?}", &header[..4])));
    }
    let field = |i: usize| u32::from_le_bytes(header[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
    let (version, count, dim, classes) = (field(0), field(1) as usize, field(2) as usize, field(3) as usize);
    if version != PROBE_VERSION {
        return Err(DatasetError::Version {
            what: "probe dataset",
            found: version,
            expected: PROBE_VERSION,
        });
    }
    let record = dim * 4 + 2;
    let mut split = ProbeSplit::new(dim);
    split.features.reserve(count * dim);
    split.labels.reserve(count);
    let mut buf = vec![0u8; record];
    for i in 0..count {
        read_at(&mut r, &mut buf, (20 + i * record) as u64)?;
        split
            .features
            .extend(buf[..dim * 4].chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
        let label = u16::from_le_bytes([buf[dim * 4], buf[dim * 4 + 1]]);
        if label as usize >= classes {
            return Err(parse_err(
                (20 + i * record + dim * 4) as u64,
                format!("label {label} >= class count {classes}"),
            ));
        }
        split.labels.push(label);
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(parse_err((20 + count * record) as u64, "trailing bytes after declared records"));
    }
    Ok((split, classes))
}

/// `read_exact` that reports where a short read happened.
fn read_at<R: Read>(r: &mut R, buf: &mut [u8], offset: u64) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => {
                return Err(parse_err(
                    offset + filled as u64,
                    format!("unexpected end of file ({} of {} bytes)", filled, buf.len()),
                ))
            }
            n => filled += n,
        }
    }
    Ok(())
}
