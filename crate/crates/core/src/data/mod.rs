//! Dataset model shared by every stage of the pipeline.
//!
//! Records are addressed by their canonical index (file order), which is the
//! row index of partition matrices and both axes of influence matrices.

mod config;
mod io;
pub mod tokenizer;

pub use config::{CorpusSpec, DuplicateSpec, RunConfig};
pub use io::{load_dataset, save_dataset, serialize_dataset};

use std::collections::HashSet;

use crate::binfmt::digest64;
use crate::error::{Error, Result};

pub type TokenId = u32;

/// Reserved tokens placed directly above the content vocabulary.
///
/// With `content` content tokens `0..content`, the framing uses
/// `QSEP = content`, `ASEP = content + 1`, `EOS = content + 2`. Language
/// models predict over all of these (`alphabet() = content + 3`); the left
/// padding token `PAD = content + 3` only ever appears in contexts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Framing {
    pub content: u32,
}

impl Framing {
    pub const RESERVED: u32 = 3;

    pub fn new(content_vocab: u32) -> Self {
        Framing { content: content_vocab }
    }

    pub fn qsep(&self) -> TokenId {
        self.content
    }

    pub fn asep(&self) -> TokenId {
        self.content + 1
    }

    pub fn eos(&self) -> TokenId {
        self.content + 2
    }

    pub fn pad(&self) -> TokenId {
        self.content + 3
    }

    /// Number of distinct tokens a language model can emit.
    pub fn alphabet(&self) -> u32 {
        self.content + Self::RESERVED
    }
}

/// Non-empty sequence of content token ids below `vocab_size`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    tokens: Vec<TokenId>,
    vocab_size: u32,
}

impl TokenSequence {
    pub fn new(tokens: Vec<TokenId>, vocab_size: u32) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::invalid("vocab_size must be positive"));
        }
        if tokens.is_empty() {
            return Err(Error::invalid("token sequence must be non-empty"));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= vocab_size) {
            return Err(Error::invalid(format!("token id {bad} >= vocab_size {vocab_size}")));
        }
        Ok(TokenSequence { tokens, vocab_size })
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Copy with position `pos` replaced by `token`.
    pub fn with_replaced(&self, pos: usize, token: TokenId) -> Result<Self> {
        let mut tokens = self.tokens.clone();
        *tokens
            .get_mut(pos)
            .ok_or_else(|| Error::invalid(format!("position {pos} out of range")))? = token;
        TokenSequence::new(tokens, self.vocab_size)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QaRecord {
    pub record_id: u64,
    pub question: TokenSequence,
    pub answer: TokenSequence,
}

impl QaRecord {
    pub fn framing(&self) -> Framing {
        Framing::new(self.question.vocab_size())
    }

    /// `QSEP q.. ASEP a.. EOS`: the token-level form of `Q: {q} A: {a}`.
    pub fn training_tokens(&self) -> Vec<TokenId> {
        let f = self.framing();
        let mut out = Vec::with_capacity(self.question.len() + self.answer.len() + 3);
        out.push(f.qsep());
        out.extend_from_slice(self.question.tokens());
        out.push(f.asep());
        out.extend_from_slice(self.answer.tokens());
        out.push(f.eos());
        out
    }

    /// `QSEP q.. ASEP`, the extraction prompt.
    pub fn prompt_tokens(&self) -> Vec<TokenId> {
        let f = self.framing();
        let mut out = Vec::with_capacity(self.question.len() + 2);
        out.push(f.qsep());
        out.extend_from_slice(self.question.tokens());
        out.push(f.asep());
        out
    }

    /// Index in [`training_tokens`](Self::training_tokens) of the first answer token.
    pub fn answer_offset(&self) -> usize {
        self.question.len() + 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorRecord {
    pub record_id: u64,
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QaDataset {
    vocab_size: u32,
    records: Vec<QaRecord>,
}

impl QaDataset {
    pub fn new(vocab_size: u32, records: Vec<QaRecord>) -> Result<Self> {
        check_unique_ids(records.iter().map(|r| r.record_id))?;
        for r in &records {
            for seq in [&r.question, &r.answer] {
                if seq.vocab_size() != vocab_size {
                    return Err(Error::invalid(format!(
                        "record {}: vocab_size {} differs from dataset vocab_size {vocab_size}",
                        r.record_id,
                        seq.vocab_size()
                    )));
                }
            }
        }
        Ok(QaDataset { vocab_size, records })
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn framing(&self) -> Framing {
        Framing::new(self.vocab_size)
    }

    pub fn records(&self) -> &[QaRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorDataset {
    dim: usize,
    n_classes: usize,
    records: Vec<VectorRecord>,
}

impl VectorDataset {
    pub fn new(dim: usize, n_classes: usize, records: Vec<VectorRecord>) -> Result<Self> {
        if dim == 0 || n_classes < 2 {
            return Err(Error::invalid("vector datasets need dim >= 1 and n_classes >= 2"));
        }
        check_unique_ids(records.iter().map(|r| r.record_id))?;
        for r in &records {
            if r.features.len() != dim {
                return Err(Error::invalid(format!(
                    "record {}: {} features, dataset dimension is {dim}",
                    r.record_id,
                    r.features.len()
                )));
            }
            if r.label >= n_classes {
                return Err(Error::invalid(format!(
                    "record {}: label {} >= n_classes {n_classes}",
                    r.record_id, r.label
                )));
            }
            if r.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("record {}: non-finite feature", r.record_id)));
            }
        }
        Ok(VectorDataset {
            dim,
            n_classes,
            records,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn records(&self) -> &[VectorRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn check_unique_ids(ids: impl Iterator<Item = u64>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateRecordId(id));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Qa,
    Vector,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Qa => "qa",
            Modality::Vector => "vector",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "qa" => Ok(Modality::Qa),
            "vector" | "vec" => Ok(Modality::Vector),
            other => Err(Error::invalid(format!("unknown modality {other:?}"))),
        }
    }
}

/// Homogeneous collection of records; mixing modalities is unrepresentable.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Qa(QaDataset),
    Vector(VectorDataset),
}

/// Borrowed view of one record of either modality.
#[derive(Debug, Clone, Copy)]
pub enum Record<'a> {
    Qa(&'a QaRecord),
    Vector(&'a VectorRecord),
}

impl Record<'_> {
    pub fn record_id(&self) -> u64 {
        match self {
            Record::Qa(r) => r.record_id,
            Record::Vector(r) => r.record_id,
        }
    }

    pub fn modality(&self) -> Modality {
        match self {
            Record::Qa(_) => Modality::Qa,
            Record::Vector(_) => Modality::Vector,
        }
    }
}

impl Dataset {
    pub fn modality(&self) -> Modality {
        match self {
            Dataset::Qa(_) => Modality::Qa,
            Dataset::Vector(_) => Modality::Vector,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::Qa(d) => d.len(),
            Dataset::Vector(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn record(&self, index: usize) -> Record<'_> {
        match self {
            Dataset::Qa(d) => Record::Qa(&d.records()[index]),
            Dataset::Vector(d) => Record::Vector(&d.records()[index]),
        }
    }

    pub fn records(&self) -> impl Iterator<Item = Record<'_>> {
        (0..self.len()).map(move |i| self.record(i))
    }

    pub fn record_ids(&self) -> Vec<u64> {
        self.records().map(|r| r.record_id()).collect()
    }

    /// Canonical index of the record with id `record_id`.
    pub fn index_of(&self, record_id: u64) -> Option<usize> {
        self.records().position(|r| r.record_id() == record_id)
    }

    pub fn as_qa(&self) -> Result<&QaDataset> {
        match self {
            Dataset::Qa(d) => Ok(d),
            Dataset::Vector(_) => Err(Error::ModalityMismatch {
                expected: "qa",
                found: "vector",
            }),
        }
    }

    pub fn as_vector(&self) -> Result<&VectorDataset> {
        match self {
            Dataset::Vector(d) => Ok(d),
            Dataset::Qa(_) => Err(Error::ModalityMismatch {
                expected: "vector",
                found: "qa",
            }),
        }
    }

    /// Stable 64-bit content hash of the canonical file rendering.
    pub fn content_hash(&self) -> u64 {
        digest64(serialize_dataset(self).as_bytes())
    }
}

impl From<QaDataset> for Dataset {
    fn from(d: QaDataset) -> Self {
        Dataset::Qa(d)
    }
}

impl From<VectorDataset> for Dataset {
    fn from(d: VectorDataset) -> Self {
        Dataset::Vector(d)
    }
}
