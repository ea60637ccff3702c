//! Deterministic learners behind one contract: train on a subset of a
//! dataset, report per-record loss, and (for language models) decode greedily.

mod linear;
mod ngram;

pub use linear::LinearModel;
pub use ngram::NgramModel;

use crate::binfmt::{digest64, Encoder};
use crate::data::{Dataset, QaRecord, Record, TokenId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LearnerKind {
    NgramLm,
    LinearClassifier,
}

impl LearnerKind {
    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::NgramLm => "ngram_lm",
            LearnerKind::LinearClassifier => "linear_classifier",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ngram_lm" => Ok(LearnerKind::NgramLm),
            "linear_classifier" => Ok(LearnerKind::LinearClassifier),
            other => Err(Error::invalid(format!("unknown learner {other:?}"))),
        }
    }
}

/// Which positions of a QA record's training string the LM loss averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum LossScope {
    /// Question, separators, answer and end token.
    #[default]
    Full,
    /// Answer tokens and end token only.
    Answer,
}

impl LossScope {
    pub fn name(self) -> &'static str {
        match self {
            LossScope::Full => "full",
            LossScope::Answer => "answer",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(LossScope::Full),
            "answer" => Ok(LossScope::Answer),
            other => Err(Error::invalid(format!("unknown loss scope {other:?}"))),
        }
    }
}

/// Learner kind plus the hyperparameters of both learners.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub order: usize,
    pub add_k: f64,
    pub loss_scope: LossScope,
    pub learning_rate: f64,
    pub iterations: usize,
    pub l2: f64,
}

impl Default for LearnerSpec {
    fn default() -> Self {
        LearnerSpec {
            kind: LearnerKind::NgramLm,
            order: 3,
            add_k: 0.1,
            loss_scope: LossScope::Full,
            learning_rate: 0.5,
            iterations: 100,
            l2: 1e-3,
        }
    }
}

impl LearnerSpec {
    pub fn ngram(order: usize, add_k: f64) -> Self {
        LearnerSpec {
            kind: LearnerKind::NgramLm,
            order,
            add_k,
            ..Self::default()
        }
    }

    pub fn linear(learning_rate: f64, iterations: usize, l2: f64) -> Self {
        LearnerSpec {
            kind: LearnerKind::LinearClassifier,
            learning_rate,
            iterations,
            l2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        if self.order < 1 {
            return Err(Error::invalid("n-gram order must be at least 1"));
        }
        if self.iterations < 1 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        positive("add_k", self.add_k)?;
        positive("learning_rate", self.learning_rate)?;
        positive("l2", self.l2)
    }

    /// Canonical one-line rendering, stored in loss-matrix headers.
    pub fn canonical(&self) -> String {
        format!(
            "{};order={};add_k={:?};loss_scope={};learning_rate={:?};iterations={};l2={:?}",
            self.kind.name(),
            self.order,
            self.add_k,
            self.loss_scope.name(),
            self.learning_rate,
            self.iterations,
            self.l2
        )
    }

    pub fn content_hash(&self) -> u64 {
        digest64(self.canonical().as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelKey {
    pub index: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub spec: LearnerSpec,
    pub key: ModelKey,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelState {
    Ngram(NgramModel),
    Linear(LinearModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub provenance: Provenance,
    pub state: ModelState,
}

/// Training objective per iteration; the n-gram learner records one entry.
pub type TrainingTrace = Vec<f64>;

/// Trains a model on the records at `included` (canonical indices).
pub fn train(dataset: &Dataset, included: &[usize], spec: &LearnerSpec, key: ModelKey) -> Result<TrainedModel> {
    train_traced(dataset, included, spec, key).map(|(m, _)| m)
}

pub fn train_traced(
    dataset: &Dataset,
    included: &[usize],
    spec: &LearnerSpec,
    key: ModelKey,
) -> Result<(TrainedModel, TrainingTrace)> {
    spec.validate()?;
    if included.is_empty() {
        return Err(Error::EmptySubset { model: key.index });
    }
    if let Some(&bad) = included.iter().find(|&&i| i >= dataset.len()) {
        return Err(Error::invalid(format!(
            "record index {bad} out of range for {} records",
            dataset.len()
        )));
    }
    let provenance = Provenance {
        spec: spec.clone(),
        key,
    };
    match spec.kind {
        LearnerKind::NgramLm => {
            let qa = dataset.as_qa()?;
            let f = qa.framing();
            let mut lm = NgramModel::new(spec.order, spec.add_k, f.alphabet(), f.pad());
            for &i in included {
                lm.observe(&qa.records()[i].training_tokens(), 1);
            }
            let model = TrainedModel {
                provenance,
                state: ModelState::Ngram(lm),
            };
            let losses = included
                .iter()
                .map(|&i| loss(&model, dataset.record(i)))
                .collect::<Result<Vec<_>>>()?;
            let train_loss = crate::scalar::mean(&losses).expect("non-empty subset");
            Ok((model, vec![train_loss]))
        }
        LearnerKind::LinearClassifier => {
            let vd = dataset.as_vector()?;
            let records: Vec<_> = included.iter().map(|&i| &vd.records()[i]).collect();
            let (lin, trace) = LinearModel::fit(
                &records,
                vd.n_classes(),
                vd.dim(),
                spec.learning_rate,
                spec.iterations,
                spec.l2,
            );
            Ok((
                TrainedModel {
                    provenance,
                    state: ModelState::Linear(lin),
                },
                trace,
            ))
        }
    }
}

fn qa_loss(lm: &NgramModel, scope: LossScope, r: &QaRecord) -> Result<f64> {
    let alphabet = lm.alphabet();
    let content = alphabet - crate::data::Framing::RESERVED;
    if r.question.vocab_size() != content {
        return Err(Error::invalid(format!(
            "record {} uses vocab_size {}, model was trained with {content}",
            r.record_id,
            r.question.vocab_size()
        )));
    }
    let tokens = r.training_tokens();
    let from = match scope {
        LossScope::Full => 1,
        LossScope::Answer => r.answer_offset(),
    };
    Ok(lm
        .mean_nll(&tokens, from)
        .expect("records have at least one scored token"))
}

/// Per-record loss: mean token NLL for language models, cross-entropy of the
/// true label for classifiers.
pub fn loss(model: &TrainedModel, record: Record<'_>) -> Result<f64> {
    match (&model.state, record) {
        (ModelState::Ngram(lm), Record::Qa(r)) => qa_loss(lm, model.provenance.spec.loss_scope, r),
        (ModelState::Linear(lin), Record::Vector(r)) => {
            if r.label >= lin.n_classes() {
                return Err(Error::invalid(format!(
                    "record {}: label {} outside model classes",
                    r.record_id, r.label
                )));
            }
            Ok(lin.cross_entropy(&r.features, r.label))
        }
        (ModelState::Ngram(_), Record::Vector(_)) => Err(Error::ModalityMismatch {
            expected: "qa",
            found: "vector",
        }),
        (ModelState::Linear(_), Record::Qa(_)) => Err(Error::ModalityMismatch {
            expected: "vector",
            found: "qa",
        }),
    }
}

/// Greedy decoding from `prompt`; see [`NgramModel::greedy_continue`].
pub fn greedy_decode(model: &TrainedModel, prompt: &[TokenId], max_len: usize) -> Result<Vec<TokenId>> {
    match &model.state {
        ModelState::Ngram(lm) => {
            let eos = lm.alphabet() - 1;
            Ok(lm.greedy_continue(prompt, max_len, eos))
        }
        ModelState::Linear(_) => Err(Error::invalid("greedy decoding needs a language model")),
    }
}

const DUMP_MAGIC: &[u8; 8] = b"CFIMODEL";

impl TrainedModel {
    /// Debug dump: magic, version, learner spec string, model index and seed,
    /// then the learned state (little-endian throughout).
    pub fn dump(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.bytes(DUMP_MAGIC)
            .u32(1)
            .string(&self.provenance.spec.canonical())
            .u64(self.provenance.key.index as u64)
            .u64(self.provenance.key.seed);
        match &self.state {
            ModelState::Ngram(lm) => {
                e.u32(0);
                lm.dump_into(&mut e);
            }
            ModelState::Linear(lin) => {
                e.u32(1);
                lin.dump_into(&mut e);
            }
        }
        e.into_bytes()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{QaDataset, TokenSequence, VectorDataset, VectorRecord};

    fn qa(records: &[(&[u32], &[u32])], v: u32) -> Dataset {
        let recs = records
            .iter()
            .enumerate()
            .map(|(i, (q, a))| QaRecord {
                record_id: i as u64,
                question: TokenSequence::new(q.to_vec(), v).unwrap(),
                answer: TokenSequence::new(a.to_vec(), v).unwrap(),
            })
            .collect();
        QaDataset::new(v, recs).unwrap().into()
    }

    fn key(j: usize) -> ModelKey {
        ModelKey { index: j, seed: 11 }
    }

    #[test]
    fn spec_validation() {
        assert!(LearnerSpec::default().validate().is_ok());
        assert!(LearnerSpec::ngram(0, 0.1).validate().is_err());
        assert!(LearnerSpec::ngram(2, 0.0).validate().is_err());
        assert!(LearnerSpec::linear(0.1, 0, 0.1).validate().is_err());
        assert!(LearnerSpec::linear(0.1, 5, 0.0).validate().is_err());
    }

    #[test]
    fn empty_subset_and_mismatch_errors() {
        let d = qa(&[(&[1], &[2]), (&[3], &[4])], 5);
        assert!(matches!(
            train(&d, &[], &LearnerSpec::ngram(2, 0.1), key(3)),
            Err(Error::EmptySubset { model: 3 })
        ));
        assert!(matches!(
            train(&d, &[0], &LearnerSpec::linear(0.1, 3, 0.1), key(0)),
            Err(Error::ModalityMismatch { .. })
        ));
    }

    #[test]
    fn deterministic_training() {
        let d = qa(&[(&[1, 2], &[3, 4]), (&[0, 2], &[4, 1])], 5);
        let spec = LearnerSpec::ngram(3, 0.1);
        let a = train(&d, &[0, 1], &spec, key(0)).unwrap();
        let b = train(&d, &[0, 1], &spec, key(0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dump(), b.dump());
    }

    #[test]
    fn verbatim_record_beats_uniform() {
        let d = qa(&[(&[1, 2, 3], &[4, 5, 6]), (&[7, 8], &[9, 0])], 10);
        let spec = LearnerSpec::ngram(2, 0.1);
        let m = train(&d, &[0, 0, 0, 0, 1], &spec, key(0)).unwrap();
        let l = loss(&m, d.record(0)).unwrap();
        assert!(l < (13f64).ln());
    }

    #[test]
    fn answer_scope_differs_from_full() {
        let d = qa(&[(&[1, 2, 3], &[4, 5]), (&[1, 2, 6], &[7, 8])], 10);
        let full = train(&d, &[0, 1], &LearnerSpec::ngram(2, 0.1), key(0)).unwrap();
        let ans_spec = LearnerSpec {
            loss_scope: LossScope::Answer,
            ..LearnerSpec::ngram(2, 0.1)
        };
        let ans = train(&d, &[0, 1], &ans_spec, key(0)).unwrap();
        let lf = loss(&full, d.record(0)).unwrap();
        let la = loss(&ans, d.record(0)).unwrap();
        assert!(lf.is_finite() && la.is_finite());
        assert_ne!(lf, la);
    }

    #[test]
    fn greedy_decode_requires_lm() {
        let vd: Dataset = VectorDataset::new(
            1,
            2,
            vec![VectorRecord {
                record_id: 0,
                features: vec![1.0],
                label: 1,
            }],
        )
        .unwrap()
        .into();
        let m = train(&vd, &[0], &LearnerSpec::linear(0.1, 3, 0.1), key(0)).unwrap();
        assert!(greedy_decode(&m, &[0], 4).is_err());
        assert!((loss(&m, vd.record(0)).unwrap()).is_finite());
    }

    #[test]
    fn qa_record_round_trip_decodes_answer() {
        let d = qa(&[(&[1, 2], &[3, 4, 5]), (&[6, 7], &[8, 9, 0])], 10);
        let m = train(&d, &[0, 1], &LearnerSpec::ngram(3, 0.1), key(0)).unwrap();
        let r = d.as_qa().unwrap().records()[1].clone();
        let out = greedy_decode(&m, &r.prompt_tokens(), 10).unwrap();
        assert_eq!(out, r.answer.tokens());
    }
}
