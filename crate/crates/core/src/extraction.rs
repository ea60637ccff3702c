//! Near-exact extraction: greedy continuation of a record's prompt scored
//! against its answer with sentence-level BLEU over token ids.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::data::{Dataset, TokenId};
use crate::duplicates::DuplicateGroupMap;
use crate::error::{Error, Result};
use crate::learners::{self, LearnerSpec, ModelKey, ModelState, TrainedModel};
use crate::rng::model_seed;
use crate::stats::GroupTag;

pub const DEFAULT_MAX_ORDER: usize = 4;

fn ngram_counts(tokens: &[TokenId], n: usize) -> HashMap<&[TokenId], usize> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram matches and the candidate's n-gram count.
pub fn modified_precision(candidate: &[TokenId], reference: &[TokenId], n: usize) -> (usize, usize) {
    if candidate.len() < n {
        return (0, 0);
    }
    let refs = ngram_counts(reference, n);
    let matches = ngram_counts(candidate, n)
        .into_iter()
        .map(|(g, c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    (matches, candidate.len() + 1 - n)
}

/// Unsmoothed sentence BLEU with uniform weights over orders `1..=max_order`.
pub fn bleu(candidate: &[TokenId], reference: &[TokenId], max_order: usize) -> Result<f64> {
    bleu_smoothed(candidate, reference, max_order, None)
}

/// BLEU where a zero precision is replaced by `epsilon / total` when a
/// smoothing constant is given. Diagnostics only.
pub fn bleu_smoothed(
    candidate: &[TokenId],
    reference: &[TokenId],
    max_order: usize,
    epsilon: Option<f64>,
) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::invalid("BLEU reference must be non-empty"));
    }
    if max_order == 0 {
        return Err(Error::invalid("BLEU max_order must be at least 1"));
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 1..=max_order {
        let (matches, total) = modified_precision(candidate, reference, n);
        let p = match (matches, epsilon) {
            (0, None) => return Ok(0.0),
            (0, Some(eps)) => eps / total.max(1) as f64,
            (m, _) => m as f64 / total as f64,
        };
        log_sum += p.ln() / max_order as f64;
    }
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    Ok((bp * log_sum.exp()).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionResult {
    pub record_id: u64,
    pub group: GroupTag,
    pub prompt: Vec<TokenId>,
    pub generated: Vec<TokenId>,
    pub reference: Vec<TokenId>,
    pub bleu: f64,
}

/// Language model trained on every record of `dataset`.
pub fn train_full_model(dataset: &Dataset, spec: &LearnerSpec, master_seed: u64) -> Result<TrainedModel> {
    let all: Vec<usize> = (0..dataset.len()).collect();
    let key = ModelKey {
        index: usize::MAX,
        seed: model_seed(master_seed, usize::MAX),
    };
    learners::train(dataset, &all, spec, key)
}

fn extract(
    model: &TrainedModel,
    dataset: &Dataset,
    max_len: Option<usize>,
    tag: impl Fn(u64) -> GroupTag + Sync,
) -> Result<Vec<ExtractionResult>> {
    if !matches!(model.state, ModelState::Ngram(_)) {
        return Err(Error::invalid("extraction needs a language model"));
    }
    let qa = dataset.as_qa()?;
    qa.records()
        .par_iter()
        .map(|r| {
            let reference = r.answer.tokens().to_vec();
            let prompt = r.prompt_tokens();
            let limit = max_len.unwrap_or(2 * reference.len());
            let generated = learners::greedy_decode(model, &prompt, limit)?;
            let bleu = bleu(&generated, &reference, DEFAULT_MAX_ORDER)?;
            Ok(ExtractionResult {
                record_id: r.record_id,
                group: tag(r.record_id),
                prompt,
                generated,
                reference,
                bleu,
            })
        })
        .collect()
}

/// Extraction for every record of a target dataset. `max_len = None`
/// stops generation at twice the reference length.
pub fn measure_extraction(
    model: &TrainedModel,
    dataset: &Dataset,
    groups: &DuplicateGroupMap,
    max_len: Option<usize>,
) -> Result<Vec<ExtractionResult>> {
    extract(model, dataset, max_len, |id| {
        if groups.group_of(id).is_some() {
            GroupTag::WithDuplicates
        } else {
            GroupTag::Unique
        }
    })
}

/// Extraction for records the model never saw.
pub fn measure_held_out(
    model: &TrainedModel,
    held_out: &Dataset,
    max_len: Option<usize>,
) -> Result<Vec<ExtractionResult>> {
    extract(model, held_out, max_len, |_| GroupTag::HeldOut)
}

/// CSV `record_id,group,bleu,gen_len,ref_len`.
pub fn extraction_to_csv(results: &[ExtractionResult]) -> String {
    let mut out = String::from("record_id,group,bleu,gen_len,ref_len\n");
    for r in results {
        writeln!(
            out,
            "{},{},{:?},{},{}",
            r.record_id,
            r.group.name(),
            r.bleu,
            r.generated.len(),
            r.reference.len()
        )
        .unwrap();
    }
    out
}
