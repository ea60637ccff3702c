//! Seeded synthetic datasets.
//!
//! QA records are drawn so that no n-gram (`n` = learner order) of the framed
//! training sequence occurs twice anywhere in the corpus. A unique record
//! therefore only shares lower-order contexts with other records, which keeps
//! its influence on others down to context-count and smoothing shifts.

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Dataset, Framing, QaDataset, QaRecord, TokenId, TokenSequence, VectorDataset, VectorRecord};
use crate::error::{Error, Result};
use crate::rng::stream;

pub const DEFAULT_SPREAD: f64 = 0.5;

const TOKEN_TRIES: usize = 64;
const RECORD_RESTARTS: usize = 2000;

/// QA dataset of `n_records` records with ids `0..n_records`.
pub fn generate_qa_dataset(
    n_records: usize,
    vocab_size: u32,
    q_len: usize,
    a_len: usize,
    order: usize,
    seed: u64,
) -> Result<Dataset> {
    if vocab_size < 2 {
        return Err(Error::invalid("vocab_size must be at least 2"));
    }
    if q_len == 0 || a_len == 0 {
        return Err(Error::invalid("question and answer lengths must be at least 1"));
    }
    if order == 0 {
        return Err(Error::invalid("n-gram order must be at least 1"));
    }
    let framing = Framing::new(vocab_size);
    let seq_len = q_len + a_len + 3;
    let per_record = (seq_len + 1).saturating_sub(order);
    let capacity = (vocab_size as f64 + Framing::RESERVED as f64).powi(order as i32);
    if (n_records * per_record) as f64 > capacity {
        return Err(infeasible(n_records, vocab_size, order));
    }

    let mut rng = stream(seed, 0);
    let mut seen: HashSet<Vec<TokenId>> = HashSet::new();
    let mut records = Vec::with_capacity(n_records);
    for id in 0..n_records {
        let seq = (0..RECORD_RESTARTS)
            .find_map(|_| draw_sequence(&mut rng, &framing, q_len, a_len, order, &seen))
            .ok_or_else(|| infeasible(n_records, vocab_size, order))?;
        for w in content_ngrams(&seq, order, &framing) {
            seen.insert(w.to_vec());
        }
        records.push(QaRecord {
            record_id: id as u64,
            question: TokenSequence::new(seq[1..=q_len].to_vec(), vocab_size)?,
            answer: TokenSequence::new(seq[q_len + 2..seq_len - 1].to_vec(), vocab_size)?,
        });
    }
    Ok(Dataset::Qa(QaDataset::new(vocab_size, records)?))
}

fn infeasible(n: usize, vocab: u32, order: usize) -> Error {
    Error::invalid(format!(
        "cannot draw {n} records without a shared {order}-gram over vocab_size {vocab}; use a larger vocab_size"
    ))
}

/// Windows of length `order` that contain at least one content token.
fn content_ngrams<'a>(
    seq: &'a [TokenId],
    order: usize,
    framing: &'a Framing,
) -> impl Iterator<Item = &'a [TokenId]> + 'a {
    seq.windows(order)
        .filter(move |w| w.iter().any(|&t| t < framing.content))
}

/// One attempt at a framed sequence whose n-grams are all new; `None` when
/// a position runs out of tries.
fn draw_sequence(
    rng: &mut ChaCha8Rng,
    framing: &Framing,
    q_len: usize,
    a_len: usize,
    order: usize,
    seen: &HashSet<Vec<TokenId>>,
) -> Option<Vec<TokenId>> {
    let mut seq = vec![framing.qsep()];
    let mut local: HashSet<Vec<TokenId>> = HashSet::new();
    let fresh = |seq: &[TokenId], local: &HashSet<Vec<TokenId>>| {
        if seq.len() < order {
            return true;
        }
        let w = &seq[seq.len() - order..];
        w.iter().all(|&t| t >= framing.content) || (!seen.contains(w) && !local.contains(w))
    };
    let mut push = |seq: &mut Vec<TokenId>, local: &mut HashSet<Vec<TokenId>>, fixed: Option<TokenId>| {
        let tries = if fixed.is_some() { 1 } else { TOKEN_TRIES };
        for _ in 0..tries {
            let tok = fixed.unwrap_or_else(|| rng.random_range(0..framing.content));
            seq.push(tok);
            if fresh(seq, local) {
                if seq.len() >= order {
                    local.insert(seq[seq.len() - order..].to_vec());
                }
                return true;
            }
            seq.pop();
        }
        false
    };
    for _ in 0..q_len {
        if !push(&mut seq, &mut local, None) {
            return None;
        }
    }
    if !push(&mut seq, &mut local, Some(framing.asep())) {
        return None;
    }
    for _ in 0..a_len {
        if !push(&mut seq, &mut local, None) {
            return None;
        }
    }
    if !push(&mut seq, &mut local, Some(framing.eos())) {
        return None;
    }
    Some(seq)
}

/// Gaussian class clusters at the default spread.
pub fn generate_vector_dataset(n_records: usize, dim: usize, n_classes: usize, seed: u64) -> Result<Dataset> {
    generate_vector_dataset_with_spread(n_records, dim, n_classes, DEFAULT_SPREAD, seed)
}

/// Class `c` has a centre drawn from a standard normal; each record adds
/// isotropic noise of standard deviation `spread`. Labels cycle through the
/// classes so every class is equally represented.
pub fn generate_vector_dataset_with_spread(
    n_records: usize,
    dim: usize,
    n_classes: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if dim < 2 {
        return Err(Error::invalid("dim must be at least 2"));
    }
    if n_classes < 2 {
        return Err(Error::invalid("n_classes must be at least 2"));
    }
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(Error::invalid("spread must be finite and non-negative"));
    }
    let mut centre_rng = stream(seed, 1);
    let centres: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut centre_rng)).collect())
        .collect();
    let mut rng = stream(seed, 2);
    let records = (0..n_records)
        .map(|id| {
            let label = id % n_classes;
            let features = centres[label]
                .iter()
                .map(|&c| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    c + spread * z
                })
                .collect();
            VectorRecord {
                record_id: id as u64,
                features,
                label,
            }
        })
        .collect();
    Ok(Dataset::Vector(VectorDataset::new(dim, n_classes, records)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::LinearModel;

    fn all_ngrams(d: &Dataset, order: usize) -> Vec<Vec<TokenId>> {
        let qa = d.as_qa().unwrap();
        let f = qa.framing();
        qa.records()
            .iter()
            .flat_map(|r| {
                let seq = r.training_tokens();
                content_ngrams(&seq, order, &f).map(<[_]>::to_vec).collect::<Vec<_>>()
            })
            .collect()
    }

    #[test]
    fn no_shared_bigram_across_records() {
        let d = generate_qa_dataset(30, 200, 6, 12, 2, 11).unwrap();
        assert_eq!(d.len(), 30);
        let grams = all_ngrams(&d, 2);
        let distinct: HashSet<_> = grams.iter().collect();
        assert_eq!(distinct.len(), grams.len());
        // in particular no two answers share a bigram
        let qa = d.as_qa().unwrap();
        let mut answer_grams = HashSet::new();
        for r in qa.records() {
            for w in r.answer.tokens().windows(2) {
                assert!(answer_grams.insert(w.to_vec()));
            }
        }
    }

    #[test]
    fn trigram_constraint_at_small_vocab() {
        let d = generate_qa_dataset(48, 20, 6, 12, 3, 5).unwrap();
        let grams = all_ngrams(&d, 3);
        let distinct: HashSet<_> = grams.iter().collect();
        assert_eq!(distinct.len(), grams.len());
    }

    #[test]
    fn single_record_and_determinism() {
        assert_eq!(generate_qa_dataset(1, 10, 3, 3, 2, 0).unwrap().len(), 1);
        let a = generate_qa_dataset(10, 50, 4, 6, 2, 42).unwrap();
        let b = generate_qa_dataset(10, 50, 4, 6, 2, 42).unwrap();
        let c = generate_qa_dataset(10, 50, 4, 6, 2, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn infeasible_vocab_suggests_larger() {
        let err = generate_qa_dataset(100, 3, 6, 12, 2, 0).unwrap_err();
        assert!(err.to_string().contains("larger vocab_size"), "{err}");
    }

    #[test]
    fn vector_default_spread_is_learnable() {
        let d = generate_vector_dataset(200, 16, 2, 9).unwrap();
        let v = d.as_vector().unwrap();
        let recs: Vec<&VectorRecord> = v.records().iter().collect();
        let (m, _) = LinearModel::fit(&recs, 2, 16, 0.5, 100, 1e-3);
        let correct = recs.iter().filter(|r| m.predict(&r.features) == r.label).count();
        assert!(correct as f64 / recs.len() as f64 >= 0.95);
        assert_eq!(d, generate_vector_dataset(200, 16, 2, 9).unwrap());
        assert_eq!(
            generate_vector_dataset(10, 2, 2, 1).unwrap().as_vector().unwrap().dim(),
            2
        );
    }
}
