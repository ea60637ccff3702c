//! Count-based n-gram language model with add-k smoothing.

use std::collections::BTreeMap;

use crate::binfmt::Encoder;
use crate::data::TokenId;
use crate::scalar::mean;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Followers {
    total: u64,
    next: BTreeMap<TokenId, u64>,
}

/// `P(w | ctx) = (c(ctx, w) + k) / (c(ctx) + k * V)` over an alphabet of `V`
/// tokens, with contexts of `order - 1` tokens left-padded by `pad`.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    order: usize,
    add_k: f64,
    alphabet: u32,
    pad: TokenId,
    contexts: BTreeMap<Vec<TokenId>, Followers>,
}

impl NgramModel {
    /// Model with no observations: uniform over the alphabet.
    pub fn new(order: usize, add_k: f64, alphabet: u32, pad: TokenId) -> Self {
        assert!(order >= 1, "n-gram order must be at least 1");
        assert!(add_k > 0.0, "add-k constant must be positive");
        assert!(alphabet >= 1, "alphabet must be non-empty");
        NgramModel {
            order,
            add_k,
            alphabet,
            pad,
            contexts: BTreeMap::new(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alphabet(&self) -> u32 {
        self.alphabet
    }

    fn context_at(&self, seq: &[TokenId], pos: usize) -> Vec<TokenId> {
        let width = self.order - 1;
        (0..width)
            .map(|back| {
                let offset = width - back;
                if pos >= offset {
                    seq[pos - offset]
                } else {
                    self.pad
                }
            })
            .collect()
    }

    /// Counts every position `k >= from` of `seq` as a prediction target.
    pub fn observe(&mut self, seq: &[TokenId], from: usize) {
        for pos in from..seq.len() {
            let ctx = self.context_at(seq, pos);
            let f = self.contexts.entry(ctx).or_default();
            f.total += 1;
            *f.next.entry(seq[pos]).or_default() += 1;
        }
    }

    pub fn prob(&self, context: &[TokenId], token: TokenId) -> f64 {
        let (total, count) = self
            .contexts
            .get(context)
            .map_or((0, 0), |f| (f.total, f.next.get(&token).copied().unwrap_or(0)));
        (count as f64 + self.add_k) / (total as f64 + self.add_k * self.alphabet as f64)
    }

    /// Per-position negative log-likelihood for positions `from..seq.len()`.
    pub fn position_nll(&self, seq: &[TokenId], from: usize) -> Vec<f64> {
        (from..seq.len())
            .map(|pos| -self.prob(&self.context_at(seq, pos), seq[pos]).ln())
            .collect()
    }

    /// Mean per-token negative log-likelihood (natural log).
    pub fn mean_nll(&self, seq: &[TokenId], from: usize) -> Option<f64> {
        mean(&self.position_nll(seq, from))
    }

    /// Most probable next token after `history`; ties go to the smallest id.
    pub fn argmax_next(&self, history: &[TokenId]) -> TokenId {
        let ctx = self.context_at(history, history.len());
        match self.contexts.get(&ctx) {
            // BTreeMap iterates ascending, so `>` keeps the smallest id on ties.
            Some(f) => {
                let mut best = (0, 0u64);
                for (&tok, &count) in &f.next {
                    if count > best.1 {
                        best = (tok, count);
                    }
                }
                if best.1 == 0 {
                    0
                } else {
                    best.0
                }
            }
            None => 0,
        }
    }

    /// Greedy continuation of `prompt`: stops at `eos` (not emitted) or after
    /// `max_len` tokens.
    pub fn greedy_continue(&self, prompt: &[TokenId], max_len: usize, eos: TokenId) -> Vec<TokenId> {
        let mut history = prompt.to_vec();
        let mut out = Vec::new();
        while out.len() < max_len {
            let next = self.argmax_next(&history);
            if next == eos {
                break;
            }
            out.push(next);
            history.push(next);
        }
        out
    }

    pub(crate) fn dump_into(&self, e: &mut Encoder) {
        e.u64(self.order as u64)
            .f64(self.add_k)
            .u32(self.alphabet)
            .u32(self.pad)
            .u64(self.contexts.len() as u64);
        for (ctx, f) in &self.contexts {
            for &t in ctx {
                e.u32(t);
            }
            e.u64(f.total).u64(f.next.len() as u64);
            for (&tok, &count) in &f.next {
                e.u32(tok).u64(count);
            }
        }
    }
}
