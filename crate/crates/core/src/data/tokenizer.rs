//! Whitespace tokenizer over an explicit vocabulary file (one token per line,
//! id = line index). Only used to build small test corpora.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::data::{TokenId, TokenSequence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    ids: HashMap<String, TokenId>,
}

impl Vocabulary {
    pub fn new(words: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!("invalid vocabulary entry {w:?}")));
            }
            if ids.insert(w.clone(), i as TokenId).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary entry {w:?}")));
            }
        }
        Ok(Vocabulary { words, ids })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn encode(&self, text: &str) -> Result<TokenSequence> {
        let tokens = text
            .split_whitespace()
            .map(|w| {
                self.ids
                    .get(w)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("word {w:?} not in vocabulary")))
            })
            .collect::<Result<Vec<_>>>()?;
        TokenSequence::new(tokens, self.words.len() as u32)
    }

    pub fn decode(&self, tokens: &[TokenId]) -> String {
        tokens
            .iter()
            .map(|&t| self.words.get(t as usize).map_or("<unk>", String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
