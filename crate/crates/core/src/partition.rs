//! Binary inclusion matrix deciding which records each model trains on.

use std::path::Path;

use rayon::prelude::*;

use crate::binfmt::{digest64, read_file, write_atomic, Decoder, Encoder};
use crate::error::{Error, Result};
use crate::rng::keyed_unit;

const MAGIC: &[u8; 8] = b"CFIPART\0";
const VERSION: u32 = 1;

/// `n_records x n_models` bit matrix; bit `(i, j)` set iff record `i` is in
/// the training subset of model `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionMatrix {
    n_records: usize,
    n_models: usize,
    inclusion_prob: f64,
    master_seed: u64,
    /// Row-major, least significant bit first.
    packed: Vec<u8>,
}

impl PartitionMatrix {
    /// Draws every bit independently as Bernoulli(`inclusion_prob`) from a
    /// counter-based generator keyed by `(master_seed, i, j)`.
    pub fn generate(n_records: usize, n_models: usize, inclusion_prob: f64, master_seed: u64) -> Result<Self> {
        if n_records < 2 || n_models < 2 {
            return Err(Error::invalid(format!(
                "partition matrix needs at least 2 records and 2 models, got {n_records}x{n_models}"
            )));
        }
        if !(inclusion_prob > 0.0 && inclusion_prob < 1.0) {
            return Err(Error::invalid(format!(
                "inclusion_prob {inclusion_prob} outside (0, 1)"
            )));
        }
        let rows: Vec<Vec<bool>> = (0..n_records)
            .into_par_iter()
            .map(|i| {
                (0..n_models)
                    .map(|j| keyed_unit(master_seed, i as u64, j as u64) < inclusion_prob)
                    .collect()
            })
            .collect();
        let mut p = Self::from_fn(n_records, n_models, |i, j| rows[i][j]);
        p.inclusion_prob = inclusion_prob;
        p.master_seed = master_seed;
        Ok(p)
    }

    /// Explicit matrix, e.g. a complete subset enumeration. Metadata records
    /// probability 0.5 and seed 0.
    pub fn from_fn(n_records: usize, n_models: usize, bit: impl Fn(usize, usize) -> bool) -> Self {
        let total = n_records * n_models;
        let mut packed = vec![0u8; total.div_ceil(8)];
        for i in 0..n_records {
            for j in 0..n_models {
                if bit(i, j) {
                    let k = i * n_models + j;
                    packed[k / 8] |= 1 << (k % 8);
                }
            }
        }
        PartitionMatrix {
            n_records,
            n_models,
            inclusion_prob: 0.5,
            master_seed: 0,
            packed,
        }
    }

    /// Columns enumerating every non-empty subset of `n_records` records once;
    /// column `j` holds subset mask `j + 1`.
    pub fn all_nonempty_subsets(n_records: usize) -> Result<Self> {
        if !(1..=20).contains(&n_records) {
            return Err(Error::invalid("subset enumeration supports 1..=20 records"));
        }
        let m = (1usize << n_records) - 1;
        Ok(Self::from_fn(n_records, m, |i, j| ((j + 1) >> i) & 1 == 1))
    }

    pub fn n_records(&self) -> usize {
        self.n_records
    }

    pub fn n_models(&self) -> usize {
        self.n_models
    }

    pub fn inclusion_prob(&self) -> f64 {
        self.inclusion_prob
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        let k = i * self.n_models + j;
        (self.packed[k / 8] >> (k % 8)) & 1 == 1
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = bool> + '_ {
        (0..self.n_models).map(move |j| self.get(i, j))
    }

    /// `(models including record i, models excluding it)`.
    pub fn row_counts(&self, i: usize) -> (usize, usize) {
        let n_in = self.row(i).filter(|&b| b).count();
        (n_in, self.n_models - n_in)
    }

    /// Records in the training subset of model `j`, ascending.
    pub fn column_subset(&self, j: usize) -> Result<Vec<usize>> {
        if j >= self.n_models {
            return Err(Error::invalid(format!(
                "model index {j} out of range for {} models",
                self.n_models
            )));
        }
        Ok((0..self.n_records).filter(|&i| self.get(i, j)).collect())
    }

    /// Matrix restricted to the given columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Self {
        let mut p = Self::from_fn(self.n_records, columns.len(), |i, c| self.get(i, columns[c]));
        p.inclusion_prob = self.inclusion_prob;
        p.master_seed = self.master_seed;
        p
    }

    /// Drops columns whose training subset is empty. Conditioning on
    /// non-empty subsets this way leaves the remaining columns distributed as
    /// the independent-inclusion measure restricted to non-empty sets.
    pub fn retain_nonempty_columns(&self) -> Self {
        let keep: Vec<usize> = (0..self.n_models)
            .filter(|&j| (0..self.n_records).any(|i| self.get(i, j)))
            .collect();
        self.select_columns(&keep)
    }

    fn encode(&self) -> Vec<u8> {
        let mut body = Encoder::new();
        body.u64(self.n_records as u64)
            .u64(self.n_models as u64)
            .f64(self.inclusion_prob)
            .u64(self.master_seed);
        let mut summed = body.as_slice().to_vec();
        summed.extend_from_slice(&self.packed);
        let checksum = digest64(&summed);

        let mut out = Encoder::new();
        out.bytes(MAGIC)
            .u32(VERSION)
            .bytes(body.as_slice())
            .u64(checksum)
            .bytes(&self.packed);
        out.into_bytes()
    }

    pub fn content_hash(&self) -> u64 {
        digest64(&self.encode())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let mut d = Decoder::new(path, &bytes);
        d.magic(MAGIC)?;
        d.version(VERSION)?;
        let body_start = d.position();
        let n_records = d.u64()? as usize;
        let n_models = d.u64()? as usize;
        let inclusion_prob = d.f64()?;
        let master_seed = d.u64()?;
        let body_end = d.position();
        let checksum = d.u64()?;
        let payload = &bytes[d.position()..];

        let mut summed = bytes[body_start..body_end].to_vec();
        summed.extend_from_slice(payload);
        if digest64(&summed) != checksum {
            return Err(Error::Checksum {
                path: path.to_path_buf(),
            });
        }
        let expected = n_records
            .checked_mul(n_models)
            .map(|t| t.div_ceil(8))
            .ok_or_else(|| d.error("dimensions overflow"))?;
        if payload.len() != expected {
            return Err(d.error(format!("payload has {} bytes, expected {expected}", payload.len())));
        }
        Ok(PartitionMatrix {
            n_records,
            n_models,
            inclusion_prob,
            master_seed,
            packed: payload.to_vec(),
        })
    }
}
