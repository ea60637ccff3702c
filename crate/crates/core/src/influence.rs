//! Counterfactual influence from a loss matrix and its partition matrix.
//!
//! `value[t][i] = mean_{j: p_ij = 0} L[t][j] - mean_{j: p_ij = 1} L[t][j]`,
//! so a positive entry means including `x_i` lowers the loss on `x_t`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::binfmt::{digest64, read_file, write_atomic, Decoder, Encoder};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::{self, LearnerSpec, ModelKey};
use crate::matrix::Matrix;
use crate::partition::PartitionMatrix;
use crate::rng::model_seed;
use crate::scalar::{mean, Scalar};
use crate::sweep::LossMatrix;

const MAGIC: &[u8; 8] = b"CFIINFL\0";
const VERSION: u32 = 1;

/// Largest dataset the exhaustive oracle accepts.
pub const ORACLE_MAX_RECORDS: usize = 12;

/// Square influence matrix over one scalar type.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMatrixOf<F> {
    values: Matrix<F>,
    /// `(n_in, n_out)` for every source record.
    counts: Vec<(usize, usize)>,
    loss_hash: u64,
    partition_hash: u64,
}

impl<F: Scalar> InfluenceMatrixOf<F> {
    /// Wraps precomputed values; `counts[i]` must have both sides positive.
    pub fn from_parts(values: Matrix<F>, counts: Vec<(usize, usize)>) -> Result<Self> {
        if values.rows() != values.cols() || counts.len() != values.rows() {
            return Err(Error::Shape(format!(
                "influence matrix {}x{} with {} count rows",
                values.rows(),
                values.cols(),
                counts.len()
            )));
        }
        if let Some((i, &(n_in, n_out))) = counts.iter().enumerate().find(|(_, c)| c.0 == 0 || c.1 == 0) {
            return Err(Error::DegenerateRow { record: i, n_in, n_out });
        }
        Ok(InfluenceMatrixOf {
            values,
            counts,
            loss_hash: 0,
            partition_hash: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn values(&self) -> &Matrix<F> {
        &self.values
    }

    /// Influence of source `i` on target `t`.
    pub fn get(&self, t: usize, i: usize) -> F {
        self.values.get(t, i)
    }

    /// All influences on target `t`, indexed by source.
    pub fn row(&self, t: usize) -> &[F] {
        self.values.row(t)
    }

    pub fn counts(&self) -> &[(usize, usize)] {
        &self.counts
    }

    pub fn provenance(&self) -> (u64, u64) {
        (self.loss_hash, self.partition_hash)
    }

    pub fn map<G: Scalar>(&self, f: impl Fn(F) -> G) -> InfluenceMatrixOf<G> {
        InfluenceMatrixOf {
            values: self.values.map(f),
            counts: self.counts.clone(),
            loss_hash: self.loss_hash,
            partition_hash: self.partition_hash,
        }
    }
}

/// Column index lists `(in, out)` of every source row.
fn split_columns(partitions: &PartitionMatrix) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    (0..partitions.n_records())
        .map(|i| {
            let (mut ins, mut outs) = (Vec::new(), Vec::new());
            for (j, bit) in partitions.row(i).enumerate() {
                if bit {
                    ins.push(j)
                } else {
                    outs.push(j)
                }
            }
            if ins.is_empty() || outs.is_empty() {
                return Err(Error::DegenerateRow {
                    record: i,
                    n_in: ins.len(),
                    n_out: outs.len(),
                });
            }
            Ok((ins, outs))
        })
        .collect()
}

/// Influence estimate over any scalar type from raw losses `L[t][j]`.
pub fn estimate_influence<F: Scalar>(losses: &Matrix<F>, partitions: &PartitionMatrix) -> Result<InfluenceMatrixOf<F>> {
    let n = partitions.n_records();
    if losses.rows() != n || losses.cols() != partitions.n_models() {
        return Err(Error::Shape(format!(
            "loss matrix {}x{} against partition matrix {}x{}",
            losses.rows(),
            losses.cols(),
            n,
            partitions.n_models()
        )));
    }
    let sides = split_columns(partitions)?;
    let rows: Vec<Vec<F>> = (0..n)
        .into_par_iter()
        .map(|t| {
            let row = losses.row(t);
            let mut scratch = Vec::new();
            sides
                .iter()
                .map(|(ins, outs)| {
                    let mut side_mean = |cols: &[usize]| {
                        scratch.clear();
                        scratch.extend(cols.iter().map(|&j| row[j]));
                        mean(&scratch).expect("non-empty side")
                    };
                    let out_mean = side_mean(outs);
                    out_mean - side_mean(ins)
                })
                .collect()
        })
        .collect();
    let counts = sides.iter().map(|(a, b)| (a.len(), b.len())).collect();
    Ok(InfluenceMatrixOf {
        values: Matrix::from_rows(rows)?,
        counts,
        loss_hash: 0,
        partition_hash: partitions.content_hash(),
    })
}

/// [`estimate_influence`] on a complete sweep result.
pub fn influence_from_losses(losses: &LossMatrix, partitions: &PartitionMatrix) -> Result<InfluenceMatrixOf<f64>> {
    if losses.provenance().partition_hash != partitions.content_hash() {
        return Err(Error::Provenance(
            "loss matrix was computed from a different partition matrix".into(),
        ));
    }
    let mut m = estimate_influence(losses.values()?, partitions)?;
    m.loss_hash = losses.content_hash();
    Ok(m)
}

/// Compensated summation, kept separate from the estimator's pairwise tree.
fn neumaier_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp, mut n) = (0.0f64, 0.0f64, 0usize);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
        n += 1;
    }
    (sum + comp) / n as f64
}

/// Exact influence under independent inclusion with probability 1/2,
/// conditioned on a non-empty training set: one model per non-empty subset.
pub fn exact_influence_oracle(dataset: &Dataset, spec: &LearnerSpec, n_max: usize) -> Result<InfluenceMatrixOf<f64>> {
    let n = dataset.len();
    if n_max > ORACLE_MAX_RECORDS {
        return Err(Error::invalid(format!(
            "oracle limit {n_max} exceeds {ORACLE_MAX_RECORDS}"
        )));
    }
    if n > n_max {
        return Err(Error::invalid(format!(
            "oracle enumerates 2^N subsets; N = {n} exceeds the limit {n_max}"
        )));
    }
    if n < 2 {
        return Err(Error::invalid("oracle needs at least 2 records"));
    }
    spec.validate()?;
    // losses[mask - 1][t]
    let losses: Vec<Vec<f64>> = (1u64..1 << n)
        .into_par_iter()
        .map(|mask| {
            let subset: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
            let key = ModelKey {
                index: mask as usize,
                seed: model_seed(0, mask as usize),
            };
            let model = learners::train(dataset, &subset, spec, key)?;
            dataset.records().map(|r| learners::loss(&model, r)).collect()
        })
        .collect::<Result<_>>()?;
    let mut values = Matrix::zeros(n, n);
    #[allow(clippy::needless_range_loop)]
    for t in 0..n {
        for i in 0..n {
            let with = neumaier_mean(
                (1u64..1 << n)
                    .filter(|m| m >> i & 1 == 1)
                    .map(|m| losses[m as usize - 1][t]),
            );
            let without = neumaier_mean(
                (1u64..1 << n)
                    .filter(|m| m >> i & 1 == 0)
                    .map(|m| losses[m as usize - 1][t]),
            );
            values.set(t, i, without - with);
        }
    }
    let half = 1usize << (n - 1);
    InfluenceMatrixOf::from_parts(values, vec![(half, half - 1); n])
}

impl InfluenceMatrixOf<f64> {
    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.bytes(MAGIC)
            .u32(VERSION)
            .u64(self.n() as u64)
            .u64(self.loss_hash)
            .u64(self.partition_hash);
        for &v in self.values.as_slice() {
            e.f64(v);
        }
        for &(a, b) in &self.counts {
            e.u64(a as u64).u64(b as u64);
        }
        let checksum = digest64(e.as_slice());
        e.u64(checksum);
        e.into_bytes()
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
        let n = d.u64()? as usize;
        let loss_hash = d.u64()?;
        let partition_hash = d.u64()?;
        let expected = 8 + 4 + 24 + n * n * 8 + n * 16 + 8;
        if bytes.len() != expected {
            return Err(d.error(format!("expected {expected} bytes, found {}", bytes.len())));
        }
        let values = (0..n * n).map(|_| d.f64()).collect::<Result<Vec<_>>>()?;
        let counts = (0..n)
            .map(|_| Ok((d.u64()? as usize, d.u64()? as usize)))
            .collect::<Result<Vec<_>>>()?;
        let body = d.position();
        if digest64(&bytes[..body]) != d.u64()? {
            return Err(Error::Checksum {
                path: PathBuf::from(path),
            });
        }
        let mut m = InfluenceMatrixOf::from_parts(Matrix::from_vec(n, n, values)?, counts)?;
        m.loss_hash = loss_hash;
        m.partition_hash = partition_hash;
        Ok(m)
    }

    /// Long-format CSV `target_id,source_id,influence`.
    pub fn to_csv(&self, record_ids: &[u64]) -> String {
        let mut out = String::from("target_id,source_id,influence\n");
        for t in 0..self.n() {
            for i in 0..self.n() {
                writeln!(out, "{},{},{:?}", record_ids[t], record_ids[i], self.get(t, i)).unwrap();
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generate_qa_dataset;
    use crate::sweep::compute_losses;
    use num_rational::Rational64;

    #[test]
    fn two_model_arithmetic() {
        let p = PartitionMatrix::from_fn(2, 2, |i, j| (i + j) % 2 == 0);
        let l = Matrix::from_rows(vec![vec![1.0, 3.0], vec![0.0, 0.0]]).unwrap();
        let inf = estimate_influence(&l, &p).unwrap();
        assert_eq!(inf.get(0, 0), 2.0);
        assert_eq!(inf.get(0, 1), -2.0);

        let r = |n| Rational64::from_integer(n);
        let lr = Matrix::from_rows(vec![vec![r(1), r(3)], vec![r(0), r(0)]]).unwrap();
        let exact = estimate_influence(&lr, &p).unwrap();
        assert_eq!(exact.get(0, 0), r(2));
    }

    #[test]
    fn constant_row_gives_zeros() {
        let p = PartitionMatrix::generate(5, 16, 0.5, 1).unwrap();
        let l = Matrix::from_vec(5, 16, vec![2.5; 80]).unwrap();
        let inf = estimate_influence(&l, &p).unwrap();
        assert!(inf.values().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn degenerate_row_is_named() {
        let p = PartitionMatrix::from_fn(3, 4, |i, j| i == 1 || j == i);
        let l = Matrix::zeros(3, 4);
        match estimate_influence::<f64>(&l, &p) {
            Err(Error::DegenerateRow { record, n_in, n_out }) => {
                assert_eq!((record, n_in, n_out), (1, 4, 0))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn oracle_two_records_by_hand() {
        let d = generate_qa_dataset(2, 30, 2, 3, 2, 4).unwrap();
        let spec = LearnerSpec::ngram(2, 0.1);
        let oracle = exact_influence_oracle(&d, &spec, 12).unwrap();
        let loss_on = |subset: &[usize], t: usize| {
            let m = learners::train(&d, subset, &spec, ModelKey { index: 0, seed: 0 }).unwrap();
            learners::loss(&m, d.record(t)).unwrap()
        };
        // subsets {0}, {1}, {0,1}; the empty set is excluded
        for t in 0..2 {
            let i0 = (loss_on(&[1], t)) - (loss_on(&[0], t) + loss_on(&[0, 1], t)) / 2.0;
            let i1 = (loss_on(&[0], t)) - (loss_on(&[1], t) + loss_on(&[0, 1], t)) / 2.0;
            assert!((oracle.get(t, 0) - i0).abs() < 1e-14);
            assert!((oracle.get(t, 1) - i1).abs() < 1e-14);
        }
        assert!(oracle.get(0, 0) > 0.0 && oracle.get(1, 1) > 0.0);
    }

    #[test]
    fn oracle_matches_complete_enumeration() {
        let d = generate_qa_dataset(6, 40, 3, 4, 2, 8).unwrap();
        let spec = LearnerSpec::ngram(2, 0.1);
        let oracle = exact_influence_oracle(&d, &spec, 12).unwrap();
        let p = PartitionMatrix::all_nonempty_subsets(6).unwrap();
        let l = compute_losses(&d, &p, &spec, 0, 2).unwrap();
        let est = influence_from_losses(&l, &p).unwrap();
        for (a, b) in est.values().as_slice().iter().zip(oracle.values().as_slice()) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn oracle_rejects_large_n() {
        let d = generate_qa_dataset(5, 40, 2, 2, 2, 8).unwrap();
        assert!(exact_influence_oracle(&d, &LearnerSpec::ngram(2, 0.1), 4).is_err());
        assert!(exact_influence_oracle(&d, &LearnerSpec::ngram(2, 0.1), 13).is_err());
    }

    #[test]
    fn file_round_trip_and_csv() {
        let p = PartitionMatrix::generate(4, 12, 0.5, 2).unwrap();
        let l = Matrix::from_vec(4, 12, (0..48).map(|k| k as f64 * 0.25).collect()).unwrap();
        let inf = estimate_influence(&l, &p).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("influence.bin");
        inf.save(&path).unwrap();
        assert_eq!(InfluenceMatrixOf::load(&path).unwrap(), inf);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[50] ^= 1;
        std::fs::write(&path, bytes).unwrap();
        assert!(InfluenceMatrixOf::load(&path).is_err());
        let csv = inf.to_csv(&[10, 11, 12, 13]);
        assert_eq!(csv.lines().count(), 17);
        assert!(csv.lines().nth(1).unwrap().starts_with("10,10,"));
    }
}
