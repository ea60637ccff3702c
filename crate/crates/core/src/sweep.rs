//! The M-model training sweep and the loss matrix it produces.
//!
//! Workers pull column indices from a shared counter, train model `j` on its
//! subset and evaluate it on every record. A single writer appends each
//! finished column as a checksummed block to `losses.partial`; a torn tail
//! is dropped on resume. Once every column is present the canonical
//! `losses.bin` (blocks in column order) replaces the partial file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use crate::binfmt::{digest64, read_file, write_atomic, Decoder, Encoder};
use crate::data::{Dataset, RunConfig};
use crate::error::{Error, Result};
use crate::learners::{self, LearnerSpec, ModelKey};
use crate::matrix::Matrix;
use crate::partition::PartitionMatrix;
use crate::rng::model_seed;

const MAGIC: &[u8; 8] = b"CFILOSS\0";
const VERSION: u32 = 1;

pub const LOSSES_FILE: &str = "losses.bin";
pub const LOSSES_PARTIAL: &str = "losses.partial";
pub const METRICS_FILE: &str = "metrics.csv";
const METRICS_PARTIAL: &str = "metrics.partial";
const MODELS_DIR: &str = "models";

/// What a loss matrix was computed from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LossProvenance {
    pub dataset_hash: u64,
    pub partition_hash: u64,
    pub learner: String,
    pub master_seed: u64,
}

impl LossProvenance {
    pub fn new(dataset: &Dataset, partitions: &PartitionMatrix, spec: &LearnerSpec, master_seed: u64) -> Self {
        LossProvenance {
            dataset_hash: dataset.content_hash(),
            partition_hash: partitions.content_hash(),
            learner: spec.canonical(),
            master_seed,
        }
    }
}

/// `value[t][j]` is the loss of model `j` on record `t`. Columns are either
/// fully present or absent.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMatrix {
    values: Matrix<f64>,
    present: Vec<bool>,
    provenance: LossProvenance,
}

impl LossMatrix {
    pub fn empty(n_targets: usize, n_models: usize, provenance: LossProvenance) -> Self {
        LossMatrix {
            values: Matrix::zeros(n_targets, n_models),
            present: vec![false; n_models],
            provenance,
        }
    }

    /// Complete matrix from explicit values, e.g. for analysis of external losses.
    pub fn from_values(values: Matrix<f64>, provenance: LossProvenance) -> Result<Self> {
        if values.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("loss values must be finite"));
        }
        let present = vec![true; values.cols()];
        Ok(LossMatrix {
            values,
            present,
            provenance,
        })
    }

    pub fn n_targets(&self) -> usize {
        self.values.rows()
    }

    pub fn n_models(&self) -> usize {
        self.values.cols()
    }

    pub fn provenance(&self) -> &LossProvenance {
        &self.provenance
    }

    pub fn is_present(&self, j: usize) -> bool {
        self.present[j]
    }

    pub fn completed(&self) -> usize {
        self.present.iter().filter(|&&p| p).count()
    }

    pub fn is_complete(&self) -> bool {
        self.present.iter().all(|&p| p)
    }

    /// The full matrix; errors while columns are missing.
    pub fn values(&self) -> Result<&Matrix<f64>> {
        if self.is_complete() {
            Ok(&self.values)
        } else {
            Err(Error::Incomplete {
                missing: self.n_models() - self.completed(),
                total: self.n_models(),
            })
        }
    }

    pub fn column(&self, j: usize) -> Option<Vec<f64>> {
        self.present[j].then(|| (0..self.n_targets()).map(|t| self.values.get(t, j)).collect())
    }

    pub fn set_column(&mut self, j: usize, column: &[f64]) -> Result<()> {
        if column.len() != self.n_targets() {
            return Err(Error::Shape(format!(
                "column of {} values for {} targets",
                column.len(),
                self.n_targets()
            )));
        }
        if column.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("model {j}: non-finite loss")));
        }
        for (t, &v) in column.iter().enumerate() {
            self.values.set(t, j, v);
        }
        self.present[j] = true;
        Ok(())
    }

    fn header_bytes(&self) -> Vec<u8> {
        let p = &self.provenance;
        let mut e = Encoder::new();
        e.bytes(MAGIC)
            .u32(VERSION)
            .u64(self.n_targets() as u64)
            .u64(self.n_models() as u64)
            .u64(p.dataset_hash)
            .u64(p.partition_hash)
            .u64(p.master_seed)
            .string(&p.learner);
        let checksum = digest64(e.as_slice());
        e.u64(checksum);
        e.into_bytes()
    }

    /// Canonical bytes: header then every present column in index order.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.header_bytes();
        for j in 0..self.n_models() {
            if let Some(col) = self.column(j) {
                out.extend_from_slice(&column_block(j, &col));
            }
        }
        out
    }

    pub fn content_hash(&self) -> u64 {
        digest64(&self.encode())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    /// Loads a loss file; every block must be intact.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let parsed = parse_loss_bytes(path, &bytes)?;
        if parsed.valid_len != bytes.len() {
            return Err(Error::Checksum {
                path: path.to_path_buf(),
            });
        }
        Ok(parsed.matrix)
    }

    /// CSV export `target_id,model_0,...`; `record_ids[t]` labels row `t`.
    pub fn to_csv(&self, record_ids: &[u64]) -> Result<String> {
        let values = self.values()?;
        let mut out = String::from("target_id");
        for j in 0..self.n_models() {
            write!(out, ",model_{j}").unwrap();
        }
        out.push('\n');
        for (t, row) in values.iter_rows().enumerate() {
            write!(out, "{}", record_ids[t]).unwrap();
            for v in row {
                write!(out, ",{v:?}").unwrap();
            }
            out.push('\n');
        }
        Ok(out)
    }
}

fn column_block(j: usize, values: &[f64]) -> Vec<u8> {
    let mut e = Encoder::new();
    e.u64(j as u64);
    for &v in values {
        e.f64(v);
    }
    let checksum = digest64(e.as_slice());
    e.u64(checksum);
    e.into_bytes()
}

struct ParsedLosses {
    matrix: LossMatrix,
    /// Length of the prefix made of the header and intact blocks.
    valid_len: usize,
}

fn parse_loss_bytes(path: &Path, bytes: &[u8]) -> Result<ParsedLosses> {
    let mut d = Decoder::new(path, bytes);
    d.magic(MAGIC)?;
    d.version(VERSION)?;
    let n_targets = d.u64()? as usize;
    let n_models = d.u64()? as usize;
    let dataset_hash = d.u64()?;
    let partition_hash = d.u64()?;
    let master_seed = d.u64()?;
    let learner = d.string()?;
    let header_len = d.position();
    let checksum = d.u64()?;
    if digest64(&bytes[..header_len]) != checksum {
        return Err(Error::Checksum {
            path: path.to_path_buf(),
        });
    }
    let provenance = LossProvenance {
        dataset_hash,
        partition_hash,
        learner,
        master_seed,
    };
    let mut matrix = LossMatrix::empty(n_targets, n_models, provenance);
    let block_len = 8 * (n_targets + 2);
    let mut valid_len = d.position();
    while d.remaining() >= block_len {
        let start = d.position();
        let block = d.take(block_len)?;
        let body = &block[..block_len - 8];
        let stored = u64::from_le_bytes(block[block_len - 8..].try_into().unwrap());
        if digest64(body) != stored {
            break;
        }
        let j = u64::from_le_bytes(body[..8].try_into().unwrap()) as usize;
        if j >= n_models {
            break;
        }
        let col: Vec<f64> = body[8..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if matrix.set_column(j, &col).is_err() {
            break;
        }
        valid_len = start + block_len;
    }
    Ok(ParsedLosses { matrix, valid_len })
}

/// Knobs that do not affect the resulting matrix.
#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Stop after committing this many new columns (simulated interruption).
    pub stop_after: Option<usize>,
    /// Write a debug dump of every trained model under `models/`.
    pub dump_models: bool,
}

/// One row of the training metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub model: usize,
    pub iteration: usize,
    pub train_loss: f64,
}

struct ColumnResult {
    model: usize,
    losses: Vec<f64>,
    trace: Vec<f64>,
    dump: Option<Vec<u8>>,
}

fn validate_columns(partitions: &PartitionMatrix) -> Result<()> {
    for j in 0..partitions.n_models() {
        if (0..partitions.n_records()).all(|i| !partitions.get(i, j)) {
            return Err(Error::EmptySubset { model: j });
        }
    }
    Ok(())
}

fn evaluate_column(
    dataset: &Dataset,
    partitions: &PartitionMatrix,
    spec: &LearnerSpec,
    master_seed: u64,
    j: usize,
    dump: bool,
) -> Result<ColumnResult> {
    let included = partitions.column_subset(j)?;
    let key = ModelKey {
        index: j,
        seed: model_seed(master_seed, j),
    };
    let (model, trace) = learners::train_traced(dataset, &included, spec, key)?;
    let losses = dataset
        .records()
        .map(|r| learners::loss(&model, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(ColumnResult {
        model: j,
        losses,
        trace,
        dump: dump.then(|| model.dump()),
    })
}

/// Evaluates `columns` on `workers` threads, handing results to `sink` on
/// the calling thread in completion order. `sink` returns `false` to stop.
#[allow(clippy::too_many_arguments)]
fn run_columns(
    dataset: &Dataset,
    partitions: &PartitionMatrix,
    spec: &LearnerSpec,
    master_seed: u64,
    columns: &[usize],
    workers: usize,
    dump: bool,
    mut sink: impl FnMut(ColumnResult) -> Result<bool>,
) -> Result<()> {
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<Result<ColumnResult>>();
    thread::scope(|scope| {
        for _ in 0..workers.max(1) {
            let tx = tx.clone();
            let (next, stop) = (&next, &stop);
            scope.spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    let k = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&j) = columns.get(k) else { break };
                    let res = evaluate_column(dataset, partitions, spec, master_seed, j, dump);
                    if tx.send(res).is_err() {
                        break;
                    }
                }
            });
        }
        drop(tx);
        let mut outcome = Ok(());
        for res in rx {
            if outcome.is_err() || stop.load(Ordering::Relaxed) {
                continue;
            }
            match res.and_then(&mut sink) {
                Ok(true) => {}
                Ok(false) => stop.store(true, Ordering::Relaxed),
                Err(e) => {
                    stop.store(true, Ordering::Relaxed);
                    outcome = Err(e);
                }
            }
        }
        outcome
    })
}

/// In-memory sweep without persistence.
pub fn compute_losses(
    dataset: &Dataset,
    partitions: &PartitionMatrix,
    spec: &LearnerSpec,
    master_seed: u64,
    workers: usize,
) -> Result<LossMatrix> {
    check_shapes(dataset, partitions)?;
    validate_columns(partitions)?;
    let mut matrix = LossMatrix::empty(
        dataset.len(),
        partitions.n_models(),
        LossProvenance::new(dataset, partitions, spec, master_seed),
    );
    let columns: Vec<usize> = (0..partitions.n_models()).collect();
    run_columns(dataset, partitions, spec, master_seed, &columns, workers, false, |r| {
        matrix.set_column(r.model, &r.losses)?;
        Ok(true)
    })?;
    Ok(matrix)
}

fn check_shapes(dataset: &Dataset, partitions: &PartitionMatrix) -> Result<()> {
    if dataset.len() != partitions.n_records() {
        return Err(Error::Shape(format!(
            "dataset has {} records, partition matrix has {} rows",
            dataset.len(),
            partitions.n_records()
        )));
    }
    Ok(())
}

fn open_append(path: &Path) -> Result<fs::File> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))
}

fn metrics_line(model: usize, trace: &[f64]) -> String {
    let mut s = String::new();
    for (k, v) in trace.iter().enumerate() {
        writeln!(s, "{model},{},{v:?}", k + 1).unwrap();
    }
    s
}

fn parse_metrics(path: &Path, text: &str) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with("model,") {
            continue;
        }
        let bad = || Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: format!("bad metrics row {line:?}"),
        };
        let mut it = line.split(',');
        let (Some(m), Some(i), Some(l), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(bad());
        };
        rows.push(MetricRow {
            model: m.parse().map_err(|_| bad())?,
            iteration: i.parse().map_err(|_| bad())?,
            train_loss: l.parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}

/// Training metrics rows of model `j` from a sweep directory.
pub fn read_metrics(out_dir: &Path, j: usize) -> Result<Vec<MetricRow>> {
    let final_path = out_dir.join(METRICS_FILE);
    let path = if final_path.exists() {
        final_path
    } else {
        out_dir.join(METRICS_PARTIAL)
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(parse_metrics(&path, &text)?
        .into_iter()
        .filter(|r| r.model == j)
        .collect())
}

/// Runs (or resumes) the sweep described by `config` into `config.output_dir`.
///
/// The returned matrix is complete unless `options.stop_after` interrupted
/// the run; calling again resumes from the committed columns.
pub fn run_sweep(
    dataset: &Dataset,
    partitions: &PartitionMatrix,
    config: &RunConfig,
    options: &SweepOptions,
) -> Result<LossMatrix> {
    let spec = &config.learner;
    spec.validate()?;
    check_shapes(dataset, partitions)?;
    validate_columns(partitions)?;
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let provenance = LossProvenance::new(dataset, partitions, spec, config.master_seed);

    let final_path = out.join(LOSSES_FILE);
    if final_path.exists() {
        let existing = LossMatrix::load(&final_path)?;
        check_provenance(&existing, &provenance, &final_path)?;
        if existing.is_complete() {
            return Ok(existing);
        }
    }

    let partial_path = out.join(LOSSES_PARTIAL);
    let metrics_partial = out.join(METRICS_PARTIAL);
    let mut matrix = if partial_path.exists() {
        let bytes = read_file(&partial_path)?;
        let parsed = parse_loss_bytes(&partial_path, &bytes)?;
        check_provenance(&parsed.matrix, &provenance, &partial_path)?;
        if parsed.valid_len != bytes.len() {
            log::warn!(
                "{}: dropping {} bytes of torn tail",
                partial_path.display(),
                bytes.len() - parsed.valid_len
            );
            let f = OpenOptions::new()
                .write(true)
                .open(&partial_path)
                .map_err(|e| Error::io(&partial_path, e))?;
            f.set_len(parsed.valid_len as u64)
                .map_err(|e| Error::io(&partial_path, e))?;
        }
        parsed.matrix
    } else {
        let m = LossMatrix::empty(dataset.len(), partitions.n_models(), provenance.clone());
        write_atomic(&partial_path, &m.header_bytes())?;
        m
    };

    // Keep metrics only for committed columns.
    let kept_metrics: String = if metrics_partial.exists() {
        let text = fs::read_to_string(&metrics_partial).map_err(|e| Error::io(&metrics_partial, e))?;
        parse_metrics(&metrics_partial, &text)?
            .into_iter()
            .filter(|r| matrix.is_present(r.model))
            .map(|r| format!("{},{},{:?}\n", r.model, r.iteration, r.train_loss))
            .collect()
    } else {
        String::new()
    };
    write_atomic(&metrics_partial, kept_metrics.as_bytes())?;

    let pending: Vec<usize> = (0..partitions.n_models()).filter(|&j| !matrix.is_present(j)).collect();
    if options.dump_models {
        let dir = out.join(MODELS_DIR);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    let mut losses_file = open_append(&partial_path)?;
    let mut metrics_file = open_append(&metrics_partial)?;
    let mut committed = 0usize;
    run_columns(
        dataset,
        partitions,
        spec,
        config.master_seed,
        &pending,
        config.workers,
        options.dump_models,
        |r| {
            if let Some(bytes) = &r.dump {
                write_atomic(&out.join(MODELS_DIR).join(format!("model_{:06}.bin", r.model)), bytes)?;
            }
            metrics_file
                .write_all(metrics_line(r.model, &r.trace).as_bytes())
                .and_then(|_| metrics_file.flush())
                .map_err(|e| Error::io(&metrics_partial, e))?;
            matrix.set_column(r.model, &r.losses)?;
            losses_file
                .write_all(&column_block(r.model, &r.losses))
                .and_then(|_| losses_file.sync_data())
                .map_err(|e| Error::io(&partial_path, e))?;
            committed += 1;
            Ok(options.stop_after.is_none_or(|limit| committed < limit))
        },
    )?;
    drop(losses_file);
    drop(metrics_file);

    if matrix.is_complete() {
        finalize(out, &matrix)?;
    } else {
        log::info!(
            "sweep interrupted with {}/{} columns committed",
            matrix.completed(),
            matrix.n_models()
        );
    }
    Ok(matrix)
}

fn check_provenance(found: &LossMatrix, expected: &LossProvenance, path: &Path) -> Result<()> {
    if &found.provenance != expected {
        return Err(Error::Provenance(format!(
            "{} was produced from different inputs; remove it to start a fresh sweep",
            path.display()
        )));
    }
    Ok(())
}

fn finalize(out: &Path, matrix: &LossMatrix) -> Result<()> {
    let metrics_partial = out.join(METRICS_PARTIAL);
    let text = fs::read_to_string(&metrics_partial).map_err(|e| Error::io(&metrics_partial, e))?;
    let mut by_key: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for r in parse_metrics(&metrics_partial, &text)? {
        by_key.insert((r.model, r.iteration), r.train_loss);
    }
    let mut csv = String::from("model,iteration,train_loss\n");
    for ((m, i), l) in by_key {
        writeln!(csv, "{m},{i},{l:?}").unwrap();
    }
    write_atomic(&out.join(METRICS_FILE), csv.as_bytes())?;
    matrix.save(&out.join(LOSSES_FILE))?;
    for p in [out.join(LOSSES_PARTIAL), metrics_partial] {
        fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

/// Path of the loss matrix a completed sweep leaves in `out_dir`.
pub fn losses_path(out_dir: &Path) -> PathBuf {
    out_dir.join(LOSSES_FILE)
}
