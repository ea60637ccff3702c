use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Dataset, Modality, QaDataset, QaRecord, TokenSequence, VectorDataset, VectorRecord};
use crate::binfmt::write_atomic;
use crate::error::{Error, Result};

const QA_HEADER: &str = "#qa vocab_size=";
const VEC_HEADER: &str = "#vec n_classes=";

/// Loads a dataset in the line-oriented QA format or the vector CSV format.
///
/// Record `k` of the file (0-based, comments excluded) gets canonical index
/// `k`.
pub fn load_dataset(path: &Path, modality: Modality) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    match modality {
        Modality::Qa => parse_qa(path, &text).map(Dataset::Qa),
        Modality::Vector => parse_vector(path, &text).map(Dataset::Vector),
    }
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    write_atomic(path, serialize_dataset(dataset).as_bytes())
}

/// Canonical text rendering; [`load_dataset`] inverts it exactly.
pub fn serialize_dataset(dataset: &Dataset) -> String {
    let mut out = String::new();
    match dataset {
        Dataset::Qa(d) => {
            writeln!(out, "{QA_HEADER}{}", d.vocab_size()).unwrap();
            for r in d.records() {
                writeln!(
                    out,
                    "{}\t{}\t{}",
                    r.record_id,
                    join_tokens(r.question.tokens()),
                    join_tokens(r.answer.tokens())
                )
                .unwrap();
            }
        }
        Dataset::Vector(d) => {
            writeln!(out, "{VEC_HEADER}{}", d.n_classes()).unwrap();
            out.push_str("record_id,label");
            for k in 0..d.dim() {
                write!(out, ",f{k}").unwrap();
            }
            out.push('\n');
            for r in d.records() {
                write!(out, "{},{}", r.record_id, r.label).unwrap();
                for v in &r.features {
                    write!(out, ",{v:?}").unwrap();
                }
                out.push('\n');
            }
        }
    }
    out
}

fn join_tokens(tokens: &[u32]) -> String {
    tokens.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Non-blank lines with 1-based line numbers.
fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn parse_qa(path: &Path, text: &str) -> Result<QaDataset> {
    let mut lines = numbered_lines(text);
    let (hline, header) = lines.next().expect("non-empty text has a line");
    let vocab_size: u32 = header
        .strip_prefix(QA_HEADER)
        .and_then(|v| v.trim().parse().ok())
        .filter(|&v| v > 0)
        .ok_or_else(|| parse_err(path, hline, format!("expected header `{QA_HEADER}<n>`")))?;

    let mut records = Vec::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let record_id: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad record_id {:?}", fields[0])))?;
        let question = parse_tokens(path, line_no, record_id, fields[1], vocab_size)?;
        let answer = parse_tokens(path, line_no, record_id, fields[2], vocab_size)?;
        records.push(QaRecord {
            record_id,
            question,
            answer,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    QaDataset::new(vocab_size, records)
}

fn parse_tokens(path: &Path, line_no: usize, record_id: u64, field: &str, vocab_size: u32) -> Result<TokenSequence> {
    let mut tokens = Vec::new();
    for tok in field.split_whitespace() {
        let t: u32 = tok
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad token id {tok:?}")))?;
        if t >= vocab_size {
            return Err(Error::TokenOutOfRange {
                record_id,
                token: t,
                vocab_size,
            });
        }
        tokens.push(t);
    }
    if tokens.is_empty() {
        return Err(parse_err(path, line_no, "empty token sequence"));
    }
    TokenSequence::new(tokens, vocab_size)
}

fn parse_vector(path: &Path, text: &str) -> Result<VectorDataset> {
    let mut lines = numbered_lines(text);
    let (hline, header) = lines.next().expect("non-empty text has a line");
    let n_classes: usize = header
        .strip_prefix(VEC_HEADER)
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| parse_err(path, hline, format!("expected header `{VEC_HEADER}<k>`")))?;
    let (cline, columns) = lines.next().ok_or_else(|| Error::EmptyFile {
        path: path.to_path_buf(),
    })?;
    let cols: Vec<&str> = columns.split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[0] != "record_id" || cols[1] != "label" {
        return Err(parse_err(
            path,
            cline,
            "expected column header `record_id,label,f0,...`",
        ));
    }
    for (k, c) in cols[2..].iter().enumerate() {
        if *c != format!("f{k}") {
            return Err(parse_err(path, cline, format!("expected column f{k}, found {c:?}")));
        }
    }
    let dim = cols.len() - 2;

    let mut records = Vec::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 2 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {} fields, found {}", dim + 2, fields.len()),
            ));
        }
        let record_id: u64 = fields[0]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad record_id {:?}", fields[0])))?;
        let label: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad label {:?}", fields[1])))?;
        if label >= n_classes {
            return Err(parse_err(
                path,
                line_no,
                format!("record {record_id}: label {label} >= n_classes {n_classes}"),
            ));
        }
        let features = fields[2..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(path, line_no, format!("bad feature {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(VectorRecord {
            record_id,
            features,
            label,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    VectorDataset::new(dim, n_classes, records)
}
