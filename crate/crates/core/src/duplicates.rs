//! Near-duplicate crafting, target-dataset assembly and duplicate surfacing.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::binfmt::write_atomic;
use crate::data::{Dataset, QaDataset, QaRecord, VectorDataset, VectorRecord};
use crate::error::{Error, Result};
use crate::influence::InfluenceMatrixOf;
use crate::rng::stream;
use crate::scalar::{median, Scalar};
use crate::stats::{Margin, TargetSummary};

const MAX_DRAWS: usize = 100_000;

/// Token-level Hamming distance with threshold `epsilon`: `x'` is a near
/// duplicate of `x` when `0 < d(x, x') < epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NearDuplicatePolicy {
    pub epsilon: usize,
}

impl Default for NearDuplicatePolicy {
    fn default() -> Self {
        NearDuplicatePolicy { epsilon: 2 }
    }
}

/// Hamming distance; `None` for sequences of different length.
pub fn hamming(a: &[u32], b: &[u32]) -> Option<usize> {
    (a.len() == b.len()).then(|| a.iter().zip(b).filter(|(x, y)| x != y).count())
}

impl NearDuplicatePolicy {
    pub fn is_near_duplicate(&self, a: &QaRecord, b: &QaRecord) -> bool {
        matches!(
            hamming(&a.training_tokens(), &b.training_tokens()),
            Some(d) if d > 0 && d < self.epsilon
        )
    }
}

/// The source verbatim followed by `n_dup - 1` distinct variants, each with
/// one answer token replaced by a different token below `vocab_size`.
///
/// Every returned record keeps the source's `record_id`; assembling a
/// dataset assigns fresh ids.
pub fn craft_near_duplicates(record: &QaRecord, n_dup: usize, vocab_size: u32, seed: u64) -> Result<Vec<QaRecord>> {
    if n_dup == 0 {
        return Err(Error::invalid("n_dup must be at least 1"));
    }
    if vocab_size < 2 {
        return Err(Error::invalid("vocab_size must be at least 2"));
    }
    if vocab_size > record.answer.vocab_size() {
        return Err(Error::invalid(format!(
            "replacement vocab_size {vocab_size} exceeds the record's vocabulary {}",
            record.answer.vocab_size()
        )));
    }
    let answer = record.answer.tokens();
    let available: usize = answer
        .iter()
        .map(|&t| vocab_size as usize - usize::from(t < vocab_size))
        .sum();
    if n_dup - 1 > available {
        return Err(Error::invalid(format!(
            "only {available} distinct one-token variants exist; cannot craft {} (use a larger vocabulary)",
            n_dup - 1
        )));
    }
    let mut rng = stream(seed, record.record_id);
    let mut out = vec![record.clone()];
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    let mut draws = 0;
    while out.len() < n_dup {
        draws += 1;
        if draws > MAX_DRAWS {
            return Err(Error::invalid("could not draw distinct variants"));
        }
        let pos = rng.random_range(0..answer.len());
        let tok = loop {
            let t = rng.random_range(0..vocab_size);
            if t != answer[pos] {
                break t;
            }
        };
        let variant = record.answer.with_replaced(pos, tok)?;
        if seen.insert(variant.tokens().to_vec()) {
            out.push(QaRecord {
                answer: variant,
                ..record.clone()
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DuplicateGroup {
    pub group_id: usize,
    /// Record id of the unmodified source, always `members[0]`.
    pub source: u64,
    pub members: Vec<u64>,
}

/// Which records of a target dataset belong to which crafted group.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DuplicateGroupMap {
    pub groups: Vec<DuplicateGroup>,
    pub n_dup: usize,
    /// Crafting seed; unknown when loaded from CSV.
    pub seed: Option<u64>,
}

impl DuplicateGroupMap {
    pub fn group_of(&self, record_id: u64) -> Option<usize> {
        self.groups.iter().position(|g| g.members.contains(&record_id))
    }

    pub fn same_group(&self, a: u64, b: u64) -> bool {
        matches!((self.group_of(a), self.group_of(b)), (Some(x), Some(y)) if x == y)
    }

    pub fn member_count(&self) -> usize {
        self.groups.iter().map(|g| g.members.len()).sum()
    }

    /// CSV `group_id,member_record_id,is_source`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group_id,member_record_id,is_source\n");
        for g in &self.groups {
            for &m in &g.members {
                writeln!(out, "{},{},{}", g.group_id, m, m == g.source).unwrap();
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text)
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut by_group: BTreeMap<usize, (Option<u64>, Vec<u64>)> = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            if idx == 0 || line.trim().is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: msg.to_string(),
            };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(bad("expected group_id,member_record_id,is_source"));
            }
            let gid: usize = f[0].parse().map_err(|_| bad("bad group_id"))?;
            let member: u64 = f[1].parse().map_err(|_| bad("bad member_record_id"))?;
            let is_source: bool = f[2].parse().map_err(|_| bad("is_source must be true or false"))?;
            let entry = by_group.entry(gid).or_default();
            if is_source {
                if entry.0.is_some() {
                    return Err(bad("group has two sources"));
                }
                entry.0 = Some(member);
            }
            entry.1.push(member);
        }
        let mut groups = Vec::new();
        for (group_id, (source, members)) in by_group {
            let source = source.ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                message: format!("group {group_id} has no source"),
            })?;
            if members[0] != source {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!("group {group_id}: source must be listed first"),
                });
            }
            groups.push(DuplicateGroup {
                group_id,
                source,
                members,
            });
        }
        let n_dup = groups.iter().map(|g| g.members.len()).max().unwrap_or(0);
        Ok(DuplicateGroupMap {
            groups,
            n_dup,
            seed: None,
        })
    }
}

/// `unique` followed by `n_dup` crafted members per source, with ids
/// renumbered `0..N_t` in that order.
pub fn build_target_dataset(
    unique: &Dataset,
    dup_sources: &[QaRecord],
    n_dup: usize,
    seed: u64,
) -> Result<(Dataset, DuplicateGroupMap)> {
    let qa = unique.as_qa()?;
    let vocab = qa.vocab_size();
    let mut ids: HashSet<u64> = qa.records().iter().map(|r| r.record_id).collect();
    for s in dup_sources {
        if !ids.insert(s.record_id) {
            return Err(Error::DuplicateRecordId(s.record_id));
        }
    }
    let mut records: Vec<QaRecord> = qa.records().to_vec();
    let mut groups = Vec::with_capacity(dup_sources.len());
    for (g, source) in dup_sources.iter().enumerate() {
        let members = craft_near_duplicates(source, n_dup, vocab, seed)?;
        let start = records.len() as u64;
        groups.push(DuplicateGroup {
            group_id: g,
            source: start,
            members: (start..start + members.len() as u64).collect(),
        });
        records.extend(members);
    }
    for (k, r) in records.iter_mut().enumerate() {
        r.record_id = k as u64;
    }
    let map = DuplicateGroupMap {
        groups,
        n_dup,
        seed: Some(seed),
    };
    Ok((Dataset::Qa(QaDataset::new(vocab, records)?), map))
}

/// Appends `n_planted` copies of distinct seeded source records, each with
/// one coordinate shifted by a normal draw of standard deviation `scale`.
///
/// Sources are drawn uniformly from the `hard_fraction` of records with the
/// smallest centroid margin (distance to the nearest other class mean minus
/// distance to the own class mean); `1.0` draws from every record.
pub fn plant_vector_duplicates(
    dataset: &Dataset,
    n_planted: usize,
    scale: f64,
    hard_fraction: f64,
    seed: u64,
) -> Result<(Dataset, DuplicateGroupMap)> {
    let v = dataset.as_vector()?;
    if !(hard_fraction > 0.0 && hard_fraction <= 1.0) {
        return Err(Error::invalid("hard_fraction must lie in (0, 1]"));
    }
    let pool_size = ((v.len() as f64 * hard_fraction).ceil() as usize).min(v.len());
    if n_planted > pool_size {
        return Err(Error::invalid("more planted duplicates than eligible source records"));
    }
    let noise = Normal::new(0.0, scale).map_err(|e| Error::invalid(e.to_string()))?;
    let mut pool: Vec<usize> = (0..v.len()).collect();
    if pool_size < v.len() {
        let margins = centroid_margins(v);
        pool.sort_by(|&a, &b| margins[a].total_cmp(&margins[b]).then(a.cmp(&b)));
        pool.truncate(pool_size);
    }
    let mut rng = stream(seed, 0);
    let mut sources: Vec<usize> = sample(&mut rng, pool.len(), n_planted)
        .into_iter()
        .map(|k| pool[k])
        .collect();
    sources.sort_unstable();
    let mut records: Vec<VectorRecord> = v.records().to_vec();
    for (k, r) in records.iter_mut().enumerate() {
        r.record_id = k as u64;
    }
    let mut groups = Vec::with_capacity(n_planted);
    for (g, &s) in sources.iter().enumerate() {
        let mut copy = records[s].clone();
        let coord = rng.random_range(0..v.dim());
        copy.features[coord] += noise.sample(&mut rng);
        copy.record_id = records.len() as u64;
        groups.push(DuplicateGroup {
            group_id: g,
            source: s as u64,
            members: vec![s as u64, copy.record_id],
        });
        records.push(copy);
    }
    let map = DuplicateGroupMap {
        groups,
        n_dup: 2,
        seed: Some(seed),
    };
    Ok((
        Dataset::Vector(VectorDataset::new(v.dim(), v.n_classes(), records)?),
        map,
    ))
}

fn centroid_margins(v: &VectorDataset) -> Vec<f64> {
    let mut centroids = vec![vec![0.0; v.dim()]; v.n_classes()];
    let mut counts = vec![0usize; v.n_classes()];
    for r in v.records() {
        counts[r.label] += 1;
        for (c, x) in centroids[r.label].iter_mut().zip(&r.features) {
            *c += x;
        }
    }
    for (c, &n) in centroids.iter_mut().zip(&counts) {
        c.iter_mut().for_each(|x| *x /= n.max(1) as f64);
    }
    let dist = |x: &[f64], c: &[f64]| x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    v.records()
        .iter()
        .map(|r| {
            let own = dist(&r.features, &centroids[r.label]);
            let other = (0..v.n_classes())
                .filter(|&k| k != r.label && counts[k] > 0)
                .map(|k| dist(&r.features, &centroids[k]))
                .fold(f64::INFINITY, f64::min);
            other - own
        })
        .collect()
}

/// A target flagged as having a likely near-duplicate.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<F> {
    pub target: usize,
    pub target_id: u64,
    pub im: Margin<F>,
    /// Most influential other record.
    pub suspected: usize,
    pub suspected_id: u64,
}

/// Targets with above-median self-influence, ascending by IM (dominant
/// targets last), truncated to `k`.
pub fn surface_duplicates<F: Scalar>(
    summaries: &[TargetSummary<F>],
    influence: &InfluenceMatrixOf<F>,
    k: usize,
) -> Vec<Candidate<F>> {
    if k == 0 || summaries.is_empty() {
        return Vec::new();
    }
    let selfs: Vec<f64> = summaries.iter().map(|s| s.self_influence.to_f64_lossy()).collect();
    let med = median(&selfs).expect("non-empty");
    let ids: HashMap<usize, u64> = summaries.iter().map(|s| (s.index, s.target_id)).collect();
    let mut eligible: Vec<&TargetSummary<F>> = summaries
        .iter()
        .filter(|s| s.self_influence.to_f64_lossy() > med)
        .collect();
    eligible.sort_by(|a, b| a.im.cmp_ascending(&b.im).then(a.index.cmp(&b.index)));
    if eligible.len() < k {
        log::warn!("only {} eligible targets for k = {k}", eligible.len());
    }
    eligible
        .into_iter()
        .take(k)
        .map(|s| {
            let row = influence.row(s.index);
            let mut best: Option<usize> = None;
            for (i, &v) in row.iter().enumerate() {
                if i != s.index && best.is_none_or(|b| v > row[b]) {
                    best = Some(i);
                }
            }
            let suspected = best.expect("at least two records");
            Candidate {
                target: s.index,
                target_id: s.target_id,
                im: s.im,
                suspected,
                suspected_id: ids.get(&suspected).copied().unwrap_or(suspected as u64),
            }
        })
        .collect()
}

/// Fraction of candidates whose suspected duplicate shares their group.
pub fn surfacing_precision<F>(candidates: &[Candidate<F>], groups: &DuplicateGroupMap) -> Option<f64> {
    if candidates.is_empty() {
        return None;
    }
    let hits = candidates
        .iter()
        .filter(|c| groups.same_group(c.target_id, c.suspected_id))
        .count();
    Some(hits as f64 / candidates.len() as f64)
}
