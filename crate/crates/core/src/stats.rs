//! Distribution-level statistics over influence matrices and the
//! stability of self-influence across disjoint blocks of the model pool.

use std::cmp::Ordering;
use std::fmt::{self, Write as _};

use rayon::prelude::*;

use crate::duplicates::DuplicateGroupMap;
use crate::error::{Error, Result};
use crate::influence::InfluenceMatrixOf;
use crate::matrix::Matrix;
use crate::partition::PartitionMatrix;
use crate::scalar::{mean, median, population_std, quantile, Real, Scalar};

/// Top-1 influence margin: a ratio, or a flag when the runner-up
/// influence is not positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Margin<F> {
    Ratio(F),
    Dominant,
}

impl<F: Scalar> Margin<F> {
    pub fn ratio(&self) -> Option<F> {
        match self {
            Margin::Ratio(r) => Some(*r),
            Margin::Dominant => None,
        }
    }

    pub fn is_dominant(&self) -> bool {
        matches!(self, Margin::Dominant)
    }

    /// Ascending order with dominant margins after every ratio.
    pub fn cmp_ascending(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Margin::Ratio(a), Margin::Ratio(b)) => a.partial_cmp(b).unwrap_or(Ordering::Equal),
            (Margin::Ratio(_), Margin::Dominant) => Ordering::Less,
            (Margin::Dominant, Margin::Ratio(_)) => Ordering::Greater,
            (Margin::Dominant, Margin::Dominant) => Ordering::Equal,
        }
    }
}

impl<F: Scalar> fmt::Display for Margin<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Margin::Ratio(r) => write!(f, "{:?}", r.to_f64_lossy()),
            Margin::Dominant => f.write_str("dominant"),
        }
    }
}

pub fn self_influence<F: Scalar>(influence: &InfluenceMatrixOf<F>) -> Vec<F> {
    (0..influence.n()).map(|t| influence.get(t, t)).collect()
}

/// Index of the first maximum of `row`.
fn argmax<F: Scalar>(row: &[F]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Largest influence on `t` divided by the second largest. A tie on the
/// maximum gives 1.
pub fn top1_influence_margin<F: Scalar>(influence: &InfluenceMatrixOf<F>, t: usize) -> Margin<F> {
    margin_of_row(influence.row(t))
}

pub fn margin_of_row<F: Scalar>(row: &[F]) -> Margin<F> {
    assert!(row.len() >= 2, "margin needs at least two sources");
    let top = argmax(row);
    let mut second: Option<F> = None;
    for (i, &v) in row.iter().enumerate() {
        if i != top && second.is_none_or(|s| v > s) {
            second = Some(v);
        }
    }
    let second = second.expect("two sources");
    if second <= F::zero() {
        Margin::Dominant
    } else {
        Margin::Ratio(row[top] / second)
    }
}

/// `(source index, influence)` sorted descending; ties by ascending index.
pub fn ranked_distribution<F: Scalar>(influence: &InfluenceMatrixOf<F>, t: usize) -> Vec<(usize, F)> {
    let mut ranked: Vec<(usize, F)> = influence.row(t).iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    ranked
}

/// 1-based position of the target itself in its ranked distribution.
pub fn rank_of_self<F: Scalar>(influence: &InfluenceMatrixOf<F>, t: usize) -> usize {
    ranked_distribution(influence, t)
        .iter()
        .position(|&(i, _)| i == t)
        .expect("target present")
        + 1
}

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn average_ranks<F: Real>(values: &[F]) -> Vec<F> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![F::zero(); values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let avg = F::from_count(start + 1 + end) / F::from_count(2);
        for &k in &order[start..end] {
            ranks[k] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman's rank correlation: Pearson correlation of average ranks.
/// `Ok(None)` when either ranking has zero variance.
pub fn spearman<F: Real>(a: &[F], b: &[F]) -> Result<Option<F>> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::invalid(format!(
            "spearman needs equal lengths of at least 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let (ma, mb) = (mean(&ra).unwrap(), mean(&rb).unwrap());
    let mut cov = F::zero();
    let mut va = F::zero();
    let mut vb = F::zero();
    for (x, y) in ra.iter().zip(&rb) {
        let (dx, dy) = (*x - ma, *y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == F::zero() || vb == F::zero() {
        return Ok(None);
    }
    let r = cov / (va * vb).sqrt();
    Ok(Some(r.max(-F::one()).min(F::one())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroupTag {
    Unique,
    WithDuplicates,
    HeldOut,
}

impl GroupTag {
    pub fn name(self) -> &'static str {
        match self {
            GroupTag::Unique => "unique",
            GroupTag::WithDuplicates => "with-duplicates",
            GroupTag::HeldOut => "held-out",
        }
    }
}

/// Per-target statistics of one influence row.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSummary<F> {
    pub index: usize,
    pub target_id: u64,
    pub group: GroupTag,
    pub self_influence: F,
    pub im: Margin<F>,
    pub rank_of_self: usize,
    pub max_influence: F,
    pub argmax_index: usize,
    pub argmax_source: u64,
    pub bleu: Option<f64>,
}

/// Summaries for every target; `record_ids[k]` is the id of row `k` and
/// `bleu[k]`, when given, that record's extraction score.
pub fn summarize_targets<F: Scalar>(
    influence: &InfluenceMatrixOf<F>,
    record_ids: &[u64],
    groups: &DuplicateGroupMap,
    bleu: Option<&[f64]>,
) -> Result<Vec<TargetSummary<F>>> {
    let n = influence.n();
    if record_ids.len() != n || bleu.is_some_and(|b| b.len() != n) {
        return Err(Error::Shape(format!(
            "{n} targets, {} ids, {:?} BLEU scores",
            record_ids.len(),
            bleu.map(<[f64]>::len)
        )));
    }
    if n < 2 {
        return Err(Error::invalid("summaries need at least two records"));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|t| {
            let row = influence.row(t);
            let top = argmax(row);
            TargetSummary {
                index: t,
                target_id: record_ids[t],
                group: if groups.group_of(record_ids[t]).is_some() {
                    GroupTag::WithDuplicates
                } else {
                    GroupTag::Unique
                },
                self_influence: row[t],
                im: margin_of_row(row),
                rank_of_self: rank_of_self(influence, t),
                max_influence: row[top],
                argmax_index: top,
                argmax_source: record_ids[top],
                bleu: bleu.map(|b| b[t]),
            }
        })
        .collect())
}

/// CSV `target_id,group,self_influence,im,rank_of_self,argmax_source,bleu`.
pub fn summaries_to_csv<F: Scalar>(summaries: &[TargetSummary<F>]) -> String {
    let mut out = String::from("target_id,group,self_influence,im,rank_of_self,argmax_source,bleu\n");
    for s in summaries {
        let bleu = s.bleu.map(|b| format!("{b:?}")).unwrap_or_default();
        writeln!(
            out,
            "{},{},{:?},{},{},{},{}",
            s.target_id,
            s.group.name(),
            s.self_influence.to_f64_lossy(),
            s.im,
            s.rank_of_self,
            s.argmax_source,
            bleu
        )
        .unwrap();
    }
    out
}

/// Mean, population std and median of one statistic within a group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Option<Self> {
        Some(Moments {
            n: values.len(),
            mean: mean(values)?,
            std: population_std(values)?,
            median: median(values)?,
        })
    }
}

/// One row of the group table.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub group: GroupTag,
    pub n: usize,
    pub self_influence: Option<Moments>,
    /// Over targets with a defined margin.
    pub im: Option<Moments>,
    pub n_dominant: usize,
    pub bleu: Option<Moments>,
}

/// Aggregates per group. Held-out records carry no influence, so their row
/// holds only BLEU. Empty groups are dropped with a warning.
pub fn group_summary<F: Scalar>(summaries: &[TargetSummary<F>], held_out_bleu: &[f64]) -> Vec<GroupStats> {
    let mut rows = Vec::new();
    for tag in [GroupTag::Unique, GroupTag::WithDuplicates] {
        let members: Vec<&TargetSummary<F>> = summaries.iter().filter(|s| s.group == tag).collect();
        if members.is_empty() {
            log::warn!("group {} is empty; omitted from the summary", tag.name());
            continue;
        }
        let selfs: Vec<f64> = members.iter().map(|s| s.self_influence.to_f64_lossy()).collect();
        let ims: Vec<f64> = members
            .iter()
            .filter_map(|s| s.im.ratio())
            .map(|r| r.to_f64_lossy())
            .collect();
        let bleus: Vec<f64> = members.iter().filter_map(|s| s.bleu).collect();
        rows.push(GroupStats {
            group: tag,
            n: members.len(),
            self_influence: Moments::of(&selfs),
            im: Moments::of(&ims),
            n_dominant: members.len() - ims.len(),
            bleu: Moments::of(&bleus),
        });
    }
    if held_out_bleu.is_empty() {
        log::warn!("group held-out is empty; omitted from the summary");
    } else {
        rows.push(GroupStats {
            group: GroupTag::HeldOut,
            n: held_out_bleu.len(),
            self_influence: None,
            im: None,
            n_dominant: 0,
            bleu: Moments::of(held_out_bleu),
        });
    }
    rows
}

/// CSV of the group table; absent statistics are empty cells.
pub fn group_summary_to_csv(rows: &[GroupStats]) -> String {
    let mut out = String::from(
        "group,n,self_influence_mean,self_influence_std,self_influence_median,\
         im_mean,im_std,im_median,im_dominant,bleu_mean,bleu_std,bleu_median\n",
    );
    let cells = |m: &Option<Moments>| match m {
        Some(m) => format!("{:.6},{:.6},{:.6}", m.mean, m.std, m.median),
        None => ",,".to_string(),
    };
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.group.name(),
            r.n,
            cells(&r.self_influence),
            cells(&r.im),
            r.n_dominant,
            cells(&r.bleu)
        )
        .unwrap();
    }
    out
}

/// Result of one pool size in the stability analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityEntry {
    pub m: usize,
    pub n_groups: usize,
    pub mean_spearman: Option<f64>,
    /// Population std of each record's self-influence across groups.
    pub per_sample_std: Vec<f64>,
}

impl StabilityEntry {
    pub fn std_quantile(&self, q: f64) -> f64 {
        quantile(&self.per_sample_std, q).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub m_max: usize,
    pub entries: Vec<StabilityEntry>,
}

impl StabilityReport {
    pub fn rows(&self) -> Vec<StabilityRow> {
        self.entries
            .iter()
            .map(|e| StabilityRow {
                m: e.m,
                mean_spearman: e.mean_spearman,
                std_p50: e.std_quantile(0.5),
                std_p90: e.std_quantile(0.9),
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        stability_rows_to_csv(&self.rows())
    }
}

/// One line of the stability table.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub m: usize,
    pub mean_spearman: Option<f64>,
    pub std_p50: f64,
    pub std_p90: f64,
}

/// CSV `m,mean_spearman,std_p50,std_p90`; an undefined correlation is empty.
pub fn stability_rows_to_csv(rows: &[StabilityRow]) -> String {
    let mut out = String::from("m,mean_spearman,std_p50,std_p90\n");
    for r in rows {
        let rho = r.mean_spearman.map(|v| format!("{v:?}")).unwrap_or_default();
        writeln!(out, "{},{},{:?},{:?}", r.m, rho, r.std_p50, r.std_p90).unwrap();
    }
    out
}

pub fn parse_stability_csv(path: &std::path::Path, text: &str) -> Result<Vec<StabilityRow>> {
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(idx, line)| {
            let bad = || Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: format!("bad stability row {line:?}"),
            };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(StabilityRow {
                m: f[0].parse().map_err(|_| bad())?,
                mean_spearman: if f[1].is_empty() {
                    None
                } else {
                    Some(f[1].parse().map_err(|_| bad())?)
                },
                std_p50: f[2].parse().map_err(|_| bad())?,
                std_p90: f[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Self-influence of every record using only the columns `cols`.
fn block_self_influence(losses: &Matrix<f64>, partitions: &PartitionMatrix, cols: &[usize]) -> Result<Vec<f64>> {
    (0..partitions.n_records())
        .into_par_iter()
        .map(|t| {
            let row = losses.row(t);
            let (mut ins, mut outs) = (Vec::new(), Vec::new());
            for &j in cols {
                if partitions.get(t, j) {
                    ins.push(row[j]);
                } else {
                    outs.push(row[j]);
                }
            }
            match (mean(&outs), mean(&ins)) {
                (Some(o), Some(i)) => Ok(o - i),
                _ => Err(Error::DegenerateRow {
                    record: t,
                    n_in: ins.len(),
                    n_out: outs.len(),
                }),
            }
        })
        .collect()
}

/// Splits the pool into contiguous blocks of `m` columns for every `m`,
/// then compares the self-influence vectors of the blocks.
pub fn stability_analysis(
    losses: &Matrix<f64>,
    partitions: &PartitionMatrix,
    m_values: &[usize],
) -> Result<StabilityReport> {
    let m_max = partitions.n_models();
    if losses.rows() != partitions.n_records() || losses.cols() != m_max {
        return Err(Error::Shape("loss and partition matrices disagree".into()));
    }
    let mut entries = Vec::with_capacity(m_values.len());
    for &m in m_values {
        if m == 0 || !m_max.is_multiple_of(m) {
            return Err(Error::invalid(format!("m = {m} does not divide the pool size {m_max}")));
        }
        let n_groups = m_max / m;
        let blocks: Vec<Vec<f64>> = (0..n_groups)
            .map(|g| block_self_influence(losses, partitions, &(g * m..(g + 1) * m).collect::<Vec<_>>()))
            .collect::<Result<_>>()?;
        let mut rs = Vec::new();
        for a in 0..n_groups {
            for b in a + 1..n_groups {
                if let Some(r) = spearman(&blocks[a], &blocks[b])? {
                    rs.push(r);
                }
            }
        }
        let per_sample_std = (0..partitions.n_records())
            .map(|t| {
                let v: Vec<f64> = blocks.iter().map(|blk| blk[t]).collect();
                population_std(&v).unwrap()
            })
            .collect();
        entries.push(StabilityEntry {
            m,
            n_groups,
            mean_spearman: mean(&rs),
            per_sample_std,
        });
    }
    Ok(StabilityReport { m_max, entries })
}
