//! Command-line pipeline. Every subcommand reads and writes fixed file
//! names inside the output directory, so stages chain without extra flags.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{Map, Value};

use crate::binfmt::write_atomic;
use crate::corpus;
use crate::data::{self, Dataset, Modality, QaDataset, RunConfig};
use crate::duplicates::{self, DuplicateGroupMap};
use crate::error::Error;
use crate::extraction;
use crate::influence::{self, InfluenceMatrixOf, ORACLE_MAX_RECORDS};
use crate::partition::PartitionMatrix;
use crate::report;
use crate::stats::{self, GroupTag};
use crate::sweep::{self, LossMatrix, SweepOptions};

pub const CORPUS_FILE: &str = "corpus.txt";
pub const HELD_OUT_FILE: &str = "held_out.txt";
pub const GROUPS_FILE: &str = "groups.csv";
pub const PARTITIONS_FILE: &str = "partitions.bin";
pub const INFLUENCE_FILE: &str = "influence.bin";
pub const ORACLE_FILE: &str = "oracle.bin";
pub const EXTRACTION_FILE: &str = "extraction";
pub const SUMMARY_FILE: &str = "summary";
pub const GROUP_SUMMARY_FILE: &str = "group_summary";
pub const CANDIDATES_FILE: &str = "candidates";
pub const STABILITY_FILE: &str = "stability";
pub const REPORT_DIR: &str = "report";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "cfinfluence",
    version,
    about = "Counterfactual influence from subsampled retraining"
)]
pub struct Cli {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true, env = "CFINF_CONFIG")]
    pub config: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long, global = true, env = "CFINF_SEED")]
    pub seed: Option<u64>,
    /// Overrides `workers`.
    #[arg(long, global = true, env = "CFINF_WORKERS")]
    pub workers: Option<usize>,
    /// Record id for per-target output (`report`).
    #[arg(long, global = true, env = "CFINF_TARGET")]
    pub target: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long, global = true, env = "CFINF_OUT")]
    pub out: Option<PathBuf>,
    /// Format of exported tables.
    #[arg(long, global = true, env = "CFINF_FORMAT", value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus (and held-out records for QA).
    GenData,
    /// Assemble the target dataset with near-duplicate groups.
    CraftDups,
    /// Draw the partition matrix.
    GenPartitions,
    /// Train and evaluate every model; resumable.
    Sweep {
        /// Stop after committing this many new models.
        #[arg(long)]
        stop_after: Option<usize>,
        /// Keep a binary dump of each trained model.
        #[arg(long)]
        dump_models: bool,
    },
    /// Estimate the influence matrix from the loss matrix.
    Influence,
    /// Exact influence by enumerating every training subset (small N).
    Oracle,
    /// Per-target statistics, group table and duplicate candidates.
    Stats,
    /// Greedy extraction and BLEU per record.
    Extract,
    /// Self-influence stability across blocks of the model pool.
    Stability,
    /// SVG figures and the group table.
    Report,
}

/// Failure of one subcommand.
#[derive(Debug)]
pub enum CliError {
    Failed(Error),
    Missing { path: PathBuf, requires: &'static str },
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Failed(e)
    }
}

impl CliError {
    /// Single machine-parseable line.
    pub fn line(&self) -> String {
        match self {
            CliError::Missing { path, requires } => format!(
                "error: kind=missing_artifact path={} requires={requires}",
                path.display()
            ),
            CliError::Failed(e) => format!(
                "error: kind={} message={:?}",
                e.kind(),
                e.to_string().replace('\n', " ")
            ),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    format: Format,
    target: Option<u64>,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn table_path(&self, stem: &str) -> PathBuf {
        let ext = match self.format {
            Format::Csv => "csv",
            Format::Json => "json",
        };
        self.out.join(format!("{stem}.{ext}"))
    }

    fn dataset_path(&self) -> PathBuf {
        self.out.join(&self.cfg.dataset)
    }

    fn write_table(&self, stem: &str, csv: &str) -> CliResult<PathBuf> {
        let path = self.table_path(stem);
        let body = match self.format {
            Format::Csv => csv.to_string(),
            Format::Json => csv_to_json(csv),
        };
        write_atomic(&path, body.as_bytes())?;
        Ok(path)
    }
}

fn require(path: PathBuf, requires: &'static str) -> CliResult<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Missing { path, requires })
    }
}

/// Converts a simple (unquoted) CSV table to a JSON array of objects.
/// Numeric cells become numbers, empty cells `null`.
pub fn csv_to_json(csv: &str) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let rows: Vec<Value> = lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let mut obj = Map::new();
            for (k, cell) in header.iter().zip(line.split(',')) {
                let v = if cell.is_empty() {
                    Value::Null
                } else if let Ok(i) = cell.parse::<i64>() {
                    Value::from(i)
                } else if let Some(f) = cell.parse::<f64>().ok().filter(|f| f.is_finite()) {
                    Value::from(f)
                } else if let Ok(b) = cell.parse::<bool>() {
                    Value::from(b)
                } else {
                    Value::from(cell)
                };
                obj.insert((*k).to_string(), v);
            }
            Value::Object(obj)
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&Value::Array(rows)).expect("serializable");
    s.push('\n');
    s
}

/// Parses arguments and runs one subcommand, returning its stdout text.
pub fn run<I, T>(args: I) -> CliResult<String>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Failed(Error::InvalidArgument(e.to_string())))?;
    execute(cli)
}

pub fn execute(cli: Cli) -> CliResult<String> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let ctx = Ctx {
        out: cfg.output_dir.clone(),
        cfg,
        format: cli.format,
        target: cli.target,
    };
    match cli.command {
        Command::GenData => gen_data(&ctx),
        Command::CraftDups => craft_dups(&ctx),
        Command::GenPartitions => gen_partitions(&ctx),
        Command::Sweep {
            stop_after,
            dump_models,
        } => run_sweep(&ctx, stop_after, dump_models),
        Command::Influence => run_influence(&ctx),
        Command::Oracle => run_oracle(&ctx),
        Command::Stats => run_stats(&ctx),
        Command::Extract => run_extract(&ctx),
        Command::Stability => run_stability(&ctx),
        Command::Report => run_report(&ctx),
    }
}

fn gen_data(ctx: &Ctx) -> CliResult<String> {
    let c = &ctx.cfg.corpus;
    let seed = ctx.cfg.master_seed;
    let mut msg = String::new();
    match ctx.cfg.modality() {
        Modality::Qa => {
            let all = corpus::generate_qa_dataset(
                c.n_records + c.n_held_out,
                c.vocab_size,
                c.q_len,
                c.a_len,
                ctx.cfg.learner.order,
                seed,
            )?;
            let qa = all.as_qa()?;
            let (train, held) = qa.records().split_at(c.n_records);
            let corpus = Dataset::Qa(QaDataset::new(c.vocab_size, train.to_vec())?);
            data::save_dataset(&corpus, &ctx.path(CORPUS_FILE))?;
            msg += &format!("wrote {} ({} records)\n", ctx.path(CORPUS_FILE).display(), train.len());
            if !held.is_empty() {
                let held_ds = Dataset::Qa(QaDataset::new(c.vocab_size, held.to_vec())?);
                data::save_dataset(&held_ds, &ctx.path(HELD_OUT_FILE))?;
                msg += &format!("wrote {} ({} records)\n", ctx.path(HELD_OUT_FILE).display(), held.len());
            }
        }
        Modality::Vector => {
            let d = corpus::generate_vector_dataset_with_spread(c.n_records, c.dim, c.n_classes, c.spread, seed)?;
            data::save_dataset(&d, &ctx.path(CORPUS_FILE))?;
            msg += &format!("wrote {} ({} records)\n", ctx.path(CORPUS_FILE).display(), d.len());
        }
    }
    Ok(msg)
}

fn load_corpus(ctx: &Ctx) -> CliResult<Dataset> {
    let p = require(ctx.path(CORPUS_FILE), "gen-data")?;
    Ok(data::load_dataset(&p, ctx.cfg.modality())?)
}

fn load_target(ctx: &Ctx) -> CliResult<Dataset> {
    let p = require(ctx.dataset_path(), "craft-dups")?;
    Ok(data::load_dataset(&p, ctx.cfg.modality())?)
}

fn load_groups(ctx: &Ctx) -> CliResult<DuplicateGroupMap> {
    let p = ctx.path(GROUPS_FILE);
    if p.exists() {
        Ok(DuplicateGroupMap::load(&p)?)
    } else {
        log::warn!("{} not found; treating every record as unique", p.display());
        Ok(DuplicateGroupMap::default())
    }
}

fn load_partitions(ctx: &Ctx) -> CliResult<PartitionMatrix> {
    let p = require(ctx.path(PARTITIONS_FILE), "gen-partitions")?;
    Ok(PartitionMatrix::load(&p)?)
}

fn load_losses(ctx: &Ctx) -> CliResult<LossMatrix> {
    let p = require(sweep::losses_path(&ctx.out), "sweep")?;
    Ok(LossMatrix::load(&p)?)
}

fn load_influence(ctx: &Ctx) -> CliResult<InfluenceMatrixOf<f64>> {
    let p = require(ctx.path(INFLUENCE_FILE), "influence")?;
    Ok(InfluenceMatrixOf::load(&p)?)
}

fn craft_dups(ctx: &Ctx) -> CliResult<String> {
    let corpus = load_corpus(ctx)?;
    let d = &ctx.cfg.duplicates;
    let seed = ctx.cfg.master_seed;
    let (dataset, groups) = match &corpus {
        Dataset::Qa(qa) => {
            if d.groups > qa.len() {
                return Err(Error::invalid(format!(
                    "dups.groups = {} exceeds the {} corpus records",
                    d.groups,
                    qa.len()
                ))
                .into());
            }
            let split = qa.len() - d.groups;
            let unique = Dataset::Qa(QaDataset::new(qa.vocab_size(), qa.records()[..split].to_vec())?);
            duplicates::build_target_dataset(&unique, &qa.records()[split..], d.n_dup, seed)?
        }
        Dataset::Vector(_) => duplicates::plant_vector_duplicates(&corpus, d.groups, d.scale, d.hard_fraction, seed)?,
    };
    data::save_dataset(&dataset, &ctx.dataset_path())?;
    groups.save(&ctx.path(GROUPS_FILE))?;
    Ok(format!(
        "wrote {} ({} records, {} groups)\nwrote {}\n",
        ctx.dataset_path().display(),
        dataset.len(),
        groups.groups.len(),
        ctx.path(GROUPS_FILE).display()
    ))
}

fn gen_partitions(ctx: &Ctx) -> CliResult<String> {
    let dataset = load_target(ctx)?;
    let p = PartitionMatrix::generate(
        dataset.len(),
        ctx.cfg.n_models,
        ctx.cfg.inclusion_prob,
        ctx.cfg.master_seed,
    )?;
    if let Some(j) = (0..p.n_models()).find(|&j| (0..p.n_records()).all(|i| !p.get(i, j))) {
        return Err(Error::EmptySubset { model: j }.into());
    }
    p.save(&ctx.path(PARTITIONS_FILE))?;
    Ok(format!(
        "wrote {} ({} x {})\n",
        ctx.path(PARTITIONS_FILE).display(),
        p.n_records(),
        p.n_models()
    ))
}

fn run_sweep(ctx: &Ctx, stop_after: Option<usize>, dump_models: bool) -> CliResult<String> {
    let dataset = load_target(ctx)?;
    let p = load_partitions(ctx)?;
    let opts = SweepOptions {
        stop_after,
        dump_models,
    };
    let losses = sweep::run_sweep(&dataset, &p, &ctx.cfg, &opts)?;
    if !losses.is_complete() {
        return Ok(format!(
            "sweep interrupted: {} of {} models committed; rerun to resume\n",
            losses.completed(),
            losses.n_models()
        ));
    }
    let table = ctx.write_table("losses", &losses.to_csv(&dataset.record_ids())?)?;
    Ok(format!(
        "wrote {} ({} x {})\nwrote {}\n",
        sweep::losses_path(&ctx.out).display(),
        losses.n_targets(),
        losses.n_models(),
        table.display()
    ))
}

fn run_influence(ctx: &Ctx) -> CliResult<String> {
    let losses = load_losses(ctx)?;
    let p = load_partitions(ctx)?;
    let dataset = load_target(ctx)?;
    let inf = influence::influence_from_losses(&losses, &p)?;
    inf.save(&ctx.path(INFLUENCE_FILE))?;
    let table = ctx.write_table("influence", &inf.to_csv(&dataset.record_ids()))?;
    Ok(format!(
        "wrote {} ({n} x {n})\nwrote {}\n",
        ctx.path(INFLUENCE_FILE).display(),
        table.display(),
        n = inf.n()
    ))
}

fn run_oracle(ctx: &Ctx) -> CliResult<String> {
    let dataset = load_target(ctx)?;
    let inf = influence::exact_influence_oracle(&dataset, &ctx.cfg.learner, ORACLE_MAX_RECORDS)?;
    inf.save(&ctx.path(ORACLE_FILE))?;
    let table = ctx.write_table("oracle", &inf.to_csv(&dataset.record_ids()))?;
    Ok(format!(
        "wrote {}\nwrote {}\n",
        ctx.path(ORACLE_FILE).display(),
        table.display()
    ))
}

fn run_extract(ctx: &Ctx) -> CliResult<String> {
    let dataset = load_target(ctx)?;
    let groups = load_groups(ctx)?;
    let model = extraction::train_full_model(&dataset, &ctx.cfg.learner, ctx.cfg.master_seed)?;
    let mut results = extraction::measure_extraction(&model, &dataset, &groups, None)?;
    let held_path = ctx.path(HELD_OUT_FILE);
    if held_path.exists() {
        let held = data::load_dataset(&held_path, Modality::Qa)?;
        results.extend(extraction::measure_held_out(&model, &held, None)?);
    }
    let table = ctx.write_table(EXTRACTION_FILE, &extraction::extraction_to_csv(&results))?;
    Ok(format!("wrote {} ({} records)\n", table.display(), results.len()))
}

/// BLEU per target record id, and the held-out scores.
type BleuTable = (HashMap<u64, f64>, Vec<f64>);

/// Reads the extraction table if one exists (either format).
fn load_bleu(ctx: &Ctx) -> CliResult<Option<BleuTable>> {
    let csv_path = ctx.out.join(format!("{EXTRACTION_FILE}.csv"));
    let json_path = ctx.out.join(format!("{EXTRACTION_FILE}.json"));
    let rows: Vec<(u64, String, f64)> = if csv_path.exists() {
        let text = fs::read_to_string(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        text.lines()
            .enumerate()
            .skip(1)
            .filter(|(_, l)| !l.is_empty())
            .map(|(idx, l)| {
                let f: Vec<&str> = l.split(',').collect();
                let bad = || Error::Parse {
                    path: csv_path.clone(),
                    line: idx + 1,
                    message: "bad extraction row".into(),
                };
                if f.len() != 5 {
                    return Err(bad());
                }
                Ok((
                    f[0].parse().map_err(|_| bad())?,
                    f[1].to_string(),
                    f[2].parse().map_err(|_| bad())?,
                ))
            })
            .collect::<Result<_, Error>>()?
    } else if json_path.exists() {
        let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: json_path.clone(),
            message: e.to_string(),
        })?;
        v.as_array()
            .into_iter()
            .flatten()
            .filter_map(|r| {
                Some((
                    r.get("record_id")?.as_u64()?,
                    r.get("group")?.as_str()?.to_string(),
                    r.get("bleu")?.as_f64()?,
                ))
            })
            .collect()
    } else {
        return Ok(None);
    };
    let mut targets = HashMap::new();
    let mut held = Vec::new();
    for (id, group, bleu) in rows {
        if group == GroupTag::HeldOut.name() {
            held.push(bleu);
        } else {
            targets.insert(id, bleu);
        }
    }
    Ok(Some((targets, held)))
}

struct Analysis {
    ids: Vec<u64>,
    groups: DuplicateGroupMap,
    influence: InfluenceMatrixOf<f64>,
    summaries: Vec<stats::TargetSummary<f64>>,
    held_out_bleu: Vec<f64>,
}

fn analyse(ctx: &Ctx) -> CliResult<Analysis> {
    let influence = load_influence(ctx)?;
    let dataset = load_target(ctx)?;
    let groups = load_groups(ctx)?;
    let ids = dataset.record_ids();
    let (bleu, held_out_bleu) = match load_bleu(ctx)? {
        Some((map, held)) => {
            let per_row: Option<Vec<f64>> = ids.iter().map(|id| map.get(id).copied()).collect();
            if per_row.is_none() {
                log::warn!("extraction table does not cover every record; BLEU omitted");
            }
            (per_row, held)
        }
        None => (None, Vec::new()),
    };
    let summaries = stats::summarize_targets(&influence, &ids, &groups, bleu.as_deref())?;
    Ok(Analysis {
        ids,
        groups,
        influence,
        summaries,
        held_out_bleu,
    })
}

fn candidates_csv(c: &[duplicates::Candidate<f64>], groups: &DuplicateGroupMap) -> String {
    let mut out = String::from("rank,target_id,im,suspected_id,same_group\n");
    for (k, x) in c.iter().enumerate() {
        out += &format!(
            "{},{},{},{},{}\n",
            k + 1,
            x.target_id,
            x.im,
            x.suspected_id,
            groups.same_group(x.target_id, x.suspected_id)
        );
    }
    out
}

fn run_stats(ctx: &Ctx) -> CliResult<String> {
    let a = analyse(ctx)?;
    let rows = stats::group_summary(&a.summaries, &a.held_out_bleu);
    let cands = duplicates::surface_duplicates(&a.summaries, &a.influence, ctx.cfg.surface_k);
    let s = ctx.write_table(SUMMARY_FILE, &stats::summaries_to_csv(&a.summaries))?;
    let g = ctx.write_table(GROUP_SUMMARY_FILE, &stats::group_summary_to_csv(&rows))?;
    let c = ctx.write_table(CANDIDATES_FILE, &candidates_csv(&cands, &a.groups))?;
    let mut msg = format!("wrote {}\nwrote {}\nwrote {}\n", s.display(), g.display(), c.display());
    if let Some(p) = duplicates::surfacing_precision(&cands, &a.groups).filter(|_| !a.groups.groups.is_empty()) {
        msg += &format!("surfacing precision at k={}: {p:.3}\n", cands.len());
    }
    Ok(msg)
}

fn run_stability(ctx: &Ctx) -> CliResult<String> {
    let losses = load_losses(ctx)?;
    let p = load_partitions(ctx)?;
    let pool = losses.n_models();
    let (ms, skipped): (Vec<usize>, Vec<usize>) =
        ctx.cfg.stability_m.iter().partition(|&&m| m <= pool && pool % m == 0);
    if !skipped.is_empty() {
        log::warn!("skipping stability m values {skipped:?}: each must divide the pool size {pool}");
    }
    if ms.is_empty() {
        return Err(Error::invalid(format!("no stability m value divides the pool size {pool}")).into());
    }
    let rep = stats::stability_analysis(losses.values()?, &p, &ms)?;
    let path = ctx.write_table(STABILITY_FILE, &rep.to_csv())?;
    Ok(format!("wrote {}\n", path.display()))
}

fn load_stability_rows(ctx: &Ctx) -> CliResult<Option<Vec<stats::StabilityRow>>> {
    let csv_path = ctx.out.join(format!("{STABILITY_FILE}.csv"));
    if csv_path.exists() {
        let text = fs::read_to_string(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        return Ok(Some(stats::parse_stability_csv(&csv_path, &text)?));
    }
    let json_path = ctx.out.join(format!("{STABILITY_FILE}.json"));
    if json_path.exists() {
        let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: json_path.clone(),
            message: e.to_string(),
        })?;
        let rows = v
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(|r| {
                Some(stats::StabilityRow {
                    m: r.get("m")?.as_u64()? as usize,
                    mean_spearman: r.get("mean_spearman").and_then(Value::as_f64),
                    std_p50: r.get("std_p50")?.as_f64()?,
                    std_p90: r.get("std_p90")?.as_f64()?,
                })
            })
            .collect();
        return Ok(Some(rows));
    }
    Ok(None)
}

fn table_markdown(rows: &[stats::GroupStats]) -> String {
    let cell = |m: &Option<stats::Moments>| match m {
        Some(m) => format!("{:.3} ± {:.3} (median {:.3})", m.mean, m.std, m.median),
        None => "n/a".to_string(),
    };
    let mut out = String::from("| group | n | self-influence | IM | IM dominant | BLEU |\n|---|---|---|---|---|---|\n");
    for r in rows {
        out += &format!(
            "| {} | {} | {} | {} | {} | {} |\n",
            r.group.name(),
            r.n,
            cell(&r.self_influence),
            cell(&r.im),
            r.n_dominant,
            cell(&r.bleu)
        );
    }
    out
}

fn run_report(ctx: &Ctx) -> CliResult<String> {
    let a = analyse(ctx)?;
    let dir = ctx.path(REPORT_DIR);
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> CliResult<()> {
        let p = dir.join(name);
        write_atomic(&p, body.as_bytes())?;
        written.push(p);
        Ok(())
    };
    put("heatmap.svg".into(), report::emit_heatmap(&a.influence, &a.ids))?;

    let targets: Vec<u64> = match ctx.target {
        Some(id) => {
            if !a.ids.contains(&id) {
                return Err(Error::invalid(format!("--target {id} is not a record id of the dataset")).into());
            }
            vec![id]
        }
        None => {
            let mut t = vec![a.ids[0]];
            if let Some(g) = a.groups.groups.first() {
                t.push(g.source);
            }
            t.dedup();
            t
        }
    };
    for id in targets {
        let t = a.ids.iter().position(|&x| x == id).expect("checked");
        put(
            format!("ranked_{id}.svg"),
            report::emit_ranked_plot(&a.influence, t, &a.ids, &a.groups),
        )?;
    }

    let rows = stats::group_summary(&a.summaries, &a.held_out_bleu);
    put("table1.csv".into(), stats::group_summary_to_csv(&rows))?;
    put("table1.md".into(), table_markdown(&rows))?;
    match load_stability_rows(ctx)? {
        Some(rows) => put("stability.svg".into(), report::emit_stability_plot(&rows))?,
        None => log::warn!("no stability table; run `stability` to include the stability plot"),
    }
    Ok(written.iter().map(|p| format!("wrote {}\n", p.display())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_conversion_types_cells() {
        let j = csv_to_json("a,b,c,d\n1,2.5,,x\n");
        let v: Value = serde_json::from_str(&j).unwrap();
        assert_eq!(v[0]["a"], Value::from(1));
        assert_eq!(v[0]["b"], Value::from(2.5));
        assert_eq!(v[0]["c"], Value::Null);
        assert_eq!(v[0]["d"], Value::from("x"));
    }

    #[test]
    fn missing_artifact_names_prior_step() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let err = run(["cfinfluence", "--out", out, "influence"]).unwrap_err();
        let line = err.line();
        assert!(line.starts_with("error: kind=missing_artifact"), "{line}");
        assert!(line.ends_with("requires=sweep"), "{line}");
        let err = run(["cfinfluence", "--out", out, "craft-dups"]).unwrap_err();
        assert!(err.line().ends_with("requires=gen-data"));
    }
}
