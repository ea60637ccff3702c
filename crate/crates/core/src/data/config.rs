use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::binfmt::write_atomic;
use crate::error::{Error, Result};
use crate::learners::{LearnerKind, LearnerSpec, LossScope};

/// Parameters of the synthetic corpus generated by `gen-data`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    /// Unique records (QA) or base records (vector), including duplicate sources.
    pub n_records: usize,
    /// Extra QA records generated but never trained on.
    pub n_held_out: usize,
    pub vocab_size: u32,
    pub q_len: usize,
    pub a_len: usize,
    pub dim: usize,
    pub n_classes: usize,
    pub spread: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_records: 48,
            n_held_out: 8,
            vocab_size: 32,
            q_len: 6,
            a_len: 12,
            dim: 16,
            n_classes: 2,
            spread: 0.5,
        }
    }
}

/// Near-duplicate planting used by `craft-dups`.
#[derive(Debug, Clone, PartialEq)]
pub struct DuplicateSpec {
    /// Number of source records `C` that receive near-duplicates.
    pub groups: usize,
    /// Group size including the unmodified source.
    pub n_dup: usize,
    /// Std of the coordinate shift applied to planted vector duplicates.
    pub scale: f64,
    /// Planted vector sources come from this fraction of hardest records.
    pub hard_fraction: f64,
}

impl Default for DuplicateSpec {
    fn default() -> Self {
        DuplicateSpec {
            groups: 8,
            n_dup: 5,
            scale: 0.1,
            hard_fraction: 0.1,
        }
    }
}

/// Complete description of a run; persisted as a flat `key = value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub master_seed: u64,
    pub n_models: usize,
    pub inclusion_prob: f64,
    pub workers: usize,
    pub learner: LearnerSpec,
    pub dataset: PathBuf,
    pub output_dir: PathBuf,
    pub corpus: CorpusSpec,
    pub duplicates: DuplicateSpec,
    pub stability_m: Vec<usize>,
    /// Number of candidates reported by duplicate surfacing.
    pub surface_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            master_seed: 20_250_601,
            n_models: 512,
            inclusion_prob: 0.5,
            workers: 1,
            learner: LearnerSpec::default(),
            dataset: PathBuf::from("dataset.txt"),
            output_dir: PathBuf::from("run"),
            corpus: CorpusSpec::default(),
            duplicates: DuplicateSpec::default(),
            stability_m: vec![32, 128, 512],
            surface_k: 5,
        }
    }
}

const KEYS: &[&str] = &[
    "master_seed",
    "n_models",
    "inclusion_prob",
    "workers",
    "dataset",
    "output_dir",
    "learner",
    "ngram.order",
    "ngram.add_k",
    "ngram.loss_scope",
    "classifier.learning_rate",
    "classifier.iterations",
    "classifier.l2",
    "corpus.n_records",
    "corpus.n_held_out",
    "corpus.vocab_size",
    "corpus.q_len",
    "corpus.a_len",
    "corpus.dim",
    "corpus.n_classes",
    "corpus.spread",
    "dups.groups",
    "dups.n_dup",
    "dups.scale",
    "dups.hard_fraction",
    "stability.m_values",
    "surface.k",
];

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }

    /// Parses config text. Unspecified keys keep their defaults; unknown or
    /// repeated keys are errors.
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Config {
                path: path.to_path_buf(),
                line: line_no,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let key = key.trim();
            let value = value.trim();
            if !KEYS.contains(&key) {
                return Err(err(format!("unknown key {key:?}")));
            }
            if !seen.insert(key.to_string()) {
                return Err(err(format!("key {key:?} given twice")));
            }
            cfg.apply(key, value).map_err(err)?;
        }
        cfg.validate().map_err(|e| Error::Config {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("invalid value {v:?} for {key}"))
        }
        match key {
            "master_seed" => self.master_seed = num(key, value)?,
            "n_models" => self.n_models = num(key, value)?,
            "inclusion_prob" => self.inclusion_prob = num(key, value)?,
            "workers" => self.workers = num(key, value)?,
            "dataset" => self.dataset = PathBuf::from(value),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "learner" => self.learner.kind = LearnerKind::parse(value).map_err(|e| e.to_string())?,
            "ngram.order" => self.learner.order = num(key, value)?,
            "ngram.add_k" => self.learner.add_k = num(key, value)?,
            "ngram.loss_scope" => self.learner.loss_scope = LossScope::parse(value).map_err(|e| e.to_string())?,
            "classifier.learning_rate" => self.learner.learning_rate = num(key, value)?,
            "classifier.iterations" => self.learner.iterations = num(key, value)?,
            "classifier.l2" => self.learner.l2 = num(key, value)?,
            "corpus.n_records" => self.corpus.n_records = num(key, value)?,
            "corpus.n_held_out" => self.corpus.n_held_out = num(key, value)?,
            "corpus.vocab_size" => self.corpus.vocab_size = num(key, value)?,
            "corpus.q_len" => self.corpus.q_len = num(key, value)?,
            "corpus.a_len" => self.corpus.a_len = num(key, value)?,
            "corpus.dim" => self.corpus.dim = num(key, value)?,
            "corpus.n_classes" => self.corpus.n_classes = num(key, value)?,
            "corpus.spread" => self.corpus.spread = num(key, value)?,
            "dups.groups" => self.duplicates.groups = num(key, value)?,
            "dups.n_dup" => self.duplicates.n_dup = num(key, value)?,
            "dups.scale" => self.duplicates.scale = num(key, value)?,
            "dups.hard_fraction" => self.duplicates.hard_fraction = num(key, value)?,
            "surface.k" => self.surface_k = num(key, value)?,
            "stability.m_values" => {
                self.stability_m = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| num(key, s))
                    .collect::<std::result::Result<_, _>>()?
            }
            _ => unreachable!("key list checked by caller"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_models == 0 {
            return Err(Error::invalid("n_models must be positive"));
        }
        if !(self.inclusion_prob > 0.0 && self.inclusion_prob < 1.0) {
            return Err(Error::invalid("inclusion_prob must lie in (0, 1)"));
        }
        if self.workers == 0 {
            return Err(Error::invalid("workers must be positive"));
        }
        if self.duplicates.n_dup == 0 {
            return Err(Error::invalid("dups.n_dup must be at least 1"));
        }
        if !(self.duplicates.hard_fraction > 0.0 && self.duplicates.hard_fraction <= 1.0) {
            return Err(Error::invalid("dups.hard_fraction must lie in (0, 1]"));
        }
        if !(self.duplicates.scale.is_finite() && self.duplicates.scale >= 0.0) {
            return Err(Error::invalid("dups.scale must be finite and non-negative"));
        }
        self.learner.validate()
    }

    /// Modality implied by the learner.
    pub fn modality(&self) -> super::Modality {
        match self.learner.kind {
            LearnerKind::NgramLm => super::Modality::Qa,
            LearnerKind::LinearClassifier => super::Modality::Vector,
        }
    }

    /// Canonical rendering listing every key; `parse(to_text())` is the identity.
    pub fn to_text(&self) -> String {
        let l = &self.learner;
        let c = &self.corpus;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        kv("master_seed", self.master_seed.to_string());
        kv("n_models", self.n_models.to_string());
        kv("inclusion_prob", format!("{:?}", self.inclusion_prob));
        kv("workers", self.workers.to_string());
        kv("dataset", self.dataset.display().to_string());
        kv("output_dir", self.output_dir.display().to_string());
        kv("learner", l.kind.name().to_string());
        kv("ngram.order", l.order.to_string());
        kv("ngram.add_k", format!("{:?}", l.add_k));
        kv("ngram.loss_scope", l.loss_scope.name().to_string());
        kv("classifier.learning_rate", format!("{:?}", l.learning_rate));
        kv("classifier.iterations", l.iterations.to_string());
        kv("classifier.l2", format!("{:?}", l.l2));
        kv("corpus.n_records", c.n_records.to_string());
        kv("corpus.n_held_out", c.n_held_out.to_string());
        kv("corpus.vocab_size", c.vocab_size.to_string());
        kv("corpus.q_len", c.q_len.to_string());
        kv("corpus.a_len", c.a_len.to_string());
        kv("corpus.dim", c.dim.to_string());
        kv("corpus.n_classes", c.n_classes.to_string());
        kv("corpus.spread", format!("{:?}", c.spread));
        kv("dups.groups", self.duplicates.groups.to_string());
        kv("dups.n_dup", self.duplicates.n_dup.to_string());
        kv("dups.scale", format!("{:?}", self.duplicates.scale));
        kv("dups.hard_fraction", format!("{:?}", self.duplicates.hard_fraction));
        kv(
            "stability.m_values",
            self.stability_m
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("surface.k", self.surface_k.to_string());
        out
    }
}
