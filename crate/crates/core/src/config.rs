//! `webextractor.toml`: every tunable of a pipeline run.
//!
//! Relative paths resolve against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::crawler::CrawlPolicy;
use crate::dataset::{QuestionSources, BUDGET_GRID, DEFAULT_TEST_PER_PROPERTY, DEFAULT_TRAIN_PER_PROPERTY};
use crate::error::{Error, Result};
use crate::extract::{QuestionCombination, RulePattern, DEFAULT_BATCH_SIZE};
use crate::html::TagPolicy;
use crate::kg::{PropertyId, SortOrder};
use crate::linker::RankerHyper;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Root for every artifact the pipeline writes.
    pub work_dir: PathBuf,
    pub kg: KgConfig,
    pub selection: SelectionConfig,
    pub crawl: CrawlConfig,
    pub html: TagPolicy,
    pub dataset: DatasetConfig,
    pub extractor: ExtractorConfig,
    pub linker: LinkerConfig,
    pub proposals: ProposalsConfig,
    pub estimate: EstimateConfig,
    pub experiment: ExperimentConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            work_dir: "work".into(),
            kg: KgConfig::default(),
            selection: SelectionConfig::default(),
            crawl: CrawlConfig::default(),
            html: TagPolicy::default(),
            dataset: DatasetConfig::default(),
            extractor: ExtractorConfig::default(),
            linker: LinkerConfig::default(),
            proposals: ProposalsConfig::default(),
            estimate: EstimateConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KgBackend {
    #[default]
    Fixture,
    Wikidata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KgConfig {
    pub source: KgBackend,
    /// JSONL entity records, for the fixture backend.
    pub fixture: Option<PathBuf>,
    pub languages: Vec<String>,
    pub api_url: String,
    pub sparql_url: String,
    pub cache_dir: Option<PathBuf>,
}

impl Default for KgConfig {
    fn default() -> Self {
        Self {
            source: KgBackend::Fixture,
            fixture: None,
            languages: vec!["en".into()],
            api_url: "https://www.wikidata.org/w/api.php".into(),
            sparql_url: "https://query.wikidata.org/sparql".into(),
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// External-identifier properties, one per website.
    pub domains: Vec<PropertyId>,
    pub sample_size: usize,
    pub seed: u64,
    pub sort_order: SortOrder,
    /// Properties kept per domain when `dataset.properties` is empty.
    pub top_properties: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            domains: Vec::new(),
            sample_size: 1000,
            seed: 0,
            sort_order: SortOrder::Descending,
            top_properties: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrawlConfig {
    /// Serve pages from this fixture directory instead of the network.
    pub fixture_pages: Option<PathBuf>,
    pub workers: usize,
    #[serde(flatten)]
    pub policy: CrawlPolicy,
}

impl Default for CrawlConfig {
    fn default() -> Self {
        Self {
            fixture_pages: None,
            workers: 4,
            policy: CrawlPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Explicit properties per domain; domains not listed use the top properties from `select`.
    pub properties: BTreeMap<PropertyId, Vec<PropertyId>>,
    pub train_per_property: usize,
    pub test_per_property: usize,
    pub budgets: Vec<usize>,
    pub question_sources: QuestionSources,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            properties: BTreeMap::new(),
            train_per_property: DEFAULT_TRAIN_PER_PROPERTY,
            test_per_property: DEFAULT_TEST_PER_PROPERTY,
            budgets: BUDGET_GRID.to_vec(),
            question_sources: QuestionSources::LabelsAndAliases,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Rule,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorConfig {
    pub backend: BackendKind,
    /// Base URL of a remote model; `{budget}` is replaced during experiments.
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub batch_size: usize,
    pub min_score: f64,
    pub combine: QuestionCombination,
    pub rules: Vec<RulePattern>,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Rule,
            endpoint: None,
            timeout_ms: 60_000,
            batch_size: DEFAULT_BATCH_SIZE,
            min_score: 0.0,
            combine: QuestionCombination::BestScore,
            rules: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkerConfig {
    pub sample_size: usize,
    pub seed: u64,
    pub l2: f64,
    pub step: f64,
    pub max_epochs: usize,
    pub tolerance: f64,
}

impl Default for LinkerConfig {
    fn default() -> Self {
        let h = RankerHyper::default();
        Self {
            sample_size: 1000,
            seed: 0,
            l2: h.l2,
            step: h.step,
            max_epochs: h.max_epochs,
            tolerance: h.tolerance,
        }
    }
}

impl LinkerConfig {
    pub fn hyper(&self) -> RankerHyper {
        RankerHyper {
            l2: self.l2,
            step: self.step,
            max_epochs: self.max_epochs,
            tolerance: self.tolerance,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposalsConfig {
    pub bind: String,
    pub snapshot_every: usize,
}

impl Default for ProposalsConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            snapshot_every: crate::proposals::DEFAULT_SNAPSHOT_EVERY,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    /// Stats CSV; defaults to `{work_dir}/stats.csv`.
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Share of domains used for pretraining; the rest are held out.
    pub pretrain_fraction: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            pretrain_fraction: 0.8,
            seed: 0,
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let c: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Load and resolve relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut c = Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        c.resolve_paths(base);
        Ok(c)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.work_dir);
        for p in [
            self.kg.fixture.as_mut(),
            self.kg.cache_dir.as_mut(),
            self.crawl.fixture_pages.as_mut(),
            self.estimate.stats.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            resolve(base, p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.html.validate()?;
        crate::dataset::BudgetSpec::new(self.dataset.budgets.clone())?;
        if self.kg.source == KgBackend::Fixture && self.kg.fixture.is_none() {
            return Err(Error::Config("kg.fixture is required when kg.source = \"fixture\"".into()));
        }
        if self.kg.languages.is_empty() {
            return Err(Error::Config("kg.languages must not be empty".into()));
        }
        if self.extractor.backend == BackendKind::Remote && self.extractor.endpoint.is_none() {
            return Err(Error::Config("extractor.endpoint is required for the remote backend".into()));
        }
        if !(0.0..=1.0).contains(&self.extractor.min_score) {
            return Err(Error::Config("extractor.min_score must be in [0,1]".into()));
        }
        if !(0.0..1.0).contains(&self.experiment.pretrain_fraction) {
            return Err(Error::Config("experiment.pretrain_fraction must be in [0,1)".into()));
        }
        if self.selection.sample_size == 0 || self.linker.sample_size == 0 {
            return Err(Error::Config("sample sizes must be positive".into()));
        }
        Ok(())
    }

    // artifact locations

    pub fn select_path(&self) -> PathBuf {
        self.work_dir.join("select.json")
    }
    pub fn snapshot_dir(&self) -> PathBuf {
        self.work_dir.join("snapshots")
    }
    pub fn crawl_path(&self) -> PathBuf {
        self.work_dir.join("crawl.json")
    }
    pub fn dataset_dir(&self) -> PathBuf {
        self.work_dir.join("dataset")
    }
    pub fn extractions_path(&self) -> PathBuf {
        self.work_dir.join("extractions.jsonl")
    }
    pub fn model_dir(&self) -> PathBuf {
        self.work_dir.join("models")
    }
    pub fn store_dir(&self) -> PathBuf {
        self.work_dir.join("proposals")
    }
    pub fn estimate_dir(&self) -> PathBuf {
        self.work_dir.join("estimate")
    }
    pub fn experiment_dir(&self) -> PathBuf {
        self.work_dir.join("experiment")
    }
    pub fn report_path(&self, command: &str) -> PathBuf {
        self.work_dir.join("reports").join(format!("{command}.json"))
    }
    pub fn stats_path(&self) -> PathBuf {
        self.estimate
            .stats
            .clone()
            .unwrap_or_else(|| self.work_dir.join("stats.csv"))
    }
}
