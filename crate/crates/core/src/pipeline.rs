//! Pipeline stages. Each stage reads the artifacts of earlier stages from the
//! work directory and writes its own, so runs can stop and resume anywhere.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{BackendKind, Config, KgBackend};
use crate::crawler::{Crawler, FixtureFetcher, HttpFetcher, PageSnapshot, SnapshotCache};
use crate::dataset::{
    budget_subsets, generate_examples, group_dir, split_dataset, write_group, write_manifest, BudgetSpec,
    GenerationStats, Manifest, ManifestGroup, QAExample,
};
use crate::error::{Error, Result};
use crate::extract::{
    apply_threshold, evaluate_f1, extract_all, extract_combined, ExtractionQuery, ExtractorBackend, GoldAnswers,
    PredictedAnswer, RemoteBackend, RuleBackend,
};
use crate::html::{normalize, CleanDocument};
use crate::kg::{find_incomplete, rank_properties, EntityId, KnowledgeGraph, PropertyId, Triple};
use crate::kg_live::{UreqJsonGet, WikibaseConfig, WikibaseKg};
use crate::linker::{build_training, evaluate_hit1, link, train_ranker, FeatureSpace, RankingModel, TrainingMeta};
use crate::proposals::{Evidence, FactProposal, ProposalStore, ProposedObject, SubmitReport};
use crate::util::{read_jsonl, write_atomic, write_jsonl};

/// Envelope written to `reports/{command}.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport<T> {
    pub command: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub config: Config,
    pub summary: T,
}

pub fn write_report<T: Serialize>(cfg: &Config, command: &str, started_at: DateTime<Utc>, summary: &T) -> Result<()> {
    let report = RunReport {
        command: command.to_string(),
        started_at,
        finished_at: Utc::now(),
        config: cfg.clone(),
        summary,
    };
    write_atomic(&cfg.report_path(command), serde_json::to_string_pretty(&report)?.as_bytes())
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// Read an artifact, or name the command that produces it.
pub fn read_artifact<T: DeserializeOwned>(path: &Path, producer: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::UpstreamMissing {
            path: path.to_path_buf(),
            producer: producer.to_string(),
        },
        _ => Error::io(path, e),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Integrity(format!("{}: {e}", path.display())))
}

pub fn open_kg(cfg: &Config) -> Result<KnowledgeGraph> {
    match cfg.kg.source {
        KgBackend::Fixture => {
            let path = cfg.kg.fixture.as_ref().ok_or_else(|| Error::Config("kg.fixture missing".into()))?;
            let src = crate::kg::FixtureKg::load(path).map_err(|e| match e {
                Error::Io { path, source } => Error::Config(format!("kg fixture {}: {source}", path.display())),
                e => e,
            })?;
            Ok(KnowledgeGraph::new(src, cfg.kg.languages.clone()))
        }
        KgBackend::Wikidata => {
            let wb = WikibaseConfig {
                api_url: cfg.kg.api_url.clone(),
                sparql_url: cfg.kg.sparql_url.clone(),
                languages: cfg.kg.languages.clone(),
                cache_dir: Some(cfg.kg.cache_dir.clone().unwrap_or_else(|| cfg.work_dir.join("kg-cache"))),
                ..Default::default()
            };
            let http = UreqJsonGet::new(&cfg.crawl.policy.user_agent, cfg.crawl.policy.timeout);
            Ok(KnowledgeGraph::new(WikibaseKg::new(wb, http), cfg.kg.languages.clone()))
        }
    }
}

/// The configured extractor; `budget` fills a `{budget}` placeholder in the endpoint.
pub fn make_backend(cfg: &Config, budget: Option<usize>) -> Result<Box<dyn ExtractorBackend>> {
    match cfg.extractor.backend {
        BackendKind::Rule => Ok(Box::new(RuleBackend::new(&cfg.extractor.rules)?)),
        BackendKind::Remote => {
            let mut endpoint = cfg
                .extractor
                .endpoint
                .clone()
                .ok_or_else(|| Error::Config("extractor.endpoint missing".into()))?;
            if let Some(b) = budget {
                endpoint = endpoint.replace("{budget}", &b.to_string());
            }
            Ok(Box::new(
                RemoteBackend::new(&endpoint, Duration::from_millis(cfg.extractor.timeout_ms))?
                    .with_batch_size(cfg.extractor.batch_size),
            ))
        }
    }
}

// ---------------------------------------------------------------- select

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub subject: EntityId,
    pub domain: PropertyId,
    pub id_value: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyRank {
    pub property: PropertyId,
    pub label: Option<String>,
    pub datatype: Option<String>,
    /// Sampled entities having the property.
    pub count: usize,
    /// Sampled entities lacking it.
    pub incomplete: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainSelection {
    pub domain: PropertyId,
    pub formatter_url: String,
    pub population: usize,
    pub sampled: usize,
    pub properties: Vec<PropertyRank>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub domains: Vec<DomainSelection>,
    pub targets: Vec<Target>,
}

impl Selection {
    /// Properties to work on for a domain: the configured list, or the top ranked ones.
    pub fn properties_for(&self, cfg: &Config, domain: &PropertyId) -> Vec<PropertyId> {
        if let Some(ps) = cfg.dataset.properties.get(domain) {
            return ps.clone();
        }
        self.domains
            .iter()
            .find(|d| &d.domain == domain)
            .map(|d| {
                d.properties
                    .iter()
                    .take(cfg.selection.top_properties)
                    .map(|p| p.property.clone())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn targets_of<'a>(&'a self, domain: &'a PropertyId) -> impl Iterator<Item = &'a Target> + 'a {
        self.targets.iter().filter(move |t| &t.domain == domain)
    }
}

pub fn select(cfg: &Config, kg: &KnowledgeGraph) -> Result<Selection> {
    if cfg.selection.domains.is_empty() {
        return Err(Error::Config("selection.domains is empty".into()));
    }
    let mut out = Selection::default();
    for x in &cfg.selection.domains {
        let ext = kg.external_identifier(x)?;
        let population = kg.identifier_population(x)?;
        let records = kg.sample_entities_with_identifier(&ext, cfg.selection.sample_size, cfg.selection.seed)?;
        let mut properties = Vec::new();
        for (p, count) in rank_properties(&records, cfg.selection.sort_order) {
            if &p == x {
                continue;
            }
            let Ok(info) = kg.property(&p) else { continue };
            let datatype = kg.entity(&p.as_entity()).ok().and_then(|r| r.datatype);
            if datatype.as_deref() == Some("external-id") {
                continue;
            }
            properties.push(PropertyRank {
                label: info.labels.first().cloned(),
                datatype,
                incomplete: find_incomplete(&ext, &p, &records).len(),
                property: p,
                count,
            });
        }
        for r in &records {
            let Some(v) = r.external_ids.get(x) else { continue };
            out.targets.push(Target {
                subject: r.id.clone(),
                domain: x.clone(),
                id_value: v.clone(),
                url: ext.resolve(v)?,
            });
        }
        out.domains.push(DomainSelection {
            domain: x.clone(),
            formatter_url: ext.formatter_template.clone(),
            population,
            sampled: records.len(),
            properties,
        });
    }
    write_json(&cfg.select_path(), &out)?;
    Ok(out)
}

fn load_selection(cfg: &Config) -> Result<Selection> {
    read_artifact(&cfg.select_path(), "select")
}

// ---------------------------------------------------------------- crawl

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrawlOutcome {
    Fetched,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlEntry {
    pub url: String,
    pub outcome: CrawlOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub http_status: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlSummary {
    pub fetched: usize,
    pub skipped: usize,
    pub failed: usize,
    pub entries: Vec<CrawlEntry>,
}

pub fn open_cache(cfg: &Config) -> Result<SnapshotCache> {
    SnapshotCache::open(cfg.snapshot_dir())
}

pub fn crawl(cfg: &Config) -> Result<CrawlSummary> {
    let selection = load_selection(cfg)?;
    let cache = open_cache(cfg)?;
    let crawler = match &cfg.crawl.fixture_pages {
        Some(dir) => Crawler::new(FixtureFetcher::open(dir)?, cache, cfg.crawl.policy.clone()),
        None => Crawler::new(HttpFetcher, cache, cfg.crawl.policy.clone()),
    };
    let urls: Vec<String> = selection
        .targets
        .iter()
        .map(|t| t.url.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<CrawlEntry>> = Mutex::new(Vec::with_capacity(urls.len()));
    std::thread::scope(|s| {
        for _ in 0..cfg.crawl.workers.max(1) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(url) = urls.get(i) else { break };
                let entry = match crawler.fetch_page(url) {
                    Ok(snap) => CrawlEntry {
                        url: url.clone(),
                        outcome: CrawlOutcome::Fetched,
                        http_status: Some(snap.http_status),
                        content_hash: Some(snap.content_hash),
                        message: None,
                    },
                    Err(e) => CrawlEntry {
                        url: url.clone(),
                        outcome: if matches!(e, Error::Skipped { .. }) {
                            CrawlOutcome::Skipped
                        } else {
                            CrawlOutcome::Failed
                        },
                        http_status: None,
                        content_hash: None,
                        message: Some(e.to_string()),
                    },
                };
                results.lock().unwrap().push(entry);
            });
        }
    });
    let mut entries = results.into_inner().unwrap();
    entries.sort_by(|a, b| a.url.cmp(&b.url));
    let count = |o: CrawlOutcome| entries.iter().filter(|e| e.outcome == o).count();
    let summary = CrawlSummary {
        fetched: count(CrawlOutcome::Fetched),
        skipped: count(CrawlOutcome::Skipped),
        failed: count(CrawlOutcome::Failed),
        entries,
    };
    write_json(&cfg.crawl_path(), &summary)?;
    if summary.fetched == 0 && summary.failed > 0 {
        return Err(Error::Transport(format!("all {} fetches failed", summary.failed)));
    }
    Ok(summary)
}

/// Snapshot and clean document of a successfully fetched page.
pub fn load_page(cfg: &Config, cache: &SnapshotCache, url: &str) -> Result<Option<(PageSnapshot, CleanDocument)>> {
    let Some(snap) = cache.lookup(url)? else { return Ok(None) };
    if snap.http_status != 200 {
        return Ok(None);
    }
    let doc = normalize(&snap.raw_html, &cfg.html).with_source_url(url);
    Ok(Some((snap, doc)))
}

fn require_crawl(cfg: &Config) -> Result<()> {
    read_artifact::<CrawlSummary>(&cfg.crawl_path(), "crawl").map(|_| ())
}

fn pages_of(cfg: &Config, cache: &SnapshotCache, selection: &Selection, domain: &PropertyId) -> Result<BTreeMap<EntityId, (PageSnapshot, CleanDocument)>> {
    let mut out = BTreeMap::new();
    for t in selection.targets_of(domain) {
        if let Some(page) = load_page(cfg, cache, &t.url)? {
            out.insert(t.subject.clone(), page);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- build-dataset

pub fn build_dataset(cfg: &Config, kg: &KnowledgeGraph) -> Result<Manifest> {
    let selection = load_selection(cfg)?;
    require_crawl(cfg)?;
    let spec = BudgetSpec::new(cfg.dataset.budgets.clone())?;
    if let Some(b) = spec.budgets().iter().find(|&&b| b > cfg.dataset.train_per_property) {
        return Err(Error::Config(format!(
            "budget {b} exceeds dataset.train_per_property = {}",
            cfg.dataset.train_per_property
        )));
    }
    let cache = open_cache(cfg)?;
    let mut all = Vec::new();
    let mut stats: BTreeMap<(PropertyId, PropertyId), GenerationStats> = BTreeMap::new();
    for d in &selection.domains {
        let pages = pages_of(cfg, &cache, &selection, &d.domain)?;
        let docs: BTreeMap<EntityId, CleanDocument> = pages.into_iter().map(|(k, (_, doc))| (k, doc)).collect();
        for p in selection.properties_for(cfg, &d.domain) {
            let info = kg.property(&p)?;
            let mut triples = Vec::new();
            for t in selection.targets_of(&d.domain) {
                let rec = kg.entity(&t.subject)?;
                for o in rec.claims.get(&p).into_iter().flatten() {
                    triples.push(Triple {
                        subject: t.subject.clone(),
                        property: p.clone(),
                        object: o.clone(),
                    });
                }
            }
            let g = generate_examples(kg, &d.domain, &info, &triples, &docs, cfg.dataset.question_sources);
            stats.insert((d.domain.clone(), p.clone()), g.stats);
            all.extend(g.examples);
        }
    }
    let split = split_dataset(&all, cfg.dataset.train_per_property, cfg.dataset.test_per_property, cfg.dataset.seed);
    let dir = cfg.dataset_dir();
    let mut manifest = Manifest {
        seed: cfg.dataset.seed,
        train_per_property: cfg.dataset.train_per_property,
        test_per_property: cfg.dataset.test_per_property,
        groups: Vec::new(),
    };
    let available = |key: &(PropertyId, PropertyId)| {
        all.iter()
            .filter(|e| e.domain == key.0 && e.source_triple.property == key.1)
            .count()
    };
    for (key, st) in &stats {
        let mut group = ManifestGroup {
            domain: key.0.clone(),
            property: key.1.clone(),
            stats: st.clone(),
            examples: available(key),
            train: 0,
            test: 0,
            budgets: Vec::new(),
            excluded: None,
        };
        match split.groups.get(key) {
            Some(gs) => {
                let label = format!("{}/{}", key.0, key.1);
                let subsets = budget_subsets(&label, &gs.train, &spec, cfg.dataset.seed)?;
                write_group(&dir, key, gs, &subsets)?;
                group.train = gs.train.len();
                group.test = gs.test.len();
                group.budgets = spec.budgets().to_vec();
            }
            None => {
                group.excluded = Some(
                    split
                        .excluded
                        .iter()
                        .find(|x| x.domain == key.0 && x.property == key.1)
                        .map_or_else(|| "no examples".to_string(), |x| x.reason.clone()),
                );
            }
        }
        manifest.groups.push(group);
    }
    write_manifest(&dir, &manifest)?;
    Ok(manifest)
}

fn load_manifest(cfg: &Config) -> Result<Manifest> {
    read_artifact(&cfg.dataset_dir().join("manifest.json"), "build-dataset")
}

fn test_subjects(cfg: &Config) -> Result<BTreeSet<EntityId>> {
    let Ok(manifest) = load_manifest(cfg) else { return Ok(BTreeSet::new()) };
    let mut out = BTreeSet::new();
    for g in manifest.groups.iter().filter(|g| g.excluded.is_none()) {
        let path = group_dir(&cfg.dataset_dir(), &g.domain, &g.property).join("test.jsonl");
        for e in read_jsonl::<QAExample>(&path)? {
            out.insert(e.source_triple.subject);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- extract

/// A located answer span on an incomplete entity's page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub subject: EntityId,
    pub property: PropertyId,
    pub domain: PropertyId,
    pub source_url: String,
    pub snapshot_hash: String,
    pub retrieved_at: DateTime<Utc>,
    pub question: String,
    pub clean_span: std::ops::Range<usize>,
    pub raw_byte_range: std::ops::Range<usize>,
    pub text: String,
    pub score: f64,
    pub extractor: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub queried: usize,
    pub extracted: usize,
    pub no_answer: usize,
    pub no_page: usize,
    pub not_projectable: usize,
}

pub fn extract(cfg: &Config, kg: &KnowledgeGraph) -> Result<(Vec<Extraction>, ExtractSummary)> {
    let selection = load_selection(cfg)?;
    require_crawl(cfg)?;
    let backend = make_backend(cfg, None)?;
    let cache = open_cache(cfg)?;
    let mut out = Vec::new();
    let mut summary = ExtractSummary::default();
    for d in &selection.domains {
        let pages = pages_of(cfg, &cache, &selection, &d.domain)?;
        let ext = kg.external_identifier(&d.domain)?;
        let records = selection
            .targets_of(&d.domain)
            .map(|t| kg.entity(&t.subject))
            .collect::<Result<Vec<_>>>()?;
        for p in selection.properties_for(cfg, &d.domain) {
            let info = kg.property(&p)?;
            let questions = crate::dataset::formulate_questions(&info, cfg.dataset.question_sources);
            for rec in find_incomplete(&ext, &p, &records) {
                let Some((snap, doc)) = pages.get(&rec.id) else {
                    summary.no_page += 1;
                    continue;
                };
                if doc.text.is_empty() {
                    summary.no_page += 1;
                    continue;
                }
                summary.queried += 1;
                let qid = format!("{}|{}|{}", d.domain, p, rec.id);
                let (pred, k) = extract_combined(&qid, &questions, doc, backend.as_ref(), cfg.extractor.combine)?;
                let pred = apply_threshold(pred, cfg.extractor.min_score);
                if pred.is_empty() {
                    summary.no_answer += 1;
                    continue;
                }
                let raw = match doc.project_span(&snap.raw_html, pred.range()) {
                    Ok((raw, _)) => raw,
                    Err(Error::NotProjectable(_)) => {
                        summary.not_projectable += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                summary.extracted += 1;
                out.push(Extraction {
                    subject: rec.id.clone(),
                    property: p.clone(),
                    domain: d.domain.clone(),
                    source_url: doc.source_url.clone(),
                    snapshot_hash: snap.content_hash.clone(),
                    retrieved_at: snap.fetched_at,
                    question: questions[k].clone(),
                    clean_span: pred.range(),
                    raw_byte_range: raw,
                    text: pred.text,
                    score: pred.score,
                    extractor: backend.descriptor(),
                });
            }
        }
    }
    write_jsonl(&cfg.extractions_path(), &out)?;
    Ok((out, summary))
}

// ---------------------------------------------------------------- train-linker

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkerEntry {
    pub property: PropertyId,
    pub trained: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub instances: usize,
    pub trivial: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<f64>,
    /// Hit@1 when linking each training gold's label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hit1_train: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkerIndex {
    pub models: Vec<LinkerEntry>,
}

fn item_valued_properties(cfg: &Config, kg: &KnowledgeGraph, selection: &Selection) -> Result<Vec<PropertyId>> {
    let mut out = BTreeSet::new();
    for d in &selection.domains {
        for p in selection.properties_for(cfg, &d.domain) {
            if kg.property(&p)?.is_item_valued() {
                out.insert(p);
            }
        }
    }
    Ok(out.into_iter().collect())
}

pub fn model_path(cfg: &Config, p: &PropertyId) -> std::path::PathBuf {
    cfg.model_dir().join(format!("{p}.json"))
}

pub fn train_linker(cfg: &Config, kg: &KnowledgeGraph) -> Result<LinkerIndex> {
    let selection = load_selection(cfg)?;
    let exclude = test_subjects(cfg)?;
    let mut index = LinkerIndex::default();
    for p in item_valued_properties(cfg, kg, &selection)? {
        let mut entry = LinkerEntry {
            property: p.clone(),
            trained: false,
            reason: None,
            instances: 0,
            trivial: 0,
            final_loss: None,
            hit1_train: None,
        };
        let set = match build_training(&p, kg, cfg.linker.sample_size, cfg.linker.seed, &exclude) {
            Ok(s) => s,
            Err(Error::Training(m)) => {
                entry.reason = Some(m);
                index.models.push(entry);
                continue;
            }
            Err(e) => return Err(e),
        };
        entry.instances = set.instances.len();
        entry.trivial = set.instances.iter().filter(|i| i.is_trivial()).count();
        match train_ranker(&p, &set, kg, &cfg.linker.hyper()) {
            Ok(model) => {
                let mut ranked = Vec::new();
                let mut golds = Vec::new();
                for inst in &set.instances {
                    let Some(name) = kg.entity(&inst.gold)?.label(kg.languages()).map(str::to_string) else {
                        continue;
                    };
                    ranked.push(link(&name, &model, kg)?);
                    golds.push(inst.gold.clone());
                }
                entry.hit1_train = evaluate_hit1(&ranked, &golds).ok();
                entry.final_loss = model.meta.loss_curve.last().copied();
                entry.trained = true;
                model.save(&model_path(cfg, &p))?;
            }
            Err(Error::Training(m)) => entry.reason = Some(m),
            Err(e) => return Err(e),
        }
        index.models.push(entry);
    }
    write_json(&cfg.model_dir().join("index.json"), &index)?;
    Ok(index)
}

/// The trained model for `p`, or a zero model (id order) when `train-linker` found nothing to learn.
pub fn load_model(cfg: &Config, p: &PropertyId) -> Result<RankingModel> {
    let index: LinkerIndex = read_artifact(&cfg.model_dir().join("index.json"), "train-linker")?;
    match index.models.iter().find(|m| &m.property == p) {
        Some(m) if m.trained => RankingModel::load(&model_path(cfg, p)),
        Some(_) => Ok(RankingModel {
            property: p.clone(),
            space: FeatureSpace::default(),
            weights: Vec::new(),
            bias: 0.0,
            meta: TrainingMeta {
                hyper: cfg.linker.hyper(),
                iterations: 0,
                pairs: 0,
                trivial_instances: 0,
                loss_curve: Vec::new(),
            },
        }),
        None => Err(Error::UpstreamMissing {
            path: model_path(cfg, p),
            producer: "train-linker".into(),
        }),
    }
}

// ---------------------------------------------------------------- link

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSummary {
    pub extractions: usize,
    pub linked: usize,
    pub unlinked: usize,
    pub literal: usize,
    pub submit: SubmitReport,
}

pub fn open_store(cfg: &Config) -> Result<ProposalStore> {
    Ok(ProposalStore::open(cfg.store_dir())?.with_snapshot_every(cfg.proposals.snapshot_every))
}

/// Turn extractions into proposals and submit them to the store.
pub fn link_extractions(cfg: &Config, kg: &KnowledgeGraph) -> Result<LinkSummary> {
    let path = cfg.extractions_path();
    if !path.exists() {
        return Err(Error::UpstreamMissing {
            path,
            producer: "extract".into(),
        });
    }
    let extractions: Vec<Extraction> = read_jsonl(&path)?;
    let mut models: BTreeMap<PropertyId, RankingModel> = BTreeMap::new();
    let mut summary = LinkSummary {
        extractions: extractions.len(),
        ..Default::default()
    };
    let mut proposals = Vec::new();
    for x in &extractions {
        let info = kg.property(&x.property)?;
        let (object, linking_score) = if info.is_item_valued() {
            if !models.contains_key(&x.property) {
                models.insert(x.property.clone(), load_model(cfg, &x.property)?);
            }
            let ranked = link(&x.text, &models[&x.property], kg)?;
            match ranked.first() {
                Some((id, score)) => {
                    summary.linked += 1;
                    (ProposedObject::Entity { id: id.clone() }, Some(*score))
                }
                None => {
                    summary.unlinked += 1;
                    (ProposedObject::Unlinked { text: x.text.clone() }, None)
                }
            }
        } else {
            summary.literal += 1;
            let value = ProposedObject::Literal {
                value: x.text.clone(),
                datatype: info_datatype(kg, &x.property),
            };
            (value, None)
        };
        proposals.push(FactProposal::pending(
            x.subject.clone(),
            x.property.clone(),
            x.domain.clone(),
            object,
            Evidence {
                source_url: x.source_url.clone(),
                raw_byte_range: x.raw_byte_range.clone(),
                clean_span: x.clean_span.clone(),
                text: x.text.clone(),
                snapshot_hash: x.snapshot_hash.clone(),
                retrieved_at: x.retrieved_at,
            },
            x.score,
            linking_score,
        ));
    }
    let mut store = open_store(cfg)?;
    summary.submit = store.submit(proposals)?;
    Ok(summary)
}

fn info_datatype(kg: &KnowledgeGraph, p: &PropertyId) -> Option<String> {
    kg.entity(&p.as_entity()).ok().and_then(|r| r.datatype)
}

// ---------------------------------------------------------------- experiment

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetResult {
    pub domain: PropertyId,
    pub property: PropertyId,
    pub budget: usize,
    pub f1: f64,
    pub exact_match: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PretrainSplit {
    pub pretrain: Vec<PropertyId>,
    pub holdout: Vec<PropertyId>,
    pub pretrain_files: Vec<String>,
    pub holdout_files: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub results: Vec<BudgetResult>,
    /// Mean F1 over groups, per budget.
    pub mean_f1: BTreeMap<usize, f64>,
    pub pretrain_split: PretrainSplit,
}

/// Score the backend on every test set, once per budget.
pub fn experiment(cfg: &Config, budgets: Option<Vec<usize>>) -> Result<ExperimentSummary> {
    let manifest = load_manifest(cfg)?;
    let budgets = BudgetSpec::new(budgets.unwrap_or_else(|| cfg.dataset.budgets.clone()))?;
    let groups: Vec<&ManifestGroup> = manifest.groups.iter().filter(|g| g.excluded.is_none()).collect();
    if groups.is_empty() {
        return Err(Error::Precondition(
            "no (domain, property) group has enough examples; see dataset manifest".into(),
        ));
    }
    let mut summary = ExperimentSummary::default();
    for &budget in budgets.budgets() {
        let backend = make_backend(cfg, Some(budget))?;
        let mut f1s = Vec::new();
        for g in &groups {
            let path = group_dir(&cfg.dataset_dir(), &g.domain, &g.property).join("test.jsonl");
            let test: Vec<QAExample> = read_jsonl(&path)?;
            let queries = test
                .iter()
                .map(|e| {
                    ExtractionQuery::new(
                        e.id.clone(),
                        e.question.clone(),
                        CleanDocument::from_clean_text(&e.context, &cfg.html),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let preds = extract_all(&queries, backend.as_ref(), cfg.extractor.batch_size)?;
            let predicted: Vec<PredictedAnswer> = preds
                .into_iter()
                .map(|p| apply_threshold(p, cfg.extractor.min_score))
                .map(|p| PredictedAnswer { id: p.query_id, text: p.text })
                .collect();
            let gold: Vec<GoldAnswers> = test.iter().map(GoldAnswers::from).collect();
            let r = evaluate_f1(&predicted, &gold)?;
            f1s.push(r.f1);
            summary.results.push(BudgetResult {
                domain: g.domain.clone(),
                property: g.property.clone(),
                budget,
                f1: r.f1,
                exact_match: r.exact_match,
                count: r.count,
            });
        }
        summary.mean_f1.insert(budget, f1s.iter().sum::<f64>() / f1s.len() as f64);
    }
    summary.pretrain_split = pretrain_split(cfg, &manifest);
    let dir = cfg.experiment_dir();
    write_json(&dir.join("results.json"), &summary)?;
    write_json(&dir.join("pretrain_split.json"), &summary.pretrain_split)?;
    Ok(summary)
}

/// Seeded domain partition for pretraining versus held-out evaluation.
pub fn pretrain_split(cfg: &Config, manifest: &Manifest) -> PretrainSplit {
    let mut domains: Vec<PropertyId> = manifest
        .groups
        .iter()
        .filter(|g| g.excluded.is_none())
        .map(|g| g.domain.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    domains.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.experiment.seed));
    let n_pre = ((domains.len() as f64) * cfg.experiment.pretrain_fraction).round() as usize;
    let n_pre = n_pre.min(domains.len());
    let mut pretrain = domains[..n_pre].to_vec();
    let mut holdout = domains[n_pre..].to_vec();
    pretrain.sort();
    holdout.sort();
    let files = |ds: &[PropertyId], name: &str| -> Vec<String> {
        manifest
            .groups
            .iter()
            .filter(|g| g.excluded.is_none() && ds.contains(&g.domain))
            .map(|g| format!("{}/{}/{name}", g.domain, g.property))
            .collect()
    };
    PretrainSplit {
        pretrain_files: files(&pretrain, "train.jsonl"),
        holdout_files: files(&holdout, "test.jsonl"),
        pretrain,
        holdout,
    }
}
