//! Question + context → answer span, and the token-level F1 harness.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Range;
use std::sync::LazyLock;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::dataset::QAExample;
use crate::error::{Error, Result};
use crate::html::CleanDocument;

/// Batch size used when talking to a remote model.
pub const DEFAULT_BATCH_SIZE: usize = 48;

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionQuery {
    pub query_id: String,
    pub question: String,
    pub context: CleanDocument,
}

impl ExtractionQuery {
    pub fn new(query_id: impl Into<String>, question: impl Into<String>, context: CleanDocument) -> Result<Self> {
        let q = Self {
            query_id: query_id.into(),
            question: question.into(),
            context,
        };
        q.check()?;
        Ok(q)
    }

    fn check(&self) -> Result<()> {
        if self.question.trim().is_empty() {
            return Err(Error::Precondition(format!("query {}: empty question", self.query_id)));
        }
        if self.context.text.is_empty() {
            return Err(Error::Precondition(format!("query {}: empty context", self.query_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanPrediction {
    pub query_id: String,
    /// Character offsets into the clean text.
    pub clean_start: usize,
    pub clean_end: usize,
    pub text: String,
    pub score: f64,
}

impl SpanPrediction {
    pub fn empty(query_id: impl Into<String>) -> Self {
        Self {
            query_id: query_id.into(),
            clean_start: 0,
            clean_end: 0,
            text: String::new(),
            score: 0.0,
        }
    }

    pub fn range(&self) -> Range<usize> {
        self.clean_start..self.clean_end
    }

    pub fn is_empty(&self) -> bool {
        self.clean_start == self.clean_end
    }

    /// Offsets, text and score must be consistent with `context`.
    pub fn validate(&self, context: &str) -> Result<()> {
        let bad = |m: String| Err(Error::Protocol(format!("prediction for {}: {m}", self.query_id)));
        if !(0.0..=1.0).contains(&self.score) {
            return bad(format!("score {} outside [0,1]", self.score));
        }
        if self.clean_start > self.clean_end {
            return bad(format!("start {} > end {}", self.clean_start, self.clean_end));
        }
        let len = context.chars().count();
        if self.clean_end > len {
            return bad(format!("end {} beyond context of {len} chars", self.clean_end));
        }
        let sub: String = context
            .chars()
            .skip(self.clean_start)
            .take(self.clean_end - self.clean_start)
            .collect();
        if sub != self.text {
            return bad(format!("text {:?} != context substring {sub:?}", self.text));
        }
        Ok(())
    }
}

pub trait ExtractorBackend: Send + Sync {
    /// Name and version, recorded with every proposal.
    fn descriptor(&self) -> String;

    /// One prediction per query, in input order.
    fn extract_batch(&self, queries: &[ExtractionQuery]) -> Result<Vec<SpanPrediction>>;
}

fn checked(queries: &[ExtractionQuery], preds: Vec<SpanPrediction>) -> Result<Vec<SpanPrediction>> {
    if preds.len() != queries.len() {
        return Err(Error::Protocol(format!(
            "{} predictions for {} queries",
            preds.len(),
            queries.len()
        )));
    }
    for (q, p) in queries.iter().zip(&preds) {
        if p.query_id != q.query_id {
            return Err(Error::Protocol(format!(
                "prediction for {} where {} was expected",
                p.query_id, q.query_id
            )));
        }
        p.validate(&q.context.text)?;
    }
    Ok(preds)
}

pub fn extract(query: &ExtractionQuery, backend: &dyn ExtractorBackend) -> Result<SpanPrediction> {
    query.check()?;
    let mut preds = checked(std::slice::from_ref(query), backend.extract_batch(std::slice::from_ref(query))?)?;
    Ok(preds.remove(0))
}

/// Runs all queries in chunks of `batch_size`.
pub fn extract_all(
    queries: &[ExtractionQuery],
    backend: &dyn ExtractorBackend,
    batch_size: usize,
) -> Result<Vec<SpanPrediction>> {
    queries.iter().try_for_each(ExtractionQuery::check)?;
    let mut out = Vec::with_capacity(queries.len());
    for chunk in queries.chunks(batch_size.max(1)) {
        out.extend(checked(chunk, backend.extract_batch(chunk)?)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionCombination {
    /// Ask every formulation, keep the highest score (earliest question on ties).
    #[default]
    BestScore,
    FirstQuestion,
}

/// Best span over several formulations of the same question.
///
/// Returns the winning prediction (with `query_id`) and the index of its question.
pub fn extract_combined(
    query_id: &str,
    questions: &[String],
    context: &CleanDocument,
    backend: &dyn ExtractorBackend,
    combine: QuestionCombination,
) -> Result<(SpanPrediction, usize)> {
    let questions = match combine {
        QuestionCombination::BestScore => questions,
        QuestionCombination::FirstQuestion => &questions[..questions.len().min(1)],
    };
    if questions.is_empty() {
        return Err(Error::Precondition(format!("query {query_id}: no questions")));
    }
    let queries = questions
        .iter()
        .enumerate()
        .map(|(k, q)| ExtractionQuery::new(format!("{query_id}#{k}"), q.clone(), context.clone()))
        .collect::<Result<Vec<_>>>()?;
    let preds = extract_all(&queries, backend, DEFAULT_BATCH_SIZE)?;
    let (k, mut best) = preds
        .into_iter()
        .enumerate()
        .reduce(|a, b| if b.1.score > a.1.score { b } else { a })
        .expect("non-empty");
    best.query_id = query_id.to_string();
    Ok((best, k))
}

/// A prediction below the threshold counts as no answer.
pub fn apply_threshold(p: SpanPrediction, min_score: f64) -> SpanPrediction {
    if p.score < min_score {
        SpanPrediction::empty(p.query_id)
    } else {
        p
    }
}

// ---------------------------------------------------------------- rule backend

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RulePattern {
    /// Case-insensitive substring of the question.
    pub question: String,
    /// Applied to the visible text; group 1 is the answer if present.
    pub regex: String,
}

/// Deterministic regex extractor for tests and model-free runs.
#[derive(Debug, Clone)]
pub struct RuleBackend {
    patterns: Vec<(String, Regex)>,
}

impl RuleBackend {
    pub fn new(patterns: &[RulePattern]) -> Result<Self> {
        let patterns = patterns
            .iter()
            .map(|p| {
                let re = RegexBuilder::new(&p.regex)
                    .build()
                    .map_err(|e| Error::Config(format!("rule pattern {:?}: {e}", p.regex)))?;
                Ok((p.question.to_lowercase(), re))
            })
            .collect::<Result<_>>()?;
        Ok(Self { patterns })
    }

    fn extract_one(&self, q: &ExtractionQuery) -> SpanPrediction {
        let question = q.question.to_lowercase();
        let Some((_, re)) = self.patterns.iter().find(|(s, _)| question.contains(s.as_str())) else {
            return SpanPrediction::empty(&q.query_id);
        };
        let doc = &q.context;
        let mask = doc.visible_mask();
        // markup tokens become spaces so offsets stay aligned with the clean text
        let view: String = doc
            .text
            .chars()
            .zip(mask.iter().chain(std::iter::repeat(&false)))
            .map(|(c, &vis)| if vis { c } else { ' ' })
            .collect();
        let Some(caps) = re.captures(&view) else {
            return SpanPrediction::empty(&q.query_id);
        };
        let m = caps.get(1).or_else(|| caps.get(0)).expect("group 0");
        let to_char = |b: usize| view[..b].chars().count();
        let (s, e) = (to_char(m.start()), to_char(m.end()));
        // keep to the first visible run touched by the match
        let runs = doc.text_runs();
        let Some(run) = runs.iter().find(|r| r.start < e && r.end > s) else {
            return SpanPrediction::empty(&q.query_id);
        };
        let (mut s, mut e) = (s.max(run.start), e.min(run.end));
        let chars: Vec<char> = doc.text.chars().collect();
        while s < e && chars[s].is_whitespace() {
            s += 1;
        }
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if s == e {
            return SpanPrediction::empty(&q.query_id);
        }
        SpanPrediction {
            query_id: q.query_id.clone(),
            clean_start: s,
            clean_end: e,
            text: chars[s..e].iter().collect(),
            score: 1.0,
        }
    }
}

impl ExtractorBackend for RuleBackend {
    fn descriptor(&self) -> String {
        format!("rule/{}", env!("CARGO_PKG_VERSION"))
    }

    fn extract_batch(&self, queries: &[ExtractionQuery]) -> Result<Vec<SpanPrediction>> {
        Ok(queries.iter().map(|q| self.extract_one(q)).collect())
    }
}

// ---------------------------------------------------------------- wire protocol

/// JSON bodies of `POST /extract`.
pub mod wire {
    use serde::{Deserialize, Serialize};

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct Query {
        pub id: String,
        pub question: String,
        pub context: String,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct Request {
        pub queries: Vec<Query>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct Prediction {
        pub id: String,
        pub start: usize,
        pub end: usize,
        pub text: String,
        pub score: f64,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct Response {
        pub predictions: Vec<Prediction>,
    }
}

impl From<&ExtractionQuery> for wire::Query {
    fn from(q: &ExtractionQuery) -> Self {
        Self {
            id: q.query_id.clone(),
            question: q.question.clone(),
            context: q.context.text.clone(),
        }
    }
}

/// Match a reply to its request: every id exactly once, returned in request order.
pub fn decode_reply(queries: &[ExtractionQuery], reply: wire::Response) -> Result<Vec<SpanPrediction>> {
    let mut by_id: HashMap<String, wire::Prediction> = HashMap::new();
    for p in reply.predictions {
        let id = p.id.clone();
        if by_id.insert(id.clone(), p).is_some() {
            return Err(Error::Protocol(format!("duplicate prediction id {id}")));
        }
    }
    let mut out = Vec::with_capacity(queries.len());
    for q in queries {
        let p = by_id
            .remove(&q.query_id)
            .ok_or_else(|| Error::Protocol(format!("no prediction for {}", q.query_id)))?;
        let pred = SpanPrediction {
            query_id: p.id,
            clean_start: p.start,
            clean_end: p.end,
            text: p.text,
            score: p.score,
        };
        pred.validate(&q.context.text)?;
        out.push(pred);
    }
    if let Some(extra) = by_id.keys().next() {
        return Err(Error::Protocol(format!("prediction for unknown id {extra}")));
    }
    Ok(out)
}

#[cfg(feature = "net")]
pub use remote::RemoteBackend;

#[cfg(feature = "net")]
mod remote {
    use std::time::Duration;

    use super::*;

    /// Client for a model served behind `POST {endpoint}/extract`.
    #[derive(Debug, Clone)]
    pub struct RemoteBackend {
        endpoint: String,
        batch_size: usize,
        agent: ureq::Agent,
    }

    impl RemoteBackend {
        pub fn new(endpoint: &str, timeout: Duration) -> Result<Self> {
            let parsed = url::Url::parse(endpoint)
                .map_err(|e| Error::Config(format!("extractor endpoint {endpoint:?}: {e}")))?;
            if !matches!(parsed.scheme(), "http" | "https") {
                return Err(Error::Config(format!("extractor endpoint {endpoint:?}: not http(s)")));
            }
            let agent = ureq::Agent::config_builder()
                .timeout_global(Some(timeout))
                .http_status_as_error(false)
                .build()
                .into();
            Ok(Self {
                endpoint: endpoint.trim_end_matches('/').to_string(),
                batch_size: DEFAULT_BATCH_SIZE,
                agent,
            })
        }

        pub fn with_batch_size(mut self, n: usize) -> Self {
            self.batch_size = n.max(1);
            self
        }

        fn call(&self, chunk: &[ExtractionQuery]) -> Result<Vec<SpanPrediction>> {
            let first = chunk.first().map(|q| q.query_id.clone()).unwrap_or_default();
            let fail = |message: String| Error::Extraction {
                query_id: first.clone(),
                message,
            };
            let body = wire::Request {
                queries: chunk.iter().map(wire::Query::from).collect(),
            };
            let url = format!("{}/extract", self.endpoint);
            let mut resp = self
                .agent
                .post(&url)
                .send_json(&body)
                .map_err(|e| fail(format!("POST {url}: {e}")))?;
            let status = resp.status().as_u16();
            let text = resp
                .body_mut()
                .read_to_string()
                .map_err(|e| fail(format!("reading reply: {e}")))?;
            if status != 200 {
                return Err(fail(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>())));
            }
            let reply: wire::Response = serde_json::from_str(&text)
                .map_err(|e| Error::Protocol(format!("reply from {url}: {e}")))?;
            decode_reply(chunk, reply)
        }
    }

    impl ExtractorBackend for RemoteBackend {
        fn descriptor(&self) -> String {
            format!("remote:{}", self.endpoint)
        }

        fn extract_batch(&self, queries: &[ExtractionQuery]) -> Result<Vec<SpanPrediction>> {
            let mut out = Vec::with_capacity(queries.len());
            for chunk in queries.chunks(self.batch_size) {
                out.extend(self.call(chunk)?);
            }
            Ok(out)
        }
    }
}

// ---------------------------------------------------------------- F1

static ARTICLES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(a|an|the)\b").expect("static regex"));

/// Lowercase, drop ASCII punctuation and English articles, collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lower = s.to_lowercase();
    let no_punct: String = lower.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let no_articles = ARTICLES.replace_all(&no_punct, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn answer_tokens(s: &str) -> Vec<String> {
    normalize_answer(s).split_whitespace().map(str::to_string).collect()
}

/// Token F1 in [0,1]. Two empty answers agree.
pub fn f1_pair(pred: &str, gold: &str) -> f64 {
    let p = answer_tokens(pred);
    let g = answer_tokens(gold);
    if p.is_empty() || g.is_empty() {
        return f64::from(u8::from(p == g));
    }
    let mut counts: HashMap<&str, isize> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    2.0 * overlap as f64 / (p.len() + g.len()) as f64
}

/// Best F1 over the gold alternatives; no alternatives means "no answer".
pub fn f1_max(pred: &str, golds: &[String]) -> f64 {
    if golds.is_empty() {
        return f1_pair(pred, "");
    }
    golds.iter().map(|g| f1_pair(pred, g)).fold(0.0, f64::max)
}

pub fn exact_match(pred: &str, golds: &[String]) -> bool {
    let p = normalize_answer(pred);
    if golds.is_empty() {
        return p.is_empty();
    }
    golds.iter().any(|g| normalize_answer(g) == p)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedAnswer {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnswers {
    pub id: String,
    pub answers: Vec<String>,
}

impl From<&QAExample> for GoldAnswers {
    fn from(e: &QAExample) -> Self {
        let mut seen = BTreeSet::new();
        Self {
            id: e.id.clone(),
            answers: e
                .answers
                .iter()
                .filter(|a| seen.insert(a.text.clone()))
                .map(|a| a.text.clone())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    /// Mean F1 × 100.
    pub f1: f64,
    pub exact_match: f64,
    pub count: usize,
}

/// Mean token F1 (×100) of `predictions` against `gold`, matched by id.
pub fn evaluate_f1(predictions: &[PredictedAnswer], gold: &[GoldAnswers]) -> Result<F1Report> {
    let mut preds: BTreeMap<&str, &str> = BTreeMap::new();
    let mut dup = Vec::new();
    for p in predictions {
        if preds.insert(&p.id, &p.text).is_some() {
            dup.push(p.id.as_str());
        }
    }
    let gold_ids: BTreeSet<&str> = gold.iter().map(|g| g.id.as_str()).collect();
    let missing: Vec<&str> = gold_ids.iter().filter(|id| !preds.contains_key(*id)).copied().collect();
    let extra: Vec<&str> = preds.keys().filter(|id| !gold_ids.contains(*id)).copied().collect();
    if !missing.is_empty() || !extra.is_empty() || !dup.is_empty() || gold_ids.len() != gold.len() {
        return Err(Error::Evaluation(format!(
            "prediction ids do not cover gold ids: missing {missing:?}, extra {extra:?}, duplicate {dup:?}"
        )));
    }
    if gold.is_empty() {
        return Err(Error::Evaluation("no gold examples".into()));
    }
    let (mut f1, mut em) = (0.0, 0.0);
    for g in gold {
        let p = preds[g.id.as_str()];
        f1 += f1_max(p, &g.answers);
        em += f64::from(u8::from(exact_match(p, &g.answers)));
    }
    let n = gold.len() as f64;
    Ok(F1Report {
        f1: 100.0 * f1 / n,
        exact_match: 100.0 * em / n,
        count: gold.len(),
    })
}
