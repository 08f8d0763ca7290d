//! Distant-supervision QA data from known triples and crawled pages.
//!
//! For a known triple `(s, p, o)` and the page of `s`, the page text is
//! searched for the names of `o`; each hit becomes a gold answer span for the
//! questions formulated from the names of `p`.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::RegexBuilder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::html::CleanDocument;
use crate::kg::{EntityId, KnowledgeGraph, ObjectValue, PropertyId, PropertyInfo, Triple};
use crate::util::{stable_id, write_atomic, write_jsonl};

/// Training-set sizes per property evaluated in the few-shot experiments.
pub const BUDGET_GRID: [usize; 9] = [0, 8, 16, 32, 64, 128, 256, 384, 500];

pub const DEFAULT_TRAIN_PER_PROPERTY: usize = 500;
pub const DEFAULT_TEST_PER_PROPERTY: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSpan {
    /// Character offsets into the context.
    pub start: usize,
    pub end: usize,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAExample {
    pub id: String,
    pub question: String,
    /// Clean text of the page.
    pub context: String,
    pub context_url: String,
    pub context_hash: String,
    pub answers: Vec<AnswerSpan>,
    pub source_triple: Triple,
    /// External-identifier property of the page's domain.
    pub domain: PropertyId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl QAExample {
    /// Every answer's text must equal its context substring.
    pub fn check(&self) -> Result<()> {
        if !self.question.ends_with(" ?") {
            return Err(Error::Precondition(format!("{}: question must end with \" ?\"", self.id)));
        }
        let chars: Vec<char> = self.context.chars().collect();
        for a in &self.answers {
            if a.start > a.end || a.end > chars.len() {
                return Err(Error::Precondition(format!("{}: answer out of range", self.id)));
            }
            let s: String = chars[a.start..a.end].iter().collect();
            if s != a.text {
                return Err(Error::Precondition(format!(
                    "{}: answer {:?} != context {:?}",
                    self.id, a.text, s
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuestionSources {
    #[serde(rename = "labels")]
    Labels,
    #[default]
    #[serde(rename = "labels+aliases")]
    LabelsAndAliases,
}

/// One question per semantic name: `"<name> ?"`, labels first, then aliases.
pub fn formulate_questions(p: &PropertyInfo, sources: QuestionSources) -> Vec<String> {
    let names = p.labels.iter().chain(match sources {
        QuestionSources::Labels => [].iter(),
        QuestionSources::LabelsAndAliases => p.aliases.iter(),
    });
    let mut seen = BTreeSet::new();
    names
        .map(|n| n.trim())
        .filter(|n| !n.is_empty())
        .filter(|n| seen.insert(n.to_string()))
        .map(|n| format!("{n} ?"))
        .collect()
}

fn char_index(text: &str) -> Vec<usize> {
    // byte offset of each char plus the end
    text.char_indices().map(|(b, _)| b).chain([text.len()]).collect()
}

/// Case-insensitive, word-bounded occurrences of `name` inside visible text, as char ranges.
pub fn find_mentions(doc: &CleanDocument, name: &str) -> Vec<Range<usize>> {
    let name = name.trim();
    if name.is_empty() {
        return Vec::new();
    }
    let Ok(re) = RegexBuilder::new(&regex::escape(name))
        .case_insensitive(true)
        .build()
    else {
        return Vec::new();
    };
    let text = &doc.text;
    let idx = char_index(text);
    let to_char = |b: usize| idx.binary_search(&b).expect("match on char boundary");
    let runs = doc.text_runs();
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(m) = re.find_at(text, from) {
        let before = text[..m.start()].chars().next_back();
        let after = text[m.end()..].chars().next();
        let bounded = !before.is_some_and(char::is_alphanumeric)
            && !after.is_some_and(char::is_alphanumeric);
        let r = to_char(m.start())..to_char(m.end());
        if bounded && runs.iter().any(|run| run.start <= r.start && r.end <= run.end) {
            out.push(r);
            from = m.end();
        } else {
            // retry one character later so overlapping candidates are not lost
            from = m.start() + text[m.start()..].chars().next().map_or(1, char::len_utf8);
        }
        if from > text.len() {
            break;
        }
    }
    out
}

/// Mentions of the longest name that occurs at all (ties: lexicographically first).
pub fn best_mentions(doc: &CleanDocument, names: &BTreeSet<String>) -> Vec<AnswerSpan> {
    let mut best: Option<(usize, &String, Vec<Range<usize>>)> = None;
    for n in names {
        let hits = find_mentions(doc, n);
        if hits.is_empty() {
            continue;
        }
        let len = n.trim().chars().count();
        if best.as_ref().is_none_or(|(l, _, _)| len > *l) {
            best = Some((len, n, hits));
        }
    }
    best.map(|(_, _, hits)| {
        hits.into_iter()
            .map(|r| AnswerSpan {
                text: doc.slice(r.clone()).to_string(),
                start: r.start,
                end: r.end,
            })
            .collect()
    })
    .unwrap_or_default()
}

/// Names to search for an object: labels and aliases, or the literal itself.
pub fn object_names(kg: &KnowledgeGraph, o: &ObjectValue) -> Result<BTreeSet<String>> {
    match o {
        ObjectValue::Entity(e) => kg.fetch_labels_aliases(e),
        ObjectValue::Literal(s) => Ok(BTreeSet::from([s.clone()])),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub triples: usize,
    pub matched: usize,
    pub dropped_no_mention: usize,
    pub dropped_missing_snapshot: usize,
    pub dropped_unknown_object: usize,
    pub duplicates: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Generated {
    pub examples: Vec<QAExample>,
    pub stats: GenerationStats,
}

/// Build QA examples for property `p` on domain `x`.
///
/// `pages` maps each subject to its normalized page. Output is sorted by id.
pub fn generate_examples(
    kg: &KnowledgeGraph,
    domain: &PropertyId,
    p: &PropertyInfo,
    triples: &[Triple],
    pages: &BTreeMap<EntityId, CleanDocument>,
    sources: QuestionSources,
) -> Generated {
    let questions = formulate_questions(p, sources);
    let mut out = Generated::default();
    let mut seen = BTreeSet::new();
    for t in triples.iter().filter(|t| t.property == p.id) {
        out.stats.triples += 1;
        let Some(doc) = pages.get(&t.subject) else {
            out.stats.dropped_missing_snapshot += 1;
            continue;
        };
        if !seen.insert((t.subject.clone(), t.object.clone(), doc.source_url.clone())) {
            out.stats.duplicates += 1;
            continue;
        }
        let Ok(names) = object_names(kg, &t.object) else {
            out.stats.dropped_unknown_object += 1;
            continue;
        };
        let answers = best_mentions(doc, &names);
        if answers.is_empty() {
            out.stats.dropped_no_mention += 1;
            continue;
        }
        out.stats.matched += 1;
        for q in &questions {
            out.examples.push(QAExample {
                id: stable_id(&[
                    doc.source_url.as_str(),
                    t.property.as_str(),
                    t.object.as_str(),
                    q.as_str(),
                ]),
                question: q.clone(),
                context: doc.text.clone(),
                context_url: doc.source_url.clone(),
                context_hash: doc.source_hash.clone(),
                answers: answers.clone(),
                source_triple: t.clone(),
                domain: domain.clone(),
                split: None,
            });
        }
    }
    out.examples.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

pub type GroupKey = (PropertyId, PropertyId);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupSplit {
    pub train: Vec<QAExample>,
    pub test: Vec<QAExample>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub domain: PropertyId,
    pub property: PropertyId,
    pub available: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetSplit {
    pub groups: BTreeMap<GroupKey, GroupSplit>,
    pub excluded: Vec<Exclusion>,
}

fn group_seed(seed: u64, key: &GroupKey) -> u64 {
    let h = stable_id(&[key.0.as_str(), key.1.as_str(), &seed.to_string()]);
    u64::from_str_radix(&h, 16).expect("hex id")
}

/// Per (domain, property): disjoint train/test sets of exactly the requested sizes.
///
/// Examples sharing a page URL always land on the same side. Groups that cannot
/// fill both sides are excluded.
pub fn split_dataset(examples: &[QAExample], train_n: usize, test_n: usize, seed: u64) -> DatasetSplit {
    let mut groups: BTreeMap<GroupKey, BTreeMap<&str, Vec<&QAExample>>> = BTreeMap::new();
    for e in examples {
        groups
            .entry((e.domain.clone(), e.source_triple.property.clone()))
            .or_default()
            .entry(e.context_url.as_str())
            .or_default()
            .push(e);
    }
    let mut out = DatasetSplit::default();
    for (key, by_url) in groups {
        let available: usize = by_url.values().map(Vec::len).sum();
        let exclude = |reason: String| Exclusion {
            domain: key.0.clone(),
            property: key.1.clone(),
            available,
            reason,
        };
        if available < train_n + test_n {
            out.excluded.push(exclude(format!("{available} < {} examples", train_n + test_n)));
            continue;
        }
        let mut urls: Vec<Vec<&QAExample>> = by_url
            .into_values()
            .map(|mut v| {
                v.sort_by(|a, b| a.id.cmp(&b.id));
                v
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(group_seed(seed, &key));
        urls.shuffle(&mut rng);
        let mut split = GroupSplit::default();
        for batch in urls {
            let (side, want, tag) = if split.train.len() < train_n {
                (&mut split.train, train_n, Split::Train)
            } else if split.test.len() < test_n {
                (&mut split.test, test_n, Split::Test)
            } else {
                break;
            };
            for e in batch.into_iter().take(want - side.len()) {
                let mut e = e.clone();
                e.split = Some(tag);
                side.push(e);
            }
        }
        if split.train.len() == train_n && split.test.len() == test_n {
            out.groups.insert(key, split);
        } else {
            out.excluded.push(exclude("page grouping left too few examples".into()));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetSpec {
    budgets: Vec<usize>,
}

impl BudgetSpec {
    pub fn new(budgets: Vec<usize>) -> Result<Self> {
        if budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("budgets {budgets:?} must be strictly ascending")));
        }
        if let Some(b) = budgets.iter().find(|b| !BUDGET_GRID.contains(b)) {
            return Err(Error::Config(format!("budget {b} is not in {BUDGET_GRID:?}")));
        }
        Ok(Self { budgets })
    }

    pub fn full_grid() -> Self {
        Self {
            budgets: BUDGET_GRID.to_vec(),
        }
    }

    pub fn budgets(&self) -> &[usize] {
        &self.budgets
    }
}

/// Nested training subsets, one per budget: each is a prefix of one seeded shuffle.
pub fn budget_subsets(
    group: &str,
    train: &[QAExample],
    spec: &BudgetSpec,
    seed: u64,
) -> Result<BTreeMap<usize, Vec<QAExample>>> {
    if let Some(b) = spec.budgets.iter().find(|&&b| b > train.len()) {
        return Err(Error::Precondition(format!(
            "group {group}: budget {b} exceeds {} training examples",
            train.len()
        )));
    }
    let mut order: Vec<&QAExample> = train.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(spec
        .budgets
        .iter()
        .map(|&b| (b, order[..b].iter().map(|e| (*e).clone()).collect()))
        .collect())
}

// ---------------------------------------------------------------- exports

#[derive(Debug, Serialize)]
struct SquadAnswer<'a> {
    text: &'a str,
    answer_start: usize,
}

#[derive(Debug, Serialize)]
struct SquadQa<'a> {
    id: &'a str,
    question: &'a str,
    answers: Vec<SquadAnswer<'a>>,
}

#[derive(Debug, Serialize)]
struct SquadParagraph<'a> {
    context: &'a str,
    qas: Vec<SquadQa<'a>>,
}

#[derive(Debug, Serialize)]
struct SquadArticle<'a> {
    title: &'a str,
    paragraphs: Vec<SquadParagraph<'a>>,
}

/// SQuAD v1.1-shaped JSON: one article per page, answer offsets in characters.
pub fn to_squad(examples: &[QAExample]) -> serde_json::Value {
    let mut by_url: BTreeMap<&str, Vec<&QAExample>> = BTreeMap::new();
    for e in examples {
        by_url.entry(&e.context_url).or_default().push(e);
    }
    let data: Vec<SquadArticle> = by_url
        .into_iter()
        .map(|(url, es)| SquadArticle {
            title: url,
            paragraphs: vec![SquadParagraph {
                context: &es[0].context,
                qas: es
                    .iter()
                    .map(|e| SquadQa {
                        id: &e.id,
                        question: &e.question,
                        answers: e
                            .answers
                            .iter()
                            .map(|a| SquadAnswer {
                                text: &a.text,
                                answer_start: a.start,
                            })
                            .collect(),
                    })
                    .collect(),
            }],
        })
        .collect();
    serde_json::json!({ "version": "1.1", "data": data })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestGroup {
    pub domain: PropertyId,
    pub property: PropertyId,
    pub stats: GenerationStats,
    pub examples: usize,
    pub train: usize,
    pub test: usize,
    pub budgets: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub train_per_property: usize,
    pub test_per_property: usize,
    pub groups: Vec<ManifestGroup>,
}

/// `{dir}/{domain}/{property}/` directory of a group.
pub fn group_dir(dir: &Path, domain: &PropertyId, property: &PropertyId) -> std::path::PathBuf {
    dir.join(domain.as_str()).join(property.as_str())
}

/// Write `train.jsonl`, `test.jsonl`, `budget_{K}.jsonl` and SQuAD exports of one group.
pub fn write_group(
    dir: &Path,
    key: &GroupKey,
    split: &GroupSplit,
    budgets: &BTreeMap<usize, Vec<QAExample>>,
) -> Result<()> {
    let gd = group_dir(dir, &key.0, &key.1);
    write_jsonl(&gd.join("train.jsonl"), &split.train)?;
    write_jsonl(&gd.join("test.jsonl"), &split.test)?;
    for (b, subset) in budgets {
        write_jsonl(&gd.join(format!("budget_{b}.jsonl")), subset)?;
    }
    write_atomic(
        &gd.join("train.squad.json"),
        serde_json::to_string_pretty(&to_squad(&split.train))?.as_bytes(),
    )?;
    write_atomic(
        &gd.join("test.squad.json"),
        serde_json::to_string_pretty(&to_squad(&split.test))?.as_bytes(),
    )
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    write_atomic(
        &dir.join("manifest.json"),
        serde_json::to_string_pretty(manifest)?.as_bytes(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::html::{normalize, TagPolicy};
    use crate::kg::{EntityRecord, FixtureKg};

    fn pid(s: &str) -> PropertyId {
        PropertyId::new(s).unwrap()
    }
    fn eid(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }
    fn info(labels: &[&str], aliases: &[&str]) -> PropertyInfo {
        PropertyInfo::new(
            pid("P1"),
            labels.iter().map(|s| s.to_string()).collect(),
            aliases.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap()
    }
    fn doc(html: &str, url: &str) -> CleanDocument {
        normalize(html.as_bytes(), &TagPolicy::default()).with_source_url(url)
    }

    #[test]
    fn questions() {
        let mut employer = info(&["employer"], &[]);
        employer.id = pid("P108");
        assert_eq!(formulate_questions(&employer, QuestionSources::LabelsAndAliases), ["employer ?"]);
        let genre = info(&["genre"], &["music genre"]);
        assert_eq!(
            formulate_questions(&genre, QuestionSources::LabelsAndAliases),
            ["genre ?", "music genre ?"]
        );
        assert_eq!(formulate_questions(&genre, QuestionSources::Labels), ["genre ?"]);
        let sex = info(&["sex or gender "], &[]);
        assert_eq!(formulate_questions(&sex, QuestionSources::Labels), ["sex or gender ?"]);
    }

    #[test]
    fn mentions_respect_word_boundaries_and_markup() {
        let d = doc("<p>The artist makes art. ART!</p><b>start</b>", "u");
        let hits: Vec<&str> = find_mentions(&d, "art").into_iter().map(|r| d.slice(r)).collect();
        assert_eq!(hits, ["art", "ART"]);
        // the <start> token is not visible text
        let starts = find_mentions(&d, "start");
        assert_eq!(starts.len(), 1);
        assert_eq!(d.slice(starts[0].clone()), "start");
        assert!(d.is_visible(&starts[0]));
    }

    fn kg_with(objects: Vec<EntityRecord>) -> KnowledgeGraph {
        KnowledgeGraph::new(FixtureKg::from_records(objects).unwrap(), vec!["en".into()])
    }

    fn named(id: &str, label: &str, aliases: &[&str]) -> EntityRecord {
        EntityRecord {
            id: eid(id),
            labels: BTreeMap::from([("en".into(), label.into())]),
            aliases: BTreeMap::from([(
                "en".into(),
                aliases.iter().map(|s| s.to_string()).collect(),
            )]),
            ..Default::default()
        }
    }

    #[test]
    fn charles_university_example() {
        let kg = kg_with(vec![named("Q31519", "Charles University", &["Univerzita Karlova"])]);
        let mut employer = info(&["employer"], &[]);
        employer.id = pid("P108");
        let page = doc(
            "<html><body><h2>Employment</h2><div>2nd Faculty of Medicine, Charles University, Prague, CZ</div></body></html>",
            "https://orcid.org/0000-0002-0977-8922",
        );
        let t = Triple {
            subject: eid("Q994013"),
            property: pid("P108"),
            object: ObjectValue::Entity(eid("Q31519")),
        };
        let pages = BTreeMap::from([(eid("Q994013"), page)]);
        let g = generate_examples(&kg, &pid("P496"), &employer, &[t], &pages, QuestionSources::LabelsAndAliases);
        assert_eq!(g.examples.len(), 1);
        let ex = &g.examples[0];
        assert_eq!(ex.question, "employer ?");
        assert_eq!(ex.answers.len(), 1);
        assert_eq!(ex.answers[0].text, "Charles University");
        ex.check().unwrap();
    }

    #[test]
    fn drops_and_duplicates() {
        let kg = kg_with(vec![
            named("Q1", "pianist", &["piano player"]),
            named("Q2", "drummer", &[]),
        ]);
        let occ = info(&["occupation"], &[]);
        let page = doc("<p>a piano player and a Piano Player</p>", "u1");
        let pages = BTreeMap::from([(eid("Q10"), page)]);
        let t = |s: &str, o: &str| Triple {
            subject: eid(s),
            property: pid("P1"),
            object: ObjectValue::Entity(eid(o)),
        };
        let g = generate_examples(
            &kg,
            &pid("P434"),
            &occ,
            &[t("Q10", "Q1"), t("Q10", "Q2"), t("Q11", "Q1"), t("Q10", "Q1")],
            &pages,
            QuestionSources::Labels,
        );
        assert_eq!(g.examples.len(), 1);
        assert_eq!(g.examples[0].answers.len(), 2);
        assert_eq!(g.stats.dropped_no_mention, 1);
        assert_eq!(g.stats.dropped_missing_snapshot, 1);
        assert_eq!(g.stats.duplicates, 1);
    }

    #[test]
    fn longest_name_wins_and_literals_match() {
        let kg = kg_with(vec![named("Q1", "Oxford", &["University of Oxford"])]);
        let d = doc("<p>University of Oxford</p><p>Oxford</p>", "u");
        let names = object_names(&kg, &ObjectValue::Entity(eid("Q1"))).unwrap();
        let best = best_mentions(&d, &names);
        assert_eq!(best.len(), 1);
        assert_eq!(best[0].text, "University of Oxford");
        let lit = object_names(&kg, &ObjectValue::Literal("1997".into())).unwrap();
        let d = doc(r#"<dd class="begin-date">1997<!---->(25 years ago)</dd>"#, "u");
        assert_eq!(best_mentions(&d, &lit)[0].text, "1997");
    }

    fn synthetic(n_urls: usize, per_url: usize) -> Vec<QAExample> {
        let mut v = Vec::new();
        for u in 0..n_urls {
            for k in 0..per_url {
                v.push(QAExample {
                    id: stable_id(&[u.to_string(), k.to_string()]),
                    question: "q ?".into(),
                    context: "x".into(),
                    context_url: format!("https://d.test/{u}"),
                    context_hash: String::new(),
                    answers: vec![AnswerSpan { start: 0, end: 1, text: "x".into() }],
                    source_triple: Triple {
                        subject: eid(&format!("Q{}", u + 1)),
                        property: pid("P21"),
                        object: ObjectValue::Literal(k.to_string()),
                    },
                    domain: pid("P434"),
                    split: None,
                });
            }
        }
        v
    }

    #[test]
    fn split_sizes_and_threshold() {
        let s = split_dataset(&synthetic(1000, 1), 500, 500, 3);
        let g = &s.groups[&(pid("P434"), pid("P21"))];
        assert_eq!((g.train.len(), g.test.len()), (500, 500));
        assert!(g.train.iter().all(|e| e.split == Some(Split::Train)));
        let ids: BTreeSet<_> = g.train.iter().map(|e| &e.id).collect();
        assert!(g.test.iter().all(|e| !ids.contains(&e.id)));

        let s = split_dataset(&synthetic(999, 1), 500, 500, 3);
        assert!(s.groups.is_empty());
        assert_eq!(s.excluded.len(), 1);
        assert_eq!(s.excluded[0].available, 999);

        assert_eq!(split_dataset(&synthetic(1000, 1), 500, 500, 9), split_dataset(&synthetic(1000, 1), 500, 500, 9));
    }

    #[test]
    fn split_keeps_urls_on_one_side() {
        let s = split_dataset(&synthetic(40, 3), 50, 50, 1);
        let g = &s.groups[&(pid("P434"), pid("P21"))];
        assert_eq!((g.train.len(), g.test.len()), (50, 50));
        let train_urls: BTreeSet<_> = g.train.iter().map(|e| &e.context_url).collect();
        assert!(g.test.iter().all(|e| !train_urls.contains(&e.context_url)));
    }

    #[test]
    fn budgets_nest() {
        let train = synthetic(500, 1);
        let spec = BudgetSpec::new(vec![0, 8, 16]).unwrap();
        let subs = budget_subsets("P434/P21", &train, &spec, 5).unwrap();
        assert_eq!(subs[&0].len(), 0);
        assert_eq!(subs[&8].len(), 8);
        assert_eq!(subs[&16][..8], subs[&8][..]);

        let full = budget_subsets("g", &train, &BudgetSpec::full_grid(), 5).unwrap();
        assert_eq!(full.keys().copied().collect::<Vec<_>>(), BUDGET_GRID);
        let small: BTreeSet<_> = full[&8].iter().map(|e| &e.id).collect();
        let big: BTreeSet<_> = full[&128].iter().map(|e| &e.id).collect();
        assert!(small.is_subset(&big));

        let err = budget_subsets("P434/P21", &synthetic(10, 1), &spec, 5).unwrap_err();
        assert!(err.to_string().contains("P434/P21"));
        assert!(BudgetSpec::new(vec![8, 0]).is_err());
        assert!(BudgetSpec::new(vec![7]).is_err());
    }

    #[test]
    fn squad_export_shape() {
        let v = to_squad(&synthetic(2, 2));
        assert_eq!(v["data"].as_array().unwrap().len(), 2);
        assert_eq!(v["data"][0]["paragraphs"][0]["qas"].as_array().unwrap().len(), 2);
        assert_eq!(v["data"][0]["paragraphs"][0]["qas"][0]["answers"][0]["answer_start"], 0);
    }
}
