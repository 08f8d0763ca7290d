//! Read-side access to the knowledge graph.
//!
//! Entities, properties, labels, aliases, claims and external identifiers are
//! served by a pluggable [`KgSource`]. [`FixtureKg`] reads newline-delimited
//! JSON records; the live Wikibase client lives in [`crate::kg_live`].
//! On top of the source, [`KnowledgeGraph`] implements knowledge selection:
//! sampling entities that carry an external identifier, ranking the
//! properties they use, and finding the entities that miss one.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Property holding a formatter URL template on external-identifier properties.
pub const FORMATTER_URL_PROPERTY: &str = "P1630";

/// Placeholder substituted by the identifier value in a formatter URL.
pub const FORMATTER_PLACEHOLDER: &str = "$1";

// RFC 3986 unreserved characters stay as-is.
const ID_ESCAPE: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'-')
    .remove(b'.')
    .remove(b'_')
    .remove(b'~');

fn is_item_like(s: &str) -> bool {
    let prefix = s.chars().take_while(|c| c.is_ascii_alphabetic()).count();
    prefix > 0 && prefix < s.len() && s[prefix..].bytes().all(|b| b.is_ascii_digit())
}

macro_rules! id_newtype {
    ($name:ident, $check:expr, $what:literal) => {
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Result<Self> {
                let id = id.into();
                if $check(&id) {
                    Ok(Self(id))
                } else {
                    Err(Error::Precondition(format!("malformed {} {id:?}", $what)))
                }
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                Self::new(s)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(&self.0)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                Self::new(s).map_err(serde::de::Error::custom)
            }
        }
    };
}

id_newtype!(EntityId, is_item_like, "entity id");
id_newtype!(
    PropertyId,
    |s: &str| s.starts_with('P') && is_item_like(s),
    "property id"
);

impl PropertyId {
    /// The same identifier viewed as a KG entity (properties are entities).
    pub fn as_entity(&self) -> EntityId {
        EntityId(self.0.clone())
    }
}

/// Object position of a claim: another entity or a literal value.
///
/// Serialized as a bare string; strings shaped like an item id (`Q42`, `P31`)
/// are read back as entities.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObjectValue {
    Entity(EntityId),
    Literal(String),
}

impl ObjectValue {
    pub fn as_entity(&self) -> Option<&EntityId> {
        match self {
            ObjectValue::Entity(e) => Some(e),
            ObjectValue::Literal(_) => None,
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            ObjectValue::Entity(e) => e.as_str(),
            ObjectValue::Literal(s) => s,
        }
    }
}

impl From<&str> for ObjectValue {
    fn from(s: &str) -> Self {
        match EntityId::new(s) {
            Ok(e) => ObjectValue::Entity(e),
            Err(_) => ObjectValue::Literal(s.to_string()),
        }
    }
}

impl fmt::Display for ObjectValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for ObjectValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ObjectValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(ObjectValue::from(s.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: EntityId,
    pub property: PropertyId,
    pub object: ObjectValue,
}

/// A property together with its semantic names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyInfo {
    pub id: PropertyId,
    pub labels: Vec<String>,
    #[serde(default)]
    pub aliases: Vec<String>,
    /// Wikibase datatype (`wikibase-item`, `time`, `string`, `external-id`, ...).
    #[serde(default)]
    pub datatype: Option<String>,
}

impl PropertyInfo {
    pub fn new(id: PropertyId, labels: Vec<String>, aliases: Vec<String>) -> Result<Self> {
        if labels.is_empty() || labels.iter().any(|l| l.trim().is_empty()) {
            return Err(Error::Precondition(format!(
                "property {id} needs at least one non-empty label"
            )));
        }
        Ok(Self {
            id,
            labels,
            aliases,
            datatype: None,
        })
    }

    /// Whether objects of this property are KG items that need linking.
    pub fn is_item_valued(&self) -> bool {
        matches!(self.datatype.as_deref(), None | Some("wikibase-item"))
    }
}

/// An external-identifier property and its formatter URL template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalIdentifier {
    pub property: PropertyId,
    pub formatter_template: String,
}

impl ExternalIdentifier {
    pub fn new(property: PropertyId, formatter_template: impl Into<String>) -> Result<Self> {
        let formatter_template = formatter_template.into();
        let n = formatter_template.matches(FORMATTER_PLACEHOLDER).count();
        if n != 1 {
            return Err(Error::Config(format!(
                "formatter URL {formatter_template:?} for {property} must contain exactly one \"$1\" (found {n})"
            )));
        }
        Ok(Self {
            property,
            formatter_template,
        })
    }

    /// Substitute a URL-escaped identifier value into the template.
    pub fn resolve(&self, id_value: &str) -> Result<String> {
        resolve_formatter_url(self, id_value)
    }
}

pub fn resolve_formatter_url(x: &ExternalIdentifier, id_value: &str) -> Result<String> {
    if id_value.is_empty() {
        return Err(Error::Precondition(format!(
            "empty identifier value for {}",
            x.property
        )));
    }
    if x.formatter_template.matches(FORMATTER_PLACEHOLDER).count() != 1 {
        return Err(Error::Config(format!(
            "formatter URL {:?} has no single \"$1\" placeholder",
            x.formatter_template
        )));
    }
    let escaped = utf8_percent_encode(id_value, ID_ESCAPE).to_string();
    Ok(x.formatter_template.replacen(FORMATTER_PLACEHOLDER, &escaped, 1))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: EntityId,
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
    #[serde(default)]
    pub aliases: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub claims: BTreeMap<PropertyId, Vec<ObjectValue>>,
    #[serde(default)]
    pub external_ids: BTreeMap<PropertyId, String>,
    /// Only set on property records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datatype: Option<String>,
}

impl Default for EntityId {
    fn default() -> Self {
        EntityId("Q0".into())
    }
}

impl EntityRecord {
    /// Labels and aliases in the given languages.
    pub fn names(&self, languages: &[String]) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for lang in languages {
            if let Some(l) = self.labels.get(lang) {
                out.insert(l.clone());
            }
            if let Some(a) = self.aliases.get(lang) {
                out.extend(a.iter().cloned());
            }
        }
        out
    }

    pub fn label(&self, languages: &[String]) -> Option<&str> {
        languages
            .iter()
            .find_map(|l| self.labels.get(l))
            .map(String::as_str)
    }

    pub fn has_claim(&self, p: &PropertyId) -> bool {
        self.claims.get(p).is_some_and(|v| !v.is_empty())
    }
}

/// Case-fold, trim and NFC-normalize a name for equality matching.
pub fn normalize_name(s: &str) -> String {
    s.trim().nfc().collect::<String>().to_lowercase()
}

/// Backend serving KG lookups.
pub trait KgSource: Send + Sync {
    fn entity(&self, id: &EntityId) -> Result<EntityRecord>;

    /// Ids of all entities carrying a value for external identifier `x`, sorted.
    fn entities_with_identifier(&self, x: &PropertyId) -> Result<Vec<EntityId>>;

    /// Ids of entities with a label or alias (in `languages`) equal to `name`
    /// under [`normalize_name`], sorted.
    fn entities_named(&self, name: &str, languages: &[String]) -> Result<Vec<EntityId>>;

    /// Ids of entities having at least one claim for `p`, sorted.
    fn subjects_with_property(&self, p: &PropertyId) -> Result<Vec<EntityId>>;
}

/// In-memory KG loaded from a newline-delimited JSON file of [`EntityRecord`]s.
#[derive(Debug, Default)]
pub struct FixtureKg {
    records: BTreeMap<EntityId, EntityRecord>,
    // normalized name -> (language, entity)
    names: HashMap<String, BTreeSet<(String, EntityId)>>,
}

impl FixtureKg {
    pub fn from_records(records: impl IntoIterator<Item = EntityRecord>) -> Result<Self> {
        let mut kg = FixtureKg::default();
        for r in records {
            for key in r.external_ids.keys() {
                if let Some(prop) = kg.records.get(&key.as_entity()) {
                    if prop.datatype.as_deref().is_some_and(|d| d != "external-id") {
                        return Err(Error::Config(format!(
                            "{}: external id key {key} is not an external-identifier property",
                            r.id
                        )));
                    }
                }
            }
            for (lang, label) in &r.labels {
                kg.index_name(label, lang, &r.id);
            }
            for (lang, aliases) in &r.aliases {
                for a in aliases {
                    kg.index_name(a, lang, &r.id);
                }
            }
            if kg.records.insert(r.id.clone(), r).is_some() {
                return Err(Error::Config("duplicate record in fixture".into()));
            }
        }
        Ok(kg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let r: EntityRecord = serde_json::from_str(line)
                .map_err(|e| Error::Config(format!("fixture line {}: {e}", n + 1)))?;
            records.push(r);
        }
        Self::from_records(records)
    }

    fn index_name(&mut self, name: &str, lang: &str, id: &EntityId) {
        self.names
            .entry(normalize_name(name))
            .or_default()
            .insert((lang.to_string(), id.clone()));
    }

    pub fn records(&self) -> impl Iterator<Item = &EntityRecord> {
        self.records.values()
    }
}

impl KgSource for FixtureKg {
    fn entity(&self, id: &EntityId) -> Result<EntityRecord> {
        self.records
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("entity {id}")))
    }

    fn entities_with_identifier(&self, x: &PropertyId) -> Result<Vec<EntityId>> {
        Ok(self
            .records
            .values()
            .filter(|r| r.external_ids.contains_key(x))
            .map(|r| r.id.clone())
            .collect())
    }

    fn entities_named(&self, name: &str, languages: &[String]) -> Result<Vec<EntityId>> {
        let ids: BTreeSet<EntityId> = self
            .names
            .get(&normalize_name(name))
            .into_iter()
            .flatten()
            .filter(|(lang, _)| languages.contains(lang))
            .map(|(_, id)| id.clone())
            .collect();
        Ok(ids.into_iter().collect())
    }

    fn subjects_with_property(&self, p: &PropertyId) -> Result<Vec<EntityId>> {
        Ok(self
            .records
            .values()
            .filter(|r| r.has_claim(p))
            .map(|r| r.id.clone())
            .collect())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortOrder {
    #[default]
    Descending,
    Ascending,
}

/// Count, for each property, how many of `entities` have at least one claim for it.
pub fn rank_properties(entities: &[EntityRecord], order: SortOrder) -> Vec<(PropertyId, usize)> {
    let mut counts: BTreeMap<&PropertyId, usize> = BTreeMap::new();
    for e in entities {
        for (p, objs) in &e.claims {
            if !objs.is_empty() {
                *counts.entry(p).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(PropertyId, usize)> =
        counts.into_iter().map(|(p, c)| (p.clone(), c)).collect();
    // BTreeMap order already breaks ties by id; the sort is stable.
    match order {
        SortOrder::Descending => ranked.sort_by_key(|r| std::cmp::Reverse(r.1)),
        SortOrder::Ascending => ranked.sort_by_key(|r| r.1),
    }
    ranked
}

/// Entities carrying `x` but no claim for `p`.
pub fn find_incomplete<'a>(
    x: &ExternalIdentifier,
    p: &PropertyId,
    entities: &'a [EntityRecord],
) -> Vec<&'a EntityRecord> {
    entities
        .iter()
        .filter(|e| e.external_ids.contains_key(&x.property) && !e.has_claim(p))
        .collect()
}

/// A [`KgSource`] plus the label languages in scope.
pub struct KnowledgeGraph {
    source: Box<dyn KgSource>,
    languages: Vec<String>,
}

impl fmt::Debug for KnowledgeGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KnowledgeGraph")
            .field("languages", &self.languages)
            .finish_non_exhaustive()
    }
}

impl KnowledgeGraph {
    pub fn new(source: impl KgSource + 'static, languages: Vec<String>) -> Self {
        Self {
            source: Box::new(source),
            languages,
        }
    }

    /// Fixture-backed graph with English labels.
    pub fn fixture(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::new(FixtureKg::load(path)?, vec!["en".into()]))
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn entity(&self, id: &EntityId) -> Result<EntityRecord> {
        self.source.entity(id)
    }

    pub fn property(&self, p: &PropertyId) -> Result<PropertyInfo> {
        let rec = self.source.entity(&p.as_entity())?;
        let mut labels: Vec<String> = self
            .languages
            .iter()
            .filter_map(|l| rec.labels.get(l).cloned())
            .collect();
        labels.dedup();
        let aliases: Vec<String> = self
            .languages
            .iter()
            .filter_map(|l| rec.aliases.get(l))
            .flatten()
            .cloned()
            .collect();
        let mut info = PropertyInfo::new(p.clone(), labels, aliases)?;
        info.datatype = rec.datatype.clone();
        Ok(info)
    }

    /// Read the formatter URL (P1630) of an external-identifier property.
    pub fn external_identifier(&self, p: &PropertyId) -> Result<ExternalIdentifier> {
        let rec = self.source.entity(&p.as_entity())?;
        let formatter = PropertyId::new(FORMATTER_URL_PROPERTY)?;
        let template = rec
            .claims
            .get(&formatter)
            .and_then(|v| v.first())
            .ok_or_else(|| Error::Config(format!("{p} has no formatter URL")))?;
        ExternalIdentifier::new(p.clone(), template.as_str())
    }

    /// Uniform sample of at most `n` entities having `x`, deterministic in `seed`.
    pub fn sample_entities_with_identifier(
        &self,
        x: &ExternalIdentifier,
        n: usize,
        seed: u64,
    ) -> Result<Vec<EntityRecord>> {
        if n == 0 {
            return Err(Error::Precondition("sample size must be at least 1".into()));
        }
        let population = self.source.entities_with_identifier(&x.property)?;
        let mut chosen: Vec<&EntityId> = if population.len() <= n {
            population.iter().collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            index::sample(&mut rng, population.len(), n)
                .into_iter()
                .map(|i| &population[i])
                .collect()
        };
        chosen.sort();
        chosen.into_iter().map(|id| self.source.entity(id)).collect()
    }

    /// Number of entities carrying `x`.
    pub fn identifier_population(&self, x: &PropertyId) -> Result<usize> {
        Ok(self.source.entities_with_identifier(x)?.len())
    }

    /// Union of labels and aliases across the configured languages.
    pub fn fetch_labels_aliases(&self, e: &EntityId) -> Result<BTreeSet<String>> {
        Ok(self.source.entity(e)?.names(&self.languages))
    }

    /// Object entities over all claims of `e`; literals are skipped.
    pub fn fetch_outgoing_neighbors(&self, e: &EntityId) -> Result<BTreeSet<EntityId>> {
        Ok(self
            .source
            .entity(e)?
            .claims
            .values()
            .flatten()
            .filter_map(|o| o.as_entity().cloned())
            .collect())
    }

    pub fn entities_named(&self, name: &str) -> Result<Vec<EntityId>> {
        self.source.entities_named(name, &self.languages)
    }

    /// All `(subject, p, object)` triples in the graph.
    pub fn triples_of(&self, p: &PropertyId) -> Result<Vec<Triple>> {
        let mut out = Vec::new();
        for s in self.source.subjects_with_property(p)? {
            let rec = self.source.entity(&s)?;
            for o in rec.claims.get(p).into_iter().flatten() {
                out.push(Triple {
                    subject: s.clone(),
                    property: p.clone(),
                    object: o.clone(),
                });
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pid(s: &str) -> PropertyId {
        PropertyId::new(s).unwrap()
    }
    fn eid(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }

    fn rec(id: &str, claims: &[(&str, &[&str])], ext: &[(&str, &str)]) -> EntityRecord {
        EntityRecord {
            id: eid(id),
            labels: BTreeMap::from([("en".to_string(), format!("label of {id}"))]),
            claims: claims
                .iter()
                .map(|(p, os)| (pid(p), os.iter().map(|o| ObjectValue::from(*o)).collect()))
                .collect(),
            external_ids: ext.iter().map(|(p, v)| (pid(p), v.to_string())).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn ids_are_validated() {
        assert!(EntityId::new("Q994013").is_ok());
        assert!(EntityId::new("").is_err());
        assert!(EntityId::new("Q").is_err());
        assert!(EntityId::new("994013").is_err());
        assert!(PropertyId::new("Q5").is_err());
        assert!(PropertyId::new("P108").is_ok());
    }

    #[test]
    fn formatter_urls() {
        let orcid = ExternalIdentifier::new(pid("P496"), "https://orcid.org/$1").unwrap();
        assert_eq!(
            orcid.resolve("0000-0002-0977-8922").unwrap(),
            "https://orcid.org/0000-0002-0977-8922"
        );
        let mb =
            ExternalIdentifier::new(pid("P434"), "https://musicbrainz.org/artist/$1").unwrap();
        assert_eq!(
            mb.resolve("f6afb1cc-8799-41cf-8fa8-2745eeab36e6").unwrap(),
            "https://musicbrainz.org/artist/f6afb1cc-8799-41cf-8fa8-2745eeab36e6"
        );
        let x = ExternalIdentifier::new(pid("P1"), "https://x.test/$1").unwrap();
        assert!(matches!(x.resolve(""), Err(Error::Precondition(_))));
        assert_eq!(x.resolve("a b/c").unwrap(), "https://x.test/a%20b%2Fc");
        assert!(matches!(
            ExternalIdentifier::new(pid("P1"), "https://x.test/"),
            Err(Error::Config(_))
        ));
        let bad = ExternalIdentifier {
            property: pid("P1"),
            formatter_template: "https://x.test/".into(),
        };
        assert!(matches!(bad.resolve("a"), Err(Error::Config(_))));
    }

    #[test]
    fn ranks_by_usage_then_id() {
        let es = vec![
            rec("Q1", &[("P735", &["Q10"]), ("P108", &["Q20"])], &[]),
            rec("Q2", &[("P735", &["Q11"])], &[]),
            rec("Q3", &[("P735", &["Q12"]), ("P27", &[])], &[]),
        ];
        assert_eq!(
            rank_properties(&es, SortOrder::Descending),
            vec![(pid("P735"), 3), (pid("P108"), 1)]
        );
        assert_eq!(
            rank_properties(&es, SortOrder::Ascending),
            vec![(pid("P108"), 1), (pid("P735"), 3)]
        );
        let one = vec![rec("Q1", &[("P21", &["Q6581097"])], &[])];
        assert_eq!(rank_properties(&one, SortOrder::Descending), vec![(pid("P21"), 1)]);
        // equal counts fall back to lexicographic id order
        let tie = vec![rec("Q1", &[("P9", &["x"]), ("P10", &["y"])], &[])];
        assert_eq!(
            rank_properties(&tie, SortOrder::Descending),
            vec![(pid("P10"), 1), (pid("P9"), 1)]
        );
    }

    #[test]
    fn incomplete_entities() {
        let x = ExternalIdentifier::new(pid("P496"), "https://orcid.org/$1").unwrap();
        let es = vec![
            rec("Q1", &[("P108", &["Q20"])], &[("P496", "a")]),
            rec("Q2", &[], &[("P496", "b")]),
            rec("Q3", &[], &[]),
        ];
        let ids: Vec<_> = find_incomplete(&x, &pid("P108"), &es)
            .iter()
            .map(|e| e.id.to_string())
            .collect();
        assert_eq!(ids, ["Q2"]);
        let all = vec![rec("Q1", &[("P108", &["Q20"])], &[("P496", "a")])];
        assert!(find_incomplete(&x, &pid("P108"), &all).is_empty());
    }

    #[test]
    fn sampling_is_deterministic_and_bounded() {
        let es: Vec<_> = (1..=3)
            .map(|i| rec(&format!("Q{i}"), &[], &[("P434", "v")]))
            .chain((4..=6).map(|i| rec(&format!("Q{i}"), &[], &[])))
            .collect();
        let x = ExternalIdentifier::new(pid("P434"), "https://x.test/$1").unwrap();
        let kg = KnowledgeGraph::new(FixtureKg::from_records(es).unwrap(), vec!["en".into()]);
        let all = kg.sample_entities_with_identifier(&x, 5, 1).unwrap();
        assert_eq!(all.len(), 3);
        let a = kg.sample_entities_with_identifier(&x, 2, 7).unwrap();
        let b = kg.sample_entities_with_identifier(&x, 2, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert!(kg.sample_entities_with_identifier(&x, 0, 7).is_err());
    }

    #[test]
    fn labels_and_neighbors() {
        let mut r = rec("Q1", &[("P31", &["Q5", "Q6"]), ("P571", &["1997"])], &[]);
        r.aliases.insert("en".into(), vec!["One".into()]);
        r.labels.insert("de".into(), "Eins".into());
        let lit = rec("Q2", &[("P571", &["2001"])], &[]);
        let kg = KnowledgeGraph::new(
            FixtureKg::from_records([r, lit]).unwrap(),
            vec!["en".into()],
        );
        assert_eq!(
            kg.fetch_labels_aliases(&eid("Q1")).unwrap(),
            BTreeSet::from(["label of Q1".to_string(), "One".to_string()])
        );
        assert_eq!(
            kg.fetch_outgoing_neighbors(&eid("Q1")).unwrap(),
            BTreeSet::from([eid("Q5"), eid("Q6")])
        );
        assert!(kg.fetch_outgoing_neighbors(&eid("Q2")).unwrap().is_empty());
        assert!(matches!(
            kg.fetch_labels_aliases(&eid("Q404")),
            Err(Error::NotFound(_))
        ));
        assert_eq!(kg.entities_named("  ONE ").unwrap(), vec![eid("Q1")]);
        assert!(kg.entities_named("eins").unwrap().is_empty());
    }

    #[test]
    fn object_values_roundtrip_as_strings() {
        let v: Vec<ObjectValue> = serde_json::from_str(r#"["Q5","1997","P31"]"#).unwrap();
        assert_eq!(v[0], ObjectValue::Entity(eid("Q5")));
        assert_eq!(v[1], ObjectValue::Literal("1997".into()));
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"["Q5","1997","P31"]"#);
    }
}
