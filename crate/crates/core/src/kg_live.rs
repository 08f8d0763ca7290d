//! Wikibase-backed [`KgSource`]: `wbgetentities` / `wbsearchentities` plus SPARQL.
//!
//! Every response is cached on disk by URL hash, so reruns are offline and
//! reproducible.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Duration;

use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::kg::{normalize_name, EntityId, EntityRecord, KgSource, ObjectValue, PropertyId};
use crate::util::{content_hash, write_atomic};

pub const WIKIDATA_API: &str = "https://www.wikidata.org/w/api.php";
pub const WIKIDATA_SPARQL: &str = "https://query.wikidata.org/sparql";

/// GET returning JSON; swapped out in tests.
pub trait JsonGet: Send + Sync {
    fn get_json(&self, url: &str) -> Result<Value>;
}

#[derive(Debug, Clone)]
pub struct UreqJsonGet {
    agent: ureq::Agent,
}

impl UreqJsonGet {
    pub fn new(user_agent: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .user_agent(user_agent)
            .build()
            .into();
        Self { agent }
    }
}

impl JsonGet for UreqJsonGet {
    fn get_json(&self, url: &str) -> Result<Value> {
        self.agent
            .get(url)
            .header("Accept", "application/sparql-results+json, application/json")
            .call()
            .map_err(|e| Error::Transport(format!("GET {url}: {e}")))?
            .body_mut()
            .read_json()
            .map_err(|e| Error::Transport(format!("GET {url}: {e}")))
    }
}

#[derive(Debug, Clone)]
pub struct WikibaseConfig {
    pub api_url: String,
    pub sparql_url: String,
    pub languages: Vec<String>,
    /// Cap on SPARQL result rows.
    pub sparql_limit: usize,
    pub search_limit: usize,
    pub cache_dir: Option<PathBuf>,
}

impl Default for WikibaseConfig {
    fn default() -> Self {
        Self {
            api_url: WIKIDATA_API.into(),
            sparql_url: WIKIDATA_SPARQL.into(),
            languages: vec!["en".into()],
            sparql_limit: 100_000,
            search_limit: 50,
            cache_dir: None,
        }
    }
}

pub struct WikibaseKg {
    config: WikibaseConfig,
    http: Box<dyn JsonGet>,
}

impl std::fmt::Debug for WikibaseKg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WikibaseKg").field("api", &self.config.api_url).finish()
    }
}

fn enc(s: &str) -> String {
    utf8_percent_encode(s, NON_ALPHANUMERIC).to_string()
}

impl WikibaseKg {
    pub fn new(config: WikibaseConfig, http: impl JsonGet + 'static) -> Self {
        Self {
            config,
            http: Box::new(http),
        }
    }

    fn fetch(&self, url: &str) -> Result<Value> {
        let cached = self
            .config
            .cache_dir
            .as_ref()
            .map(|d| d.join(format!("{}.json", content_hash(url.as_bytes()))));
        if let Some(path) = &cached {
            if let Ok(text) = std::fs::read_to_string(path) {
                return Ok(serde_json::from_str(&text)?);
            }
        }
        let v = self.http.get_json(url)?;
        if let Some(path) = &cached {
            write_atomic(path, serde_json::to_string(&v)?.as_bytes())?;
        }
        Ok(v)
    }

    pub fn entities_url(&self, ids: &[&str]) -> String {
        format!(
            "{}?action=wbgetentities&format=json&props=labels%7Caliases%7Cclaims%7Cdatatype&languages={}&ids={}",
            self.config.api_url,
            enc(&self.config.languages.join("|")),
            enc(&ids.join("|")),
        )
    }

    pub fn sparql_url(&self, query: &str) -> String {
        format!("{}?format=json&query={}", self.config.sparql_url, enc(query))
    }

    fn sparql_items(&self, query: &str) -> Result<Vec<EntityId>> {
        let v = self.fetch(&self.sparql_url(query))?;
        let rows = v["results"]["bindings"]
            .as_array()
            .ok_or_else(|| Error::Protocol("SPARQL reply without results.bindings".into()))?;
        let mut out = BTreeSet::new();
        for row in rows {
            let uri = row["item"]["value"].as_str().unwrap_or_default();
            if let Some(id) = uri.rsplit('/').next() {
                if let Ok(id) = EntityId::new(id) {
                    out.insert(id);
                }
            }
        }
        Ok(out.into_iter().collect())
    }
}

fn snak_value(snak: &Value) -> Option<ObjectValue> {
    let dv = &snak["datavalue"];
    let v = &dv["value"];
    match dv["type"].as_str()? {
        "wikibase-entityid" => EntityId::new(v["id"].as_str()?).ok().map(ObjectValue::Entity),
        "string" => Some(ObjectValue::Literal(v.as_str()?.to_string())),
        "time" => Some(ObjectValue::Literal(v["time"].as_str()?.to_string())),
        "monolingualtext" => Some(ObjectValue::Literal(v["text"].as_str()?.to_string())),
        "quantity" => Some(ObjectValue::Literal(v["amount"].as_str()?.trim_start_matches('+').to_string())),
        _ => None,
    }
}

/// One entity object from a `wbgetentities` reply.
pub fn parse_entity(id: &EntityId, e: &Value) -> Result<EntityRecord> {
    if e.get("missing").is_some() {
        return Err(Error::NotFound(format!("entity {id}")));
    }
    let mut rec = EntityRecord {
        id: id.clone(),
        datatype: e["datatype"].as_str().map(str::to_string),
        ..Default::default()
    };
    if let Some(labels) = e["labels"].as_object() {
        for (lang, l) in labels {
            if let Some(v) = l["value"].as_str() {
                rec.labels.insert(lang.clone(), v.to_string());
            }
        }
    }
    if let Some(aliases) = e["aliases"].as_object() {
        for (lang, list) in aliases {
            let names = list
                .as_array()
                .into_iter()
                .flatten()
                .filter_map(|a| a["value"].as_str().map(str::to_string))
                .collect();
            rec.aliases.insert(lang.clone(), names);
        }
    }
    if let Some(claims) = e["claims"].as_object() {
        for (p, statements) in claims {
            let Ok(p) = PropertyId::new(p.as_str()) else { continue };
            for st in statements.as_array().into_iter().flatten() {
                let snak = &st["mainsnak"];
                let Some(v) = snak_value(snak) else { continue };
                if snak["datatype"].as_str() == Some("external-id") {
                    rec.external_ids.entry(p.clone()).or_insert_with(|| v.as_str().to_string());
                }
                rec.claims.entry(p.clone()).or_default().push(v);
            }
        }
    }
    Ok(rec)
}

impl KgSource for WikibaseKg {
    fn entity(&self, id: &EntityId) -> Result<EntityRecord> {
        let v = self.fetch(&self.entities_url(&[id.as_str()]))?;
        if let Some(err) = v.get("error") {
            return Err(Error::Protocol(format!("wbgetentities {id}: {err}")));
        }
        parse_entity(id, &v["entities"][id.as_str()])
    }

    fn entities_with_identifier(&self, x: &PropertyId) -> Result<Vec<EntityId>> {
        self.sparql_items(&format!(
            "SELECT DISTINCT ?item WHERE {{ ?item wdt:{x} ?v }} LIMIT {}",
            self.config.sparql_limit
        ))
    }

    fn entities_named(&self, name: &str, languages: &[String]) -> Result<Vec<EntityId>> {
        let key = normalize_name(name);
        if key.is_empty() {
            return Ok(Vec::new());
        }
        let mut found = BTreeSet::new();
        for lang in languages {
            let url = format!(
                "{}?action=wbsearchentities&format=json&type=item&language={}&limit={}&search={}",
                self.config.api_url,
                enc(lang),
                self.config.search_limit,
                enc(name.trim()),
            );
            let v = self.fetch(&url)?;
            for hit in v["search"].as_array().into_iter().flatten() {
                let Some(Ok(id)) = hit["id"].as_str().map(EntityId::new) else { continue };
                // search is fuzzy; keep exact name matches only
                let rec = self.entity(&id)?;
                if rec.names(std::slice::from_ref(lang)).iter().any(|n| normalize_name(n) == key) {
                    found.insert(id);
                }
            }
        }
        Ok(found.into_iter().collect())
    }

    fn subjects_with_property(&self, p: &PropertyId) -> Result<Vec<EntityId>> {
        self.sparql_items(&format!(
            "SELECT DISTINCT ?item WHERE {{ ?item wdt:{p} ?v }} LIMIT {}",
            self.config.sparql_limit
        ))
    }
}

/// Canned replies keyed by URL, for tests and offline replays.
#[derive(Debug, Default, Clone)]
pub struct CannedJson {
    pub replies: BTreeMap<String, Value>,
}

impl JsonGet for CannedJson {
    fn get_json(&self, url: &str) -> Result<Value> {
        self.replies
            .get(url)
            .cloned()
            .ok_or_else(|| Error::Transport(format!("no canned reply for {url}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn eid(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }

    fn entity_reply() -> Value {
        json!({"entities": {"Q994013": {
            "id": "Q994013",
            "labels": {"en": {"language": "en", "value": "Evžen Amler"}},
            "aliases": {"en": [{"language": "en", "value": "Evzen Amler"}]},
            "claims": {
                "P496": [{"mainsnak": {"snaktype": "value", "property": "P496", "datatype": "external-id",
                    "datavalue": {"type": "string", "value": "0000-0002-0977-8922"}}}],
                "P108": [{"mainsnak": {"snaktype": "value", "property": "P108", "datatype": "wikibase-item",
                    "datavalue": {"type": "wikibase-entityid", "value": {"entity-type": "item", "id": "Q31519"}}}}],
                "P569": [{"mainsnak": {"snaktype": "somevalue", "property": "P569", "datatype": "time"}}]
            }
        }}})
    }

    #[test]
    fn parses_wbgetentities() {
        let cfg = WikibaseConfig::default();
        let probe = WikibaseKg::new(cfg.clone(), CannedJson::default());
        let url = probe.entities_url(&["Q994013"]);
        let kg = WikibaseKg::new(cfg, CannedJson { replies: BTreeMap::from([(url, entity_reply())]) });
        let r = kg.entity(&eid("Q994013")).unwrap();
        assert_eq!(r.labels["en"], "Evžen Amler");
        assert_eq!(r.external_ids[&PropertyId::new("P496").unwrap()], "0000-0002-0977-8922");
        assert_eq!(r.claims[&PropertyId::new("P108").unwrap()], vec![ObjectValue::Entity(eid("Q31519"))]);
        assert!(!r.has_claim(&PropertyId::new("P569").unwrap()));
    }

    #[test]
    fn sparql_and_cache() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = WikibaseConfig {
            cache_dir: Some(dir.path().to_path_buf()),
            sparql_limit: 10,
            ..Default::default()
        };
        let probe = WikibaseKg::new(cfg.clone(), CannedJson::default());
        let url = probe.sparql_url("SELECT DISTINCT ?item WHERE { ?item wdt:P496 ?v } LIMIT 10");
        let reply = json!({"results": {"bindings": [
            {"item": {"type": "uri", "value": "http://www.wikidata.org/entity/Q994013"}},
            {"item": {"type": "uri", "value": "http://www.wikidata.org/entity/Q5"}}
        ]}});
        let kg = WikibaseKg::new(cfg.clone(), CannedJson { replies: BTreeMap::from([(url, reply)]) });
        let ids = kg.entities_with_identifier(&PropertyId::new("P496").unwrap()).unwrap();
        assert_eq!(ids, vec![eid("Q5"), eid("Q994013")]);
        // second client has no canned replies; the disk cache answers
        let offline = WikibaseKg::new(cfg, CannedJson::default());
        assert_eq!(offline.entities_with_identifier(&PropertyId::new("P496").unwrap()).unwrap(), ids);
    }

    #[test]
    fn missing_entity() {
        let cfg = WikibaseConfig::default();
        let url = WikibaseKg::new(cfg.clone(), CannedJson::default()).entities_url(&["Q404"]);
        let reply = json!({"entities": {"Q404": {"id": "Q404", "missing": ""}}});
        let kg = WikibaseKg::new(cfg, CannedJson { replies: BTreeMap::from([(url, reply)]) });
        assert!(matches!(kg.entity(&eid("Q404")), Err(Error::NotFound(_))));
    }
}
