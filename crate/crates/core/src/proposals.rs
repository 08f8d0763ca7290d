//! Fact proposals awaiting human review.
//!
//! State lives in an append-only JSONL event log; a periodic snapshot speeds up
//! reopening. Replaying the log from empty always reproduces the live state.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, PropertyId};
use crate::util::{stable_id, write_atomic};

pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 500;
pub const DEFAULT_SNAPSHOT_EVERY: usize = 100;

const EVENTS_FILE: &str = "events.jsonl";
const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Approved,
    Rejected,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pending => "pending",
            Status::Approved => "approved",
            Status::Rejected => "rejected",
        })
    }
}

impl std::str::FromStr for Status {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pending" => Ok(Status::Pending),
            "approved" => Ok(Status::Approved),
            "rejected" => Ok(Status::Rejected),
            _ => Err(Error::Precondition(format!("unknown status {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProposedObject {
    Entity {
        id: EntityId,
    },
    Literal {
        value: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        datatype: Option<String>,
    },
    /// Span text that matched no KG entity; shown to reviewers but not approvable.
    Unlinked {
        text: String,
    },
}

impl ProposedObject {
    pub fn is_linked(&self) -> bool {
        !matches!(self, ProposedObject::Unlinked { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub source_url: String,
    /// Byte range in the cached raw snapshot.
    pub raw_byte_range: Range<usize>,
    /// Character range in the clean text.
    pub clean_span: Range<usize>,
    pub text: String,
    pub snapshot_hash: String,
    pub retrieved_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactProposal {
    pub id: String,
    pub subject: EntityId,
    pub property: PropertyId,
    /// External-identifier property of the page the evidence came from.
    pub domain: PropertyId,
    pub object: ProposedObject,
    pub evidence: Evidence,
    pub extraction_score: f64,
    #[serde(default)]
    pub linking_score: Option<f64>,
    pub status: Status,
    #[serde(default)]
    pub reviewer: Option<String>,
    #[serde(default)]
    pub decided_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub note: Option<String>,
    /// Set by the store on acceptance.
    #[serde(default)]
    pub created_at: Option<DateTime<Utc>>,
}

impl FactProposal {
    /// Same subject, property and evidence location always give the same id.
    pub fn compute_id(subject: &EntityId, property: &PropertyId, evidence: &Evidence) -> String {
        stable_id(&[
            subject.as_str(),
            property.as_str(),
            &evidence.source_url,
            &evidence.snapshot_hash,
            &format!("{}..{}", evidence.clean_span.start, evidence.clean_span.end),
        ])
    }

    /// A new pending proposal with its id filled in.
    pub fn pending(
        subject: EntityId,
        property: PropertyId,
        domain: PropertyId,
        object: ProposedObject,
        evidence: Evidence,
        extraction_score: f64,
        linking_score: Option<f64>,
    ) -> Self {
        Self {
            id: Self::compute_id(&subject, &property, &evidence),
            subject,
            property,
            domain,
            object,
            evidence,
            extraction_score,
            linking_score,
            status: Status::Pending,
            reviewer: None,
            decided_at: None,
            note: None,
            created_at: None,
        }
    }

    /// Checks required of a proposal entering the store.
    pub fn validate_new(&self) -> std::result::Result<(), String> {
        if self.status != Status::Pending {
            return Err(format!("status must be pending on submit, got {}", self.status));
        }
        if self.reviewer.is_some() || self.decided_at.is_some() {
            return Err("new proposals cannot carry a decision".into());
        }
        let ev = &self.evidence;
        if ev.text.trim().is_empty() {
            return Err("evidence text is empty".into());
        }
        if ev.clean_span.start >= ev.clean_span.end {
            return Err(format!("empty clean span {:?}", ev.clean_span));
        }
        if ev.raw_byte_range.start > ev.raw_byte_range.end {
            return Err(format!("inverted raw range {:?}", ev.raw_byte_range));
        }
        if !(0.0..=1.0).contains(&self.extraction_score) {
            return Err(format!("extraction score {} outside [0,1]", self.extraction_score));
        }
        if self.linking_score.is_some_and(|s| !s.is_finite()) {
            return Err("linking score is not finite".into());
        }
        let expected = Self::compute_id(&self.subject, &self.property, ev);
        if self.id != expected {
            return Err(format!("id does not match content (expected {expected})"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Approve,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub proposal_id: String,
    pub action: Action,
    pub reviewer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Submitted {
        at: DateTime<Utc>,
        proposal: FactProposal,
    },
    Decided {
        at: DateTime<Utc>,
        decision: ReviewDecision,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitReport {
    pub accepted: usize,
    pub duplicates: usize,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListFilter {
    pub status: Option<Status>,
    pub subject: Option<EntityId>,
    pub domain: Option<PropertyId>,
}

impl ListFilter {
    fn matches(&self, p: &FactProposal) -> bool {
        self.status.is_none_or(|s| s == p.status)
            && self.subject.as_ref().is_none_or(|s| *s == p.subject)
            && self.domain.as_ref().is_none_or(|d| *d == p.domain)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub items: Vec<FactProposal>,
    /// Id of the last item, when more may follow.
    pub next_cursor: Option<String>,
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

/// Pure state: proposals by id plus the ordering key used for listing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StoreState {
    proposals: BTreeMap<String, FactProposal>,
    events: usize,
}

impl StoreState {
    /// Apply one event; illegal events are errors and leave the state unchanged.
    pub fn apply(&mut self, ev: &Event) -> Result<()> {
        match ev {
            Event::Submitted { at, proposal } => {
                if self.proposals.contains_key(&proposal.id) {
                    return Err(Error::Conflict(format!("proposal {} already submitted", proposal.id)));
                }
                proposal.validate_new().map_err(|reason| Error::InvalidProposal {
                    id: proposal.id.clone(),
                    reason,
                })?;
                let mut p = proposal.clone();
                p.created_at = Some(*at);
                self.proposals.insert(p.id.clone(), p);
            }
            Event::Decided { at, decision } => {
                let p = self.check_decision(decision)?;
                let p = self.proposals.get_mut(&p).expect("checked");
                p.status = match decision.action {
                    Action::Approve => Status::Approved,
                    Action::Reject => Status::Rejected,
                };
                p.reviewer = Some(decision.reviewer.clone());
                p.note = decision.note.clone();
                p.decided_at = Some(*at);
            }
        }
        self.events += 1;
        Ok(())
    }

    fn check_decision(&self, d: &ReviewDecision) -> Result<String> {
        if d.reviewer.trim().is_empty() {
            return Err(Error::Precondition("reviewer must be non-empty".into()));
        }
        let p = self
            .proposals
            .get(&d.proposal_id)
            .ok_or_else(|| Error::NotFound(format!("proposal {}", d.proposal_id)))?;
        if p.status != Status::Pending {
            return Err(Error::Conflict(format!("proposal {} is already {}", p.id, p.status)));
        }
        if d.action == Action::Approve && !p.object.is_linked() {
            return Err(Error::Precondition(format!(
                "proposal {} has an unlinked object and cannot be approved",
                p.id
            )));
        }
        Ok(p.id.clone())
    }

    pub fn get(&self, id: &str) -> Option<&FactProposal> {
        self.proposals.get(id)
    }

    pub fn len(&self) -> usize {
        self.proposals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proposals.is_empty()
    }

    pub fn event_count(&self) -> usize {
        self.events
    }

    /// All proposals ordered by (created_at, id).
    pub fn ordered(&self) -> Vec<&FactProposal> {
        let mut v: Vec<&FactProposal> = self.proposals.values().collect();
        v.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        v
    }

    pub fn list(&self, filter: &ListFilter, cursor: Option<&str>, limit: usize) -> Result<Page> {
        let limit = limit.clamp(1, MAX_PAGE_SIZE);
        let all = self.ordered();
        let start = match cursor {
            None => 0,
            Some(c) => {
                all.iter()
                    .position(|p| p.id == c)
                    .ok_or_else(|| Error::Precondition(format!("unknown cursor {c:?}")))?
                    + 1
            }
        };
        let mut rest = all[start..].iter().filter(|p| filter.matches(p));
        let items: Vec<FactProposal> = rest.by_ref().take(limit).map(|p| (*p).clone()).collect();
        let next_cursor = match (items.last(), rest.next()) {
            (Some(last), Some(_)) => Some(last.id.clone()),
            _ => None,
        };
        Ok(Page { items, next_cursor })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    events: usize,
    proposals: Vec<FactProposal>,
}

/// Event-sourced proposal store, optionally backed by a directory.
pub struct ProposalStore {
    state: StoreState,
    dir: Option<PathBuf>,
    log: Option<File>,
    snapshot_every: usize,
    clock: Clock,
}

impl fmt::Debug for ProposalStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProposalStore")
            .field("dir", &self.dir)
            .field("proposals", &self.state.len())
            .finish()
    }
}

fn system_clock() -> Clock {
    Arc::new(Utc::now)
}

/// Read every event in a log file.
pub fn read_events(path: &Path) -> Result<Vec<Event>> {
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(&line)
            .map_err(|e| Error::Integrity(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(ev);
    }
    Ok(out)
}

/// Fold events from empty.
pub fn replay(events: &[Event]) -> Result<StoreState> {
    let mut s = StoreState::default();
    for (i, ev) in events.iter().enumerate() {
        s.apply(ev)
            .map_err(|e| Error::Integrity(format!("event {}: {e}", i + 1)))?;
    }
    Ok(s)
}

impl ProposalStore {
    pub fn in_memory() -> Self {
        Self {
            state: StoreState::default(),
            dir: None,
            log: None,
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
            clock: system_clock(),
        }
    }

    /// Open (or create) a store in `dir`, restoring snapshot plus later events.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let events = read_events(&dir.join(EVENTS_FILE))?;
        let snap_path = dir.join(SNAPSHOT_FILE);
        let mut state = StoreState::default();
        let mut skip = 0;
        if snap_path.exists() {
            let text = std::fs::read_to_string(&snap_path).map_err(|e| Error::io(&snap_path, e))?;
            let snap: Snapshot = serde_json::from_str(&text)?;
            // a snapshot ahead of the log means the log was truncated
            if snap.events <= events.len() {
                state.proposals = snap.proposals.into_iter().map(|p| (p.id.clone(), p)).collect();
                state.events = snap.events;
                skip = snap.events;
            }
        }
        for (i, ev) in events.iter().enumerate().skip(skip) {
            state
                .apply(ev)
                .map_err(|e| Error::Integrity(format!("event {}: {e}", i + 1)))?;
        }
        let log_path = dir.join(EVENTS_FILE);
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?;
        Ok(Self {
            state,
            dir: Some(dir),
            log: Some(log),
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
            clock: system_clock(),
        })
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_snapshot_every(mut self, n: usize) -> Self {
        self.snapshot_every = n.max(1);
        self
    }

    pub fn state(&self) -> &StoreState {
        &self.state
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn events_path(&self) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(EVENTS_FILE))
    }

    /// Persist, then apply. The event is applied to a scratch copy first so a
    /// rejected event never reaches the log.
    fn commit(&mut self, ev: Event) -> Result<()> {
        let mut next = self.state.clone();
        next.apply(&ev)?;
        if let Some(log) = self.log.as_mut() {
            let path = self.dir.as_ref().expect("dir").join(EVENTS_FILE);
            let mut line = serde_json::to_string(&ev)?;
            line.push('\n');
            log.write_all(line.as_bytes())
                .and_then(|_| log.flush())
                .map_err(|e| Error::io(&path, e))?;
        }
        self.state = next;
        if self.dir.is_some() && self.state.events.is_multiple_of(self.snapshot_every) {
            self.write_snapshot()?;
        }
        Ok(())
    }

    pub fn write_snapshot(&self) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let snap = Snapshot {
            events: self.state.events,
            proposals: self.state.proposals.values().cloned().collect(),
        };
        write_atomic(&dir.join(SNAPSHOT_FILE), serde_json::to_string(&snap)?.as_bytes())
    }

    /// Idempotent batch submit: known ids are skipped, invalid items reported.
    pub fn submit(&mut self, proposals: Vec<FactProposal>) -> Result<SubmitReport> {
        let mut report = SubmitReport::default();
        for p in proposals {
            if self.state.proposals.contains_key(&p.id) {
                report.duplicates += 1;
                continue;
            }
            if let Err(reason) = p.validate_new() {
                report.rejected.push(Rejection { id: p.id, reason });
                continue;
            }
            let ev = Event::Submitted {
                at: (self.clock)(),
                proposal: p,
            };
            self.commit(ev)?;
            report.accepted += 1;
        }
        Ok(report)
    }

    pub fn decide(&mut self, decision: ReviewDecision) -> Result<FactProposal> {
        self.state.check_decision(&decision)?;
        let id = decision.proposal_id.clone();
        self.commit(Event::Decided {
            at: (self.clock)(),
            decision,
        })?;
        Ok(self.state.proposals[&id].clone())
    }

    pub fn get(&self, id: &str) -> Result<FactProposal> {
        self.state
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("proposal {id}")))
    }

    pub fn list(&self, filter: &ListFilter, cursor: Option<&str>, limit: usize) -> Result<Page> {
        self.state.list(filter, cursor, limit)
    }

    pub fn export(&self, format: ExportFormat) -> Result<String> {
        export_approved(&self.state, format)
    }
}

// ---------------------------------------------------------------- export

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Json,
    QuickStatements,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "quickstatements" | "qs" => Ok(ExportFormat::QuickStatements),
            _ => Err(Error::Precondition(format!("unknown export format {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reference {
    pub url: String,
    pub retrieved: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub proposal_id: String,
    pub subject: EntityId,
    pub property: PropertyId,
    pub object: ProposedObject,
    pub reference: Reference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementFile {
    pub format: String,
    pub version: u32,
    pub statements: Vec<Statement>,
}

pub fn approved_statements(state: &StoreState) -> Vec<Statement> {
    state
        .ordered()
        .into_iter()
        .filter(|p| p.status == Status::Approved)
        .map(|p| Statement {
            proposal_id: p.id.clone(),
            subject: p.subject.clone(),
            property: p.property.clone(),
            object: p.object.clone(),
            reference: Reference {
                url: p.evidence.source_url.clone(),
                retrieved: p.evidence.retrieved_at,
            },
        })
        .collect()
}

fn qs_string(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\\\""))
}

/// `1997` → year precision, `1997-03-14` → day precision.
fn qs_time(v: &str) -> Option<String> {
    let v = v.trim();
    let year_only = v.len() == 4 && v.bytes().all(|b| b.is_ascii_digit());
    if year_only {
        return Some(format!("+{v}-00-00T00:00:00Z/9"));
    }
    chrono::NaiveDate::parse_from_str(v, "%Y-%m-%d")
        .ok()
        .map(|d| format!("+{}T00:00:00Z/11", d.format("%Y-%m-%d")))
}

fn qs_object(o: &ProposedObject) -> String {
    match o {
        ProposedObject::Entity { id } => id.to_string(),
        ProposedObject::Literal { value, datatype } => match datatype.as_deref() {
            Some("time") => qs_time(value).unwrap_or_else(|| qs_string(value)),
            Some("quantity") if value.trim().parse::<f64>().is_ok() => value.trim().to_string(),
            _ => qs_string(value),
        },
        ProposedObject::Unlinked { text } => qs_string(text),
    }
}

/// QuickStatements v1: one tab-separated line per statement with S854 (URL) and S813 (retrieved) sources.
pub fn quickstatements(statements: &[Statement]) -> String {
    statements
        .iter()
        .map(|s| {
            format!(
                "{}\t{}\t{}\tS854\t{}\tS813\t+{}T00:00:00Z/11\n",
                s.subject,
                s.property,
                qs_object(&s.object),
                qs_string(&s.reference.url),
                s.reference.retrieved.format("%Y-%m-%d"),
            )
        })
        .collect()
}

pub fn export_approved(state: &StoreState, format: ExportFormat) -> Result<String> {
    let statements = approved_statements(state);
    Ok(match format {
        ExportFormat::Json => serde_json::to_string_pretty(&StatementFile {
            format: "webextractor-statements".into(),
            version: 1,
            statements,
        })?,
        ExportFormat::QuickStatements => quickstatements(&statements),
    })
}

pub fn rfc3339(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use std::sync::atomic::{AtomicI64, Ordering};

    fn eid(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }
    fn pid(s: &str) -> PropertyId {
        PropertyId::new(s).unwrap()
    }

    pub(crate) fn ticking_clock() -> Clock {
        let t = Arc::new(AtomicI64::new(1_700_000_000));
        Arc::new(move || Utc.timestamp_opt(t.fetch_add(1, Ordering::SeqCst), 0).unwrap())
    }

    fn proposal(subject: &str, span: usize, object: ProposedObject) -> FactProposal {
        let text = "x".repeat(span);
        FactProposal::pending(
            eid(subject),
            pid("P571"),
            pid("P434"),
            object,
            Evidence {
                source_url: format!("https://musicbrainz.org/artist/{subject}"),
                raw_byte_range: 10..10 + span,
                clean_span: 0..span,
                text,
                snapshot_hash: "h".into(),
                retrieved_at: Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap(),
            },
            1.0,
            None,
        )
    }

    fn literal(v: &str) -> ProposedObject {
        ProposedObject::Literal { value: v.into(), datatype: Some("time".into()) }
    }

    fn decision(id: &str, action: Action) -> ReviewDecision {
        ReviewDecision { proposal_id: id.into(), action, reviewer: "ana".into(), note: None }
    }

    #[test]
    fn submit_is_idempotent_and_validated() {
        let mut s = ProposalStore::in_memory().with_clock(ticking_clock());
        let ps = vec![proposal("Q1", 1, literal("1997")), proposal("Q2", 2, literal("1998")), proposal("Q3", 3, literal("1999"))];
        let r = s.submit(ps.clone()).unwrap();
        assert_eq!(r.accepted, 3);
        let pending = s.list(&ListFilter { status: Some(Status::Pending), ..Default::default() }, None, 50).unwrap();
        assert_eq!(pending.items.len(), 3);
        let before = s.state().clone();
        let r = s.submit(vec![ps[0].clone()]).unwrap();
        assert_eq!((r.accepted, r.duplicates), (0, 1));
        assert_eq!(s.state(), &before);

        let mut approved = proposal("Q4", 1, literal("2000"));
        approved.status = Status::Approved;
        let r = s.submit(vec![approved]).unwrap();
        assert_eq!(r.rejected.len(), 1);
        assert!(r.rejected[0].reason.contains("pending"));
    }

    #[test]
    fn listing_filters_and_pages() {
        let mut s = ProposalStore::in_memory().with_clock(ticking_clock());
        s.submit(vec![
            proposal("Q994013", 1, literal("1")),
            proposal("Q2", 2, literal("2")),
            proposal("Q3", 3, literal("3")),
        ])
        .unwrap();
        let only = s.list(&ListFilter { subject: Some(eid("Q994013")), ..Default::default() }, None, 50).unwrap();
        assert_eq!(only.items.len(), 1);
        let p1 = s.list(&ListFilter::default(), None, 2).unwrap();
        assert_eq!(p1.items.len(), 2);
        let p2 = s.list(&ListFilter::default(), p1.next_cursor.as_deref(), 2).unwrap();
        assert_eq!(p2.items.len(), 1);
        assert!(p2.next_cursor.is_none());
        assert!(p1.items.iter().all(|a| p2.items.iter().all(|b| a.id != b.id)));
    }

    #[test]
    fn decisions_are_final() {
        let mut s = ProposalStore::in_memory().with_clock(ticking_clock());
        let p = proposal("Q1", 4, literal("1997"));
        let q = proposal("Q2", 4, literal("1997"));
        s.submit(vec![p.clone(), q.clone()]).unwrap();
        let a = s.decide(decision(&p.id, Action::Approve)).unwrap();
        assert_eq!((a.status, a.reviewer.as_deref()), (Status::Approved, Some("ana")));
        assert!(matches!(s.decide(decision(&p.id, Action::Reject)), Err(Error::Conflict(_))));
        assert!(matches!(s.decide(decision("nope", Action::Reject)), Err(Error::NotFound(_))));
        let mut d = decision(&q.id, Action::Reject);
        d.note = Some("wrong date".into());
        let r = s.decide(d).unwrap();
        assert_eq!((r.status, r.note.as_deref()), (Status::Rejected, Some("wrong date")));
    }

    #[test]
    fn unlinked_cannot_be_approved() {
        let mut s = ProposalStore::in_memory();
        let p = proposal("Q1", 2, ProposedObject::Unlinked { text: "xx".into() });
        s.submit(vec![p.clone()]).unwrap();
        assert!(matches!(s.decide(decision(&p.id, Action::Approve)), Err(Error::Precondition(_))));
        assert_eq!(s.decide(decision(&p.id, Action::Reject)).unwrap().status, Status::Rejected);
    }

    #[test]
    fn exports() {
        let mut s = ProposalStore::in_memory().with_clock(ticking_clock());
        let empty: StatementFile = serde_json::from_str(&s.export(ExportFormat::Json).unwrap()).unwrap();
        assert!(empty.statements.is_empty());
        assert_eq!(empty.format, "webextractor-statements");

        let p = proposal("Q113585063", 4, literal("1997"));
        let r = proposal("Q2", 4, literal("1990"));
        s.submit(vec![p.clone(), r.clone()]).unwrap();
        s.decide(decision(&p.id, Action::Approve)).unwrap();
        s.decide(decision(&r.id, Action::Reject)).unwrap();
        let qs = s.export(ExportFormat::QuickStatements).unwrap();
        assert_eq!(
            qs,
            "Q113585063\tP571\t+1997-00-00T00:00:00Z/9\tS854\t\"https://musicbrainz.org/artist/Q113585063\"\tS813\t+2024-05-01T00:00:00Z/11\n"
        );
        let file: StatementFile = serde_json::from_str(&s.export(ExportFormat::Json).unwrap()).unwrap();
        assert_eq!(file.statements.len(), 1);
        assert_eq!(file.statements[0].subject, eid("Q113585063"));
    }

    #[test]
    fn log_replay_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = ProposalStore::open(dir.path()).unwrap().with_clock(ticking_clock()).with_snapshot_every(3);
        let ps: Vec<_> = (1..=5).map(|i| proposal(&format!("Q{i}"), i, literal("1997"))).collect();
        s.submit(ps.clone()).unwrap();
        s.decide(decision(&ps[0].id, Action::Approve)).unwrap();
        s.decide(decision(&ps[1].id, Action::Reject)).unwrap();
        let live = s.state().clone();
        drop(s);
        let replayed = replay(&read_events(&dir.path().join(EVENTS_FILE)).unwrap()).unwrap();
        assert_eq!(replayed, live);
        assert!(dir.path().join(SNAPSHOT_FILE).exists());
        let reopened = ProposalStore::open(dir.path()).unwrap();
        assert_eq!(reopened.state(), &live);
    }

    #[test]
    fn object_json_shape() {
        let v = serde_json::to_value(ProposedObject::Entity { id: eid("Q5") }).unwrap();
        assert_eq!(v, serde_json::json!({"kind": "entity", "id": "Q5"}));
        let v = serde_json::to_value(ProposedObject::Unlinked { text: "t".into() }).unwrap();
        assert_eq!(v, serde_json::json!({"kind": "unlinked", "text": "t"}));
    }
}
