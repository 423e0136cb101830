//! File-backed, append-only document store with a hash-chained audit log.
//!
//! Layout under the store root:
//!
//! ```text
//! <root>/
//!   audit.jsonl                      one AuditEntry per line, hash chained
//!   <kind>/<id>/index.jsonl          one VersionInfo per line, in order
//!   <kind>/<id>/v000001.json         version bodies, never rewritten
//! ```
//!
//! `<kind>` is one of `opinions`, `policies`, `facts`, `determinations`,
//! `registry`, `events`. Version files are created with exclusive-create,
//! so two writers racing on the same base version cannot both succeed.
//! Hashes are lowercase hex SHA-256 of the exact stored bytes; timestamps
//! are RFC 3339 UTC.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cnl::VocabularyRegistry;
use crate::engine::{BlockingReason, Flag, NettingDetermination};

pub const REGISTRY_ID: &str = "vocabulary";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Opinions,
    Policies,
    Facts,
    Determinations,
    Registry,
    Events,
}

impl EntityKind {
    pub const ALL: [EntityKind; 6] = [
        EntityKind::Opinions,
        EntityKind::Policies,
        EntityKind::Facts,
        EntityKind::Determinations,
        EntityKind::Registry,
        EntityKind::Events,
    ];

    pub fn dir(self) -> &'static str {
        match self {
            EntityKind::Opinions => "opinions",
            EntityKind::Policies => "policies",
            EntityKind::Facts => "facts",
            EntityKind::Determinations => "determinations",
            EntityKind::Registry => "registry",
            EntityKind::Events => "events",
        }
    }

    pub fn from_dir(s: &str) -> Option<EntityKind> {
        EntityKind::ALL.into_iter().find(|k| k.dir() == s)
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{kind:?} {id:?} not found")]
    NotFound { kind: EntityKind, id: String, version: Option<u64> },
    #[error("version conflict on {kind:?} {id:?}: expected base {expected:?}, latest is {actual:?}")]
    VersionConflict { kind: EntityKind, id: String, expected: Option<u64>, actual: Option<u64> },
    #[error("invalid entity id {0:?}")]
    InvalidId(String),
    #[error("stored bytes for {kind:?} {id:?} v{version} do not match their recorded hash")]
    Corrupt { kind: EntityKind, id: String, version: u64 },
    #[error("audit chain broken at entry {0}")]
    AuditChainBroken(u64),
    #[error("unknown subject {0:?}")]
    UnknownSubject(String),
    #[error("document: {0}")]
    Document(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

impl StoreError {
    pub fn reason_id(&self) -> &'static str {
        match self {
            StoreError::NotFound { .. } => "NotFound",
            StoreError::VersionConflict { .. } => "VersionConflict",
            StoreError::InvalidId(_) => "InvalidId",
            StoreError::Corrupt { .. } => "Corrupt",
            StoreError::AuditChainBroken(_) => "AuditChainBroken",
            StoreError::UnknownSubject(_) => "UnknownSubject",
            StoreError::Document(_) => "InvalidDocument",
            StoreError::Io(_) => "Io",
        }
    }
}

/// One line of an entity's index file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VersionInfo {
    pub version: u64,
    pub hash: String,
    pub saved_at: String,
    pub actor: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuditEntry {
    pub seq: u64,
    pub actor: String,
    pub action: String,
    pub timestamp: String,
    pub kind: Option<EntityKind>,
    pub entity_id: Option<String>,
    pub version: Option<u64>,
    pub before_hash: Option<String>,
    pub after_hash: Option<String>,
    pub prev_entry_hash: String,
    pub entry_hash: String,
}

const GENESIS: &str = "0000000000000000000000000000000000000000000000000000000000000000";

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl AuditEntry {
    fn compute_hash(&self) -> String {
        let mut unsealed = self.clone();
        unsealed.entry_hash = String::new();
        sha256_hex(&serde_json::to_vec(&unsealed).expect("entry serializes"))
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

/// Handle to a store directory. Cheap to clone; clones share the write lock.
#[derive(Clone)]
pub struct Store {
    root: PathBuf,
    write_lock: Arc<Mutex<()>>,
    clock: Clock,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("root", &self.root).finish()
    }
}

pub fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

impl Store {
    pub fn open(root: impl AsRef<Path>) -> Result<Store, StoreError> {
        Self::with_clock(root, Arc::new(Utc::now))
    }

    pub fn with_clock(root: impl AsRef<Path>, clock: Clock) -> Result<Store, StoreError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        Ok(Store { root, write_lock: Arc::new(Mutex::new(())), clock })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }

    fn entity_dir(&self, kind: EntityKind, id: &str) -> Result<PathBuf, StoreError> {
        if !valid_id(id) {
            return Err(StoreError::InvalidId(id.to_string()));
        }
        Ok(self.root.join(kind.dir()).join(id))
    }

    fn version_path(dir: &Path, version: u64) -> PathBuf {
        dir.join(format!("v{version:06}.json"))
    }

    pub fn history(&self, kind: EntityKind, id: &str) -> Result<Vec<VersionInfo>, StoreError> {
        let index = self.entity_dir(kind, id)?.join("index.jsonl");
        let file = match File::open(&index) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        BufReader::new(file)
            .lines()
            .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
            .map(|l| Ok(serde_json::from_str(&l?)?))
            .collect()
    }

    pub fn latest_version(&self, kind: EntityKind, id: &str) -> Result<Option<u64>, StoreError> {
        Ok(self.history(kind, id)?.last().map(|v| v.version))
    }

    pub fn exists(&self, kind: EntityKind, id: &str) -> bool {
        matches!(self.latest_version(kind, id), Ok(Some(_)))
    }

    pub fn list(&self, kind: EntityKind) -> Result<Vec<String>, StoreError> {
        let dir = self.root.join(kind.dir());
        let mut ids = Vec::new();
        match fs::read_dir(&dir) {
            Ok(entries) => {
                for e in entries {
                    let e = e?;
                    if e.file_type()?.is_dir() {
                        if let Some(name) = e.file_name().to_str() {
                            if self.exists(kind, name) {
                                ids.push(name.to_string());
                            }
                        }
                    }
                }
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        ids.sort();
        Ok(ids)
    }

    /// Exact bytes of a version (latest when `version` is `None`).
    pub fn load_bytes(&self, kind: EntityKind, id: &str, version: Option<u64>) -> Result<(VersionInfo, Vec<u8>), StoreError> {
        let history = self.history(kind, id)?;
        let not_found = || StoreError::NotFound { kind, id: id.to_string(), version };
        let info = match version {
            Some(v) => history.into_iter().find(|h| h.version == v).ok_or_else(not_found)?,
            None => history.into_iter().last().ok_or_else(not_found)?,
        };
        let bytes = fs::read(Self::version_path(&self.entity_dir(kind, id)?, info.version))?;
        if sha256_hex(&bytes) != info.hash {
            return Err(StoreError::Corrupt { kind, id: id.to_string(), version: info.version });
        }
        Ok((info, bytes))
    }

    pub fn load<T: DeserializeOwned>(&self, kind: EntityKind, id: &str, version: Option<u64>) -> Result<(VersionInfo, T), StoreError> {
        let (info, bytes) = self.load_bytes(kind, id, version)?;
        Ok((info, serde_json::from_slice(&bytes)?))
    }

    /// Writes a new version. `base` must equal the current latest version
    /// (`None` for a new entity) or the write fails with `VersionConflict`.
    pub fn save_bytes(
        &self,
        kind: EntityKind,
        id: &str,
        base: Option<u64>,
        bytes: &[u8],
        actor: &str,
        action: &str,
    ) -> Result<VersionInfo, StoreError> {
        let dir = self.entity_dir(kind, id)?;
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        let history = self.history(kind, id)?;
        let latest = history.last();
        if latest.map(|v| v.version) != base {
            return Err(StoreError::VersionConflict { kind, id: id.to_string(), expected: base, actual: latest.map(|v| v.version) });
        }
        let version = base.map_or(1, |b| b + 1);
        fs::create_dir_all(&dir)?;
        let mut file = match OpenOptions::new().write(true).create_new(true).open(Self::version_path(&dir, version)) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                return Err(StoreError::VersionConflict { kind, id: id.to_string(), expected: base, actual: Some(version) })
            }
            Err(e) => return Err(e.into()),
        };
        file.write_all(bytes)?;
        file.sync_all()?;

        let now = timestamp(self.now());
        let info = VersionInfo { version, hash: sha256_hex(bytes), saved_at: now.clone(), actor: actor.to_string() };
        append_line(&dir.join("index.jsonl"), &serde_json::to_string(&info)?)?;
        self.append_audit_locked(AuditDraft {
            actor,
            action,
            kind: Some(kind),
            entity_id: Some(id),
            version: Some(version),
            before_hash: latest.map(|v| v.hash.clone()),
            after_hash: Some(info.hash.clone()),
        })?;
        Ok(info)
    }

    pub fn save<T: Serialize>(
        &self,
        kind: EntityKind,
        id: &str,
        base: Option<u64>,
        doc: &T,
        actor: &str,
        action: &str,
    ) -> Result<VersionInfo, StoreError> {
        let mut bytes = serde_json::to_vec_pretty(doc)?;
        bytes.push(b'\n');
        self.save_bytes(kind, id, base, &bytes, actor, action)
    }

    /// Saves on top of whatever the latest version is.
    pub fn save_latest<T: Serialize>(
        &self,
        kind: EntityKind,
        id: &str,
        doc: &T,
        actor: &str,
        action: &str,
    ) -> Result<VersionInfo, StoreError> {
        let base = self.latest_version(kind, id)?;
        self.save(kind, id, base, doc, actor, action)
    }

    /// Audit note not tied to a document write.
    pub fn note(&self, actor: &str, action: &str, kind: Option<EntityKind>, id: Option<&str>) -> Result<AuditEntry, StoreError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        self.append_audit_locked(AuditDraft { actor, action, kind, entity_id: id, version: None, before_hash: None, after_hash: None })
    }

    fn audit_path(&self) -> PathBuf {
        self.root.join("audit.jsonl")
    }

    pub fn audit_trail(&self) -> Result<Vec<AuditEntry>, StoreError> {
        let file = match File::open(self.audit_path()) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        BufReader::new(file)
            .lines()
            .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
            .map(|l| Ok(serde_json::from_str(&l?)?))
            .collect()
    }

    pub fn audit_for(&self, kind: EntityKind, id: &str) -> Result<Vec<AuditEntry>, StoreError> {
        Ok(self.audit_trail()?.into_iter().filter(|e| e.kind == Some(kind) && e.entity_id.as_deref() == Some(id)).collect())
    }

    /// Re-derives every entry hash and link; returns the entry count.
    pub fn verify_audit_chain(&self) -> Result<u64, StoreError> {
        let mut prev = GENESIS.to_string();
        let entries = self.audit_trail()?;
        for (i, e) in entries.iter().enumerate() {
            if e.seq != i as u64 + 1 || e.prev_entry_hash != prev || e.compute_hash() != e.entry_hash {
                return Err(StoreError::AuditChainBroken(e.seq));
            }
            prev = e.entry_hash.clone();
        }
        Ok(entries.len() as u64)
    }

    fn append_audit_locked(&self, d: AuditDraft<'_>) -> Result<AuditEntry, StoreError> {
        let last = self.audit_trail()?.pop();
        let mut entry = AuditEntry {
            seq: last.as_ref().map_or(1, |e| e.seq + 1),
            actor: d.actor.to_string(),
            action: d.action.to_string(),
            timestamp: timestamp(self.now()),
            kind: d.kind,
            entity_id: d.entity_id.map(str::to_string),
            version: d.version,
            before_hash: d.before_hash,
            after_hash: d.after_hash,
            prev_entry_hash: last.map_or_else(|| GENESIS.to_string(), |e| e.entry_hash),
            entry_hash: String::new(),
        };
        entry.entry_hash = entry.compute_hash();
        append_line(&self.audit_path(), &serde_json::to_string(&entry)?)?;
        Ok(entry)
    }

    /// Active vocabulary: the latest stored registry, or the built-in one.
    pub fn registry(&self) -> Result<VocabularyRegistry, StoreError> {
        match self.load::<VocabularyRegistry>(EntityKind::Registry, REGISTRY_ID, None) {
            Ok((_, r)) => Ok(r),
            Err(StoreError::NotFound { .. }) => Ok(VocabularyRegistry::builtin()),
            Err(e) => Err(e),
        }
    }
}

struct AuditDraft<'a> {
    actor: &'a str,
    action: &'a str,
    kind: Option<EntityKind>,
    entity_id: Option<&'a str>,
    version: Option<u64>,
    before_hash: Option<String>,
    after_hash: Option<String>,
}

fn append_line(path: &Path, line: &str) -> io::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(line.as_bytes())?;
    f.write_all(b"\n")?;
    f.sync_data()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TriggerKind {
    AgreementChanged,
    LawChanged,
    TradesChanged,
    ExtremeEvent,
    OpinionUpdated,
    TimeElapsed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TriggerEvent {
    pub kind: TriggerKind,
    /// Opinion id, relationship id, or jurisdiction id.
    pub subject: String,
    pub occurred_at: DateTime<Utc>,
    #[serde(default)]
    pub payload: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StaleNote {
    pub kind: TriggerKind,
    pub subject: String,
    pub occurred_at: DateTime<Utc>,
}

/// A determination as persisted, with lifecycle flags alongside the trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StoredDetermination {
    pub determination: NettingDetermination,
    #[serde(default)]
    pub stale: bool,
    #[serde(default)]
    pub stale_reasons: Vec<StaleNote>,
    #[serde(default)]
    pub manual_override: bool,
    #[serde(default)]
    pub override_note: Option<String>,
}

impl StoredDetermination {
    pub fn new(determination: NettingDetermination) -> Self {
        StoredDetermination { determination, stale: false, stale_reasons: Vec::new(), manual_override: false, override_note: None }
    }

    fn depends_on(&self, subject: &str) -> bool {
        let t = &self.determination.trace;
        t.relationship_id == subject || t.opinions_used.iter().any(|o| o.id == subject) || t.required_jurisdictions.contains(subject)
    }
}

/// A Yes determination that relies on an opinion past its validity period.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExpiryFinding {
    pub determination_id: String,
    pub reasons: Vec<BlockingReason>,
}

fn expired_reasons(d: &NettingDetermination, as_of: NaiveDate, default_validity_days: u32) -> Vec<BlockingReason> {
    let validity = d.trace.policy.validity_period_days.unwrap_or(default_validity_days);
    d.trace
        .opinions_used
        .iter()
        .filter_map(|o| {
            let age_days = (as_of - o.issued_at).num_days();
            (age_days > validity as i64).then(|| BlockingReason::OpinionExpired {
                opinion_id: o.id.clone(),
                age_days,
                validity_days: validity,
            })
        })
        .collect()
}

impl Store {
    pub fn latest_determinations(&self) -> Result<Vec<(String, VersionInfo, StoredDetermination)>, StoreError> {
        self.list(EntityKind::Determinations)?
            .into_iter()
            .map(|id| {
                let (info, d) = self.load::<StoredDetermination>(EntityKind::Determinations, &id, None)?;
                Ok((id, info, d))
            })
            .collect()
    }

    fn subject_known(&self, subject: &str, dets: &[(String, VersionInfo, StoredDetermination)]) -> bool {
        (valid_id(subject)
            && (self.exists(EntityKind::Opinions, subject)
                || self.exists(EntityKind::Facts, subject)
                || self.exists(EntityKind::Determinations, subject)))
            || dets.iter().any(|(_, _, d)| d.depends_on(subject))
    }

    /// Records a trigger event and marks dependent determinations stale.
    /// Returns the ids of the affected determinations.
    pub fn record_event(&self, event: &TriggerEvent, actor: &str) -> Result<Vec<String>, StoreError> {
        let dets = self.latest_determinations()?;
        if !self.subject_known(&event.subject, &dets) {
            return Err(StoreError::UnknownSubject(event.subject.clone()));
        }
        let seq = self.list(EntityKind::Events)?.len() + 1;
        self.save(
            EntityKind::Events,
            &format!("evt-{seq:06}"),
            None,
            event,
            actor,
            &format!("event {:?} on {}", event.kind, event.subject),
        )?;

        let mut affected = Vec::new();
        for (id, info, mut d) in dets {
            if !d.depends_on(&event.subject) {
                continue;
            }
            d.stale = true;
            d.stale_reasons.push(StaleNote { kind: event.kind, subject: event.subject.clone(), occurred_at: event.occurred_at });
            self.save(EntityKind::Determinations, &id, Some(info.version), &d, actor, &format!("mark stale: {:?}", event.kind))?;
            affected.push(id);
        }
        Ok(affected)
    }

    /// Rewrites every non-overridden Yes determination that relies on an
    /// expired opinion as a new No version. Returns the flipped ids.
    pub fn sweep_expiry(&self, as_of: NaiveDate, default_validity_days: u32, actor: &str) -> Result<Vec<String>, StoreError> {
        let mut flipped = Vec::new();
        for (id, info, d) in self.latest_determinations()? {
            if d.determination.flag() != Flag::Yes {
                continue;
            }
            let reasons = expired_reasons(&d.determination, as_of, default_validity_days);
            if reasons.is_empty() {
                continue;
            }
            if d.manual_override {
                self.note(actor, &format!("sweep {as_of}: skipped, manual override"), Some(EntityKind::Determinations), Some(&id))?;
                continue;
            }
            let mut next = d.clone();
            next.determination.determined_at = self.now();
            let trace = &mut next.determination.trace;
            trace.flag = Flag::No;
            trace.as_of_date = as_of;
            for o in &mut trace.opinions_used {
                o.age_days = (as_of - o.issued_at).num_days();
            }
            trace.blocking_reasons.extend(reasons);
            self.save(EntityKind::Determinations, &id, Some(info.version), &next, actor, &format!("sweep {as_of}: OpinionExpired"))?;
            flipped.push(id);
        }
        Ok(flipped)
    }

    /// Store-wide check that no live Yes relies on an expired opinion.
    pub fn expiry_violations(&self, as_of: NaiveDate, default_validity_days: u32) -> Result<Vec<ExpiryFinding>, StoreError> {
        Ok(self
            .latest_determinations()?
            .into_iter()
            .filter(|(_, _, d)| d.determination.flag() == Flag::Yes && !d.manual_override)
            .filter_map(|(id, _, d)| {
                let reasons = expired_reasons(&d.determination, as_of, default_validity_days);
                (!reasons.is_empty()).then_some(ExpiryFinding { determination_id: id, reasons })
            })
            .collect())
    }

    /// Yes determinations flagged stale by a trigger event; for human review.
    pub fn stale_report(&self) -> Result<Vec<String>, StoreError> {
        Ok(self
            .latest_determinations()?
            .into_iter()
            .filter(|(_, _, d)| d.stale && d.determination.flag() == Flag::Yes)
            .map(|(id, _, _)| id)
            .collect())
    }

    pub fn set_override(&self, determination_id: &str, on: bool, note: &str, actor: &str) -> Result<VersionInfo, StoreError> {
        let (info, mut d) = self.load::<StoredDetermination>(EntityKind::Determinations, determination_id, None)?;
        d.manual_override = on;
        d.override_note = Some(note.to_string());
        self.save(
            EntityKind::Determinations,
            determination_id,
            Some(info.version),
            &d,
            actor,
            if on { "manual override set" } else { "manual override cleared" },
        )
    }
}
