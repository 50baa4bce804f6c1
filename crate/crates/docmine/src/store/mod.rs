//! The persistent project store.
//!
//! One [`Store`] owns all projects, files, users, sessions, document
//! artifacts and the correction log. Every operation runs under a single
//! mutex, so writes are serialized and reads see committed state. After each
//! successful write the whole state is written to the [`Storage`] backend as
//! one JSON snapshot; parsed page models and uploaded PDFs are kept as
//! separate immutable blobs.
//!
//! Calls to external adapters (metadata parsers, detectors, OCR) happen
//! outside the mutex: the operation reads what it needs, releases the store,
//! computes, and then commits after re-validating.

mod clock;
mod document;
mod persist;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Mutex, MutexGuard, OnceLock};

use docmine_core::correction::{Adjustment, CorrectionEvent};
use docmine_core::geom::PageModel;
use docmine_core::integrate::{HeaderConfig, HeaderEdit, IntegrationOptions};
use docmine_core::lock::{FileLock, LockLease, UserId, DEFAULT_LEASE};
use docmine_core::search::SearchIndex;
use docmine_core::table::TableConfig;
use docmine_core::text::LabelConfig;
use docmine_core::time::{Duration, Timestamp};
use docmine_core::CoreError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adapters::Adapters;
use crate::export::{header_from_spreadsheet, ExportError};
use crate::ingest::checksum;
use crate::rules::validate_labels;

pub use clock::{Clock, SystemClock, VirtualClock};
pub use document::{DocumentState, MetaView};
pub use persist::{DirStorage, MemoryStorage, Storage, SNAPSHOT_KEY};

pub const SCHEMA_VERSION: u32 = 1;
pub const RECENT_LIMIT: usize = 20;
pub const DEFAULT_SESSION_TTL: Duration = Duration::from_mins(12 * 60);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error("authentication required")]
    Unauthenticated,
    #[error("invalid user id or password")]
    InvalidCredentials,
    #[error("user `{0}` already exists")]
    UserExists(String),
    #[error("unknown project `{0}`")]
    UnknownProject(String),
    #[error("unknown document `{0}`")]
    UnknownDocument(String),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("unknown map `{0}`")]
    UnknownMap(String),
    #[error("identical file already uploaded as `{existing}`")]
    DuplicateChecksum { existing: String },
    #[error("uploaded file is empty")]
    EmptyUpload,
    #[error("document `{0}` has not been parsed")]
    NotParsed(String),
    #[error("`{0}` changed while the operation was running; retry")]
    Conflict(String),
    #[error("stored data has schema version {found}; this build reads {expected}")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("storage failure: {0}")]
    Storage(String),
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        Self::Storage(e.to_string())
    }
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

/// Tunables that are not persisted with the data.
#[derive(Debug, Clone)]
pub struct StoreSettings {
    pub lease: Duration,
    pub session_ttl: Duration,
    pub bcrypt_cost: u32,
    pub table: TableConfig,
    pub residual_tolerance: f64,
    pub heuristic_priority: i32,
    pub integration: IntegrationOptions,
}

impl Default for StoreSettings {
    fn default() -> Self {
        Self {
            lease: DEFAULT_LEASE,
            session_ttl: DEFAULT_SESSION_TTL,
            bcrypt_cost: bcrypt::DEFAULT_COST,
            table: TableConfig::default(),
            residual_tolerance: docmine_core::map::DEFAULT_RESIDUAL_TOLERANCE,
            heuristic_priority: docmine_core::meta::HEURISTIC_PRIORITY,
            integration: IntegrationOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub user_id: UserId,
    pub display_name: String,
    pub password_hash: String,
}

/// A user without the credential.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserView {
    pub user_id: UserId,
    pub display_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub user_id: UserId,
    pub expires_at: Timestamp,
}

/// Sessions are stored under the token's SHA-256, never the token itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredSession {
    pub user_id: UserId,
    pub expires_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub project_id: String,
    pub name: String,
    pub description: String,
    pub label_configs: Vec<LabelConfig>,
    pub header: Option<HeaderConfig>,
    pub created_by: UserId,
    pub created_at: Timestamp,
    pub updated_at: Timestamp,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NewProject {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub label_configs: Vec<LabelConfig>,
    #[serde(default)]
    pub header: Option<HeaderConfig>,
}

/// Partial settings update; absent fields are left alone.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SettingsUpdate {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub label_configs: Option<Vec<LabelConfig>>,
    #[serde(default)]
    pub header: Option<HeaderConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum ParseStatus {
    Pending,
    Parsed,
    Failed { detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub file_id: String,
    /// Upload order within the store.
    pub seq: u64,
    pub project_id: String,
    pub filename: String,
    pub checksum: String,
    pub uploader: UserId,
    pub last_editor: Option<UserId>,
    pub uploaded_at: Timestamp,
    pub updated_at: Timestamp,
    pub principal: Option<UserId>,
    pub lock: Option<LockLease>,
    pub status: ParseStatus,
    pub page_count: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl FileRecord {
    fn file_lock(&mut self) -> FileLock {
        FileLock { lease: self.lock.take(), principal: self.principal.take() }
    }

    fn restore_lock(&mut self, lock: FileLock) {
        self.lock = lock.lease;
        self.principal = lock.principal;
    }

    /// Runs `f` on the lock state; changes are kept even when `f` fails.
    fn with_lock<T>(&mut self, f: impl FnOnce(&mut FileLock) -> Result<T, CoreError>) -> Result<T, CoreError> {
        let mut lock = self.file_lock();
        let out = f(&mut lock);
        self.restore_lock(lock);
        out
    }

    /// Copy with an expired lease hidden.
    fn view(&self, now: Timestamp) -> FileRecord {
        let mut r = self.clone();
        r.lock = r.lock.filter(|l| l.is_active(now));
        r
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub project: u64,
    pub file: u64,
    pub event: u64,
    pub confirmation: u64,
}

/// Everything the store persists in its snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreState {
    pub schema_version: u32,
    pub counters: Counters,
    pub users: BTreeMap<UserId, User>,
    pub sessions: BTreeMap<String, StoredSession>,
    pub projects: BTreeMap<String, Project>,
    pub files: BTreeMap<String, FileRecord>,
    pub documents: BTreeMap<String, DocumentState>,
    pub corrections: Vec<CorrectionEvent>,
    /// Most recently opened files per user, newest first.
    pub recent: BTreeMap<UserId, Vec<String>>,
}

impl Default for StoreState {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            counters: Counters::default(),
            users: BTreeMap::new(),
            sessions: BTreeMap::new(),
            projects: BTreeMap::new(),
            files: BTreeMap::new(),
            documents: BTreeMap::new(),
            corrections: Vec::new(),
            recent: BTreeMap::new(),
        }
    }
}

pub(crate) struct Inner {
    pub(crate) state: StoreState,
    /// Per-project search indexes; rebuilt on load.
    search: BTreeMap<String, SearchIndex>,
}

impl Inner {
    fn file(&self, id: &str) -> Result<&FileRecord> {
        self.state.files.get(id).ok_or_else(|| StoreError::UnknownDocument(id.into()))
    }

    fn file_mut(&mut self, id: &str) -> Result<&mut FileRecord> {
        self.state.files.get_mut(id).ok_or_else(|| StoreError::UnknownDocument(id.into()))
    }

    fn project(&self, id: &str) -> Result<&Project> {
        self.state.projects.get(id).ok_or_else(|| StoreError::UnknownProject(id.into()))
    }

    fn reindex(&mut self, file_id: &str) {
        let Some(rec) = self.state.files.get(file_id) else { return };
        let meta = self.state.documents.get(file_id).map(|d| d.meta.clone()).unwrap_or_default();
        self.search.entry(rec.project_id.clone()).or_default().upsert(file_id, &meta, rec.updated_at);
    }

    fn log(&mut self, doc_id: &str, adj: Adjustment, user: &UserId, now: Timestamp) {
        self.state.counters.event += 1;
        let ev = CorrectionEvent::from_adjustment(self.state.counters.event, doc_id, adj, user, now);
        self.state.corrections.push(ev);
    }

    fn files_sorted<'a>(&'a self, pred: impl Fn(&FileRecord) -> bool + 'a) -> Vec<&'a FileRecord> {
        let mut v: Vec<&FileRecord> = self.state.files.values().filter(|f| pred(f)).collect();
        v.sort_by_key(|f| f.seq);
        v
    }
}

fn hash_token(token: &str) -> String {
    hex::encode(Sha256::digest(token.as_bytes()))
}

fn pdf_key(checksum: &str) -> String {
    format!("pdf/{checksum}.pdf")
}

fn pages_key(file_id: &str) -> String {
    format!("pages/{file_id}.json")
}

pub struct Store {
    inner: Mutex<Inner>,
    storage: Box<dyn Storage>,
    clock: Box<dyn Clock>,
    settings: StoreSettings,
    adapters: Adapters,
    dummy_hash: OnceLock<String>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("settings", &self.settings).field("adapters", &self.adapters).finish_non_exhaustive()
    }
}

impl Store {
    /// Opens the store, loading any existing snapshot from `storage`.
    pub fn open(storage: Box<dyn Storage>, clock: Box<dyn Clock>, settings: StoreSettings, adapters: Adapters) -> Result<Self> {
        let mut state: StoreState = match storage.get(SNAPSHOT_KEY)? {
            Some(bytes) => serde_json::from_slice(&bytes).map_err(|e| StoreError::Storage(format!("corrupt snapshot: {e}")))?,
            None => StoreState::default(),
        };
        if state.schema_version != SCHEMA_VERSION {
            return Err(StoreError::SchemaVersion { found: state.schema_version, expected: SCHEMA_VERSION });
        }
        for (id, doc) in state.documents.iter_mut() {
            let bytes = storage.get(&pages_key(id))?.ok_or_else(|| StoreError::Storage(format!("missing page models for `{id}`")))?;
            doc.pages = serde_json::from_slice(&bytes).map_err(|e| StoreError::Storage(format!("corrupt page models for `{id}`: {e}")))?;
        }
        let mut inner = Inner { state, search: BTreeMap::new() };
        let ids: Vec<String> = inner.state.files.keys().cloned().collect();
        for id in ids {
            inner.reindex(&id);
        }
        Ok(Self { inner: Mutex::new(inner), storage, clock, settings, adapters, dummy_hash: OnceLock::new() })
    }

    /// A store with in-memory storage and the system clock.
    pub fn in_memory(settings: StoreSettings) -> Self {
        Self::open(Box::new(MemoryStorage::default()), Box::new(SystemClock), settings, Adapters::default()).expect("empty storage")
    }

    pub fn settings(&self) -> &StoreSettings {
        &self.settings
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    fn guard(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn persist(&self, inner: &Inner) -> Result<()> {
        let bytes = serde_json::to_vec(&inner.state).map_err(|e| StoreError::Storage(e.to_string()))?;
        self.storage.put(SNAPSHOT_KEY, &bytes)?;
        Ok(())
    }

    fn read<T>(&self, f: impl FnOnce(&Inner, Timestamp) -> Result<T>) -> Result<T> {
        let g = self.guard();
        f(&g, self.clock.now())
    }

    /// Runs a mutation and persists the snapshot when it succeeds.
    fn write<T>(&self, f: impl FnOnce(&mut Inner, Timestamp) -> Result<T>) -> Result<T> {
        let mut g = self.guard();
        let out = f(&mut g, self.clock.now())?;
        self.persist(&g)?;
        Ok(out)
    }

    /// The persisted snapshot exactly as stored. Restart tests compare these.
    pub fn snapshot_bytes(&self) -> Result<Vec<u8>> {
        let g = self.guard();
        serde_json::to_vec(&g.state).map_err(|e| StoreError::Storage(e.to_string()))
    }

    /// Deep copy of the whole state, page models included.
    pub fn state(&self) -> StoreState {
        self.guard().state.clone()
    }

    // ---- users and sessions ----

    pub fn add_user(&self, user_id: &str, display_name: &str, password: &str) -> Result<UserView> {
        if user_id.is_empty() || user_id.chars().any(char::is_whitespace) {
            return Err(CoreError::Validation("user id must be non-empty without whitespace".into()).into());
        }
        if password.is_empty() {
            return Err(CoreError::Validation("password must not be empty".into()).into());
        }
        let hash = bcrypt::hash(password, self.settings.bcrypt_cost).map_err(|e| CoreError::Validation(e.to_string()))?;
        self.write(|inner, _| {
            let id = UserId::new(user_id);
            if inner.state.users.contains_key(&id) {
                return Err(StoreError::UserExists(user_id.into()));
            }
            let user = User { user_id: id.clone(), display_name: display_name.into(), password_hash: hash };
            inner.state.users.insert(id.clone(), user);
            Ok(UserView { user_id: id, display_name: display_name.into() })
        })
    }

    pub fn list_users(&self) -> Result<Vec<UserView>> {
        self.read(|inner, _| {
            Ok(inner.state.users.values().map(|u| UserView { user_id: u.user_id.clone(), display_name: u.display_name.clone() }).collect())
        })
    }

    /// Verifies the password and opens a session. Unknown users cost the same
    /// hash verification as known ones.
    pub fn login(&self, user_id: &str, password: &str) -> Result<Session> {
        let stored = self.read(|inner, _| Ok(inner.state.users.get(&UserId::new(user_id)).map(|u| u.password_hash.clone())))?;
        let ok = match &stored {
            Some(hash) => bcrypt::verify(password, hash).unwrap_or(false),
            None => {
                let dummy = self.dummy_hash.get_or_init(|| bcrypt::hash("docmine", self.settings.bcrypt_cost).unwrap_or_default());
                let _ = bcrypt::verify(password, dummy);
                false
            }
        };
        if !ok {
            return Err(StoreError::InvalidCredentials);
        }
        let token = hex::encode(rand::random::<[u8; 32]>());
        self.write(|inner, now| {
            inner.state.sessions.retain(|_, s| s.expires_at > now);
            let user_id = UserId::new(user_id);
            let expires_at = now.plus(self.settings.session_ttl);
            inner.state.sessions.insert(hash_token(&token), StoredSession { user_id: user_id.clone(), expires_at });
            Ok(Session { token, user_id, expires_at })
        })
    }

    pub fn logout(&self, token: &str) -> Result<()> {
        self.write(|inner, _| {
            inner.state.sessions.remove(&hash_token(token));
            Ok(())
        })
    }

    /// Resolves a bearer token; expired or unknown tokens are rejected alike.
    pub fn authenticate(&self, token: &str) -> Result<UserId> {
        self.read(|inner, now| match inner.state.sessions.get(&hash_token(token)) {
            Some(s) if s.expires_at > now && inner.state.users.contains_key(&s.user_id) => Ok(s.user_id.clone()),
            _ => Err(StoreError::Unauthenticated),
        })
    }

    // ---- projects ----

    fn validate_project(p: &Project) -> Result<()> {
        if p.name.trim().is_empty() {
            return Err(CoreError::Validation("project name must not be empty".into()).into());
        }
        validate_labels(&p.label_configs)?;
        if let Some(h) = &p.header {
            h.validate()?;
        }
        for l in &p.label_configs {
            if let Some(f) = &l.linked_field {
                match &p.header {
                    Some(h) if h.fields.contains(f) => {}
                    Some(_) => return Err(CoreError::UnknownField(f.clone()).into()),
                    None => return Err(CoreError::NoHeaderConfig.into()),
                }
            }
        }
        Ok(())
    }

    pub fn create_project(&self, user: &UserId, new: NewProject) -> Result<Project> {
        self.write(|inner, now| {
            let id = format!("p{}", inner.state.counters.project + 1);
            let project = Project {
                project_id: id.clone(),
                name: new.name.trim().to_string(),
                description: new.description,
                label_configs: new.label_configs,
                header: new.header,
                created_by: user.clone(),
                created_at: now,
                updated_at: now,
            };
            Self::validate_project(&project)?;
            inner.state.counters.project += 1;
            inner.state.projects.insert(id, project.clone());
            Ok(project)
        })
    }

    pub fn list_projects(&self) -> Result<Vec<Project>> {
        self.read(|inner, _| {
            let mut v: Vec<Project> = inner.state.projects.values().cloned().collect();
            v.sort_by_key(|p| (p.created_at, p.project_id.len(), p.project_id.clone()));
            Ok(v)
        })
    }

    pub fn get_project(&self, id: &str) -> Result<Project> {
        self.read(|inner, _| inner.project(id).cloned())
    }

    fn replace_project(&self, inner: &mut Inner, mut project: Project, now: Timestamp) -> Result<Project> {
        Self::validate_project(&project)?;
        project.updated_at = now;
        let old_header = inner.project(&project.project_id)?.header.clone();
        let header_changed = old_header != project.header;
        let id = project.project_id.clone();
        inner.state.projects.insert(id.clone(), project.clone());
        if header_changed {
            self.reapply_header(inner, &id);
        }
        Ok(project)
    }

    pub fn update_settings(&self, id: &str, update: SettingsUpdate) -> Result<Project> {
        self.write(|inner, now| {
            let mut p = inner.project(id)?.clone();
            if let Some(n) = update.name {
                p.name = n.trim().to_string();
            }
            if let Some(d) = update.description {
                p.description = d;
            }
            if let Some(l) = update.label_configs {
                p.label_configs = l;
            }
            if let Some(h) = update.header {
                p.header = Some(h);
            }
            self.replace_project(inner, p, now)
        })
    }

    /// Applies a batch of header edits atomically.
    pub fn edit_header(&self, id: &str, edits: &[HeaderEdit]) -> Result<Project> {
        self.write(|inner, now| {
            let mut p = inner.project(id)?.clone();
            let header = p.header.as_ref().ok_or(CoreError::NoHeaderConfig)?;
            p.header = Some(header.apply(edits)?);
            self.replace_project(inner, p, now)
        })
    }

    /// Replaces the project header with the first row of an uploaded
    /// spreadsheet or CSV file.
    pub fn header_from_spreadsheet(&self, id: &str, bytes: &[u8], filename: &str) -> Result<Project> {
        let header = header_from_spreadsheet(bytes, filename)?;
        self.write(|inner, now| {
            let mut p = inner.project(id)?.clone();
            p.header = Some(header);
            self.replace_project(inner, p, now)
        })
    }

    // ---- files ----

    /// Registers an upload in the pending state. Parsing happens in
    /// [`Store::process_upload`].
    pub fn upload_file(&self, user: &UserId, project_id: &str, filename: &str, bytes: &[u8]) -> Result<FileRecord> {
        if bytes.is_empty() {
            return Err(StoreError::EmptyUpload);
        }
        let sum = checksum(bytes);
        self.write(|inner, now| {
            inner.project(project_id)?;
            if let Some(existing) = inner.state.files.values().find(|f| f.project_id == project_id && f.checksum == sum) {
                return Err(StoreError::DuplicateChecksum { existing: existing.file_id.clone() });
            }
            self.storage.put(&pdf_key(&sum), bytes)?;
            inner.state.counters.file += 1;
            let seq = inner.state.counters.file;
            let rec = FileRecord {
                file_id: format!("f{seq}"),
                seq,
                project_id: project_id.into(),
                filename: filename.into(),
                checksum: sum.clone(),
                uploader: user.clone(),
                last_editor: None,
                uploaded_at: now,
                updated_at: now,
                principal: None,
                lock: None,
                status: ParseStatus::Pending,
                page_count: 0,
                warnings: Vec::new(),
            };
            inner.state.files.insert(rec.file_id.clone(), rec.clone());
            inner.reindex(&rec.file_id);
            Ok(rec)
        })
    }

    /// Upload followed by synchronous parsing.
    pub fn upload_and_process(&self, user: &UserId, project_id: &str, filename: &str, bytes: &[u8]) -> Result<FileRecord> {
        let rec = self.upload_file(user, project_id, filename, bytes)?;
        self.process_upload(&rec.file_id)
    }

    /// The uploaded PDF bytes.
    pub fn file_bytes(&self, file_id: &str) -> Result<Vec<u8>> {
        let sum = self.read(|inner, _| Ok(inner.file(file_id)?.checksum.clone()))?;
        self.storage.get(&pdf_key(&sum))?.ok_or_else(|| StoreError::Storage(format!("missing PDF for `{file_id}`")))
    }

    pub fn get_file(&self, file_id: &str) -> Result<FileRecord> {
        self.read(|inner, now| Ok(inner.file(file_id)?.view(now)))
    }

    pub fn list_files(&self, project_id: &str) -> Result<Vec<FileRecord>> {
        self.read(|inner, now| {
            inner.project(project_id)?;
            Ok(inner.files_sorted(|f| f.project_id == project_id).into_iter().map(|f| f.view(now)).collect())
        })
    }

    /// Ranked by matched query tokens, then most recently updated.
    pub fn search_files(&self, project_id: &str, query: &str) -> Result<Vec<FileRecord>> {
        self.read(|inner, now| {
            inner.project(project_id)?;
            let ids = inner.search.get(project_id).map(|ix| ix.search(query)).unwrap_or_default();
            Ok(ids.iter().filter_map(|id| inner.state.files.get(id)).map(|f| f.view(now)).collect())
        })
    }

    /// Records that `user` opened the file, for the recent-files list.
    pub fn open_file(&self, user: &UserId, file_id: &str) -> Result<FileRecord> {
        self.write(|inner, now| {
            let rec = inner.file(file_id)?.view(now);
            let list = inner.state.recent.entry(user.clone()).or_default();
            list.retain(|f| f != file_id);
            list.insert(0, file_id.into());
            list.truncate(RECENT_LIMIT);
            Ok(rec)
        })
    }

    /// Files the user has taken charge of.
    pub fn my_files(&self, user: &UserId) -> Result<Vec<FileRecord>> {
        self.read(|inner, now| Ok(inner.files_sorted(|f| f.principal.as_ref() == Some(user)).into_iter().map(|f| f.view(now)).collect()))
    }

    /// The last opened files, newest first.
    pub fn recent_files(&self, user: &UserId) -> Result<Vec<FileRecord>> {
        self.read(|inner, now| {
            let ids = inner.state.recent.get(user).cloned().unwrap_or_default();
            Ok(ids.iter().filter_map(|id| inner.state.files.get(id)).map(|f| f.view(now)).collect())
        })
    }

    pub fn take_charge(&self, user: &UserId, file_id: &str) -> Result<FileRecord> {
        self.write(|inner, now| {
            let rec = inner.file_mut(file_id)?;
            rec.with_lock(|l| l.take_charge(user))?;
            Ok(rec.view(now))
        })
    }

    pub fn release_charge(&self, user: &UserId, file_id: &str) -> Result<FileRecord> {
        self.write(|inner, now| {
            let rec = inner.file_mut(file_id)?;
            rec.with_lock(|l| l.release_charge(user))?;
            Ok(rec.view(now))
        })
    }

    pub fn acquire_lock(&self, user: &UserId, file_id: &str) -> Result<FileRecord> {
        let lease = self.settings.lease;
        self.write(|inner, now| {
            let rec = inner.file_mut(file_id)?;
            rec.with_lock(|l| l.acquire(user, now, lease).map(|_| ()))?;
            Ok(rec.view(now))
        })
    }

    pub fn renew_lock(&self, user: &UserId, file_id: &str) -> Result<FileRecord> {
        self.write(|inner, now| {
            let rec = inner.file_mut(file_id)?;
            rec.with_lock(|l| l.renew(user, now).map(|_| ()))?;
            Ok(rec.view(now))
        })
    }

    pub fn release_lock(&self, user: &UserId, file_id: &str) -> Result<FileRecord> {
        self.write(|inner, now| {
            let rec = inner.file_mut(file_id)?;
            rec.with_lock(|l| l.release(user, now))?;
            Ok(rec.view(now))
        })
    }

    // ---- corrections ----

    /// Correction events of the project's documents as newline-delimited
    /// JSON, oldest first.
    pub fn export_corrections(&self, project_id: &str) -> Result<Vec<u8>> {
        self.read(|inner, _| {
            inner.project(project_id)?;
            let docs: BTreeSet<&str> =
                inner.state.files.values().filter(|f| f.project_id == project_id).map(|f| f.file_id.as_str()).collect();
            let mut events: Vec<&CorrectionEvent> = inner.state.corrections.iter().filter(|e| docs.contains(e.doc_id.as_str())).collect();
            events.sort_by_key(|e| (e.time, e.event_id));
            let mut out = Vec::new();
            for e in events {
                serde_json::to_writer(&mut out, e).map_err(|e| StoreError::Storage(e.to_string()))?;
                out.push(b'\n');
            }
            Ok(out)
        })
    }

    pub fn corrections_for(&self, file_id: &str) -> Result<Vec<CorrectionEvent>> {
        self.read(|inner, _| {
            inner.file(file_id)?;
            Ok(inner.state.corrections.iter().filter(|e| e.doc_id == file_id).cloned().collect())
        })
    }

    fn save_pages(&self, file_id: &str, pages: &[PageModel]) -> Result<()> {
        let bytes = serde_json::to_vec(pages).map_err(|e| StoreError::Storage(e.to_string()))?;
        self.storage.put(&pages_key(file_id), &bytes)?;
        Ok(())
    }
}
