//! Single-file embedded store.
//!
//! The file is an append-only log of transactions replayed into memory on
//! open. Layout (all integers little-endian):
//!
//! ```text
//! header : b"CBIRSTOR" | u32 version
//! frame* : u32 payload_len | u32 crc32(payload) | payload
//! payload: bincode-encoded Vec<LogEntry>
//! ```
//!
//! Each frame is one atomic transaction. A frame cut short at the end of the
//! file (a crash mid-append) is discarded on open; a complete frame whose
//! checksum does not match is reported as corruption.
//!
//! One writer at a time appends under a mutex; readers work on the in-memory
//! state behind an `RwLock`, so they see either all or none of a transaction.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock, RwLockReadGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{
    deserialize_weights, serialize_weights, Category, ClassifierError, NetworkWeights,
    Probabilities,
};
use crate::color::COLOR_DIM;
use crate::imagecore::ImageFormat;
use crate::retrieval::CorpusNormalization;
use crate::shape::SHAPE_DIM;
use crate::texture::TEXTURE_DIM;

const MAGIC: &[u8; 8] = b"CBIRSTOR";
pub const STORE_VERSION: u32 = 1;
const HEADER_LEN: u64 = 12;
const FRAME_HEADER_LEN: u64 = 8;
/// Default ceiling on the store file size.
pub const DEFAULT_MAX_BYTES: u64 = 64 << 30;

pub type ImageId = u64;
pub type QueryId = u64;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("record {0} not found")]
    NotFound(ImageId),
    #[error("query {0} not found")]
    QueryNotFound(QueryId),
    #[error("no {0} has been stored")]
    Missing(&'static str),
    #[error("store format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("store is corrupt: {0}")]
    Corrupt(String),
    #[error("store is full ({limit} bytes)")]
    StoreFull { limit: u64 },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<io::Error> for StoreError {
    fn from(e: io::Error) -> Self {
        StoreError::Io(e.to_string())
    }
}

impl From<ClassifierError> for StoreError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::VersionMismatch { found, expected } => {
                StoreError::VersionMismatch { found: u32::from(found), expected: u32::from(expected) }
            }
            other => StoreError::Corrupt(other.to_string()),
        }
    }
}

/// Mutable, feedback-driven part of a record.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CategoryState {
    /// `None` means uncategorized; such records are skipped by gated search.
    pub category: Option<Category>,
    pub vetoed: BTreeSet<Category>,
    pub neg_counts: BTreeMap<Category, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: ImageId,
    pub blob: Vec<u8>,
    pub format: ImageFormat,
    pub state: CategoryState,
    /// Classifier distribution at enrollment time.
    pub enroll_probs: Probabilities,
    pub color: Vec<f64>,
    pub texture: Vec<f64>,
    pub shape: Vec<f64>,
    pub keywords: Vec<String>,
    pub metadata: BTreeMap<String, String>,
}

impl ImageRecord {
    pub fn category(&self) -> Option<Category> {
        self.state.category
    }

    fn validate(&self) -> Result<(), StoreError> {
        let bad = |msg: String| Err(StoreError::InvalidRecord(msg));
        if self.color.len() != COLOR_DIM {
            return bad(format!("color vector has {} entries", self.color.len()));
        }
        if self.texture.len() != TEXTURE_DIM {
            return bad(format!("texture vector has {} entries", self.texture.len()));
        }
        if self.shape.len() != SHAPE_DIM {
            return bad(format!("shape vector has {} entries", self.shape.len()));
        }
        let all = self.color.iter().chain(&self.texture).chain(&self.shape).chain(&self.enroll_probs);
        if all.clone().any(|v| !v.is_finite()) {
            return bad("non-finite feature value".into());
        }
        let sum: f64 = self.enroll_probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return bad(format!("enrollment probabilities sum to {sum}"));
        }
        if let Some(c) = self.state.category {
            if self.state.vetoed.contains(&c) {
                return bad(format!("category {c} is vetoed for this record"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryParams {
    pub top_k: usize,
    pub threshold: f64,
}

impl Default for QueryParams {
    fn default() -> Self {
        Self { top_k: 10, threshold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: QueryId,
    pub predicted: Category,
    pub timestamp_ms: u64,
    pub params: QueryParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub query_id: QueryId,
    pub image_id: ImageId,
    pub polarity: Polarity,
    pub timestamp_ms: u64,
}

/// One logical mutation. A transaction is a list of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LogEntry {
    Image(ImageRecord),
    Category { image_id: ImageId, state: CategoryState },
    Query(QueryRecord),
    Feedback(FeedbackEvent),
    Normalization(CorpusNormalization),
    Weights(Vec<u8>),
}

/// In-memory view of the store; what readers observe.
#[derive(Debug, Default)]
pub struct StoreState {
    records: BTreeMap<ImageId, ImageRecord>,
    queries: BTreeMap<QueryId, QueryRecord>,
    feedback: Vec<FeedbackEvent>,
    feedback_keys: HashSet<(QueryId, ImageId)>,
    normalization: Option<CorpusNormalization>,
    weights: Option<Vec<u8>>,
    next_image_id: ImageId,
    next_query_id: QueryId,
}

impl StoreState {
    fn new() -> Self {
        Self { next_image_id: 1, next_query_id: 1, ..Self::default() }
    }

    fn apply(&mut self, entry: LogEntry) -> Result<(), StoreError> {
        match entry {
            LogEntry::Image(rec) => {
                self.next_image_id = self.next_image_id.max(rec.image_id + 1);
                self.records.insert(rec.image_id, rec);
            }
            LogEntry::Category { image_id, state } => {
                let rec = self.records.get_mut(&image_id).ok_or(StoreError::NotFound(image_id))?;
                rec.state = state;
            }
            LogEntry::Query(q) => {
                self.next_query_id = self.next_query_id.max(q.query_id + 1);
                self.queries.insert(q.query_id, q);
            }
            LogEntry::Feedback(ev) => {
                self.feedback_keys.insert((ev.query_id, ev.image_id));
                self.feedback.push(ev);
            }
            LogEntry::Normalization(n) => self.normalization = Some(n),
            LogEntry::Weights(w) => self.weights = Some(w),
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, id: ImageId) -> Option<&ImageRecord> {
        self.records.get(&id)
    }

    /// All records in ascending id order.
    pub fn records(&self) -> impl Iterator<Item = &ImageRecord> {
        self.records.values()
    }

    pub fn query(&self, id: QueryId) -> Option<&QueryRecord> {
        self.queries.get(&id)
    }

    pub fn queries(&self) -> impl Iterator<Item = &QueryRecord> {
        self.queries.values()
    }

    pub fn feedback(&self) -> &[FeedbackEvent] {
        &self.feedback
    }

    pub fn has_feedback(&self, query_id: QueryId, image_id: ImageId) -> bool {
        self.feedback_keys.contains(&(query_id, image_id))
    }

    pub fn normalization(&self) -> Option<&CorpusNormalization> {
        self.normalization.as_ref()
    }

    pub fn has_weights(&self) -> bool {
        self.weights.is_some()
    }

    pub fn next_image_id(&self) -> ImageId {
        self.next_image_id
    }

    pub fn next_query_id(&self) -> QueryId {
        self.next_query_id
    }

    pub fn list_by_category(&self, category: Category) -> Vec<ImageId> {
        self.records.values().filter(|r| r.state.category == Some(category)).map(|r| r.image_id).collect()
    }

    pub fn search_keywords<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<ImageId> {
        let wanted: Vec<String> = tokens
            .iter()
            .map(|t| t.as_ref().trim().to_lowercase())
            .filter(|t| !t.is_empty())
            .collect();
        if wanted.is_empty() {
            return Vec::new();
        }
        self.records
            .values()
            .filter(|r| {
                wanted.iter().all(|w| r.keywords.iter().any(|k| k.trim().to_lowercase() == *w))
            })
            .map(|r| r.image_id)
            .collect()
    }
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

struct Writer {
    file: File,
    len: u64,
}

pub struct Store {
    path: PathBuf,
    max_bytes: u64,
    state: RwLock<StoreState>,
    writer: Mutex<Option<Writer>>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("path", &self.path).finish_non_exhaustive()
    }
}

impl Store {
    /// Opens the store at `path`, creating an empty one if it does not exist.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        if !path.exists() {
            let mut file = OpenOptions::new().write(true).create_new(true).open(path)?;
            file.write_all(MAGIC)?;
            file.write_all(&STORE_VERSION.to_le_bytes())?;
            file.sync_all()?;
        }
        Self::open_existing(path)
    }

    /// Opens an existing store; a missing file is [`StoreError::FileNotFound`].
    pub fn open_existing(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut file = match OpenOptions::new().read(true).write(true).open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::FileNotFound(path)),
            Err(e) => return Err(e.into()),
        };
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let (state, valid_len) = replay(&bytes)?;
        if valid_len < bytes.len() as u64 {
            // Drop a torn trailing frame so later appends stay aligned.
            file.set_len(valid_len)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::Start(valid_len))?;
        Ok(Self {
            path,
            max_bytes: DEFAULT_MAX_BYTES,
            state: RwLock::new(state),
            writer: Mutex::new(Some(Writer { file, len: valid_len })),
        })
    }

    pub fn with_max_bytes(mut self, max_bytes: u64) -> Self {
        self.max_bytes = max_bytes;
        self
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Flushes and releases the file; later writes fail with an I/O error.
    pub fn close(&self) -> Result<(), StoreError> {
        let mut guard = self.writer.lock().expect("writer lock poisoned");
        if let Some(w) = guard.take() {
            w.file.sync_all()?;
        }
        Ok(())
    }

    /// Consistent read-only view. Hold it briefly: writers wait for it.
    pub fn read(&self) -> RwLockReadGuard<'_, StoreState> {
        self.state.read().expect("state lock poisoned")
    }

    /// Runs `plan` against the current state while holding the writer lock,
    /// then durably appends and applies the entries it returns as a single
    /// transaction. No other writer can interleave between the two.
    pub fn transact<R, E>(
        &self,
        plan: impl FnOnce(&StoreState) -> Result<(Vec<LogEntry>, R), E>,
    ) -> Result<R, E>
    where
        E: From<StoreError>,
    {
        let mut guard = self.writer.lock().expect("writer lock poisoned");
        let writer = guard.as_mut().ok_or_else(|| StoreError::Io("store is closed".into()))?;
        let (entries, out) = plan(&self.read())?;
        if entries.is_empty() {
            return Ok(out);
        }
        let payload = bincode::serialize(&entries).map_err(|e| StoreError::Io(e.to_string()))?;
        let frame_len = FRAME_HEADER_LEN + payload.len() as u64;
        if writer.len + frame_len > self.max_bytes || payload.len() > u32::MAX as usize {
            return Err(StoreError::StoreFull { limit: self.max_bytes }.into());
        }
        let mut frame = Vec::with_capacity(frame_len as usize);
        frame.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        frame.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
        frame.extend_from_slice(&payload);
        writer.file.write_all(&frame).map_err(StoreError::from)?;
        writer.file.sync_data().map_err(StoreError::from)?;
        writer.len += frame_len;

        let mut state = self.state.write().expect("state lock poisoned");
        for entry in entries {
            state.apply(entry)?;
        }
        Ok(out)
    }

    /// Enrolls a record; its `image_id` is assigned here and returned.
    pub fn put_record(&self, mut record: ImageRecord) -> Result<ImageId, StoreError> {
        record.validate()?;
        self.transact(|state| {
            if state.next_image_id == ImageId::MAX {
                return Err(StoreError::StoreFull { limit: self.max_bytes });
            }
            record.image_id = state.next_image_id;
            let id = record.image_id;
            Ok((vec![LogEntry::Image(record)], id))
        })
    }

    pub fn get_record(&self, id: ImageId) -> Result<ImageRecord, StoreError> {
        self.read().record(id).cloned().ok_or(StoreError::NotFound(id))
    }

    pub fn list_by_category(&self, category: Category) -> Vec<ImageId> {
        self.read().list_by_category(category)
    }

    pub fn update_category(&self, id: ImageId, state: CategoryState) -> Result<(), StoreError> {
        if let Some(c) = state.category {
            if state.vetoed.contains(&c) {
                return Err(StoreError::InvalidRecord(format!("category {c} is vetoed")));
            }
        }
        self.transact(|s| {
            if s.record(id).is_none() {
                return Err(StoreError::NotFound(id));
            }
            Ok((vec![LogEntry::Category { image_id: id, state }], ()))
        })
    }

    pub fn search_keywords<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<ImageId> {
        self.read().search_keywords(tokens)
    }

    pub fn put_normalization(&self, n: CorpusNormalization) -> Result<(), StoreError> {
        self.transact(|_| Ok((vec![LogEntry::Normalization(n)], ())))
    }

    pub fn normalization(&self) -> Result<CorpusNormalization, StoreError> {
        self.read().normalization.clone().ok_or(StoreError::Missing("normalization"))
    }

    pub fn put_weights(&self, w: &NetworkWeights) -> Result<(), StoreError> {
        let bytes = serialize_weights(w);
        self.transact(|_| Ok((vec![LogEntry::Weights(bytes)], ())))
    }

    pub fn weights(&self) -> Result<NetworkWeights, StoreError> {
        let bytes = self.read().weights.clone().ok_or(StoreError::Missing("classifier weights"))?;
        Ok(deserialize_weights(&bytes)?)
    }

    /// Persists a query and returns it with its freshly assigned id.
    pub fn record_query(&self, predicted: Category, params: QueryParams) -> Result<QueryRecord, StoreError> {
        self.transact(|s| {
            let q = QueryRecord { query_id: s.next_query_id, predicted, timestamp_ms: now_ms(), params };
            Ok((vec![LogEntry::Query(q.clone())], q))
        })
    }

    pub fn query_record(&self, id: QueryId) -> Result<QueryRecord, StoreError> {
        self.read().query(id).cloned().ok_or(StoreError::QueryNotFound(id))
    }

    pub fn feedback_events(&self) -> Vec<FeedbackEvent> {
        self.read().feedback.clone()
    }

    pub fn len(&self) -> usize {
        self.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.read().is_empty()
    }
}

/// Rebuilds state from raw file bytes; returns it with the length of the
/// valid prefix.
fn replay(bytes: &[u8]) -> Result<(StoreState, u64), StoreError> {
    if bytes.len() < HEADER_LEN as usize || &bytes[..8] != MAGIC {
        return Err(StoreError::Corrupt("missing store header".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != STORE_VERSION {
        return Err(StoreError::VersionMismatch { found: version, expected: STORE_VERSION });
    }
    let mut state = StoreState::new();
    let mut pos = HEADER_LEN as usize;
    while pos < bytes.len() {
        let Some(head) = bytes.get(pos..pos + FRAME_HEADER_LEN as usize) else {
            break;
        };
        let len = u32::from_le_bytes(head[..4].try_into().unwrap()) as usize;
        let crc = u32::from_le_bytes(head[4..].try_into().unwrap());
        let start = pos + FRAME_HEADER_LEN as usize;
        let Some(payload) = bytes.get(start..start + len) else {
            break;
        };
        if crc32fast::hash(payload) != crc {
            return Err(StoreError::Corrupt(format!("checksum mismatch in frame at byte {pos}")));
        }
        let entries: Vec<LogEntry> = bincode::deserialize(payload)
            .map_err(|e| StoreError::Corrupt(format!("undecodable frame at byte {pos}: {e}")))?;
        for entry in entries {
            state.apply(entry)?;
        }
        pos = start + len;
    }
    Ok((state, pos as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn dummy_record(tag: u8) -> ImageRecord {
        let mut probs = [0.0; crate::classifier::NUM_CATEGORIES];
        probs[tag as usize % crate::classifier::NUM_CATEGORIES] = 1.0;
        ImageRecord {
            image_id: 0,
            blob: vec![tag; 17],
            format: ImageFormat::Ppm,
            state: CategoryState {
                category: Category::from_code(tag % 9),
                ..CategoryState::default()
            },
            enroll_probs: probs,
            color: vec![f64::from(tag); COLOR_DIM],
            texture: vec![0.5; TEXTURE_DIM],
            shape: vec![1.0; SHAPE_DIM],
            keywords: vec!["Boat".into(), format!("tag{tag}")],
            metadata: BTreeMap::from([("owner".to_string(), "someone".to_string())]),
        }
    }

    #[test]
    fn put_get_and_ids_increase() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path().join("s.db")).unwrap();
        let a = store.put_record(dummy_record(1)).unwrap();
        let b = store.put_record(dummy_record(2)).unwrap();
        assert!(b > a);
        let got = store.get_record(a).unwrap();
        assert_eq!(got.blob, vec![1; 17]);
        assert_eq!(got.image_id, a);
        assert!(matches!(store.get_record(999), Err(StoreError::NotFound(999))));
    }

    #[test]
    fn put_after_close_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path().join("s.db")).unwrap();
        store.close().unwrap();
        assert!(matches!(store.put_record(dummy_record(1)), Err(StoreError::Io(_))));
    }

    #[test]
    fn invalid_records_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path().join("s.db")).unwrap();
        let mut r = dummy_record(1);
        r.color.pop();
        assert!(matches!(store.put_record(r), Err(StoreError::InvalidRecord(_))));
        let mut r = dummy_record(1);
        r.enroll_probs[0] += 0.5;
        assert!(matches!(store.put_record(r), Err(StoreError::InvalidRecord(_))));
    }

    #[test]
    fn category_listing_and_update() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path().join("s.db")).unwrap();
        assert!(store.list_by_category(Category::Trees).is_empty());
        let ids: Vec<_> = [0u8, 9, 3, 0].iter().map(|&t| store.put_record(dummy_record(t)).unwrap()).collect();
        assert_eq!(store.list_by_category(Category::Boats), vec![ids[0], ids[1], ids[3]]);
        store
            .update_category(ids[1], CategoryState { category: Some(Category::Trees), ..Default::default() })
            .unwrap();
        assert_eq!(store.list_by_category(Category::Boats), vec![ids[0], ids[3]]);
        assert_eq!(store.list_by_category(Category::Trees), vec![ids[1]]);
        assert!(matches!(store.update_category(77, CategoryState::default()), Err(StoreError::NotFound(77))));
    }

    #[test]
    fn keyword_search_is_case_insensitive_and_conjunctive() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path().join("s.db")).unwrap();
        let a = store.put_record(dummy_record(1)).unwrap();
        let b = store.put_record(dummy_record(2)).unwrap();
        assert_eq!(store.search_keywords(&["boat"]), vec![a, b]);
        assert_eq!(store.search_keywords(&["BOAT", "tag2"]), vec![b]);
        assert!(store.search_keywords(&["plane"]).is_empty());
        assert!(store.search_keywords(&["bo"]).is_empty());
    }

    #[test]
    fn missing_items_are_distinguishable() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(Store::open_existing(dir.path().join("nope.db")), Err(StoreError::FileNotFound(_))));
        let store = Store::open(dir.path().join("s.db")).unwrap();
        assert!(matches!(store.weights(), Err(StoreError::Missing(_))));
        assert!(matches!(store.normalization(), Err(StoreError::Missing(_))));
        assert!(matches!(store.query_record(4), Err(StoreError::QueryNotFound(4))));
    }

    #[test]
    fn torn_tail_is_dropped_and_flipped_bit_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.db");
        {
            let store = Store::open(&path).unwrap();
            store.put_record(dummy_record(1)).unwrap();
            store.put_record(dummy_record(2)).unwrap();
        }
        let full = std::fs::read(&path).unwrap();

        std::fs::write(&path, &full[..full.len() - 5]).unwrap();
        let store = Store::open(&path).unwrap();
        assert_eq!(store.len(), 1);
        let id = store.put_record(dummy_record(3)).unwrap();
        drop(store);
        let store = Store::open(&path).unwrap();
        assert_eq!(store.get_record(id).unwrap().blob, vec![3; 17]);
        drop(store);

        let mut damaged = full.clone();
        damaged[HEADER_LEN as usize + 20] ^= 0xff;
        std::fs::write(&path, &damaged).unwrap();
        assert!(matches!(Store::open(&path), Err(StoreError::Corrupt(_))));

        std::fs::write(&path, b"not a store at all").unwrap();
        assert!(matches!(Store::open(&path), Err(StoreError::Corrupt(_))));

        let mut wrong_version = full;
        wrong_version[8] = 7;
        std::fs::write(&path, &wrong_version).unwrap();
        assert!(matches!(Store::open(&path), Err(StoreError::VersionMismatch { found: 7, .. })));
    }

    #[test]
    fn size_limit_reports_full() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path().join("s.db")).unwrap().with_max_bytes(200);
        assert!(matches!(store.put_record(dummy_record(1)), Err(StoreError::StoreFull { limit: 200 })));
        assert!(store.is_empty());
    }
}
