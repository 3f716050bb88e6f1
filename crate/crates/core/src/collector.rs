//! Information collection: pick the next anamnesis question.
//!
//! 1. Embed the conversation so far.
//! 2. Reuse questions from the most similar stored dialogue when its cosine
//!    similarity is strictly above `reuse_threshold`.
//! 3. Otherwise ask the generation backend for `n_candidates` questions.
//! 4. Discard candidates whose similarity to an already asked question is
//!    strictly above `dup_threshold`.
//! 5. Score the survivors with the relevance model.
//! 6. Ask the best one and store the ranked survivors for reuse.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{AdapterError, CompletionBackend, CompletionRequest, Embedder, EmbeddingVector};
use crate::progress::{LinearTextModel, ProgressError};
use crate::routing::parse_list;
use crate::transcript::Transcript;

pub const QUESTIONS_TAG: &str = "questions";
pub const STORE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CollectorError {
    #[error("vectors have dimensions {0} and {1}")]
    Dimension(usize, usize),
    #[error("question generation failed: {0}")]
    Generation(AdapterError),
    #[error("embedding failed: {0}")]
    Embedding(AdapterError),
    #[error("relevance scoring failed: {0}")]
    Relevance(#[from] ProgressError),
    #[error("every fallback question has already been asked")]
    Exhausted,
    #[error("vector store: {0}")]
    Store(#[from] StoreError),
}

/// `dot(a, b) / (‖a‖ ‖b‖)`, defined as 0 when either vector is zero.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, CollectorError> {
    if a.len() != b.len() {
        return Err(CollectorError::Dimension(a.len(), b.len()));
    }
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Ok(0.0);
    }
    Ok((ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub dialogue_embedding: EmbeddingVector,
    pub questions: Vec<String>,
    pub source_id: String,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("store record {line}: {source}")]
    Record { line: usize, source: serde_json::Error },
    #[error("store record {line} has unsupported version {version}")]
    Version { line: usize, version: u32 },
    #[error("cache entries need at least one question")]
    EmptyEntry,
}

#[derive(Serialize, Deserialize)]
struct StoreRecord {
    version: u32,
    entry: CacheEntry,
}

/// Exact nearest-neighbour store with optional append-only JSONL
/// persistence. Readers run concurrently; writers are serialized.
#[derive(Debug, Default)]
pub struct VectorStore {
    entries: RwLock<Vec<CacheEntry>>,
    file: Option<(PathBuf, Mutex<File>)>,
}

impl VectorStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<CacheEntry>) -> Self {
        Self { entries: RwLock::new(entries), file: None }
    }

    /// Loads existing records from `path` (if present) and appends new
    /// entries to it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut entries = Vec::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: StoreRecord =
                    serde_json::from_str(&line).map_err(|source| StoreError::Record { line: i + 1, source })?;
                if record.version != STORE_SCHEMA_VERSION {
                    return Err(StoreError::Version { line: i + 1, version: record.version });
                }
                entries.push(record.entry);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { entries: RwLock::new(entries), file: Some((path, Mutex::new(file))) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> Vec<CacheEntry> {
        self.entries.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn insert(&self, entry: CacheEntry) -> Result<(), StoreError> {
        if entry.questions.is_empty() {
            return Err(StoreError::EmptyEntry);
        }
        let mut entries = self.entries.write().unwrap_or_else(|e| e.into_inner());
        if let Some((_, file)) = &self.file {
            let line = serde_json::to_string(&StoreRecord { version: STORE_SCHEMA_VERSION, entry: entry.clone() })
                .map_err(|source| StoreError::Record { line: entries.len() + 1, source })?;
            let mut file = file.lock().unwrap_or_else(|e| e.into_inner());
            writeln!(file, "{line}")?;
            file.flush()?;
        }
        entries.push(entry);
        Ok(())
    }

    /// Most similar entry and its similarity; ties keep the earliest entry.
    pub fn nearest(&self, query: &[f64]) -> Result<Option<(CacheEntry, f64)>, CollectorError> {
        let entries = self.entries.read().unwrap_or_else(|e| e.into_inner());
        let mut best: Option<(usize, f64)> = None;
        for (i, e) in entries.iter().enumerate() {
            let s = cosine_similarity(query, &e.dialogue_embedding)?;
            if best.map_or(true, |(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        Ok(best.map(|(i, s)| (entries[i].clone(), s)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectorConfig {
    pub reuse_threshold: f64,
    pub dup_threshold: f64,
    pub n_candidates: usize,
    /// Asked in order when generation yields nothing usable.
    pub fallback_questions: Vec<String>,
    pub prompt: String,
    pub temperature: f64,
}

impl Default for CollectorConfig {
    fn default() -> Self {
        Self {
            reuse_threshold: 0.965,
            dup_threshold: 0.86,
            n_candidates: 5,
            fallback_questions: vec![
                "Could you describe your symptoms in more detail?".into(),
                "When did the symptoms start?".into(),
                "Is there anything else that worries you?".into(),
            ],
            prompt: "You are a physician taking a patient's history. Suggest short clarifying questions \
about the patient's complaints, one per line, most useful first."
                .into(),
            temperature: 0.0,
        }
    }
}

/// Most similar stored entry when its similarity is strictly above the
/// reuse threshold.
pub fn lookup_cache(
    store: &VectorStore,
    query: &[f64],
    cfg: &CollectorConfig,
) -> Result<Option<CacheEntry>, CollectorError> {
    Ok(store.nearest(query)?.filter(|(_, s)| *s > cfg.reuse_threshold).map(|(e, _)| e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionCandidate {
    pub text: String,
    pub relevance_score: f64,
    pub discarded_as_duplicate: bool,
}

fn embed_all(embedder: &dyn Embedder, texts: &[String]) -> Result<Vec<EmbeddingVector>, CollectorError> {
    texts.iter().map(|t| embedder.embed(t).map_err(CollectorError::Embedding)).collect()
}

/// True when `v` is strictly more similar than `threshold` to any of `prior`.
fn too_similar(v: &[f64], prior: &[EmbeddingVector], threshold: f64) -> Result<bool, CollectorError> {
    for p in prior {
        if cosine_similarity(v, p)? > threshold {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Marks candidates too similar to an already asked question. Order is kept.
pub fn dedup(
    candidates: &[String],
    prior_questions: &[String],
    cfg: &CollectorConfig,
    embedder: &dyn Embedder,
) -> Result<Vec<QuestionCandidate>, CollectorError> {
    let prior = embed_all(embedder, prior_questions)?;
    candidates
        .iter()
        .map(|text| {
            let v = embedder.embed(text).map_err(CollectorError::Embedding)?;
            Ok(QuestionCandidate {
                text: text.clone(),
                relevance_score: 0.0,
                discarded_as_duplicate: too_similar(&v, &prior, cfg.dup_threshold)?,
            })
        })
        .collect()
}

/// Scores the surviving candidates and returns the best; ties keep list order.
pub fn rank_and_select(
    candidates: &mut [QuestionCandidate],
    m: &LinearTextModel,
) -> Result<Option<String>, CollectorError> {
    let mut best: Option<usize> = None;
    for i in 0..candidates.len() {
        if candidates[i].discarded_as_duplicate {
            continue;
        }
        candidates[i].relevance_score = m.score(&candidates[i].text, 0)?;
        if best.map_or(true, |b| candidates[i].relevance_score > candidates[b].relevance_score) {
            best = Some(i);
        }
    }
    Ok(best.map(|i| candidates[i].text.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Cache,
    Generated,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectStep {
    pub question: String,
    pub provenance: Provenance,
    /// Candidates of the last generation attempt; empty on a cache hit.
    pub candidates: Vec<QuestionCandidate>,
}

pub struct Collector<'a> {
    pub store: &'a VectorStore,
    pub cfg: &'a CollectorConfig,
    pub llm: &'a dyn CompletionBackend,
    pub relevance: &'a LinearTextModel,
    pub embedder: &'a dyn Embedder,
}

/// One pass of the pipeline for `history` (which ends with the current user
/// message). Already asked questions are the system messages of `history`.
pub fn collect_step(
    history: &Transcript,
    store: &VectorStore,
    cfg: &CollectorConfig,
    llm: &dyn CompletionBackend,
    relevance_model: &LinearTextModel,
    embedder: &dyn Embedder,
) -> Result<CollectStep, CollectorError> {
    Collector { store, cfg, llm, relevance: relevance_model, embedder }.step(history)
}

impl Collector<'_> {
    pub fn step(&self, history: &Transcript) -> Result<CollectStep, CollectorError> {
        let asked: Vec<String> = history.system_messages().map(str::to_string).collect();
        let asked_vecs = embed_all(self.embedder, &asked)?;
        let query = self.embedder.embed(&history.flatten()).map_err(CollectorError::Embedding)?;

        if let Some(entry) = lookup_cache(self.store, &query, self.cfg)? {
            for q in &entry.questions {
                let v = self.embedder.embed(q).map_err(CollectorError::Embedding)?;
                if !too_similar(&v, &asked_vecs, self.cfg.dup_threshold)? {
                    return Ok(CollectStep { question: q.clone(), provenance: Provenance::Cache, candidates: Vec::new() });
                }
            }
            log::debug!("cache entry `{}` fully asked; generating", entry.source_id);
        }

        let mut last_error = None;
        let mut any_reply = false;
        let mut candidates = Vec::new();
        for attempt in 0..2 {
            let user = format!("{}\n\nSuggest {} questions.", history.flatten(), self.cfg.n_candidates);
            let req = CompletionRequest::new(QUESTIONS_TAG, &self.cfg.prompt, user).with_temperature(self.cfg.temperature);
            let reply = match self.llm.complete(&req) {
                Ok(reply) => reply,
                Err(err) => {
                    log::warn!("question generation failed (attempt {}): {err}", attempt + 1);
                    last_error = Some(err);
                    continue;
                }
            };
            any_reply = true;
            let texts: Vec<String> = parse_list(&reply).into_iter().take(self.cfg.n_candidates).collect();
            candidates = dedup(&texts, &asked, self.cfg, self.embedder)?;
            if let Some(question) = rank_and_select(&mut candidates, self.relevance)? {
                let mut ranked: Vec<&QuestionCandidate> =
                    candidates.iter().filter(|c| !c.discarded_as_duplicate).collect();
                ranked.sort_by(|a, b| b.relevance_score.total_cmp(&a.relevance_score));
                self.store.insert(CacheEntry {
                    dialogue_embedding: query,
                    questions: ranked.into_iter().map(|c| c.text.clone()).collect(),
                    source_id: format!("generated-{}", self.store.len() + 1),
                })?;
                return Ok(CollectStep { question, provenance: Provenance::Generated, candidates });
            }
            log::debug!("all candidates discarded (attempt {})", attempt + 1);
        }
        if let (false, Some(err)) = (any_reply, last_error) {
            return Err(CollectorError::Generation(err));
        }
        for q in &self.cfg.fallback_questions {
            let v = self.embedder.embed(q).map_err(CollectorError::Embedding)?;
            if !too_similar(&v, &asked_vecs, self.cfg.dup_threshold)? {
                return Ok(CollectStep { question: q.clone(), provenance: Provenance::Fallback, candidates });
            }
        }
        Err(CollectorError::Exhausted)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::adapters::{EmbedderSpec, HashedNgramEmbedder};
    use crate::progress::ProgressKind;
    use crate::transcript::Role;

    fn relevance() -> LinearTextModel {
        LinearTextModel::zero(ProgressKind::Relevance, EmbedderSpec::test(8))
    }

    fn history() -> Transcript {
        Transcript::from_pairs([(Role::System, "What's bothering you?"), (Role::User, "I have a headache.")])
    }

    #[test]
    fn cosine_basics() {
        assert!((cosine_similarity(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(cosine_similarity(&[1.0], &[1.0, 0.0]), Err(CollectorError::Dimension(1, 2))));
    }

    #[test]
    fn lookup_is_strict() {
        let store = VectorStore::from_entries(vec![CacheEntry {
            dialogue_embedding: vec![1.0, 0.0],
            questions: vec!["q".into()],
            source_id: "a".into(),
        }]);
        let cfg = CollectorConfig::default();
        assert!(lookup_cache(&VectorStore::new(), &[1.0, 0.0], &cfg).unwrap().is_none());
        assert!(lookup_cache(&store, &[1.0, 0.0], &cfg).unwrap().is_some());
        // cos = 0.95
        let q = [0.95, (1.0f64 - 0.95 * 0.95).sqrt()];
        assert!(lookup_cache(&store, &q, &cfg).unwrap().is_none());
    }

    #[test]
    fn generated_then_cached() {
        let calls = AtomicUsize::new(0);
        let llm = |_: &CompletionRequest| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok("1. Where exactly is the pain located?\n2. How intense is the pain?".to_string())
        };
        let store = VectorStore::new();
        let cfg = CollectorConfig::default();
        let emb = HashedNgramEmbedder::default();
        let step = collect_step(&history(), &store, &cfg, &llm, &relevance(), &emb).unwrap();
        assert_eq!(step.provenance, Provenance::Generated);
        assert_eq!(step.question, "Where exactly is the pain located?");
        assert_eq!(store.len(), 1);
        let again = collect_step(&history(), &store, &cfg, &llm, &relevance(), &emb).unwrap();
        assert_eq!(again.provenance, Provenance::Cache);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn all_discarded_falls_back_after_retry() {
        let calls = AtomicUsize::new(0);
        let llm = |_: &CompletionRequest| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok("What's bothering you?\n".repeat(5))
        };
        let store = VectorStore::new();
        let cfg = CollectorConfig::default();
        let step =
            collect_step(&history(), &store, &cfg, &llm, &relevance(), &HashedNgramEmbedder::default()).unwrap();
        assert_eq!(step.provenance, Provenance::Fallback);
        assert_eq!(step.question, cfg.fallback_questions[0]);
        assert_eq!(calls.load(Ordering::SeqCst), 2);
        assert!(store.is_empty());
    }

    #[test]
    fn generation_failure_surfaces() {
        let llm = |_: &CompletionRequest| -> Result<String, AdapterError> { Err(AdapterError::Timeout("t".into())) };
        let r = collect_step(
            &history(),
            &VectorStore::new(),
            &CollectorConfig::default(),
            &llm,
            &relevance(),
            &HashedNgramEmbedder::default(),
        );
        assert!(matches!(r, Err(CollectorError::Generation(_))));
    }

    #[test]
    fn persistence_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let entry = CacheEntry { dialogue_embedding: vec![0.6, 0.8], questions: vec!["q".into()], source_id: "s".into() };
        {
            let store = VectorStore::open(&path).unwrap();
            store.insert(entry.clone()).unwrap();
        }
        let reopened = VectorStore::open(&path).unwrap();
        assert_eq!(reopened.entries(), vec![entry]);
        assert!(matches!(
            VectorStore::new().insert(CacheEntry { dialogue_embedding: vec![1.0], questions: vec![], source_id: "x".into() }),
            Err(StoreError::EmptyEntry)
        ));
    }

    #[test]
    fn rank_prefers_score_then_order() {
        let mut c = vec![
            QuestionCandidate { text: "a".into(), relevance_score: 0.0, discarded_as_duplicate: true },
            QuestionCandidate { text: "b".into(), relevance_score: 0.0, discarded_as_duplicate: false },
            QuestionCandidate { text: "c".into(), relevance_score: 0.0, discarded_as_duplicate: false },
        ];
        assert_eq!(rank_and_select(&mut c, &relevance()).unwrap().as_deref(), Some("b"));
        c.iter_mut().for_each(|c| c.discarded_as_duplicate = true);
        assert_eq!(rank_and_select(&mut c, &relevance()).unwrap(), None);
    }
}
