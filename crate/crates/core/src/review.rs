//! HTTP API for expert review: frozen candidate sets, optimistic label
//! revisions, live metrics and credit allocation.
//!
//! State changes are appended to a JSON Lines event log before they are
//! applied in memory, and the log is replayed on start. Each line is one of
//!
//! ```text
//! {"type":"label","seq":1,"dataset":"dev","query_id":"q1","rank":1,"label":"exact","revision":1}
//! {"type":"credit","seq":2,"module":{"module_name":"Networks","total_credits":20.0,"allocations":[...]}}
//! ```

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::credits::{aggregate_credits, BroadCategoryMap, CoverageProfile, ModuleCredit};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::eval::{
    aggregate, evaluate_dataset, Counts, Dataset, EffectiveGranularity, EvaluationReport, ExpertLabel, LabelRecord,
    LabelSet, RawRecord, EVAL_DEPTH,
};
use crate::selection::{MappingView, SelectionConfig};
use crate::tree::{KnowledgeRow, KnowledgeTree};

pub struct ServiceConfig {
    pub datasets: Vec<Dataset>,
    /// Name of the split covering every loaded dataset.
    pub split: String,
    pub selection: SelectionConfig,
    pub event_log: Option<PathBuf>,
    pub categories: BroadCategoryMap,
    /// Initial credits; logged credit events apply on top.
    pub modules: Vec<ModuleCredit>,
}

struct FrozenDataset {
    dataset: Dataset,
    rows: Vec<Vec<KnowledgeRow>>,
    views: Vec<MappingView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelRevision {
    pub revision: u64,
    pub label: ExpertLabel,
}

type CellKey = (String, String, usize);

#[derive(Default)]
struct Store {
    /// Full history per cell; the last entry is effective.
    cells: BTreeMap<CellKey, Vec<LabelRevision>>,
    modules: BTreeMap<String, ModuleCredit>,
    seq: u64,
    log: Option<File>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Label {
        seq: u64,
        dataset: String,
        query_id: String,
        rank: usize,
        label: ExpertLabel,
        revision: u64,
    },
    Credit {
        seq: u64,
        module: ModuleCredit,
    },
}

impl Store {
    fn append(&mut self, event: &Event) -> std::io::Result<()> {
        if let Some(f) = self.log.as_mut() {
            let mut line = serde_json::to_string(event).expect("event serializes");
            line.push('\n');
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        Ok(())
    }

    fn effective(&self, key: &CellKey) -> Option<&LabelRevision> {
        self.cells.get(key).and_then(|h| h.last())
    }

    fn label_set(&self, dataset: Option<&str>) -> LabelSet {
        let mut set = LabelSet::default();
        for ((d, q, rank), h) in &self.cells {
            if dataset.is_some_and(|x| x != d) {
                continue;
            }
            if let Some(last) = h.last() {
                set.insert(LabelRecord {
                    dataset: d.clone(),
                    query_id: q.clone(),
                    rank: *rank,
                    label: last.label,
                })
                .expect("cells are unique");
            }
        }
        set
    }
}

/// Shared service state. Candidate lists are computed once here and never
/// change for the life of the service.
pub struct ReviewState {
    datasets: BTreeMap<String, FrozenDataset>,
    split: String,
    tree: KnowledgeTree,
    categories: BroadCategoryMap,
    store: Mutex<Store>,
}

impl ReviewState {
    pub fn new(engine: &Engine, config: ServiceConfig) -> Result<Arc<Self>> {
        let mut datasets = BTreeMap::new();
        for ds in config.datasets {
            let mut rows = Vec::with_capacity(ds.records.len());
            let mut views = Vec::with_capacity(ds.records.len());
            for r in &ds.records {
                let m = engine.map_query(&r.kwop, &config.selection)?;
                views.push(m.view(true));
                rows.push(m.candidates.into_iter().map(|c| c.row).collect());
            }
            let name = ds.name.clone();
            let frozen = FrozenDataset {
                dataset: ds,
                rows,
                views,
            };
            if datasets.insert(name.clone(), frozen).is_some() {
                return Err(Error::InvalidArgument(format!("dataset \"{name}\" loaded twice")));
            }
        }
        let mut store = Store {
            modules: config.modules.into_iter().map(|m| (m.module_name.clone(), m)).collect(),
            ..Default::default()
        };
        let state = ReviewState {
            datasets,
            split: config.split,
            tree: engine.tree().clone(),
            categories: config.categories,
            store: Mutex::new(Store::default()),
        };
        if !store.modules.is_empty() {
            let modules: Vec<ModuleCredit> = store.modules.values().cloned().collect();
            aggregate_credits(&modules, &state.categories, &state.tree)?;
        }
        if let Some(path) = &config.event_log {
            if path.exists() {
                state.replay(&mut store, path)?;
            }
            store.log = Some(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| Error::io(path, e))?,
            );
        }
        *state.store.lock().expect("store lock") = store;
        Ok(Arc::new(state))
    }

    fn replay(&self, store: &mut Store, path: &std::path::Path) -> Result<()> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let event: Event =
                serde_json::from_str(&line).map_err(|e| Error::parse(format!("{}:{}", path.display(), i + 1), e))?;
            match event {
                Event::Label {
                    seq,
                    dataset,
                    query_id,
                    rank,
                    label,
                    revision,
                } => {
                    store.seq = store.seq.max(seq);
                    if self.check_cell(&dataset, &query_id, rank).is_err() {
                        log::warn!(
                            "event log line {}: label for unknown cell {dataset}/{query_id}#{rank} ignored",
                            i + 1
                        );
                        continue;
                    }
                    store
                        .cells
                        .entry((dataset, query_id, rank))
                        .or_default()
                        .push(LabelRevision { revision, label });
                }
                Event::Credit { seq, module } => {
                    store.seq = store.seq.max(seq);
                    store.modules.insert(module.module_name.clone(), module);
                }
            }
        }
        Ok(())
    }

    fn frozen(&self, dataset: &str) -> Result<&FrozenDataset> {
        self.datasets
            .get(dataset)
            .ok_or_else(|| Error::NotFound(format!("dataset \"{dataset}\"")))
    }

    fn query_index(&self, dataset: &str, query_id: &str) -> Result<(&FrozenDataset, usize)> {
        let f = self.frozen(dataset)?;
        let i = f
            .dataset
            .records
            .iter()
            .position(|r| r.query_id == query_id)
            .ok_or_else(|| Error::NotFound(format!("query \"{query_id}\" in dataset \"{dataset}\"")))?;
        Ok((f, i))
    }

    fn check_cell(&self, dataset: &str, query_id: &str, rank: usize) -> Result<()> {
        let (f, i) = self.query_index(dataset, query_id)?;
        let n = f.rows[i].len();
        if rank < 1 || rank > n {
            return Err(Error::InvalidArgument(format!("rank {rank} outside 1..={n}")));
        }
        Ok(())
    }

    pub fn split_name(&self) -> &str {
        &self.split
    }

    pub fn list_datasets(&self) -> Vec<DatasetSummary> {
        let store = self.store.lock().expect("store lock");
        self.datasets
            .iter()
            .map(|(name, f)| {
                let labeled = (0..f.dataset.records.len())
                    .filter(|&i| fully_labeled(&store, name, f, i))
                    .count();
                DatasetSummary {
                    name: name.clone(),
                    split: self.split.clone(),
                    n_queries: f.dataset.records.len(),
                    n_labeled: labeled,
                }
            })
            .collect()
    }

    pub fn list_queries(&self, dataset: &str) -> Result<Vec<QuerySummary>> {
        let f = self.frozen(dataset)?;
        let store = self.store.lock().expect("store lock");
        Ok(f.dataset
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let labeled_ranks = (1..=f.rows[i].len())
                    .filter(|rank| {
                        store
                            .effective(&(dataset.to_string(), r.query_id.clone(), *rank))
                            .is_some()
                    })
                    .count();
                QuerySummary {
                    query_id: r.query_id.clone(),
                    kwop: r.kwop.clone(),
                    n_candidates: f.rows[i].len(),
                    labeled_ranks,
                    status: if fully_labeled(&store, dataset, f, i) {
                        ReviewStatus::Labeled
                    } else {
                        ReviewStatus::Pending
                    },
                }
            })
            .collect())
    }

    pub fn get_candidates(&self, dataset: &str, query_id: &str) -> Result<CandidatesResponse> {
        let (f, i) = self.query_index(dataset, query_id)?;
        let record = &f.dataset.records[i];
        let store = self.store.lock().expect("store lock");
        let labels = (1..=f.rows[i].len())
            .filter_map(|rank| {
                store
                    .effective(&(dataset.to_string(), query_id.to_string(), rank))
                    .map(|l| RankLabel {
                        rank,
                        label: l.label,
                        revision: l.revision,
                    })
            })
            .collect();
        Ok(CandidatesResponse {
            dataset: dataset.to_string(),
            query_id: query_id.to_string(),
            kwop: record.kwop.clone(),
            reference: RawRecord::from(record),
            granularity: record.reference.effective_granularity()?,
            result: f.views[i].clone(),
            labels,
        })
    }

    /// Applies a label under optimistic concurrency.
    pub fn submit_label(&self, req: &LabelRequest) -> std::result::Result<LabelAck, SubmitError> {
        self.check_cell(&req.dataset, &req.query_id, req.rank)
            .map_err(SubmitError::Invalid)?;
        let key = (req.dataset.clone(), req.query_id.clone(), req.rank);
        let mut store = self.store.lock().expect("store lock");
        let current = store.effective(&key).cloned();
        let current_rev = current.as_ref().map_or(0, |c| c.revision);
        if let Some(c) = &current {
            if c.label == req.label {
                return Ok(ack(req, c.revision, false));
            }
        }
        let base = req.base_revision.unwrap_or(0);
        if base != current_rev {
            return Err(SubmitError::Conflict {
                current_revision: current_rev,
                current_label: current.map(|c| c.label),
            });
        }
        let revision = current_rev + 1;
        store.seq += 1;
        let event = Event::Label {
            seq: store.seq,
            dataset: req.dataset.clone(),
            query_id: req.query_id.clone(),
            rank: req.rank,
            label: req.label,
            revision,
        };
        store.append(&event).map_err(|e| SubmitError::Io(e.to_string()))?;
        store.cells.entry(key).or_default().push(LabelRevision {
            revision,
            label: req.label,
        });
        Ok(ack(req, revision, true))
    }

    pub fn label_history(&self, dataset: &str, query_id: &str, rank: usize) -> Vec<LabelRevision> {
        let store = self.store.lock().expect("store lock");
        store
            .cells
            .get(&(dataset.to_string(), query_id.to_string(), rank))
            .cloned()
            .unwrap_or_default()
    }

    /// Metrics over one dataset (`dataset:NAME`) or the whole split
    /// (`split:NAME`, the default).
    pub fn get_metrics(&self, scope: Option<&str>) -> Result<EvaluationReport> {
        let names: Vec<&String> = match scope.map(|s| s.split_once(':').unwrap_or(("", s))) {
            None => self.datasets.keys().collect(),
            Some(("split", s)) if s == self.split => self.datasets.keys().collect(),
            Some(("split", s)) => return Err(Error::NotFound(format!("split \"{s}\""))),
            Some(("dataset", d)) => vec![
                self.datasets
                    .get_key_value(d)
                    .ok_or_else(|| Error::NotFound(format!("dataset \"{d}\"")))?
                    .0,
            ],
            Some(_) => {
                return Err(Error::InvalidArgument(
                    "scope must be dataset:NAME or split:NAME".into(),
                ))
            }
        };
        let labels = self.store.lock().expect("store lock").label_set(None);
        let mut counts = Vec::with_capacity(names.len());
        for name in names {
            let f = &self.datasets[name];
            let outcomes = evaluate_dataset(&f.dataset, &f.rows, Some(&labels))?;
            counts.push((name.clone(), Counts::from_outcomes(&outcomes, true)));
        }
        aggregate(&counts, &self.split)
    }

    /// Effective labels as a label file.
    pub fn export_labels(&self, dataset: Option<&str>) -> String {
        self.store.lock().expect("store lock").label_set(dataset).to_jsonl()
    }

    pub fn get_credits(&self) -> Result<CreditsResponse> {
        let store = self.store.lock().expect("store lock");
        self.credits_response(&store.modules)
    }

    fn credits_response(&self, modules: &BTreeMap<String, ModuleCredit>) -> Result<CreditsResponse> {
        let list: Vec<ModuleCredit> = modules.values().cloned().collect();
        let profile = aggregate_credits(&list, &self.categories, &self.tree)?;
        Ok(CreditsResponse { modules: list, profile })
    }

    /// Inserts or replaces a module by name.
    pub fn put_credit(&self, module: ModuleCredit) -> std::result::Result<CreditsResponse, SubmitError> {
        let mut store = self.store.lock().expect("store lock");
        let mut next = store.modules.clone();
        next.insert(module.module_name.clone(), module.clone());
        let response = self.credits_response(&next).map_err(SubmitError::Invalid)?;
        store.seq += 1;
        let event = Event::Credit { seq: store.seq, module };
        store.append(&event).map_err(|e| SubmitError::Io(e.to_string()))?;
        store.modules = next;
        Ok(response)
    }
}

fn fully_labeled(store: &Store, dataset: &str, f: &FrozenDataset, i: usize) -> bool {
    let q = &f.dataset.records[i].query_id;
    (1..=f.rows[i].len().min(EVAL_DEPTH)).all(|rank| store.effective(&(dataset.to_string(), q.clone(), rank)).is_some())
}

fn ack(req: &LabelRequest, revision: u64, changed: bool) -> LabelAck {
    LabelAck {
        dataset: req.dataset.clone(),
        query_id: req.query_id.clone(),
        rank: req.rank,
        label: req.label,
        revision,
        changed,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub split: String,
    pub n_queries: usize,
    /// Queries whose top candidates all carry a label.
    pub n_labeled: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Pending,
    Labeled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySummary {
    pub query_id: String,
    pub kwop: String,
    pub n_candidates: usize,
    pub labeled_ranks: usize,
    pub status: ReviewStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankLabel {
    pub rank: usize,
    pub label: ExpertLabel,
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatesResponse {
    pub dataset: String,
    pub query_id: String,
    pub kwop: String,
    /// Reference fields as in the dataset file, `***` included.
    pub reference: RawRecord,
    pub granularity: EffectiveGranularity,
    /// Same shape as `map --explain --format json`.
    pub result: MappingView,
    pub labels: Vec<RankLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRequest {
    pub dataset: String,
    pub query_id: String,
    pub rank: usize,
    pub label: ExpertLabel,
    /// Revision the client last saw for this cell; 0 or absent for a first
    /// write.
    #[serde(default)]
    pub base_revision: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelAck {
    pub dataset: String,
    pub query_id: String,
    pub rank: usize,
    pub label: ExpertLabel,
    pub revision: u64,
    /// False when the request repeated the effective label.
    pub changed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreditsResponse {
    pub modules: Vec<ModuleCredit>,
    pub profile: CoverageProfile,
}

#[derive(Debug)]
pub enum SubmitError {
    Invalid(Error),
    Conflict {
        current_revision: u64,
        current_label: Option<ExpertLabel>,
    },
    Io(String),
}

struct ApiError(StatusCode, serde_json::Value);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::InvalidArgument(_) | Error::Validation { .. } | Error::Parse { .. } => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, serde_json::json!({ "error": e.to_string() }))
    }
}

impl From<SubmitError> for ApiError {
    fn from(e: SubmitError) -> Self {
        match e {
            SubmitError::Invalid(e) => e.into(),
            SubmitError::Conflict {
                current_revision,
                current_label,
            } => ApiError(
                StatusCode::CONFLICT,
                serde_json::json!({
                    "error": "stale revision",
                    "current_revision": current_revision,
                    "current_label": current_label,
                }),
            ),
            SubmitError::Io(msg) => ApiError(StatusCode::INTERNAL_SERVER_ERROR, serde_json::json!({ "error": msg })),
        }
    }
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> std::result::Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        let status = if e.is_syntax() || e.is_eof() {
            StatusCode::BAD_REQUEST
        } else {
            StatusCode::UNPROCESSABLE_ENTITY
        };
        ApiError(status, serde_json::json!({ "error": e.to_string() }))
    })
}

type Shared = State<Arc<ReviewState>>;

async fn datasets(State(s): Shared) -> Json<Vec<DatasetSummary>> {
    Json(s.list_datasets())
}

async fn queries(State(s): Shared, Path(d): Path<String>) -> std::result::Result<Json<Vec<QuerySummary>>, ApiError> {
    Ok(Json(s.list_queries(&d)?))
}

async fn candidates(
    State(s): Shared,
    Path((d, q)): Path<(String, String)>,
) -> std::result::Result<Json<CandidatesResponse>, ApiError> {
    Ok(Json(s.get_candidates(&d, &q)?))
}

async fn labels(State(s): Shared, body: Bytes) -> std::result::Result<Json<LabelAck>, ApiError> {
    let req: LabelRequest = parse_body(&body)?;
    Ok(Json(s.submit_label(&req)?))
}

#[derive(Deserialize)]
struct ScopeParams {
    scope: Option<String>,
}

async fn metrics(
    State(s): Shared,
    Query(p): Query<ScopeParams>,
) -> std::result::Result<Json<EvaluationReport>, ApiError> {
    Ok(Json(s.get_metrics(p.scope.as_deref())?))
}

#[derive(Deserialize)]
struct ExportParams {
    dataset: Option<String>,
}

async fn export(State(s): Shared, Query(p): Query<ExportParams>) -> impl IntoResponse {
    (
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        s.export_labels(p.dataset.as_deref()),
    )
}

async fn get_credits(State(s): Shared) -> std::result::Result<Json<CreditsResponse>, ApiError> {
    Ok(Json(s.get_credits()?))
}

async fn put_credits(State(s): Shared, body: Bytes) -> std::result::Result<Json<CreditsResponse>, ApiError> {
    let module: ModuleCredit = parse_body(&body)?;
    Ok(Json(s.put_credit(module)?))
}

pub fn router(state: Arc<ReviewState>) -> Router {
    Router::new()
        .route("/api/datasets", get(datasets))
        .route("/api/datasets/{d}/queries", get(queries))
        .route("/api/datasets/{d}/queries/{q}/candidates", get(candidates))
        .route("/api/labels", post(labels))
        .route("/api/metrics", get(metrics))
        .route("/api/export/labels", get(export))
        .route("/api/credits", get(get_credits).put(put_credits))
        .with_state(state)
}

/// Serves until the listener fails or ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<ReviewState>) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
