//! Request handlers and wire types.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use knowlens_core::dataset::{
    attribute_summary, load_dataset, normalize_features, parse_schema, validate_schema, AttrRole, AttributeSpec,
    AttributeSummary, Dataset,
};
use knowlens_core::embednet::{init_model, train, EmbeddingModel, Hyperparams, LossReport};
use knowlens_core::explain::{
    explain, factor_histogram, factor_matrix, overlap_coefficient, resolve_comparison, ComparisonMode, ExplainConfig,
    ExplanationResult, FactorKind, Histogram, DEFAULT_BINS,
};
use knowlens_core::knowledge::{
    discretize_samples, group_features, suggest_grouping, BinSet, KnowledgeTree, LabelAssignment, NodeId, ROOT,
};
use knowlens_core::projection::{lasso_select, project, to_viewport, NeighborParams, ProjectionMethod};
use knowlens_core::Error as CoreError;
use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiJson, ApiQuery, ApiResult};
use crate::session::{
    lock, JobStatus, ProjectionEntry, ProjectionKey, Selection, Session, SessionState, SharedSession, MAX_SELECTIONS,
};
use crate::AppState;

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> ApiResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VersionQuery {
    pub version: Option<u64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VersionBody {
    pub version: u64,
}

// sessions

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub csv: String,
    /// Attribute list, either as JSON or as a JSON-encoded string.
    pub schema: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionInfo {
    pub id: String,
    pub version: u64,
    pub n: usize,
    pub d: usize,
    pub embedding: Vec<String>,
    pub descriptive: Vec<String>,
    pub tree_version: u64,
    pub has_model: bool,
    pub job: JobStatus,
    pub selections: Vec<String>,
}

fn session_info(s: &Session) -> SessionInfo {
    let names = |v: Vec<&str>| v.into_iter().map(str::to_owned).collect();
    SessionInfo {
        id: s.id.to_string(),
        version: s.version,
        n: s.dataset.n(),
        d: s.dataset.d(),
        embedding: names(s.dataset.embedding_names()),
        descriptive: names(s.dataset.descriptive_names()),
        tree_version: s.tree_version,
        has_model: s.model.is_some(),
        job: s.job.status,
        selections: s.selections.iter().map(|x| x.name.clone()).collect(),
    }
}

pub async fn create_session(
    State(app): State<AppState>,
    ApiJson(req): ApiJson<CreateSession>,
) -> ApiResult<(StatusCode, Json<SessionInfo>)> {
    let schema: Vec<AttributeSpec> = match req.schema {
        serde_json::Value::String(s) => parse_schema(&s)?,
        other => {
            let schema: Vec<AttributeSpec> =
                serde_json::from_value(other).map_err(|e| ApiError::validation(format!("schema: {e}")))?;
            validate_schema(&schema)?;
            schema
        }
    };
    let cfg = app.config.clone();
    if schema.len() > cfg.max_columns {
        return Err(ApiError::validation(format!(
            "{} attributes exceed the limit of {}",
            schema.len(),
            cfg.max_columns
        )));
    }
    let rows = req
        .csv
        .lines()
        .filter(|l| !l.trim().is_empty())
        .count()
        .saturating_sub(1);
    if rows > cfg.max_rows {
        return Err(ApiError::validation(format!(
            "{rows} rows exceed the limit of {}",
            cfg.max_rows
        )));
    }
    let session = blocking(move || {
        let ds = load_dataset(req.csv.as_bytes(), &schema)?;
        let features = normalize_features(&ds);
        Ok(Session::new(ds, features, cfg.default_hp))
    })
    .await?;
    let info = session_info(&session);
    app.insert(session.id, Arc::new(std::sync::Mutex::new(session)))?;
    tracing::info!(session = %info.id, n = info.n, d = info.d, "session created");
    Ok((StatusCode::CREATED, Json(info)))
}

pub async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionInfo>> {
    let session = app.session(&id)?;
    let s = lock(&session);
    Ok(Json(session_info(&s)))
}

pub async fn delete_session(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    {
        let session = app.session(&id)?;
        let s = lock(&session);
        s.job.cancel.store(true, Ordering::Relaxed);
    }
    app.remove(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AttributeInfo {
    pub role: AttrRole,
    pub summary: AttributeSummary,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AttributesResponse {
    pub version: u64,
    pub attributes: Vec<AttributeInfo>,
}

pub async fn get_attributes(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<AttributesResponse>> {
    let session = app.session(&id)?;
    let s = lock(&session);
    let attributes = s
        .dataset
        .schema()
        .iter()
        .map(|a| {
            Ok(AttributeInfo {
                role: a.role,
                summary: attribute_summary(&s.dataset, &a.name)?,
            })
        })
        .collect::<ApiResult<Vec<_>>>()?;
    Ok(Json(AttributesResponse {
        version: s.version,
        attributes,
    }))
}

// knowledge tree

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BinInfo {
    pub index: usize,
    pub label: String,
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SplitInfo {
    pub attribute: String,
    pub bins: Vec<BinInfo>,
    /// Child node per group; `null` for deleted children.
    pub children: Vec<Option<NodeId>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NodeInfo {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub color: u32,
    pub is_leaf: bool,
    /// Class id when the node is a valid class.
    pub class_id: Option<usize>,
    pub size: usize,
    /// Share of all samples, in percent.
    pub percent: f64,
    /// Mean normalized embedding feature per dimension.
    pub means: Vec<f64>,
    pub split: Option<SplitInfo>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClassInfo {
    pub id: usize,
    pub node: NodeId,
    pub color: u32,
    pub size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TreeResponse {
    pub version: u64,
    pub tree_version: u64,
    pub nodes: Vec<NodeInfo>,
    pub classes: Vec<ClassInfo>,
    pub active_count: usize,
    pub filtered_count: usize,
}

fn bin_counts(ds: &Dataset, bins: &BinSet, samples: &[usize]) -> ApiResult<Vec<usize>> {
    let idx = ds.attribute_index(&bins.attribute)?;
    let mut counts = vec![0; bins.len()];
    for &s in samples {
        if let Some(b) = bins.bin_of(ds, idx, s) {
            counts[b] += 1;
        }
    }
    Ok(counts)
}

fn tree_response(s: &Session) -> ApiResult<TreeResponse> {
    let ds = &s.dataset;
    let labels = s.tree.derive_labels(ds).ok();
    let class_of: BTreeMap<NodeId, usize> = labels
        .iter()
        .flat_map(|l| l.class_nodes.iter().enumerate().map(|(c, &node)| (node, c)))
        .collect();
    let mut nodes = Vec::new();
    for node in s.tree.nodes() {
        let support = s.tree.support(ds, node.id)?;
        let mut means = vec![0.0; s.features.d()];
        for &r in &support {
            for (m, v) in means.iter_mut().zip(s.features.values.row(r)) {
                *m += v;
            }
        }
        if !support.is_empty() {
            means.iter_mut().for_each(|m| *m /= support.len() as f64);
        }
        let split = match &node.split {
            Some(split) => {
                let counts = bin_counts(ds, &split.bins, &support)?;
                Some(SplitInfo {
                    attribute: split.bins.attribute.clone(),
                    bins: (0..split.bins.len())
                        .map(|i| BinInfo {
                            index: i,
                            label: split.bins.label(i),
                            count: counts[i],
                            group: split.bin_to_group.get(&i).copied(),
                        })
                        .collect(),
                    children: split.children.clone(),
                })
            }
            None => None,
        };
        nodes.push(NodeInfo {
            id: node.id,
            parent: node.parent,
            color: node.color,
            is_leaf: node.is_leaf(),
            class_id: class_of.get(&node.id).copied(),
            size: support.len(),
            percent: 100.0 * support.len() as f64 / ds.n() as f64,
            means,
            split,
        });
    }
    let classes = labels
        .as_ref()
        .map(|l| {
            l.class_nodes
                .iter()
                .enumerate()
                .map(|(c, &node)| ClassInfo {
                    id: c,
                    node,
                    color: s.tree.node(node).map_or(0, |n| n.color),
                    size: l.class_sizes[c],
                })
                .collect()
        })
        .unwrap_or_default();
    let active_count = labels.as_ref().map_or(0, |l| l.active_count);
    Ok(TreeResponse {
        version: s.version,
        tree_version: s.tree_version,
        nodes,
        classes,
        active_count,
        filtered_count: ds.n() - active_count,
    })
}

pub async fn get_tree(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<TreeResponse>> {
    let session = app.session(&id)?;
    let s = lock(&session);
    Ok(Json(tree_response(&s)?))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinsQuery {
    pub node: Option<NodeId>,
    pub attr: String,
    pub resolution: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BinsResponse {
    pub version: u64,
    pub attribute: String,
    pub bins: Vec<BinInfo>,
}

fn node_bins(s: &Session, node: NodeId, attr: &str, resolution: usize) -> ApiResult<(BinSet, Vec<usize>, Vec<usize>)> {
    let support = s.tree.support(&s.dataset, node)?;
    let bins = discretize_samples(&s.dataset, attr, resolution, &support)?;
    let counts = bin_counts(&s.dataset, &bins, &support)?;
    Ok((bins, counts, support))
}

fn bin_infos(bins: &BinSet, counts: &[usize]) -> Vec<BinInfo> {
    (0..bins.len())
        .map(|i| BinInfo {
            index: i,
            label: bins.label(i),
            count: counts[i],
            group: None,
        })
        .collect()
}

/// Distribution of one attribute over a node's samples, for the grouping
/// dialog's bar chart.
pub async fn get_bins(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiQuery(q): ApiQuery<BinsQuery>,
) -> ApiResult<Json<BinsResponse>> {
    let session = app.session(&id)?;
    let s = lock(&session);
    let (bins, counts, _) = node_bins(&s, q.node.unwrap_or(ROOT), &q.attr, q.resolution.unwrap_or(10))?;
    Ok(Json(BinsResponse {
        version: s.version,
        attribute: bins.attribute.clone(),
        bins: bin_infos(&bins, &counts),
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRequest {
    pub node: Option<NodeId>,
    pub attr: String,
    pub resolution: usize,
    /// Bin indices per group; bins not listed are filtered out.
    pub groups: Vec<Vec<usize>>,
    pub version: Option<u64>,
}

fn mapping(groups: &[Vec<usize>]) -> ApiResult<BTreeMap<usize, usize>> {
    let mut out = BTreeMap::new();
    for (g, bins) in groups.iter().enumerate() {
        if bins.is_empty() {
            return Err(ApiError::validation(format!("group {g} lists no bins")));
        }
        for &b in bins {
            if out.insert(b, g).is_some() {
                return Err(ApiError::validation(format!("bin {b} appears in two groups")));
            }
        }
    }
    Ok(out)
}

fn edit_tree(
    app: &AppState,
    id: &str,
    version: Option<u64>,
    edit: impl FnOnce(&Session) -> ApiResult<KnowledgeTree>,
) -> ApiResult<Json<TreeResponse>> {
    let session = app.session(id)?;
    let mut s = lock(&session);
    s.ensure_idle()?;
    s.check_version(version)?;
    let tree = edit(&s)?;
    s.set_tree(tree);
    Ok(Json(tree_response(&s)?))
}

pub async fn tree_create(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<SplitRequest>,
) -> ApiResult<Json<TreeResponse>> {
    let map = mapping(&req.groups)?;
    edit_tree(&app, &id, req.version, |s| {
        Ok(s.tree
            .create_classes(&s.dataset, req.node.unwrap_or(ROOT), &req.attr, req.resolution, &map)?)
    })
}

pub async fn tree_refine(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<SplitRequest>,
) -> ApiResult<Json<TreeResponse>> {
    let map = mapping(&req.groups)?;
    let node = req.node.ok_or_else(|| ApiError::validation("refine needs a `node`"))?;
    edit_tree(&app, &id, req.version, |s| {
        Ok(s.tree.refine_class(&s.dataset, node, &req.attr, req.resolution, &map)?)
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeleteRequest {
    pub node: NodeId,
    pub version: Option<u64>,
}

pub async fn tree_delete(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<DeleteRequest>,
) -> ApiResult<Json<TreeResponse>> {
    edit_tree(&app, &id, req.version, |s| {
        s.tree.node(req.node)?;
        Ok(s.tree.delete_class(req.node)?)
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SuggestRequest {
    pub node: Option<NodeId>,
    pub attr: String,
    pub resolution: usize,
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    /// Attributes summarized per bin; defaults to every descriptive attribute.
    pub grouping_attrs: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SuggestResponse {
    pub version: u64,
    pub attribute: String,
    pub bins: Vec<BinInfo>,
    /// Suggested bin indices per group, ready for `tree/create` or `tree/refine`.
    pub groups: Vec<Vec<usize>>,
}

pub async fn tree_suggest(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<SuggestRequest>,
) -> ApiResult<Json<SuggestResponse>> {
    let session = app.session(&id)?;
    let s = lock(&session);
    let (bins, counts, support) = node_bins(&s, req.node.unwrap_or(ROOT), &req.attr, req.resolution)?;
    let attrs: Vec<String> = match req.grouping_attrs {
        Some(a) => a,
        None => s.dataset.descriptive_names().into_iter().map(str::to_owned).collect(),
    };
    let attrs: Vec<&str> = attrs.iter().map(String::as_str).collect();
    let features = group_features(&s.dataset, &bins, &attrs, &support)?;
    let cluster = suggest_grouping(&features, req.k, req.seed)?;
    let mut groups = vec![Vec::new(); req.k];
    for (f, &c) in features.iter().zip(&cluster) {
        groups[c].push(f.bin);
    }
    Ok(Json(SuggestResponse {
        version: s.version,
        attribute: bins.attribute.clone(),
        bins: bin_infos(&bins, &counts),
        groups,
    }))
}

// training

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TrainRequest {
    /// Share of the classification loss in percent.
    pub clr_percent: Option<f64>,
    pub epochs: Option<usize>,
    pub eta: Option<f64>,
    pub batch: Option<usize>,
    pub embed_dim: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub seed: Option<u64>,
    /// Continue from the current embeddings instead of a fresh start.
    pub warm_start: Option<bool>,
    pub version: Option<u64>,
}

impl TrainRequest {
    fn apply(&self, mut hp: Hyperparams) -> Hyperparams {
        if let Some(p) = self.clr_percent {
            hp = hp.with_clr_percent(p);
        }
        hp.epochs = self.epochs.unwrap_or(hp.epochs);
        hp.eta = self.eta.unwrap_or(hp.eta);
        hp.batch_size = self.batch.unwrap_or(hp.batch_size);
        hp.embed_dim = self.embed_dim.unwrap_or(hp.embed_dim);
        hp.hidden_dim = self.hidden_dim.unwrap_or(hp.hidden_dim);
        hp.seed = self.seed.unwrap_or(hp.seed);
        hp
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JobResponse {
    pub version: u64,
    pub status: JobStatus,
    pub generation: u64,
    pub epoch: usize,
    pub epochs: usize,
    pub latest: Option<LossReport>,
    pub history: Vec<LossReport>,
    pub error: Option<String>,
    pub cancelled: bool,
    pub cancelling: bool,
    pub model_step: Option<u64>,
    pub hyperparams: Hyperparams,
    pub warm_start: bool,
}

fn job_response(s: &Session) -> JobResponse {
    let job = &s.job;
    JobResponse {
        version: s.version,
        status: job.status,
        generation: job.generation,
        epoch: job.history.len(),
        epochs: job.epochs,
        latest: job.history.last().copied(),
        history: job.history.clone(),
        error: job.error.clone(),
        cancelled: job.cancelled,
        cancelling: job.status == JobStatus::Running && job.cancel.load(Ordering::Relaxed),
        model_step: s.model.as_ref().map(|m| m.step),
        hyperparams: s.hp,
        warm_start: s.warm_start,
    }
}

fn check_trainable(hp: &Hyperparams, labels: &LabelAssignment) -> ApiResult<()> {
    hp.validate()?;
    if hp.batch_size > labels.active_count {
        return Err(ApiError::validation(format!(
            "batch size {} exceeds {} active samples",
            hp.batch_size, labels.active_count
        )));
    }
    if hp.alpha > 0.0 && labels.num_classes() < 2 {
        return Err(CoreError::InvalidLabels("the classification loss needs at least two classes".into()).into());
    }
    Ok(())
}

pub async fn start_training(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<JobResponse>)> {
    let req: TrainRequest = if body.iter().all(u8::is_ascii_whitespace) {
        TrainRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::validation(format!("train: {e}")))?
    };
    let session = app.session(&id)?;
    let mut s = lock(&session);
    s.ensure_idle()?;
    s.check_version(req.version)?;
    let hp = req.apply(s.hp);
    let labels = Arc::new(s.labels()?);
    check_trainable(&hp, &labels)?;
    let warm_start = req.warm_start.unwrap_or(s.warm_start);

    let start = match (&s.model, warm_start) {
        (Some(m), true)
            if m.n() == s.features.n() && m.embed_dim() == hp.embed_dim && m.hidden_dim() == hp.hidden_dim =>
        {
            Some((**m).clone())
        }
        _ => None,
    };
    s.hp = hp;
    s.warm_start = warm_start;
    s.version += 1;
    let cancel = Arc::new(AtomicBool::new(false));
    let job = &mut s.job;
    job.status = JobStatus::Running;
    job.generation += 1;
    job.epochs = hp.epochs;
    job.history.clear();
    job.error = None;
    job.cancelled = false;
    job.cancel = cancel.clone();
    let generation = job.generation;
    let features = s.features.clone();
    let response = job_response(&s);
    drop(s);

    let worker = session.clone();
    tokio::task::spawn_blocking(move || {
        let outcome = start
            .map(Ok)
            .unwrap_or_else(|| init_model(features.n(), features.d(), &hp))
            .and_then(|model| {
                train(model, &features, &labels, &hp, |report| {
                    let mut s = lock(&worker);
                    if s.job.generation == generation {
                        s.job.history.push(*report);
                    }
                    !cancel.load(Ordering::Relaxed)
                })
            });
        finish_job(&worker, generation, labels, outcome);
    });
    Ok((StatusCode::ACCEPTED, Json(response)))
}

fn finish_job(
    session: &SharedSession,
    generation: u64,
    labels: Arc<LabelAssignment>,
    outcome: knowlens_core::Result<(EmbeddingModel, Vec<LossReport>)>,
) {
    let mut s = lock(session);
    if s.job.generation != generation {
        return;
    }
    match outcome {
        Ok((model, _)) => {
            s.drop_model();
            s.model = Some(Arc::new(model));
            s.model_labels = Some(labels);
            s.job.status = JobStatus::Idle;
            tracing::info!(session = %s.id, "training finished");
        }
        Err(CoreError::Cancelled { epochs_done }) => {
            s.job.status = JobStatus::Idle;
            s.job.cancelled = true;
            tracing::info!(session = %s.id, epochs_done, "training cancelled");
        }
        Err(e) => {
            s.job.status = JobStatus::Failed;
            s.job.error = Some(e.to_string());
            tracing::warn!(session = %s.id, error = %e, "training failed");
        }
    }
    s.version += 1;
}

pub async fn training_status(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JobResponse>> {
    let session = app.session(&id)?;
    let s = lock(&session);
    Ok(Json(job_response(&s)))
}

pub async fn cancel_training(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiQuery(q): ApiQuery<VersionQuery>,
) -> ApiResult<(StatusCode, Json<JobResponse>)> {
    let session = app.session(&id)?;
    let s = lock(&session);
    s.check_version(q.version)?;
    if s.job.status != JobStatus::Running {
        return Err(ApiError::conflict("no training job is running"));
    }
    s.job.cancel.store(true, Ordering::Relaxed);
    Ok((StatusCode::ACCEPTED, Json(job_response(&s))))
}

// projection and selections

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionQuery {
    pub method: Option<String>,
    pub seed: Option<u64>,
    pub neighbors: Option<usize>,
    pub iterations: Option<usize>,
}

impl ProjectionQuery {
    fn key(&self) -> ApiResult<ProjectionKey> {
        let defaults = NeighborParams::default();
        let method = match &self.method {
            Some(m) => m.parse::<ProjectionMethod>()?,
            None => ProjectionMethod::NeighborEmbedding,
        };
        Ok(ProjectionKey {
            method,
            seed: self.seed.unwrap_or(0),
            neighbors: self.neighbors.unwrap_or(defaults.neighbors),
            iterations: self.iterations.unwrap_or(defaults.iterations),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Point {
    pub id: usize,
    /// Viewport coordinates in `[0, 1]`.
    pub x: f64,
    pub y: f64,
    pub class_id: usize,
    pub color: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProjectionResponse {
    pub version: u64,
    pub key: ProjectionKey,
    pub model_step: u64,
    pub degenerate: bool,
    pub points: Vec<Point>,
    pub classes: Vec<ClassInfo>,
}

/// Cached layout of the current model for `key`, computed on a blocking
/// thread when missing.
async fn projection_for(session: &SharedSession, key: ProjectionKey) -> ApiResult<Arc<ProjectionEntry>> {
    let (model, labels) = {
        let s = lock(session);
        if let Some(p) = s.projections.get(&key) {
            return Ok(p.clone());
        }
        s.model()?
    };
    let compute_model = model.clone();
    let entry = blocking(move || {
        let ids = labels.active_samples();
        let h = compute_model.h.select(Axis(0), &ids);
        let params = NeighborParams {
            neighbors: key.neighbors.min(ids.len().saturating_sub(1)).max(1),
            iterations: key.iterations,
            ..NeighborParams::default()
        };
        let mut projection = project(h.view(), key.method, &params, key.seed)?;
        projection.model_step = compute_model.step;
        let viewport = to_viewport(projection.coords.view());
        Ok(Arc::new(ProjectionEntry {
            key,
            ids,
            projection,
            viewport,
        }))
    })
    .await?;
    let mut s = lock(session);
    if s.model.as_ref().is_some_and(|m| Arc::ptr_eq(m, &model)) {
        s.projections.insert(key, entry.clone());
    }
    Ok(entry)
}

pub async fn get_projection(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiQuery(q): ApiQuery<ProjectionQuery>,
) -> ApiResult<Json<ProjectionResponse>> {
    let key = q.key()?;
    let session = app.session(&id)?;
    let entry = projection_for(&session, key).await?;
    let s = lock(&session);
    let (_, labels) = s.model()?;
    let color = |node: NodeId| s.tree.node(node).map_or(0, |n| n.color);
    let points = entry
        .ids
        .iter()
        .enumerate()
        .map(|(r, &id)| {
            let class_id = labels.labels[id].unwrap_or_default();
            Point {
                id,
                x: entry.viewport[[r, 0]],
                y: entry.viewport[[r, 1]],
                class_id,
                color: color(labels.class_nodes[class_id]),
            }
        })
        .collect();
    let classes = labels
        .class_nodes
        .iter()
        .enumerate()
        .map(|(c, &node)| ClassInfo {
            id: c,
            node,
            color: color(node),
            size: labels.class_sizes[c],
        })
        .collect();
    Ok(Json(ProjectionResponse {
        version: s.version,
        key,
        model_step: entry.projection.model_step,
        degenerate: entry.projection.degenerate,
        points,
        classes,
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionRequest {
    pub name: String,
    /// Lasso polygon in the viewport coordinates of the projection.
    pub polygon: Vec<[f64; 2]>,
    pub method: Option<String>,
    pub seed: Option<u64>,
    pub neighbors: Option<usize>,
    pub iterations: Option<usize>,
    pub version: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionResponse {
    pub version: u64,
    pub selection: Selection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionsResponse {
    pub version: u64,
    pub selections: Vec<Selection>,
}

pub async fn add_selection(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<SelectionRequest>,
) -> ApiResult<Json<SelectionResponse>> {
    if req.name.trim().is_empty() {
        return Err(ApiError::validation("selection name is empty"));
    }
    if req.polygon.len() < 3 {
        return Err(ApiError::validation("a lasso polygon needs at least 3 vertices"));
    }
    if req.polygon.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ApiError::validation("polygon has non-finite coordinates"));
    }
    let key = ProjectionQuery {
        method: req.method.clone(),
        seed: req.seed,
        neighbors: req.neighbors,
        iterations: req.iterations,
    }
    .key()?;
    let session = app.session(&id)?;
    {
        let s = lock(&session);
        s.check_version(req.version)?;
    }
    let entry = projection_for(&session, key).await?;
    let polygon: Vec<(f64, f64)> = req.polygon.iter().map(|p| (p[0], p[1])).collect();
    let rows = lasso_select(entry.viewport.view(), &polygon)?;
    if rows.is_empty() {
        return Err(CoreError::EmptySelection.into());
    }
    let mut ids: Vec<usize> = rows.iter().map(|&r| entry.ids[r]).collect();
    ids.sort_unstable();
    let selection = Selection {
        name: req.name,
        polygon: req.polygon,
        projection: key,
        ids,
    };

    let mut s = lock(&session);
    s.check_version(req.version)?;
    if !s.projections.get(&key).is_some_and(|p| Arc::ptr_eq(p, &entry)) {
        return Err(ApiError::conflict("the model changed while resolving the selection"));
    }
    match s.selections.iter().position(|x| x.name == selection.name) {
        Some(i) => s.selections[i] = selection.clone(),
        None if s.selections.len() >= MAX_SELECTIONS => {
            return Err(ApiError::validation(format!(
                "at most {MAX_SELECTIONS} selections; delete one first"
            )))
        }
        None => s.selections.push(selection.clone()),
    }
    s.version += 1;
    Ok(Json(SelectionResponse {
        version: s.version,
        selection,
    }))
}

pub async fn list_selections(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<SelectionsResponse>> {
    let session = app.session(&id)?;
    let s = lock(&session);
    Ok(Json(SelectionsResponse {
        version: s.version,
        selections: s.selections.clone(),
    }))
}

pub async fn clear_selections(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiQuery(q): ApiQuery<VersionQuery>,
) -> ApiResult<Json<SelectionsResponse>> {
    let session = app.session(&id)?;
    let mut s = lock(&session);
    s.check_version(q.version)?;
    s.selections.clear();
    s.version += 1;
    Ok(Json(SelectionsResponse {
        version: s.version,
        selections: Vec::new(),
    }))
}

pub async fn delete_selection(
    State(app): State<AppState>,
    Path((id, name)): Path<(String, String)>,
    ApiQuery(q): ApiQuery<VersionQuery>,
) -> ApiResult<Json<SelectionsResponse>> {
    let session = app.session(&id)?;
    let mut s = lock(&session);
    s.check_version(q.version)?;
    let i = s
        .selections
        .iter()
        .position(|x| x.name == name)
        .ok_or_else(|| ApiError::not_found(format!("unknown selection `{name}`")))?;
    s.selections.remove(i);
    s.version += 1;
    Ok(Json(SelectionsResponse {
        version: s.version,
        selections: s.selections.clone(),
    }))
}

// explanation

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExplainQuery {
    pub kind: Option<String>,
    pub mode: Option<ComparisonMode>,
    pub seed: Option<u64>,
    pub coalitions: Option<usize>,
    pub exact: Option<bool>,
    pub background: Option<usize>,
    pub max_rows: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExplainResponse {
    pub version: u64,
    pub mode: ComparisonMode,
    /// Names of selection A and, in pair mode, selection B.
    pub selections: Vec<String>,
    pub result: ExplanationResult,
}

fn parse_kind(kind: Option<&str>) -> ApiResult<FactorKind> {
    kind.unwrap_or("EF")
        .parse::<FactorKind>()
        .map_err(|e| ApiError::validation(e.to_string()))
}

struct Comparison {
    version: u64,
    dataset: Arc<Dataset>,
    tree: Arc<KnowledgeTree>,
    names: Vec<String>,
    a: Vec<usize>,
    b: Vec<usize>,
}

/// Selection A against selection B (pair) or against the remaining active
/// samples (rest); selections apply in the order they were made.
fn comparison(s: &Session, mode: ComparisonMode) -> ApiResult<Comparison> {
    let labels = s.labels()?;
    let first = s.selections.first().ok_or(CoreError::EmptySelection)?;
    let (names, b) = match mode {
        ComparisonMode::Rest => (vec![first.name.clone()], None),
        ComparisonMode::Pair => {
            let second = s
                .selections
                .get(1)
                .ok_or_else(|| CoreError::InvalidComparison("pair mode needs two selections".into()))?;
            (
                vec![first.name.clone(), second.name.clone()],
                Some(second.ids.as_slice()),
            )
        }
    };
    let (a, b) = resolve_comparison(&labels.active_samples(), &first.ids, b)?;
    Ok(Comparison {
        version: s.version,
        dataset: s.dataset.clone(),
        tree: s.tree.clone(),
        names,
        a,
        b,
    })
}

pub async fn get_explanation(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiQuery(q): ApiQuery<ExplainQuery>,
) -> ApiResult<Json<ExplainResponse>> {
    let kind = parse_kind(q.kind.as_deref())?;
    let mode = q.mode.unwrap_or(ComparisonMode::Rest);
    let defaults = ExplainConfig::default();
    let cfg = ExplainConfig {
        coalitions: q.coalitions,
        background_size: q.background.unwrap_or(defaults.background_size),
        max_rows: q.max_rows.unwrap_or(defaults.max_rows),
        exact: q.exact.unwrap_or(false),
        seed: q.seed.unwrap_or(0),
        ..defaults
    };
    let session = app.session(&id)?;
    let cmp = comparison(&lock(&session), mode)?;
    let result = blocking(move || {
        let (matrix, factors) = factor_matrix(&cmp.dataset, &cmp.tree, kind)?;
        let result = explain(matrix.view(), &factors, &cmp.a, &cmp.b, &cfg)?;
        Ok(ExplainResponse {
            version: cmp.version,
            mode,
            selections: cmp.names,
            result,
        })
    })
    .await?;
    Ok(Json(result))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramQuery {
    pub factor: String,
    pub bins: Option<usize>,
    pub kind: Option<String>,
    pub mode: Option<ComparisonMode>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HistogramResponse {
    pub version: u64,
    pub factor: String,
    pub kind: FactorKind,
    pub binary: bool,
    pub mode: ComparisonMode,
    pub selections: Vec<String>,
    pub histogram: Histogram,
    pub overlap: f64,
}

pub async fn get_histogram(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiQuery(q): ApiQuery<HistogramQuery>,
) -> ApiResult<Json<HistogramResponse>> {
    let kind = parse_kind(q.kind.as_deref())?;
    let mode = q.mode.unwrap_or(ComparisonMode::Rest);
    let bins = q.bins.unwrap_or(DEFAULT_BINS);
    if bins == 0 {
        return Err(ApiError::validation("bins must be positive"));
    }
    let session = app.session(&id)?;
    let cmp = comparison(&lock(&session), mode)?;
    blocking(move || {
        let (matrix, factors) = factor_matrix(&cmp.dataset, &cmp.tree, kind)?;
        let j = factors.position(&q.factor)?;
        let histogram = factor_histogram(matrix.view(), &factors, j, &cmp.a, &cmp.b, bins)?;
        Ok(Json(HistogramResponse {
            version: cmp.version,
            overlap: overlap_coefficient(&histogram),
            factor: q.factor,
            kind,
            binary: factors.factors[j].binary,
            mode,
            selections: cmp.names,
            histogram,
        }))
    })
    .await
}

// state

pub const VERSION_HEADER: &str = "x-session-version";

pub async fn get_state(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let session = app.session(&id)?;
    let s = lock(&session);
    let body = serde_json::to_vec(&s.state()).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok((
        [
            (header::CONTENT_TYPE, "application/json".to_owned()),
            (header::HeaderName::from_static(VERSION_HEADER), s.version.to_string()),
        ],
        body,
    )
        .into_response())
}

pub async fn put_state(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiQuery(q): ApiQuery<VersionQuery>,
    body: Bytes,
) -> ApiResult<Json<VersionBody>> {
    let state: SessionState = serde_json::from_slice(&body).map_err(|e| ApiError::validation(format!("state: {e}")))?;
    let session = app.session(&id)?;
    let mut s = lock(&session);
    s.ensure_idle()?;
    s.check_version(q.version)?;
    s.restore(state)?;
    Ok(Json(VersionBody { version: s.version }))
}
