//! Per-session state. Handlers hold the session lock only for bookkeeping;
//! training, projection and explanation run on blocking threads against
//! cloned snapshots.

use std::collections::HashMap;
use std::sync::atomic::AtomicBool;
use std::sync::{Arc, Mutex, MutexGuard};

use knowlens_core::dataset::{Dataset, FeatureMatrix};
use knowlens_core::embednet::{EmbeddingModel, Hyperparams, LossReport};
use knowlens_core::knowledge::{KnowledgeTree, LabelAssignment};
use knowlens_core::projection::{Projection, ProjectionMethod};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::error::{ApiError, ApiResult};

pub const MAX_SELECTIONS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProjectionKey {
    pub method: ProjectionMethod,
    pub seed: u64,
    pub neighbors: usize,
    pub iterations: usize,
}

/// A layout of the active samples; `ids[r]` is the sample behind row `r`.
#[derive(Debug, Clone)]
pub struct ProjectionEntry {
    pub key: ProjectionKey,
    pub ids: Vec<usize>,
    pub projection: Projection,
    pub viewport: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Selection {
    pub name: String,
    /// Lasso polygon in viewport coordinates.
    pub polygon: Vec<[f64; 2]>,
    pub projection: ProjectionKey,
    /// Selected sample indices, ascending.
    pub ids: Vec<usize>,
}

/// What GET/PUT `/state` exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SessionState {
    pub tree: KnowledgeTree,
    pub hyperparams: Hyperparams,
    pub warm_start: bool,
    pub selections: Vec<Selection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Idle,
    Running,
    Failed,
}

#[derive(Debug, Clone)]
pub struct Job {
    pub status: JobStatus,
    /// Incremented per started job; stale workers compare against it.
    pub generation: u64,
    pub epochs: usize,
    pub history: Vec<LossReport>,
    pub error: Option<String>,
    pub cancelled: bool,
    pub cancel: Arc<AtomicBool>,
}

impl Default for Job {
    fn default() -> Self {
        Self {
            status: JobStatus::Idle,
            generation: 0,
            epochs: 0,
            history: Vec::new(),
            error: None,
            cancelled: false,
            cancel: Arc::new(AtomicBool::new(false)),
        }
    }
}

pub struct Session {
    pub id: Uuid,
    pub dataset: Arc<Dataset>,
    pub features: Arc<FeatureMatrix>,
    /// Bumped by every mutation and by job completion.
    pub version: u64,
    pub tree: Arc<KnowledgeTree>,
    pub tree_version: u64,
    pub hp: Hyperparams,
    pub warm_start: bool,
    pub model: Option<Arc<EmbeddingModel>>,
    /// Labels the current model was trained with.
    pub model_labels: Option<Arc<LabelAssignment>>,
    pub projections: HashMap<ProjectionKey, Arc<ProjectionEntry>>,
    pub selections: Vec<Selection>,
    pub job: Job,
}

pub type SharedSession = Arc<Mutex<Session>>;

pub fn lock(session: &SharedSession) -> MutexGuard<'_, Session> {
    session.lock().unwrap_or_else(|p| p.into_inner())
}

impl Session {
    pub fn new(dataset: Dataset, features: FeatureMatrix, mut hp: Hyperparams) -> Self {
        hp.batch_size = hp.batch_size.min(dataset.n()).max(1);
        Self {
            id: Uuid::new_v4(),
            dataset: Arc::new(dataset),
            features: Arc::new(features),
            version: 1,
            tree: Arc::new(KnowledgeTree::new()),
            tree_version: 1,
            hp,
            warm_start: false,
            model: None,
            model_labels: None,
            projections: HashMap::new(),
            selections: Vec::new(),
            job: Job::default(),
        }
    }

    pub fn check_version(&self, expected: Option<u64>) -> ApiResult<()> {
        match expected {
            Some(v) if v != self.version => Err(ApiError::conflict(format!(
                "stale version {v}, current is {}",
                self.version
            ))),
            _ => Ok(()),
        }
    }

    pub fn ensure_idle(&self) -> ApiResult<()> {
        if self.job.status == JobStatus::Running {
            return Err(ApiError::conflict("a training job is running"));
        }
        Ok(())
    }

    pub fn labels(&self) -> ApiResult<LabelAssignment> {
        Ok(self.tree.derive_labels(&self.dataset)?)
    }

    pub fn model(&self) -> ApiResult<(Arc<EmbeddingModel>, Arc<LabelAssignment>)> {
        match (&self.model, &self.model_labels) {
            (Some(m), Some(l)) => Ok((m.clone(), l.clone())),
            _ => Err(ApiError::conflict("no trained model; start a training job first")),
        }
    }

    /// Replaces the tree and drops everything derived from the old one.
    pub fn set_tree(&mut self, tree: KnowledgeTree) {
        self.tree = Arc::new(tree);
        self.tree_version += 1;
        self.drop_model();
        self.selections.clear();
        self.version += 1;
    }

    pub fn drop_model(&mut self) {
        self.model = None;
        self.model_labels = None;
        self.projections.clear();
    }

    pub fn state(&self) -> SessionState {
        SessionState {
            tree: (*self.tree).clone(),
            hyperparams: self.hp,
            warm_start: self.warm_start,
            selections: self.selections.clone(),
        }
    }

    /// Installs a saved state after validating it against the dataset.
    pub fn restore(&mut self, state: SessionState) -> ApiResult<()> {
        state
            .tree
            .check_invariants(&self.dataset)
            .map_err(|e| ApiError::validation(format!("invalid tree: {e}")))?;
        state.hyperparams.validate()?;
        let labels = state.tree.derive_labels(&self.dataset).ok();
        validate_selections(&state.selections, labels.as_ref())?;
        if *self.tree != state.tree {
            self.tree = Arc::new(state.tree);
            self.tree_version += 1;
            self.drop_model();
        }
        self.hp = state.hyperparams;
        self.warm_start = state.warm_start;
        self.selections = state.selections;
        self.version += 1;
        Ok(())
    }
}

fn validate_selections(selections: &[Selection], labels: Option<&LabelAssignment>) -> ApiResult<()> {
    if selections.len() > MAX_SELECTIONS {
        return Err(ApiError::validation(format!("at most {MAX_SELECTIONS} selections")));
    }
    for (i, s) in selections.iter().enumerate() {
        if selections[..i].iter().any(|o| o.name == s.name) {
            return Err(ApiError::validation(format!("duplicate selection `{}`", s.name)));
        }
        if s.ids.is_empty() || s.ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ApiError::validation(format!(
                "selection `{}` must list distinct ascending ids",
                s.name
            )));
        }
        let active = |id: usize| labels.is_some_and(|l| l.labels.get(id).is_some_and(Option::is_some));
        if let Some(&bad) = s.ids.iter().find(|&&id| !active(id)) {
            return Err(ApiError::validation(format!(
                "selection `{}` contains inactive sample {bad}",
                s.name
            )));
        }
    }
    Ok(())
}
