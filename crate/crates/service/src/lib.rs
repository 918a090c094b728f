//! HTTP JSON API over the analytics engine. Each session owns one dataset,
//! the analyst's knowledge tree, at most one training job, the trained
//! embeddings with their projections, and up to two lasso selections.
//!
//! Mutating requests accept an optional `version` token and fail with 409
//! when it is stale; every response reports the session's current version.

pub mod api;
pub mod config;
pub mod error;
pub mod session;

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use axum::extract::DefaultBodyLimit;
use axum::routing::{delete, get, post};
use axum::Router;
use uuid::Uuid;

pub use config::ServiceConfig;
pub use error::{ApiError, ApiResult};
use session::SharedSession;

#[derive(Clone)]
pub struct AppState {
    pub config: Arc<ServiceConfig>,
    sessions: Arc<RwLock<HashMap<Uuid, SharedSession>>>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            config: Arc::new(config),
            sessions: Arc::default(),
        }
    }

    pub fn session(&self, id: &str) -> ApiResult<SharedSession> {
        let not_found = || ApiError::not_found(format!("unknown session `{id}`"));
        let id = Uuid::parse_str(id).map_err(|_| not_found())?;
        let sessions = self.sessions.read().unwrap_or_else(|p| p.into_inner());
        sessions.get(&id).cloned().ok_or_else(not_found)
    }

    fn insert(&self, id: Uuid, session: SharedSession) -> ApiResult<()> {
        let mut sessions = self.sessions.write().unwrap_or_else(|p| p.into_inner());
        if sessions.len() >= self.config.max_sessions {
            return Err(ApiError::new(
                axum::http::StatusCode::SERVICE_UNAVAILABLE,
                format!("session limit of {} reached", self.config.max_sessions),
            ));
        }
        sessions.insert(id, session);
        Ok(())
    }

    fn remove(&self, id: &str) -> ApiResult<()> {
        let session = self.session(id)?;
        let id = session::lock(&session).id;
        self.sessions.write().unwrap_or_else(|p| p.into_inner()).remove(&id);
        Ok(())
    }
}

pub fn router(state: AppState) -> Router {
    let limit = state.config.body_limit;
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/sessions", post(api::create_session))
        .route("/sessions/{id}", get(api::get_session).delete(api::delete_session))
        .route("/sessions/{id}/attributes", get(api::get_attributes))
        .route("/sessions/{id}/tree", get(api::get_tree))
        .route("/sessions/{id}/tree/bins", get(api::get_bins))
        .route("/sessions/{id}/tree/create", post(api::tree_create))
        .route("/sessions/{id}/tree/refine", post(api::tree_refine))
        .route("/sessions/{id}/tree/delete", post(api::tree_delete))
        .route("/sessions/{id}/tree/suggest", post(api::tree_suggest))
        .route(
            "/sessions/{id}/train",
            post(api::start_training)
                .get(api::training_status)
                .delete(api::cancel_training),
        )
        .route("/sessions/{id}/projection", get(api::get_projection))
        .route(
            "/sessions/{id}/selections",
            post(api::add_selection)
                .get(api::list_selections)
                .delete(api::clear_selections),
        )
        .route("/sessions/{id}/selections/{name}", delete(api::delete_selection))
        .route("/sessions/{id}/explain", get(api::get_explanation))
        .route("/sessions/{id}/histogram", get(api::get_histogram))
        .route("/sessions/{id}/state", get(api::get_state).put(api::put_state))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}
