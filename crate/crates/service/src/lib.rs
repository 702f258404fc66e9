//! HTTP API under `/api/v1`: dataset upload, asynchronous runs with polled
//! status, the coordinated view payloads, and LLM explanations.

mod api;
pub mod gemini;
pub mod store;

use std::collections::HashSet;
use std::sync::{Arc, Mutex};

use stpm_core::explain::TextProvider;

pub use api::{router, ApiError};
pub use store::Store;

pub struct AppState {
    pub store: Store,
    pub provider: Arc<dyn TextProvider>,
    explaining: Mutex<HashSet<String>>,
}

impl AppState {
    pub fn new(store: Store, provider: Arc<dyn TextProvider>) -> Arc<Self> {
        Arc::new(AppState {
            store,
            provider,
            explaining: Mutex::new(HashSet::new()),
        })
    }
}

/// Serves the API on `listener` until the process stops.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
