//! HTTP API over a loaded classifier, the word index, shopping lists and the
//! labeling queue.
//!
//! Readers take a snapshot `Arc` of the current model and never block on a
//! retrain; `/retrain` builds the next model off to the side and swaps it in
//! with a single write.

use std::collections::{BTreeMap, HashMap};
use std::io::Cursor;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use shelfscan::activelearn::{retrain, select_uncertain, LabelStatus, PoolItem};
use shelfscan::classify::evaluate;
use shelfscan::dataset::{decode_query_image, Catalog};
use shelfscan::pipeline::{training_features, Classifier};
use shelfscan::textmap::{query_word, RankedClass, WordClassIndex, WordMatch};

use crate::artifacts::{model_version, Layout};
use crate::config::Config;

const MAX_UPLOAD_BYTES: usize = 32 * 1024 * 1024;
const MAX_UPLOADS_IN_POOL: usize = 10_000;
const DEFAULT_BATCH: usize = 5;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, message)
    }

    fn unavailable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// A classifier and the version string every response echoes.
pub struct LoadedModel {
    pub classifier: Classifier,
    pub version: String,
}

impl LoadedModel {
    pub fn new(classifier: Classifier) -> Self {
        let version = model_version(&classifier);
        Self { classifier, version }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Resolution {
    Auto { class: usize, name: String },
    Chosen { class: usize, name: String },
    /// Waiting for the user to pick; candidates in server rank order.
    Pending { ranked: Vec<RankedClass> },
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ListEntry {
    pub text: String,
    pub resolution: Resolution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShoppingList {
    pub id: u64,
    pub entries: Vec<ListEntry>,
    pub created: u64,
    pub updated: u64,
}

#[derive(Default)]
struct Lists {
    next: u64,
    lists: BTreeMap<u64, ShoppingList>,
}

#[derive(Clone)]
enum Source {
    /// Index into the catalog's test images.
    Catalog(usize),
    Upload(Arc<image::GrayImage>),
}

#[derive(Clone)]
struct PoolEntry {
    name: String,
    source: Source,
    feature: Vec<f32>,
    /// Known class of catalog images; used only to report accuracy.
    truth: Option<usize>,
    status: LabelStatus,
}

#[derive(Default)]
struct LabelQueue {
    entries: Vec<PoolEntry>,
    uploads: usize,
}

type TrainingSet = Arc<(Vec<Vec<f32>>, Vec<usize>)>;

pub struct AppState {
    config: Config,
    layout: Layout,
    catalog: Option<Catalog>,
    model: RwLock<Option<Arc<LoadedModel>>>,
    index: Option<WordClassIndex>,
    lists: Mutex<Lists>,
    queue: Mutex<LabelQueue>,
    retraining: AtomicBool,
    base: Mutex<Option<TrainingSet>>,
    persist: bool,
}

/// Held while a retrain runs; dropping it reopens `/retrain`.
pub struct RetrainGuard<'a>(&'a AtomicBool);

impl Drop for RetrainGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl AppState {
    /// Seeds the label pool with the catalog's test images when both a
    /// catalog and a classifier are present.
    pub fn new(
        config: Config,
        catalog: Option<Catalog>,
        classifier: Option<Classifier>,
        index: Option<WordClassIndex>,
    ) -> anyhow::Result<Self> {
        let mut queue = LabelQueue::default();
        if let (Some(catalog), Some(classifier)) = (&catalog, &classifier) {
            use rayon::prelude::*;
            let tests = catalog.test_images();
            let features = (0..tests.len())
                .into_par_iter()
                .map(|i| Ok(classifier.features(&catalog.test_image(i)?, false)))
                .collect::<shelfscan::Result<Vec<_>>>()?;
            for (i, (t, feature)) in tests.iter().zip(features).enumerate() {
                queue.entries.push(PoolEntry {
                    name: t.image.clone(),
                    source: Source::Catalog(i),
                    feature,
                    truth: Some(t.class),
                    status: LabelStatus::Pending,
                });
            }
        }
        Ok(Self {
            layout: Layout::new(&config.artifacts),
            config,
            catalog,
            model: RwLock::new(classifier.map(|c| Arc::new(LoadedModel::new(c)))),
            index,
            lists: Mutex::new(Lists::default()),
            queue: Mutex::new(queue),
            retraining: AtomicBool::new(false),
            base: Mutex::new(None),
            persist: false,
        })
    }

    /// Loads whatever exists under the configured dataset and artifact
    /// directories; missing pieces turn the matching endpoints into 503s.
    pub fn load(config: Config) -> anyhow::Result<Self> {
        let layout = Layout::new(&config.artifacts);
        let catalog = match shelfscan::dataset::load_catalog(&config.dataset) {
            Ok(c) => Some(c),
            Err(e) => {
                log::warn!("no catalog at {}: {e}", config.dataset.display());
                None
            }
        };
        let classifier = match layout.load_classifier(config.variant) {
            Ok(c) => Some(c),
            Err(e) => {
                log::warn!("model not loaded: {e:#}");
                None
            }
        };
        let index = match WordClassIndex::load(&layout.index()) {
            Ok(i) => Some(i),
            Err(e) => {
                log::warn!("word index not loaded: {e}");
                None
            }
        };
        let mut state = Self::new(config, catalog, classifier, index)?;
        state.persist = true;
        Ok(state)
    }

    pub fn current_model(&self) -> Option<Arc<LoadedModel>> {
        self.model.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn require_model(&self) -> ApiResult<Arc<LoadedModel>> {
        self.current_model()
            .ok_or_else(|| ApiError::unavailable("model not loaded"))
    }

    fn require_index(&self) -> ApiResult<&WordClassIndex> {
        self.index
            .as_ref()
            .ok_or_else(|| ApiError::unavailable("word index not loaded"))
    }

    /// Claims the retrain slot, or `None` when a retrain is running.
    pub fn try_begin_retrain(&self) -> Option<RetrainGuard<'_>> {
        self.retraining
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .ok()
            .map(|_| RetrainGuard(&self.retraining))
    }

    fn resolve(&self, index: &WordClassIndex, text: &str) -> Resolution {
        match query_word(index, text) {
            WordMatch::AutoMapped { class, name } => Resolution::Auto { class, name },
            WordMatch::Ranked(ranked) => Resolution::Pending { ranked },
            WordMatch::Unknown => Resolution::Unknown,
        }
    }

    fn training_set(&self, loaded: &LoadedModel) -> ApiResult<TrainingSet> {
        if let Some(base) = lock(&self.base).clone() {
            return Ok(base);
        }
        let catalog = self
            .catalog
            .as_ref()
            .ok_or_else(|| ApiError::unavailable("no catalog loaded to retrain from"))?;
        let set = training_features(catalog, &loaded.classifier, true)
            .map_err(|e| ApiError::internal(format!("encoding training images: {e}")))?;
        let set = Arc::new(set);
        *lock(&self.base) = Some(set.clone());
        Ok(set)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/status", get(status))
        .route("/classify", post(classify))
        .route("/words/{token}", get(words))
        .route("/shopping-list", post(create_list))
        .route("/shopping-list/{id}", get(get_list))
        .route("/shopping-list/{id}/entries", post(add_entry))
        .route("/shopping-list/{id}/entries/{n}", patch(choose_entry))
        .route("/label-queue", get(label_queue))
        .route("/label-queue/{id}", post(submit_label))
        .route("/label-queue/{id}/image", get(label_image))
        .route("/retrain", post(retrain_model))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, bind: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}

async fn status(State(state): State<Arc<AppState>>) -> Json<Value> {
    let model = state.current_model();
    let queue = lock(&state.queue);
    let labeled = queue
        .entries
        .iter()
        .filter(|e| matches!(e.status, LabelStatus::Labeled(_)))
        .count();
    Json(json!({
        "model_version": model.as_ref().map(|m| m.version.clone()),
        "variant": model.as_ref().map(|m| m.classifier.variant()),
        "classes": model.as_ref().map(|m| m.classifier.classes().to_vec()),
        "tau": state.config.tau,
        "index_loaded": state.index.is_some(),
        "catalog_loaded": state.catalog.is_some(),
        "pool": queue.entries.len(),
        "labeled": labeled,
        "retraining": state.retraining.load(Ordering::Acquire),
    }))
}

fn blocking_error(e: tokio::task::JoinError) -> ApiError {
    ApiError::internal(format!("worker failed: {e}"))
}

async fn classify(State(state): State<Arc<AppState>>, mut multipart: Multipart) -> ApiResult<Json<Value>> {
    let mut bytes = None;
    let mut tau = state.config.tau;
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request(format!("malformed multipart body: {e}")))?
    {
        match field.name() {
            Some("image") => {
                let data = field
                    .bytes()
                    .await
                    .map_err(|e| ApiError::bad_request(format!("reading image: {e}")))?;
                bytes = Some(data);
            }
            Some("tau") => {
                let text = field
                    .text()
                    .await
                    .map_err(|e| ApiError::bad_request(format!("reading tau: {e}")))?;
                tau = text
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|t| t.is_finite())
                    .ok_or_else(|| ApiError::bad_request(format!("tau `{text}` is not a finite number")))?;
            }
            _ => {}
        }
    }
    let bytes = bytes.ok_or_else(|| ApiError::bad_request("missing multipart field `image`"))?;
    let loaded = state.require_model()?;
    let job = loaded.clone();
    let (image, features, prediction) = tokio::task::spawn_blocking(move || {
        let image = decode_query_image(&bytes).map_err(|e| ApiError::bad_request(e.to_string()))?;
        let features = job.classifier.features(&image, true);
        let prediction = job
            .classifier
            .classify_features(&features)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        Ok::<_, ApiError>((image, features, prediction))
    })
    .await
    .map_err(blocking_error)??;

    let label_id = {
        let mut queue = lock(&state.queue);
        if queue.uploads < MAX_UPLOADS_IN_POOL {
            queue.uploads += 1;
            let id = queue.entries.len();
            let name = format!("upload-{}", queue.uploads);
            queue.entries.push(PoolEntry {
                name,
                source: Source::Upload(Arc::new(image.to_luma8())),
                feature: features,
                truth: None,
                status: LabelStatus::Pending,
            });
            Some(id)
        } else {
            None
        }
    };
    let name = loaded.classifier.classes()[prediction.class].clone();
    Ok(Json(json!({
        "class": name,
        "class_index": prediction.class,
        "score": prediction.score,
        "notified": prediction.score > tau,
        "tau": tau,
        "model_version": loaded.version,
        "label_id": label_id,
    })))
}

async fn words(State(state): State<Arc<AppState>>, Path(token): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(word_match_json(state.require_index()?, &token)))
}

/// `{"auto": name}`, `{"ranked": [...]}` or `{"unknown": token}`.
pub fn word_match_json(index: &WordClassIndex, token: &str) -> Value {
    match query_word(index, token) {
        WordMatch::AutoMapped { name, .. } => json!({ "auto": name }),
        WordMatch::Ranked(ranked) => json!({ "ranked": ranked }),
        WordMatch::Unknown => json!({ "unknown": token }),
    }
}

#[derive(Deserialize)]
struct NewList {
    #[serde(default)]
    entries: Vec<String>,
}

#[derive(Deserialize)]
struct NewEntry {
    text: String,
}

/// A class given by name or by index.
#[derive(Deserialize)]
#[serde(untagged)]
enum ClassRef {
    Index(usize),
    Name(String),
}

fn class_of(classes: &[String], class: &ClassRef) -> ApiResult<usize> {
    match class {
        ClassRef::Index(i) if *i < classes.len() => Ok(*i),
        ClassRef::Index(i) => Err(ApiError::bad_request(format!("class index {i} out of range"))),
        ClassRef::Name(n) => classes
            .iter()
            .position(|c| c == n)
            .ok_or_else(|| ApiError::bad_request(format!("unknown class `{n}`"))),
    }
}

#[derive(Deserialize)]
struct Choice {
    class: ClassRef,
}

fn parse_id(raw: &str, what: &str) -> ApiResult<u64> {
    raw.parse::<u64>()
        .map_err(|_| ApiError::not_found(format!("unknown {what} `{raw}`")))
}

fn json_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed JSON body: {e}")))
}

async fn create_list(State(state): State<Arc<AppState>>, body: axum::body::Bytes) -> ApiResult<Response> {
    let request: NewList = if body.is_empty() { NewList { entries: Vec::new() } } else { json_body(&body)? };
    let index = state.require_index()?;
    let entries = request
        .entries
        .into_iter()
        .map(|text| ListEntry {
            resolution: state.resolve(index, &text),
            text,
        })
        .collect();
    let mut lists = lock(&state.lists);
    let id = lists.next;
    lists.next += 1;
    let t = now();
    let list = ShoppingList {
        id,
        entries,
        created: t,
        updated: t,
    };
    lists.lists.insert(id, list.clone());
    Ok((StatusCode::CREATED, Json(list)).into_response())
}

async fn get_list(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<ShoppingList>> {
    let id = parse_id(&id, "shopping list")?;
    lock(&state.lists)
        .lists
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("unknown shopping list `{id}`")))
}

async fn add_entry(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: axum::body::Bytes,
) -> ApiResult<Json<ShoppingList>> {
    let id = parse_id(&id, "shopping list")?;
    let request: NewEntry = json_body(&body)?;
    let index = state.require_index()?;
    let mut lists = lock(&state.lists);
    let list = lists
        .lists
        .get_mut(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown shopping list `{id}`")))?;
    list.entries.push(ListEntry {
        resolution: state.resolve(index, &request.text),
        text: request.text,
    });
    list.updated = now();
    Ok(Json(list.clone()))
}

async fn choose_entry(
    State(state): State<Arc<AppState>>,
    Path((id, n)): Path<(String, String)>,
    body: axum::body::Bytes,
) -> ApiResult<Json<ShoppingList>> {
    let id = parse_id(&id, "shopping list")?;
    let n = parse_id(&n, "entry")? as usize;
    let choice: Choice = json_body(&body)?;
    let index = state.require_index()?;
    let class = class_of(index.classes(), &choice.class)?;
    let mut lists = lock(&state.lists);
    let list = lists
        .lists
        .get_mut(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown shopping list `{id}`")))?;
    let entry = list
        .entries
        .get_mut(n)
        .ok_or_else(|| ApiError::not_found(format!("shopping list {id} has no entry {n}")))?;
    entry.resolution = Resolution::Chosen {
        class,
        name: index.classes()[class].clone(),
    };
    list.updated = now();
    Ok(Json(list.clone()))
}

#[derive(Serialize)]
struct QueueCard {
    id: usize,
    image: String,
    predicted: usize,
    predicted_name: String,
    confidence: f64,
    status: LabelStatus,
}

async fn label_queue(
    State(state): State<Arc<AppState>>,
    Query(params): Query<HashMap<String, String>>,
) -> ApiResult<Json<Value>> {
    let k = match params.get("k") {
        Some(raw) => raw
            .parse::<usize>()
            .ok()
            .filter(|&k| k > 0)
            .ok_or_else(|| ApiError::bad_request(format!("k `{raw}` must be a positive integer")))?,
        None => DEFAULT_BATCH,
    };
    let loaded = state.require_model()?;
    let model = loaded.classifier.model().ok_or_else(|| {
        ApiError::bad_request(format!("{} has no decision model to query", loaded.classifier.variant()))
    })?;
    let pending: Vec<PoolItem> = {
        let queue = lock(&state.queue);
        queue
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.status == LabelStatus::Pending)
            .map(|(id, e)| PoolItem {
                // Zero-padded so ties fall back to queue order.
                image: format!("{id:012}"),
                feature: e.feature.clone(),
            })
            .collect()
    };
    let mut cards = Vec::new();
    if !pending.is_empty() {
        let take = k.min(pending.len());
        let queries = select_uncertain(model, &pending, take, state.config.confidence)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        let queue = lock(&state.queue);
        for q in queries {
            let id: usize = q.image.parse().map_err(|_| ApiError::internal("bad pool id"))?;
            cards.push(QueueCard {
                id,
                image: queue.entries[id].name.clone(),
                predicted: q.predicted,
                predicted_name: loaded.classifier.classes()[q.predicted].clone(),
                confidence: q.confidence,
                status: queue.entries[id].status,
            });
        }
    }
    Ok(Json(json!({ "model_version": loaded.version, "queries": cards })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelSubmission {
    #[serde(default)]
    label: Option<ClassRef>,
    #[serde(default)]
    skip: bool,
}

async fn submit_label(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: axum::body::Bytes,
) -> ApiResult<Json<Value>> {
    let id = parse_id(&id, "label query")? as usize;
    let submission: LabelSubmission = json_body(&body)?;
    let loaded = state.require_model()?;
    let next = match (&submission.label, submission.skip) {
        (Some(class), false) => LabelStatus::Labeled(class_of(loaded.classifier.classes(), class)?),
        (None, true) => LabelStatus::Skipped,
        _ => return Err(ApiError::bad_request("give exactly one of `label` or `skip: true`")),
    };
    let mut queue = lock(&state.queue);
    let entry = queue
        .entries
        .get_mut(id)
        .ok_or_else(|| ApiError::not_found(format!("unknown label query `{id}`")))?;
    match entry.status {
        LabelStatus::Pending => entry.status = next,
        current if current == next => {}
        current => {
            return Err(ApiError::conflict(format!(
                "query {id} is already {}",
                serde_json::to_string(&current).unwrap_or_default()
            )))
        }
    }
    Ok(Json(json!({ "id": id, "status": entry.status })))
}

async fn label_image(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let id = parse_id(&id, "label query")? as usize;
    let source = lock(&state.queue)
        .entries
        .get(id)
        .map(|e| e.source.clone())
        .ok_or_else(|| ApiError::not_found(format!("unknown label query `{id}`")))?;
    let image = match source {
        Source::Upload(img) => img,
        Source::Catalog(i) => {
            let catalog = state
                .catalog
                .as_ref()
                .ok_or_else(|| ApiError::unavailable("catalog not loaded"))?;
            let img = catalog
                .test_image(i)
                .map_err(|e| ApiError::internal(e.to_string()))?;
            Arc::new(img.to_luma8())
        }
    };
    let mut png = Vec::new();
    image
        .write_to(&mut Cursor::new(&mut png), image::ImageFormat::Png)
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn retrain_model(State(state): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    let guard = state
        .try_begin_retrain()
        .ok_or_else(|| ApiError::conflict("a retrain is already in progress"))?;
    let previous = state.require_model()?;
    if previous.classifier.model().is_none() {
        return Err(ApiError::bad_request(format!(
            "{} has no decision model to retrain",
            previous.classifier.variant()
        )));
    }
    let (features, labels, holdout) = {
        let queue = lock(&state.queue);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut holdout = Vec::new();
        for e in &queue.entries {
            match (e.status, e.truth) {
                (LabelStatus::Labeled(c), _) => {
                    features.push(e.feature.clone());
                    labels.push(c);
                }
                (LabelStatus::Pending, Some(t)) => holdout.push((e.feature.clone(), t)),
                _ => {}
            }
        }
        (features, labels, holdout)
    };
    let labels_used = labels.len();
    let worker_state = state.clone();
    let prev = previous.clone();
    let next = tokio::task::spawn_blocking(move || {
        let base = worker_state.training_set(&prev)?;
        let current = prev.classifier.model().expect("checked above");
        let model = retrain(current, (&base.0, &base.1), (&features, &labels))
            .map_err(|e| ApiError::internal(format!("retraining: {e}")))?;
        let classifier = prev
            .classifier
            .with_model(model)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        Ok::<_, ApiError>(LoadedModel::new(classifier))
    })
    .await
    .map_err(blocking_error)??;

    let accuracy = if holdout.is_empty() {
        None
    } else {
        let predicted = holdout
            .iter()
            .map(|(f, _)| next.classifier.classify_features(f).map(|p| p.class))
            .collect::<shelfscan::Result<Vec<_>>>()
            .map_err(|e| ApiError::internal(e.to_string()))?;
        let truth: Vec<usize> = holdout.iter().map(|(_, t)| *t).collect();
        Some(
            evaluate(&predicted, &truth, next.classifier.classes())
                .map_err(|e| ApiError::internal(e.to_string()))?
                .accuracy,
        )
    };
    let next = Arc::new(next);
    *state.model.write().unwrap_or_else(|e| e.into_inner()) = Some(next.clone());
    drop(guard);
    if state.persist {
        if let Err(e) = state.layout.save_classifier(&next.classifier) {
            log::warn!("retrained model not saved: {e:#}");
        }
    }
    log::info!("retrained {} -> {}", previous.version, next.version);
    Ok(Json(json!({
        "version": next.version,
        "previous_version": previous.version,
        "labels_used": labels_used,
        "accuracy": accuracy,
        "evaluated_on": holdout.len(),
    })))
}
