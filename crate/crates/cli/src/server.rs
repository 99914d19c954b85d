//! HTTP/JSON inspection and intervention API.
//!
//! Readers clone the current snapshot and never block each other. Weight
//! interventions and reverts take a single writer lock, compute the new
//! model outside the snapshot lock, then swap it in atomically. Every
//! response names the checkpoint it was computed against, both in the body
//! and in the `x-checkpoint-hash` header.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gcbm::artifact::{write_json, InterventionTranscript};
use gcbm::interpret::{export_weight_flows, map_concept_to_nodes, SankeyClass, SankeyExport};
use gcbm::intervene::{edit_concept_vector, preview_plan, InterventionPlan, PlanPreview};
use gcbm::metrics::FoldMetrics;
use gcbm::net::Prediction;
use gcbm::pipeline::{minority_class, score_predictions};
use gcbm::universe::ConceptRef;
use gcbm::{Error, Graph};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::args::{ServeArgs, SplitChoice};
use crate::commands::intervene_workspace;
use crate::workspace::Workspace;

pub const HASH_HEADER: &str = "x-checkpoint-hash";

pub struct AppState {
    current: RwLock<Arc<Workspace>>,
    /// Snapshots replaced by interventions, most recent last.
    history: Mutex<Vec<Arc<Workspace>>>,
    writer: tokio::sync::Mutex<()>,
    transcripts: Mutex<Vec<InterventionTranscript>>,
    out: Option<PathBuf>,
}

impl AppState {
    pub fn new(workspace: Workspace, out: Option<PathBuf>) -> Arc<Self> {
        Arc::new(AppState {
            current: RwLock::new(Arc::new(workspace)),
            history: Mutex::new(Vec::new()),
            writer: tokio::sync::Mutex::new(()),
            transcripts: Mutex::new(Vec::new()),
            out,
        })
    }

    pub fn snapshot(&self) -> Arc<Workspace> {
        self.current.read().expect("snapshot lock poisoned").clone()
    }

    pub fn transcripts(&self) -> Vec<InterventionTranscript> {
        self.transcripts
            .lock()
            .expect("transcript lock poisoned")
            .clone()
    }

    fn swap(&self, next: Arc<Workspace>) -> Arc<Workspace> {
        let mut current = self.current.write().expect("snapshot lock poisoned");
        std::mem::replace(&mut *current, next)
    }

    /// Writes the current checkpoint and the transcript log when an output
    /// directory is configured.
    fn persist(&self, ws: &Workspace) -> gcbm::Result<()> {
        let Some(out) = &self.out else {
            return Ok(());
        };
        write_json(&out.join("checkpoint.json"), &ws.checkpoint)?;
        write_json(&out.join("concepts.json"), ws.concept_artifact.as_ref())?;
        write_json(&out.join("transcripts.json"), &self.transcripts())?;
        Ok(())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/meta", get(meta))
        .route("/api/graphs", get(list_graphs))
        .route("/api/graphs/{id}", get(graph_detail))
        .route("/api/concepts", get(concepts))
        .route("/api/weights", get(weights))
        .route("/api/predict", post(predict))
        .route("/api/intervene/concepts", post(intervene_concepts))
        .route("/api/intervene/weights", post(intervene_weights))
        .route("/api/revert", post(revert))
        .route("/api/metrics", get(metrics))
        .fallback(|| async {
            ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
        })
        .with_state(state)
}

pub async fn serve(args: &ServeArgs) -> anyhow::Result<()> {
    let ws = Workspace::load(&args.source)?;
    log::info!("serving checkpoint {}", ws.checkpoint_hash);
    let state = AppState::new(ws, args.out.clone());
    let addr: SocketAddr = format!("{}:{}", args.host, args.port).parse()?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| anyhow::anyhow!("cannot bind {addr}: {e}"))?;
    println!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub fields: Vec<FieldError>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
    hash: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                fields: Vec::new(),
            },
            hash: None,
        }
    }

    fn field(mut self, field: &str, message: impl Into<String>) -> Self {
        self.body.fields.push(FieldError {
            field: field.into(),
            message: message.into(),
        });
        self
    }

    fn hash(mut self, hash: &str) -> Self {
        self.hash = Some(hash.to_string());
        self
    }

    fn from_engine(err: Error, field: &str) -> Self {
        let message = err.to_string();
        match err {
            Error::EmptyTargetSet => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "empty_target_set",
                message,
            ),
            Error::NearZeroActivation { .. } => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "near_zero_activation",
                message,
            ),
            Error::ConceptIndex { .. } => {
                ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", message.clone())
                    .field(field, message)
            }
            e if crate::is_input_error(&e) => {
                ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", message.clone())
                    .field(field, message)
            }
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut response = (self.status, Json(self.body)).into_response();
        if let Some(value) = self.hash.and_then(|h| HeaderValue::from_str(&h).ok()) {
            response.headers_mut().insert(HASH_HEADER, value);
        }
        response
    }
}

type ApiResult<B> = Result<Tagged<B>, ApiError>;

/// A response body tagged with the checkpoint it was computed against.
#[derive(Debug, Serialize)]
pub struct Tagged<B> {
    pub checkpoint_hash: String,
    #[serde(flatten)]
    pub body: B,
}

fn tagged<B>(ws: &Workspace, body: B) -> ApiResult<B> {
    Ok(Tagged {
        checkpoint_hash: ws.checkpoint_hash.clone(),
        body,
    })
}

impl<B: Serialize> IntoResponse for Tagged<B> {
    fn into_response(self) -> Response {
        let hash = HeaderValue::from_str(&self.checkpoint_hash).ok();
        let mut response = Json(self).into_response();
        if let Some(value) = hash {
            response.headers_mut().insert(HASH_HEADER, value);
        }
        response
    }
}

/// Parses a JSON body, reporting the path of the offending field.
fn parse_body<B: DeserializeOwned>(bytes: &Bytes, hash: &str) -> Result<B, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().to_string();
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "malformed_body",
            format!("invalid request body: {message}"),
        )
        .field(if path == "." { "body" } else { &path }, message)
        .hash(hash)
    })
}

fn graph_or_404(ws: &Workspace, id: usize) -> Result<&Graph, ApiError> {
    ws.dataset.graphs.get(id).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_graph",
            format!("no graph with id {id}"),
        )
        .hash(&ws.checkpoint_hash)
    })
}

#[derive(Debug, Serialize)]
struct Meta {
    dataset: gcbm::artifact::DatasetRef,
    fold: Option<usize>,
    num_classes: usize,
    level_widths: Vec<usize>,
    bottleneck_width: usize,
    train_graphs: usize,
    test_graphs: usize,
    revertible: usize,
    config: gcbm::config::RunConfig,
}

async fn meta(State(state): State<Arc<AppState>>) -> ApiResult<Meta> {
    let ws = state.snapshot();
    let shape = &ws.checkpoint.model.shape;
    let revertible = state.history.lock().expect("history lock poisoned").len();
    tagged(
        &ws,
        Meta {
            dataset: ws.checkpoint.dataset.clone(),
            fold: ws.checkpoint.fold,
            num_classes: shape.num_classes,
            level_widths: shape.level_widths.clone(),
            bottleneck_width: shape.bottleneck_width(),
            train_graphs: ws.checkpoint.train_ids.len(),
            test_graphs: ws.checkpoint.test_ids.len(),
            revertible,
            config: ws.checkpoint.config.clone(),
        },
    )
}

#[derive(Debug, Serialize)]
struct GraphSummary {
    id: usize,
    num_nodes: usize,
    num_edges: usize,
    label: usize,
    predicted: usize,
    split: Option<&'static str>,
}

#[derive(Debug, Serialize)]
struct GraphList {
    graphs: Vec<GraphSummary>,
}

async fn list_graphs(State(state): State<Arc<AppState>>) -> ApiResult<GraphList> {
    let ws = state.snapshot();
    let refs: Vec<&Graph> = ws.dataset.graphs.iter().collect();
    let predictions = ws.checkpoint.model.predict_many(&refs);
    let graphs = refs
        .iter()
        .zip(&predictions)
        .enumerate()
        .map(|(i, (g, p))| GraphSummary {
            id: i,
            num_nodes: g.num_nodes(),
            num_edges: g.edges().len(),
            label: ws.dataset.class_labels[i],
            predicted: p.class,
            split: ws.split_of(i),
        })
        .collect();
    tagged(&ws, GraphList { graphs })
}

#[derive(Debug, Deserialize)]
struct GraphQuery {
    concept: Option<usize>,
}

#[derive(Debug, Serialize)]
struct Highlight {
    concept: ConceptRef,
    nodes: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct GraphDetail {
    id: usize,
    graph: Graph,
    label: usize,
    split: Option<&'static str>,
    /// Ground-truth concept labels, concatenated over levels.
    concept_labels: Vec<f64>,
    prediction: Prediction<f64>,
    highlight: Option<Highlight>,
}

async fn graph_detail(
    State(state): State<Arc<AppState>>,
    Path(id): Path<usize>,
    Query(query): Query<GraphQuery>,
) -> ApiResult<GraphDetail> {
    let ws = state.snapshot();
    let graph = graph_or_404(&ws, id)?;
    let highlight = match query.concept {
        None => None,
        Some(j) => {
            let concept = ws.concepts.universe.concept(j).ok_or_else(|| {
                ApiError::from_engine(
                    Error::ConceptIndex {
                        index: j,
                        width: ws.concepts.universe.total_width(),
                    },
                    "concept",
                )
                .hash(&ws.checkpoint_hash)
            })?;
            let code = gcbm::wl::WlCode {
                code: concept.code.clone(),
                height: concept.level,
            };
            let nodes = map_concept_to_nodes(graph, &ws.codes[id], &code)
                .into_iter()
                .collect();
            Some(Highlight { concept, nodes })
        }
    };
    tagged(
        &ws,
        GraphDetail {
            id,
            graph: graph.clone(),
            label: ws.dataset.class_labels[id],
            split: ws.split_of(id),
            concept_labels: ws.labels[id].clone(),
            prediction: ws.checkpoint.model.predict(graph),
            highlight,
        },
    )
}

#[derive(Debug, Serialize)]
struct ConceptEntry {
    #[serde(flatten)]
    concept: ConceptRef,
    gain: f64,
}

#[derive(Debug, Serialize)]
struct ConceptList {
    concepts: Vec<ConceptEntry>,
}

async fn concepts(State(state): State<Arc<AppState>>) -> ApiResult<ConceptList> {
    let ws = state.snapshot();
    let gains: Vec<f64> = ws
        .concepts
        .universe
        .levels
        .iter()
        .flat_map(|l| l.selected.gains.iter().copied())
        .collect();
    let concepts = ws
        .concepts
        .universe
        .concepts()
        .into_iter()
        .zip(gains)
        .map(|(concept, gain)| ConceptEntry { concept, gain })
        .collect();
    tagged(&ws, ConceptList { concepts })
}

#[derive(Debug, Deserialize)]
struct WeightsQuery {
    top_t: Option<usize>,
}

#[derive(Debug, Serialize)]
struct Weights {
    top_t: usize,
    classes: Vec<SankeyClass>,
}

async fn weights(
    State(state): State<Arc<AppState>>,
    Query(query): Query<WeightsQuery>,
) -> ApiResult<Weights> {
    let ws = state.snapshot();
    let top_t = query.top_t.unwrap_or(8);
    let flows = export_weight_flows(&ws.checkpoint.model, &ws.concepts.universe, top_t)
        .map_err(|e| ApiError::from_engine(e, "top_t").hash(&ws.checkpoint_hash))?;
    let SankeyExport { classes } = SankeyExport::from(flows.as_slice());
    tagged(&ws, Weights { top_t, classes })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictRequest {
    graph_id: Option<usize>,
    graph: Option<Graph>,
}

#[derive(Debug, Serialize)]
struct PredictResponse {
    graph_id: Option<usize>,
    prediction: Prediction<f64>,
}

async fn predict(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<PredictResponse> {
    let ws = state.snapshot();
    let req: PredictRequest = parse_body(&body, &ws.checkpoint_hash)?;
    let prediction = match (req.graph_id, &req.graph) {
        (Some(id), None) => ws.checkpoint.model.predict(graph_or_404(&ws, id)?),
        (None, Some(g)) => ws.checkpoint.model.predict(g),
        _ => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "malformed_body",
                "give exactly one of graph_id and graph",
            )
            .field("graph_id", "exactly one of graph_id and graph is required")
            .hash(&ws.checkpoint_hash))
        }
    };
    tagged(
        &ws,
        PredictResponse {
            graph_id: req.graph_id,
            prediction,
        },
    )
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptEdit {
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConceptEditRequest {
    graph_id: usize,
    edits: Vec<ConceptEdit>,
}

#[derive(Debug, Serialize)]
struct ConceptEditResponse {
    graph_id: usize,
    original: Prediction<f64>,
    edited: Prediction<f64>,
}

async fn intervene_concepts(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> ApiResult<ConceptEditResponse> {
    let ws = state.snapshot();
    let req: ConceptEditRequest = parse_body(&body, &ws.checkpoint_hash)?;
    let graph = graph_or_404(&ws, req.graph_id)?;
    let edits: Vec<(usize, f64)> = req.edits.iter().map(|e| (e.index, e.value)).collect();
    let result = edit_concept_vector(&ws.checkpoint.model, graph, &edits)
        .map_err(|e| ApiError::from_engine(e, "edits").hash(&ws.checkpoint_hash))?;
    tagged(
        &ws,
        ConceptEditResponse {
            graph_id: req.graph_id,
            original: result.original,
            edited: result.edited,
        },
    )
}

fn default_split() -> SplitChoice {
    SplitChoice::Test
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightPlanRequest {
    plan: InterventionPlan,
    #[serde(default = "default_split", deserialize_with = "split_from_str")]
    split: SplitChoice,
    #[serde(default)]
    preview_only: bool,
    /// Refuse unless this is still the current checkpoint.
    expected_hash: Option<String>,
}

fn split_from_str<'de, D: serde::Deserializer<'de>>(de: D) -> Result<SplitChoice, D::Error> {
    match String::deserialize(de)?.as_str() {
        "train" => Ok(SplitChoice::Train),
        "test" => Ok(SplitChoice::Test),
        other => Err(serde::de::Error::custom(format!(
            "unknown split {other:?}, expected train or test"
        ))),
    }
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum WeightPlanResponse {
    Preview {
        preview: PlanPreview,
    },
    Applied {
        previous_hash: String,
        transcript: Box<InterventionTranscript>,
    },
}

async fn intervene_weights(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> ApiResult<WeightPlanResponse> {
    let _writer = state.writer.lock().await;
    let ws = state.snapshot();
    let hash = ws.checkpoint_hash.clone();
    let req: WeightPlanRequest = parse_body(&body, &hash)?;
    if let Some(expected) = &req.expected_hash {
        if *expected != hash {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "stale_checkpoint",
                format!("request targets checkpoint {expected}, current is {hash}"),
            )
            .field("expected_hash", "does not match the current checkpoint")
            .hash(&hash));
        }
    }
    if req.plan.concepts.is_empty() {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "malformed_body",
            "plan names no concepts",
        )
        .field("plan.concepts", "at least one concept index is required")
        .hash(&hash));
    }
    req.plan
        .params
        .validate()
        .map_err(|e| ApiError::from_engine(e, "plan.params").hash(&hash))?;
    let width = ws.checkpoint.model.shape.bottleneck_width();
    if let Some(&index) = req.plan.concepts.iter().find(|&&j| j >= width) {
        return Err(
            ApiError::from_engine(Error::ConceptIndex { index, width }, "plan.concepts")
                .hash(&hash),
        );
    }

    if req.preview_only {
        let examples = ws.examples(ws.split_ids(req.split));
        let preview = preview_plan(&ws.checkpoint.model, &examples, &req.plan)
            .map_err(|e| ApiError::from_engine(e, "plan").hash(&hash))?;
        return tagged(&ws, WeightPlanResponse::Preview { preview });
    }

    let (transcript, checkpoint) = intervene_workspace(&ws, &req.plan, req.split)
        .map_err(|e| ApiError::from_engine(e, "plan").hash(&hash))?;
    let Some(checkpoint) = checkpoint else {
        let message = transcript
            .notice
            .clone()
            .unwrap_or_else(|| Error::EmptyTargetSet.to_string());
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "empty_target_set",
            message,
        )
        .hash(&hash));
    };
    let next = Arc::new(
        ws.with_checkpoint(checkpoint)
            .map_err(|e| ApiError::from_engine(e, "plan").hash(&hash))?,
    );
    state
        .transcripts
        .lock()
        .expect("transcript lock poisoned")
        .push(transcript.clone());
    let previous = state.swap(next.clone());
    state
        .history
        .lock()
        .expect("history lock poisoned")
        .push(previous);
    state
        .persist(&next)
        .map_err(|e| ApiError::from_engine(e, "out").hash(&next.checkpoint_hash))?;
    log::info!("intervention applied: {} -> {}", hash, next.checkpoint_hash);
    tagged(
        &next,
        WeightPlanResponse::Applied {
            previous_hash: hash,
            transcript: Box::new(transcript),
        },
    )
}

#[derive(Debug, Serialize)]
struct RevertResponse {
    reverted_from: String,
    revertible: usize,
}

async fn revert(State(state): State<Arc<AppState>>) -> ApiResult<RevertResponse> {
    let _writer = state.writer.lock().await;
    let previous = state.history.lock().expect("history lock poisoned").pop();
    let Some(previous) = previous else {
        let ws = state.snapshot();
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "nothing_to_revert",
            "no intervention to revert",
        )
        .hash(&ws.checkpoint_hash));
    };
    let replaced = state.swap(previous.clone());
    state
        .persist(&previous)
        .map_err(|e| ApiError::from_engine(e, "out").hash(&previous.checkpoint_hash))?;
    let revertible = state.history.lock().expect("history lock poisoned").len();
    log::info!(
        "reverted {} -> {}",
        replaced.checkpoint_hash,
        previous.checkpoint_hash
    );
    tagged(
        &previous,
        RevertResponse {
            reverted_from: replaced.checkpoint_hash.clone(),
            revertible,
        },
    )
}

#[derive(Debug, Serialize)]
struct Metrics {
    train: Option<FoldMetrics>,
    test: Option<FoldMetrics>,
    interventions: usize,
}

async fn metrics(State(state): State<Arc<AppState>>) -> ApiResult<Metrics> {
    let ws = state.snapshot();
    let positive = minority_class(&ws.dataset);
    let score = |ids: &[usize]| -> Result<Option<FoldMetrics>, ApiError> {
        if ids.is_empty() {
            return Ok(None);
        }
        let predictions = ws.checkpoint.model.predict_many(&ws.graphs(ids));
        score_predictions(
            ws.checkpoint.fold.unwrap_or(0),
            &predictions,
            &ws.dataset.labels_of(ids),
            ws.dataset.num_classes,
            positive,
        )
        .map(Some)
        .map_err(|e| ApiError::from_engine(e, "split").hash(&ws.checkpoint_hash))
    };
    let train = score(&ws.checkpoint.train_ids)?;
    let test = score(&ws.checkpoint.test_ids)?;
    let interventions = state
        .transcripts
        .lock()
        .expect("transcript lock poisoned")
        .len();
    tagged(
        &ws,
        Metrics {
            train,
            test,
            interventions,
        },
    )
}
