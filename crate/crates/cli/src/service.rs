//! Local HTTP interface over a store. JSON in, JSON out.
//!
//! | Verb | Path | Body → Response |
//! |------|------|-----------------|
//! | GET  | `/health` | → `{status}` |
//! | GET  | `/vocabulary` | → registry document |
//! | POST | `/vocabulary/terms` | term → new registry |
//! | GET  | `/vocabulary/sentences` | → every sentence the vocabulary can express, `[{sentence, text}]` |
//! | POST | `/parse` | `{text}` → `{sentence, text}` (text is canonical) |
//! | POST | `/render` | sentence → `{text}` |
//! | GET, POST | `/opinions`, `/policies`, `/facts` | → ids; document → version (409 if it exists) |
//! | GET, PUT | `/{kind}/{id}` | `?version=N` → `{version, document}`; document with `?baseVersion=N` → version |
//! | GET  | `/{kind}/{id}/history` | → versions |
//! | POST | `/opinions/{id}/items/{item}/verification` | `{status, analystId, notes}` → opinion |
//! | GET, POST | `/determinations` | → ids; request → `{version, determination}` |
//! | GET  | `/determinations/{id}` | → `{version, document}` |
//! | GET  | `/determinations/{id}/history` | → versions |
//! | POST | `/determinations/{id}/override` | `{on, note}` → version |
//! | POST | `/whatif` | what-if request → determination (nothing written) |
//! | POST | `/costmodel` | `{levels, caveat?, dayRate?}` → cost report |
//! | POST | `/exposures` | trades → exposure report |
//! | POST | `/events` | trigger event → `{affected}` |
//! | POST | `/sweep` | `{asOf, defaultValidityDays?}` → `{flipped}` |
//! | GET  | `/reports/stale` | → ids |
//! | GET  | `/reports/expiry` | `?asOf=&defaultValidityDays=` → findings |
//! | GET  | `/audit` | `?kind=&id=` → audit entries |
//! | GET  | `/audit/verify` | → `{entries}` or 500 `AuditChainBroken` |
//!
//! Errors are `{reason, message}` where `reason` is a stable id. The acting
//! user is taken from the `x-actor` header.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use netting_core::cnl::{all_sentences, Term};
use netting_core::opinion::{LegalOpinion, Verification};
use netting_core::store::{StoreError, TriggerEvent, VersionInfo};
use netting_core::{
    compute_exposures, total_cost, CostParams, DeterminationRequest, EngineError, EntityKind, InstitutionRiskPolicy, RelationshipFacts,
    Sentence, Trade, WhatIfRequest, Workbench, WorkbenchError,
};
use rust_decimal::Decimal;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::commands::DEFAULT_VALIDITY_DAYS;

const DEFAULT_ACTOR: &str = "service";

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    reason: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, reason: &str, message: impl ToString) -> Self {
        ApiError { status, reason: reason.to_string(), message: message.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "reason": self.reason, "message": self.message }))).into_response()
    }
}

fn store_status(e: &StoreError) -> StatusCode {
    match e {
        StoreError::NotFound { .. } => StatusCode::NOT_FOUND,
        StoreError::VersionConflict { .. } => StatusCode::CONFLICT,
        StoreError::InvalidId(_) | StoreError::Document(_) => StatusCode::BAD_REQUEST,
        StoreError::UnknownSubject(_) => StatusCode::UNPROCESSABLE_ENTITY,
        StoreError::Corrupt { .. } | StoreError::AuditChainBroken(_) | StoreError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<WorkbenchError> for ApiError {
    fn from(e: WorkbenchError) -> Self {
        let status = match &e {
            WorkbenchError::Store(s) => store_status(s),
            WorkbenchError::Engine(EngineError::OpinionNotFound(_)) => StatusCode::NOT_FOUND,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.reason_id(), &e)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::new(store_status(&e), e.reason_id(), &e)
    }
}

macro_rules! unprocessable_from {
    ($($t:ty),*) => {$(
        impl From<$t> for ApiError {
            fn from(e: $t) -> Self {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.reason_id(), &e)
            }
        }
    )*};
}

unprocessable_from!(
    netting_core::ParseError,
    netting_core::cnl::RenderError,
    netting_core::cost::CostError,
    netting_core::exposure::ExposureError
);

type ApiResult = Result<Response, ApiError>;

fn body<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "InvalidDocument", e))
}

fn actor(headers: &HeaderMap) -> String {
    headers.get("x-actor").and_then(|v| v.to_str().ok()).filter(|s| !s.is_empty()).unwrap_or(DEFAULT_ACTOR).to_string()
}

fn ok<T: Serialize>(doc: T) -> ApiResult {
    Ok(Json(doc).into_response())
}

fn created<T: Serialize>(doc: T) -> ApiResult {
    Ok((StatusCode::CREATED, Json(doc)).into_response())
}

type Shared = Arc<Workbench>;

/// Store calls do blocking file I/O; keep them off the async workers.
async fn blocking<F>(wb: Shared, f: F) -> ApiResult
where
    F: FnOnce(&Workbench) -> ApiResult + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&wb))
        .await
        .unwrap_or_else(|e| Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e)))
}

fn kind_of(segment: &str) -> Result<EntityKind, ApiError> {
    match segment {
        "opinions" => Ok(EntityKind::Opinions),
        "policies" => Ok(EntityKind::Policies),
        "facts" => Ok(EntityKind::Facts),
        "determinations" => Ok(EntityKind::Determinations),
        _ => Err(ApiError::new(StatusCode::NOT_FOUND, "NotFound", format!("no collection {segment:?}"))),
    }
}

/// Validates and saves a document of a writable kind; returns its id.
fn save_document(
    wb: &Workbench,
    kind: EntityKind,
    bytes: &[u8],
    base: Option<u64>,
    actor: &str,
) -> Result<(String, VersionInfo), ApiError> {
    Ok(match kind {
        EntityKind::Opinions => {
            let doc: LegalOpinion = body(bytes)?;
            let info = wb.save_opinion(&doc, base, actor)?;
            (doc.id, info)
        }
        EntityKind::Policies => {
            let doc: InstitutionRiskPolicy = body(bytes)?;
            let info = wb.save_policy(&doc, base, actor)?;
            (doc.id, info)
        }
        EntityKind::Facts => {
            let doc: RelationshipFacts = body(bytes)?;
            let info = wb.save_facts(&doc, base, actor)?;
            (doc.relationship_id, info)
        }
        _ => return Err(ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "ReadOnly", format!("{kind:?} are not written directly"))),
    })
}

pub fn router(wb: Workbench) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/vocabulary", get(vocabulary))
        .route("/vocabulary/terms", post(extend_vocabulary))
        .route("/vocabulary/sentences", get(sentences))
        .route("/parse", post(parse))
        .route("/render", post(render))
        .route("/determinations", get(list_determinations).post(run_determination))
        .route("/determinations/{id}/override", post(set_override))
        .route("/opinions/{id}/items/{item}/verification", post(verify_item))
        .route("/whatif", post(what_if))
        .route("/costmodel", post(cost_model))
        .route("/exposures", post(exposures))
        .route("/events", post(record_event))
        .route("/sweep", post(sweep))
        .route("/reports/stale", get(stale_report))
        .route("/reports/expiry", get(expiry_report))
        .route("/audit", get(audit))
        .route("/audit/verify", get(verify_audit))
        .route("/{kind}", get(list).post(create))
        .route("/{kind}/{id}", get(fetch).put(update))
        .route("/{kind}/{id}/history", get(history))
        .with_state(Arc::new(wb))
}

/// Serves until interrupted.
pub async fn serve(addr: SocketAddr, wb: Workbench) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("netting service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(wb))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn vocabulary(State(wb): State<Shared>) -> ApiResult {
    blocking(wb, |wb| ok(wb.registry()?)).await
}

async fn extend_vocabulary(State(wb): State<Shared>, headers: HeaderMap, bytes: Bytes) -> ApiResult {
    let term: Term = body(&bytes)?;
    blocking(wb, move |wb| created(wb.extend_vocabulary(term, &actor(&headers))?)).await
}

async fn sentences(State(wb): State<Shared>) -> ApiResult {
    blocking(wb, |wb| {
        let reg = wb.registry()?;
        let all = all_sentences(&reg)
            .into_iter()
            .map(|s| Ok(json!({ "text": reg.render(&s)?, "sentence": s })))
            .collect::<Result<Vec<_>, ApiError>>()?;
        ok(all)
    })
    .await
}

#[derive(Deserialize)]
struct ParseRequest {
    text: String,
}

async fn parse(State(wb): State<Shared>, bytes: Bytes) -> ApiResult {
    let req: ParseRequest = body(&bytes)?;
    blocking(wb, move |wb| {
        let reg = wb.registry()?;
        let sentence = reg.parse(&req.text)?;
        let text = reg.render(&sentence)?;
        ok(json!({ "sentence": sentence, "text": text }))
    })
    .await
}

async fn render(State(wb): State<Shared>, bytes: Bytes) -> ApiResult {
    let sentence: Sentence = body(&bytes)?;
    blocking(wb, move |wb| ok(json!({ "text": wb.registry()?.render(&sentence)? }))).await
}

async fn list(State(wb): State<Shared>, Path(kind): Path<String>) -> ApiResult {
    let kind = kind_of(&kind)?;
    blocking(wb, move |wb| ok(wb.store.list(kind)?)).await
}

async fn list_determinations(State(wb): State<Shared>) -> ApiResult {
    blocking(wb, |wb| ok(wb.store.list(EntityKind::Determinations)?)).await
}

async fn create(State(wb): State<Shared>, Path(kind): Path<String>, headers: HeaderMap, bytes: Bytes) -> ApiResult {
    let kind = kind_of(&kind)?;
    blocking(wb, move |wb| {
        let (id, info) = save_document(wb, kind, &bytes, None, &actor(&headers))?;
        created(json!({ "id": id, "version": info }))
    })
    .await
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct UpdateQuery {
    base_version: Option<u64>,
}

async fn update(
    State(wb): State<Shared>,
    Path((kind, id)): Path<(String, String)>,
    Query(q): Query<UpdateQuery>,
    headers: HeaderMap,
    bytes: Bytes,
) -> ApiResult {
    let kind = kind_of(&kind)?;
    blocking(wb, move |wb| {
        let doc: Value = body(&bytes)?;
        let body_id = doc.get("id").or_else(|| doc.get("relationshipId")).and_then(Value::as_str);
        if body_id != Some(id.as_str()) {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "IdMismatch", format!("path id {id:?} does not match the document")));
        }
        let (id, info) = save_document(wb, kind, &bytes, q.base_version, &actor(&headers))?;
        ok(json!({ "id": id, "version": info }))
    })
    .await
}

#[derive(Deserialize)]
struct VersionQuery {
    version: Option<u64>,
}

async fn fetch(State(wb): State<Shared>, Path((kind, id)): Path<(String, String)>, Query(q): Query<VersionQuery>) -> ApiResult {
    let kind = kind_of(&kind)?;
    blocking(wb, move |wb| {
        let (info, doc) = wb.store.load::<Value>(kind, &id, q.version)?;
        ok(json!({ "version": info, "document": doc }))
    })
    .await
}

async fn history(State(wb): State<Shared>, Path((kind, id)): Path<(String, String)>) -> ApiResult {
    let kind = kind_of(&kind)?;
    blocking(wb, move |wb| ok(wb.store.history(kind, &id)?)).await
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct VerificationRequest {
    status: Verification,
    analyst_id: String,
    #[serde(default)]
    notes: Option<String>,
}

async fn verify_item(State(wb): State<Shared>, Path((id, item)): Path<(String, String)>, bytes: Bytes) -> ApiResult {
    let req: VerificationRequest = body(&bytes)?;
    blocking(wb, move |wb| ok(wb.set_verification(&id, &item, req.status, &req.analyst_id, req.notes)?)).await
}

async fn run_determination(State(wb): State<Shared>, headers: HeaderMap, bytes: Bytes) -> ApiResult {
    let req: DeterminationRequest = body(&bytes)?;
    blocking(wb, move |wb| {
        let (info, d) = wb.determine(&req, &actor(&headers))?;
        created(json!({ "version": info, "determination": d }))
    })
    .await
}

#[derive(Deserialize)]
struct OverrideRequest {
    on: bool,
    #[serde(default)]
    note: String,
}

async fn set_override(State(wb): State<Shared>, Path(id): Path<String>, headers: HeaderMap, bytes: Bytes) -> ApiResult {
    let req: OverrideRequest = body(&bytes)?;
    blocking(wb, move |wb| ok(wb.store.set_override(&id, req.on, &req.note, &actor(&headers))?)).await
}

async fn what_if(State(wb): State<Shared>, bytes: Bytes) -> ApiResult {
    let req: WhatIfRequest = body(&bytes)?;
    blocking(wb, move |wb| ok(wb.what_if(&req)?)).await
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct CostRequest {
    #[serde(flatten)]
    params: CostParams,
    #[serde(default)]
    day_rate: Option<Decimal>,
}

async fn cost_model(bytes: Bytes) -> ApiResult {
    let req: CostRequest = body(&bytes)?;
    ok(total_cost(&req.params.levels, req.day_rate)?)
}

async fn exposures(bytes: Bytes) -> ApiResult {
    let trades: Vec<Trade> = body(&bytes)?;
    ok(compute_exposures(&trades)?)
}

async fn record_event(State(wb): State<Shared>, headers: HeaderMap, bytes: Bytes) -> ApiResult {
    let event: TriggerEvent = body(&bytes)?;
    blocking(wb, move |wb| created(json!({ "affected": wb.store.record_event(&event, &actor(&headers))? }))).await
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct SweepRequest {
    as_of: NaiveDate,
    #[serde(default)]
    default_validity_days: Option<u32>,
}

async fn sweep(State(wb): State<Shared>, headers: HeaderMap, bytes: Bytes) -> ApiResult {
    let req: SweepRequest = body(&bytes)?;
    blocking(wb, move |wb| {
        let days = req.default_validity_days.unwrap_or(DEFAULT_VALIDITY_DAYS);
        ok(json!({ "asOf": req.as_of, "flipped": wb.store.sweep_expiry(req.as_of, days, &actor(&headers))? }))
    })
    .await
}

async fn stale_report(State(wb): State<Shared>) -> ApiResult {
    blocking(wb, |wb| ok(wb.store.stale_report()?)).await
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ExpiryQuery {
    as_of: NaiveDate,
    default_validity_days: Option<u32>,
}

async fn expiry_report(State(wb): State<Shared>, Query(q): Query<ExpiryQuery>) -> ApiResult {
    blocking(wb, move |wb| ok(wb.store.expiry_violations(q.as_of, q.default_validity_days.unwrap_or(DEFAULT_VALIDITY_DAYS))?)).await
}

#[derive(Deserialize)]
struct AuditQuery {
    kind: Option<String>,
    id: Option<String>,
}

async fn audit(State(wb): State<Shared>, Query(q): Query<AuditQuery>) -> ApiResult {
    blocking(wb, move |wb| match (q.kind, q.id) {
        (Some(k), Some(id)) => {
            let kind = EntityKind::from_dir(&k)
                .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "InvalidKind", format!("unknown kind {k:?}")))?;
            ok(wb.store.audit_for(kind, &id)?)
        }
        (None, None) => ok(wb.store.audit_trail()?),
        _ => Err(ApiError::new(StatusCode::BAD_REQUEST, "InvalidQuery", "kind and id go together")),
    })
    .await
}

async fn verify_audit(State(wb): State<Shared>) -> ApiResult {
    blocking(wb, |wb| ok(json!({ "entries": wb.store.verify_audit_chain()? }))).await
}
