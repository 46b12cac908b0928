//! REST routes. Every handler delegates to one engine operation.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use credledger::auth::Session;
use credledger::engine::{CreateStudent, IssueCredential, RegisterUniversity};
use credledger::{Address, Cid, Engine, EngineError, Millis, Role, SubjectEntry};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::cors::{Any, CorsLayer};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> ApiError {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "INVALID_REQUEST".into(),
            message: message.into(),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> ApiError {
        ApiError {
            status: StatusCode::from_u16(e.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR),
            code: e.code().to_string(),
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: ErrorDetail {
                code: self.code,
                message: self.message,
            },
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

fn token_id(raw: &str) -> Result<u64, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::bad_request(format!("token id {raw:?} is not a number")))
}

fn session(state: &AppState, headers: &HeaderMap) -> Result<Session, ApiError> {
    let bearer = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or(EngineError::Unauthenticated)?;
    Ok(state.engine.session(bearer.trim())?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ChallengeRequest {
    pub address: Address,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LoginRequest {
    /// The challenge text exactly as issued.
    pub message: String,
    pub signature: String,
    pub public_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LoginResponse {
    pub token: String,
    pub address: Address,
    pub role: Role,
    pub expires_at: Millis,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct MintViewRequest {
    pub subjects: Vec<SubjectEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ShareRequest {
    pub receiver: Address,
    /// Absolute deadline in ms since the epoch.
    pub transfer_back_time: Millis,
}

async fn challenge(State(s): State<AppState>, body: Bytes) -> ApiResult<credledger::engine::ChallengeResponse> {
    let req: ChallengeRequest = parse(&body)?;
    Ok(Json(s.engine.challenge(req.address)))
}

async fn login(State(s): State<AppState>, body: Bytes) -> ApiResult<LoginResponse> {
    let req: LoginRequest = parse(&body)?;
    let session = s.engine.login(&req.message, &req.signature, &req.public_key)?;
    Ok(Json(LoginResponse {
        token: session.session_id,
        address: session.address,
        role: session.role,
        expires_at: session.expires_at,
    }))
}

async fn register_university(State(s): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: RegisterUniversity = parse(&body)?;
    let profile = s.engine.register_university(req)?;
    Ok((StatusCode::CREATED, Json(profile)).into_response())
}

async fn universities(State(s): State<AppState>) -> ApiResult<Vec<credledger::engine::UniversityProfile>> {
    Ok(Json(s.engine.universities()))
}

async fn university(
    State(s): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<credledger::engine::UniversityProfile> {
    Ok(Json(s.engine.university(&id)?))
}

async fn students(
    State(s): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Vec<credledger::engine::StudentProfile>> {
    let session = session(&s, &headers)?;
    let uni = s.engine.university(&id)?;
    if session.role != Role::University || session.address != uni.address {
        return Err(EngineError::Unauthorized(format!("only {id} may list its students")).into());
    }
    Ok(Json(s.engine.students(&id)))
}

async fn create_student(
    State(s): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let session = session(&s, &headers)?;
    let req: CreateStudent = parse(&body)?;
    let profile = s.engine.create_student(&session, &id, req)?;
    Ok((StatusCode::CREATED, Json(profile)).into_response())
}

async fn issue(State(s): State<AppState>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let session = session(&s, &headers)?;
    let req: IssueCredential = parse(&body)?;
    let minted = s.engine.issue_credential(&session, req)?;
    Ok((StatusCode::CREATED, Json(minted)).into_response())
}

async fn me(State(s): State<AppState>, headers: HeaderMap) -> ApiResult<credledger::engine::Me> {
    let session = session(&s, &headers)?;
    Ok(Json(s.engine.me(&session)))
}

async fn my_nfts(State(s): State<AppState>, headers: HeaderMap) -> ApiResult<credledger::engine::MyNfts> {
    let session = session(&s, &headers)?;
    Ok(Json(s.engine.my_nfts(&session)))
}

async fn transferred(State(s): State<AppState>, headers: HeaderMap) -> ApiResult<Vec<credledger::ListedToken>> {
    let session = session(&s, &headers)?;
    Ok(Json(s.engine.transferred_nfts(&session)))
}

async fn all_nfts(State(s): State<AppState>) -> ApiResult<Vec<credledger::ListedToken>> {
    Ok(Json(s.engine.all_nfts()))
}

async fn show_nft(
    State(s): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<credledger::engine::TokenResponse> {
    let session = session(&s, &headers)?;
    Ok(Json(s.engine.view_token(&session, token_id(&id)?)?))
}

async fn mint_view(
    State(s): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let session = session(&s, &headers)?;
    let req: MintViewRequest = parse(&body)?;
    let minted = s.engine.mint_view(&session, token_id(&id)?, req.subjects)?;
    Ok((StatusCode::CREATED, Json(minted)).into_response())
}

async fn share(
    State(s): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<credledger::TokenListSuccessEvent> {
    let session = session(&s, &headers)?;
    let req: ShareRequest = parse(&body)?;
    Ok(Json(s.engine.share(&session, token_id(&id)?, req.receiver, req.transfer_back_time)?))
}

async fn revoke(
    State(s): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<credledger::TokenListSuccessEvent> {
    let session = session(&s, &headers)?;
    Ok(Json(s.engine.revoke(&session, token_id(&id)?)?))
}

async fn verify(State(s): State<AppState>, body: Bytes) -> ApiResult<credledger::VerificationReport> {
    Ok(Json(s.engine.verify_json(&body)?))
}

async fn metrics(State(s): State<AppState>) -> ApiResult<credledger::engine::Metrics> {
    Ok(Json(s.engine.metrics()))
}

async fn chain(State(s): State<AppState>) -> ApiResult<Vec<credledger::Block>> {
    Ok(Json(s.engine.blocks()))
}

async fn object(State(s): State<AppState>, Path(cid): Path<String>) -> Result<Response, ApiError> {
    let cid: Cid = cid
        .parse()
        .map_err(|_| ApiError::bad_request(format!("{cid:?} is not a content id")))?;
    let bytes = s.engine.object(&cid)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn events(State(s): State<AppState>) -> Response {
    (
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        s.engine.registry().events_jsonl(),
    )
        .into_response()
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok"}))
}

async fn not_found() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        code: "NOT_FOUND".into(),
        message: "no such route".into(),
    }
}

pub fn router(engine: Arc<Engine>, cors_origin: Option<&str>) -> Router {
    let app = Router::new()
        .route("/health", get(health))
        .route("/auth/challenge", post(challenge))
        .route("/auth/login", post(login))
        .route("/universities", get(universities).post(register_university))
        .route("/universities/{id}", get(university))
        .route("/universities/{id}/students", get(students).post(create_student))
        .route("/credentials", post(issue))
        .route("/me", get(me))
        .route("/me/nfts", get(my_nfts))
        .route("/me/transferred", get(transferred))
        .route("/nfts", get(all_nfts))
        .route("/nfts/{id}", get(show_nft))
        .route("/nfts/{id}/views", post(mint_view))
        .route("/nfts/{id}/share", post(share))
        .route("/nfts/{id}/revoke", post(revoke))
        .route("/verify", post(verify))
        .route("/metrics", get(metrics))
        .route("/chain", get(chain))
        .route("/objects/{cid}", get(object))
        .route("/events", get(events))
        .fallback(not_found)
        .with_state(AppState { engine });
    match cors_origin {
        None => app,
        Some(origin) => {
            let layer = CorsLayer::new().allow_methods(Any).allow_headers(Any);
            let layer = match origin {
                "*" => layer.allow_origin(Any),
                o => match HeaderValue::from_str(o) {
                    Ok(v) => layer.allow_origin(v),
                    Err(_) => {
                        log::warn!("ignoring invalid CORS origin {o:?}");
                        return app;
                    }
                },
            };
            app.layer(layer)
        }
    }
}
