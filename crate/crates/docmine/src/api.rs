//! HTTP service over the store.
//!
//! Every route calls exactly one store operation. All routes except login and
//! the health probe need an `Authorization: Bearer <token>` header from
//! `POST /api/auth/login`. Document mutations additionally need the caller
//! to hold the file's edit lease. Errors come back as
//! `{"code", "message", "detail"}` with the status class of the code.
//!
//! | Route | Operation |
//! |---|---|
//! | `POST /api/auth/login`, `POST /api/auth/logout` | sessions |
//! | `GET,POST /api/users` | list and add users |
//! | `GET,POST /api/projects`, `GET /api/projects/{p}` | projects |
//! | `PATCH /api/projects/{p}/settings` | name, description, labels, header |
//! | `POST /api/projects/{p}/header/edits` | header edits |
//! | `POST /api/projects/{p}/header/spreadsheet` | header from a spreadsheet |
//! | `GET,POST /api/projects/{p}/files` | list, upload (multipart or raw body) |
//! | `GET /api/projects/{p}/search?q=` | ranked search |
//! | `POST /api/projects/{p}/integrate` | project dataset |
//! | `GET /api/projects/{p}/export?format=csv\|xlsx` | project export |
//! | `GET /api/projects/{p}/corrections` | correction log (NDJSON) |
//! | `GET /api/files/mine`, `GET /api/files/recent` | file lists |
//! | `GET /api/files/{f}`, `POST /api/files/{f}/open` | record, record a view |
//! | `GET /api/files/{f}/pdf`, `GET /api/files/{f}/pages` | source and geometry |
//! | `POST,DELETE /api/files/{f}/charge` | take or release charge |
//! | `POST,PUT,DELETE /api/files/{f}/lock` | acquire, renew, release |
//! | `GET,PUT /api/files/{f}/meta` | metadata |
//! | `/api/files/{f}/tables/...` | table pipeline |
//! | `/api/files/{f}/sections`, `/api/files/{f}/spans/...` | text |
//! | `/api/files/{f}/maps/...` | map pipeline |
//! | `POST /api/files/{f}/integrate`, `GET /api/files/{f}/export` | document dataset |
//! | `GET /api/files/{f}/corrections` | the file's corrections |

use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, FromRequest, FromRequestParts, Multipart, Path, Query, Request, State};
use axum::http::header::{AUTHORIZATION, CONTENT_DISPOSITION, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post, put};
use axum::{Json, Router};
use docmine_core::geom::{BBox, Point};
use docmine_core::integrate::HeaderEdit;
use docmine_core::lock::UserId;
use docmine_core::map::{GridlineEdit, MapStage};
use docmine_core::meta::MetaRecord;
use docmine_core::table::{PipelineStage, StructureEdit};
use docmine_core::CoreError;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::export::{ExportError, ExportFormat};
use crate::store::{NewProject, SettingsUpdate, Store, StoreError};

/// Largest accepted request body.
pub const MAX_UPLOAD: usize = 256 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>, detail: Option<Value>) -> Self {
        Self { status: status.as_u16(), code: code.into(), message: message.into(), detail }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "Validation", message, None)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message, None)
    }
}

/// Status, code and detail for a core error.
fn core_class(e: &CoreError) -> (StatusCode, &'static str, Option<Value>) {
    use CoreError::*;
    use StatusCode as S;
    match e {
        NotLocked => (S::FORBIDDEN, "NotLocked", None),
        PrincipalHeld(p) => (S::FORBIDDEN, "PrincipalHeld", Some(json!({ "principal": p }))),
        LockHeld { holder, expires_at } => (S::CONFLICT, "LockHeld", Some(json!({ "holder": holder, "expires_at": expires_at }))),
        InvalidStage { op, stage } => (S::CONFLICT, "InvalidStage", Some(json!({ "op": op, "stage": stage }))),
        UnknownSpan(_) => (S::NOT_FOUND, "UnknownSpan", None),
        UnknownPoint(_) => (S::NOT_FOUND, "UnknownPoint", None),
        UnknownCell { .. } => (S::NOT_FOUND, "UnknownCell", None),
        UnknownLine(_) => (S::NOT_FOUND, "UnknownLine", None),
        EmptyRegion => (S::UNPROCESSABLE_ENTITY, "EmptyRegion", None),
        RegionOutOfPage => (S::UNPROCESSABLE_ENTITY, "RegionOutOfPage", None),
        NoCandidates => (S::UNPROCESSABLE_ENTITY, "NoCandidates", None),
        Validation(_) => (S::UNPROCESSABLE_ENTITY, "Validation", None),
        NoContent => (S::UNPROCESSABLE_ENTITY, "NoContent", None),
        InvalidEdit(_) => (S::UNPROCESSABLE_ENTITY, "InvalidEdit", None),
        OcrClientUnavailable => (S::UNPROCESSABLE_ENTITY, "OcrClientUnavailable", None),
        InvalidRule(_) => (S::UNPROCESSABLE_ENTITY, "InvalidRule", None),
        InvalidOffsets { .. } => (S::UNPROCESSABLE_ENTITY, "InvalidOffsets", None),
        UnknownLabel(_) => (S::UNPROCESSABLE_ENTITY, "UnknownLabel", None),
        UnknownField(_) => (S::UNPROCESSABLE_ENTITY, "UnknownField", None),
        UnparseableLabel(_) => (S::UNPROCESSABLE_ENTITY, "UnparseableLabel", None),
        InvalidValue(_) => (S::UNPROCESSABLE_ENTITY, "InvalidValue", None),
        InsufficientLines(_) => (S::UNPROCESSABLE_ENTITY, "InsufficientLines", None),
        DegenerateAxis(_) => (S::UNPROCESSABLE_ENTITY, "DegenerateAxis", None),
        NotCalibrated => (S::UNPROCESSABLE_ENTITY, "NotCalibrated", None),
        OutOfRegion => (S::UNPROCESSABLE_ENTITY, "OutOfRegion", None),
        NoHeaderConfig => (S::UNPROCESSABLE_ENTITY, "NoHeaderConfig", None),
        KeyFieldUnmapped(_) => (S::UNPROCESSABLE_ENTITY, "KeyFieldUnmapped", None),
        EmptyHeaderRow => (S::UNPROCESSABLE_ENTITY, "EmptyHeaderRow", None),
        DuplicateField(_) => (S::UNPROCESSABLE_ENTITY, "DuplicateField", None),
        KeyRemoved(_) => (S::UNPROCESSABLE_ENTITY, "KeyRemoved", None),
        HeaderMismatch(_) => (S::UNPROCESSABLE_ENTITY, "HeaderMismatch", None),
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        use StatusCode as S;
        let message = e.to_string();
        let (status, code, detail) = match &e {
            StoreError::Core(c) | StoreError::Export(ExportError::Core(c)) => core_class(c),
            StoreError::Export(ExportError::UnparseableFile(_)) => (S::UNPROCESSABLE_ENTITY, "UnparseableFile", None),
            StoreError::Export(ExportError::EmptyHeaderRow) => (S::UNPROCESSABLE_ENTITY, "EmptyHeaderRow", None),
            StoreError::Export(ExportError::Write(_)) => (S::INTERNAL_SERVER_ERROR, "Internal", None),
            StoreError::Unauthenticated => (S::UNAUTHORIZED, "Unauthenticated", None),
            StoreError::InvalidCredentials => (S::UNAUTHORIZED, "InvalidCredentials", None),
            StoreError::UserExists(_) => (S::CONFLICT, "UserExists", None),
            StoreError::UnknownProject(_) => (S::NOT_FOUND, "UnknownProject", None),
            StoreError::UnknownDocument(_) => (S::NOT_FOUND, "UnknownDocument", None),
            StoreError::UnknownTable(_) => (S::NOT_FOUND, "UnknownTable", None),
            StoreError::UnknownMap(_) => (S::NOT_FOUND, "UnknownMap", None),
            StoreError::DuplicateChecksum { existing } => (S::CONFLICT, "DuplicateChecksum", Some(json!({ "existing": existing }))),
            StoreError::EmptyUpload => (S::UNPROCESSABLE_ENTITY, "EmptyUpload", None),
            StoreError::NotParsed(_) => (S::CONFLICT, "NotParsed", None),
            StoreError::Conflict(_) => (S::CONFLICT, "Conflict", None),
            StoreError::SchemaVersion { .. } | StoreError::Storage(_) => (S::INTERNAL_SERVER_ERROR, "Internal", None),
        };
        Self::new(status, code, message, detail)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
}

/// The authenticated caller.
pub struct Caller(pub UserId);

impl FromRequestParts<AppState> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, app: &AppState) -> Result<Self, ApiError> {
        let token = bearer(parts).ok_or_else(|| ApiError::from(StoreError::Unauthenticated))?;
        Ok(Caller(app.store.authenticate(token)?))
    }
}

fn bearer(parts: &Parts) -> Option<&str> {
    let v = parts.headers.get(AUTHORIZATION)?.to_str().ok()?;
    Some(v.strip_prefix("Bearer ")?.trim())
}

/// A JSON body whose decoding failures are reported as validation errors.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        let Json(v) = Json::<T>::from_request(req, state).await.map_err(|e| ApiError::invalid(e.body_text()))?;
        Ok(Body(v))
    }
}

/// Runs a store operation on the blocking pool.
async fn run<T: Send + 'static>(app: &AppState, f: impl FnOnce(&Store) -> crate::store::Result<T> + Send + 'static) -> Result<T, ApiError> {
    let store = app.store.clone();
    tokio::task::spawn_blocking(move || f(&store)).await.map_err(|e| ApiError::internal(e.to_string()))?.map_err(ApiError::from)
}

async fn json<T: Send + 'static>(app: &AppState, f: impl FnOnce(&Store) -> crate::store::Result<T> + Send + 'static) -> ApiResult<T> {
    run(app, f).await.map(Json)
}

/// Reads an uploaded file from a multipart form (first part with a file
/// name, or the part named `file`) or from a raw body with `?filename=`.
async fn read_upload(req: Request, filename: Option<String>) -> Result<(String, Vec<u8>), ApiError> {
    let is_multipart = req
        .headers()
        .get(CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    if !is_multipart {
        let bytes = axum::body::to_bytes(req.into_body(), MAX_UPLOAD).await.map_err(|e| ApiError::invalid(e.to_string()))?;
        return Ok((filename.unwrap_or_else(|| "upload".into()), bytes.to_vec()));
    }
    let mut form = Multipart::from_request(req, &()).await.map_err(|e| ApiError::invalid(e.body_text()))?;
    while let Some(field) = form.next_field().await.map_err(|e| ApiError::invalid(e.body_text()))? {
        let name = field.file_name().map(String::from);
        if name.is_some() || field.name() == Some("file") {
            let bytes = field.bytes().await.map_err(|e| ApiError::invalid(e.body_text()))?;
            return Ok((name.or(filename).unwrap_or_else(|| "upload".into()), bytes.to_vec()));
        }
    }
    Err(ApiError::invalid("multipart form has no file part"))
}

fn download(bytes: Vec<u8>, media_type: &str, filename: &str) -> Response {
    ([(CONTENT_TYPE, media_type.to_string()), (CONTENT_DISPOSITION, format!("attachment; filename=\"{filename}\""))], bytes).into_response()
}

// ---- request bodies ----

#[derive(Deserialize)]
pub struct LoginRequest {
    pub user_id: String,
    pub password: String,
}

#[derive(Deserialize)]
pub struct NewUser {
    pub user_id: String,
    #[serde(default)]
    pub display_name: String,
    pub password: String,
}

#[derive(Deserialize)]
pub struct FileQuery {
    pub filename: Option<String>,
}

#[derive(Deserialize)]
pub struct SearchQuery {
    #[serde(default)]
    pub q: String,
}

#[derive(Deserialize)]
pub struct FormatQuery {
    pub format: Option<ExportFormat>,
}

#[derive(Deserialize)]
pub struct RegionBody {
    pub region: BBox,
}

#[derive(Deserialize)]
pub struct NewRegion {
    pub page_index: usize,
    pub region: BBox,
}

#[derive(Deserialize)]
pub struct CellEdit {
    pub row: usize,
    pub col: usize,
    pub text: String,
}

#[derive(Deserialize)]
pub struct TableRevert {
    pub stage: PipelineStage,
}

#[derive(Deserialize)]
pub struct MapRevert {
    pub stage: MapStage,
}

#[derive(Deserialize)]
pub struct MappingBody {
    pub columns: Vec<Option<String>>,
}

#[derive(Deserialize)]
pub struct NewSpan {
    pub section_index: usize,
    pub start: usize,
    pub end: usize,
    pub label: String,
}

#[derive(Deserialize)]
pub struct LinkBody {
    pub field: Option<String>,
}

#[derive(Deserialize)]
pub struct AttachBody {
    pub key: Option<String>,
}

// ---- auth and users ----

async fn login(State(app): State<AppState>, Body(req): Body<LoginRequest>) -> ApiResult<crate::store::Session> {
    json(&app, move |s| s.login(&req.user_id, &req.password)).await
}

async fn logout(State(app): State<AppState>, _: Caller, parts: Parts) -> Result<StatusCode, ApiError> {
    let token = bearer(&parts).unwrap_or_default().to_string();
    run(&app, move |s| s.logout(&token)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn list_users(State(app): State<AppState>, _: Caller) -> ApiResult<Vec<crate::store::UserView>> {
    json(&app, |s| s.list_users()).await
}

async fn add_user(State(app): State<AppState>, _: Caller, Body(u): Body<NewUser>) -> ApiResult<crate::store::UserView> {
    json(&app, move |s| s.add_user(&u.user_id, &u.display_name, &u.password)).await
}

// ---- projects ----

async fn list_projects(State(app): State<AppState>, _: Caller) -> ApiResult<Vec<crate::store::Project>> {
    json(&app, |s| s.list_projects()).await
}

async fn create_project(State(app): State<AppState>, Caller(u): Caller, Body(p): Body<NewProject>) -> ApiResult<crate::store::Project> {
    json(&app, move |s| s.create_project(&u, p)).await
}

async fn get_project(State(app): State<AppState>, _: Caller, Path(p): Path<String>) -> ApiResult<crate::store::Project> {
    json(&app, move |s| s.get_project(&p)).await
}

async fn update_settings(State(app): State<AppState>, _: Caller, Path(p): Path<String>, Body(u): Body<SettingsUpdate>) -> ApiResult<crate::store::Project> {
    json(&app, move |s| s.update_settings(&p, u)).await
}

async fn edit_header(State(app): State<AppState>, _: Caller, Path(p): Path<String>, Body(edits): Body<Vec<HeaderEdit>>) -> ApiResult<crate::store::Project> {
    json(&app, move |s| s.edit_header(&p, &edits)).await
}

async fn header_from_spreadsheet(
    State(app): State<AppState>,
    _: Caller,
    Path(p): Path<String>,
    Query(q): Query<FileQuery>,
    req: Request,
) -> ApiResult<crate::store::Project> {
    let (name, bytes) = read_upload(req, q.filename).await?;
    json(&app, move |s| s.header_from_spreadsheet(&p, &bytes, &name)).await
}

async fn list_files(State(app): State<AppState>, _: Caller, Path(p): Path<String>) -> ApiResult<Vec<crate::store::FileRecord>> {
    json(&app, move |s| s.list_files(&p)).await
}

/// Stores the upload and answers `202 Accepted` with the pending record;
/// parsing continues in the background.
async fn upload(
    State(app): State<AppState>,
    Caller(u): Caller,
    Path(p): Path<String>,
    Query(q): Query<FileQuery>,
    req: Request,
) -> Result<(StatusCode, Json<crate::store::FileRecord>), ApiError> {
    let (name, bytes) = read_upload(req, q.filename).await?;
    let rec = run(&app, move |s| s.upload_file(&u, &p, &name, &bytes)).await?;
    let store = app.store.clone();
    let id = rec.file_id.clone();
    tokio::task::spawn_blocking(move || {
        if let Err(e) = store.process_upload(&id) {
            tracing::error!(file_id = %id, error = %e, "processing upload failed");
        }
    });
    Ok((StatusCode::ACCEPTED, Json(rec)))
}

async fn search(State(app): State<AppState>, _: Caller, Path(p): Path<String>, Query(q): Query<SearchQuery>) -> ApiResult<Vec<crate::store::FileRecord>> {
    json(&app, move |s| s.search_files(&p, &q.q)).await
}

async fn integrate_project(State(app): State<AppState>, _: Caller, Path(p): Path<String>) -> ApiResult<docmine_core::integrate::ProjectDataset> {
    json(&app, move |s| s.integrate_project(&p)).await
}

async fn export_project(State(app): State<AppState>, _: Caller, Path(p): Path<String>, Query(q): Query<FormatQuery>) -> Result<Response, ApiError> {
    let fmt = q.format.unwrap_or(ExportFormat::Csv);
    let name = format!("{p}.{}", fmt.extension());
    let bytes = run(&app, move |s| s.export_project(&p, fmt)).await?;
    Ok(download(bytes, fmt.media_type(), &name))
}

async fn export_corrections(State(app): State<AppState>, _: Caller, Path(p): Path<String>) -> Result<Response, ApiError> {
    let name = format!("{p}-corrections.ndjson");
    let bytes = run(&app, move |s| s.export_corrections(&p)).await?;
    Ok(download(bytes, "application/x-ndjson", &name))
}

// ---- files ----

async fn my_files(State(app): State<AppState>, Caller(u): Caller) -> ApiResult<Vec<crate::store::FileRecord>> {
    json(&app, move |s| s.my_files(&u)).await
}

async fn recent_files(State(app): State<AppState>, Caller(u): Caller) -> ApiResult<Vec<crate::store::FileRecord>> {
    json(&app, move |s| s.recent_files(&u)).await
}

async fn get_file(State(app): State<AppState>, _: Caller, Path(f): Path<String>) -> ApiResult<crate::store::FileRecord> {
    json(&app, move |s| s.get_file(&f)).await
}

async fn open_file(State(app): State<AppState>, Caller(u): Caller, Path(f): Path<String>) -> ApiResult<crate::store::FileRecord> {
    json(&app, move |s| s.open_file(&u, &f)).await
}

async fn file_pdf(State(app): State<AppState>, _: Caller, Path(f): Path<String>) -> Result<Response, ApiError> {
    let name = format!("{f}.pdf");
    let bytes = run(&app, move |s| s.file_bytes(&f)).await?;
    Ok(download(bytes, "application/pdf", &name))
}

async fn pages(State(app): State<AppState>, _: Caller, Path(f): Path<String>) -> ApiResult<Vec<docmine_core::geom::PageModel>> {
    json(&app, move |s| s.pages(&f)).await
}

macro_rules! file_op {
    ($name:ident, $method:ident, $out:ty) => {
        async fn $name(State(app): State<AppState>, Caller(u): Caller, Path(f): Path<String>) -> ApiResult<$out> {
            json(&app, move |s| s.$method(&u, &f)).await
        }
    };
}

file_op!(take_charge, take_charge, crate::store::FileRecord);
file_op!(release_charge, release_charge, crate::store::FileRecord);
file_op!(acquire_lock, acquire_lock, crate::store::FileRecord);
file_op!(renew_lock, renew_lock, crate::store::FileRecord);
file_op!(release_lock, release_lock, crate::store::FileRecord);
file_op!(detect_tables, detect_tables, Vec<docmine_core::table::TableArtifact>);
file_op!(detect_maps, detect_maps, Vec<docmine_core::map::MapArtifact>);
file_op!(reannotate, reannotate, Vec<docmine_core::text::EntitySpan>);

async fn get_meta(State(app): State<AppState>, _: Caller, Path(f): Path<String>) -> ApiResult<crate::store::MetaView> {
    json(&app, move |s| s.get_meta(&f)).await
}

async fn save_meta(State(app): State<AppState>, Caller(u): Caller, Path(f): Path<String>, Body(r): Body<MetaRecord>) -> ApiResult<MetaRecord> {
    json(&app, move |s| s.save_meta(&u, &f, r)).await
}

async fn integrate_document(State(app): State<AppState>, _: Caller, Path(f): Path<String>) -> ApiResult<docmine_core::integrate::DocumentDataset> {
    json(&app, move |s| s.integrate_document(&f)).await
}

async fn export_document(State(app): State<AppState>, _: Caller, Path(f): Path<String>, Query(q): Query<FormatQuery>) -> Result<Response, ApiError> {
    let fmt = q.format.unwrap_or(ExportFormat::Csv);
    let name = format!("{f}.{}", fmt.extension());
    let bytes = run(&app, move |s| s.export_document(&f, fmt)).await?;
    Ok(download(bytes, fmt.media_type(), &name))
}

async fn file_corrections(State(app): State<AppState>, _: Caller, Path(f): Path<String>) -> ApiResult<Vec<docmine_core::correction::CorrectionEvent>> {
    json(&app, move |s| s.corrections_for(&f)).await
}

// ---- tables ----

type Table = docmine_core::table::TableArtifact;

async fn list_tables(State(app): State<AppState>, _: Caller, Path(f): Path<String>) -> ApiResult<Vec<Table>> {
    json(&app, move |s| s.list_tables(&f)).await
}

async fn add_table(State(app): State<AppState>, Caller(u): Caller, Path(f): Path<String>, Body(r): Body<NewRegion>) -> ApiResult<Table> {
    json(&app, move |s| s.add_table(&u, &f, r.page_index, r.region)).await
}

async fn get_table(State(app): State<AppState>, _: Caller, Path((f, t)): Path<(String, String)>) -> ApiResult<Table> {
    json(&app, move |s| s.get_table(&f, &t)).await
}

macro_rules! artifact_op {
    ($name:ident, $method:ident, $out:ty) => {
        async fn $name(State(app): State<AppState>, Caller(u): Caller, Path((f, a)): Path<(String, String)>) -> ApiResult<$out> {
            json(&app, move |s| s.$method(&u, &f, &a)).await
        }
    };
}

artifact_op!(propose_structure, propose_structure, Table);
artifact_op!(confirm_structure, confirm_structure, Table);
artifact_op!(propose_content, propose_content, Table);
artifact_op!(confirm_table, confirm_table, Table);

async fn confirm_table_region(State(app): State<AppState>, Caller(u): Caller, Path((f, t)): Path<(String, String)>, Body(b): Body<RegionBody>) -> ApiResult<Table> {
    json(&app, move |s| s.confirm_table_region(&u, &f, &t, b.region)).await
}

async fn edit_structure(State(app): State<AppState>, Caller(u): Caller, Path((f, t)): Path<(String, String)>, Body(e): Body<StructureEdit>) -> ApiResult<Table> {
    json(&app, move |s| s.edit_structure(&u, &f, &t, &e)).await
}

async fn edit_cell(State(app): State<AppState>, Caller(u): Caller, Path((f, t)): Path<(String, String)>, Body(e): Body<CellEdit>) -> ApiResult<Table> {
    json(&app, move |s| s.edit_cell(&u, &f, &t, e.row, e.col, &e.text)).await
}

async fn revert_table(State(app): State<AppState>, Caller(u): Caller, Path((f, t)): Path<(String, String)>, Body(r): Body<TableRevert>) -> ApiResult<Table> {
    json(&app, move |s| s.revert_table(&u, &f, &t, r.stage)).await
}

async fn get_mapping(State(app): State<AppState>, _: Caller, Path((f, t)): Path<(String, String)>) -> ApiResult<docmine_core::integrate::ColumnMapping> {
    json(&app, move |s| s.column_mapping(&f, &t)).await
}

async fn set_mapping(
    State(app): State<AppState>,
    Caller(u): Caller,
    Path((f, t)): Path<(String, String)>,
    Body(m): Body<MappingBody>,
) -> ApiResult<docmine_core::integrate::ColumnMapping> {
    json(&app, move |s| s.set_column_mapping(&u, &f, &t, m.columns)).await
}

// ---- text ----

type Span = docmine_core::text::EntitySpan;

async fn sections(State(app): State<AppState>, _: Caller, Path(f): Path<String>) -> ApiResult<Vec<String>> {
    json(&app, move |s| s.sections(&f)).await
}

async fn list_spans(State(app): State<AppState>, _: Caller, Path(f): Path<String>) -> ApiResult<Vec<Span>> {
    json(&app, move |s| s.list_spans(&f)).await
}

async fn add_span(State(app): State<AppState>, Caller(u): Caller, Path(f): Path<String>, Body(n): Body<NewSpan>) -> ApiResult<Span> {
    json(&app, move |s| s.add_manual_span(&u, &f, n.section_index, n.start, n.end, &n.label)).await
}

artifact_op!(delete_span, delete_span, Span);

async fn link_span(State(app): State<AppState>, Caller(u): Caller, Path((f, sp)): Path<(String, String)>, Body(l): Body<LinkBody>) -> ApiResult<Span> {
    json(&app, move |s| s.link_span(&u, &f, &sp, l.field.as_deref())).await
}

// ---- maps ----

type Map = docmine_core::map::MapArtifact;

async fn list_maps(State(app): State<AppState>, _: Caller, Path(f): Path<String>) -> ApiResult<Vec<Map>> {
    json(&app, move |s| s.list_maps(&f)).await
}

async fn add_map(State(app): State<AppState>, Caller(u): Caller, Path(f): Path<String>, Body(r): Body<NewRegion>) -> ApiResult<Map> {
    json(&app, move |s| s.add_map(&u, &f, r.page_index, r.region)).await
}

async fn get_map(State(app): State<AppState>, _: Caller, Path((f, m)): Path<(String, String)>) -> ApiResult<Map> {
    json(&app, move |s| s.get_map(&f, &m)).await
}

artifact_op!(propose_gridlines, propose_gridlines, Map);
artifact_op!(fit_map, fit_map, docmine_core::map::Calibration);
artifact_op!(confirm_calibration, confirm_calibration, Map);

async fn confirm_map_region(State(app): State<AppState>, Caller(u): Caller, Path((f, m)): Path<(String, String)>, Body(b): Body<RegionBody>) -> ApiResult<Map> {
    json(&app, move |s| s.confirm_map_region(&u, &f, &m, b.region)).await
}

async fn edit_gridline(State(app): State<AppState>, Caller(u): Caller, Path((f, m)): Path<(String, String)>, Body(e): Body<GridlineEdit>) -> ApiResult<Map> {
    json(&app, move |s| s.edit_gridline(&u, &f, &m, &e)).await
}

async fn mark_point(State(app): State<AppState>, Caller(u): Caller, Path((f, m)): Path<(String, String)>, Body(p): Body<Point>) -> ApiResult<docmine_core::map::MarkedPoint> {
    json(&app, move |s| s.mark_point(&u, &f, &m, p)).await
}

async fn attach_point(
    State(app): State<AppState>,
    Caller(u): Caller,
    Path((f, m, p)): Path<(String, String, String)>,
    Body(a): Body<AttachBody>,
) -> ApiResult<Map> {
    json(&app, move |s| s.attach_point(&u, &f, &m, &p, a.key.as_deref())).await
}

async fn delete_point(State(app): State<AppState>, Caller(u): Caller, Path((f, m, p)): Path<(String, String, String)>) -> ApiResult<docmine_core::map::MarkedPoint> {
    json(&app, move |s| s.delete_point(&u, &f, &m, &p)).await
}

async fn revert_map(State(app): State<AppState>, Caller(u): Caller, Path((f, m)): Path<(String, String)>, Body(r): Body<MapRevert>) -> ApiResult<Map> {
    json(&app, move |s| s.revert_map(&u, &f, &m, r.stage)).await
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "UnknownRoute", "no such route", None)
}

pub fn router(store: Arc<Store>) -> Router {
    let files = Router::new()
        .route("/mine", get(my_files))
        .route("/recent", get(recent_files))
        .route("/{f}", get(get_file))
        .route("/{f}/open", post(open_file))
        .route("/{f}/pdf", get(file_pdf))
        .route("/{f}/pages", get(pages))
        .route("/{f}/charge", post(take_charge).delete(release_charge))
        .route("/{f}/lock", post(acquire_lock).put(renew_lock).delete(release_lock))
        .route("/{f}/meta", get(get_meta).put(save_meta))
        .route("/{f}/tables", get(list_tables).post(add_table))
        .route("/{f}/tables/detect", post(detect_tables))
        .route("/{f}/tables/{t}", get(get_table))
        .route("/{f}/tables/{t}/confirm-region", post(confirm_table_region))
        .route("/{f}/tables/{t}/structure", post(propose_structure))
        .route("/{f}/tables/{t}/structure/edits", post(edit_structure))
        .route("/{f}/tables/{t}/structure/confirm", post(confirm_structure))
        .route("/{f}/tables/{t}/content", post(propose_content))
        .route("/{f}/tables/{t}/cells", post(edit_cell))
        .route("/{f}/tables/{t}/confirm", post(confirm_table))
        .route("/{f}/tables/{t}/revert", post(revert_table))
        .route("/{f}/tables/{t}/mapping", get(get_mapping).put(set_mapping))
        .route("/{f}/sections", get(sections))
        .route("/{f}/spans", get(list_spans).post(add_span))
        .route("/{f}/spans/reannotate", post(reannotate))
        .route("/{f}/spans/{s}", delete(delete_span))
        .route("/{f}/spans/{s}/link", put(link_span))
        .route("/{f}/maps", get(list_maps).post(add_map))
        .route("/{f}/maps/detect", post(detect_maps))
        .route("/{f}/maps/{m}", get(get_map))
        .route("/{f}/maps/{m}/confirm-region", post(confirm_map_region))
        .route("/{f}/maps/{m}/gridlines", post(propose_gridlines))
        .route("/{f}/maps/{m}/gridlines/edits", post(edit_gridline))
        .route("/{f}/maps/{m}/fit", post(fit_map))
        .route("/{f}/maps/{m}/confirm-calibration", post(confirm_calibration))
        .route("/{f}/maps/{m}/points", post(mark_point))
        .route("/{f}/maps/{m}/points/{p}", put(attach_point).delete(delete_point))
        .route("/{f}/maps/{m}/revert", post(revert_map))
        .route("/{f}/integrate", post(integrate_document))
        .route("/{f}/export", get(export_document))
        .route("/{f}/corrections", get(file_corrections));
    let projects = Router::new()
        .route("/", get(list_projects).post(create_project))
        .route("/{p}", get(get_project))
        .route("/{p}/settings", axum::routing::patch(update_settings))
        .route("/{p}/header/edits", post(edit_header))
        .route("/{p}/header/spreadsheet", post(header_from_spreadsheet))
        .route("/{p}/files", get(list_files).post(upload))
        .route("/{p}/search", get(search))
        .route("/{p}/integrate", post(integrate_project))
        .route("/{p}/export", get(export_project))
        .route("/{p}/corrections", get(export_corrections));
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/api/auth/login", post(login))
        .route("/api/auth/logout", post(logout))
        .route("/api/users", get(list_users).post(add_user))
        .nest("/api/projects", projects)
        .nest("/api/files", files)
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .with_state(AppState { store })
}

/// Serves until Ctrl-C.
pub async fn serve(store: Arc<Store>, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
