use std::collections::BTreeMap;
use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::body::Bytes;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::Json;
use futures::Stream;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use stimkit_core::calibrate::{predict_all, CalibrateError, CalibrationPoint, GroupingMode, GroupingPolicy, PredictionMode};
use stimkit_core::device::{can_realize, execute, ChannelConfig, DeviceError, NoStop, StimCommand};
use stimkit_core::energy::{closed_form_energy, EnergyProfile};
use stimkit_core::signalgen::{synthesize, PreviewPoint, SignalError};
use stimkit_core::study::{
    improvement_report, summarize_naturalness, CalibrationAction, CalibrationSource, ImprovementReport,
    NaturalnessSummary, Phase, SessionRecord, StudyError, TRIAL_COUNT,
};
use stimkit_core::{AmplitudeLadder, Category, Envelope, LevelIndex, PatternSpec};
use tokio_stream::wrappers::BroadcastStream;
use tokio_stream::StreamExt;

use super::store::valid_id;
use super::{AppState, ServerEvent};

pub const MAX_PREVIEW_POINTS: usize = 3000;

// ---- errors ---------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    pub error: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, error: &'static str, message: impl Into<String>) -> Self {
        Self { status, error, message: message.into() }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "state", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::LevelOutOfRange { .. } | StudyError::InvalidRating(_) => Self::validation(e.to_string()),
            StudyError::Invalid(_) | StudyError::Json(_) | StudyError::Io(_) => Self::internal(e.to_string()),
            _ => Self::conflict(e.to_string()),
        }
    }
}

impl From<CalibrateError> for ApiError {
    fn from(e: CalibrateError) -> Self {
        match e {
            CalibrateError::MissingReference(_) => Self::conflict(e.to_string()),
            _ => Self::validation(e.to_string()),
        }
    }
}

impl From<SignalError> for ApiError {
    fn from(e: SignalError) -> Self {
        Self::validation(e.to_string())
    }
}

impl From<DeviceError> for ApiError {
    fn from(e: DeviceError) -> Self {
        Self::validation(e.to_string())
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        Self::internal(format!("persistence failed: {e}"))
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// JSON body whose rejections come back in the API error shape.
pub struct ApiJson<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        Json::<T>::from_request(req, state)
            .await
            .map(|Json(v)| ApiJson(v))
            .map_err(|e: JsonRejection| ApiError::bad_request(e.body_text()))
    }
}

/// Parses a body that may be empty, falling back to the default request.
fn optional_body<T: DeserializeOwned + Default>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

// ---- views ----------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct LevelView {
    pub level: LevelIndex,
    #[serde(rename = "amplitude_mA")]
    pub amplitude_ma: f64,
    pub calibrated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<CalibrationSource>,
}

#[derive(Debug, Serialize)]
pub struct Progress {
    pub completed: usize,
    pub total: usize,
}

/// A session as the UI sees it. The upcoming trial's category is withheld.
#[derive(Debug, Serialize)]
pub struct SessionView {
    pub id: String,
    #[serde(flatten)]
    pub record: SessionRecord,
    pub levels: BTreeMap<Category, LevelView>,
    pub progress: Progress,
    pub next_trial: Option<u32>,
}

impl SessionView {
    pub fn new(id: &str, record: &SessionRecord, ladder: &AmplitudeLadder) -> Self {
        let levels = Category::ALL
            .into_iter()
            .map(|c| {
                let level = record.current_level(c);
                let view = LevelView {
                    level,
                    amplitude_ma: ladder.levels()[level.0],
                    calibrated: record.calibration.contains_key(&c),
                    source: record.calibration_source.get(&c).copied(),
                };
                (c, view)
            })
            .collect();
        Self {
            id: id.to_string(),
            record: record.clone(),
            levels,
            progress: Progress { completed: record.trials.len(), total: TRIAL_COUNT },
            next_trial: record.next_trial().map(|(k, _)| k),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SessionSummaryItem {
    pub id: String,
    pub participant_id: String,
    pub phase: Phase,
}

// ---- helpers --------------------------------------------------------------

fn session(state: &AppState, id: &str) -> ApiResult<Arc<tokio::sync::Mutex<SessionRecord>>> {
    if !valid_id(id) {
        return Err(ApiError::not_found(format!("no session {id}")));
    }
    state.store.get(id).ok_or_else(|| ApiError::not_found(format!("no session {id}")))
}

/// Applies `op` to a copy of the session, persists the copy and only then
/// makes it current, so a failed action or failed write changes nothing.
async fn mutate<R>(
    state: &AppState,
    id: &str,
    op: impl FnOnce(&mut SessionRecord) -> ApiResult<R>,
) -> ApiResult<(R, SessionView)> {
    let handle = session(state, id)?;
    let mut guard = handle.lock().await;
    let mut next = guard.clone();
    let out = op(&mut next)?;
    if next != *guard {
        state.store.persist(id, &next).await?;
        *guard = next;
        state.notify(ServerEvent::session_updated(id, guard.phase));
    }
    Ok((out, SessionView::new(id, &guard, &state.ladder)))
}

// ---- handlers -------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreateSession {
    pub participant_id: Option<String>,
    pub rng_seed: Option<u64>,
}

pub async fn create_session(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let req: CreateSession = optional_body(&body)?;
    let uuid = uuid::Uuid::new_v4();
    let id = uuid.simple().to_string();
    let seed = req.rng_seed.unwrap_or(uuid.as_u128() as u64);
    let participant = req.participant_id.unwrap_or_else(|| format!("P-{}", &id[..8]));
    let record = SessionRecord::new(participant, seed);
    state.store.insert(&id, record.clone()).await?;
    state.notify(ServerEvent::session_updated(&id, record.phase));
    Ok((StatusCode::CREATED, Json(SessionView::new(&id, &record, &state.ladder))))
}

pub async fn list_sessions(State(state): State<Arc<AppState>>) -> Json<Vec<SessionSummaryItem>> {
    let mut out = Vec::new();
    for id in state.store.ids() {
        if let Some(h) = state.store.get(&id) {
            let r = h.lock().await;
            out.push(SessionSummaryItem { id, participant_id: r.participant_id.clone(), phase: r.phase });
        }
    }
    Json(out)
}

pub async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let handle = session(&state, &id)?;
    let r = handle.lock().await;
    Ok(Json(SessionView::new(&id, &r, &state.ladder)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationRequest {
    pub category: Category,
    pub action: CalibrationAction,
}

pub async fn calibration_step(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<CalibrationRequest>,
) -> ApiResult<Json<SessionView>> {
    let ((), view) = mutate(&state, &id, |r| Ok(r.calibration_step(req.category, req.action)?)).await?;
    Ok(Json(view))
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictRequest {
    pub grouping: GroupingMode,
    /// Reference for `single-reference`.
    pub reference: Category,
    pub mode: ModeName,
    /// Matched level for `matched`; defaults to the reference's own level.
    pub x: Option<LevelIndex>,
    /// Write the predictions into the session.
    pub accept: bool,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Mean,
    Matched,
}

impl PredictRequest {
    fn prediction_mode(&self) -> ApiResult<PredictionMode> {
        match (self.mode, self.x) {
            (ModeName::Mean, Some(_)) => Err(ApiError::validation("x only applies to mode \"matched\"")),
            (ModeName::Mean, None) => Ok(PredictionMode::Mean),
            (ModeName::Matched, x) => Ok(PredictionMode::Matched(x)),
        }
    }
}

impl Default for PredictRequest {
    fn default() -> Self {
        Self {
            grouping: GroupingMode::SingleReference,
            reference: Category::Tonic100,
            mode: ModeName::Mean,
            x: None,
            accept: false,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Realizability {
    pub code: u16,
    #[serde(rename = "output_mA")]
    pub output_ma: f64,
    #[serde(rename = "error_mA")]
    pub error_ma: f64,
}

#[derive(Debug, Serialize)]
pub struct PredictionView {
    pub category: Category,
    pub reference: Category,
    #[serde(rename = "predicted_energy_A2s")]
    pub predicted_energy_a2s: f64,
    pub predicted_level: LevelIndex,
    #[serde(rename = "predicted_amplitude_mA")]
    pub predicted_amplitude_ma: f64,
    pub dac: Realizability,
}

#[derive(Debug, Serialize)]
pub struct PredictResponse {
    pub predictions: Vec<PredictionView>,
    pub accepted: usize,
    pub session: SessionView,
}

pub async fn predict(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<PredictResponse>> {
    let req: PredictRequest = optional_body(&body)?;
    let mode = req.prediction_mode()?;
    let policy = match req.grouping {
        GroupingMode::SingleReference => GroupingPolicy::single_reference(req.reference),
        GroupingMode::FrequencyBands => GroupingPolicy::frequency_bands(),
    };
    let profiles = &state.profiles;
    let ladder = &state.ladder;
    let lut = &state.lut;
    let (out, session) = mutate(&state, &id, |r| {
        if r.phase != Phase::Calibration {
            return Err(StudyError::WrongPhase { expected: Phase::Calibration, actual: r.phase }.into());
        }
        let refs = policy
            .references()
            .into_iter()
            .map(|c| {
                let level = r.calibration.get(&c).ok_or(CalibrateError::MissingReference(c))?;
                let profile = profiles.get(c).ok_or(CalibrateError::MissingProfile(c))?;
                Ok(CalibrationPoint::from_profile(profile, *level)?)
            })
            .collect::<ApiResult<Vec<_>>>()?;
        let preds = predict_all(&refs, profiles, &policy, mode)?;
        let uncalibrated = r.uncalibrated();
        let mut views = Vec::new();
        for c in &uncalibrated {
            let p = &preds[c];
            let amp = ladder.levels()[p.predicted_level.0];
            let real = can_realize(amp, lut)?;
            views.push(PredictionView {
                category: *c,
                reference: p.reference_used,
                predicted_energy_a2s: p.predicted_energy.a2s(),
                predicted_level: p.predicted_level,
                predicted_amplitude_ma: amp,
                dac: Realizability { code: real.code, output_ma: real.output_ma, error_ma: real.error_ma },
            });
        }
        let accepted = if req.accept {
            let levels: BTreeMap<Category, LevelIndex> = views.iter().map(|v| (v.category, v.predicted_level)).collect();
            r.accept_predictions(&levels)?
        } else {
            0
        };
        Ok((views, accepted))
    })
    .await?;
    Ok(Json(PredictResponse { predictions: out.0, accepted: out.1, session }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatingRequest {
    pub rating: u8,
}

pub async fn rate_trial(
    State(state): State<Arc<AppState>>,
    Path((id, k)): Path<(String, u32)>,
    ApiJson(req): ApiJson<RatingRequest>,
) -> ApiResult<Json<SessionView>> {
    let ((), view) = mutate(&state, &id, |r| Ok(r.rate(k, req.rating)?)).await?;
    Ok(Json(view))
}

#[derive(Debug, Serialize)]
pub struct SummaryResponse {
    pub summary: NaturalnessSummary,
    pub report: ImprovementReport,
}

pub async fn session_summary(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<SummaryResponse>> {
    let record = session(&state, &id)?.lock().await.clone();
    let summary = summarize_naturalness(std::slice::from_ref(&record))?;
    let report = improvement_report(&summary)?;
    Ok(Json(SummaryResponse { summary, report }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlayRequest {
    /// Category to play during calibration; ignored during evaluation.
    pub category: Option<Category>,
    /// Ladder level; defaults to the level currently offered.
    pub level: Option<LevelIndex>,
}

#[derive(Debug, Serialize)]
pub struct PlayResponse {
    /// Withheld during evaluation so the participant stays blind.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trial: Option<u32>,
    pub pulses: usize,
    pub duration_s: f64,
    #[serde(rename = "energy_A2s")]
    pub energy_a2s: f64,
}

/// Plays a stimulation on the virtual device: the chosen category during
/// calibration, the upcoming trial during evaluation.
pub async fn play(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<PlayResponse>> {
    let req: PlayRequest = optional_body(&body)?;
    let record = session(&state, &id)?.lock().await.clone();
    let (category, level, trial) = match record.phase {
        Phase::Calibration => {
            let c = req.category.ok_or_else(|| ApiError::validation("category is required during calibration"))?;
            (c, req.level.unwrap_or_else(|| record.current_level(c)), None)
        }
        Phase::Evaluation => {
            let (k, c) = record.next_trial().expect("evaluation has a next trial");
            (c, record.calibration[&c], Some(k))
        }
        Phase::Done => return Err(ApiError::conflict("session is done")),
    };
    let spec = PatternSpec::at_level(category, &state.ladder, level)?;
    let cmd = StimCommand::from_pattern(&spec, &state.lut, ChannelConfig::experiment_default())?;
    state.notify(ServerEvent::stimulation(&id, "stimulation_started", trial));
    let lut = state.lut.clone();
    let rate = state.sample_rate_hz;
    let exec = tokio::task::spawn_blocking(move || execute::<f64, _>(&cmd, &lut, rate, &NoStop))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    state.notify(ServerEvent::stimulation(&id, "stimulation_finished", trial));
    Ok(Json(PlayResponse {
        category: trial.is_none().then_some(category),
        trial,
        pulses: exec.signal.pulse_count(),
        duration_s: exec.signal.duration_s(),
        energy_a2s: stimkit_core::energy::signal_energy(&exec.signal).a2s(),
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreviewQuery {
    pub category: Category,
    pub level: usize,
    pub points: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct PreviewResponse {
    pub category: Category,
    pub level: LevelIndex,
    #[serde(rename = "amplitude_mA")]
    pub amplitude_ma: f64,
    pub sample_rate_hz: u32,
    pub duration_s: f64,
    pub pulse_count: usize,
    #[serde(rename = "energy_A2s")]
    pub energy_a2s: f64,
    pub frequency_hz: Envelope,
    #[serde(rename = "amplitude_envelope_mA")]
    pub amplitude_envelope_ma: Envelope,
    pub points: Vec<PreviewPoint<f64>>,
}

pub async fn preview(
    State(state): State<Arc<AppState>>,
    query: Result<Query<PreviewQuery>, QueryRejection>,
) -> ApiResult<Json<PreviewResponse>> {
    let Query(q) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let points = q.points.unwrap_or(MAX_PREVIEW_POINTS);
    if points == 0 || points > MAX_PREVIEW_POINTS {
        return Err(ApiError::validation(format!("points must be in 1..={MAX_PREVIEW_POINTS}")));
    }
    let spec = PatternSpec::at_level(q.category, &state.ladder, LevelIndex(q.level))?;
    let rate = state.sample_rate_hz;
    let sig = tokio::task::spawn_blocking(move || synthesize(&spec, rate))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(PreviewResponse {
        category: q.category,
        level: LevelIndex(q.level),
        amplitude_ma: spec.amplitude_ma,
        sample_rate_hz: rate,
        duration_s: sig.duration_s(),
        pulse_count: sig.pulse_count(),
        energy_a2s: closed_form_energy(&spec)?.a2s(),
        frequency_hz: spec.frequency_envelope()?,
        amplitude_envelope_ma: spec.amplitude_envelope()?,
        points: sig.downsample_peak(points),
    }))
}

#[derive(Debug, Serialize)]
pub struct ProfilesResponse {
    #[serde(rename = "ladder_mA")]
    pub ladder_ma: Vec<f64>,
    pub profiles: BTreeMap<Category, EnergyProfile<f64>>,
}

pub async fn profiles(State(state): State<Arc<AppState>>) -> Json<ProfilesResponse> {
    Json(ProfilesResponse {
        ladder_ma: state.ladder.levels().to_vec(),
        profiles: state.profiles.iter().map(|(c, p)| (*c, p.clone())).collect(),
    })
}

pub async fn events(State(state): State<Arc<AppState>>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let stream = BroadcastStream::new(state.events.subscribe()).filter_map(|msg| {
        let ev = msg.ok()?;
        Some(Ok(Event::default().event(ev.kind).json_data(&ev).ok()?))
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}

pub async fn health() -> &'static str {
    "ok"
}
