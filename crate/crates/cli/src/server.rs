//! HTTP front end of the game service. Bodies are JSON; every request
//! carries `Authorization: Bearer <token>` with an occupant or admin token.
//!
//! | method | path             | who      | body                        |
//! |--------|------------------|----------|-----------------------------|
//! | POST   | `/login`         | occupant |                             |
//! | POST   | `/vote`          | occupant | `{"value": 35.0}`           |
//! | GET    | `/state`         | any      |                             |
//! | GET    | `/points`        | any      |                             |
//! | POST   | `/admin/default` | admin    | `{"level": 60.0}`           |
//! | POST   | `/admin/lottery` | admin    | `{"seed": 7, "reset": true}`|
//! | POST   | `/admin/award`   | admin    |                             |
//! | GET    | `/export`        | admin    | CSV vote log in the reply   |

use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, FixedOffset, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use socialgame::service::{GameService, Principal, ServiceConfig, ServiceError};

use crate::inputs::{read_to_string, require_file};
use crate::{CliError, ServeArgs};

pub type Clock = Arc<dyn Fn() -> DateTime<FixedOffset> + Send + Sync>;

pub fn system_clock(tz: Tz) -> Clock {
    Arc::new(move || Utc::now().with_timezone(&tz).fixed_offset())
}

#[derive(Clone)]
struct App {
    service: Arc<GameService>,
    clock: Clock,
    /// Mutations read the clock while holding this, so timestamps follow
    /// commit order.
    writer: Arc<Mutex<()>>,
}

impl App {
    async fn mutate<T: Send + 'static>(
        &self,
        f: impl FnOnce(&GameService, DateTime<FixedOffset>) -> Result<T, ServiceError> + Send + 'static,
    ) -> Result<T, ApiError> {
        let app = self.clone();
        tokio::task::spawn_blocking(move || {
            let _gate = app.writer.lock().unwrap_or_else(|p| p.into_inner());
            f(&app.service, (app.clock)())
        })
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(ApiError::Service)
    }

    fn principal(&self, headers: &HeaderMap) -> Result<Principal, ApiError> {
        let token = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or(ApiError::Service(ServiceError::Unauthorized))?;
        self.service.authenticate(token.trim()).map_err(ApiError::Service)
    }
}

enum ApiError {
    Service(ServiceError),
    Internal(String),
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, msg) = match self {
            ApiError::Service(e) => {
                let status = match e {
                    ServiceError::Unauthorized => StatusCode::UNAUTHORIZED,
                    ServiceError::Forbidden => StatusCode::FORBIDDEN,
                    ServiceError::UnknownOccupant(_) => StatusCode::NOT_FOUND,
                    ServiceError::VoteRange(_) => StatusCode::UNPROCESSABLE_ENTITY,
                    ServiceError::NotPresent(_) | ServiceError::NoPoints | ServiceError::ClockSkew { .. } => {
                        StatusCode::CONFLICT
                    }
                    ServiceError::Config(_) | ServiceError::Log(_) => StatusCode::INTERNAL_SERVER_ERROR,
                };
                (status, e.to_string())
            }
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        if status.is_server_error() {
            log::error!("{msg}");
        }
        (status, Json(ErrorBody { error: msg })).into_response()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VoteBody {
    value: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DefaultBody {
    level: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LotteryBody {
    seed: u64,
    #[serde(default)]
    reset: bool,
}

#[derive(Serialize)]
struct PointsEntry {
    id: String,
    points: f64,
}

pub fn router(service: Arc<GameService>, clock: Clock) -> Router {
    let app = App {
        service,
        clock,
        writer: Arc::new(Mutex::new(())),
    };
    Router::new()
        .route("/login", post(login))
        .route("/vote", post(vote))
        .route("/state", get(state))
        .route("/points", get(points))
        .route("/admin/default", post(set_default))
        .route("/admin/lottery", post(lottery))
        .route("/admin/award", post(award))
        .route("/export", get(export))
        .with_state(app)
}

async fn login(State(app): State<App>, headers: HeaderMap) -> Result<impl IntoResponse, ApiError> {
    let who = app.principal(&headers)?;
    Ok(Json(app.mutate(move |s, at| s.login(&who, at)).await?))
}

async fn vote(State(app): State<App>, headers: HeaderMap, Json(body): Json<VoteBody>) -> Result<impl IntoResponse, ApiError> {
    let who = app.principal(&headers)?;
    Ok(Json(app.mutate(move |s, at| s.cast_vote(&who, body.value, at)).await?))
}

async fn state(State(app): State<App>, headers: HeaderMap) -> Result<impl IntoResponse, ApiError> {
    app.principal(&headers)?;
    Ok(Json(app.service.state()))
}

async fn points(State(app): State<App>, headers: HeaderMap) -> Result<impl IntoResponse, ApiError> {
    app.principal(&headers)?;
    let list: Vec<PointsEntry> = app
        .service
        .points()
        .into_iter()
        .map(|(id, points)| PointsEntry { id, points })
        .collect();
    Ok(Json(list))
}

async fn set_default(
    State(app): State<App>,
    headers: HeaderMap,
    Json(body): Json<DefaultBody>,
) -> Result<impl IntoResponse, ApiError> {
    let who = app.principal(&headers)?;
    Ok(Json(app.mutate(move |s, at| s.set_default(&who, body.level, at)).await?))
}

async fn lottery(
    State(app): State<App>,
    headers: HeaderMap,
    Json(body): Json<LotteryBody>,
) -> Result<impl IntoResponse, ApiError> {
    let who = app.principal(&headers)?;
    Ok(Json(app.mutate(move |s, at| s.draw_lottery(&who, body.seed, body.reset, at)).await?))
}

async fn award(State(app): State<App>, headers: HeaderMap) -> Result<impl IntoResponse, ApiError> {
    let who = app.principal(&headers)?;
    Ok(Json(app.mutate(move |s, at| s.award(&who, at)).await?))
}

async fn export(State(app): State<App>, headers: HeaderMap) -> Result<impl IntoResponse, ApiError> {
    if app.principal(&headers)? != Principal::Admin {
        return Err(ApiError::Service(ServiceError::Forbidden));
    }
    let mut body = Vec::new();
    app.service
        .export_log(&mut body)
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body))
}

pub fn load_config(path: &std::path::Path) -> Result<ServiceConfig, CliError> {
    require_file(path)?;
    let text = read_to_string(path)?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn run(a: &ServeArgs) -> Result<(), CliError> {
    let cfg = load_config(&a.config)?;
    let rules = cfg.rules().map_err(|e| CliError::Usage(e.to_string()))?;
    let service = GameService::open(&cfg, &a.log).map_err(|e| match e {
        ServiceError::Config(_) => CliError::Usage(e.to_string()),
        _ => CliError::Data(e.to_string()),
    })?;
    let app = router(Arc::new(service), system_clock(rules.tz));
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Data(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(a.addr)
            .await
            .map_err(|e| CliError::Usage(format!("{}: {e}", a.addr)))?;
        eprintln!("listening on {}", a.addr);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Data(e.to_string()))
    })
}
