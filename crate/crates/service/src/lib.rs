//! HTTP API over synthesis, exact path evaluation and dataset statistics.
//!
//! All state is built once at startup and shared read-only between
//! requests. Errors are rendered as `{"error": {"code", "message"}}`.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use linksynth::cgan::{self, Generator};
use linksynth::conditions::{self, EtaProfile};
use linksynth::dataset::Interval;
use linksynth::kinematics::Vec2;
use linksynth::{Dataset, Error, Linkage, Normalizer};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

mod error;
pub mod stats;

pub use error::ApiError;
pub use stats::DatasetStats;

pub const MAX_CANDIDATES: u64 = 1000;
pub const MIN_PATH_STEPS: usize = 8;
pub const MAX_PATH_STEPS: usize = 100_000;
/// Targets further than this fraction of the observed range outside it are refused.
pub const HULL_TOLERANCE: f64 = 0.2;

pub struct Model {
    pub generator: Generator,
    pub normalizer: Normalizer,
}

pub struct AppState {
    pub model: Option<Model>,
    pub stats: Option<DatasetStats>,
    /// Crank resolution for candidate evaluation and the default path resolution.
    pub n_steps: usize,
}

impl AppState {
    pub fn new(model: Option<Model>, dataset: Option<&Dataset>) -> Self {
        let stats = dataset.and_then(|d| DatasetStats::from_dataset(d, stats::DEFAULT_BINS));
        Self { model, stats, n_steps: linksynth::DEFAULT_STEPS }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/synthesize", post(synthesize))
        .route("/api/path", get(path))
        .route("/api/dataset/stats", get(dataset_stats))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn polyline(points: &[Vec2]) -> Vec<[f64; 2]> {
    points.iter().map(|p| [round6(p.x), round6(p.y)]).collect()
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisRequest {
    pub d_t: f64,
    pub eta_t: f64,
    pub n: u64,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaProfileBody {
    pub eta: Vec<f64>,
    /// Path indices of the two points realizing `d_max`.
    pub split: [usize; 2],
    pub arc_minima: [Option<f64>; 2],
}

impl From<&EtaProfile> for EtaProfileBody {
    fn from(p: &EtaProfile) -> Self {
        Self {
            eta: p.eta.iter().map(|&v| round6(v)).collect(),
            split: [p.split.0, p.split.1],
            arc_minima: [p.arc_minima.0, p.arc_minima.1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub index: usize,
    pub linkage: Linkage,
    pub valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_profile: Option<EtaProfileBody>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violation: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResponse {
    pub d_t: f64,
    pub eta_t: f64,
    pub seed: u64,
    pub n_steps: usize,
    pub warnings: Vec<String>,
    pub candidates: Vec<Candidate>,
}

/// How far each condition lies outside `bounds`, as a fraction of the range width.
pub fn hull_excess(bounds: &[Interval; 2], conditions: [f64; 2]) -> [f64; 2] {
    std::array::from_fn(|k| {
        let b = bounds[k];
        let outside = (b.min - conditions[k]).max(conditions[k] - b.max).max(0.0);
        if outside == 0.0 {
            0.0
        } else if b.width() > 0.0 {
            outside / b.width()
        } else {
            f64::INFINITY
        }
    })
}

fn parse_synthesis(body: &[u8]) -> Result<SynthesisRequest, ApiError> {
    let req: SynthesisRequest =
        serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request: {e}")))?;
    if req.n == 0 || req.n > MAX_CANDIDATES {
        return Err(ApiError::bad_request(format!("n must be between 1 and {MAX_CANDIDATES}")));
    }
    for (name, v) in [("d_t", req.d_t), ("eta_t", req.eta_t)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(ApiError::bad_request(format!("{name} must be finite and positive")));
        }
    }
    Ok(req)
}

fn candidate(index: usize, linkage: Linkage, n_steps: usize) -> Candidate {
    let mut c = Candidate {
        index,
        linkage,
        valid: false,
        d_r: None,
        eta_r: None,
        path: None,
        eta_profile: None,
        violation: None,
    };
    match conditions::evaluate_detailed(&linkage, n_steps) {
        Ok((cond, path, profile)) => {
            c.valid = true;
            c.d_r = Some(cond.d_max);
            c.eta_r = Some(cond.eta_min);
            c.path = Some(polyline(&path.points));
            c.eta_profile = Some((&profile).into());
        }
        Err(e) => c.violation = Some(e.to_string()),
    }
    c
}

async fn synthesize(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<SynthesisResponse>, ApiError> {
    let req = parse_synthesis(&body)?;
    if state.model.is_none() {
        return Err(ApiError::unavailable("no generator checkpoint was loaded"));
    }
    let bounds = state.model.as_ref().map(|m| m.normalizer.condition_bounds).expect("checked above");
    let excess = hull_excess(&bounds, [req.d_t, req.eta_t]);
    let mut warnings = Vec::new();
    for (name, e, b) in [("d_t", excess[0], bounds[0]), ("eta_t", excess[1], bounds[1])] {
        if e > HULL_TOLERANCE {
            return Err(ApiError::unprocessable(
                "out_of_range",
                format!("{name} is outside the observed range [{}, {}] by more than 20%", b.min, b.max),
            ));
        }
        if e > 0.0 {
            warnings.push(format!("{name} is outside the observed range [{}, {}]", b.min, b.max));
        }
    }
    let seed = req.seed.unwrap_or(0);
    let n_steps = state.n_steps;
    let shared = Arc::clone(&state);
    let candidates = tokio::task::spawn_blocking(move || {
        let model = shared.model.as_ref().expect("checked above");
        let targets = vec![[req.d_t, req.eta_t]; req.n as usize];
        let linkages = cgan::synthesize(&model.generator, &model.normalizer, &targets, seed);
        linkages.into_iter().enumerate().map(|(i, l)| candidate(i, l, n_steps)).collect::<Vec<_>>()
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(SynthesisResponse { d_t: req.d_t, eta_t: req.eta_t, seed, n_steps, warnings, candidates }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathResponse {
    pub linkage: Linkage,
    pub steps: usize,
    pub d_max: f64,
    pub eta_min: f64,
    /// End-effector polyline.
    pub path: Vec<[f64; 2]>,
    /// Crank pin `B` per step.
    pub crank: Vec<[f64; 2]>,
    /// Coupler-rocker joint `C` per step.
    pub rocker: Vec<[f64; 2]>,
    pub eta_profile: EtaProfileBody,
}

fn query_f64(q: &HashMap<String, String>, key: &str) -> Result<f64, ApiError> {
    let raw = q.get(key).ok_or_else(|| ApiError::bad_request(format!("missing parameter {key}")))?;
    let v: f64 = raw.parse().map_err(|_| ApiError::bad_request(format!("{key} is not a number")))?;
    if !v.is_finite() {
        return Err(ApiError::bad_request(format!("{key} must be finite")));
    }
    Ok(v)
}

fn compute_path(linkage: Linkage, steps: usize) -> Result<PathResponse, ApiError> {
    let (cond, path, profile) = conditions::evaluate_detailed(&linkage, steps).map_err(|e| match e {
        Error::InvalidLinkage(v) => ApiError::unprocessable("invalid_linkage", v.to_string()),
        other => ApiError::unprocessable("no_assembly", other.to_string()),
    })?;
    let crank: Vec<Vec2> =
        path.theta.iter().map(|t| Vec2::new(linkage.l2 * t.cos(), linkage.l2 * t.sin())).collect();
    Ok(PathResponse {
        linkage,
        steps,
        d_max: cond.d_max,
        eta_min: cond.eta_min,
        path: polyline(&path.points),
        crank: polyline(&crank),
        rocker: polyline(&path.joints),
        eta_profile: (&profile).into(),
    })
}

async fn path(
    State(state): State<Arc<AppState>>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Json<PathResponse>, ApiError> {
    let linkage = Linkage::new(
        query_f64(&q, "l2")?,
        query_f64(&q, "l3")?,
        query_f64(&q, "l4")?,
        query_f64(&q, "ee_x")?,
        query_f64(&q, "ee_y")?,
    );
    let steps = match q.get("steps") {
        None => state.n_steps,
        Some(raw) => raw.parse().map_err(|_| ApiError::bad_request("steps must be a positive integer"))?,
    };
    if !(MIN_PATH_STEPS..=MAX_PATH_STEPS).contains(&steps) {
        return Err(ApiError::bad_request(format!(
            "steps must be between {MIN_PATH_STEPS} and {MAX_PATH_STEPS}"
        )));
    }
    let body = tokio::task::spawn_blocking(move || compute_path(linkage, steps))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(body))
}

async fn dataset_stats(State(state): State<Arc<AppState>>) -> Result<Json<DatasetStats>, ApiError> {
    state.stats.clone().map(Json).ok_or_else(|| ApiError::not_found("no dataset loaded or the dataset is empty"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_excess_fractions() {
        let b = [Interval::new(0.0, 2.0), Interval::new(1.0, 3.0)];
        assert_eq!(hull_excess(&b, [1.0, 2.0]), [0.0, 0.0]);
        assert_eq!(hull_excess(&b, [2.5, 0.5]), [0.25, 0.25]);
        assert_eq!(hull_excess(&[Interval::new(1.0, 1.0); 2], [1.0, 2.0]), [0.0, f64::INFINITY]);
    }

    #[test]
    fn request_validation() {
        assert!(parse_synthesis(br#"{"d_t":1.0,"eta_t":0.5,"n":3}"#).is_ok());
        for bad in [
            &br#"{"d_t":1.0,"eta_t":0.5,"n":0}"#[..],
            br#"{"d_t":1.0,"eta_t":0.5,"n":1001}"#,
            br#"{"d_t":-1.0,"eta_t":0.5,"n":3}"#,
            br#"{"d_t":1.0,"n":3}"#,
            br#"{"d_t":1.0,"eta_t":0.5,"n":-2}"#,
            b"not json",
        ] {
            assert_eq!(parse_synthesis(bad).unwrap_err().status, axum::http::StatusCode::BAD_REQUEST);
        }
    }

    #[test]
    fn rounding() {
        assert_eq!(round6(0.123_456_789), 0.123457);
        assert_eq!(round6(-1.000_000_4), -1.0);
    }
}
