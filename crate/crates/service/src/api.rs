//! Transport-independent request handling. The HTTP layer is a thin wrapper
//! that turns requests into [`ApiRequest`] and back.

use std::collections::HashMap;
use std::net::IpAddr;
use std::time::{Duration, Instant};

use journeys_core::engagement::{mode_summary, HaikuCorpus, WelcomeEngine};
use journeys_core::geo::GeoPoint;
use journeys_core::identity::{register_user, ApiToken, Lexicon, UserRecord};
use journeys_core::ids::{JourneyId, NoteId, UserId};
use journeys_core::journeys::{check_in, current, journey_history, CheckinRequest, CheckinTarget, TransitMode};
use journeys_core::notes::{
    add_comment, compose_note, journey_feed, note_detail, note_view, CommentView, NoteCategory, ANONYMOUS,
};
use journeys_core::store::Store;
use journeys_core::Error;
use parking_lot::Mutex;
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error as ThisError;

use crate::config::Config;
use crate::geocoder::{suggest_endpoints, FixtureGeocoder, GeocoderAdapter};
use crate::report::mode_share_report;
use crate::seed::{ingest_seed_notes, SHIPPED_SEED};

#[derive(Debug, Clone, Default)]
pub struct ApiRequest {
    pub method: String,
    /// Path without the query string, e.g. `/notes/12`.
    pub path: String,
    pub query: HashMap<String, String>,
    /// Bearer token, if the client sent one.
    pub token: Option<String>,
    pub peer: Option<IpAddr>,
    pub body: Vec<u8>,
}

impl ApiRequest {
    pub fn get(path: &str) -> Self {
        ApiRequest {
            method: "GET".into(),
            path: path.into(),
            ..Default::default()
        }
    }

    pub fn post(path: &str, body: Value) -> Self {
        ApiRequest {
            method: "POST".into(),
            path: path.into(),
            body: body.to_string().into_bytes(),
            ..Default::default()
        }
    }

    pub fn token(mut self, token: &str) -> Self {
        self.token = Some(token.into());
        self
    }

    pub fn query(mut self, key: &str, value: impl ToString) -> Self {
        self.query.insert(key.into(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiResponse {
    pub status: u16,
    pub body: Value,
    /// Seconds, set on 429.
    pub retry_after: Option<u64>,
}

impl ApiResponse {
    fn ok(body: Value) -> Self {
        ApiResponse {
            status: 200,
            body,
            retry_after: None,
        }
    }

    pub fn error_code(&self) -> Option<&str> {
        self.body.pointer("/error/code").and_then(Value::as_str)
    }
}

#[derive(Debug, ThisError)]
pub enum ApiError {
    #[error("missing or unknown api token")]
    Unauthorized,
    #[error("admin token required")]
    Forbidden,
    #[error("no such route")]
    NoRoute,
    #[error("method not allowed")]
    MethodNotAllowed,
    #[error("{0}")]
    BadRequest(String),
    #[error("too many requests; retry in {0} s")]
    RateLimited(u64),
    #[error(transparent)]
    Domain(#[from] Error),
}

impl ApiError {
    pub fn status_and_code(&self) -> (u16, &'static str) {
        match self {
            ApiError::Unauthorized => (401, "unauthorized"),
            ApiError::Forbidden => (403, "forbidden"),
            ApiError::NoRoute => (404, "not_found"),
            ApiError::MethodNotAllowed => (405, "method_not_allowed"),
            ApiError::BadRequest(_) => (400, "invalid_request"),
            ApiError::RateLimited(_) => (429, "rate_limited"),
            ApiError::Domain(e) => match e {
                Error::Invalid { .. } | Error::Geo(_) => (400, "invalid_request"),
                Error::NotFound(_) => (404, "not_found"),
                Error::NoCurrentCheckin => (409, "no_current_checkin"),
                Error::PseudonymTaken(_) => (409, "pseudonym_taken"),
                Error::NamespaceExhausted(_) => (503, "namespace_exhausted"),
                Error::Journal(_) | Error::CorruptJournal { .. } => (500, "storage_error"),
                Error::Lexicon(_) => (500, "internal_error"),
            },
        }
    }

    fn into_response(self) -> ApiResponse {
        let (status, code) = self.status_and_code();
        let message = match &self {
            ApiError::Domain(Error::Journal(_) | Error::CorruptJournal { .. }) => "storage unavailable".to_owned(),
            other => other.to_string(),
        };
        ApiResponse {
            status,
            body: json!({ "error": { "code": code, "message": message } }),
            retry_after: match self {
                ApiError::RateLimited(s) => Some(s),
                _ => None,
            },
        }
    }
}

type ApiResult = Result<Value, ApiError>;

/// Fixed-window request counter per key.
pub struct RateLimiter {
    limit: u32,
    window: Duration,
    buckets: Mutex<HashMap<String, (Instant, u32)>>,
}

impl RateLimiter {
    const PRUNE_AT: usize = 10_000;

    /// `limit` requests per `window`; a zero limit never throttles.
    pub fn new(limit: u32, window: Duration) -> Self {
        RateLimiter {
            limit,
            window,
            buckets: Mutex::new(HashMap::new()),
        }
    }

    pub fn check(&self, key: &str, now: Instant) -> Result<(), ApiError> {
        if self.limit == 0 {
            return Ok(());
        }
        let mut buckets = self.buckets.lock();
        if buckets.len() >= Self::PRUNE_AT {
            let window = self.window;
            buckets.retain(|_, (start, _)| now.duration_since(*start) < window);
        }
        let (start, count) = buckets.entry(key.to_owned()).or_insert((now, 0));
        if now.duration_since(*start) >= self.window {
            *start = now;
            *count = 0;
        }
        if *count >= self.limit {
            let left = self.window.saturating_sub(now.duration_since(*start));
            return Err(ApiError::RateLimited(left.as_secs().max(1)));
        }
        *count += 1;
        Ok(())
    }
}

#[derive(Debug, ThisError)]
pub enum StartupError {
    #[error("opening store: {0}")]
    Store(#[from] Error),
    #[error("loading geocoder fixture: {0}")]
    Geocoder(#[from] std::io::Error),
}

pub struct Api {
    store: Store,
    lexicon: Lexicon,
    welcome: WelcomeEngine,
    geocoder: Box<dyn GeocoderAdapter>,
    rng: Mutex<StdRng>,
    limiter: RateLimiter,
    admin_token: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckinBody {
    origin: Option<GeoPoint>,
    destination: Option<GeoPoint>,
    origin_label: Option<String>,
    destination_label: Option<String>,
    previous_journey_id: Option<JourneyId>,
    mode: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoteBody {
    text: String,
    category: Option<String>,
    #[serde(default)]
    anonymous: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CommentBody {
    text: String,
    #[serde(default)]
    anonymous: bool,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SeedBody {
    /// Line-delimited seed records; the built-in set when absent.
    jsonl: Option<String>,
}

fn body<T: DeserializeOwned>(req: &ApiRequest) -> Result<T, ApiError> {
    serde_json::from_slice(&req.body).map_err(|e| ApiError::BadRequest(format!("body: {e}")))
}

fn to_json(v: impl serde::Serialize) -> ApiResult {
    Ok(serde_json::to_value(v).expect("responses serialize"))
}

fn parse_id(raw: &str) -> Result<NoteId, ApiError> {
    raw.parse().map_err(|_| ApiError::NoRoute)
}

fn query_f64(req: &ApiRequest, key: &str) -> Result<f64, ApiError> {
    req.query
        .get(key)
        .ok_or_else(|| ApiError::BadRequest(format!("query parameter {key} is required")))?
        .parse()
        .map_err(|_| ApiError::BadRequest(format!("query parameter {key} must be a number")))
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

impl Api {
    pub fn new(store: Store, geocoder: Box<dyn GeocoderAdapter>, config: &Config) -> Self {
        let mut welcome = WelcomeEngine::new(HaikuCorpus::shipped());
        welcome.bird_speed_mps = config.welcome.bird_speed_mps;
        welcome.units = config.welcome.units;
        let rng = match config.rng_seed {
            Some(seed) => StdRng::seed_from_u64(seed),
            None => StdRng::from_os_rng(),
        };
        Api {
            store,
            lexicon: Lexicon::shipped(),
            welcome,
            geocoder,
            rng: Mutex::new(rng),
            limiter: RateLimiter::new(config.server.writes_per_minute, Duration::from_secs(60)),
            admin_token: config.server.admin_token.clone(),
        }
    }

    pub fn from_config(config: &Config) -> Result<Self, StartupError> {
        let store = match &config.store.path {
            Some(path) => Store::open(path, config.policy())?,
            None => Store::in_memory(config.policy()),
        };
        let geocoder = match &config.geocoder_fixture {
            Some(path) => FixtureGeocoder::from_file(path)?,
            None => FixtureGeocoder::shipped(),
        };
        Ok(Api::new(store, Box::new(geocoder), config))
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn dispatch(&self, req: &ApiRequest) -> ApiResponse {
        match self.route(req) {
            Ok(body) => ApiResponse::ok(body),
            Err(e) => e.into_response(),
        }
    }

    fn route(&self, req: &ApiRequest) -> ApiResult {
        let segments: Vec<&str> = req.path.trim_matches('/').split('/').collect();
        let post = match req.method.as_str() {
            "GET" => false,
            "POST" => true,
            _ => return Err(self.no_route_or_method(&segments)),
        };
        if post {
            let key = match (&req.token, req.peer) {
                (Some(t), _) => format!("token:{t}"),
                (None, Some(ip)) => format!("peer:{ip}"),
                (None, None) => "peer:unknown".to_owned(),
            };
            self.limiter.check(&key, Instant::now())?;
        }
        match (post, segments.as_slice()) {
            (true, ["users"]) => self.register(),
            (false, ["suggest"]) => self.suggest(req),
            (true, ["checkins"]) => self.check_in(req),
            (false, ["me", "current"]) => self.current(req),
            (false, ["me", "journeys"]) => self.journeys(req),
            (false, ["me", "stats"]) => self.stats(req),
            (false, ["journey", "feed"]) => self.feed(req),
            (true, ["notes"]) => self.compose(req),
            (false, ["notes", id]) => self.note(req, parse_id(id)?),
            (true, ["notes", id, "comments"]) => self.comment(req, parse_id(id)?),
            (true, ["admin", "seed"]) => self.seed(req),
            (false, ["admin", "reports", "mode-share"]) => self.mode_share(req),
            _ => Err(self.no_route_or_method(&segments)),
        }
    }

    fn no_route_or_method(&self, segments: &[&str]) -> ApiError {
        let known = matches!(
            segments,
            ["users"]
                | ["suggest"]
                | ["checkins"]
                | ["me", "current" | "journeys" | "stats"]
                | ["journey", "feed"]
                | ["notes"]
                | ["notes", _]
                | ["notes", _, "comments"]
                | ["admin", "seed"]
                | ["admin", "reports", "mode-share"]
        );
        if known {
            ApiError::MethodNotAllowed
        } else {
            ApiError::NoRoute
        }
    }

    fn authenticate(&self, req: &ApiRequest) -> Result<UserRecord, ApiError> {
        let token = req.token.as_deref().ok_or(ApiError::Unauthorized)?;
        let token = ApiToken::from_header(token);
        self.store
            .read(|s| s.user_by_token(&token).filter(|u| !u.synthetic).cloned())
            .ok_or(ApiError::Unauthorized)
    }

    fn authenticate_admin(&self, req: &ApiRequest) -> Result<(), ApiError> {
        let expected = self.admin_token.as_deref().ok_or(ApiError::Forbidden)?;
        let given = req.token.as_deref().ok_or(ApiError::Unauthorized)?;
        if constant_time_eq(given.as_bytes(), expected.as_bytes()) {
            Ok(())
        } else {
            Err(ApiError::Forbidden)
        }
    }

    fn register(&self) -> ApiResult {
        let reg = register_user(&self.store, &self.lexicon, &mut *self.rng.lock())?;
        Ok(json!({
            "user_id": reg.user.id,
            "pseudonym": reg.user.pseudonym,
            "token": reg.user.token.as_str(),
        }))
    }

    fn suggest(&self, req: &ApiRequest) -> ApiResult {
        self.authenticate(req)?;
        let near = GeoPoint::new(query_f64(req, "lat")?, query_f64(req, "lng")?).map_err(Error::from)?;
        let q = req.query.get("q").map_or("", String::as_str);
        to_json(suggest_endpoints(q, near, self.geocoder.as_ref()))
    }

    fn check_in(&self, req: &ApiRequest) -> ApiResult {
        let user = self.authenticate(req)?;
        let b: CheckinBody = body(req)?;
        let mode: TransitMode = b.mode.parse()?;
        let target = CheckinTarget::from_parts(
            b.origin,
            b.destination,
            b.origin_label,
            b.destination_label,
            b.previous_journey_id,
        )?;
        let result = check_in(
            &self.store,
            user.id,
            CheckinRequest { target, mode },
            &self.welcome,
            &mut *self.rng.lock(),
        )?;
        to_json(result)
    }

    fn current(&self, req: &ApiRequest) -> ApiResult {
        let user = self.authenticate(req)?;
        let (checkin, journey) = current(&self.store, user.id).ok_or(Error::NoCurrentCheckin)?;
        Ok(json!({ "checkin": checkin, "journey": journey }))
    }

    fn journeys(&self, req: &ApiRequest) -> ApiResult {
        let user = self.authenticate(req)?;
        Ok(json!({ "journeys": journey_history(&self.store, user.id) }))
    }

    fn stats(&self, req: &ApiRequest) -> ApiResult {
        let user = self.authenticate(req)?;
        let stats = self.store.read(|s| s.stats(user.id).cloned()).unwrap_or_default();
        let total_m = stats.total_distance().meters();
        Ok(json!({
            "pseudonym": user.pseudonym,
            "total_checkins": stats.total_checkins(),
            "total_distance_m": total_m,
            "total_distance": self.welcome.units.format(total_m),
            "modes": mode_summary(&stats),
        }))
    }

    fn feed(&self, req: &ApiRequest) -> ApiResult {
        let user = self.authenticate(req)?;
        let journey_id = self
            .store
            .read(|s| s.current_checkin(user.id).map(|c| c.journey_id))
            .ok_or(Error::NoCurrentCheckin)?;
        let notes = journey_feed(&self.store, user.id)?;
        Ok(json!({ "journey_id": journey_id, "notes": notes }))
    }

    fn compose(&self, req: &ApiRequest) -> ApiResult {
        let user = self.authenticate(req)?;
        let b: NoteBody = body(req)?;
        let category = b.category.as_deref().map(str::parse::<NoteCategory>).transpose()?;
        let note = compose_note(&self.store, user.id, &b.text, category, b.anonymous)?;
        to_json(self.store.read(|s| note_view(s, &note)))
    }

    fn note(&self, req: &ApiRequest, id: NoteId) -> ApiResult {
        let user = self.authenticate(req)?;
        to_json(note_detail(&self.store, user.id, id)?)
    }

    fn comment(&self, req: &ApiRequest, id: NoteId) -> ApiResult {
        let user = self.authenticate(req)?;
        let b: CommentBody = body(req)?;
        let c = add_comment(&self.store, user.id, id, &b.text, b.anonymous)?;
        to_json(CommentView {
            comment_id: c.id,
            author: if c.anonymous {
                ANONYMOUS.to_owned()
            } else {
                user.pseudonym.to_string()
            },
            text: c.text,
            created_at: c.created_at,
        })
    }

    fn seed(&self, req: &ApiRequest) -> ApiResult {
        self.authenticate_admin(req)?;
        let b: SeedBody = if req.body.is_empty() { SeedBody::default() } else { body(req)? };
        let text = b.jsonl.as_deref().unwrap_or(SHIPPED_SEED);
        to_json(ingest_seed_notes(&self.store, text.as_bytes(), &mut *self.rng.lock()))
    }

    fn mode_share(&self, req: &ApiRequest) -> ApiResult {
        self.authenticate_admin(req)?;
        to_json(self.store.read(mode_share_report))
    }
}

/// True if `body` names `user`, either by pseudonym or by id under a key
/// mentioning a user or author.
pub fn mentions_user(body: &Value, user: UserId, pseudonym: &str) -> bool {
    match body {
        Value::String(s) => s == pseudonym,
        Value::Array(xs) => xs.iter().any(|x| mentions_user(x, user, pseudonym)),
        Value::Object(m) => m.iter().any(|(k, v)| {
            let id_key = k.contains("user") || k.contains("author");
            (id_key && v.as_u64() == Some(user.0)) || mentions_user(v, user, pseudonym)
        }),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use journeys_core::store::{Event, Journal, Policy};
    use std::sync::atomic::{AtomicBool, Ordering};
    use std::sync::Arc;

    fn api() -> Api {
        let config = Config {
            rng_seed: Some(3),
            ..Config::default()
        };
        Api::new(Store::in_memory(Policy::default()), Box::new(FixtureGeocoder::shipped()), &config)
    }

    fn register(api: &Api) -> (String, String) {
        let r = api.dispatch(&ApiRequest::post("/users", json!({})));
        assert_eq!(r.status, 200, "{}", r.body);
        (
            r.body["token"].as_str().unwrap().to_owned(),
            r.body["pseudonym"].as_str().unwrap().to_owned(),
        )
    }

    fn checkin_body(lat: f64) -> Value {
        json!({
            "origin": {"lat": lat, "lng": -122.33},
            "destination": {"lat": lat + 0.2, "lng": -122.33},
            "mode": "bus",
        })
    }

    #[test]
    fn auth_is_required() {
        let api = api();
        let r = api.dispatch(&ApiRequest::post("/checkins", checkin_body(47.0)));
        assert_eq!((r.status, r.error_code()), (401, Some("unauthorized")));
        let r = api.dispatch(&ApiRequest::get("/me/stats").token("nope"));
        assert_eq!(r.status, 401);
    }

    #[test]
    fn error_codes() {
        let api = api();
        let (t, _) = register(&api);
        let cases = [
            (ApiRequest::get("/nowhere").token(&t), 404, "not_found"),
            (ApiRequest::get("/checkins").token(&t), 405, "method_not_allowed"),
            (ApiRequest::post("/notes", json!({"text": "hi"})).token(&t), 409, "no_current_checkin"),
            (ApiRequest::post("/checkins", json!({"mode": "bus"})).token(&t), 400, "invalid_request"),
            (
                ApiRequest::post("/checkins", json!({"previous_journey_id": 999, "mode": "bus"})).token(&t),
                404,
                "not_found",
            ),
            (
                ApiRequest::post("/checkins", json!({"previous_journey_id": 1, "mode": "zeppelin"})).token(&t),
                400,
                "invalid_request",
            ),
            (
                ApiRequest::post("/checkins", json!({"origin": {"lat": 91, "lng": 0}, "destination": {"lat": 0, "lng": 0}, "mode": "bus"}))
                    .token(&t),
                400,
                "invalid_request",
            ),
            (ApiRequest::get("/notes/abc").token(&t), 404, "not_found"),
            (ApiRequest::get("/suggest").query("q", "pike").token(&t), 400, "invalid_request"),
            (ApiRequest::get("/admin/reports/mode-share").token(&t), 403, "forbidden"),
        ];
        for (req, status, code) in cases {
            let r = api.dispatch(&req);
            assert_eq!((r.status, r.error_code()), (status, Some(code)), "{} {}", req.path, r.body);
        }
    }

    #[test]
    fn session_round_trip() {
        let api = api();
        let (t, me) = register(&api);
        let r = api.dispatch(&ApiRequest::post("/checkins", checkin_body(47.0)).token(&t));
        assert_eq!(r.status, 200, "{}", r.body);
        assert_eq!(r.body["trailblazer"], true);
        let journey = r.body["journey"]["journey_id"].as_u64().unwrap();
        let r = api.dispatch(
            &ApiRequest::post("/notes", json!({"text": "the 40 is late again", "category": "tips-and-tricks"})).token(&t),
        );
        assert_eq!(r.status, 200, "{}", r.body);
        assert_eq!(r.body["author"], me.as_str());
        let note = r.body["note_id"].as_u64().unwrap();
        let r = api.dispatch(
            &ApiRequest::post(&format!("/notes/{note}/comments"), json!({"text": "always", "anonymous": true})).token(&t),
        );
        assert_eq!(r.body["author"], "anonymous");
        let r = api.dispatch(&ApiRequest::get(&format!("/notes/{note}")).token(&t));
        assert_eq!(r.body["note"]["comment_count"], 1);
        let r = api.dispatch(&ApiRequest::get("/journey/feed").token(&t));
        assert_eq!(r.body["journey_id"], journey);
        assert_eq!(r.body["notes"][0]["note_id"], note);
        let r = api.dispatch(&ApiRequest::get("/me/current").token(&t));
        assert_eq!(r.body["journey"]["journey_id"], journey);
        let r = api.dispatch(&ApiRequest::get("/me/journeys").token(&t));
        assert_eq!(r.body["journeys"][0]["trips"], 1);
        let r = api.dispatch(&ApiRequest::get("/me/stats").token(&t));
        assert_eq!(r.body["total_checkins"], 1);
        assert_eq!(r.body["modes"][0]["mode"], "bus");
        let r = api.dispatch(
            &ApiRequest::post("/checkins", json!({"previous_journey_id": journey, "mode": "car"})).token(&t),
        );
        assert_eq!(r.body["journey"]["your_trips"], 2);
        assert_eq!(r.body["trailblazer"], false);
    }

    #[test]
    fn anonymous_notes_hide_their_author() {
        let api = api();
        let (a, a_name) = register(&api);
        let (b, _) = register(&api);
        let a_id = api.store().read(|s| s.user_by_token(&ApiToken::from_header(&a)).unwrap().id);
        api.dispatch(&ApiRequest::post("/checkins", checkin_body(47.0)).token(&a));
        api.dispatch(&ApiRequest::post("/notes", json!({"text": "psst", "anonymous": true})).token(&a));
        let r = api.dispatch(&ApiRequest::post("/checkins", checkin_body(47.0)).token(&b));
        assert_eq!(r.body["feed"][0]["author"], "anonymous");
        assert!(!mentions_user(&r.body, a_id, &a_name), "{}", r.body);
        let r = api.dispatch(&ApiRequest::get("/journey/feed").token(&b));
        assert!(!mentions_user(&r.body, a_id, &a_name));
    }

    #[test]
    fn writes_are_rate_limited_per_token() {
        let config = Config {
            rng_seed: Some(1),
            server: crate::config::ServerConfig {
                writes_per_minute: 2,
                ..Default::default()
            },
            ..Config::default()
        };
        let api = Api::new(Store::in_memory(Policy::default()), Box::new(FixtureGeocoder::shipped()), &config);
        let (t, _) = register(&api);
        let (u, _) = {
            let mut req = ApiRequest::post("/users", json!({}));
            req.peer = Some("10.0.0.1".parse().unwrap());
            let r = api.dispatch(&req);
            (r.body["token"].as_str().unwrap().to_owned(), ())
        };
        for _ in 0..2 {
            assert_eq!(api.dispatch(&ApiRequest::post("/checkins", checkin_body(47.0)).token(&t)).status, 200);
        }
        let r = api.dispatch(&ApiRequest::post("/checkins", checkin_body(47.0)).token(&t));
        assert_eq!((r.status, r.error_code()), (429, Some("rate_limited")));
        assert!(r.retry_after.is_some());
        // Reads and other tokens are unaffected.
        assert_eq!(api.dispatch(&ApiRequest::get("/me/stats").token(&t)).status, 200);
        assert_eq!(api.dispatch(&ApiRequest::post("/checkins", checkin_body(47.0)).token(&u)).status, 200);
    }

    #[test]
    fn limiter_window_resets() {
        let l = RateLimiter::new(1, Duration::from_secs(60));
        let t0 = Instant::now();
        l.check("k", t0).unwrap();
        assert!(l.check("k", t0 + Duration::from_secs(59)).is_err());
        l.check("k", t0 + Duration::from_secs(60)).unwrap();
        RateLimiter::new(0, Duration::from_secs(1)).check("k", t0).unwrap();
    }

    #[test]
    fn admin_routes() {
        let config = Config {
            rng_seed: Some(1),
            server: crate::config::ServerConfig {
                admin_token: Some("0123456789abcdef".into()),
                ..Default::default()
            },
            ..Config::default()
        };
        let api = Api::new(Store::in_memory(Policy::default()), Box::new(FixtureGeocoder::shipped()), &config);
        let (t, _) = register(&api);
        let jsonl = r#"{"origin":{"lat":1,"lng":1},"destination":{"lat":1.1,"lng":1},"origin_label":"a","destination_label":"b","text":"hi","author":"grey heron"}"#;
        let seed = ApiRequest::post("/admin/seed", json!({ "jsonl": jsonl }));
        assert_eq!(api.dispatch(&seed.clone().token(&t)).status, 403);
        assert_eq!(api.dispatch(&seed.clone()).status, 401);
        let r = api.dispatch(&seed.token("0123456789abcdef"));
        assert_eq!(r.body["ingested"], 1, "{}", r.body);
        api.dispatch(&ApiRequest::post("/checkins", checkin_body(47.0)).token(&t));
        let r = api.dispatch(&ApiRequest::get("/admin/reports/mode-share").token("0123456789abcdef"));
        assert_eq!(r.body["total"], 1);
        assert_eq!(r.body["modes"][0]["percent"], 100);
        // Synthetic seed authors cannot log in; their tokens are never issued
        // but are refused even if guessed.
        let synthetic = api.store().read(|s| s.users().find(|u| u.synthetic).unwrap().token.as_str().to_owned());
        assert_eq!(api.dispatch(&ApiRequest::get("/me/stats").token(&synthetic)).status, 401);
    }

    struct Flaky(Arc<AtomicBool>);

    impl Journal for Flaky {
        fn append(&mut self, _: &[Event]) -> std::io::Result<()> {
            if self.0.load(Ordering::SeqCst) {
                Err(std::io::Error::other("disk full"))
            } else {
                Ok(())
            }
        }
    }

    #[test]
    fn failed_writes_leave_nothing_behind() {
        let fail = Arc::new(AtomicBool::new(false));
        let store = Store::with_journal(Policy::default(), Box::new(Flaky(fail.clone())), vec![]).unwrap();
        let config = Config {
            rng_seed: Some(2),
            ..Config::default()
        };
        let api = Api::new(store, Box::new(FixtureGeocoder::shipped()), &config);
        let (t, _) = register(&api);
        api.dispatch(&ApiRequest::post("/checkins", checkin_body(47.0)).token(&t));
        let snapshot = |api: &Api| {
            api.store().read(|s| {
                (s.users().count(), s.journeys().count(), s.checkins().count(), s.notes().count())
            })
        };
        let before = snapshot(&api);
        fail.store(true, Ordering::SeqCst);
        let requests = [
            ApiRequest::post("/users", json!({})),
            ApiRequest::post("/checkins", checkin_body(10.0)).token(&t),
            ApiRequest::post("/notes", json!({"text": "lost"})).token(&t),
        ];
        for req in &requests {
            let r = api.dispatch(req);
            assert_eq!((r.status, r.error_code()), (500, Some("storage_error")), "{}", req.path);
            assert_eq!(r.body["error"]["message"], "storage unavailable");
        }
        assert_eq!(snapshot(&api), before);
        fail.store(false, Ordering::SeqCst);
        assert_eq!(api.dispatch(&requests[1]).status, 200);
    }
}
