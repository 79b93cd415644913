#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use judgekit_core::{Metric, ReliabilityMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub const DOMAIN: [i64; 5] = [-2, -1, 0, 1, 2];

/// Rows are units, columns are raters.
pub type Grid = Vec<Vec<Option<i64>>>;

fn delta2(metric: Metric, c: i64, k: i64, counts: &HashMap<i64, f64>) -> f64 {
    match metric {
        Metric::Nominal => {
            if c == k {
                0.0
            } else {
                1.0
            }
        }
        Metric::Interval => ((c - k) * (c - k)) as f64,
        Metric::Ordinal => {
            let (lo, hi) = if c <= k { (c, k) } else { (k, c) };
            let between: f64 = counts
                .iter()
                .filter(|(g, _)| **g >= lo && **g <= hi)
                .map(|(_, n)| *n)
                .sum();
            let d = between - (counts[&c] + counts[&k]) / 2.0;
            d * d
        }
    }
}

/// Brute-force alpha straight from the definition: observed disagreement
/// over every ordered within-unit pair weighted by 1/(m - 1), expected
/// disagreement over every ordered pair of distinct pairable values.
/// Returns `None` when expected disagreement is zero.
pub fn oracle_alpha(grid: &Grid, metric: Metric) -> Option<f64> {
    let units: Vec<Vec<i64>> = grid
        .iter()
        .map(|row| row.iter().flatten().copied().collect::<Vec<_>>())
        .filter(|vals| vals.len() >= 2)
        .collect();
    let pooled: Vec<i64> = units.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    if pooled.is_empty() {
        return None;
    }
    let mut counts: HashMap<i64, f64> = HashMap::new();
    for v in &pooled {
        *counts.entry(*v).or_default() += 1.0;
    }

    let mut observed = 0.0;
    for vals in &units {
        let m = vals.len() as f64;
        for i in 0..vals.len() {
            for j in 0..vals.len() {
                if i != j {
                    observed += delta2(metric, vals[i], vals[j], &counts) / (m - 1.0);
                }
            }
        }
    }
    let d_o = observed / n;

    let mut expected = 0.0;
    for i in 0..pooled.len() {
        for j in 0..pooled.len() {
            if i != j {
                expected += delta2(metric, pooled[i], pooled[j], &counts);
            }
        }
    }
    let d_e = expected / (n * (n - 1.0));
    if d_e == 0.0 {
        return None;
    }
    Some(1.0 - d_o / d_e)
}

pub fn matrix_from_grid(grid: &Grid, domain: &[i64]) -> ReliabilityMatrix {
    let n_raters = grid.first().map_or(0, Vec::len);
    ReliabilityMatrix::from_rows(
        (0..grid.len()).map(|u| format!("u{u}")).collect(),
        (0..n_raters).map(|r| format!("r{r}")).collect(),
        grid,
        domain.to_vec(),
    )
    .unwrap()
}

/// Random grid over [`DOMAIN`]; each cell is missing with `p_missing`.
pub fn random_grid(rng: &mut ChaCha8Rng, units: usize, raters: usize, p_missing: f64) -> Grid {
    (0..units)
        .map(|_| {
            (0..raters)
                .map(|_| {
                    if rng.random_bool(p_missing) {
                        None
                    } else {
                        Some(DOMAIN[rng.random_range(0..DOMAIN.len())])
                    }
                })
                .collect()
        })
        .collect()
}

/// The documented 3 × 8 fixture: seed 42, values uniform over the domain,
/// then two cells blanked.
pub fn seeded_fixture() -> Grid {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut grid = random_grid(&mut rng, 8, 3, 0.0);
    grid[2][1] = None;
    grid[5][0] = None;
    grid
}

/// Six scores, uniform over the rubric scale.
pub fn random_scores(rng: &mut ChaCha8Rng) -> Vec<i32> {
    (0..6).map(|_| rng.random_range(-2..=2)).collect()
}

fn fnv(s: &str) -> u64 {
    s.bytes().fold(0xcbf29ce484222325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100000001b3)
    })
}

pub fn answer_of(prompt: &str) -> Option<&str> {
    let at = prompt.find("ANSWER: ")? + "ANSWER: ".len();
    prompt[at..].split("\n\n").next()
}

fn format_scores(s: &[i32]) -> String {
    s.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// How the stub answers a given model name.
#[derive(Clone)]
pub enum StubJudge {
    /// Looks the answer text up and replies with those scores.
    Echo(HashMap<String, Vec<i32>>),
    Constant(Vec<i32>),
    /// Pseudo-random scores, a pure function of (seed, answer).
    Seeded(u64),
    /// Fixed raw reply text.
    Raw(String),
}

impl StubJudge {
    fn reply(&self, prompt: &str) -> String {
        let answer = answer_of(prompt).unwrap_or_default();
        match self {
            StubJudge::Echo(table) => table
                .get(answer)
                .map_or_else(|| "no idea".into(), |s| format_scores(s)),
            StubJudge::Constant(s) => format_scores(s),
            StubJudge::Seeded(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv(answer));
                format_scores(&random_scores(&mut rng))
            }
            StubJudge::Raw(s) => s.clone(),
        }
    }
}

#[derive(Default)]
pub struct StubState {
    pub judges: HashMap<String, StubJudge>,
    /// Transient failures (HTTP 503) returned per answer before replying.
    pub fail_first: usize,
    /// Fixed status for every request, overriding everything else.
    pub status_override: Option<u16>,
    pub attempts: Mutex<HashMap<String, usize>>,
    pub requests: AtomicUsize,
    pub last_auth: Mutex<Option<String>>,
    pub last_body: Mutex<Option<Value>>,
}

async fn chat(
    State(state): State<Arc<StubState>>,
    headers: axum::http::HeaderMap,
    Json(body): Json<Value>,
) -> (StatusCode, Json<Value>) {
    state.requests.fetch_add(1, Ordering::SeqCst);
    *state.last_auth.lock().unwrap() = headers
        .get("authorization")
        .and_then(|h| h.to_str().ok())
        .map(str::to_owned);
    *state.last_body.lock().unwrap() = Some(body.clone());
    if let Some(code) = state.status_override {
        return (
            StatusCode::from_u16(code).unwrap(),
            Json(json!({"error": "scripted"})),
        );
    }
    let model = body["model"].as_str().unwrap_or_default().to_owned();
    let prompt = body["messages"][0]["content"]
        .as_str()
        .unwrap_or_default()
        .to_owned();
    let key = format!("{model}\u{0}{}", answer_of(&prompt).unwrap_or_default());
    let attempt = {
        let mut a = state.attempts.lock().unwrap();
        let c = a.entry(key).or_insert(0);
        *c += 1;
        *c
    };
    if attempt <= state.fail_first {
        return (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({"error": "busy"})),
        );
    }
    let Some(judge) = state.judges.get(&model) else {
        return (
            StatusCode::NOT_FOUND,
            Json(json!({"error": "unknown model"})),
        );
    };
    let content = judge.reply(&prompt);
    (
        StatusCode::OK,
        Json(json!({
            "id": "stub",
            "object": "chat.completion",
            "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}]
        })),
    )
}

/// Serves the stub on an ephemeral loopback port; returns the full
/// chat-completions URL.
pub async fn spawn_stub(state: Arc<StubState>) -> String {
    let app = Router::new()
        .route("/v1/chat/completions", post(chat))
        .with_state(state);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    format!("http://{addr}/v1/chat/completions")
}

/// A loopback address with nothing listening on it.
pub fn dead_endpoint() -> String {
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = l.local_addr().unwrap().port();
    drop(l);
    format!("http://127.0.0.1:{port}/v1/chat/completions")
}
