//! Judge execution against an OpenAI-compatible chat-completions endpoint and
//! aggregation of repeated runs into agreement statistics.
//!
//! Each run sends every item once (canonical template, no augmentation) as a
//! single user message. Transient failures (connection errors, timeouts, 429
//! and 5xx) are retried with exponential backoff; everything else is recorded
//! as a failure for that item and run. Results are reassembled in input order,
//! so the output does not depend on response interleaving.

use std::collections::BTreeMap;
use std::future::Future;
use std::path::Path;
use std::time::Duration;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::agreement::{
    build_reliability_matrix, classification_metrics, krippendorff_alpha, ClassificationMetrics,
    CriterionPooling, Metric, Prediction,
};
use crate::dataset::{write_jsonl, ClassificationRecord};
use crate::error::{Error, Result};
use crate::prompt::{
    parse_label, parse_scores_detailed, render_classification_prompt, render_prompt, PromptTemplate,
};
use crate::types::{judge_rater_id, AnnotationRecord, EvaluationItem, Payload, Rubric};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRunConfig {
    /// Full chat-completions URL, e.g. `http://localhost:8000/v1/chat/completions`.
    pub endpoint_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the bearer token. `None`
    /// sends no `Authorization` header.
    pub api_key_env_var: Option<String>,
    pub temperature: f64,
    pub num_runs: usize,
    pub max_concurrency: usize,
    pub request_timeout_secs: f64,
    pub max_retries: u32,
    /// First backoff delay; doubles on every retry.
    pub retry_base_delay_ms: u64,
    pub seed: u64,
    /// Text prepended to every rendered prompt (e.g. an externally optimized
    /// few-shot block).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_prefix: Option<String>,
}

impl JudgeRunConfig {
    pub fn new(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            api_key_env_var: None,
            temperature: 0.0,
            num_runs: 3,
            max_concurrency: 8,
            request_timeout_secs: 60.0,
            max_retries: 3,
            retry_base_delay_ms: 500,
            seed: 0,
            prompt_prefix: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_runs == 0 {
            return Err(Error::InvalidConfig("num_runs must be at least 1".into()));
        }
        if self.max_concurrency == 0 {
            return Err(Error::InvalidConfig(
                "max_concurrency must be at least 1".into(),
            ));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::InvalidConfig(
                "temperature must be non-negative".into(),
            ));
        }
        if !self.request_timeout_secs.is_finite() || self.request_timeout_secs <= 0.0 {
            return Err(Error::InvalidConfig(
                "request timeout must be positive and finite".into(),
            ));
        }
        Ok(())
    }

    fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.request_timeout_secs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Ok,
    /// Parsed, but the completion held more integers than criteria.
    ExtraIntegers,
    TooFewScores,
    OutOfRange,
    InvalidLabel,
    RequestFailed,
    RenderFailed,
}

/// One audit-log line per (item, run).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub item_id: String,
    pub rater_id: String,
    pub raw_completion: Option<String>,
    pub parse_status: ParseStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub item_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunResult {
    /// 1-based.
    pub run_index: usize,
    pub rater_id: String,
    pub records: Vec<AnnotationRecord>,
    pub failures: Vec<ItemFailure>,
    /// Retries spent per item (items that needed none are absent).
    pub retries: BTreeMap<String, u32>,
    pub audit: Vec<AuditEntry>,
}

/// Error from a single chat request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestError {
    pub transient: bool,
    pub message: String,
}

impl RequestError {
    pub fn transient(message: impl Into<String>) -> Self {
        Self {
            transient: true,
            message: message.into(),
        }
    }

    pub fn permanent(message: impl Into<String>) -> Self {
        Self {
            transient: false,
            message: message.into(),
        }
    }
}

/// Something that turns a prompt into a completion.
pub trait ChatTransport: Sync {
    fn complete(&self, prompt: String)
        -> impl Future<Output = Result<String, RequestError>> + Send;
}

/// OpenAI-compatible HTTP transport.
pub struct HttpChat {
    client: reqwest::Client,
    url: String,
    model: String,
    temperature: f64,
    api_key: Option<String>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

impl HttpChat {
    pub fn new(cfg: &JudgeRunConfig, api_key: Option<String>) -> Result<Self> {
        let client = reqwest::Client::builder()
            .timeout(cfg.timeout())
            .build()
            .map_err(|e| Error::InvalidConfig(format!("http client: {e}")))?;
        Ok(Self {
            client,
            url: cfg.endpoint_url.clone(),
            model: cfg.model_name.clone(),
            temperature: cfg.temperature,
            api_key,
        })
    }
}

impl ChatTransport for HttpChat {
    async fn complete(&self, prompt: String) -> Result<String, RequestError> {
        let body = ChatRequest {
            model: &self.model,
            messages: [ChatMessage {
                role: "user",
                content: &prompt,
            }],
            temperature: self.temperature,
        };
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| {
            // connection resets and timeouts are worth another attempt
            RequestError::transient(format!("request failed: {}", e.without_url()))
        })?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(RequestError::transient(format!("http status {status}")));
        }
        if !status.is_success() {
            return Err(RequestError::permanent(format!("http status {status}")));
        }
        let parsed: ChatResponse = resp.json().await.map_err(|e| {
            RequestError::permanent(format!("malformed response body: {}", e.without_url()))
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| RequestError::permanent("response has no message content"))
    }
}

fn resolve_api_key(cfg: &JudgeRunConfig) -> Result<Option<String>> {
    match &cfg.api_key_env_var {
        None => Ok(None),
        Some(var) => match std::env::var(var) {
            Ok(v) if !v.is_empty() => Ok(Some(v)),
            _ => Err(Error::AuthMissing(var.clone())),
        },
    }
}

/// Opens (and drops) a TCP connection to the endpoint's host and port.
pub async fn check_reachable(url: &str, timeout: Duration) -> Result<()> {
    let unreachable = |reason: String| Error::EndpointUnreachable {
        url: url.to_owned(),
        reason,
    };
    let parsed = url::Url::parse(url).map_err(|e| unreachable(e.to_string()))?;
    let host = parsed
        .host_str()
        .ok_or_else(|| unreachable("no host".into()))?
        .trim_start_matches('[')
        .trim_end_matches(']')
        .to_owned();
    let port = parsed
        .port_or_known_default()
        .ok_or_else(|| unreachable("no port".into()))?;
    match tokio::time::timeout(
        timeout,
        tokio::net::TcpStream::connect((host.as_str(), port)),
    )
    .await
    {
        Ok(Ok(_)) => Ok(()),
        Ok(Err(e)) => Err(unreachable(e.to_string())),
        Err(_) => Err(unreachable("connection timed out".into())),
    }
}

async fn prepare_http(cfg: &JudgeRunConfig) -> Result<HttpChat> {
    cfg.validate()?;
    let key = resolve_api_key(cfg)?;
    check_reachable(&cfg.endpoint_url, cfg.timeout()).await?;
    HttpChat::new(cfg, key)
}

/// Outcome of interpreting one completion.
enum Interpreted {
    Record(Payload, ParseStatus),
    Failure(ParseStatus, String),
}

async fn request_with_retries<T: ChatTransport>(
    transport: &T,
    prompt: String,
    cfg: &JudgeRunConfig,
) -> (Result<String, RequestError>, u32) {
    let mut retries = 0;
    loop {
        match transport.complete(prompt.clone()).await {
            Ok(text) => return (Ok(text), retries),
            Err(e) if e.transient && retries < cfg.max_retries => {
                let delay = cfg.retry_base_delay_ms.saturating_mul(1 << retries.min(16));
                tracing::debug!(attempt = retries + 1, error = %e.message, "retrying request");
                tokio::time::sleep(Duration::from_millis(delay)).await;
                retries += 1;
            }
            Err(e) => return (Err(e), retries),
        }
    }
}

/// Final outcome of one request and the number of retries it took.
type Attempt = (Result<String, RequestError>, u32);

async fn execute_runs<T, F>(
    transport: &T,
    prompts: &[(String, Result<String, String>)],
    cfg: &JudgeRunConfig,
    interpret: F,
) -> Result<Vec<RunResult>>
where
    T: ChatTransport,
    F: Fn(&str) -> Interpreted + Sync,
{
    cfg.validate()?;
    if prompts.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut results = Vec::with_capacity(cfg.num_runs);
    for run_index in 1..=cfg.num_runs {
        let rater_id = judge_rater_id(&cfg.model_name, run_index);
        let interpret = &interpret;
        let responses: Vec<(usize, Option<Attempt>)> = stream::iter(prompts.iter().enumerate())
            .map(|(i, (_, prompt))| async move {
                match prompt {
                    Ok(p) => (
                        i,
                        Some(request_with_retries(transport, p.clone(), cfg).await),
                    ),
                    Err(_) => (i, None),
                }
            })
            .buffer_unordered(cfg.max_concurrency)
            .collect()
            .await;
        let mut by_index: Vec<Option<Attempt>> = (0..prompts.len()).map(|_| None).collect();
        for (i, r) in responses {
            by_index[i] = r;
        }

        let mut run = RunResult {
            run_index,
            rater_id: rater_id.clone(),
            records: Vec::new(),
            failures: Vec::new(),
            retries: BTreeMap::new(),
            audit: Vec::new(),
        };
        for ((item_id, prompt), response) in prompts.iter().zip(by_index) {
            let audit = |raw: Option<String>, status| AuditEntry {
                item_id: item_id.clone(),
                rater_id: rater_id.clone(),
                raw_completion: raw,
                parse_status: status,
            };
            let fail = |error: String| ItemFailure {
                item_id: item_id.clone(),
                error,
            };
            let Some((outcome, retries)) = response else {
                let reason = prompt.as_ref().err().cloned().unwrap_or_default();
                run.failures.push(fail(format!("render failed: {reason}")));
                run.audit.push(audit(None, ParseStatus::RenderFailed));
                continue;
            };
            if retries > 0 {
                tracing::info!(item_id = %item_id, run = run_index, retries, "request succeeded after retries");
                run.retries.insert(item_id.clone(), retries);
            }
            match outcome {
                Err(e) => {
                    tracing::warn!(item_id = %item_id, run = run_index, error = %e.message, "request failed");
                    run.failures.push(fail(e.message));
                    run.audit.push(audit(None, ParseStatus::RequestFailed));
                }
                Ok(text) => match interpret(&text) {
                    Interpreted::Record(payload, status) => {
                        if status == ParseStatus::ExtraIntegers {
                            tracing::warn!(item_id = %item_id, run = run_index, "completion has extra integers; first ones used");
                        }
                        run.records.push(AnnotationRecord {
                            item_id: item_id.clone(),
                            rater_id: rater_id.clone(),
                            payload,
                        });
                        run.audit.push(audit(Some(text), status));
                    }
                    Interpreted::Failure(status, error) => {
                        run.failures.push(fail(error));
                        run.audit.push(audit(Some(text), status));
                    }
                },
            }
        }
        results.push(run);
    }
    Ok(results)
}

fn rubric_prompts(
    items: &[EvaluationItem],
    t: &PromptTemplate,
    rubric: &Rubric,
    prefix: Option<&str>,
) -> Vec<(String, Result<String, String>)> {
    items
        .iter()
        .map(|item| {
            let prompt = render_prompt(t, item, rubric)
                .map(|p| match prefix {
                    Some(pre) => format!("{pre}{}", p.text),
                    None => p.text,
                })
                .map_err(|e| e.to_string());
            (item.item_id.clone(), prompt)
        })
        .collect()
}

fn interpret_scores(rubric: &Rubric) -> impl Fn(&str) -> Interpreted + Sync + '_ {
    move |text| match parse_scores_detailed(text, rubric) {
        Ok(p) => {
            let status = if p.extra_integers > 0 {
                ParseStatus::ExtraIntegers
            } else {
                ParseStatus::Ok
            };
            Interpreted::Record(Payload::Scores(p.scores), status)
        }
        Err(e @ Error::TooFewScores { .. }) => {
            Interpreted::Failure(ParseStatus::TooFewScores, e.to_string())
        }
        Err(e) => Interpreted::Failure(ParseStatus::OutOfRange, e.to_string()),
    }
}

/// Runs the rubric judge over `items` with any transport.
pub async fn run_judge_with<T: ChatTransport>(
    transport: &T,
    items: &[EvaluationItem],
    t: &PromptTemplate,
    rubric: &Rubric,
    cfg: &JudgeRunConfig,
) -> Result<Vec<RunResult>> {
    let prompts = rubric_prompts(items, t, rubric, cfg.prompt_prefix.as_deref());
    execute_runs(transport, &prompts, cfg, interpret_scores(rubric)).await
}

/// Runs the rubric judge over HTTP, `cfg.num_runs` times.
///
/// Fails fast with [`Error::AuthMissing`] or [`Error::EndpointUnreachable`]
/// before any request is sent.
pub async fn run_judge(
    items: &[EvaluationItem],
    t: &PromptTemplate,
    rubric: &Rubric,
    cfg: &JudgeRunConfig,
) -> Result<Vec<RunResult>> {
    if items.is_empty() {
        return Err(Error::EmptyInput);
    }
    let http = prepare_http(cfg).await?;
    run_judge_with(&http, items, t, rubric, cfg).await
}

/// Runs a single-label classifier. Unparseable outputs become failures with
/// status `invalid_label`.
pub async fn run_classifier_with<T: ChatTransport>(
    transport: &T,
    records: &[ClassificationRecord],
    instruction: &str,
    label_set: &[String],
    cfg: &JudgeRunConfig,
) -> Result<Vec<RunResult>> {
    let prompts: Vec<_> = records
        .iter()
        .map(|r| {
            let p = render_classification_prompt(instruction, &r.text, label_set)
                .map(|p| match &cfg.prompt_prefix {
                    Some(pre) => format!("{pre}{p}"),
                    None => p,
                })
                .map_err(|e| e.to_string());
            (r.item_id.clone(), p)
        })
        .collect();
    execute_runs(transport, &prompts, cfg, |text| {
        match parse_label(text, label_set) {
            Prediction::Label(l) => Interpreted::Record(Payload::Label(l), ParseStatus::Ok),
            Prediction::Invalid => {
                Interpreted::Failure(ParseStatus::InvalidLabel, "no label in completion".into())
            }
        }
    })
    .await
}

pub async fn run_classifier(
    records: &[ClassificationRecord],
    instruction: &str,
    label_set: &[String],
    cfg: &JudgeRunConfig,
) -> Result<Vec<RunResult>> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let http = prepare_http(cfg).await?;
    run_classifier_with(&http, records, instruction, label_set, cfg).await
}

/// How repeated runs are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunAggregation {
    /// One alpha per run (humans + that run), then mean and sample std.
    #[default]
    MeanOfRuns,
    /// One matrix holding the humans and every run as separate raters.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AggregateOptions {
    pub criterion_pooling: CriterionPooling,
    pub run_aggregation: RunAggregation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedAgreement {
    pub mean_alpha: f64,
    pub std_alpha: f64,
    pub per_run_alpha: Vec<f64>,
    pub metric: Metric,
    pub criterion_pooling: CriterionPooling,
    pub run_aggregation: RunAggregation,
    pub n_runs: usize,
    /// Distinct items carrying at least one human rating.
    pub n_items: usize,
    pub n_failures: usize,
}

/// Arithmetic mean and sample standard deviation (0 for a single value).
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn alpha_of(
    records: &[AnnotationRecord],
    rubric: &Rubric,
    metric: Metric,
    pooling: CriterionPooling,
) -> Result<f64> {
    let matrices = build_reliability_matrix(records, rubric, pooling)?;
    let mut alphas = Vec::with_capacity(matrices.len());
    for m in &matrices {
        alphas.push(krippendorff_alpha(m, metric)?.alpha);
    }
    Ok(alphas.iter().sum::<f64>() / alphas.len() as f64)
}

/// Combines judge runs with human annotations into one agreement figure.
///
/// Items a run failed on are simply missing cells of that run's judge column.
/// With no runs at all, the result is the agreement among the humans alone
/// (`n_runs` = 0).
pub fn aggregate_runs(
    results: &[RunResult],
    humans: &[AnnotationRecord],
    rubric: &Rubric,
    metric: Metric,
    opts: AggregateOptions,
) -> Result<AggregatedAgreement> {
    if !results.is_empty() && results.iter().all(|r| r.records.is_empty()) {
        return Err(Error::EmptyInput);
    }
    let per_run_alpha = match opts.run_aggregation {
        _ if results.is_empty() => vec![alpha_of(humans, rubric, metric, opts.criterion_pooling)?],
        RunAggregation::MeanOfRuns => results
            .iter()
            .map(|run| {
                let mut recs = humans.to_vec();
                recs.extend(run.records.iter().cloned());
                alpha_of(&recs, rubric, metric, opts.criterion_pooling)
            })
            .collect::<Result<Vec<_>>>()?,
        RunAggregation::Pooled => {
            let mut recs = humans.to_vec();
            recs.extend(results.iter().flat_map(|r| r.records.iter().cloned()));
            vec![alpha_of(&recs, rubric, metric, opts.criterion_pooling)?]
        }
    };
    let (mean_alpha, std_alpha) = mean_and_std(&per_run_alpha);
    let n_items = humans
        .iter()
        .map(|h| h.item_id.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    Ok(AggregatedAgreement {
        mean_alpha,
        std_alpha,
        per_run_alpha,
        metric,
        criterion_pooling: opts.criterion_pooling,
        run_aggregation: opts.run_aggregation,
        n_runs: results.len(),
        n_items,
        n_failures: results.iter().map(|r| r.failures.len()).sum(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedClassification {
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub macro_f1_mean: f64,
    pub macro_f1_std: f64,
    pub per_run: Vec<ClassificationMetrics>,
    pub n_items: usize,
    pub n_failures: usize,
}

/// Scores each classifier run against the gold labels (missing or failed
/// predictions count as INVALID) and averages over runs.
pub fn aggregate_classification(
    results: &[RunResult],
    gold: &[ClassificationRecord],
    label_set: &[String],
) -> Result<AggregatedClassification> {
    if results.is_empty() {
        return Err(Error::EmptyInput);
    }
    let gold_map: BTreeMap<String, String> = gold
        .iter()
        .map(|r| (r.item_id.clone(), r.gold_label.clone()))
        .collect();
    let per_run = results
        .iter()
        .map(|run| {
            let mut preds: BTreeMap<String, Prediction> = gold_map
                .keys()
                .map(|k| (k.clone(), Prediction::Invalid))
                .collect();
            for rec in &run.records {
                if let (Some(slot), Some(label)) =
                    (preds.get_mut(&rec.item_id), rec.payload.label())
                {
                    *slot = Prediction::Label(label.to_owned());
                }
            }
            classification_metrics(&preds, &gold_map, label_set)
        })
        .collect::<Result<Vec<_>>>()?;
    let acc: Vec<f64> = per_run.iter().map(|m| m.accuracy).collect();
    let f1: Vec<f64> = per_run.iter().map(|m| m.macro_f1).collect();
    let (accuracy_mean, accuracy_std) = mean_and_std(&acc);
    let (macro_f1_mean, macro_f1_std) = mean_and_std(&f1);
    Ok(AggregatedClassification {
        accuracy_mean,
        accuracy_std,
        macro_f1_mean,
        macro_f1_std,
        per_run,
        n_items: gold_map.len(),
        n_failures: results.iter().map(|r| r.failures.len()).sum(),
    })
}

/// Persisted output of a judge invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunBundle {
    pub config: JudgeRunConfig,
    pub runs: Vec<RunResult>,
}

/// Writes `runs.json` (config and all runs) and `audit.jsonl` into `dir`.
pub fn save_runs(bundle: &RunBundle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_vec_pretty(bundle)?;
    std::fs::write(dir.join("runs.json"), json)?;
    let audit: Vec<&AuditEntry> = bundle.runs.iter().flat_map(|r| &r.audit).collect();
    write_jsonl(&audit, &dir.join("audit.jsonl"))
}

/// Reads `runs.json` from a directory, or the file itself.
pub fn load_runs(path: &Path) -> Result<RunBundle> {
    let file = if path.is_dir() {
        path.join("runs.json")
    } else {
        path.to_path_buf()
    };
    let bytes = std::fs::read(file)?;
    Ok(serde_json::from_slice(&bytes)?)
}
