mod common;

use std::collections::HashMap;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use common::{dead_endpoint, spawn_stub, StubJudge, StubState};
use judgekit_core::judge::{load_runs, save_runs, ParseStatus, RunBundle};
use judgekit_core::{
    default_sps_rubric, run_judge, Error, EvaluationItem, JudgeRunConfig, PromptTemplate,
};

fn items(n: usize) -> Vec<EvaluationItem> {
    (0..n)
        .map(|i| {
            EvaluationItem::new(
                format!("q{i}"),
                "Some context.",
                "A question?",
                format!("Answer number {i}."),
            )
        })
        .collect()
}

fn stub(judges: &[(&str, StubJudge)]) -> StubState {
    StubState {
        judges: judges
            .iter()
            .map(|(m, j)| (m.to_string(), j.clone()))
            .collect(),
        ..StubState::default()
    }
}

fn config(url: String, model: &str, runs: usize) -> JudgeRunConfig {
    JudgeRunConfig {
        num_runs: runs,
        retry_base_delay_ms: 1,
        request_timeout_secs: 5.0,
        ..JudgeRunConfig::new(url, model)
    }
}

#[tokio::test]
async fn constant_judge_single_run() {
    let state = Arc::new(stub(&[("const", StubJudge::Constant(vec![0; 6]))]));
    let url = spawn_stub(state.clone()).await;
    let runs = run_judge(
        &items(5),
        &PromptTemplate::canonical(),
        &default_sps_rubric(),
        &config(url, "const", 1),
    )
    .await
    .unwrap();
    assert_eq!(runs.len(), 1);
    assert_eq!(runs[0].records.len(), 5);
    assert!(runs[0].failures.is_empty());
    let ids: Vec<_> = runs[0].records.iter().map(|r| r.item_id.as_str()).collect();
    assert_eq!(ids, ["q0", "q1", "q2", "q3", "q4"]);

    let body = state.last_body.lock().unwrap().clone().unwrap();
    assert_eq!(body["model"], "const");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"].as_array().unwrap().len(), 1);
    assert_eq!(body["messages"][0]["role"], "user");
    assert!(body["messages"][0]["content"]
        .as_str()
        .unwrap()
        .ends_with("The 6 scores are: "));
    assert!(state.last_auth.lock().unwrap().is_none());
}

#[tokio::test]
async fn transient_failures_are_retried() {
    let mut s = stub(&[("j", StubJudge::Constant(vec![1; 6]))]);
    s.fail_first = 2;
    let url = spawn_stub(Arc::new(s)).await;
    let mut cfg = config(url, "j", 1);
    cfg.max_retries = 3;
    let runs = run_judge(
        &items(3),
        &PromptTemplate::canonical(),
        &default_sps_rubric(),
        &cfg,
    )
    .await
    .unwrap();
    assert_eq!(runs[0].records.len(), 3);
    assert!(runs[0].retries.values().all(|&r| r == 2));
    assert_eq!(runs[0].retries.len(), 3);
}

#[tokio::test]
async fn more_retries_never_lose_records() {
    let mut previous = 0;
    for max_retries in 0..5 {
        let mut s = stub(&[("j", StubJudge::Constant(vec![1; 6]))]);
        s.fail_first = 2;
        let url = spawn_stub(Arc::new(s)).await;
        let mut cfg = config(url, "j", 1);
        cfg.max_retries = max_retries;
        let runs = run_judge(
            &items(4),
            &PromptTemplate::canonical(),
            &default_sps_rubric(),
            &cfg,
        )
        .await
        .unwrap();
        let ok = runs[0].records.len();
        assert_eq!(ok + runs[0].failures.len(), 4);
        assert!(ok >= previous);
        previous = ok;
    }
    assert_eq!(previous, 4);
}

#[tokio::test]
async fn client_errors_are_not_retried() {
    let mut s = stub(&[]);
    s.status_override = Some(400);
    let state = Arc::new(s);
    let url = spawn_stub(state.clone()).await;
    let mut cfg = config(url, "j", 1);
    cfg.max_retries = 5;
    let runs = run_judge(
        &items(3),
        &PromptTemplate::canonical(),
        &default_sps_rubric(),
        &cfg,
    )
    .await
    .unwrap();
    assert_eq!(runs[0].failures.len(), 3);
    assert_eq!(state.requests.load(Ordering::SeqCst), 3);
    assert!(runs[0]
        .audit
        .iter()
        .all(|a| a.parse_status == ParseStatus::RequestFailed));
}

#[tokio::test]
async fn deterministic_judge_repeats_exactly() {
    let state = Arc::new(stub(&[("r", StubJudge::Seeded(5))]));
    let url = spawn_stub(state).await;
    let runs = run_judge(
        &items(10),
        &PromptTemplate::canonical(),
        &default_sps_rubric(),
        &config(url, "r", 3),
    )
    .await
    .unwrap();
    let payloads = |k: usize| {
        serde_json::to_string(
            &runs[k]
                .records
                .iter()
                .map(|r| (&r.item_id, &r.payload))
                .collect::<Vec<_>>(),
        )
        .unwrap()
    };
    assert_eq!(payloads(0), payloads(1));
    assert_eq!(payloads(1), payloads(2));
    assert_eq!(runs[2].rater_id, "judge:r@run3");
}

#[tokio::test]
async fn unparseable_replies_are_audited() {
    let state = Arc::new(stub(&[("raw", StubJudge::Raw("Scores: 1 2".into()))]));
    let url = spawn_stub(state).await;
    let runs = run_judge(
        &items(2),
        &PromptTemplate::canonical(),
        &default_sps_rubric(),
        &config(url, "raw", 1),
    )
    .await
    .unwrap();
    assert_eq!(runs[0].failures.len(), 2);
    assert_eq!(runs[0].audit[0].parse_status, ParseStatus::TooFewScores);
    assert_eq!(
        runs[0].audit[0].raw_completion.as_deref(),
        Some("Scores: 1 2")
    );
}

#[tokio::test]
async fn unreachable_endpoint_fails_fast() {
    let cfg = config(dead_endpoint(), "j", 1);
    let err = run_judge(
        &items(1),
        &PromptTemplate::canonical(),
        &default_sps_rubric(),
        &cfg,
    )
    .await;
    assert!(
        matches!(err, Err(Error::EndpointUnreachable { .. })),
        "{err:?}"
    );
}

#[tokio::test]
async fn api_key_handling() {
    let state = Arc::new(stub(&[("j", StubJudge::Constant(vec![0; 6]))]));
    let url = spawn_stub(state.clone()).await;
    let mut cfg = config(url, "j", 1);
    cfg.api_key_env_var = Some("JUDGEKIT_TEST_UNSET_KEY_93A1".into());
    let err = run_judge(
        &items(1),
        &PromptTemplate::canonical(),
        &default_sps_rubric(),
        &cfg,
    )
    .await;
    assert!(matches!(err, Err(Error::AuthMissing(ref v)) if v == "JUDGEKIT_TEST_UNSET_KEY_93A1"));
    assert_eq!(state.requests.load(Ordering::SeqCst), 0);

    std::env::set_var("JUDGEKIT_TEST_SET_KEY_93A1", "sk-test");
    cfg.api_key_env_var = Some("JUDGEKIT_TEST_SET_KEY_93A1".into());
    run_judge(
        &items(1),
        &PromptTemplate::canonical(),
        &default_sps_rubric(),
        &cfg,
    )
    .await
    .unwrap();
    assert_eq!(
        state.last_auth.lock().unwrap().as_deref(),
        Some("Bearer sk-test")
    );
}

#[tokio::test]
async fn runs_persist_and_reload() {
    let table: HashMap<String, Vec<i32>> =
        HashMap::from([("Answer number 0.".to_string(), vec![2, 1, 0, -1, -2, 0])]);
    let state = Arc::new(stub(&[("echo", StubJudge::Echo(table))]));
    let url = spawn_stub(state).await;
    let cfg = config(url, "echo", 2);
    let runs = run_judge(
        &items(2),
        &PromptTemplate::canonical(),
        &default_sps_rubric(),
        &cfg,
    )
    .await
    .unwrap();
    assert_eq!(runs[0].records.len(), 1);
    assert_eq!(runs[0].failures[0].item_id, "q1");

    let dir = tempfile::tempdir().unwrap();
    let bundle = RunBundle { config: cfg, runs };
    save_runs(&bundle, dir.path()).unwrap();
    assert_eq!(load_runs(dir.path()).unwrap(), bundle);
    let audit = std::fs::read_to_string(dir.path().join("audit.jsonl")).unwrap();
    assert_eq!(audit.lines().count(), 4);
}
