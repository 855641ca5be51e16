use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use mcar_core::harness::{layout, read_curve, RunConfig};
use mcar_monitor::Monitor;
use reqwest::{Client, StatusCode};
use serde_json::Value;

struct Server {
    base: String,
    client: Client,
    _dir: tempfile::TempDir,
}

async fn start_server() -> Server {
    let dir = tempfile::tempdir().unwrap();
    let monitor: Arc<Monitor> = Monitor::new(RunConfig::default(), dir.path());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(mcar_monitor::serve(listener, monitor));
    Server { base: format!("http://{addr}"), client: Client::new(), _dir: dir }
}

impl Server {
    async fn get(&self, path: &str) -> (StatusCode, String) {
        let resp = self.client.get(format!("{}{path}", self.base)).send().await.unwrap();
        (resp.status(), resp.text().await.unwrap())
    }

    async fn post(&self, path: &str, body: &str) -> (StatusCode, Value) {
        let resp = self
            .client
            .post(format!("{}{path}", self.base))
            .body(body.to_string())
            .send()
            .await
            .unwrap();
        (resp.status(), resp.json().await.unwrap())
    }

    async fn state(&self, id: &str) -> String {
        let (_, body) = self.get("/api/status").await;
        let status: Value = serde_json::from_str(&body).unwrap();
        status["runs"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["id"] == id)
            .map(|r| r["state"].as_str().unwrap().to_string())
            .unwrap()
    }

    async fn wait_for(&self, id: &str, state: &str) {
        for _ in 0..3000 {
            if self.state(id).await == state {
                return;
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        panic!("{id} never reached {state}");
    }

    fn out_dir(&self, id: &str) -> std::path::PathBuf {
        self._dir.path().join(id)
    }
}

const LONG_RUN: &str = "agent = qlearning\nepisodes = 1000\nrealtime = true\n";

#[tokio::test(flavor = "multi_thread")]
async fn fresh_service_has_no_runs() {
    let s = start_server().await;
    let (code, body) = s.get("/api/status").await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap(), serde_json::json!({ "runs": [] }));
}

#[tokio::test(flavor = "multi_thread")]
async fn invalid_config_creates_no_run() {
    let s = start_server().await;
    for body in ["episodes = 0", "nonsense.key = 1", "qlearning.epsilon = 3"] {
        let (code, err) = s.post("/api/runs", body).await;
        assert_eq!(code, StatusCode::BAD_REQUEST, "{body}");
        assert_eq!(err["error"], "InvalidConfig");
    }
    let (_, status) = s.get("/api/status").await;
    assert!(status.contains("\"runs\":[]"));
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_runs_are_404() {
    let s = start_server().await;
    for path in ["/api/runs/run-9/curve", "/api/runs/nope/telemetry", "/api/runs/run-1/evals/1"] {
        let (code, body) = s.get(path).await;
        assert_eq!(code, StatusCode::NOT_FOUND, "{path}");
        assert!(body.contains("UnknownRun"));
    }
    let (code, body) = s.post("/api/runs/run-3/pause", "").await;
    assert_eq!(code, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "UnknownRun");
}

#[tokio::test(flavor = "multi_thread")]
async fn single_rig_and_command_latency() {
    let s = start_server().await;
    let (code, run) = s.post("/api/runs", LONG_RUN).await;
    assert_eq!(code, StatusCode::CREATED);
    let id = run["id"].as_str().unwrap().to_string();
    assert_eq!(id, "run-1");
    s.wait_for(&id, "learning").await;

    let (code, busy) = s.post("/api/runs", LONG_RUN).await;
    assert_eq!(code, StatusCode::CONFLICT);
    assert_eq!(busy["error"], "RigBusy");

    let (code, paused) = s.post(&format!("/api/runs/{id}/pause"), "").await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(paused["state"], "paused");
    assert!(paused["applied_step"].as_u64().unwrap() - paused["issued_step"].as_u64().unwrap() <= 1);

    let (code, again) = s.post(&format!("/api/runs/{id}/pause"), "").await;
    assert_eq!(code, StatusCode::CONFLICT);
    assert_eq!(again["error"], "IllegalTransition");

    // A paused run leaves the rig free, so it cannot resume while another run is active.
    let (code, second) = s.post("/api/runs", LONG_RUN).await;
    assert_eq!(code, StatusCode::CREATED);
    let id2 = second["id"].as_str().unwrap().to_string();
    let (code, busy) = s.post(&format!("/api/runs/{id}/resume"), "").await;
    assert_eq!(code, StatusCode::CONFLICT);
    assert_eq!(busy["error"], "RigBusy");
    let (code, busy) = s.post(&format!("/api/runs/{id}/evaluate"), "").await;
    assert_eq!(code, StatusCode::CONFLICT);
    assert_eq!(busy["error"], "RigBusy");

    let (code, stopped) = s.post(&format!("/api/runs/{id2}/stop"), "").await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(stopped["state"], "finished");
    s.wait_for(&id2, "finished").await;

    let (code, resumed) = s.post(&format!("/api/runs/{id}/resume"), "").await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(resumed["state"], "learning");
    assert!(resumed["applied_step"].as_u64().unwrap() - resumed["issued_step"].as_u64().unwrap() <= 1);

    s.post(&format!("/api/runs/{id}/stop"), "").await;
    s.wait_for(&id, "finished").await;
    let (code, _) = s.post(&format!("/api/runs/{id}/resume"), "").await;
    assert_eq!(code, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread")]
async fn evaluation_trace_is_retrievable() {
    let s = start_server().await;
    let (_, run) = s.post("/api/runs", "episodes = 1000\nsteps_cap = 2000\n").await;
    let id = run["id"].as_str().unwrap().to_string();
    s.wait_for(&id, "learning").await;
    s.post(&format!("/api/runs/{id}/pause"), "").await;

    let (code, eval) = s.post(&format!("/api/runs/{id}/evaluate"), "").await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(eval["state"], "paused");
    assert_eq!(eval["evaluation"], 1);
    let steps = eval["record"]["steps"].as_u64().unwrap();
    assert!(["goal", "timeout"].contains(&eval["record"]["done_reason"].as_str().unwrap()));
    assert_eq!(s.state(&id).await, "paused");

    let (code, trace) = s.get(&format!("/api/runs/{id}/evals/1")).await;
    assert_eq!(code, StatusCode::OK);
    let lines: Vec<Value> = trace.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len() as u64, steps);
    assert!(lines.iter().all(|l| l["state"] == "evaluating"));
    let (code, _) = s.get(&format!("/api/runs/{id}/evals/2")).await;
    assert_eq!(code, StatusCode::NOT_FOUND);

    s.post(&format!("/api/runs/{id}/stop"), "").await;
}

#[tokio::test(flavor = "multi_thread")]
async fn curve_matches_persisted_csv() {
    let s = start_server().await;
    let (_, run) = s.post("/api/runs", "agent = reference\nepisodes = 3\nsteps_cap = 3000\n").await;
    let id = run["id"].as_str().unwrap().to_string();
    s.wait_for(&id, "finished").await;
    let (code, body) = s.get(&format!("/api/runs/{id}/curve")).await;
    assert_eq!(code, StatusCode::OK);
    let curve: Value = serde_json::from_str(&body).unwrap();
    let rows = curve["curve"].as_array().unwrap();
    let csv = read_curve(&s.out_dir(&id).join(layout::CURVE)).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows, &serde_json::to_value(&csv).unwrap().as_array().unwrap().clone());
}

async fn read_stream(client: &Client, url: &str) -> Vec<Value> {
    let mut resp = client.get(url).send().await.unwrap();
    assert_eq!(resp.headers()["content-type"], "application/x-ndjson");
    let mut buf = Vec::new();
    while let Some(chunk) = resp.chunk().await.unwrap() {
        buf.extend_from_slice(&chunk);
    }
    String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn assert_ordered(samples: &[Value]) {
    for w in samples.windows(2) {
        assert!(w[1]["step"].as_u64() > w[0]["step"].as_u64());
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn telemetry_streams_live_then_replays() {
    let s = start_server().await;
    let (_, run) = s
        .post("/api/runs", "agent = reference\nepisodes = 1\nsteps_cap = 100\nrealtime = true\n")
        .await;
    let id = run["id"].as_str().unwrap().to_string();
    let url = format!("{}/api/runs/{id}/telemetry", s.base);
    let (a, b) = tokio::join!(read_stream(&s.client, &url), read_stream(&s.client, &url));
    for samples in [&a, &b] {
        assert!(!samples.is_empty() && samples.len() <= 100);
        assert_ordered(samples);
    }
    s.wait_for(&id, "finished").await;

    let resp = s.client.get(&url).send().await.unwrap();
    let replay = resp.bytes().await.unwrap();
    let file = std::fs::read(s.out_dir(&id).join(layout::TELEMETRY)).unwrap();
    assert_eq!(replay.as_ref(), file.as_slice());
    assert_eq!(file.iter().filter(|&&b| b == b'\n').count(), 100);
    // Live lines are the persisted lines.
    let text = String::from_utf8(file).unwrap();
    let last = serde_json::from_str::<Value>(text.lines().last().unwrap()).unwrap();
    assert_eq!(&last, a.last().unwrap());
}

fn exists(dir: &Path, name: &str) -> bool {
    dir.join(name).exists()
}

#[test]
fn cli_exit_codes_and_smoke_run() {
    use clap::Parser;
    use mcar_monitor::cli::{main_with, Cli};

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let code = main_with(Cli::parse_from([
        "mcar", "--agent", "reference", "--episodes", "3", "--seed", "7", "--out", out.to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    for name in [layout::CONFIG, layout::TELEMETRY, layout::CURVE] {
        assert!(exists(&out, name), "{name}");
    }
    assert_eq!(read_curve(&out.join(layout::CURVE)).unwrap().len(), 3);

    assert_eq!(main_with(Cli::parse_from(["mcar", "--episodes", "0"])), 2);

    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# short run\nagent = qlearning\nepisodes = 1\nsteps_cap = 200\n").unwrap();
    let q = dir.path().join("q");
    let code = main_with(Cli::parse_from(["mcar", "--config", cfg.to_str().unwrap(), "--out", q.to_str().unwrap()]));
    assert_eq!(code, 0);
    assert!(exists(&q, layout::WEIGHTS));
    let snapshot = RunConfig::load(&q.join(layout::CONFIG)).unwrap();
    assert_eq!(snapshot.env.step_cap, 200);

    let e = dir.path().join("e");
    let weights = q.join(layout::WEIGHTS);
    let code = main_with(Cli::parse_from([
        "mcar", "--eval", weights.to_str().unwrap(), "--episodes", "1", "--steps-cap", "200", "--out", e.to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    assert_eq!(read_curve(&e.join(layout::CURVE)).unwrap().len(), 1);

    let missing = dir.path().join("missing.bin");
    assert_eq!(main_with(Cli::parse_from(["mcar", "--eval", missing.to_str().unwrap()])), 1);
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "seed = x\n").unwrap();
    assert_eq!(main_with(Cli::parse_from(["mcar", "--config", bad.to_str().unwrap()])), 2);
}
