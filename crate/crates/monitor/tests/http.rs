mod common;

use std::time::Duration;

use common::{append, frame, header, line, scripted_bundle};
use futures::StreamExt;
use ocae_core::simgen::{generate, GeneratorConfig};
use ocae_monitor::{serve_on, JobState, MonitorConfig, RetrainJob, Shared, Snapshot};
use serde_json::{json, Value};
use tokio::sync::oneshot;

struct Running {
    base: String,
    cfg: MonitorConfig,
    stop: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<Snapshot>,
    _dir: tempfile::TempDir,
}

impl Running {
    async fn stop(mut self) -> Snapshot {
        self.stop.take().unwrap().send(()).unwrap();
        self.task.await.unwrap()
    }
}

async fn start() -> Running {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = MonitorConfig::new(dir.path().join("model"), dir.path().join("data.csv"));
    cfg.interval = Duration::from_millis(50);
    cfg.models_root = dir.path().join("models");
    append(&cfg.csv, &header());
    let shared = Shared::new(scripted_bundle(), &cfg);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = oneshot::channel();
    let task = {
        let cfg = cfg.clone();
        tokio::spawn(async move {
            serve_on(shared, cfg, listener, async {
                let _ = rx.await;
            })
            .await
            .unwrap()
        })
    };
    Running {
        base,
        cfg,
        stop: Some(tx),
        task,
        _dir: dir,
    }
}

fn write_generated(path: &std::path::Path, rows: usize) {
    let frames = generate(&GeneratorConfig::default(), rows).unwrap();
    let file = std::fs::File::create(path).unwrap();
    ocae_core::preprocess::write_csv(file, frames.iter().map(|f| f.to_cells())).unwrap();
}

async fn wait_terminal(client: &reqwest::Client, base: &str, id: u64) -> RetrainJob {
    for _ in 0..2400 {
        let job: RetrainJob = client
            .get(format!("{base}/retrain/{id}"))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        if job.state.is_terminal() {
            return job;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("job {id} did not finish");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn health_state_and_alarm_ack() {
    let srv = start().await;
    let c = reqwest::Client::new();
    let health: Value = c.get(format!("{}/health", srv.base)).send().await.unwrap().json().await.unwrap();
    assert_eq!(health, json!({"status": "ok"}));

    append(&srv.cfg.csv, &(line(&frame(0, true)) + &line(&frame(1, true)) + &line(&frame(2, false))));
    let mut state: Value = Value::Null;
    for _ in 0..100 {
        state = c.get(format!("{}/state", srv.base)).send().await.unwrap().json().await.unwrap();
        if state["last_row"] == 3 {
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    assert_eq!(state["last_row"], 3);
    assert_eq!(state["streak"], 0);
    assert_eq!(state["alarm_n"], 2);
    assert_eq!(state["interval_s"], 0.05);
    assert_eq!(state["threshold"], 0.1);
    assert!(state["model_id"].as_str().unwrap().len() == 64);

    let alarms: Value = c.get(format!("{}/alarms", srv.base)).send().await.unwrap().json().await.unwrap();
    let id = alarms[0]["id"].as_u64().unwrap();
    assert_eq!(alarms[0]["acknowledged"], false);
    let r = c.post(format!("{}/alarms/{id}/ack", srv.base)).send().await.unwrap();
    assert_eq!(r.status(), 200);
    let rec: Value = r.json().await.unwrap();
    assert_eq!(rec["acknowledged"], true);
    let again = c.post(format!("{}/alarms/{id}/ack", srv.base)).send().await.unwrap();
    assert_eq!(again.status(), 200);
    let again: Value = again.json().await.unwrap();
    assert_eq!(again["acknowledged_at"], rec["acknowledged_at"]);
    let missing = c.post(format!("{}/alarms/999/ack", srv.base)).send().await.unwrap();
    assert_eq!(missing.status(), 404);
    assert_eq!(c.get(format!("{}/retrain/77", srv.base)).send().await.unwrap().status(), 404);

    let snap = srv.stop().await;
    assert_eq!(snap.alarms_fired, 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn ndjson_stream_carries_readings_and_alarms() {
    let srv = start().await;
    let resp = reqwest::get(format!("{}/stream", srv.base)).await.unwrap();
    assert_eq!(resp.headers()["content-type"], "application/x-ndjson");
    let mut body = resp.bytes_stream();
    append(&srv.cfg.csv, &(line(&frame(0, true)) + &line(&frame(1, true))));

    let mut buf = String::new();
    while buf.lines().count() < 3 {
        let chunk = tokio::time::timeout(Duration::from_secs(10), body.next()).await.unwrap().unwrap().unwrap();
        buf.push_str(std::str::from_utf8(&chunk).unwrap());
    }
    let msgs: Vec<Value> = buf.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(msgs[0]["type"], "reading");
    assert_eq!(msgs[0]["seq"], 0);
    assert_eq!(msgs[0]["anomaly"], true);
    assert_eq!(msgs[1]["type"], "reading");
    assert_eq!(msgs[2]["type"], "alarm");
    assert_eq!(msgs[2]["streak"], 2);
    assert_eq!(msgs[2]["seq"], 1);
    assert_eq!(msgs[2]["model_id"], msgs[0]["model_id"]);
    srv.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn websocket_stream_frames_messages() {
    use tokio_tungstenite::tungstenite::Message;
    let srv = start().await;
    let url = srv.base.replace("http://", "ws://") + "/stream";
    let (mut ws, _) = tokio_tungstenite::connect_async(url).await.unwrap();
    // the subscription exists once the handshake is done
    append(&srv.cfg.csv, &line(&frame(0, false)));
    let msg = tokio::time::timeout(Duration::from_secs(10), ws.next()).await.unwrap().unwrap().unwrap();
    let Message::Text(text) = msg else { panic!("expected text frame, got {msg:?}") };
    let v: Value = serde_json::from_str(text.as_str()).unwrap();
    assert_eq!(v["type"], "reading");
    assert_eq!(v["anomaly"], false);
    assert_eq!(v["channels"].as_array().unwrap().len(), 7);
    ws.close(None).await.unwrap();
    srv.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn lagging_subscriber_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = MonitorConfig::new(dir.path().join("m"), dir.path().join("d.csv"));
    let shared = Shared::new(scripted_bundle(), &cfg);
    let mut rx = shared.subscribe();
    for i in 0..ocae_monitor::service::STREAM_BUFFER + 10 {
        shared.broadcast(ocae_monitor::StreamMessage::Retrain(ocae_monitor::messages::RetrainUpdate {
            job_id: i as u64,
            state: JobState::Training,
        }));
    }
    assert!(matches!(
        rx.recv().await,
        Err(tokio::sync::broadcast::error::RecvError::Lagged(_))
    ));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn retrain_swaps_bundle_and_rejects_overlap() {
    let srv = start().await;
    let c = reqwest::Client::new();
    let before: Value = c.get(format!("{}/state", srv.base)).send().await.unwrap().json().await.unwrap();

    let data = srv.cfg.csv.with_file_name("train.csv");
    write_generated(&data, 2000);
    let mut events = reqwest::get(format!("{}/stream", srv.base)).await.unwrap().bytes_stream();

    let r = c
        .post(format!("{}/retrain", srv.base))
        .json(&json!({"csv_path": data, "trials": 2, "seed": 7}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 202);
    let id = r.json::<Value>().await.unwrap()["job_id"].as_u64().unwrap();

    let overlap = c
        .post(format!("{}/retrain", srv.base))
        .json(&json!({"csv_path": data}))
        .send()
        .await
        .unwrap();
    assert_eq!(overlap.status(), 409);

    let job = wait_terminal(&c, &srv.base, id).await;
    assert_eq!(job.state, JobState::Done, "{job:?}");
    let dir = job.bundle_dir.clone().unwrap();
    assert!(dir.starts_with(&srv.cfg.models_root));
    let reloaded = ocae_core::load_bundle(&dir).unwrap();
    assert_eq!(Some(reloaded.model_id.clone()), job.model_id);
    assert_ne!(before["model_id"].as_str().unwrap(), reloaded.model_id);

    // job transitions were streamed in order
    let mut buf = String::new();
    while !buf.contains("\"done\"") {
        let chunk = tokio::time::timeout(Duration::from_secs(10), events.next()).await.unwrap().unwrap().unwrap();
        buf.push_str(std::str::from_utf8(&chunk).unwrap());
    }
    let states: Vec<String> = buf
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .filter(|v| v["type"] == "retrain")
        .map(|v| v["state"].as_str().unwrap().to_owned())
        .collect();
    assert_eq!(states, ["collecting", "tuning", "training", "deploying", "done"]);

    // rows read after the swap are scored by the new bundle
    append(&srv.cfg.csv, &line(&frame(5, false)));
    let mut reading = Value::Null;
    while reading.is_null() {
        let chunk = tokio::time::timeout(Duration::from_secs(10), events.next()).await.unwrap().unwrap().unwrap();
        for l in std::str::from_utf8(&chunk).unwrap().lines() {
            let v: Value = serde_json::from_str(l).unwrap();
            if v["type"] == "reading" {
                reading = v;
            }
        }
    }
    assert_eq!(reading["model_id"], reloaded.model_id.as_str());

    // a second job may start once the first finished
    let small = srv.cfg.csv.with_file_name("small.csv");
    write_generated(&small, 10);
    let r = c
        .post(format!("{}/retrain", srv.base))
        .json(&json!({"csv_path": small}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 202);
    let id2 = r.json::<Value>().await.unwrap()["job_id"].as_u64().unwrap();
    let failed = wait_terminal(&c, &srv.base, id2).await;
    assert_eq!(failed.state, JobState::Failed);
    assert!(failed.error.unwrap().contains("insufficient data"));
    // the deployed bundle is untouched by the failure
    let after: Value = c.get(format!("{}/state", srv.base)).send().await.unwrap().json().await.unwrap();
    assert_eq!(after["model_id"], reloaded.model_id.as_str());

    let bad = c.post(format!("{}/retrain", srv.base)).body("{").header("content-type", "application/json").send().await.unwrap();
    assert_eq!(bad.status(), 400);
    srv.stop().await;
}
