//! Starts the review service on a free port, labels one query over HTTP and
//! reads back the metrics.

use std::future::IntoFuture;

use cybokclaw::credits::BroadCategoryMap;
use cybokclaw::eval::Dataset;
use cybokclaw::review::{router, ReviewState, ServiceConfig};
use cybokclaw::{Engine, Strictness};
use serde_json::{json, Value};

const DATASET: &str =
    r#"{"query_id":"q1","kwop":"firewall","ref_ka":"NS","ref_topic":"Network Security Tools","ref_im":"***"}"#;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let engine = Engine::builtin();
    let (ds, _) = Dataset::parse("demo", DATASET, Strictness::Strict)?;
    let state = ReviewState::new(
        &engine,
        ServiceConfig {
            datasets: vec![ds],
            split: "demo".into(),
            selection: engine.default_selection(),
            event_log: None,
            categories: BroadCategoryMap::builtin(),
            modules: vec![],
        },
    )?;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let base = format!("http://{}", listener.local_addr()?);
    tokio::spawn(axum::serve(listener, router(state)).into_future());
    let http = reqwest::Client::new();

    let c: Value = http
        .get(format!("{base}/api/datasets/demo/queries/q1/candidates"))
        .send()
        .await?
        .json()
        .await?;
    for cand in c["result"]["candidates"].as_array().into_iter().flatten() {
        let rank = cand["rank"].as_u64().unwrap_or(0);
        let label = if cand["im"] == "Firewalls" {
            "exact"
        } else {
            "not_acceptable"
        };
        let ack: Value = http
            .post(format!("{base}/api/labels"))
            .json(&json!({"dataset": "demo", "query_id": "q1", "rank": rank, "label": label}))
            .send()
            .await?
            .json()
            .await?;
        println!("rank {rank}: {} -> {label} (revision {})", cand["im"], ack["revision"]);
    }

    let m: Value = http.get(format!("{base}/api/metrics")).send().await?.json().await?;
    println!("{}", serde_json::to_string_pretty(&m["split"])?);
    print!(
        "{}",
        http.get(format!("{base}/api/export/labels"))
            .send()
            .await?
            .text()
            .await?
    );
    Ok(())
}
