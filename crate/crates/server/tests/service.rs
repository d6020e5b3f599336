// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use goldfish_core::node::ExternalState;
use goldfish_core::{Cluster, ClusterConfig};
use goldfish_server::{Server, ServerError};

async fn cluster() -> Arc<Cluster> {
    let cfg = ClusterConfig {
        external_state: ExternalState::Disabled,
        ..ClusterConfig::default()
    };
    Arc::new(Cluster::in_memory(cfg).await.unwrap())
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn second_bind_reports_port_in_use() {
    let first = Server::bind("127.0.0.1:0", cluster().await).await.unwrap();
    let addr = first.local_addr().unwrap().to_string();
    let err = Server::bind(&addr, cluster().await).await.err().unwrap();
    assert!(matches!(err, ServerError::PortInUse(ref a) if *a == addr), "{err:?}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn malformed_bodies_are_bad_requests() {
    let server = Server::bind("127.0.0.1:0", cluster().await).await.unwrap();
    let url = format!("http://{}", server.local_addr().unwrap());
    tokio::spawn(server.run(std::future::pending()));
    let http = reqwest::Client::new();
    let resp = http
        .post(format!("{url}/v1/invoke"))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 400);
    let body: serde_json::Value = resp.json().await.unwrap();
    assert_eq!(body["kind"], "bad_request");

    let resp = http
        .post(format!("{url}/v1/invoke"))
        .json(&serde_json::json!({"target": "x", "payload": "%%%"}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 400);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn external_stop_drains_the_cluster() {
    let c = cluster().await;
    let server = Server::bind("127.0.0.1:0", c.clone()).await.unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let task = tokio::spawn(server.run(async move {
        let _ = rx.await;
    }));
    tx.send(()).unwrap();
    task.await.unwrap().unwrap();
    assert!(!c.is_accepting());
}
