// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

use std::time::Duration;

use goldfish_core::buffer::BufferConfig;
use goldfish_core::dispatcher::NodeConfig;
use goldfish_core::node::ExternalState;
use goldfish_core::{ClusterConfig, Directive};

pub fn config() -> ClusterConfig {
    ClusterConfig {
        nodes: 1,
        node: NodeConfig {
            buffer: BufferConfig {
                max_wait: Duration::from_secs(30),
                max_queued: 2000,
                capacity: 4096,
                max_actors: 64,
                ..BufferConfig::default()
            },
            ..NodeConfig::new("test")
        },
        external_state: ExternalState::Disabled,
        invoke_timeout: Duration::from_secs(30),
        drain_timeout: Duration::from_secs(10),
        trace: true,
    }
}

/// Payload for the scripted guest: directive, then optional sleep.
pub fn script(d: Directive, sleep_ms: u32) -> Vec<u8> {
    let mut p = vec![d.code()];
    if sleep_ms > 0 {
        p.extend_from_slice(&sleep_ms.to_le_bytes());
    }
    p
}

pub async fn eventually<F: Fn() -> bool>(timeout: Duration, f: F) -> bool {
    let deadline = tokio::time::Instant::now() + timeout;
    while tokio::time::Instant::now() < deadline {
        if f() {
            return true;
        }
        tokio::time::sleep(Duration::from_millis(2)).await;
    }
    f()
}
