// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

//! Workload driver for the three experiment shapes.
//!
//! CHAINED: stage 1 forwards to stage 2 and so on; the last stage replies.
//! WORKFLOW: the driver calls each stage in turn and feeds the output on.
//! FANOUT: `parallelism` independent invocations at once.
//!
//! Every repetition issues one batch of `parallelism` concurrent requests
//! after an unmeasured warm-up batch.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use bytes::Bytes;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::guests;
use crate::message::Target;
use crate::node::Cluster;
use crate::runtime::{HandlerSpec, StateMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Shape {
    Chained,
    Workflow,
    Fanout,
}

impl Shape {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Chained => "CHAINED",
            Self::Workflow => "WORKFLOW",
            Self::Fanout => "FANOUT",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Shape {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "CHAINED" => Ok(Self::Chained),
            "WORKFLOW" => Ok(Self::Workflow),
            "FANOUT" => Ok(Self::Fanout),
            _ => Err(BenchError::Config(format!("unknown shape {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    InactorState,
    ExternalState,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::InactorState => "INACTOR_STATE",
            Self::ExternalState => "EXTERNAL_STATE",
        }
    }

    pub fn state_mode(self) -> StateMode {
        match self {
            Self::InactorState => StateMode::InActor,
            Self::ExternalState => StateMode::External,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "INACTOR_STATE" | "INACTOR" => Ok(Self::InactorState),
            "EXTERNAL_STATE" | "EXTERNAL" => Ok(Self::ExternalState),
            _ => Err(BenchError::Config(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WorkloadSpec {
    pub shape: Shape,
    pub mode: Mode,
    pub chain_length: usize,
    pub input_size: usize,
    pub parallelism: usize,
    pub repetitions: usize,
    pub seed: u64,
    /// Simulated work per stage (chained and workflow shapes).
    pub stage_work_ms: u32,
    /// Simulated I/O per fan-out request.
    pub fanout_io_ms: u32,
    /// Any single request slower than this aborts the run.
    pub request_timeout: Duration,
}

impl WorkloadSpec {
    pub fn new(shape: Shape) -> Self {
        Self {
            shape,
            mode: Mode::InactorState,
            chain_length: 3,
            input_size: 0,
            parallelism: 1,
            repetitions: 7,
            seed: 0x601d_f15,
            stage_work_ms: 0,
            fanout_io_ms: 5,
            request_timeout: Duration::from_secs(30),
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.chain_length < 1 {
            return Err(BenchError::Config("chain_length must be >= 1".into()));
        }
        if self.parallelism < 1 {
            return Err(BenchError::Config("parallelism must be >= 1".into()));
        }
        if self.repetitions < 1 {
            return Err(BenchError::Config("repetitions must be >= 1".into()));
        }
        Ok(())
    }

    fn prefix(&self) -> String {
        format!("bench-{}", self.mode.as_str().to_ascii_lowercase())
    }

    fn stage_name(&self, i: usize) -> String {
        format!("{}-{}-{i}", self.prefix(), self.shape.as_str().to_ascii_lowercase())
    }

    /// Handlers this workload needs, in stage order.
    pub fn handlers(&self) -> Vec<HandlerSpec> {
        let state = self.mode.state_mode();
        let specs: Vec<(String, Vec<u8>)> = match self.shape {
            Shape::Fanout => vec![(self.stage_name(0), guests::sleeper(self.fanout_io_ms))],
            Shape::Workflow => (0..self.chain_length)
                .map(|i| (self.stage_name(i), guests::chain_stage(None, self.stage_work_ms)))
                .collect(),
            Shape::Chained => (0..self.chain_length)
                .map(|i| {
                    let next = (i + 1 < self.chain_length).then(|| self.stage_name(i + 1));
                    (self.stage_name(i), guests::chain_stage(next.as_deref(), self.stage_work_ms))
                })
                .collect(),
        };
        specs
            .into_iter()
            .map(|(name, wasm)| HandlerSpec::new(name, wasm).with_state_mode(state))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid workload: {0}")]
    Config(String),
    #[error("deploy failed: {0}")]
    Deploy(String),
    #[error("bench aborted: {0}")]
    Aborted(String),
    #[error("report: {0}")]
    Report(String),
}

/// Something that can deploy handlers and invoke them with a reply.
#[async_trait]
pub trait Invoker: Send + Sync {
    async fn deploy(&self, spec: HandlerSpec) -> Result<(), BenchError>;
    async fn call(&self, target: Target, payload: Bytes) -> Result<Bytes, BenchError>;
}

#[async_trait]
impl Invoker for Cluster {
    async fn deploy(&self, spec: HandlerSpec) -> Result<(), BenchError> {
        Cluster::deploy(self, spec).map_err(|e| BenchError::Deploy(e.to_string()))
    }

    async fn call(&self, target: Target, payload: Bytes) -> Result<Bytes, BenchError> {
        let inv = self
            .invoke(target, payload, true)
            .await
            .map_err(|e| BenchError::Aborted(e.to_string()))?;
        Ok(inv.output.unwrap_or_default())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RepResult {
    pub rep: usize,
    pub latencies_ms: Vec<f64>,
    /// Mean request latency of this repetition.
    pub latency_ms: f64,
    pub completed: usize,
    pub wall_ms: f64,
    pub throughput_rps: f64,
    /// Per-stage completion offsets from request start (workflow only).
    pub stage_ms: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub spec: WorkloadSpec,
    pub reps: Vec<RepResult>,
    pub mean_latency_ms: f64,
    pub mean_throughput_rps: f64,
    pub p50_latency_ms: f64,
    pub started_unix_ms: u64,
}

impl BenchReport {
    pub fn samples(&self) -> impl Iterator<Item = f64> + '_ {
        self.reps.iter().flat_map(|r| r.latencies_ms.iter().copied())
    }

    /// Writes the CSV report: one row per repetition, then a `mean` row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), BenchError> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| BenchError::Report(e.to_string());
        w.write_record(["shape", "mode", "input_bytes", "parallelism", "rep", "latency_ms", "throughput_rps"])
            .map_err(err)?;
        let fixed = [
            self.spec.shape.as_str().to_owned(),
            self.spec.mode.as_str().to_owned(),
            self.spec.input_size.to_string(),
            self.spec.parallelism.to_string(),
        ];
        for r in &self.reps {
            let mut row = fixed.to_vec();
            row.extend([r.rep.to_string(), format!("{:.3}", r.latency_ms), format!("{:.3}", r.throughput_rps)]);
            w.write_record(&row).map_err(err)?;
        }
        let mut row = fixed.to_vec();
        row.extend([
            "mean".to_owned(),
            format!("{:.3}", self.mean_latency_ms),
            format!("{:.3}", self.mean_throughput_rps),
        ]);
        w.write_record(&row).map_err(err)?;
        w.flush().map_err(|e| BenchError::Report(e.to_string()))
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Median by the lower-middle rule on a sorted copy.
pub fn p50(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v[(v.len() - 1) / 2]
}

fn payload(rng: &mut ChaCha8Rng, size: usize) -> Bytes {
    let mut buf = vec![0u8; size];
    rng.fill_bytes(&mut buf);
    Bytes::from(buf)
}

struct Outcome {
    latency: Duration,
    stages: Vec<Duration>,
}

async fn one_request(inv: &dyn Invoker, spec: &WorkloadSpec, input: Bytes) -> Result<Outcome, BenchError> {
    let start = Instant::now();
    let mut stages = Vec::new();
    let fut = async {
        match spec.shape {
            Shape::Chained | Shape::Fanout => {
                let out = inv.call(Target::Handler(spec.stage_name(0)), input.clone()).await?;
                check_echo(&out, &input)
            }
            Shape::Workflow => {
                let mut data = input.clone();
                for i in 0..spec.chain_length {
                    data = inv.call(Target::Handler(spec.stage_name(i)), data).await?;
                    stages.push(start.elapsed());
                }
                check_echo(&data, &input)
            }
        }
    };
    match tokio::time::timeout(spec.request_timeout, fut).await {
        Ok(r) => r?,
        Err(_) => return Err(BenchError::Aborted(format!("request exceeded {:?}", spec.request_timeout))),
    }
    Ok(Outcome {
        latency: start.elapsed(),
        stages,
    })
}

fn check_echo(out: &[u8], input: &[u8]) -> Result<(), BenchError> {
    if out == input {
        Ok(())
    } else {
        Err(BenchError::Aborted(format!(
            "reply of {} bytes does not match the {}-byte input",
            out.len(),
            input.len()
        )))
    }
}

async fn batch(inv: &dyn Invoker, spec: &WorkloadSpec, rng: &mut ChaCha8Rng) -> Result<(Vec<Outcome>, Duration), BenchError> {
    let inputs: Vec<Bytes> = (0..spec.parallelism).map(|_| payload(rng, spec.input_size)).collect();
    let start = Instant::now();
    let results = futures::future::join_all(inputs.into_iter().map(|p| one_request(inv, spec, p))).await;
    let wall = start.elapsed();
    let outcomes = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok((outcomes, wall))
}

/// Deploys the workload's handlers and runs it.
pub async fn run_bench(inv: &dyn Invoker, spec: &WorkloadSpec) -> Result<BenchReport, BenchError> {
    spec.validate()?;
    for h in spec.handlers() {
        inv.deploy(h).await?;
    }
    let started_unix_ms = crate::clock::wall_millis();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    batch(inv, spec, &mut rng).await?;

    let mut reps = Vec::with_capacity(spec.repetitions);
    for rep in 0..spec.repetitions {
        let (outcomes, wall) = batch(inv, spec, &mut rng).await?;
        let latencies_ms: Vec<f64> = outcomes.iter().map(|o| o.latency.as_secs_f64() * 1e3).collect();
        let stage_ms = if spec.shape == Shape::Workflow {
            (0..spec.chain_length)
                .map(|i| mean(&outcomes.iter().map(|o| o.stages[i].as_secs_f64() * 1e3).collect::<Vec<_>>()))
                .collect()
        } else {
            Vec::new()
        };
        let wall_ms = wall.as_secs_f64() * 1e3;
        reps.push(RepResult {
            rep,
            latency_ms: mean(&latencies_ms),
            completed: outcomes.len(),
            throughput_rps: outcomes.len() as f64 / wall.as_secs_f64(),
            wall_ms,
            latencies_ms,
            stage_ms,
        });
    }
    let all: Vec<f64> = reps.iter().flat_map(|r| r.latencies_ms.iter().copied()).collect();
    Ok(BenchReport {
        mean_latency_ms: mean(&reps.iter().map(|r| r.latency_ms).collect::<Vec<_>>()),
        mean_throughput_rps: mean(&reps.iter().map(|r| r.throughput_rps).collect::<Vec<_>>()),
        p50_latency_ms: p50(&all),
        spec: spec.clone(),
        reps,
        started_unix_ms,
    })
}

/// Lower bound on the extra latency external state adds to a chain: each
/// stage past the first pays at least one read and one write round trip.
pub fn external_state_budget_ms(rtt_ms: f64, chain_length: usize) -> f64 {
    2.0 * rtt_ms * (chain_length.saturating_sub(1)) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node::{ClusterConfig, ExternalState};

    #[test]
    fn names_round_trip() {
        for s in [Shape::Chained, Shape::Workflow, Shape::Fanout] {
            assert_eq!(s.as_str().parse::<Shape>().unwrap(), s);
        }
        assert_eq!("external-state".parse::<Mode>().unwrap(), Mode::ExternalState);
        assert_eq!("inactor_state".parse::<Mode>().unwrap(), Mode::InactorState);
        assert!("zigzag".parse::<Shape>().is_err());
    }

    #[test]
    fn workload_validation() {
        let mut w = WorkloadSpec::new(Shape::Chained);
        assert!(w.validate().is_ok());
        assert_eq!((w.chain_length, w.repetitions), (3, 7));
        w.chain_length = 0;
        assert!(w.validate().is_err());
        let w = WorkloadSpec {
            parallelism: 0,
            ..WorkloadSpec::new(Shape::Fanout)
        };
        assert!(w.validate().is_err());
    }

    #[test]
    fn chained_handlers_link_stages() {
        let w = WorkloadSpec::new(Shape::Chained);
        let names: Vec<String> = w.handlers().into_iter().map(|h| h.name).collect();
        assert_eq!(names.len(), 3);
        assert!(names.iter().all(|n| n.starts_with("bench-inactor_state-chained-")));
    }

    #[test]
    fn quantiles() {
        assert_eq!(p50(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(p50(&[4.0, 1.0, 3.0, 2.0]), 2.0);
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(p50(&[]), 0.0);
    }

    #[test]
    fn payloads_are_seeded() {
        let a = payload(&mut ChaCha8Rng::seed_from_u64(9), 32);
        let b = payload(&mut ChaCha8Rng::seed_from_u64(9), 32);
        assert_eq!(a, b);
        assert_ne!(a, payload(&mut ChaCha8Rng::seed_from_u64(10), 32));
    }

    #[tokio::test(flavor = "multi_thread", worker_threads = 2)]
    async fn report_arithmetic_and_csv() {
        let cfg = ClusterConfig {
            external_state: ExternalState::Disabled,
            ..ClusterConfig::default()
        };
        let c = Cluster::in_memory(cfg).await.unwrap();
        let spec = WorkloadSpec {
            repetitions: 3,
            parallelism: 2,
            input_size: 64,
            ..WorkloadSpec::new(Shape::Workflow)
        };
        let report = run_bench(&c, &spec).await.unwrap();
        assert_eq!(report.reps.len(), 3);
        for r in &report.reps {
            assert_eq!(r.completed, 2);
            let recovered = r.throughput_rps * r.wall_ms / 1e3;
            assert!((recovered - r.completed as f64).abs() < 1e-9);
            assert_eq!(r.stage_ms.len(), 3);
            assert!(r.stage_ms.windows(2).all(|w| w[0] <= w[1]));
        }
        let mut out = Vec::new();
        report.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "shape,mode,input_bytes,parallelism,rep,latency_ms,throughput_rps");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].starts_with("WORKFLOW,INACTOR_STATE,64,2,mean,"));
    }

    #[tokio::test(flavor = "multi_thread", worker_threads = 2)]
    async fn chain_of_one_is_a_single_call() {
        let c = Cluster::in_memory(ClusterConfig {
            external_state: ExternalState::Disabled,
            ..ClusterConfig::default()
        })
        .await
        .unwrap();
        let spec = WorkloadSpec {
            chain_length: 1,
            repetitions: 2,
            ..WorkloadSpec::new(Shape::Chained)
        };
        let report = run_bench(&c, &spec).await.unwrap();
        assert!(report.mean_latency_ms > 0.0);
        let name = spec.stage_name(0);
        let mut direct = Vec::new();
        for _ in 0..20 {
            let t = Instant::now();
            c.invoke(Target::Handler(name.clone()), Bytes::new(), true).await.unwrap();
            direct.push(t.elapsed().as_secs_f64() * 1e3);
        }
        let gap = (report.mean_latency_ms - mean(&direct)).abs();
        assert!(gap < 2.0, "chain of one {:.3} ms vs direct {:.3} ms", report.mean_latency_ms, mean(&direct));
    }
}
