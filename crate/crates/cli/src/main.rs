// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

//! `goldfish`: boots nodes, deploys handlers, invokes actors and runs the
//! workload benches.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use goldfish_client::{Client, ClientError, DEFAULT_ADDR};
use goldfish_core::api::DeployRequest;
use goldfish_core::bench::{run_bench, BenchError, BenchReport, Invoker, Mode, Shape, WorkloadSpec};
use goldfish_core::buffer::BufferConfig;
use goldfish_core::dispatcher::NodeConfig;
use goldfish_core::node::{ClusterError, ExternalState};
use goldfish_core::runtime::StateMode;
use goldfish_core::store::{MemoryStore, StoreBackend, StoreServer};
use goldfish_core::{guests, Cluster, ClusterConfig};
use goldfish_server::{Server, ServerError};
use thiserror::Error;

#[derive(Parser)]
#[command(name = "goldfish", version, about = "Short-term stateful serverless actors")]
struct Cli {
    /// Control API of a running node.
    #[arg(long, global = true, env = "GOLDFISH_ADDR", default_value = DEFAULT_ADDR)]
    addr: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run or stop a node.
    #[command(subcommand)]
    Node(NodeCmd),
    /// Deploy a WebAssembly handler module under a name.
    Deploy {
        name: String,
        module: PathBuf,
        #[arg(long, default_value = "inactor", value_parser = parse_state_mode)]
        state_mode: StateMode,
    },
    /// Send a message to an actor id or handler name.
    Invoke {
        target: String,
        #[arg(long, conflicts_with = "payload_file")]
        payload: Option<String>,
        #[arg(long)]
        payload_file: Option<PathBuf>,
        /// Wait for the reply and print it.
        #[arg(long)]
        wait: bool,
    },
    /// Run a workload and write a CSV report.
    Bench(BenchArgs),
    /// Show nodes, queues and actors.
    Status {
        #[arg(long)]
        json: bool,
    },
    /// Run a standalone state store.
    #[command(subcommand)]
    Store(StoreCmd),
    /// Write the built-in guest modules to a directory.
    Guests { dir: PathBuf },
}

#[derive(Subcommand)]
enum NodeCmd {
    /// Serve the control API until stopped.
    Start(NodeStart),
    /// Drain and stop the node at `--addr`.
    Stop,
}

#[derive(Args)]
struct NodeStart {
    #[arg(long, default_value = "127.0.0.1:7878")]
    listen: String,
    /// In-process nodes sharing the store.
    #[arg(long, default_value_t = 1)]
    nodes: usize,
    #[arg(long, default_value = "node")]
    name: String,
    /// `memory` or `remote <host:port>`.
    #[arg(long, env = "GOLDFISH_STORE", default_value = "memory")]
    store: String,
    #[arg(long, default_value_t = BufferConfig::default().max_actors)]
    max_actors: usize,
    #[arg(long, default_value_t = 1000)]
    max_wait_ms: u64,
    #[arg(long, default_value_t = BufferConfig::default().max_queued)]
    max_queued: usize,
    #[arg(long, default_value_t = BufferConfig::default().capacity)]
    capacity: usize,
    #[arg(long, default_value_t = 30_000)]
    suspend_timeout_ms: u64,
    #[arg(long, default_value_t = 60_000)]
    invoke_timeout_ms: u64,
    /// One-way delay injected in front of the external state store.
    #[arg(long, default_value_t = 5)]
    external_delay_ms: u64,
    /// Address of an external state store; a loopback one is started if unset.
    #[arg(long)]
    external_store: Option<String>,
    #[arg(long)]
    no_external_state: bool,
}

#[derive(Subcommand)]
enum StoreCmd {
    Start {
        #[arg(long, default_value = "127.0.0.1:7979")]
        listen: String,
    },
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_parser = parse_shape)]
    shape: Shape,
    #[arg(long, default_value_t = 0)]
    input_size: usize,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    #[arg(long, default_value = "inactor_state", value_parser = parse_mode)]
    mode: Mode,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    repetitions: usize,
    #[arg(long, default_value_t = 3)]
    chain_length: usize,
    #[arg(long, default_value_t = WorkloadSpec::new(Shape::Chained).seed)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    stage_work_ms: u32,
    #[arg(long, default_value_t = 5)]
    fanout_io_ms: u32,
    #[arg(long, default_value_t = 30_000)]
    timeout_ms: u64,
    /// Run against a private in-process cluster instead of `--addr`.
    #[arg(long)]
    in_process: bool,
}

fn parse_shape(s: &str) -> Result<Shape, String> {
    s.parse().map_err(|e: BenchError| e.to_string())
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: BenchError| e.to_string())
}

fn parse_state_mode(s: &str) -> Result<StateMode, String> {
    parse_mode(s).map(Mode::state_mode)
}

#[derive(Debug, Error)]
enum CliError {
    #[error("ConfigInvalid: {0}")]
    ConfigInvalid(String),
    #[error("PortInUse: {0}")]
    PortInUse(String),
    #[error("{0}")]
    Client(#[from] ClientError),
    #[error("{0}")]
    Bench(#[from] BenchError),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("{0}")]
    Cluster(ClusterError),
    #[error("{0}")]
    Server(ServerError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::ConfigInvalid(_) => 2,
            Self::PortInUse(_) => 3,
            _ => 1,
        }
    }

    fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Self {
        let context = context.into();
        move |source| Self::Io { context, source }
    }
}

impl From<ClusterError> for CliError {
    fn from(e: ClusterError) -> Self {
        match e {
            ClusterError::Config(c) => Self::ConfigInvalid(c.to_string()),
            other => Self::Cluster(other),
        }
    }
}

impl From<ServerError> for CliError {
    fn from(e: ServerError) -> Self {
        match e {
            ServerError::PortInUse(a) => Self::PortInUse(a),
            other => Self::Server(other),
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("GOLDFISH_LOG").unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("goldfish: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

async fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Node(NodeCmd::Start(args)) => node_start(args).await,
        Command::Node(NodeCmd::Stop) => {
            let report = Client::new(&cli.addr)?.shutdown().await?;
            println!(
                "stopped: drained={} remaining_messages={} remaining_actors={}",
                report.drained, report.remaining_messages, report.remaining_actors
            );
            Ok(())
        }
        Command::Deploy {
            name,
            module,
            state_mode,
        } => {
            let bytes = tokio::fs::read(&module)
                .await
                .map_err(CliError::io(format!("reading {}", module.display())))?;
            let req = DeployRequest {
                name,
                module: bytes,
                state_mode,
                limits: None,
            };
            let r = Client::new(&cli.addr)?.deploy(&req).await?;
            println!("deployed {} (handlers: {})", r.name, r.handlers.join(", "));
            Ok(())
        }
        Command::Invoke {
            target,
            payload,
            payload_file,
            wait,
        } => {
            let payload = match (payload, payload_file) {
                (_, Some(path)) => tokio::fs::read(&path)
                    .await
                    .map_err(CliError::io(format!("reading {}", path.display())))?,
                (Some(p), None) => p.into_bytes(),
                (None, None) => Vec::new(),
            };
            let r = Client::new(&cli.addr)?.invoke(&target, &payload, wait).await?;
            eprintln!(
                "message {} routed {} to {} in {:.2} ms",
                r.message_id,
                r.decision,
                r.actor_id.as_deref().or(r.node.as_deref()).unwrap_or("-"),
                r.latency_ms
            );
            if let Some(out) = r.output {
                use std::io::Write;
                let mut stdout = std::io::stdout();
                stdout.write_all(&out).map_err(CliError::io("writing output"))?;
                if !out.ends_with(b"\n") {
                    let _ = writeln!(stdout);
                }
            }
            Ok(())
        }
        Command::Bench(args) => bench(&cli.addr, args).await,
        Command::Status { json } => {
            let status = Client::new(&cli.addr)?.status().await?;
            if json {
                println!("{}", serde_json::to_string_pretty(&status).expect("json"));
            } else {
                print_status(&status);
            }
            Ok(())
        }
        Command::Store(StoreCmd::Start { listen }) => {
            let server = StoreServer::bind(&listen, Arc::new(MemoryStore::new()))
                .await
                .map_err(|e| match e.kind() {
                    std::io::ErrorKind::AddrInUse => CliError::PortInUse(listen.clone()),
                    _ => CliError::Io {
                        context: format!("binding {listen}"),
                        source: e,
                    },
                })?;
            println!("store listening on {}", server.local_addr());
            tokio::signal::ctrl_c().await.map_err(CliError::io("waiting for ctrl-c"))?;
            Ok(())
        }
        Command::Guests { dir } => {
            tokio::fs::create_dir_all(&dir)
                .await
                .map_err(CliError::io(format!("creating {}", dir.display())))?;
            for name in guests::BUILTIN_NAMES {
                let path = dir.join(format!("{name}.wasm"));
                let wasm = guests::builtin(name).expect("listed built-in");
                tokio::fs::write(&path, wasm)
                    .await
                    .map_err(CliError::io(format!("writing {}", path.display())))?;
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn cluster_config(args: &NodeStart) -> Result<ClusterConfig, CliError> {
    let external_state = if args.no_external_state {
        ExternalState::Disabled
    } else {
        let one_way_delay = Duration::from_millis(args.external_delay_ms);
        match &args.external_store {
            Some(addr) => ExternalState::Remote {
                addr: addr.clone(),
                one_way_delay,
            },
            None => ExternalState::Loopback { one_way_delay },
        }
    };
    Ok(ClusterConfig {
        nodes: args.nodes,
        node: NodeConfig {
            lifecycle_suspend_timeout: Duration::from_millis(args.suspend_timeout_ms),
            buffer: BufferConfig {
                max_actors: args.max_actors,
                max_wait: Duration::from_millis(args.max_wait_ms),
                max_queued: args.max_queued,
                capacity: args.capacity,
                ..BufferConfig::default()
            },
            ..NodeConfig::new(args.name.as_str())
        },
        external_state,
        invoke_timeout: Duration::from_millis(args.invoke_timeout_ms),
        ..ClusterConfig::default()
    })
}

async fn node_start(args: NodeStart) -> Result<(), CliError> {
    let config = cluster_config(&args)?;
    config.validate().map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
    let backend: StoreBackend = args
        .store
        .parse()
        .map_err(|e: goldfish_core::ConfigError| CliError::ConfigInvalid(e.to_string()))?;
    let store = backend.open().await.map_err(|e| CliError::Cluster(e.into()))?;
    // Bind before booting nodes so a taken port leaves no registrations.
    let listener = tokio::net::TcpListener::bind(&args.listen).await;
    let listener = match listener {
        Ok(l) => l,
        Err(e) if e.kind() == std::io::ErrorKind::AddrInUse => return Err(CliError::PortInUse(args.listen)),
        Err(e) => {
            return Err(CliError::Io {
                context: format!("binding {}", args.listen),
                source: e,
            })
        }
    };
    let cluster = Arc::new(Cluster::start(config, store).await?);
    let server = Server::from_listener(listener, cluster.clone());
    println!(
        "goldfish listening on http://{} ({} node(s))",
        server.local_addr()?,
        cluster.nodes().len()
    );
    server
        .run(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    println!("goldfish stopped");
    Ok(())
}

async fn bench(addr: &str, args: BenchArgs) -> Result<(), CliError> {
    let spec = WorkloadSpec {
        shape: args.shape,
        mode: args.mode,
        chain_length: args.chain_length,
        input_size: args.input_size,
        parallelism: args.parallelism,
        repetitions: args.repetitions,
        seed: args.seed,
        stage_work_ms: args.stage_work_ms,
        fanout_io_ms: args.fanout_io_ms,
        request_timeout: Duration::from_millis(args.timeout_ms),
    };
    spec.validate().map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
    let report = if args.in_process {
        let cluster = Cluster::in_memory(ClusterConfig::default()).await?;
        let r = run_on(&cluster, &spec).await;
        cluster.shutdown().await;
        r?
    } else {
        run_on(&Client::new(addr)?, &spec).await?
    };
    let file = std::fs::File::create(&args.out).map_err(CliError::io(format!("creating {}", args.out.display())))?;
    report.write_csv(file)?;
    eprintln!(
        "{} {} input={}B parallelism={} reps={} seed={:#x}: mean {:.3} ms, p50 {:.3} ms, {:.1} req/s -> {}",
        spec.shape,
        spec.mode,
        spec.input_size,
        spec.parallelism,
        spec.repetitions,
        spec.seed,
        report.mean_latency_ms,
        report.p50_latency_ms,
        report.mean_throughput_rps,
        args.out.display()
    );
    Ok(())
}

async fn run_on(inv: &dyn Invoker, spec: &WorkloadSpec) -> Result<BenchReport, BenchError> {
    run_bench(inv, spec).await
}

fn print_status(s: &serde_json::Value) {
    let str_of = |v: &serde_json::Value| v.as_str().map(str::to_owned).unwrap_or_else(|| v.to_string());
    println!("accepting: {}", s["accepting"]);
    let handlers: Vec<String> = s["handlers"].as_array().into_iter().flatten().map(str_of).collect();
    println!("handlers: {}", handlers.join(", "));
    println!("middleware:");
    for m in s["middleware"].as_array().into_iter().flatten() {
        println!("  {} seq={}", str_of(&m["address"]), m["seq"]);
    }
    for n in s["nodes"].as_array().into_iter().flatten() {
        let b = &n["buffer"];
        println!(
            "node {}: actors {}/{} waiting {} ready {} done {} oldest_waiting_ms {}",
            str_of(&n["address"]),
            b["actors"],
            n["max_actors"],
            b["waiting"],
            b["ready"],
            b["done"],
            b["oldest_waiting_ms"]
        );
        for a in n["actors"].as_array().into_iter().flatten() {
            println!(
                "  {} {} {} {}{}",
                str_of(&a["actor_id"]),
                str_of(&a["handler"]),
                str_of(&a["phase"]),
                str_of(&a["directive"]),
                if a["blocked"] == true { " blocked" } else { "" }
            );
        }
    }
}
