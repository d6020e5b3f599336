// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

//! Sandbox host: compiles handler modules once and runs every invocation in a
//! fresh instance, so guest linear memory never outlives one message.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use bytes::Bytes;
use parking_lot::Mutex;
use wasmtime::{
    Caller, Config, Engine, ExternType, InstancePre, Linker, Module, ResourceLimiter, Store, Trap,
    ValType,
};

use super::{HandlerSpec, ResourceLimits, RuntimeError};
use crate::abi::{encode_input, GuestOutput, Outbound};
use crate::ids::ActorId;
use crate::message::Target;

const EPOCH_TICK: Duration = Duration::from_millis(5);
const WASM_PAGE: u64 = 64 * 1024;
const IMPORT_MODULE: &str = "goldfish";

/// Return codes of `gf_send`.
pub const SEND_OK: i32 = 0;
pub const SEND_TOO_LARGE: i32 = 1;
pub const SEND_BAD_TARGET: i32 = 2;

struct MemoryLimiter {
    max_bytes: usize,
    exhausted: bool,
}

impl ResourceLimiter for MemoryLimiter {
    fn memory_growing(
        &mut self,
        _current: usize,
        desired: usize,
        _maximum: Option<usize>,
    ) -> wasmtime::Result<bool> {
        if desired > self.max_bytes {
            self.exhausted = true;
            return Err(wasmtime::Error::msg("guest memory limit exceeded"));
        }
        Ok(true)
    }

    fn table_growing(
        &mut self,
        _current: usize,
        _desired: usize,
        _maximum: Option<usize>,
    ) -> wasmtime::Result<bool> {
        Ok(true)
    }
}

struct HostState {
    limiter: MemoryLimiter,
    deadline: Instant,
    timed_out: bool,
    max_payload: usize,
    sent: Vec<Outbound>,
}

/// A validated, compiled handler ready to instantiate.
pub struct PreparedHandler {
    pub spec: HandlerSpec,
    pre: InstancePre<HostState>,
}

impl std::fmt::Debug for PreparedHandler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PreparedHandler")
            .field("name", &self.spec.name)
            .finish_non_exhaustive()
    }
}

/// Result of one guest execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuestRun {
    pub output: GuestOutput,
    /// Outbound messages: `gf_send` calls in call order, then the record's list.
    pub outbound: Vec<Outbound>,
}

pub struct WasmHost {
    engine: Engine,
    linker: Linker<HostState>,
    cache: Mutex<HashMap<String, Arc<PreparedHandler>>>,
    ticking: Arc<AtomicBool>,
}

impl WasmHost {
    pub fn new() -> Result<Self, RuntimeError> {
        let mut config = Config::new();
        config.epoch_interruption(true);
        let engine = Engine::new(&config).map_err(|e| RuntimeError::Internal(e.to_string()))?;
        let linker = build_linker(&engine)?;

        let ticking = Arc::new(AtomicBool::new(true));
        let flag = ticking.clone();
        let ticker = engine.clone();
        std::thread::Builder::new()
            .name("goldfish-epoch".into())
            .spawn(move || {
                while flag.load(Ordering::Relaxed) {
                    std::thread::sleep(EPOCH_TICK);
                    ticker.increment_epoch();
                }
            })
            .map_err(|e| RuntimeError::Internal(e.to_string()))?;

        Ok(Self {
            engine,
            linker,
            cache: Mutex::new(HashMap::new()),
            ticking,
        })
    }

    /// Compiles and validates a handler, reusing the cached compilation when
    /// the same name is prepared again with identical bytes.
    pub fn prepare(&self, spec: &HandlerSpec) -> Result<Arc<PreparedHandler>, RuntimeError> {
        if let Some(hit) = self.cache.lock().get(&spec.name) {
            if hit.spec.module_binary == spec.module_binary
                && hit.spec.limits == spec.limits
                && hit.spec.state_mode == spec.state_mode
            {
                return Ok(hit.clone());
            }
        }
        let module = Module::new(&self.engine, &spec.module_binary)
            .map_err(|e| RuntimeError::ModuleInvalid(format!("{e:#}")))?;
        validate_exports(&module, &spec.limits)?;
        let pre = self
            .linker
            .instantiate_pre(&module)
            .map_err(|e| RuntimeError::ModuleInvalid(format!("{e:#}")))?;
        let prepared = Arc::new(PreparedHandler {
            spec: spec.clone(),
            pre,
        });
        self.cache.lock().insert(spec.name.clone(), prepared.clone());
        Ok(prepared)
    }

    /// Runs the guest entry point once in a fresh instance.
    pub fn run(
        &self,
        handler: &PreparedHandler,
        state: &[u8],
        payload: &[u8],
    ) -> Result<GuestRun, RuntimeError> {
        let limits = &handler.spec.limits;
        let mut store = Store::new(
            &self.engine,
            HostState {
                limiter: MemoryLimiter {
                    max_bytes: limits.max_memory_bytes,
                    exhausted: false,
                },
                deadline: Instant::now() + limits.max_duration,
                timed_out: false,
                max_payload: limits.max_payload_bytes,
                sent: Vec::new(),
            },
        );
        store.limiter(|s| &mut s.limiter);
        let ticks = limits.max_duration.as_nanos().div_ceil(EPOCH_TICK.as_nanos()).max(1);
        store.set_epoch_deadline(ticks as u64);
        store.epoch_deadline_trap();

        let result = call_guest(&mut store, handler, state, payload);
        let (exhausted, timed_out) = (store.data().limiter.exhausted, store.data().timed_out);
        match result {
            Ok(output) => {
                let mut outbound = std::mem::take(&mut store.data_mut().sent);
                outbound.extend(output.outbound.iter().cloned());
                if let Some(big) = outbound.iter().find(|o| o.payload.len() > limits.max_payload_bytes) {
                    return Err(RuntimeError::PayloadTooLarge {
                        len: big.payload.len(),
                        limit: limits.max_payload_bytes,
                    });
                }
                Ok(GuestRun { output, outbound })
            }
            Err(e) if exhausted => Err(RuntimeError::OutOfMemory(e.to_string())),
            Err(e) if timed_out => Err(RuntimeError::Timeout(e.to_string())),
            Err(e) => Err(e),
        }
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }
}

impl Drop for WasmHost {
    fn drop(&mut self) {
        self.ticking.store(false, Ordering::Relaxed);
    }
}

fn classify(err: wasmtime::Error) -> RuntimeError {
    match err.downcast_ref::<Trap>() {
        Some(Trap::Interrupt) => RuntimeError::Timeout("execution deadline exceeded".into()),
        _ => RuntimeError::GuestTrap(format!("{err:#}")),
    }
}

fn call_guest(
    store: &mut Store<HostState>,
    handler: &PreparedHandler,
    state: &[u8],
    payload: &[u8],
) -> Result<GuestOutput, RuntimeError> {
    let instance = handler.pre.instantiate(&mut *store).map_err(classify)?;
    let memory = instance
        .get_memory(&mut *store, "memory")
        .ok_or_else(|| RuntimeError::ModuleInvalid("missing memory export".into()))?;
    let alloc = instance
        .get_typed_func::<i32, i32>(&mut *store, "gf_alloc")
        .map_err(|e| RuntimeError::ModuleInvalid(e.to_string()))?;
    let handle = instance
        .get_typed_func::<(i32, i32), i64>(&mut *store, "gf_handle")
        .map_err(|e| RuntimeError::ModuleInvalid(e.to_string()))?;

    let input = encode_input(state, payload);
    let len = i32::try_from(input.len()).map_err(|_| RuntimeError::PayloadTooLarge {
        len: input.len(),
        limit: i32::MAX as usize,
    })?;
    let in_ptr = alloc.call(&mut *store, len).map_err(classify)?;
    memory
        .write(&mut *store, in_ptr as u32 as usize, &input)
        .map_err(|_| RuntimeError::GuestTrap("gf_alloc returned an out-of-bounds pointer".into()))?;

    let packed = handle.call(&mut *store, (in_ptr, len)).map_err(classify)?;
    let out_ptr = ((packed as u64) >> 32) as usize;
    let out_len = (packed as u64 & 0xffff_ffff) as usize;
    let mut out = vec![0u8; out_len];
    memory
        .read(&*store, out_ptr, &mut out)
        .map_err(|_| RuntimeError::GuestTrap("result record out of bounds".into()))?;
    GuestOutput::decode(&out).map_err(|e| RuntimeError::GuestTrap(format!("malformed result record: {e}")))
}

fn guest_bytes(caller: &mut Caller<'_, HostState>, ptr: i32, len: i32) -> Option<Vec<u8>> {
    let memory = caller.get_export("memory")?.into_memory()?;
    let start = ptr as u32 as usize;
    let end = start.checked_add(len as u32 as usize)?;
    memory.data(&*caller).get(start..end).map(<[u8]>::to_vec)
}

fn build_linker(engine: &Engine) -> Result<Linker<HostState>, RuntimeError> {
    let mut linker = Linker::new(engine);
    let internal = |e: wasmtime::Error| RuntimeError::Internal(e.to_string());

    linker
        .func_wrap(IMPORT_MODULE, "gf_log", |mut caller: Caller<'_, HostState>, ptr: i32, len: i32| {
            if let Some(bytes) = guest_bytes(&mut caller, ptr, len) {
                tracing::debug!(target: "goldfish::guest", "{}", String::from_utf8_lossy(&bytes));
            }
        })
        .map_err(internal)?;

    linker
        .func_wrap(
            IMPORT_MODULE,
            "gf_send",
            |mut caller: Caller<'_, HostState>, kind: i32, tptr: i32, tlen: i32, pptr: i32, plen: i32| -> i32 {
                if plen as u32 as usize > caller.data().max_payload {
                    return SEND_TOO_LARGE;
                }
                let (Some(target), Some(payload)) =
                    (guest_bytes(&mut caller, tptr, tlen), guest_bytes(&mut caller, pptr, plen))
                else {
                    return SEND_BAD_TARGET;
                };
                let target = match kind {
                    0 => match <[u8; 16]>::try_from(target.as_slice()) {
                        Ok(raw) => Target::Actor(ActorId::from_bytes(raw)),
                        Err(_) => return SEND_BAD_TARGET,
                    },
                    1 => match String::from_utf8(target) {
                        Ok(name) => Target::Handler(name),
                        Err(_) => return SEND_BAD_TARGET,
                    },
                    _ => return SEND_BAD_TARGET,
                };
                caller.data_mut().sent.push(Outbound::new(target, Bytes::from(payload)));
                SEND_OK
            },
        )
        .map_err(internal)?;

    // Simulated blocking I/O for benchmark and test handlers; bounded by the
    // invocation deadline.
    linker
        .func_wrap(
            IMPORT_MODULE,
            "gf_sleep_ms",
            |mut caller: Caller<'_, HostState>, ms: i32| -> wasmtime::Result<()> {
                let want = Duration::from_millis(ms.max(0) as u64);
                let remaining = caller.data().deadline.saturating_duration_since(Instant::now());
                std::thread::sleep(want.min(remaining));
                if want > remaining {
                    caller.data_mut().timed_out = true;
                    return Err(wasmtime::Error::msg("execution deadline exceeded during sleep"));
                }
                Ok(())
            },
        )
        .map_err(internal)?;

    Ok(linker)
}

fn validate_exports(module: &Module, limits: &ResourceLimits) -> Result<(), RuntimeError> {
    let mut have_alloc = false;
    let mut have_handle = false;
    let mut have_memory = false;
    for export in module.exports() {
        match (export.name(), export.ty()) {
            ("gf_alloc", ExternType::Func(f)) => {
                let ok = f.params().map(|p| matches!(p, ValType::I32)).collect::<Vec<_>>() == [true]
                    && f.results().map(|r| matches!(r, ValType::I32)).collect::<Vec<_>>() == [true];
                if !ok {
                    return Err(RuntimeError::ModuleInvalid("gf_alloc must be (i32) -> i32".into()));
                }
                have_alloc = true;
            }
            ("gf_handle", ExternType::Func(f)) => {
                let ok = f.params().map(|p| matches!(p, ValType::I32)).collect::<Vec<_>>() == [true, true]
                    && f.results().map(|r| matches!(r, ValType::I64)).collect::<Vec<_>>() == [true];
                if !ok {
                    return Err(RuntimeError::ModuleInvalid(
                        "gf_handle must be (i32, i32) -> i64".into(),
                    ));
                }
                have_handle = true;
            }
            ("memory", ExternType::Memory(m)) => {
                if m.minimum() * WASM_PAGE > limits.max_memory_bytes as u64 {
                    return Err(RuntimeError::ResourceExhausted(format!(
                        "module needs {} bytes of memory, limit is {}",
                        m.minimum() * WASM_PAGE,
                        limits.max_memory_bytes
                    )));
                }
                have_memory = true;
            }
            _ => {}
        }
    }
    for (present, name) in [(have_alloc, "gf_alloc"), (have_handle, "gf_handle"), (have_memory, "memory")] {
        if !present {
            return Err(RuntimeError::ModuleInvalid(format!("missing export `{name}`")));
        }
    }
    Ok(())
}
