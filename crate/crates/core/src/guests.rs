// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

//! Built-in guest handlers, written in WebAssembly text and compiled on
//! demand. They follow the `gf_alloc` / `gf_handle` contract from [`crate::abi`].

const PRELUDE: &str = r#"
  (import "goldfish" "gf_log" (func $gf_log (param i32 i32)))
  (import "goldfish" "gf_send" (func $gf_send (param i32 i32 i32 i32 i32) (result i32)))
  (import "goldfish" "gf_sleep_ms" (func $gf_sleep_ms (param i32)))
  (memory (export "memory") 1)
  (global $heap (mut i32) (i32.const 4096))

  (func $alloc (export "gf_alloc") (param $len i32) (result i32)
    (local $p i32) (local $end i32)
    (local.set $p (global.get $heap))
    (local.set $end (i32.add (local.get $p) (local.get $len)))
    (block $ok
      (loop $grow
        (br_if $ok (i32.le_u (local.get $end) (i32.mul (memory.size) (i32.const 65536))))
        (if (i32.lt_s (memory.grow (i32.const 1)) (i32.const 0)) (then unreachable))
        (br $grow)))
    (global.set $heap (local.get $end))
    (local.get $p))

  (func $state_len (param $in i32) (result i32)
    (i32.load (local.get $in)))
  (func $state_ptr (param $in i32) (result i32)
    (i32.add (local.get $in) (i32.const 4)))
  (func $payload_len (param $in i32) (result i32)
    (i32.load (i32.add (i32.add (local.get $in) (i32.const 4)) (call $state_len (local.get $in)))))
  (func $payload_ptr (param $in i32) (result i32)
    (i32.add (i32.add (local.get $in) (i32.const 8)) (call $state_len (local.get $in))))

  ;; Result record; $tl == 0 means "no outbound" (a zero u16 count).
  (func $finish (param $dir i32) (param $sp i32) (param $sl i32) (param $op i32) (param $ol i32)
                (param $tp i32) (param $tl i32) (result i64)
    (local $rec i32) (local $len i32) (local $w i32)
    (local.set $len
      (i32.add (i32.add (i32.const 9) (i32.add (local.get $sl) (local.get $ol)))
               (select (local.get $tl) (i32.const 2) (local.get $tl))))
    (local.set $rec (call $alloc (local.get $len)))
    (i32.store8 (local.get $rec) (local.get $dir))
    (i32.store (i32.add (local.get $rec) (i32.const 1)) (local.get $sl))
    (memory.copy (i32.add (local.get $rec) (i32.const 5)) (local.get $sp) (local.get $sl))
    (local.set $w (i32.add (i32.add (local.get $rec) (i32.const 5)) (local.get $sl)))
    (i32.store (local.get $w) (local.get $ol))
    (memory.copy (i32.add (local.get $w) (i32.const 4)) (local.get $op) (local.get $ol))
    (local.set $w (i32.add (i32.add (local.get $w) (i32.const 4)) (local.get $ol)))
    (if (local.get $tl)
      (then (memory.copy (local.get $w) (local.get $tp) (local.get $tl)))
      (else (i32.store16 (local.get $w) (i32.const 0))))
    (i64.or (i64.shl (i64.extend_i32_u (local.get $rec)) (i64.const 32))
            (i64.extend_i32_u (local.get $len))))

  (func $parse_u32 (param $p i32) (param $n i32) (result i32)
    (local $acc i32) (local $i i32)
    (block $done
      (loop $next
        (br_if $done (i32.ge_u (local.get $i) (local.get $n)))
        (local.set $acc
          (i32.add (i32.mul (local.get $acc) (i32.const 10))
                   (i32.sub (i32.load8_u (i32.add (local.get $p) (local.get $i))) (i32.const 48))))
        (local.set $i (i32.add (local.get $i) (i32.const 1)))
        (br $next)))
    (local.get $acc))

  (func $format_u32 (param $v i32) (param $dst i32) (result i32)
    (local $len i32) (local $t i32) (local $i i32)
    (local.set $t (local.get $v))
    (local.set $len (i32.const 1))
    (block $counted
      (loop $count
        (br_if $counted (i32.lt_u (local.get $t) (i32.const 10)))
        (local.set $t (i32.div_u (local.get $t) (i32.const 10)))
        (local.set $len (i32.add (local.get $len) (i32.const 1)))
        (br $count)))
    (local.set $i (local.get $len))
    (local.set $t (local.get $v))
    (loop $write
      (local.set $i (i32.sub (local.get $i) (i32.const 1)))
      (i32.store8 (i32.add (local.get $dst) (local.get $i))
                  (i32.add (i32.const 48) (i32.rem_u (local.get $t) (i32.const 10))))
      (local.set $t (i32.div_u (local.get $t) (i32.const 10)))
      (br_if $write (i32.gt_u (local.get $i) (i32.const 0))))
    (local.get $len))

  ;; Increments the decimal counter held in state; returns the new value.
  (func $bump (param $in i32) (result i32)
    (i32.add (call $parse_u32 (call $state_ptr (local.get $in)) (call $state_len (local.get $in)))
             (i32.const 1)))
"#;

fn module(body: &str) -> Vec<u8> {
    let text = format!("(module {PRELUDE}\n{body})");
    wat::parse_str(&text).expect("built-in guest must assemble")
}

/// Output = payload; state passes through unchanged.
pub fn echo() -> Vec<u8> {
    module(
        r#"
  (func (export "gf_handle") (param $in i32) (param $len i32) (result i64)
    (call $finish (i32.const 0)
      (call $state_ptr (local.get $in)) (call $state_len (local.get $in))
      (call $payload_ptr (local.get $in)) (call $payload_len (local.get $in))
      (i32.const 0) (i32.const 0)))
"#,
    )
}

fn counter_body(trap_every: u32) -> String {
    let trap = if trap_every > 0 {
        format!("(if (i32.eqz (i32.rem_u (local.get $n) (i32.const {trap_every}))) (then unreachable))")
    } else {
        String::new()
    };
    format!(
        r#"
  (func (export "gf_handle") (param $in i32) (param $len i32) (result i64)
    (local $n i32) (local $buf i32) (local $l i32)
    (local.set $n (call $bump (local.get $in)))
    {trap}
    (local.set $buf (call $alloc (i32.const 12)))
    (local.set $l (call $format_u32 (local.get $n) (local.get $buf)))
    (call $finish (i32.const 0) (local.get $buf) (local.get $l) (local.get $buf) (local.get $l)
      (i32.const 0) (i32.const 0)))
"#
    )
}

/// State is a decimal counter; each message increments it and replies with
/// the new value.
pub fn counter() -> Vec<u8> {
    module(&counter_body(0))
}

/// Like [`counter`], but traps on every `n`-th message an instance handles.
pub fn flaky_counter(n: u32) -> Vec<u8> {
    assert!(n > 0);
    module(&counter_body(n))
}

/// Payload byte 0 is the directive code to return; if the payload has at
/// least 5 bytes, bytes 1..5 are a little-endian sleep in milliseconds.
/// Output = payload, state = invocation counter.
pub fn scripted() -> Vec<u8> {
    module(
        r#"
  (func (export "gf_handle") (param $in i32) (param $len i32) (result i64)
    (local $p i32) (local $pl i32) (local $n i32) (local $buf i32) (local $l i32)
    (local.set $p (call $payload_ptr (local.get $in)))
    (local.set $pl (call $payload_len (local.get $in)))
    (if (i32.ge_u (local.get $pl) (i32.const 5))
      (then (call $gf_sleep_ms (i32.load (i32.add (local.get $p) (i32.const 1))))))
    (local.set $n (call $bump (local.get $in)))
    (local.set $buf (call $alloc (i32.const 12)))
    (local.set $l (call $format_u32 (local.get $n) (local.get $buf)))
    (call $finish
      (if (result i32) (local.get $pl) (then (i32.load8_u (local.get $p))) (else (i32.const 0)))
      (local.get $buf) (local.get $l)
      (local.get $p) (local.get $pl)
      (i32.const 0) (i32.const 0)))
"#,
    )
}

/// Sleeps `ms` (simulated I/O), then echoes the payload.
pub fn sleeper(ms: u32) -> Vec<u8> {
    module(&format!(
        r#"
  (func (export "gf_handle") (param $in i32) (param $len i32) (result i64)
    (call $gf_sleep_ms (i32.const {ms}))
    (call $finish (i32.const 0)
      (call $state_ptr (local.get $in)) (call $state_len (local.get $in))
      (call $payload_ptr (local.get $in)) (call $payload_len (local.get $in))
      (i32.const 0) (i32.const 0)))
"#
    ))
}

/// Never returns.
pub fn spin() -> Vec<u8> {
    module(
        r#"
  (func (export "gf_handle") (param $in i32) (param $len i32) (result i64)
    (loop $forever (br $forever))
    (i64.const 0))
"#,
    )
}

/// Grows memory until the host refuses.
pub fn memory_hog() -> Vec<u8> {
    module(
        r#"
  (func (export "gf_handle") (param $in i32) (param $len i32) (result i64)
    (loop $more
      (br_if $more (i32.ge_s (memory.grow (i32.const 16)) (i32.const 0))))
    (i64.const 0))
"#,
    )
}

/// Replies "seen" if a sentinel written to raw linear memory by an earlier
/// invocation is still there, "fresh" otherwise; then writes the sentinel.
pub fn sentinel() -> Vec<u8> {
    module(
        r#"
  (data (i32.const 128) "seenfresh")
  (func (export "gf_handle") (param $in i32) (param $len i32) (result i64)
    (local $seen i32)
    (local.set $seen (i32.eq (i32.load (i32.const 64)) (i32.const 0x5eed)))
    (i32.store (i32.const 64) (i32.const 0x5eed))
    (call $finish (i32.const 0)
      (call $state_ptr (local.get $in)) (call $state_len (local.get $in))
      (select (i32.const 128) (i32.const 132) (local.get $seen))
      (select (i32.const 4) (i32.const 5) (local.get $seen))
      (i32.const 0) (i32.const 0)))
"#,
    )
}

/// Payload is an outbound list (`u16 count | entries`, see
/// [`crate::abi::encode_outbound_list`]); the guest issues one `gf_send` per
/// entry in order and replies with one status byte per call.
pub fn sender() -> Vec<u8> {
    module(
        r#"
  (func (export "gf_handle") (param $in i32) (param $len i32) (result i64)
    (local $p i32) (local $count i32) (local $i i32) (local $tl i32) (local $pl i32)
    (local $codes i32)
    (local.set $p (call $payload_ptr (local.get $in)))
    (local.set $count (i32.load16_u (local.get $p)))
    (local.set $p (i32.add (local.get $p) (i32.const 2)))
    (local.set $codes (call $alloc (local.get $count)))
    (block $done
      (loop $next
        (br_if $done (i32.ge_u (local.get $i) (local.get $count)))
        (local.set $tl (i32.load16_u (i32.add (local.get $p) (i32.const 1))))
        (local.set $pl (i32.load (i32.add (i32.add (local.get $p) (i32.const 3)) (local.get $tl))))
        (i32.store8 (i32.add (local.get $codes) (local.get $i))
          (call $gf_send
            (i32.load8_u (local.get $p))
            (i32.add (local.get $p) (i32.const 3)) (local.get $tl)
            (i32.add (i32.add (local.get $p) (i32.const 7)) (local.get $tl)) (local.get $pl)))
        (local.set $p (i32.add (i32.add (i32.add (local.get $p) (i32.const 7)) (local.get $tl)) (local.get $pl)))
        (local.set $i (i32.add (local.get $i) (i32.const 1)))
        (br $next)))
    (call $finish (i32.const 0)
      (call $state_ptr (local.get $in)) (call $state_len (local.get $in))
      (local.get $codes) (local.get $count)
      (i32.const 0) (i32.const 0)))
"#,
    )
}

/// Payload is an outbound list; the guest returns it verbatim as the
/// outbound section of its result record, with an empty output.
pub fn forwarder() -> Vec<u8> {
    module(
        r#"
  (func (export "gf_handle") (param $in i32) (param $len i32) (result i64)
    (call $finish (i32.const 0)
      (call $state_ptr (local.get $in)) (call $state_len (local.get $in))
      (i32.const 0) (i32.const 0)
      (call $payload_ptr (local.get $in)) (call $payload_len (local.get $in))))
"#,
    )
}

/// One stage of a chained workflow: bumps its invocation counter, optionally
/// sleeps `work_ms`, then forwards the payload to handler `next` (empty
/// output) or, as the last stage, replies with the payload.
pub fn chain_stage(next: Option<&str>, work_ms: u32) -> Vec<u8> {
    let work = if work_ms > 0 {
        format!("(call $gf_sleep_ms (i32.const {work_ms}))")
    } else {
        String::new()
    };
    let (data, tail) = match next {
        Some(name) => {
            assert!(name.is_ascii() && !name.contains('"') && !name.contains('\\'));
            let n = name.len();
            (
                format!(r#"(data (i32.const 256) "{name}")"#),
                format!(
                    r#"
    ;; u16 1 | u8 1 | u16 name_len | name | u32 payload_len | payload
    (local.set $tail (call $alloc (i32.add (i32.const {fixed}) (local.get $pl))))
    (i32.store16 (local.get $tail) (i32.const 1))
    (i32.store8 (i32.add (local.get $tail) (i32.const 2)) (i32.const 1))
    (i32.store16 (i32.add (local.get $tail) (i32.const 3)) (i32.const {n}))
    (memory.copy (i32.add (local.get $tail) (i32.const 5)) (i32.const 256) (i32.const {n}))
    (i32.store (i32.add (local.get $tail) (i32.const {plen_at})) (local.get $pl))
    (memory.copy (i32.add (local.get $tail) (i32.const {fixed})) (local.get $p) (local.get $pl))
    (call $finish (i32.const 0) (local.get $buf) (local.get $l) (i32.const 0) (i32.const 0)
      (local.get $tail) (i32.add (i32.const {fixed}) (local.get $pl)))"#,
                    fixed = 9 + n,
                    plen_at = 5 + n,
                ),
            )
        }
        None => (
            String::new(),
            r#"
    (call $finish (i32.const 0) (local.get $buf) (local.get $l) (local.get $p) (local.get $pl)
      (i32.const 0) (i32.const 0))"#
                .to_owned(),
        ),
    };
    module(&format!(
        r#"
  {data}
  (func (export "gf_handle") (param $in i32) (param $len i32) (result i64)
    (local $p i32) (local $pl i32) (local $buf i32) (local $l i32) (local $tail i32)
    {work}
    (local.set $p (call $payload_ptr (local.get $in)))
    (local.set $pl (call $payload_len (local.get $in)))
    (local.set $buf (call $alloc (i32.const 12)))
    (local.set $l (call $format_u32 (call $bump (local.get $in)) (local.get $buf)))
    {tail})
"#
    ))
}

/// A module with memory and `gf_alloc` but no `gf_handle` export.
pub fn missing_entry() -> Vec<u8> {
    wat::parse_str(
        r#"(module
  (memory (export "memory") 1)
  (func (export "gf_alloc") (param i32) (result i32) (i32.const 1024)))"#,
    )
    .expect("assembles")
}

/// Named built-ins, as exported by the CLI.
pub fn builtin(name: &str) -> Option<Vec<u8>> {
    Some(match name {
        "echo" => echo(),
        "counter" => counter(),
        "scripted" => scripted(),
        "sentinel" => sentinel(),
        "sender" => sender(),
        "forwarder" => forwarder(),
        "spin" => spin(),
        "memory-hog" => memory_hog(),
        _ => return None,
    })
}

pub const BUILTIN_NAMES: &[&str] = &[
    "echo",
    "counter",
    "scripted",
    "sentinel",
    "sender",
    "forwarder",
    "spin",
    "memory-hog",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_builtins_assemble() {
        for name in BUILTIN_NAMES {
            assert!(builtin(name).is_some(), "{name}");
        }
        chain_stage(Some("next-stage"), 0);
        chain_stage(None, 3);
        flaky_counter(10);
        sleeper(5);
    }
}
