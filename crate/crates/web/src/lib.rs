//! Browser bindings for the handoff simulator.
//!
//! Every export returns a JSON string so the page needs no generated
//! TypeScript types. The `*_json` functions hold the logic and are plain
//! Rust, which keeps them testable off the browser.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use safetynet::report::{self, CostRow, RunSummary};
use safetynet::scenario::{load_preset, PRESETS};
use safetynet::simcore::SimTime;
use safetynet::trace::TraceEvent;
use safetynet::ProtocolKind;

/// Upper bound on points per cost curve, so a bad step cannot hang the tab.
const MAX_POINTS: usize = 2_000;

#[derive(Serialize)]
struct RatePoint {
    t_ms: f64,
    bps: f64,
}

#[derive(Serialize)]
struct Marker {
    t_ms: f64,
    label: String,
}

#[derive(Serialize)]
struct TcpSeries {
    /// (time ms, sequence number) as the correspondent node sent it.
    sent: Vec<(f64, u64)>,
    /// (time ms, sequence number) as the mobile node received it.
    received: Vec<(f64, u64)>,
}

#[derive(Serialize)]
struct SimView {
    summary: RunSummary,
    rate: Vec<RatePoint>,
    tcp: Option<TcpSeries>,
    markers: Vec<Marker>,
}

pub fn presets_json() -> String {
    serde_json::to_string(&PRESETS).expect("static names serialize")
}

pub fn cost_curves_json(
    rate_bps: f64,
    par_latency_ms: f64,
    max_latency_ms: f64,
    step_ms: f64,
    targets: usize,
) -> Result<String, String> {
    if step_ms.is_nan() || step_ms <= 0.0 || max_latency_ms.is_nan() || max_latency_ms < 0.0 {
        return Err("latency step must be positive and the range non-negative".into());
    }
    let n = (max_latency_ms / step_ms).floor() as usize + 1;
    if n > MAX_POINTS {
        return Err(format!("{n} points requested, at most {MAX_POINTS} allowed"));
    }
    let latencies: Vec<f64> = (0..n).map(|i| i as f64 * step_ms).collect();
    let rows: Vec<CostRow> = report::cost_curves(&ProtocolKind::ALL, &latencies, par_latency_ms, rate_bps, targets.max(1))
        .map_err(|e| e.to_string())?;
    serde_json::to_string(&rows).map_err(|e| e.to_string())
}

pub fn simulate_json(preset: &str, protocol: &str, seed: u64, decimate: usize) -> Result<String, String> {
    let protocol: ProtocolKind = protocol.parse().map_err(|e: String| e)?;
    let mut sc = report::fit_targets(&load_preset(preset).map_err(|e| e.to_string())?.with_protocol(protocol));
    sc.seed = seed;
    let res = safetynet::run(&sc).map_err(|e| e.to_string())?;

    let bin = SimTime::from_millis_f64(sc.measurement.rate_bin_ms);
    let rate =
        res.stats.received_rate(bin, res.end()).into_iter().map(|(t, bps)| RatePoint { t_ms: t.as_millis_f64(), bps }).collect();
    let step = decimate.max(1);
    let tcp = res.tcp.as_ref().map(|t| {
        let pts = |log: &[(SimTime, u64)]| log.iter().step_by(step).map(|&(t, s)| (t.as_millis_f64(), s)).collect();
        TcpSeries { sent: pts(&t.send_log), received: pts(&t.seq_log) }
    });
    let markers = res
        .trace
        .iter()
        .filter(|r| matches!(r.event, TraceEvent::Phase | TraceEvent::Decision))
        .map(|r| Marker { t_ms: r.time.as_millis_f64(), label: format!("{} {}", r.node, r.detail) })
        .collect();
    let view = SimView { summary: report::summarize(&res), rate, tcp, markers };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn presets() -> String {
    presets_json()
}

/// Analytic per-handoff cost of every protocol over `0..=max_latency_ms`.
#[wasm_bindgen]
pub fn cost_curves(
    rate_bps: f64,
    par_latency_ms: f64,
    max_latency_ms: f64,
    step_ms: f64,
    targets: usize,
) -> Result<String, JsValue> {
    cost_curves_json(rate_bps, par_latency_ms, max_latency_ms, step_ms, targets).map_err(|e| JsValue::from_str(&e))
}

/// Runs a bundled scenario and returns its summary, receive rate, TCP
/// sequence progression and handoff milestones.
#[wasm_bindgen]
pub fn simulate(preset: &str, protocol: &str, seed: u64, decimate: usize) -> Result<String, JsValue> {
    simulate_json(preset, protocol, seed, decimate).map_err(|e| JsValue::from_str(&e))
}
