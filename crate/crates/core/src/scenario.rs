//! Scenario files: versioned TOML describing topology, traffic, the handoff
//! schedule and measurement windows.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::protocols::{FinalizePolicy, NarInfo, ProtocolConfig, ProtocolKind};
use crate::simcore::{LinkParams, SimTime};
use crate::timing::Tier;
use crate::traffic::TcpConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), reason: reason.into() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub protocol: ProtocolKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub duration_ms: f64,
    #[serde(default = "default_true")]
    pub with_ah: bool,
    pub backbone: Backbone,
    pub par: ParSpec,
    pub nars: Vec<NarSpec>,
    pub traffic: TrafficSpec,
    pub handoff: HandoffSpec,
    #[serde(default)]
    pub timing: TimingSpec,
    #[serde(default)]
    pub measurement: MeasurementSpec,
}

fn default_seed() -> u64 {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Backbone {
    /// CN to pAR; the reverse direction uses the same parameters.
    pub cn_par: LinkParams,
    /// pAR to each nAR unless an nAR overrides it.
    pub par_nar: LinkParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParSpec {
    pub name: String,
    pub tier: Tier,
    pub downlink: LinkParams,
    pub uplink: LinkParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NarSpec {
    pub name: String,
    pub tier: Tier,
    pub downlink: LinkParams,
    pub uplink: LinkParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backhaul: Option<LinkParams>,
    /// In radio range from the start.
    #[serde(default = "default_true")]
    pub reachable: bool,
    /// Comes into range at this time (only meaningful when not reachable).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reachable_from_ms: Option<f64>,
    #[serde(default = "default_true")]
    pub accept_handoff: bool,
    /// Packets; absent means sized from the traffic, 0 means unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer_capacity: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TrafficSpec {
    Udp {
        /// Payload bits per second.
        rate_bps: u64,
        payload_bytes: u32,
        #[serde(default)]
        start_ms: f64,
    },
    Tcp {
        #[serde(default)]
        start_ms: f64,
        #[serde(default)]
        tcp: TcpConfig,
    },
}

impl TrafficSpec {
    pub fn is_tcp(&self) -> bool {
        matches!(self, TrafficSpec::Tcp { .. })
    }

    pub fn start(&self) -> SimTime {
        match self {
            TrafficSpec::Udp { start_ms, .. } | TrafficSpec::Tcp { start_ms, .. } => SimTime::from_millis_f64(*start_ms),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandoffSpec {
    #[serde(default = "default_true")]
    pub enabled: bool,
    pub initiate_ms: f64,
    pub attach_latency_ms: f64,
    /// Uniform jitter added to the attach latency, `[0, jitter)`.
    #[serde(default)]
    pub attach_jitter_ms: f64,
    /// Target nAR names in preference order.
    pub targets: Vec<String>,
    #[serde(default = "default_rtsolpr_retry")]
    pub rtsolpr_retry_ms: f64,
    #[serde(default = "default_fback_timeout")]
    pub fback_timeout_ms: f64,
    #[serde(default = "default_bicast_timer")]
    pub bicast_timer_ms: f64,
    #[serde(default = "default_idle")]
    pub buffer_idle_timeout_ms: f64,
    /// Used only to size nAR buffers.
    #[serde(default = "default_expected")]
    pub expected_handoff_ms: f64,
    /// pAR downlink loss from the moment forwarding starts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub par_downlink_loss: Option<f64>,
    /// pAR uplink loss from the same moment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub par_uplink_loss: Option<f64>,
}

fn default_rtsolpr_retry() -> f64 {
    100.0
}
fn default_fback_timeout() -> f64 {
    50.0
}
fn default_bicast_timer() -> f64 {
    500.0
}
fn default_idle() -> f64 {
    1000.0
}
fn default_expected() -> f64 {
    250.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingSpec {
    #[serde(default)]
    pub policy: FinalizePolicy,
    /// Old-link losses tolerated before a forced finalize; 0 disables.
    #[serde(default = "default_budget")]
    pub loss_budget: u64,
    #[serde(default = "default_poll")]
    pub poll_ms: f64,
    /// MN to CN latency after the handoff; derived from the links if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_handoff_latency_ms: Option<f64>,
    #[serde(default)]
    pub use_srtt: bool,
}

fn default_budget() -> u64 {
    10
}
fn default_poll() -> f64 {
    10.0
}

impl Default for TimingSpec {
    fn default() -> Self {
        TimingSpec {
            policy: FinalizePolicy::Immediate,
            loss_budget: default_budget(),
            poll_ms: default_poll(),
            post_handoff_latency_ms: None,
            use_srtt: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSpec {
    pub handoff_window_ms: [f64; 2],
    pub reference_window_ms: [f64; 2],
    pub rate_bin_ms: f64,
}

impl Default for MeasurementSpec {
    fn default() -> Self {
        MeasurementSpec { handoff_window_ms: [4000.0, 5000.0], reference_window_ms: [5000.0, 6000.0], rate_bin_ms: 100.0 }
    }
}

fn check_link(field: &str, l: &LinkParams) -> Result<(), ScenarioError> {
    l.validate().map_err(|r| invalid(field, r))
}

fn check_nonneg(field: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(field, "must be finite and non-negative"))
    }
}

fn check_prob(field: &str, v: Option<f64>) -> Result<(), ScenarioError> {
    match v {
        Some(p) if !(0.0..=1.0).contains(&p) => Err(invalid(field, "must lie in [0, 1]")),
        _ => Ok(()),
    }
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self, ScenarioError> {
        let sc: Scenario = toml::from_str(s).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let p = path.as_ref();
        let text = std::fs::read_to_string(p).map_err(|source| ScenarioError::Io { path: p.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    /// A bundled preset by name, or a file path.
    pub fn resolve(name_or_path: &str) -> Result<Self, ScenarioError> {
        match preset(name_or_path) {
            Some(text) => Self::from_toml_str(text),
            None if Path::new(name_or_path).exists() => Self::load(name_or_path),
            None => Err(ScenarioError::UnknownPreset(name_or_path.to_string())),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid("schema_version", format!("expected {SCHEMA_VERSION}, got {}", self.schema_version)));
        }
        check_nonneg("duration_ms", self.duration_ms)?;
        if self.duration_ms == 0.0 {
            return Err(invalid("duration_ms", "must be positive"));
        }
        check_link("backbone.cn_par", &self.backbone.cn_par)?;
        check_link("backbone.par_nar", &self.backbone.par_nar)?;
        check_link("par.downlink", &self.par.downlink)?;
        check_link("par.uplink", &self.par.uplink)?;
        if self.nars.is_empty() {
            return Err(invalid("nars", "at least one nAR is required"));
        }
        for (i, n) in self.nars.iter().enumerate() {
            check_link(&format!("nars[{i}].downlink"), &n.downlink)?;
            check_link(&format!("nars[{i}].uplink"), &n.uplink)?;
            if let Some(b) = &n.backhaul {
                check_link(&format!("nars[{i}].backhaul"), b)?;
            }
            if let Some(t) = n.reachable_from_ms {
                check_nonneg(&format!("nars[{i}].reachable_from_ms"), t)?;
            }
            if self.nars[..i].iter().any(|o| o.name == n.name) {
                return Err(invalid(format!("nars[{i}].name"), format!("duplicate name `{}`", n.name)));
            }
        }
        match &self.traffic {
            TrafficSpec::Udp { payload_bytes, start_ms, .. } => {
                if *payload_bytes == 0 {
                    return Err(invalid("traffic.payload_bytes", "must be positive"));
                }
                check_nonneg("traffic.start_ms", *start_ms)?;
            }
            TrafficSpec::Tcp { start_ms, tcp } => {
                check_nonneg("traffic.start_ms", *start_ms)?;
                if tcp.segment_bytes == 0 {
                    return Err(invalid("traffic.tcp.segment_bytes", "must be positive"));
                }
                if tcp.rwnd_bytes < tcp.segment_bytes as u64 {
                    return Err(invalid("traffic.tcp.rwnd_bytes", "smaller than one segment"));
                }
            }
        }
        let h = &self.handoff;
        for (f, v) in [
            ("handoff.initiate_ms", h.initiate_ms),
            ("handoff.attach_latency_ms", h.attach_latency_ms),
            ("handoff.attach_jitter_ms", h.attach_jitter_ms),
            ("handoff.rtsolpr_retry_ms", h.rtsolpr_retry_ms),
            ("handoff.fback_timeout_ms", h.fback_timeout_ms),
            ("handoff.bicast_timer_ms", h.bicast_timer_ms),
            ("handoff.buffer_idle_timeout_ms", h.buffer_idle_timeout_ms),
            ("handoff.expected_handoff_ms", h.expected_handoff_ms),
        ] {
            check_nonneg(f, v)?;
        }
        check_prob("handoff.par_downlink_loss", h.par_downlink_loss)?;
        check_prob("handoff.par_uplink_loss", h.par_uplink_loss)?;
        if h.enabled && h.initiate_ms >= self.duration_ms {
            return Err(invalid("handoff.initiate_ms", "must precede the end of the run"));
        }
        if h.targets.is_empty() {
            return Err(invalid("handoff.targets", "at least one target is required"));
        }
        for (i, t) in h.targets.iter().enumerate() {
            if !self.nars.iter().any(|n| &n.name == t) {
                return Err(invalid(format!("handoff.targets[{i}]"), format!("no nAR named `{t}`")));
            }
        }
        if h.targets.len() > 1 && self.protocol != ProtocolKind::SafetyNet {
            return Err(invalid("handoff.targets", format!("{} supports a single target", self.protocol)));
        }
        check_nonneg("timing.poll_ms", self.timing.poll_ms)?;
        if self.timing.poll_ms == 0.0 {
            return Err(invalid("timing.poll_ms", "must be positive"));
        }
        let m = &self.measurement;
        for (f, w) in
            [("measurement.handoff_window_ms", m.handoff_window_ms), ("measurement.reference_window_ms", m.reference_window_ms)]
        {
            if !(w[0] >= 0.0 && w[1] >= w[0]) {
                return Err(invalid(f, "expects [start, end] with 0 <= start <= end"));
            }
        }
        if m.rate_bin_ms <= 0.0 {
            return Err(invalid("measurement.rate_bin_ms", "must be positive"));
        }
        Ok(())
    }

    pub fn target_indices(&self) -> Vec<usize> {
        self.handoff.targets.iter().map(|t| self.nars.iter().position(|n| &n.name == t).expect("validated target")).collect()
    }

    pub fn nar_index(&self, name: &str) -> Option<usize> {
        self.nars.iter().position(|n| n.name == name)
    }

    pub fn backhaul(&self, i: usize) -> &LinkParams {
        self.nars[i].backhaul.as_ref().unwrap_or(&self.backbone.par_nar)
    }

    /// Default buffer size: twice the packets the flow carries during the
    /// expected handoff.
    pub fn default_buffer_capacity(&self) -> usize {
        let (rate, pkt) = match &self.traffic {
            TrafficSpec::Udp { rate_bps, payload_bytes, .. } => (*rate_bps as f64, *payload_bytes as f64),
            TrafficSpec::Tcp { tcp, .. } => (self.par.downlink.bandwidth_bps as f64, tcp.segment_bytes as f64),
        };
        let pkts = (rate * self.handoff.expected_handoff_ms / 1e3 / (8.0 * pkt)).ceil() as usize;
        (pkts * 2).max(2)
    }

    pub fn buffer_capacity(&self, i: usize) -> usize {
        self.nars[i].buffer_capacity.unwrap_or_else(|| self.default_buffer_capacity())
    }

    pub fn protocol_config(&self) -> ProtocolConfig {
        let ms = SimTime::from_millis_f64;
        let cn_par = self.backbone.cn_par.latency_ms;
        let nars = (0..self.nars.len())
            .map(|i| {
                let n = &self.nars[i];
                let path_ms =
                    self.timing.post_handoff_latency_ms.unwrap_or(cn_par + self.backhaul(i).latency_ms + n.downlink.latency_ms);
                NarInfo {
                    name: n.name.clone(),
                    tier: n.tier,
                    accept_handoff: n.accept_handoff,
                    buffer_capacity: self.buffer_capacity(i),
                    downlink_bps: n.downlink.bandwidth_bps,
                    air_rtt_s: (n.downlink.latency_ms + n.uplink.latency_ms) / 1e3,
                    path_latency_s: path_ms / 1e3,
                }
            })
            .collect();
        ProtocolConfig {
            protocol: self.protocol,
            with_ah: self.with_ah,
            par_tier: self.par.tier,
            par_downlink_bps: self.par.downlink.bandwidth_bps,
            nars,
            targets: self.target_indices(),
            rtsolpr_retry: ms(self.handoff.rtsolpr_retry_ms),
            fback_timeout: ms(self.handoff.fback_timeout_ms),
            bicast_timer: ms(self.handoff.bicast_timer_ms),
            buffer_idle_timeout: ms(self.handoff.buffer_idle_timeout_ms),
            policy: self.timing.policy,
            loss_budget: (self.timing.loss_budget > 0).then_some(self.timing.loss_budget),
            poll: ms(self.timing.poll_ms),
            use_srtt: self.timing.use_srtt,
        }
    }

    pub fn with_protocol(&self, protocol: ProtocolKind) -> Scenario {
        Scenario { protocol, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Scenario {
        Scenario { seed, ..self.clone() }
    }
}

/// Names of the bundled presets.
pub const PRESETS: [&str; 6] = ["fig4_udp", "fig5_tcp", "fig1_pathA", "fig1_pathB", "fig7_sweep", "fig8_totals"];

pub fn preset(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig4_udp" => include_str!("../scenarios/fig4_udp.toml"),
        "fig5_tcp" => include_str!("../scenarios/fig5_tcp.toml"),
        "fig1_pathA" => include_str!("../scenarios/fig1_pathA.toml"),
        "fig1_pathB" => include_str!("../scenarios/fig1_pathB.toml"),
        "fig7_sweep" => include_str!("../scenarios/fig7_sweep.toml"),
        "fig8_totals" => include_str!("../scenarios/fig8_totals.toml"),
        _ => return None,
    })
}

pub fn load_preset(name: &str) -> Result<Scenario, ScenarioError> {
    Scenario::from_toml_str(preset(name).ok_or_else(|| ScenarioError::UnknownPreset(name.to_string()))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_load() {
        for p in PRESETS {
            let s = load_preset(p).unwrap_or_else(|e| panic!("{p}: {e}"));
            assert_eq!(s.name, p);
        }
    }

    #[test]
    fn fig4_parameters() {
        let s = load_preset("fig4_udp").unwrap();
        assert_eq!(s.traffic, TrafficSpec::Udp { rate_bps: 100_000, payload_bytes: 100, start_ms: 0.0 });
        assert_eq!(s.handoff.initiate_ms, 4000.0);
        assert_eq!(s.handoff.attach_latency_ms, 200.0);
        assert_eq!(s.duration_ms, 10_000.0);
    }

    #[test]
    fn path_a_has_late_wlan2() {
        let s = load_preset("fig1_pathA").unwrap();
        let w = &s.nars[s.nar_index("WLAN2").unwrap()];
        assert!(!w.reachable);
        assert_eq!(w.reachable_from_ms, Some(4600.0));
        assert_eq!(s.handoff.targets, ["WLAN2", "WWAN"]);
    }

    #[test]
    fn missing_nars_rejected_by_name() {
        let mut s = load_preset("fig4_udp").unwrap();
        s.nars.clear();
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("`nars`"), "{err}");
        let text = load_preset("fig4_udp").unwrap().to_toml_string();
        let stripped: String = text.split("[[nars]]").next().unwrap().to_string();
        let err = Scenario::from_toml_str(&stripped).unwrap_err().to_string();
        assert!(err.contains("nars"), "{err}");
    }

    #[test]
    fn unknown_target_rejected() {
        let mut s = load_preset("fig4_udp").unwrap();
        s.handoff.targets = vec!["NOPE".into()];
        assert!(s.validate().unwrap_err().to_string().contains("handoff.targets[0]"));
    }

    #[test]
    fn baseline_with_two_targets_rejected() {
        let mut s = load_preset("fig1_pathA").unwrap();
        s.protocol = ProtocolKind::Fmipv6Predictive;
        assert!(s.validate().unwrap_err().to_string().contains("handoff.targets"));
    }

    #[test]
    fn default_buffer_is_twice_expected_packets() {
        let s = load_preset("fig4_udp").unwrap();
        // 100 kbit/s over 250 ms at 100 B per packet is 31.25, so 32 packets
        assert_eq!(s.default_buffer_capacity(), 64);
    }

    #[test]
    fn round_trip_is_identical() {
        for p in PRESETS {
            let s = load_preset(p).unwrap();
            let back = Scenario::from_toml_str(&s.to_toml_string()).unwrap();
            assert_eq!(s, back, "{p}");
        }
    }
}
