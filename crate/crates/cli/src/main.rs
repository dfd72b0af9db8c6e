use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use safetynet::report::{self, SweepAxis};
use safetynet::scenario::{Scenario, PRESETS};
use safetynet::simcore::SimTime;
use safetynet::{ProtocolKind, RunResult};

#[derive(Parser)]
#[command(name = "safetynet", version, about = "Simulate and cost predictive handoffs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write trace.csv, summary.csv and rate data.
    Run {
        /// Preset name or path to a scenario TOML file.
        scenario: String,
        #[arg(long)]
        protocol: Option<ProtocolKind>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Keep every Nth TCP sequence sample in tcp_seq.csv.
        #[arg(long, default_value_t = 1)]
        decimate: usize,
    },
    /// Vary one parameter and write one summary row per value and protocol.
    Sweep {
        scenario: String,
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Defaults to SafetyNet, FMIPv6 and Bicast.
        #[arg(long, value_delimiter = ',')]
        protocols: Vec<ProtocolKind>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Tabulate the analytic per-handoff cost.
    Cost {
        /// A protocol name or `all`.
        #[arg(long, default_value = "all")]
        protocol: String,
        #[arg(long = "latency-ms", value_delimiter = ',', default_value = "200")]
        latency_ms: Vec<f64>,
        #[arg(long = "par-latency-ms", default_value_t = 5.0)]
        par_latency_ms: f64,
        #[arg(long = "rate-bps", default_value_t = 100_000.0)]
        rate_bps: f64,
        #[arg(long, default_value_t = 1)]
        targets: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run scenarios that differ only in protocol and compare them.
    Compare {
        #[arg(required = true)]
        scenarios: Vec<String>,
        /// With a single scenario, the protocols to run it under.
        #[arg(long, value_delimiter = ',')]
        protocols: Vec<ProtocolKind>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// List the bundled scenario presets.
    Presets,
}

const DEFAULT_COMPARE: [ProtocolKind; 3] = [ProtocolKind::SafetyNet, ProtocolKind::Fmipv6Predictive, ProtocolKind::Fmipv6Bicast];

fn load(name: &str, protocol: Option<ProtocolKind>, seed: Option<u64>) -> Result<Scenario> {
    let mut sc = Scenario::resolve(name).with_context(|| format!("loading scenario `{name}`"))?;
    if let Some(p) = protocol {
        sc = report::fit_targets(&sc.with_protocol(p));
    }
    if let Some(s) = seed {
        sc.seed = s;
    }
    sc.validate()?;
    Ok(sc)
}

fn out_file(dir: &Path, name: &str) -> Result<File> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    File::create(&path).with_context(|| format!("creating {}", path.display()))
}

fn write_rows<T: Serialize>(w: impl Write, rows: &[T]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for r in rows {
        csv.serialize(r)?;
    }
    csv.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct RateRow {
    time_ms: f64,
    rate_bps: f64,
}

#[derive(Serialize)]
struct SeqRow {
    time_ms: f64,
    seq: u64,
    side: &'static str,
}

fn write_run(res: &RunResult, out: &Path, decimate: usize) -> Result<()> {
    res.trace.write_csv(out_file(out, "trace.csv")?)?;
    write_rows(out_file(out, "summary.csv")?, &[report::summarize(res)])?;
    let bin = SimTime::from_millis_f64(res.scenario.measurement.rate_bin_ms);
    let rates: Vec<RateRow> = res
        .stats
        .received_rate(bin, res.end())
        .into_iter()
        .map(|(t, r)| RateRow { time_ms: t.as_millis_f64(), rate_bps: r })
        .collect();
    write_rows(out_file(out, "rate.csv")?, &rates)?;
    if let Some(tcp) = &res.tcp {
        let step = decimate.max(1);
        let sent = tcp.send_log.iter().step_by(step).map(|&(t, s)| SeqRow { time_ms: t.as_millis_f64(), seq: s, side: "cn" });
        let recv = tcp.seq_log.iter().step_by(step).map(|&(t, s)| SeqRow { time_ms: t.as_millis_f64(), seq: s, side: "mn" });
        write_rows(out_file(out, "tcp_seq.csv")?, &sent.chain(recv).collect::<Vec<_>>())?;
    }
    Ok(())
}

fn print_summary(res: &RunResult) {
    let s = report::summarize(res);
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.1}"));
    println!("scenario {} protocol {} seed {}", s.scenario, s.protocol, s.seed);
    println!("  sent {} delivered {} lost {} duplicates {}", s.sent_packets, s.delivered_unique, s.app_losses, s.app_duplicates);
    println!(
        "  handoff latency {} ms, stop latency {} ms, flushed {} B",
        opt(s.handoff_latency_ms),
        opt(s.stop_latency_ms),
        s.flushed_bytes
    );
    if let Some(d) = &s.decision {
        println!(
            "  decision {} target {} reason {} at {} ms",
            d,
            s.target.as_deref().unwrap_or("-"),
            s.decision_reason.as_deref().unwrap_or("-"),
            opt(s.finalize_ms)
        );
    }
    if s.hard_disconnect {
        println!("  HARD DISCONNECT: no reachable target");
    }
    if let Some(i) = s.impact_pct {
        println!("  impact {i:.1}% (progress {:?} vs {:?})", s.progress_handoff, s.progress_reference);
    }
    println!(
        "  ota signaling {} B, otw signaling {} B, total ota {} B",
        s.ota_signaling_bytes, s.otw_signaling_bytes, s.total_ota_bytes
    );
}

fn protocols_or_default(p: Vec<ProtocolKind>) -> Vec<ProtocolKind> {
    if p.is_empty() {
        DEFAULT_COMPARE.to_vec()
    } else {
        p
    }
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Run { scenario, protocol, seed, out, decimate } => {
            let sc = load(&scenario, protocol, seed)?;
            let res = safetynet::run(&sc)?;
            write_run(&res, &out, decimate)?;
            print_summary(&res);
        }
        Cmd::Sweep { scenario, axis, values, protocols, seed, out } => {
            let sc = load(&scenario, None, seed)?;
            let jobs = report::sweep_jobs(&sc, axis, &values, &protocols_or_default(protocols))?;
            let rows: Vec<_> = jobs
                .par_iter()
                .map(|j| safetynet::run(&j.scenario).map(|r| report::sweep_row(j, &r)))
                .collect::<Result<_, _>>()?;
            write_rows(out_file(&out, "summary.csv")?, &rows)?;
            write_rows(io::stdout().lock(), &rows)?;
        }
        Cmd::Cost { protocol, latency_ms, par_latency_ms, rate_bps, targets, out } => {
            let protocols = if protocol == "all" {
                ProtocolKind::ALL.to_vec()
            } else {
                vec![protocol.parse::<ProtocolKind>().map_err(anyhow::Error::msg)?]
            };
            if targets > 1 && protocols.iter().any(|&p| p != ProtocolKind::SafetyNet) && protocol != "all" {
                bail!("{protocol} supports a single target router");
            }
            let rows = report::cost_curves(&protocols, &latency_ms, par_latency_ms, rate_bps, targets)?;
            if let Some(dir) = out {
                write_rows(out_file(&dir, "cost.csv")?, &rows)?;
            }
            write_rows(io::stdout().lock(), &rows)?;
        }
        Cmd::Compare { scenarios, protocols, seed, out } => {
            let list: Vec<Scenario> = if scenarios.len() == 1 {
                protocols_or_default(protocols).into_iter().map(|p| load(&scenarios[0], Some(p), seed)).collect::<Result<_>>()?
            } else {
                scenarios.iter().map(|s| load(s, None, seed)).collect::<Result<_>>()?
            };
            report::check_comparable(&list)?;
            let results: Vec<RunResult> = list.par_iter().map(safetynet::run).collect::<Result<_, _>>()?;
            let rows: Vec<_> = results.iter().map(report::compare_row).collect();
            let summaries: Vec<_> = results.iter().map(report::summarize).collect();
            write_rows(out_file(&out, "summary.csv")?, &summaries)?;
            println!(
                "{:<18} {:>12} {:>12} {:>10} {:>9} {:>12}",
                "protocol", "progress_B", "reference_B", "resent_B", "impact_%", "total_ota_B"
            );
            for r in &rows {
                let n = |v: Option<u64>| v.map_or("-".into(), |x| x.to_string());
                println!(
                    "{:<18} {:>12} {:>12} {:>10} {:>9} {:>12}",
                    r.protocol,
                    n(r.progress_handoff),
                    n(r.progress_reference),
                    n(r.resent_handoff),
                    r.impact_pct.map_or("-".into(), |x| format!("{x:.1}")),
                    r.total_ota_bytes
                );
            }
        }
        Cmd::Presets => {
            for p in PRESETS {
                println!("{p}");
            }
        }
    }
    Ok(())
}
