//! Multi-node field-trial runs: simulate every chair, pass the uplinks through
//! the channel and ingest what arrives.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::channel::channel_deliver;
use crate::energy::{daily_energy_mwh, lifetime_days, EnergyError};
use crate::envelope::UplinkEnvelope;
use crate::export::{write_csv, CsvError};
use crate::model::{rfc3339, DevEui, NodeIdentity};
use crate::node::{run_node, EventRecord, NodeConfig, NodeError, NodeRun};
use crate::scenario::{build_world, Scenario, ScenarioError, World};
use crate::store::{IngestResult, Store, StoreError};

pub const STORE_FILE: &str = "store.jsonl";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const UPLINKS_FILE: &str = "uplinks.jsonl";
pub const ENERGY_FILE: &str = "energy.csv";
pub const EXPORT_FILE: &str = "export.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("node {0}: {1}")]
    Node(DevEui, NodeError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeSummary {
    pub dev_eui: DevEui,
    pub label: String,
    pub square: String,
    pub emitted: usize,
    pub emitted_before_dropout: usize,
    pub delivered: usize,
    pub stored: usize,
    #[serde(with = "opt_time")]
    pub dropout_at: Option<DateTime<Utc>>,
    pub gnss_timeouts: usize,
    pub energy_mwh: f64,
    pub mean_daily_mwh: f64,
    pub projected_lifetime_days: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary {
    pub nodes: usize,
    pub days: u32,
    pub emitted: usize,
    pub delivered: usize,
    pub stored: usize,
    pub lost_channel: usize,
    pub lost_dropout: usize,
    pub dropouts: usize,
    pub closed_form_daily_mwh: f64,
    pub per_node: Vec<NodeSummary>,
}

/// Result of [`simulate`].
#[derive(Debug)]
pub struct SimRun {
    pub world: World,
    pub runs: Vec<NodeRun>,
    /// Every uplink a node sent, in ingestion order.
    pub emitted: Vec<UplinkEnvelope>,
    /// The subset that survived the channel.
    pub delivered: Vec<UplinkEnvelope>,
    pub store: Store,
    pub summary: SimSummary,
}

fn node_config(s: &Scenario, label: &str, dev_eui: DevEui) -> NodeConfig {
    let mut cfg = NodeConfig::new(
        NodeIdentity {
            dev_eui,
            label: label.to_string(),
        },
        s.epoch_utc,
    );
    cfg.power = s.power.clone();
    cfg.battery = s.battery.clone();
    cfg
}

fn run_all(s: &Scenario, world: &World) -> Result<Vec<NodeRun>, SimError> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(world.nodes.len().max(1));
    let chunk = world.nodes.len().div_ceil(threads).max(1);
    let duration = s.duration_s();
    std::thread::scope(|scope| {
        let handles: Vec<_> = world
            .nodes
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|trace| {
                            let cfg = node_config(s, &trace.node.label, trace.dev_eui());
                            run_node(&cfg, trace, duration, s.seed).map_err(|e| SimError::Node(trace.dev_eui(), e))
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("node worker panicked"))
            .collect()
    })
}

/// Runs the scenario into `store`, which receives squares, labelled devices,
/// the reference series and every delivered uplink.
pub fn simulate(s: &Scenario, mut store: Store) -> Result<SimRun, SimError> {
    let world = build_world(s)?;
    let runs = run_all(s, &world)?;

    for sq in &s.squares {
        store.add_square(sq.square.clone())?;
    }
    for n in &s.nodes {
        store.register_device(n.dev_eui, Some(n.label.clone()), s.epoch_utc)?;
    }
    for r in world.reference.samples() {
        store.add_reference(r.clone())?;
    }

    let mut emitted: Vec<UplinkEnvelope> = runs.iter().flat_map(|r| r.envelopes.iter().cloned()).collect();
    emitted.sort_by(|a, b| (a.received_at, a.dev_eui, a.fcnt).cmp(&(b.received_at, b.dev_eui, b.fcnt)));
    let mut delivered = Vec::with_capacity(emitted.len());
    for env in &emitted {
        if channel_deliver(env, &world.channel) {
            delivered.push(env.clone());
        }
    }
    for env in &delivered {
        store.ingest_uplink(env)?;
    }

    let closed_form = daily_energy_mwh(&s.power, true).total;
    let mut per_node = Vec::with_capacity(s.nodes.len());
    for (n, run) in s.nodes.iter().zip(&runs) {
        let dropout_at = world.channel.dropouts.get(&n.dev_eui).copied();
        let before = run
            .envelopes
            .iter()
            .filter(|e| dropout_at.map_or(true, |d| e.received_at < d))
            .count();
        let ledger = run.ledger(&s.power)?;
        let daily = ledger.mean_daily_mwh();
        per_node.push(NodeSummary {
            dev_eui: n.dev_eui,
            label: n.label.clone(),
            square: n.square.clone(),
            emitted: run.envelopes.len(),
            emitted_before_dropout: before,
            delivered: delivered.iter().filter(|e| e.dev_eui == n.dev_eui).count(),
            stored: store.device(&n.dev_eui).map_or(0, |d| d.frames as usize),
            dropout_at,
            gnss_timeouts: run
                .events
                .iter()
                .filter(|e| e.event == crate::node::EventKind::GnssTimeout)
                .count(),
            energy_mwh: ledger.total_mwh(),
            mean_daily_mwh: daily,
            projected_lifetime_days: lifetime_days(&s.battery, daily)?,
        });
    }
    let lost_dropout = emitted
        .iter()
        .filter(|e| world.channel.is_dropped_out(&e.dev_eui, &e.received_at))
        .count();
    let summary = SimSummary {
        nodes: s.nodes.len(),
        days: s.duration_days,
        emitted: emitted.len(),
        delivered: delivered.len(),
        stored: store.record_count(),
        lost_channel: emitted.len() - delivered.len() - lost_dropout,
        lost_dropout,
        dropouts: world.channel.dropouts.len(),
        closed_form_daily_mwh: closed_form,
        per_node,
    };
    Ok(SimRun {
        world,
        runs,
        emitted,
        delivered,
        store,
        summary,
    })
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<(), SimError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_at(path))?);
    for it in items {
        serde_json::to_writer(&mut w, &it).map_err(|e| SimError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
        w.write_all(b"\n").map_err(io_at(path))?;
    }
    w.flush().map_err(io_at(path))
}

/// Runs the scenario and writes the store, logs, energy report and CSV
/// export into `out_dir`, replacing earlier results.
pub fn run_to_dir(s: &Scenario, out_dir: &Path) -> Result<SimRun, SimError> {
    fs::create_dir_all(out_dir).map_err(io_at(out_dir))?;
    let store_path = out_dir.join(STORE_FILE);
    if store_path.exists() {
        fs::remove_file(&store_path).map_err(io_at(&store_path))?;
    }
    let run = simulate(s, Store::open(&store_path)?)?;

    let mut events: Vec<&EventRecord> = run.runs.iter().flat_map(|r| &r.events).collect();
    events.sort_by(|a, b| (a.time, a.node).cmp(&(b.time, b.node)));
    write_jsonl(&out_dir.join(EVENTS_FILE), events)?;
    write_jsonl(&out_dir.join(UPLINKS_FILE), &run.delivered)?;

    let energy_path = out_dir.join(ENERGY_FILE);
    let mut w = csv::Writer::from_path(&energy_path).map_err(|e| SimError::Csv(e.into()))?;
    w.write_record([
        "dev_eui",
        "label",
        "energy_mwh",
        "mean_daily_mwh",
        "closed_form_daily_mwh",
        "projected_lifetime_days",
        "gnss_timeouts",
    ])
    .map_err(|e| SimError::Csv(e.into()))?;
    for n in &run.summary.per_node {
        w.write_record([
            n.dev_eui.to_string(),
            n.label.clone(),
            format!("{:.4}", n.energy_mwh),
            format!("{:.4}", n.mean_daily_mwh),
            format!("{:.4}", run.summary.closed_form_daily_mwh),
            format!("{:.2}", n.projected_lifetime_days),
            n.gnss_timeouts.to_string(),
        ])
        .map_err(|e| SimError::Csv(e.into()))?;
    }
    w.flush().map_err(io_at(&energy_path))?;

    let export_path = out_dir.join(EXPORT_FILE);
    let f = BufWriter::new(File::create(&export_path).map_err(io_at(&export_path))?);
    write_csv(f, run.store.records_in_export_order(), run.store.interval_s())?;

    let summary_path = out_dir.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&run.summary).expect("summary serializes");
    fs::write(&summary_path, text + "\n").map_err(io_at(&summary_path))?;
    Ok(run)
}

mod opt_time {
    use super::*;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(t: &Option<DateTime<Utc>>, s: S) -> Result<S::Ok, S::Error> {
        match t {
            Some(t) => s.serialize_str(&rfc3339::format(t)),
            None => s.serialize_none(),
        }
    }
}

/// Re-ingests `envelopes` and reports how many were new.
pub fn replay_uplinks<'a>(
    store: &mut Store,
    envelopes: impl IntoIterator<Item = &'a UplinkEnvelope>,
) -> Result<usize, StoreError> {
    let mut created = 0;
    for env in envelopes {
        if store.ingest_uplink(env)? == IngestResult::Created {
            created += 1;
        }
    }
    Ok(created)
}
