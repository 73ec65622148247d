use std::fs;
use std::io::{self, BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use urbansense_core::airtime::{airtime_readings, RadioParams};
use urbansense_core::analytics::{DaytimeWindow, DEFAULT_BIN_H, DEFAULT_SUN_DELTA_C};
use urbansense_core::codec::{decode_frame_hex, encode_frame_hex, SensorFrame};
use urbansense_core::energy::{breakdown_rows, energy_report, BatteryModel, PowerProfile};
use urbansense_core::model::DevEui;
use urbansense_core::report;
use urbansense_core::scenario::{Scenario, ScenarioLoadError};
use urbansense_core::sim::run_to_dir;
use urbansense_core::store::Store;

#[derive(Parser)]
#[command(name = "urbansense", version, about = "Chair sensor simulation, network server and analytics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write store, logs, energy report and CSV export
    Sim {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Serve the HTTP API over a store file
    Serve {
        #[arg(long, env = "URBANSENSE_STORE", default_value = "store.jsonl")]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
    /// Encode or decode a 29-byte sensor frame
    Codec {
        #[command(subcommand)]
        op: CodecOp,
    },
    /// LoRa time on air of a payload
    Airtime(AirtimeArgs),
    /// Daily energy breakdown and battery lifetime
    Energy(EnergyArgs),
    /// Analytics over a store file
    Analyze {
        #[command(subcommand)]
        kind: Analysis,
        #[arg(long, global = true, env = "URBANSENSE_STORE", default_value = "store.jsonl")]
        store: PathBuf,
        #[arg(long, global = true)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum CodecOp {
    /// Frame JSON to payload hex
    Encode {
        frame_json: String,
        #[arg(long)]
        json: bool,
    },
    /// Payload hex to frame JSON
    Decode {
        payload_hex: String,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Ldro {
    Auto,
    On,
    Off,
}

#[derive(Args)]
struct AirtimeArgs {
    #[arg(long, default_value_t = 12)]
    sf: u8,
    #[arg(long, default_value_t = 29)]
    payload_len: usize,
    #[arg(long, default_value_t = 125_000)]
    bw_hz: u32,
    /// Coding rate index, 1 = 4/5 ... 4 = 4/8
    #[arg(long, default_value_t = 1)]
    cr: u8,
    #[arg(long, default_value_t = 8)]
    preamble_symbols: u16,
    #[arg(long)]
    implicit_header: bool,
    #[arg(long)]
    crc_off: bool,
    #[arg(long, value_enum, default_value = "auto")]
    ldro: Ldro,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EnergyArgs {
    /// PowerProfile JSON file; flags override its fields
    #[arg(long)]
    profile: Option<PathBuf>,
    /// BatteryModel JSON file
    #[arg(long)]
    battery: Option<PathBuf>,
    #[arg(long)]
    p_background_mw: Option<f64>,
    #[arg(long)]
    p_gnss_mw: Option<f64>,
    #[arg(long)]
    e_uplink_mwh: Option<f64>,
    #[arg(long)]
    gnss_active_s_per_call: Option<f64>,
    #[arg(long)]
    gnss_calls_per_day: Option<u32>,
    #[arg(long)]
    uplinks_per_day: Option<u32>,
    #[arg(long)]
    usable_energy_mwh: Option<f64>,
    #[arg(long)]
    gnss_off: bool,
    #[arg(long, conflicts_with = "json")]
    csv: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum Analysis {
    /// Sun or shade per node and day
    Sun {
        #[arg(long)]
        dev_eui: Option<DevEui>,
        #[arg(long, default_value_t = DEFAULT_SUN_DELTA_C)]
        delta_c: f64,
        #[arg(long, default_value_t = 10.0)]
        start_h: f64,
        #[arg(long, default_value_t = 16.0)]
        end_h: f64,
    },
    /// Rain flag per frame
    Rain {
        #[arg(long)]
        square: Option<String>,
    },
    /// Sitting minutes against humidity
    Scatter {
        #[arg(long)]
        square: String,
    },
    /// Time-of-day sitting profile, weekdays and weekends
    Profile {
        #[arg(long)]
        square: String,
        #[arg(long, default_value_t = DEFAULT_BIN_H)]
        bin_h: f64,
    },
    /// Daily sitting totals next to the reference temperature
    Daily,
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

type CliResult = Result<(), Failure>;

fn print_json<T: Serialize>(v: &T) -> CliResult {
    let text = serde_json::to_string_pretty(v).map_err(|e| fail(1, e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn write_stdout(bytes: &[u8]) -> CliResult {
    io::stdout().write_all(bytes).map_err(|e| fail(1, e.to_string()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| fail(2, format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| fail(2, format!("{}: {e}", path.display())))
}

fn cmd_sim(scenario: &Path, out: &Path, json: bool) -> CliResult {
    let s = Scenario::load(scenario).map_err(|e| match e {
        ScenarioLoadError::Io { .. } => fail(2, e.to_string()),
        ScenarioLoadError::Invalid(inner) => fail(2, format!("{}: {inner}", scenario.display())),
    })?;
    let run = run_to_dir(&s, out).map_err(|e| fail(1, e.to_string()))?;
    let sum = &run.summary;
    if json {
        return print_json(sum);
    }
    println!("nodes:       {}", sum.nodes);
    println!("days:        {}", sum.days);
    println!("emitted:     {}", sum.emitted);
    println!("delivered:   {}", sum.delivered);
    println!("stored:      {}", sum.stored);
    println!("lost (loss): {}", sum.lost_channel);
    println!("lost (gone): {}", sum.lost_dropout);
    println!("dropouts:    {}", sum.dropouts);
    println!("output:      {}", out.display());
    Ok(())
}

fn cmd_serve(store: &Path, bind: SocketAddr) -> CliResult {
    let s = Store::open(store).map_err(|e| fail(1, format!("{}: {e}", store.display())))?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| fail(1, e.to_string()))?;
    rt.block_on(urbansense_server::serve(s, bind))
        .map_err(|e| fail(1, format!("cannot serve on {bind}: {e}")))
}

fn cmd_codec(op: CodecOp) -> CliResult {
    match op {
        CodecOp::Encode { frame_json, json } => {
            let frame: SensorFrame =
                serde_json::from_str(&frame_json).map_err(|e| fail(1, format!("invalid frame JSON: {e}")))?;
            let hex = encode_frame_hex(&frame).map_err(|e| fail(1, format!("{}: {e}", e.kind())))?;
            if json {
                print_json(&serde_json::json!({ "payload_hex": hex }))
            } else {
                println!("{hex}");
                Ok(())
            }
        }
        CodecOp::Decode { payload_hex, json } => {
            let frame = decode_frame_hex(payload_hex.trim()).map_err(|e| fail(1, format!("{}: {e}", e.kind())))?;
            if json {
                return print_json(&frame);
            }
            let p = &frame.position;
            println!("header       {}", frame.header);
            println!("debug        0b{:08b}", frame.debug);
            if p.has_fix() {
                println!("position     {:.7}, {:.7} ({:.1} m)", p.latitude_deg(), p.longitude_deg(), p.accuracy_dm as f64 / 10.0);
            } else {
                println!("position     no fix");
            }
            println!("fix time     {}", p.fix_time_s);
            println!("battery      {:?} %", frame.battery());
            println!("temperature  {:.2} C", frame.temperature_c());
            println!("humidity     {:.2} %RH", frame.humidity_rh());
            println!("sitting      {:?} min", (0..4).map(|i| frame.sitting(i)).collect::<Vec<_>>());
            println!("noise        {:?} dB", (0..4).map(|i| frame.noise(i)).collect::<Vec<_>>());
            Ok(())
        }
    }
}

fn cmd_airtime(a: &AirtimeArgs) -> CliResult {
    let p = RadioParams {
        sf: a.sf,
        bw_hz: a.bw_hz,
        cr: a.cr,
        preamble_symbols: a.preamble_symbols,
        explicit_header: !a.implicit_header,
        crc_on: !a.crc_off,
        low_data_rate_optimize: match a.ldro {
            Ldro::Auto => None,
            Ldro::On => Some(true),
            Ldro::Off => Some(false),
        },
    };
    let r = airtime_readings(&p, a.payload_len).map_err(|e| fail(1, e.to_string()))?;
    if a.json {
        return print_json(&serde_json::json!({ "params": p, "ldro": p.ldro(), "readings": r }));
    }
    let ms = |s: f64| s * 1e3;
    println!(
        "SF{} BW {} kHz CR 4/{} preamble {} LDRO {}",
        p.sf,
        p.bw_hz / 1000,
        p.cr + 4,
        p.preamble_symbols,
        if p.ldro() { "on" } else { "off" }
    );
    for (name, len, sym, t) in [
        ("application payload only", r.payload_len, r.payload_symbols, r.payload_only),
        ("with LoRaWAN MAC overhead", r.mac_len, r.mac_symbols, r.with_mac_overhead),
    ] {
        println!("{name}: {len} bytes, {sym} payload symbols");
        println!("  preamble {:>10.3} ms", ms(t.preamble_s));
        println!("  payload  {:>10.3} ms", ms(t.payload_s));
        println!("  total    {:>10.3} ms", ms(t.total_s));
    }
    println!("note: MAC overhead is MHDR, FHDR without options, FPort and MIC");
    Ok(())
}

fn cmd_energy(a: &EnergyArgs) -> CliResult {
    let mut p: PowerProfile = match &a.profile {
        Some(path) => read_json(path)?,
        None => PowerProfile::default(),
    };
    let mut b: BatteryModel = match &a.battery {
        Some(path) => read_json(path)?,
        None => BatteryModel::default(),
    };
    if let Some(v) = a.p_background_mw {
        p.p_background_mw = v;
    }
    if let Some(v) = a.p_gnss_mw {
        p.p_gnss_mw = v;
    }
    if let Some(v) = a.e_uplink_mwh {
        p.e_uplink_mwh = v;
    }
    if let Some(v) = a.gnss_active_s_per_call {
        p.gnss_active_s_per_call = v;
    }
    if let Some(v) = a.gnss_calls_per_day {
        p.gnss_calls_per_day = v;
    }
    if let Some(v) = a.uplinks_per_day {
        p.uplinks_per_day = v;
    }
    if let Some(v) = a.usable_energy_mwh {
        b.usable_energy_mwh = v;
    }
    let r = energy_report(&p, &b, !a.gnss_off).map_err(|e| fail(1, e.to_string()))?;
    let rows = breakdown_rows(&r.daily);
    if a.json {
        return print_json(&r);
    }
    if a.csv {
        println!("task,energy_mwh_per_day");
        for (task, v) in rows {
            println!("{task},{v:.4}");
        }
        println!("lifetime_days,{:.2}", r.lifetime_days);
        return Ok(());
    }
    println!("{:<20}{:>12}", "Task", "mWh/day");
    for (task, v) in rows {
        println!("{task:<20}{v:>12.2}");
    }
    println!("Lifetime {:.1} days on {} mWh", r.lifetime_days, b.usable_energy_mwh);
    Ok(())
}

fn load_store(path: &Path) -> Result<Store, Failure> {
    let f = fs::File::open(path).map_err(|e| fail(2, format!("cannot open store {}: {e}", path.display())))?;
    let mut s = Store::in_memory();
    s.replay(BufReader::new(f)).map_err(|e| fail(1, format!("{}: {e}", path.display())))?;
    Ok(s)
}

fn cmd_analyze(kind: Analysis, store: &Path, json: bool) -> CliResult {
    let s = load_store(store)?;
    let err = |e: report::ReportError| fail(1, e.to_string());
    match kind {
        Analysis::Sun {
            dev_eui,
            delta_c,
            start_h,
            end_h,
        } => {
            let r = report::sun_report(&s, dev_eui, DaytimeWindow { start_h, end_h }, delta_c).map_err(err)?;
            if json { print_json(&r) } else { write_stdout(&report::sun_csv(&r)) }
        }
        Analysis::Rain { square } => {
            let r = report::rain_report(&s, square.as_deref()).map_err(err)?;
            if json { print_json(&r) } else { write_stdout(&report::rain_csv(&r)) }
        }
        Analysis::Scatter { square } => {
            let r = report::scatter_report(&s, &square).map_err(err)?;
            if json { print_json(&r) } else { write_stdout(&report::scatter_csv(&r)) }
        }
        Analysis::Profile { square, bin_h } => {
            let r = report::profile_report(&s, &square, bin_h).map_err(err)?;
            if json { print_json(&r) } else { write_stdout(&report::profile_csv(&r)) }
        }
        Analysis::Daily => {
            let r = report::daily_report(&s).map_err(err)?;
            if json { print_json(&r) } else { write_stdout(&report::daily_csv(&r)) }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sim { scenario, out, json } => cmd_sim(&scenario, &out, json),
        Command::Serve { store, bind } => {
            tracing_subscriber::fmt()
                .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
                .with_writer(io::stderr)
                .init();
            cmd_serve(&store, bind)
        }
        Command::Codec { op } => cmd_codec(op),
        Command::Airtime(a) => cmd_airtime(&a),
        Command::Energy(a) => cmd_energy(&a),
        Command::Analyze { kind, store, json } => cmd_analyze(kind, &store, json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
