use std::fs::File;
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sb_broker::{Broker, BrokerConfig};
use sb_core::control::ControlStrategy;
use sb_gateway::api::{self, ApiConfig};
use sb_gateway::bus::Transport;
use sb_gateway::report::{read_trajectory, write_comparison};
use sb_gateway::scenario::{Fault, Scenario};
use sb_gateway::shared::Shared;
use sb_gateway::sim::{compare_controllers, write_plots, Mode, RunOptions, Simulation};
use sb_telemetry::{export_archive, import_archive, TelemetryStore};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "smartbuilding", version, about = "Smart-building digital twin")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its report and series.
    Run(RunArgs),
    /// Run MPC and the baseline thermostat on the same scenario.
    Compare {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, value_enum, default_value_t = Transport::InProcess)]
        transport: Transport,
        /// CSV output; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the API over the telemetry of a finished run.
    Serve {
        /// Output directory of a previous `run`.
        #[arg(long)]
        dir: PathBuf,
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Rebuild the floor plot series from a trajectory CSV.
    ExportPlots {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, default_value_t = 1)]
        floor: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a standalone MQTT broker.
    Broker {
        #[arg(long, default_value = "127.0.0.1:1883")]
        addr: SocketAddr,
    },
    /// Maintain a telemetry log.
    #[command(subcommand)]
    Telemetry(TelemetryCmd),
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario TOML; the bundled reference scenario when absent.
    #[arg(long)]
    scenario: Option<PathBuf>,
}

impl ScenarioArg {
    fn load(&self) -> Result<Scenario> {
        match &self.scenario {
            Some(p) => Scenario::load(p).with_context(|| format!("loading {}", p.display())),
            None => Ok(Scenario::reference()),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// mpc or baseline; the scenario's choice when absent.
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<ControlStrategy>,
    #[arg(long, value_enum, default_value_t = Transport::InProcess)]
    transport: Transport,
    #[arg(long, value_enum, default_value_t = Mode::Fast)]
    mode: Mode,
    /// Simulated seconds per wall second in realtime mode.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Stop a floor's controller at a tick, as FLOOR:TICK. Repeatable.
    #[arg(long = "kill", value_parser = parse_fault)]
    kills: Vec<Fault>,
    /// Keep telemetry in this write-ahead log instead of memory.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Serve the API while running and afterwards until interrupted.
    #[arg(long)]
    serve: Option<SocketAddr>,
}

#[derive(Subcommand)]
enum TelemetryCmd {
    /// Write a range of a log to an archive file.
    Export {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = f64::NEG_INFINITY, allow_hyphen_values = true)]
        start: f64,
        #[arg(long, default_value_t = f64::INFINITY)]
        end: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Append an archive to a log.
    Import {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        archive: PathBuf,
    },
    /// Drop records older than a timestamp.
    Prune {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        before: f64,
    },
}

fn parse_strategy(s: &str) -> Result<ControlStrategy, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown strategy {s}"))
}

fn parse_fault(s: &str) -> Result<Fault, String> {
    let (floor, tick) = s.split_once(':').ok_or("expected FLOOR:TICK")?;
    Ok(Fault {
        floor: floor.parse().map_err(|e| format!("floor: {e}"))?,
        at_tick: tick.parse().map_err(|e| format!("tick: {e}"))?,
    })
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Compare { scenario, transport, out } => {
            let scenario = scenario.load()?;
            let opts = RunOptions { transport, ..RunOptions::default() };
            let rows = compare_controllers(&scenario, &[ControlStrategy::Mpc, ControlStrategy::Baseline], &opts)?;
            match out {
                Some(p) => write_comparison(&rows, File::create(&p).with_context(|| format!("creating {}", p.display()))?)?,
                None => write_comparison(&rows, std::io::stdout())?,
            }
            Ok(())
        }
        Command::Serve { dir, scenario, addr } => serve(&dir, scenario.load()?, addr),
        Command::ExportPlots { trajectory, floor, out } => {
            let rows = read_trajectory(File::open(&trajectory).with_context(|| format!("opening {}", trajectory.display()))?)?;
            write_plots(&rows, floor, &out)?;
            Ok(())
        }
        Command::Broker { addr } => runtime()?.block_on(async {
            let broker = Broker::new(BrokerConfig::default());
            let handle = sb_broker::bind(addr, broker.clone()).await?;
            tracing::info!("broker listening on {}", handle.local_addr);
            tokio::signal::ctrl_c().await?;
            broker.shutdown();
            Ok(())
        }),
        Command::Telemetry(cmd) => telemetry(cmd),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn run(args: RunArgs) -> Result<()> {
    let scenario = args.scenario.load()?;
    let opts = RunOptions {
        strategy: args.strategy,
        transport: args.transport,
        mode: args.mode,
        speed: args.speed,
        faults: args.kills,
        store_path: args.store,
        ..RunOptions::default()
    };
    let sim = Simulation::new(scenario, opts)?;
    let outcome = match args.serve {
        None => sim.run()?,
        Some(addr) => {
            let rt = runtime()?;
            let shared = sim.shared();
            let (local, _server) = rt.block_on(api::spawn(addr, shared, ApiConfig::default()))?;
            tracing::info!("api on http://{local}/api/v1");
            let outcome = rt.block_on(tokio::task::spawn_blocking(move || sim.run()))??;
            outcome.write_outputs(&args.out)?;
            print_summary(&outcome.report, &args.out);
            tracing::info!("run finished; serving until interrupted");
            rt.block_on(tokio::signal::ctrl_c())?;
            return Ok(());
        }
    };
    outcome.write_outputs(&args.out)?;
    print_summary(&outcome.report, &args.out);
    Ok(())
}

fn print_summary(r: &sb_gateway::report::RunReport, out: &Path) {
    for f in &r.floors {
        println!("floor {}: temperature error {:.2}%  humidity error {:.2}%", f.floor, f.temperature_pct, f.humidity_pct);
    }
    println!("actuator energy {:.2} Wh, lighting {:.2} Wh", r.energy.actuator_wh, r.energy.lighting_wh);
    println!("telemetry records {}, archive sha256 {}", r.telemetry.records, r.telemetry.archive_sha256);
    println!("outputs in {}", out.display());
}

fn serve(dir: &Path, scenario: Scenario, addr: SocketAddr) -> Result<()> {
    let archive = dir.join("telemetry.archive");
    let mut store = TelemetryStore::in_memory();
    let file = File::open(&archive).with_context(|| format!("opening {}", archive.display()))?;
    import_archive(&mut store, BufReader::new(file))?;
    let topology = Arc::new(scenario.load_topology()?);
    let shared = Arc::new(Shared::new(topology, scenario.controller.comfort, scenario.dt_s, store, None));
    shared.set_finished();
    runtime()?.block_on(async {
        let (local, _server) = api::spawn(addr, shared, ApiConfig::default()).await?;
        tracing::info!("api on http://{local}/api/v1");
        tokio::signal::ctrl_c().await?;
        Ok(())
    })
}

fn telemetry(cmd: TelemetryCmd) -> Result<()> {
    match cmd {
        TelemetryCmd::Export { store, start, end, out } => {
            if start > end {
                bail!("start {start} is after end {end}");
            }
            let store = TelemetryStore::open(&store)?;
            let mut f = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            let n = export_archive(&store, start, end, &mut f)?;
            println!("exported {n} records");
        }
        TelemetryCmd::Import { store, archive } => {
            let mut store = TelemetryStore::open(&store)?;
            let f = File::open(&archive).with_context(|| format!("opening {}", archive.display()))?;
            let n = import_archive(&mut store, BufReader::new(f))?;
            println!("imported {n} records");
        }
        TelemetryCmd::Prune { store, before } => {
            let mut store = TelemetryStore::open(&store)?;
            let n = store.prune_before(before)?;
            println!("pruned {n} records");
        }
    }
    Ok(())
}
