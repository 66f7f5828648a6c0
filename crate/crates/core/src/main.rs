//! Command-line front end: diagnose a failure report, inject a fault, run a
//! campaign or query the oracle.

use std::io::Write;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use netdx::campaign::{apply_ttl_budgets, run_campaign, CampaignConfig, CampaignMode};
use netdx::faults::{FaultInjector, FaultLocation, FaultSpec, FaultType};
use netdx::manager::{Diagnosis, FailureReport, Manager, ManagerConfig, Symptom, Verdict};
use netdx::netmodel::{
    load_topology, FlowSpec, HostId, NetworkModel, Prefix, Protocol, SimTime, SwitchId,
};
use netdx::oracle::{expected_state, ExpectedState};
use netdx::simkernel::{Network, SimConfig, StopCondition};

#[derive(Parser)]
#[command(
    name = "netdx",
    version,
    about = "BGP-lite network simulator with root-cause diagnosis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Diagnose a failure report, optionally after injecting a fault.
    Diagnose(DiagnoseArgs),
    /// Inject a fault, run the pingmesh and print what it noticed.
    Inject(InjectArgs),
    /// Run a single- or double-fault injection campaign.
    Campaign(CampaignArgs),
    /// Query the expected (fault-free) network behavior.
    Oracle {
        #[command(subcommand)]
        query: OracleQuery,
    },
}

#[derive(Args)]
struct TopologyArg {
    /// Topology document.
    #[arg(long)]
    topology: PathBuf,
}

#[derive(Args)]
struct FaultArgs {
    /// Fault type, e.g. SilentDropInSwitch.
    #[arg(long = "type")]
    kind: Option<FaultType>,
    /// Location: S10, L37 or S17>S10 for a BGP session.
    #[arg(long)]
    at: Option<FaultLocation>,
    /// Prefix for prefix-scoped faults.
    #[arg(long)]
    prefix: Option<Prefix>,
    /// Drop or corruption probability of stochastic faults.
    #[arg(long)]
    probability: Option<f64>,
}

impl FaultArgs {
    fn spec(&self) -> Result<Option<FaultSpec>, String> {
        let (kind, at) = match (self.kind, self.at) {
            (None, None) => return Ok(None),
            (Some(k), Some(a)) => (k, a),
            _ => return Err("--type and --at go together".into()),
        };
        let mut spec = FaultSpec::new(kind, at);
        if let Some(p) = self.prefix {
            spec = spec.with_prefix(p);
        }
        if let Some(p) = self.probability {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("probability {p} is outside [0, 1]"));
            }
            spec.params.probability = p;
        }
        Ok(Some(spec))
    }
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    topology: TopologyArg,
    /// Failing pair, e.g. src=H7,dst=H3 (addresses also accepted).
    #[arg(long)]
    report: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    fault: FaultArgs,
    /// Seconds between injecting the fault and diagnosing.
    #[arg(long, default_value_t = 3)]
    settle: u64,
    /// Also print every evidence entry in the JSON output.
    #[arg(long)]
    full: bool,
}

#[derive(Args)]
struct InjectArgs {
    #[command(flatten)]
    topology: TopologyArg,
    #[command(flatten)]
    fault: FaultArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Simulated seconds of pingmesh probing after the injection.
    #[arg(long, default_value_t = 10)]
    duration: u64,
    /// Writes the fault specification as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Single,
    Double,
}

#[derive(Args)]
struct CampaignArgs {
    #[arg(long, value_enum, default_value_t = Mode::Single)]
    mode: Mode,
    #[command(flatten)]
    topology: TopologyArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Results file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scored runs per type (single) or in total (double).
    #[arg(long)]
    runs: Option<u32>,
    /// Comma-separated subset of fault types.
    #[arg(long, value_delimiter = ',')]
    types: Vec<FaultType>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum OracleQuery {
    /// Expected switch path between two hosts.
    Path {
        #[command(flatten)]
        topology: TopologyArg,
        #[arg(long)]
        src: String,
        #[arg(long)]
        dst: String,
    },
    /// Whether traffic from src to dst should cross the hop from -> to.
    ShouldForward {
        #[command(flatten)]
        topology: TopologyArg,
        #[arg(long)]
        from: SwitchId,
        #[arg(long)]
        to: SwitchId,
        #[arg(long)]
        src: String,
        #[arg(long)]
        dst: String,
    },
    /// Neighbors expected to advertise a prefix to a switch.
    Advertisers {
        #[command(flatten)]
        topology: TopologyArg,
        #[arg(long)]
        prefix: Prefix,
        #[arg(long)]
        switch: SwitchId,
    },
    /// Expected FIB and RIB of a switch.
    Tables {
        #[command(flatten)]
        topology: TopologyArg,
        #[arg(long)]
        switch: SwitchId,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Diagnose(a) => diagnose(a),
        Command::Inject(a) => inject(a),
        Command::Campaign(a) => campaign(a),
        Command::Oracle { query } => oracle(query),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn load(path: &Path) -> Result<NetworkModel, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    load_topology(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Converged network with per-destination probe TTLs set.
fn converged(model: NetworkModel, seed: u64) -> Result<(Network, Arc<ExpectedState>), String> {
    let mut net = Network::from_model(
        model,
        SimConfig {
            seed,
            ..SimConfig::default()
        },
    );
    net.run_until(StopCondition::Quiescence)
        .map_err(|e| e.to_string())?;
    let oracle = expected_state(&net.model).map_err(|e| e.to_string())?;
    apply_ttl_budgets(&mut net, &oracle).map_err(|e| e.to_string())?;
    Ok((net, oracle))
}

/// A host name (`H7`) or an address.
fn address(model: &NetworkModel, s: &str) -> Result<Ipv4Addr, String> {
    if let Ok(h) = s.parse::<HostId>() {
        return model
            .topology
            .hosts
            .get(h.index())
            .map(|d| d.ip)
            .ok_or_else(|| format!("unknown host {h}"));
    }
    s.parse()
        .map_err(|_| format!("'{s}' is neither a host nor an address"))
}

fn host(model: &NetworkModel, s: &str) -> Result<HostId, String> {
    let ip = address(model, s)?;
    model
        .topology
        .host_by_ip(ip)
        .map(|h| h.id)
        .ok_or_else(|| format!("{ip} is not a host"))
}

fn parse_report(model: &NetworkModel, s: &str) -> Result<FailureReport, String> {
    let (mut src, mut dst) = (None, None);
    for part in s.split(',') {
        match part.trim().split_once('=') {
            Some(("src", v)) => src = Some(address(model, v)?),
            Some(("dst", v)) => dst = Some(address(model, v)?),
            _ => return Err(format!("bad report field '{part}'; expected src=..,dst=..")),
        }
    }
    match (src, dst) {
        (Some(src), Some(dst)) => Ok(FailureReport {
            src,
            dst,
            symptom: Symptom::Unreachable,
        }),
        _ => Err("report needs both src and dst".into()),
    }
}

/// Writes to stdout; a closed pipe is not an error.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn print_json(v: &serde_json::Value) {
    emit(&(serde_json::to_string_pretty(v).expect("values serialize") + "\n"));
}

fn evidence_trail(d: &Diagnosis) -> String {
    let mut out = String::new();
    for e in &d.evidence {
        out.push_str(&format!(
            "run {} {:>10} {:<16} {:<36} {:<6} {}\n",
            e.run,
            e.time.to_string(),
            e.script.to_string(),
            e.primitive,
            e.target,
            e.summary
        ));
    }
    out
}

fn diagnose(a: DiagnoseArgs) -> Result<ExitCode, String> {
    let model = load(&a.topology.topology)?;
    let report = parse_report(&model, &a.report)?;
    let spec = a.fault.spec()?;
    let (mut net, oracle) = converged(model, a.seed)?;
    if let Some(spec) = &spec {
        FaultInjector::new()
            .inject(&mut net, spec.clone())
            .map_err(|e| e.to_string())?;
        net.advance(SimTime::from_secs(a.settle))
            .map_err(|e| e.to_string())?;
    }
    let outcome = Manager::new(&mut net, oracle, ManagerConfig::default()).diagnose(&report);
    let d = match outcome {
        Ok(d) => d,
        Err(e) => {
            print_json(&json!({ "report": report, "fault": spec, "error": e.to_string() }));
            return Ok(ExitCode::from(2));
        }
    };
    let mut out = json!({
        "report": report,
        "fault": spec,
        "verdict": d.verdict,
        "category": d.category,
        "runs_to_consensus": d.runs_to_consensus,
        "primitive_count": d.primitive_count,
        "used_fault_report": d.used_fault_report,
        "used_disconnected": d.used_disconnected,
        "scripts": (1..=d.runs_to_consensus).map(|r| d.script_sequence(r)).collect::<Vec<_>>(),
    });
    if a.full {
        out["evidence"] = json!(d.evidence);
    }
    print_json(&out);
    emit(&format!(
        "evidence trail:\n{}verdict: {}\n",
        evidence_trail(&d),
        d.verdict
    ));
    let definite = !matches!(d.verdict, Verdict::Inconclusive(_));
    Ok(if definite {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn inject(a: InjectArgs) -> Result<ExitCode, String> {
    let spec = a.fault.spec()?.ok_or("--type and --at are required")?;
    let model = load(&a.topology.topology)?;
    let (mut net, _) = converged(model, a.seed)?;
    let footprint = spec.footprint(&net);
    FaultInjector::new()
        .inject(&mut net, spec.clone())
        .map_err(|e| e.to_string())?;
    net.start_pingmesh();
    net.advance(SimTime::from_secs(a.duration))
        .map_err(|e| e.to_string())?;
    if let Some(path) = &a.out {
        let text = serde_json::to_string_pretty(&spec).expect("spec serializes");
        std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    print_json(&json!({
        "fault": spec,
        "footprint": footprint,
        "pingmesh_reports": net.pingmesh_reports,
        "losses": net.losses,
    }));
    Ok(ExitCode::SUCCESS)
}

fn campaign(a: CampaignArgs) -> Result<ExitCode, String> {
    let model = load(&a.topology.topology)?;
    let mut config = match a.mode {
        Mode::Single => CampaignConfig::single(a.seed),
        Mode::Double => CampaignConfig::double(a.seed),
    };
    if let Some(n) = a.runs {
        match config.mode {
            CampaignMode::Single => config.runs_per_type = n.max(1),
            CampaignMode::Double => config.total_runs = n.max(1),
        }
    }
    if !a.types.is_empty() {
        config.fault_types = a.types;
    }
    if let Some(t) = a.threads {
        config.threads = t.max(1);
    }
    let result = run_campaign(model, &config).map_err(|e| e.to_string())?;
    if let Some(path) = &a.out {
        std::fs::write(path, result.to_json()).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    emit(&result.summary_table());
    Ok(if result.correct == result.total {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn oracle(q: OracleQuery) -> Result<ExitCode, String> {
    let state = |t: &TopologyArg| -> Result<(Arc<NetworkModel>, Arc<ExpectedState>), String> {
        let model = Arc::new(load(&t.topology)?);
        let st = expected_state(&model).map_err(|e| e.to_string())?;
        Ok((model, st))
    };
    let v = match q {
        OracleQuery::Path { topology, src, dst } => {
            let (m, st) = state(&topology)?;
            let (a, b) = (host(&m, &src)?, host(&m, &dst)?);
            let paths = st.expected_path(a, b).map_err(|e| e.to_string())?;
            json!({ "src": a, "dst": b, "paths": paths })
        }
        OracleQuery::ShouldForward {
            topology,
            from,
            to,
            src,
            dst,
        } => {
            let (m, st) = state(&topology)?;
            let flow = FlowSpec {
                protocol: Some(Protocol::Udp),
                ..FlowSpec::between(address(&m, &src)?, address(&m, &dst)?)
            };
            let answer = st
                .should_forward(from, to, &flow)
                .map_err(|e| e.to_string())?;
            json!({ "from": from, "to": to, "flow": flow.to_string(), "should_forward": answer })
        }
        OracleQuery::Advertisers {
            topology,
            prefix,
            switch,
        } => {
            let (_, st) = state(&topology)?;
            let set = st
                .expected_advertisers(prefix, switch)
                .map_err(|e| e.to_string())?;
            json!({ "prefix": prefix, "switch": switch, "advertisers": set })
        }
        OracleQuery::Tables { topology, switch } => {
            let (_, st) = state(&topology)?;
            let e = st.switch(switch).map_err(|e| e.to_string())?;
            json!({
                "switch": switch,
                "fib": e.fib,
                "rib": e.rib.values().collect::<Vec<_>>(),
            })
        }
    };
    print_json(&v);
    Ok(ExitCode::SUCCESS)
}
