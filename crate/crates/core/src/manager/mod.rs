//! Diagnosis manager. Runs on the diagnosis host, talks to switch agents in
//! band, compares what it reads with the oracle and walks the diagnosis
//! scripts until two consecutive runs agree on a verdict.

mod scripts;
mod transport;

#[cfg(test)]
mod tests;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::Ipv4Addr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentCommand, AgentReply, AnomalyReport, FaultReport, ReplyPayload};
use crate::dataplane::MirrorRecord;
use crate::faults::{Culprit, FaultCategory};
use crate::netmodel::{FlowSpec, HostId, LinkId, Prefix, Protocol, SimTime, SwitchId};
use crate::oracle::{ExpectedState, OracleError};
use crate::simkernel::{Network, SimError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    FaultySwitch(SwitchId),
    FaultyLink(LinkId),
    /// A switch or its link toward `neighbor`; the two cannot be told apart.
    FaultAt {
        switch: SwitchId,
        neighbor: SwitchId,
        link: LinkId,
    },
    /// The observed behavior is what the configuration asks for.
    ConfigNotFault(String),
    NoFaultFound,
    Inconclusive(String),
}

impl Verdict {
    /// Whether the verdict names `c` as faulty.
    pub fn names(&self, c: Culprit) -> bool {
        match (self, c) {
            (Verdict::FaultySwitch(s), Culprit::Switch(x)) => *s == x,
            (Verdict::FaultyLink(l), Culprit::Link(x)) => *l == x,
            (Verdict::FaultAt { switch, .. }, Culprit::Switch(x)) => *switch == x,
            (Verdict::FaultAt { link, .. }, Culprit::Link(x)) => *link == x,
            _ => false,
        }
    }

    pub fn is_inconclusive(&self) -> bool {
        matches!(self, Verdict::Inconclusive(_))
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::FaultySwitch(s) => write!(f, "FaultySwitch({s})"),
            Verdict::FaultyLink(l) => write!(f, "FaultyLink({l})"),
            Verdict::FaultAt {
                switch,
                neighbor,
                link,
            } => {
                write!(f, "FaultAt({switch} toward {neighbor} over {link})")
            }
            Verdict::ConfigNotFault(d) => write!(f, "ConfigNotFault({d})"),
            Verdict::NoFaultFound => write!(f, "NoFaultFound"),
            Verdict::Inconclusive(r) => write!(f, "Inconclusive({r})"),
        }
    }
}

/// A verdict with the fault-model row it falls under.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub verdict: Verdict,
    pub category: Option<FaultCategory>,
}

impl Finding {
    pub fn new(verdict: Verdict, category: FaultCategory) -> Self {
        Finding {
            verdict,
            category: Some(category),
        }
    }

    pub fn bare(verdict: Verdict) -> Self {
        Finding {
            verdict,
            category: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Script {
    Locate,
    NoForwarding,
    RouteAdvMissing,
    NeighborDown,
    Disconnected,
    Corruption,
    TtlCheck,
    Cleanup,
}

impl fmt::Display for Script {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        write!(f, "{}", s.as_str().unwrap_or_default())
    }
}

/// One executed primitive: an agent command or an oracle query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub run: u32,
    pub script: Script,
    pub primitive: String,
    pub target: String,
    pub summary: String,
    pub time: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptCall {
    pub run: u32,
    pub script: Script,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CmdResult {
    Ok(ReplyPayload),
    Err(String),
    Timeout,
}

impl CmdResult {
    fn summary(&self) -> String {
        match self {
            CmdResult::Ok(p) => match p {
                ReplyPayload::Ack => "ack".into(),
                ReplyPayload::Fib(e) => format!("{} FIB entries", e.len()),
                ReplyPayload::Rib(e) => format!("{} RIB entries", e.len()),
                ReplyPayload::RibIn(m) => format!("RIB-in from {} peers", m.len()),
                ReplyPayload::RibOut(m) => format!("RIB-out to {} peers", m.len()),
                ReplyPayload::Sessions(s) => {
                    let up = s
                        .iter()
                        .filter(|x| x.state == crate::controlplane::SessionState::Established)
                        .count();
                    format!("{up}/{} sessions established", s.len())
                }
                ReplyPayload::Marker(m) => {
                    format!("egress {} ingress {}", m.egress_delta, m.ingress_delta)
                }
                ReplyPayload::DropTest(d) => format!(
                    "window {} in {} out {} dropped {} deficit {}",
                    d.report.window,
                    d.report.ingress_sum,
                    d.report.egress_sum,
                    d.report.deliberate_drops,
                    d.report.deficit
                ),
                ReplyPayload::Capture(c) => format!("{} messages captured", c.len()),
                ReplyPayload::FlowStarted { count, .. } => format!("flow of {count} started"),
                ReplyPayload::HeaderLogs(_) => "header logs".into(),
                ReplyPayload::Counters(_) => "counters".into(),
                ReplyPayload::DropCounters(_) => "drop counters".into(),
                ReplyPayload::Acl(a) => format!("{} ACL rules", a.len()),
                ReplyPayload::Relayed(_) => "relayed".into(),
            },
            CmdResult::Err(e) => format!("error: {e}"),
            CmdResult::Timeout => "timeout".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManagerConfig {
    pub command_timeout: SimTime,
    pub retries: u32,
    pub inter_run_delay: SimTime,
    pub max_runs: u32,
    /// How long a run waits for a fault report after starting its flow.
    pub report_wait: SimTime,
    pub flow_packets: u32,
    pub flow_interval: SimTime,
    pub capture: SimTime,
    pub probe_packets: u32,
    pub probe_rounds: u32,
    pub probe_wait: SimTime,
}

impl Default for ManagerConfig {
    fn default() -> Self {
        ManagerConfig {
            command_timeout: SimTime::from_secs(5),
            retries: 1,
            inter_run_delay: SimTime::from_secs(2),
            max_runs: 5,
            report_wait: SimTime::from_millis(300),
            flow_packets: 100,
            flow_interval: SimTime::from_millis(1),
            capture: SimTime::from_millis(700),
            probe_packets: 10,
            probe_rounds: 3,
            probe_wait: SimTime::from_millis(60),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Symptom {
    Unreachable,
    Intermittent,
    Corruption,
}

/// What the manager is asked to explain: traffic between two addresses
/// misbehaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureReport {
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub symptom: Symptom,
}

impl FailureReport {
    pub fn between_hosts(net: &Network, src: HostId, dst: HostId) -> Self {
        FailureReport {
            src: net.host(src).ip,
            dst: net.host(dst).ip,
            symptom: Symptom::Unreachable,
        }
    }

    fn flow(&self, reverse: bool) -> FlowSpec {
        let (a, b) = if reverse {
            (self.dst, self.src)
        } else {
            (self.src, self.dst)
        };
        FlowSpec {
            protocol: Some(Protocol::Udp),
            ..FlowSpec::between(a, b)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: u32,
    pub finding: Finding,
    pub used_fault_report: bool,
    pub used_disconnected: bool,
    pub primitives: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub verdict: Verdict,
    pub category: Option<FaultCategory>,
    pub runs_to_consensus: u32,
    pub primitive_count: usize,
    pub used_fault_report: bool,
    pub used_disconnected: bool,
    pub runs: Vec<RunRecord>,
    pub scripts: Vec<ScriptCall>,
    pub evidence: Vec<Evidence>,
    pub started: SimTime,
    pub finished: SimTime,
}

impl Diagnosis {
    /// Script names in call order with consecutive repeats collapsed.
    pub fn script_sequence(&self, run: u32) -> Vec<Script> {
        let mut out: Vec<Script> = Vec::new();
        for c in self.scripts.iter().filter(|c| c.run == run) {
            if out.last() != Some(&c.script) {
                out.push(c.script);
            }
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum ManagerError {
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("oracle failed: {0}")]
    Oracle(#[from] OracleError),
    #[error("no two consecutive runs agreed after {} runs", .runs.len())]
    NoConsensus { runs: Vec<RunRecord> },
}

/// Per-run bookkeeping, reset at the start of every run.
/// Time for the last traced packet of a flow to leave the network.
const FLOW_DRAIN: SimTime = SimTime(50_000);

#[derive(Debug, Default)]
struct RunState {
    trace_edges: BTreeSet<SwitchId>,
    /// Static routes installed this run: switch, prefix and the neighbor
    /// that relayed the install, if any.
    statics: Vec<(SwitchId, Prefix, Option<SwitchId>)>,
    reset: BTreeSet<SwitchId>,
    visited: BTreeSet<(SwitchId, Prefix, SwitchId)>,
    disconnected: BTreeSet<SwitchId>,
    used_fault_report: bool,
    used_disconnected: bool,
    /// When the last packet of every flow injected this run has been sent.
    flows_end: SimTime,
}

pub struct Manager<'n> {
    net: &'n mut Network,
    oracle: Arc<ExpectedState>,
    config: ManagerConfig,
    dh: HostId,
    dh_ip: Ipv4Addr,
    next_request: u64,
    replies: BTreeMap<u64, AgentReply>,
    fault_reports: Vec<(SimTime, FaultReport)>,
    checksums: Vec<(SimTime, MirrorRecord)>,
    anomalies: Vec<AnomalyReport>,
    mgmt_override: BTreeMap<SwitchId, Ipv4Addr>,
    evidence: Vec<Evidence>,
    scripts: Vec<ScriptCall>,
    run: u32,
    state: RunState,
}

impl<'n> Manager<'n> {
    pub fn new(net: &'n mut Network, oracle: Arc<ExpectedState>, config: ManagerConfig) -> Self {
        let dh = net.diagnosis_host();
        let dh_ip = net.host(dh).ip;
        net.host_mut(dh).inbox.clear();
        Manager {
            net,
            oracle,
            config,
            dh,
            dh_ip,
            next_request: 0,
            replies: BTreeMap::new(),
            fault_reports: Vec::new(),
            checksums: Vec::new(),
            anomalies: Vec::new(),
            mgmt_override: BTreeMap::new(),
            evidence: Vec::new(),
            scripts: Vec::new(),
            run: 0,
            state: RunState::default(),
        }
    }

    pub fn network(&mut self) -> &mut Network {
        self.net
    }

    /// Anomaly reports received so far.
    pub fn anomalies(&self) -> &[AnomalyReport] {
        &self.anomalies
    }

    pub fn diagnose(&mut self, report: &FailureReport) -> Result<Diagnosis, ManagerError> {
        self.diagnose_with(report, |_, _| {})
    }

    /// Repeats diagnosis runs until two consecutive runs agree. `before_run`
    /// sees the network before every run and may change it.
    pub fn diagnose_with(
        &mut self,
        report: &FailureReport,
        mut before_run: impl FnMut(u32, &mut Network),
    ) -> Result<Diagnosis, ManagerError> {
        let started = self.net.now;
        self.evidence.clear();
        self.scripts.clear();
        self.run = 0;
        let mut runs: Vec<RunRecord> = Vec::new();
        for i in 0..self.config.max_runs {
            if i > 0 {
                self.sleep(self.config.inter_run_delay)?;
            }
            before_run(i + 1, self.net);
            let before = self.evidence.len();
            let finding = self.run_once(report)?;
            runs.push(RunRecord {
                run: self.run,
                finding,
                used_fault_report: self.state.used_fault_report,
                used_disconnected: self.state.used_disconnected,
                primitives: self.evidence.len() - before,
            });
            if let [.., a, b] = runs.as_slice() {
                if a.finding == b.finding && !b.finding.verdict.is_inconclusive() {
                    let last = b.clone();
                    return Ok(Diagnosis {
                        verdict: last.finding.verdict,
                        category: last.finding.category,
                        runs_to_consensus: self.run,
                        primitive_count: self.evidence.len(),
                        used_fault_report: last.used_fault_report,
                        used_disconnected: runs.iter().any(|r| r.used_disconnected),
                        runs,
                        scripts: self.scripts.clone(),
                        evidence: self.evidence.clone(),
                        started,
                        finished: self.net.now,
                    });
                }
            }
        }
        Err(ManagerError::NoConsensus { runs })
    }

    fn run_once(&mut self, report: &FailureReport) -> Result<Finding, ManagerError> {
        self.run += 1;
        self.state = RunState::default();
        self.fault_reports.clear();
        self.checksums.clear();
        let mut outcome = self.diagnose_flow(&report.flow(false));
        if matches!(outcome, Ok(())) {
            outcome = self.diagnose_flow(&report.flow(true));
        }
        let finding = match outcome {
            Ok(()) => Finding::bare(Verdict::NoFaultFound),
            Err(scripts::Stop::Found(f)) => f,
            Err(scripts::Stop::Fail(e)) => {
                self.cleanup()?;
                return Err(e);
            }
        };
        self.cleanup()?;
        Ok(finding)
    }

    /// Undoes everything the run changed on the switches.
    fn cleanup(&mut self) -> Result<(), ManagerError> {
        let statics = std::mem::take(&mut self.state.statics);
        for (s, prefix, via) in statics.into_iter().rev() {
            let remove = AgentCommand::RemoveStaticRoute { prefix };
            match via {
                Some(n) => {
                    let cmd = AgentCommand::Relay {
                        neighbor: s,
                        inner: Box::new(remove),
                    };
                    self.query(Script::Cleanup, n, cmd)?;
                    self.mgmt_override.remove(&s);
                }
                None => {
                    self.query(Script::Cleanup, s, remove)?;
                }
            }
        }
        self.mgmt_override.clear();
        let mut pending = Vec::new();
        for s in std::mem::take(&mut self.state.trace_edges) {
            pending.push(self.send(Script::Cleanup, s, AgentCommand::ClearTraceFilter));
        }
        self.wait_all(pending)?;
        // Traced packets still in flight would trip a freshly reset trigger.
        let quiet = self.state.flows_end + FLOW_DRAIN;
        if self.net.now < quiet {
            self.run_to(quiet)?;
        }
        // Every switch that reported this run, used or not, must be able to
        // report again.
        self.drain_inbox();
        let mut pending = Vec::new();
        let reporters: Vec<SwitchId> = self.fault_reports.iter().map(|(_, r)| r.switch).collect();
        self.state.reset.extend(reporters);
        for s in std::mem::take(&mut self.state.reset) {
            pending.push(self.send(Script::Cleanup, s, AgentCommand::ResetSuppressFlag));
        }
        self.wait_all(pending)?;
        Ok(())
    }

    fn oracle_note(
        &mut self,
        script: Script,
        query: &str,
        target: impl fmt::Display,
        summary: impl Into<String>,
    ) {
        self.evidence.push(Evidence {
            run: self.run,
            script,
            primitive: format!("oracle.{query}"),
            target: target.to_string(),
            summary: summary.into(),
            time: self.net.now,
        });
    }

    fn enter(&mut self, script: Script, target: impl fmt::Display) {
        self.scripts.push(ScriptCall {
            run: self.run,
            script,
            target: target.to_string(),
        });
    }
}
