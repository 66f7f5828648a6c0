//! Management-channel schema. Every MGMT packet body is a 4-byte big-endian
//! length followed by a JSON `MgmtMessage`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controlplane::{BgpMessage, RibEntry, SessionState};
use crate::dataplane::{
    ConsistentReport, Counters, DropCounters, DropReason, FibEntry, HeaderLogs, LoggedHeader,
    MirrorRecord,
};
use crate::netmodel::{
    AclRule, AsNumber, FlowSpec, LinkId, NodeId, Prefix, SessionKind, SimTime, SwitchId,
};
use crate::simkernel::CaptureDirection;

pub const WIRE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentCommand {
    GetCounters,
    GetDropCounters,
    GetFib,
    GetRib,
    GetRibIn,
    /// RIB-out toward one peer, or toward all peers.
    GetRibOut {
        peer: Option<SwitchId>,
    },
    GetAcl,
    GetHeaderLogs,
    GetBgpSessions,
    SetTraceFilter {
        flow: FlowSpec,
    },
    ClearTraceFilter,
    RunLinkMarkerTest {
        link: LinkId,
    },
    /// Conservation check over `window`, or over the last closed window.
    RunSwitchDropTest {
        window: Option<u64>,
    },
    CaptureControlPackets {
        duration_us: u64,
    },
    InjectFlow {
        flow: FlowSpec,
        count: u32,
        interval_us: u64,
        ttl: u8,
        dscp: u8,
    },
    InstallStaticRoute {
        prefix: Prefix,
        next_hop: NodeId,
    },
    RemoveStaticRoute {
        prefix: Prefix,
    },
    ResetSuppressFlag,
    RequestRouteRefresh {
        peer: SwitchId,
    },
    Relay {
        neighbor: SwitchId,
        inner: Box<AgentCommand>,
    },
}

impl AgentCommand {
    pub fn name(&self) -> &'static str {
        match self {
            AgentCommand::GetCounters => "GetCounters",
            AgentCommand::GetDropCounters => "GetDropCounters",
            AgentCommand::GetFib => "GetFib",
            AgentCommand::GetRib => "GetRib",
            AgentCommand::GetRibIn => "GetRibIn",
            AgentCommand::GetRibOut { .. } => "GetRibOut",
            AgentCommand::GetAcl => "GetAcl",
            AgentCommand::GetHeaderLogs => "GetHeaderLogs",
            AgentCommand::GetBgpSessions => "GetBgpSessions",
            AgentCommand::SetTraceFilter { .. } => "SetTraceFilter",
            AgentCommand::ClearTraceFilter => "ClearTraceFilter",
            AgentCommand::RunLinkMarkerTest { .. } => "RunLinkMarkerTest",
            AgentCommand::RunSwitchDropTest { .. } => "RunSwitchDropTest",
            AgentCommand::CaptureControlPackets { .. } => "CaptureControlPackets",
            AgentCommand::InjectFlow { .. } => "InjectFlow",
            AgentCommand::InstallStaticRoute { .. } => "InstallStaticRoute",
            AgentCommand::RemoveStaticRoute { .. } => "RemoveStaticRoute",
            AgentCommand::ResetSuppressFlag => "ResetSuppressFlag",
            AgentCommand::RequestRouteRefresh { .. } => "RequestRouteRefresh",
            AgentCommand::Relay { .. } => "Relay",
        }
    }

    /// Commands answered by the routing daemon rather than the data plane.
    pub fn needs_routing_daemon(&self) -> bool {
        matches!(
            self,
            AgentCommand::GetRib
                | AgentCommand::GetRibIn
                | AgentCommand::GetRibOut { .. }
                | AgentCommand::GetBgpSessions
                | AgentCommand::RequestRouteRefresh { .. }
        )
    }

    /// Commands that only read switch state.
    pub fn is_read(&self) -> bool {
        matches!(
            self,
            AgentCommand::GetCounters
                | AgentCommand::GetDropCounters
                | AgentCommand::GetFib
                | AgentCommand::GetRib
                | AgentCommand::GetRibIn
                | AgentCommand::GetRibOut { .. }
                | AgentCommand::GetAcl
                | AgentCommand::GetHeaderLogs
                | AgentCommand::GetBgpSessions
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandEnvelope {
    pub request_id: u64,
    pub command: AgentCommand,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub peer: SwitchId,
    pub kind: SessionKind,
    pub state: SessionState,
    pub local_iface: u8,
    pub last_keepalive_rx: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RibOutEntry {
    pub prefix: Prefix,
    pub as_path: Vec<AsNumber>,
    pub local_pref_hint: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerResult {
    pub link: LinkId,
    pub iface: u8,
    /// Traced packets sent by this switch between the two markers.
    pub egress_delta: u64,
    /// Traced packets the neighbor received between the two markers.
    pub ingress_delta: u64,
}

impl MarkerResult {
    pub fn lost(&self) -> i64 {
        self.egress_delta as i64 - self.ingress_delta as i64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropTestResult {
    pub report: ConsistentReport,
    /// Deliberate drops in the window by reason and ingress interface.
    pub drops: BTreeMap<DropReason, BTreeMap<u8, u64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapturedMessage {
    pub time: SimTime,
    pub direction: CaptureDirection,
    pub peer: SwitchId,
    pub msg: BgpMessage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReplyPayload {
    Ack,
    Counters(Counters),
    DropCounters(BTreeMap<u8, DropCounters>),
    Fib(Vec<FibEntry>),
    Rib(Vec<RibEntry>),
    RibIn(BTreeMap<SwitchId, Vec<RibEntry>>),
    RibOut(BTreeMap<SwitchId, Vec<RibOutEntry>>),
    Acl(Vec<AclRule>),
    HeaderLogs(HeaderLogs),
    Sessions(Vec<SessionSummary>),
    Marker(MarkerResult),
    DropTest(DropTestResult),
    Capture(Vec<CapturedMessage>),
    FlowStarted { flow_id: u64, count: u32 },
    Relayed(Box<AgentReply>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentReply {
    pub request_id: u64,
    pub switch: SwitchId,
    pub result: Result<ReplyPayload, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultReport {
    pub switch: SwitchId,
    pub time: SimTime,
    pub ingress_iface: u8,
    pub reason: DropReason,
    pub window: u64,
    pub arrived: u64,
    pub dropped: u64,
    pub sample: LoggedHeader,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AnomalyKind {
    RibChurn,
    SessionFlap,
    FibResource,
    RibResource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub switch: SwitchId,
    pub time: SimTime,
    pub kind: AnomalyKind,
    pub value: u64,
    pub limit: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MgmtBody {
    Command(CommandEnvelope),
    Reply(AgentReply),
    FaultReport(FaultReport),
    Checksum(MirrorRecord),
    Anomaly(AnomalyReport),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MgmtMessage {
    pub version: u32,
    pub body: MgmtBody,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("frame shorter than its length prefix")]
    Truncated,
    #[error("unsupported schema version {0}")]
    Version(u32),
    #[error("malformed message: {0}")]
    Json(String),
}

pub fn encode(body: MgmtBody) -> Vec<u8> {
    let msg = MgmtMessage {
        version: WIRE_VERSION,
        body,
    };
    let json = serde_json::to_vec(&msg).expect("management messages serialize");
    let mut out = Vec::with_capacity(json.len() + 4);
    out.extend_from_slice(&(json.len() as u32).to_be_bytes());
    out.extend_from_slice(&json);
    out
}

pub fn decode(frame: &[u8]) -> Result<MgmtBody, WireError> {
    let len = frame
        .get(..4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize)
        .ok_or(WireError::Truncated)?;
    let json = frame.get(4..4 + len).ok_or(WireError::Truncated)?;
    let msg: MgmtMessage =
        serde_json::from_slice(json).map_err(|e| WireError::Json(e.to_string()))?;
    if msg.version != WIRE_VERSION {
        return Err(WireError::Version(msg.version));
    }
    Ok(msg.body)
}
