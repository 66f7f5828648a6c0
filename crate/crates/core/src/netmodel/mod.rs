//! Core domain types shared by every other module: identifiers, prefixes,
//! packets, flow patterns, configuration and the validated network model.

mod format;
pub mod generate;

use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controlplane::BgpMessage;

pub use format::{load_topology, serialize_topology};

/// Interface index reserved for the switch CPU port.
pub const CPU_PORT: u8 = 0;
/// DSCP code point that requests mirroring to the switch agent.
pub const MIRROR_DSCP: u8 = 0x14;

macro_rules! id_type {
    ($name:ident, $prefix:literal) => {
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(into = "String", try_from = "String")]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                s.strip_prefix($prefix)
                    .and_then(|n| n.parse().ok())
                    .map($name)
                    .ok_or_else(|| format!("expected {}<n>, got '{}'", $prefix, s))
            }
        }

        impl From<$name> for String {
            fn from(v: $name) -> String {
                v.to_string()
            }
        }

        impl TryFrom<String> for $name {
            type Error = String;
            fn try_from(s: String) -> Result<Self, Self::Error> {
                s.parse()
            }
        }
    };
}

id_type!(SwitchId, "S");
id_type!(HostId, "H");
id_type!(LinkId, "L");

pub type AsNumber = u32;

/// Simulated time in microseconds.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    pub fn as_micros(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl std::ops::Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}s", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeId {
    Switch(SwitchId),
    Host(HostId),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Switch(s) => s.fmt(f),
            NodeId::Host(h) => h.fmt(f),
        }
    }
}

impl FromStr for NodeId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.starts_with('S') {
            s.parse().map(NodeId::Switch)
        } else {
            s.parse().map(NodeId::Host)
        }
    }
}

/// An IPv4 prefix, always stored with host bits cleared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Prefix {
    addr: u32,
    len: u8,
}

impl Prefix {
    pub fn new(addr: Ipv4Addr, len: u8) -> Self {
        assert!(len <= 32, "prefix length {len} out of range");
        let addr = u32::from(addr) & Self::mask_for(len);
        Prefix { addr, len }
    }

    pub fn host(addr: Ipv4Addr) -> Self {
        Prefix::new(addr, 32)
    }

    fn mask_for(len: u8) -> u32 {
        if len == 0 {
            0
        } else {
            u32::MAX << (32 - len)
        }
    }

    pub fn addr(&self) -> Ipv4Addr {
        Ipv4Addr::from(self.addr)
    }

    pub fn bits(&self) -> u32 {
        self.addr
    }

    /// Mask length in bits; a prefix has no notion of emptiness.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> u8 {
        self.len
    }

    pub fn mask(&self) -> u32 {
        Self::mask_for(self.len)
    }

    pub fn contains(&self, ip: Ipv4Addr) -> bool {
        u32::from(ip) & self.mask() == self.addr
    }

    /// True if every address of `other` is inside `self`.
    pub fn covers(&self, other: &Prefix) -> bool {
        other.len >= self.len && other.addr & self.mask() == self.addr
    }

    /// The sibling prefix: same length, lowest network bit flipped.
    pub fn sibling(&self) -> Prefix {
        if self.len == 0 {
            return *self;
        }
        Prefix {
            addr: self.addr ^ (1u32 << (32 - self.len)),
            len: self.len,
        }
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr(), self.len)
    }
}

impl FromStr for Prefix {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, l) = s
            .split_once('/')
            .ok_or_else(|| format!("prefix '{s}' lacks '/len'"))?;
        let addr: Ipv4Addr = a.parse().map_err(|e| format!("prefix '{s}': {e}"))?;
        let len: u8 = l.parse().map_err(|e| format!("prefix '{s}': {e}"))?;
        if len > 32 {
            return Err(format!("prefix '{s}': length > 32"));
        }
        Ok(Prefix::new(addr, len))
    }
}

impl From<Prefix> for String {
    fn from(p: Prefix) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for Prefix {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Protocol {
    Icmp,
    Tcp,
    Udp,
    Bgp,
    Mgmt,
    Marker,
}

impl Protocol {
    /// IPv4 protocol number carried on the wire.
    pub fn number(self) -> u8 {
        match self {
            Protocol::Icmp => 1,
            Protocol::Tcp | Protocol::Bgp => 6,
            Protocol::Udp => 17,
            Protocol::Mgmt => 253,
            Protocol::Marker => 254,
        }
    }

    /// Host data traffic, as opposed to control, management and marker packets.
    pub fn is_data(self) -> bool {
        matches!(self, Protocol::Icmp | Protocol::Tcp | Protocol::Udp)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Protocol::Icmp => "icmp",
            Protocol::Tcp => "tcp",
            Protocol::Udp => "udp",
            Protocol::Bgp => "bgp",
            Protocol::Mgmt => "mgmt",
            Protocol::Marker => "marker",
        };
        f.write_str(s)
    }
}

impl FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "icmp" => Protocol::Icmp,
            "tcp" => Protocol::Tcp,
            "udp" => Protocol::Udp,
            "bgp" => Protocol::Bgp,
            "mgmt" => Protocol::Mgmt,
            "marker" => Protocol::Marker,
            other => return Err(format!("unknown protocol '{other}'")),
        })
    }
}

/// Marker packet contents used by the link silent-drop detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerBody {
    pub request_id: u64,
    pub seq: u8,
    pub origin: SwitchId,
    pub origin_iface: u8,
    pub egress_count: u64,
    pub ingress_count: Option<u64>,
}

/// Structured stand-in for payload bytes. The payload digest is what the
/// integrity checks look at; the body only carries simulation semantics.
#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Empty,
    Echo { reply: bool, seq: u64 },
    Bgp(Arc<BgpMessage>),
    Mgmt(Arc<[u8]>),
    Marker(MarkerBody),
}

/// Simulated IPv4 frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub src_mac: u64,
    pub dst_mac: u64,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub ttl: u8,
    pub dscp: u8,
    /// Reserved IPv4 flag bit used as the trace bit.
    pub trace: bool,
    pub ident: u16,
    pub header_checksum: u16,
    pub protocol: Protocol,
    pub src_port: u16,
    pub dst_port: u16,
    pub payload_len: u16,
    pub payload_digest: u64,
    /// End-to-end transport check written by the sender over the payload digest.
    pub payload_check: u64,
    /// Switch-local metadata, set on switch entry.
    pub ingress_ts: Option<SimTime>,
    pub ingress_port: u8,
    /// Payload digest and integrity as seen on switch entry.
    pub ingress_digest: u64,
    pub ingress_intact: bool,
    pub body: Body,
}

/// Transport-level check a host writes over its payload digest.
pub fn payload_check_for(digest: u64) -> u64 {
    digest.rotate_left(17) ^ 0x5bd1_e995_7f4a_7c15
}

impl Packet {
    pub fn new(src_ip: Ipv4Addr, dst_ip: Ipv4Addr, protocol: Protocol) -> Self {
        let mut p = Packet {
            src_mac: 0,
            dst_mac: 0,
            src_ip,
            dst_ip,
            ttl: 64,
            dscp: 0,
            trace: false,
            ident: 0,
            header_checksum: 0,
            protocol,
            src_port: 0,
            dst_port: 0,
            payload_len: 64,
            payload_digest: 0,
            payload_check: payload_check_for(0),
            ingress_ts: None,
            ingress_port: 0,
            ingress_digest: 0,
            ingress_intact: true,
            body: Body::Empty,
        };
        p.refresh_checksum();
        p
    }

    pub fn with_ports(mut self, src: u16, dst: u16) -> Self {
        self.src_port = src;
        self.dst_port = dst;
        self
    }

    pub fn with_ttl(mut self, ttl: u8) -> Self {
        self.ttl = ttl;
        self.refresh_checksum();
        self
    }

    pub fn with_ident(mut self, ident: u16) -> Self {
        self.ident = ident;
        self.refresh_checksum();
        self
    }

    pub fn with_dscp(mut self, dscp: u8) -> Self {
        self.dscp = dscp & 0x3f;
        self.refresh_checksum();
        self
    }

    pub fn with_payload(mut self, digest: u64) -> Self {
        self.payload_digest = digest;
        self.payload_check = payload_check_for(digest);
        self
    }

    pub fn with_body(mut self, body: Body) -> Self {
        self.body = body;
        self
    }

    pub fn payload_intact(&self) -> bool {
        self.payload_check == payload_check_for(self.payload_digest)
    }

    pub fn header_fields(&self) -> crate::dataplane::HeaderFields {
        crate::dataplane::HeaderFields::from_packet(self)
    }

    pub fn refresh_checksum(&mut self) {
        self.header_checksum = 0;
        self.header_checksum = crate::dataplane::ipv4_header_checksum(&self.header_fields());
    }

    pub fn checksum_ok(&self) -> bool {
        crate::dataplane::verify_header(&self.header_fields()) == 0
    }
}

/// Five-tuple pattern; `None` fields are wildcards.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlowSpec {
    pub src: Option<Prefix>,
    pub dst: Option<Prefix>,
    pub protocol: Option<Protocol>,
    pub src_port: Option<u16>,
    pub dst_port: Option<u16>,
}

impl FlowSpec {
    pub fn any() -> Self {
        FlowSpec::default()
    }

    pub fn between(src: Ipv4Addr, dst: Ipv4Addr) -> Self {
        FlowSpec {
            src: Some(Prefix::host(src)),
            dst: Some(Prefix::host(dst)),
            ..FlowSpec::default()
        }
    }

    pub fn to_dst(dst: Prefix) -> Self {
        FlowSpec {
            dst: Some(dst),
            ..FlowSpec::default()
        }
    }

    pub fn matches(&self, pkt: &Packet) -> bool {
        self.src.is_none_or(|p| p.contains(pkt.src_ip))
            && self.dst.is_none_or(|p| p.contains(pkt.dst_ip))
            && self.protocol.is_none_or(|p| p == pkt.protocol)
            && self.src_port.is_none_or(|p| p == pkt.src_port)
            && self.dst_port.is_none_or(|p| p == pkt.dst_port)
    }

    /// A concrete representative packet header for this pattern, or `None`
    /// when the pattern names no concrete source and destination.
    pub fn representative(&self) -> Option<Packet> {
        let src = self.src?.addr();
        let dst = self.dst?.addr();
        let proto = self.protocol.unwrap_or(Protocol::Udp);
        Some(Packet::new(src, dst, proto).with_ports(
            self.src_port.unwrap_or(40_000),
            self.dst_port.unwrap_or(33_434),
        ))
    }
}

fn fmt_opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref()
        .map_or_else(|| "any".to_string(), |x| x.to_string())
}

fn parse_opt<T: FromStr>(s: &str) -> Result<Option<T>, String>
where
    T::Err: fmt::Display,
{
    if s == "any" {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|e| format!("'{s}': {e}"))
    }
}

impl fmt::Display for FlowSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "src={} dst={} proto={} sport={} dport={}",
            fmt_opt(&self.src),
            fmt_opt(&self.dst),
            fmt_opt(&self.protocol),
            fmt_opt(&self.src_port),
            fmt_opt(&self.dst_port)
        )
    }
}

impl FromStr for FlowSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut spec = FlowSpec::default();
        for tok in s.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| format!("flow field '{tok}' is not key=value"))?;
            match k {
                "src" => spec.src = parse_opt(v)?,
                "dst" => spec.dst = parse_opt(v)?,
                "proto" => spec.protocol = parse_opt(v)?,
                "sport" => spec.src_port = parse_opt(v)?,
                "dport" => spec.dst_port = parse_opt(v)?,
                other => return Err(format!("unknown flow field '{other}'")),
            }
        }
        Ok(spec)
    }
}

/// Free-function form of [`FlowSpec::matches`].
pub fn flow_matches(spec: &FlowSpec, pkt: &Packet) -> bool {
    spec.matches(pkt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AclAction {
    Permit,
    Deny,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AclRule {
    pub pattern: FlowSpec,
    pub action: AclAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyAction {
    Accept,
    Reject,
    SetLocalPref(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PolicyClause {
    /// Matches routes whose prefix lies inside this prefix.
    pub prefix: Option<Prefix>,
    /// Matches routes whose AS path contains this AS.
    pub asn: Option<AsNumber>,
    pub action: PolicyAction,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AdvertiseScope {
    #[default]
    All,
    /// Only routes originated inside the advertiser's own AS.
    OwnAsOnly,
}

/// Ordered first-match route filter; routes matching no clause are accepted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FilterPolicy {
    pub clauses: Vec<PolicyClause>,
    pub scope: AdvertiseScope,
}

impl FilterPolicy {
    pub fn evaluate(&self, prefix: &Prefix, as_path: &[AsNumber]) -> PolicyAction {
        self.clauses
            .iter()
            .find(|c| {
                c.prefix.is_none_or(|p| p.covers(prefix))
                    && c.asn.is_none_or(|a| as_path.contains(&a))
            })
            .map_or(PolicyAction::Accept, |c| c.action)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SessionKind {
    Ebgp,
    Ibgp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Endpoint {
    pub node: NodeId,
    pub iface: u8,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.node, self.iface)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub a: Endpoint,
    pub b: Endpoint,
}

impl Link {
    pub fn other(&self, node: NodeId) -> Option<Endpoint> {
        if self.a.node == node {
            Some(self.b)
        } else if self.b.node == node {
            Some(self.a)
        } else {
            None
        }
    }

    pub fn endpoint_of(&self, node: NodeId) -> Option<Endpoint> {
        if self.a.node == node {
            Some(self.a)
        } else if self.b.node == node {
            Some(self.b)
        } else {
            None
        }
    }

    pub fn is_switch_link(&self) -> bool {
        matches!(
            (self.a.node, self.b.node),
            (NodeId::Switch(_), NodeId::Switch(_))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SwitchDecl {
    pub id: SwitchId,
    pub asn: AsNumber,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HostDecl {
    pub id: HostId,
    pub switch: SwitchId,
    pub iface: u8,
    pub ip: Ipv4Addr,
    pub prefix_len: u8,
    pub diagnosis: bool,
}

impl HostDecl {
    pub fn subnet(&self) -> Prefix {
        Prefix::new(self.ip, self.prefix_len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PolicyDirection {
    In,
    Out,
}

/// One policy line as declared in the topology document.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyDecl {
    Clause {
        switch: SwitchId,
        peer: SwitchId,
        direction: PolicyDirection,
        clause: PolicyClause,
    },
    Scope {
        switch: SwitchId,
        peer: SwitchId,
        scope: AdvertiseScope,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StaticRoute {
    pub prefix: Prefix,
    pub iface: u8,
}

/// The declared network: everything the topology document states.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Topology {
    pub switches: Vec<SwitchDecl>,
    pub hosts: Vec<HostDecl>,
    pub links: Vec<Link>,
    /// Declared eBGP sessions; iBGP sessions are synthesized per AS.
    pub ebgp: Vec<(SwitchId, SwitchId)>,
    pub policies: Vec<PolicyDecl>,
    pub acl: Vec<(SwitchId, AclRule)>,
    pub originate: Vec<(SwitchId, Prefix)>,
    pub statics: Vec<(SwitchId, StaticRoute)>,
}

impl Topology {
    pub fn asn(&self, s: SwitchId) -> AsNumber {
        self.switches[s.index()].asn
    }

    pub fn switch_ids(&self) -> impl Iterator<Item = SwitchId> + '_ {
        self.switches.iter().map(|s| s.id)
    }

    pub fn diagnosis_host(&self) -> &HostDecl {
        self.hosts
            .iter()
            .find(|h| h.diagnosis)
            .expect("validated topology has a diagnosis host")
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.index()]
    }

    pub fn link_between(&self, a: SwitchId, b: SwitchId) -> Option<&Link> {
        let (na, nb) = (NodeId::Switch(a), NodeId::Switch(b));
        self.links
            .iter()
            .find(|l| (l.a.node == na && l.b.node == nb) || (l.a.node == nb && l.b.node == na))
    }

    pub fn switch_neighbors(&self, s: SwitchId) -> Vec<SwitchId> {
        let node = NodeId::Switch(s);
        let mut out: Vec<SwitchId> = self
            .links
            .iter()
            .filter_map(|l| match l.other(node)?.node {
                NodeId::Switch(o) => Some(o),
                NodeId::Host(_) => None,
            })
            .collect();
        out.sort();
        out
    }

    pub fn host_by_ip(&self, ip: Ipv4Addr) -> Option<&HostDecl> {
        self.hosts.iter().find(|h| h.ip == ip)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interface {
    pub index: u8,
    pub ip: Ipv4Addr,
    pub prefix_len: u8,
    pub mac: u64,
    pub link: LinkId,
    pub peer: Endpoint,
    pub peer_ip: Ipv4Addr,
    pub peer_mac: u64,
}

impl Interface {
    pub fn subnet(&self) -> Prefix {
        Prefix::new(self.ip, self.prefix_len)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BgpSessionConfig {
    pub peer: SwitchId,
    pub local_iface: u8,
    pub kind: SessionKind,
    pub policy_in: FilterPolicy,
    pub policy_out: FilterPolicy,
}

/// Per-switch configuration derived from the topology document.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SwitchConfig {
    pub id: SwitchId,
    pub asn: AsNumber,
    /// Primary management address.
    pub loopback: Ipv4Addr,
    /// Secondary management address, unrouted until static routes point at it.
    pub secondary: Ipv4Addr,
    pub interfaces: Vec<Interface>,
    pub bgp_sessions: Vec<BgpSessionConfig>,
    pub originated: Vec<Prefix>,
    pub acl: Vec<AclRule>,
    pub static_routes: Vec<StaticRoute>,
}

impl SwitchConfig {
    pub fn interface(&self, index: u8) -> Option<&Interface> {
        self.interfaces.iter().find(|i| i.index == index)
    }

    pub fn interface_to(&self, peer: NodeId) -> Option<&Interface> {
        self.interfaces.iter().find(|i| i.peer.node == peer)
    }

    pub fn session(&self, peer: SwitchId) -> Option<&BgpSessionConfig> {
        self.bgp_sessions.iter().find(|s| s.peer == peer)
    }

    pub fn owns(&self, ip: Ipv4Addr) -> bool {
        ip == self.loopback || self.interfaces.iter().any(|i| i.ip == ip)
    }
}

/// Validated topology plus derived per-switch configuration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkModel {
    pub topology: Topology,
    pub configs: BTreeMap<SwitchId, SwitchConfig>,
    /// Secondary address of the diagnosis host.
    pub diag_secondary: Ipv4Addr,
}

impl NetworkModel {
    pub fn config(&self, s: SwitchId) -> &SwitchConfig {
        &self.configs[&s]
    }

    pub fn switch_count(&self) -> usize {
        self.topology.switches.len()
    }

    /// Fingerprint over the topology and every switch configuration.
    pub fn fingerprint(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.hash(&mut h);
        h.finish()
    }

    pub fn switch_by_loopback(&self, ip: Ipv4Addr) -> Option<SwitchId> {
        self.configs
            .values()
            .find(|c| c.loopback == ip || c.secondary == ip)
            .map(|c| c.id)
    }

    pub fn owner_of(&self, ip: Ipv4Addr) -> Option<NodeId> {
        if let Some(h) = self.topology.host_by_ip(ip) {
            return Some(NodeId::Host(h.id));
        }
        if ip == self.diag_secondary {
            return Some(NodeId::Host(self.topology.diagnosis_host().id));
        }
        self.configs
            .values()
            .find(|c| c.owns(ip) || c.secondary == ip)
            .map(|c| NodeId::Switch(c.id))
    }

    pub fn host(&self, h: HostId) -> &HostDecl {
        &self.topology.hosts[h.index()]
    }
}

/// Addressing plan used when deriving interface and management addresses.
pub mod addressing {
    use super::*;

    pub fn loopback(s: SwitchId) -> Ipv4Addr {
        Ipv4Addr::new(10, 255, (s.0 >> 8) as u8, (s.0 & 0xff) as u8)
    }

    pub fn secondary(s: SwitchId) -> Ipv4Addr {
        Ipv4Addr::new(10, 254, (s.0 >> 8) as u8, (s.0 & 0xff) as u8)
    }

    pub fn diag_secondary() -> Ipv4Addr {
        Ipv4Addr::new(10, 253, 0, 1)
    }

    /// The /30 numbered from the link's position; endpoint a gets .1, b gets .2.
    pub fn link_addrs(link: LinkId) -> (Ipv4Addr, Ipv4Addr) {
        let base = u32::from(Ipv4Addr::new(10, 128, 0, 0)) + 4 * link.0;
        (Ipv4Addr::from(base + 1), Ipv4Addr::from(base + 2))
    }

    pub fn switch_mac(s: SwitchId, iface: u8) -> u64 {
        0x0200_0000_0000 | (u64::from(s.0) << 8) | u64::from(iface)
    }

    pub fn host_mac(h: HostId) -> u64 {
        0x0201_0000_0000 | u64::from(h.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid topology: {0}")]
    Invalid(String),
}
