//! Fault injector. Each fault arms a hook in the simulator or edits switch
//! state, and every injection can be reverted.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{FlowSpec, LinkId, NodeId, Prefix, SwitchId};
use crate::simkernel::{mix64, Network, StochasticHook};

pub const DEFAULT_PROBABILITY: f64 = 0.3;
pub const DEFAULT_TTL_DELTA: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FaultType {
    SilentDropInSwitch,
    SilentDropOnLink,
    CorruptionOnLinkIP,
    IncorrectDecrementTTL,
    PacketPayloadCorruptionInSwitch,
    IncorrectForwardingDrop,
    FIBDiscrepancy,
    IngressBgpUpdateModification,
    BgpNeighborMissing,
    EgressBgpUpdateModification,
    /// Routing daemon dead: no BGP in or out, routing tables unreadable.
    RoutingDaemonCrash,
    LinkDown,
    AgentCrash,
    /// Every link down, agent and daemon dead.
    SwitchCrash,
}

/// Rows of the switch fault model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FaultCategory {
    PacketForwarding,
    PacketTransformation,
    DataPlaneTableGeneration,
    RouteTableGeneration,
    RouteAdvertisementGeneration,
    RouteAdvertisementReception,
    ExternalInteraction,
}

impl FaultCategory {
    pub const ALL: [FaultCategory; 7] = [
        FaultCategory::PacketForwarding,
        FaultCategory::PacketTransformation,
        FaultCategory::DataPlaneTableGeneration,
        FaultCategory::RouteTableGeneration,
        FaultCategory::RouteAdvertisementGeneration,
        FaultCategory::RouteAdvertisementReception,
        FaultCategory::ExternalInteraction,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocationKind {
    Switch,
    Link,
    Session,
}

impl FaultType {
    /// The ten campaign fault types.
    pub const CAMPAIGN: [FaultType; 10] = [
        FaultType::SilentDropInSwitch,
        FaultType::SilentDropOnLink,
        FaultType::CorruptionOnLinkIP,
        FaultType::IncorrectDecrementTTL,
        FaultType::PacketPayloadCorruptionInSwitch,
        FaultType::IncorrectForwardingDrop,
        FaultType::FIBDiscrepancy,
        FaultType::IngressBgpUpdateModification,
        FaultType::BgpNeighborMissing,
        FaultType::EgressBgpUpdateModification,
    ];

    pub fn location_kind(self) -> LocationKind {
        use FaultType::*;
        match self {
            SilentDropOnLink | CorruptionOnLinkIP | LinkDown => LocationKind::Link,
            IngressBgpUpdateModification | EgressBgpUpdateModification | BgpNeighborMissing => {
                LocationKind::Session
            }
            _ => LocationKind::Switch,
        }
    }

    /// Fault-model rows this type realizes.
    pub fn categories(self) -> &'static [FaultCategory] {
        use FaultCategory as C;
        use FaultType::*;
        match self {
            SilentDropInSwitch | SilentDropOnLink | IncorrectForwardingDrop | LinkDown => {
                &[C::PacketForwarding]
            }
            CorruptionOnLinkIP | IncorrectDecrementTTL | PacketPayloadCorruptionInSwitch => {
                &[C::PacketTransformation]
            }
            FIBDiscrepancy => &[C::DataPlaneTableGeneration],
            IngressBgpUpdateModification => {
                &[C::RouteTableGeneration, C::RouteAdvertisementReception]
            }
            EgressBgpUpdateModification => &[C::RouteAdvertisementGeneration],
            BgpNeighborMissing | RoutingDaemonCrash | AgentCrash | SwitchCrash => {
                &[C::ExternalInteraction]
            }
        }
    }

    /// Whether the fault drops or mangles packets at random.
    pub fn is_stochastic(self) -> bool {
        use FaultType::*;
        matches!(
            self,
            SilentDropInSwitch
                | SilentDropOnLink
                | CorruptionOnLinkIP
                | PacketPayloadCorruptionInSwitch
        )
    }

    pub fn needs_prefix(self) -> bool {
        use FaultType::*;
        matches!(
            self,
            FIBDiscrepancy | IngressBgpUpdateModification | EgressBgpUpdateModification
        )
    }
}

impl fmt::Display for FaultType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for FaultType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| format!("unknown fault type '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FaultLocation {
    Switch(SwitchId),
    Link(LinkId),
    /// The faulty switch and the session peer it misbehaves toward.
    Session {
        switch: SwitchId,
        peer: SwitchId,
    },
}

impl FaultLocation {
    pub fn kind(&self) -> LocationKind {
        match self {
            FaultLocation::Switch(_) => LocationKind::Switch,
            FaultLocation::Link(_) => LocationKind::Link,
            FaultLocation::Session { .. } => LocationKind::Session,
        }
    }

    /// The element a correct diagnosis must name.
    pub fn culprit(&self) -> Culprit {
        match *self {
            FaultLocation::Switch(s) | FaultLocation::Session { switch: s, .. } => {
                Culprit::Switch(s)
            }
            FaultLocation::Link(l) => Culprit::Link(l),
        }
    }
}

impl fmt::Display for FaultLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultLocation::Switch(s) => write!(f, "{s}"),
            FaultLocation::Link(l) => write!(f, "{l}"),
            FaultLocation::Session { switch, peer } => write!(f, "{switch}>{peer}"),
        }
    }
}

impl FromStr for FaultLocation {
    type Err = String;
    /// `S7`, `L3`, or `S10>S17` for a session.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some((a, b)) = s.split_once('>') {
            return Ok(FaultLocation::Session {
                switch: a.parse()?,
                peer: b.parse()?,
            });
        }
        if s.starts_with('L') {
            return s.parse().map(FaultLocation::Link);
        }
        s.parse().map(FaultLocation::Switch)
    }
}

/// A switch or link named as faulty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Culprit {
    Switch(SwitchId),
    Link(LinkId),
}

impl fmt::Display for Culprit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Culprit::Switch(s) => write!(f, "{s}"),
            Culprit::Link(l) => write!(f, "{l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultParams {
    pub probability: f64,
    /// Packets the fault applies to; all data packets when absent.
    pub selector: Option<FlowSpec>,
    pub prefix: Option<Prefix>,
    pub ttl_delta: u8,
}

impl Default for FaultParams {
    fn default() -> Self {
        FaultParams {
            probability: DEFAULT_PROBABILITY,
            selector: None,
            prefix: None,
            ttl_delta: DEFAULT_TTL_DELTA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    #[serde(rename = "type")]
    pub kind: FaultType,
    pub location: FaultLocation,
    #[serde(default)]
    pub params: FaultParams,
    /// Random stream of stochastic hooks, combined with the simulation seed.
    #[serde(default)]
    pub seed_stream: u64,
}

impl FaultSpec {
    pub fn new(kind: FaultType, location: FaultLocation) -> Self {
        FaultSpec {
            kind,
            location,
            params: FaultParams::default(),
            seed_stream: 0,
        }
    }

    pub fn with_prefix(mut self, p: Prefix) -> Self {
        self.params.prefix = Some(p);
        self
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.seed_stream = stream;
        self
    }

    /// Switches and links the fault touches; two faults conflict when
    /// these overlap.
    pub fn footprint(&self, net: &Network) -> Vec<Culprit> {
        let mut out = vec![self.location.culprit()];
        if let (FaultType::SwitchCrash, FaultLocation::Switch(s)) = (self.kind, self.location) {
            out.extend(switch_links(net, s).into_iter().map(Culprit::Link));
        }
        out
    }

    fn selector(&self) -> Option<FlowSpec> {
        self.params
            .selector
            .clone()
            .or_else(|| self.params.prefix.map(FlowSpec::to_dst))
    }
}

impl fmt::Display for FaultSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}", self.kind, self.location)?;
        if let Some(p) = self.params.prefix {
            write!(f, " prefix {p}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FaultHandle(pub u64);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FaultError {
    #[error("invalid location for {kind}: {msg}")]
    InvalidLocation { kind: FaultType, msg: String },
    #[error("{kind} needs a {param}")]
    MissingParam {
        kind: FaultType,
        param: &'static str,
    },
    #[error("conflicts with active fault {0:?}")]
    Conflict(FaultHandle),
    #[error("unknown or already reverted fault handle {0:?}")]
    UnknownHandle(FaultHandle),
}

fn switch_links(net: &Network, s: SwitchId) -> Vec<LinkId> {
    net.model
        .topology
        .links
        .iter()
        .filter(|l| l.is_switch_link() && l.endpoint_of(NodeId::Switch(s)).is_some())
        .map(|l| l.id)
        .collect()
}

/// Active faults of one network, keyed by handle.
#[derive(Debug, Clone, Default)]
pub struct FaultInjector {
    next: u64,
    active: BTreeMap<FaultHandle, FaultSpec>,
}

impl FaultInjector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn active(&self) -> impl Iterator<Item = (FaultHandle, &FaultSpec)> {
        self.active.iter().map(|(h, s)| (*h, s))
    }

    pub fn get(&self, h: FaultHandle) -> Option<&FaultSpec> {
        self.active.get(&h)
    }

    /// Checks the spec against the network without changing anything.
    pub fn validate(&self, net: &Network, spec: &FaultSpec) -> Result<(), FaultError> {
        let kind = spec.kind;
        let bad = |msg: String| FaultError::InvalidLocation { kind, msg };
        if spec.location.kind() != kind.location_kind() {
            return Err(bad(format!(
                "{} expects a {:?} location",
                spec.location,
                kind.location_kind()
            )));
        }
        let n_switches = net.switches.len();
        match spec.location {
            FaultLocation::Switch(s) if s.index() >= n_switches => {
                return Err(bad(format!("no switch {s}")))
            }
            FaultLocation::Link(l) => match net.model.topology.links.get(l.index()) {
                None => return Err(bad(format!("no link {l}"))),
                Some(link) if !link.is_switch_link() => {
                    return Err(bad(format!("{l} is a host link")))
                }
                _ => {}
            },
            FaultLocation::Session { switch, peer }
                if (switch.index() >= n_switches
                    || !net.switch(switch).bgp.sessions.contains_key(&peer))
                => {
                    return Err(bad(format!("no session {switch}>{peer}")));
                }
            _ => {}
        }
        if kind.needs_prefix() && spec.params.prefix.is_none() {
            return Err(FaultError::MissingParam {
                kind,
                param: "prefix",
            });
        }
        if kind == FaultType::IncorrectForwardingDrop && spec.selector().is_none() {
            return Err(FaultError::MissingParam {
                kind,
                param: "selector or prefix",
            });
        }
        if kind.is_stochastic() && !(0.0..=1.0).contains(&spec.params.probability) {
            return Err(FaultError::MissingParam {
                kind,
                param: "probability in [0, 1]",
            });
        }
        let mine = spec.footprint(net);
        for (h, other) in &self.active {
            if other.footprint(net).iter().any(|c| mine.contains(c)) {
                return Err(FaultError::Conflict(*h));
            }
        }
        Ok(())
    }

    /// Arms the fault. Call between simulation steps.
    pub fn inject(
        &mut self,
        net: &mut Network,
        spec: FaultSpec,
    ) -> Result<FaultHandle, FaultError> {
        self.validate(net, &spec)?;
        apply(net, &spec, true);
        let h = FaultHandle(self.next);
        self.next += 1;
        self.active.insert(h, spec);
        Ok(h)
    }

    /// Disarms the fault and restores any edited state. Sessions and routes
    /// reconverge as the simulation continues.
    pub fn revert(&mut self, net: &mut Network, h: FaultHandle) -> Result<FaultSpec, FaultError> {
        let spec = self.active.remove(&h).ok_or(FaultError::UnknownHandle(h))?;
        apply(net, &spec, false);
        Ok(spec)
    }

    pub fn revert_all(&mut self, net: &mut Network) {
        let handles: Vec<FaultHandle> = self.active.keys().copied().collect();
        for h in handles {
            let _ = self.revert(net, h);
        }
    }
}

fn hook(net: &Network, spec: &FaultSpec) -> StochasticHook {
    StochasticHook::new(
        spec.params.probability,
        spec.params.selector.clone(),
        net.config.seed,
        mix64(spec.seed_stream ^ 0x5eed_f417),
    )
}

/// Drops what each side learned from the other and re-advertises, so a
/// newly armed or disarmed update mangler sees every route again.
fn soft_reset(net: &mut Network, a: SwitchId, b: SwitchId) {
    for (x, y) in [(a, b), (b, a)] {
        let fx = net.switches[x.index()].bgp.soft_reset(y);
        net.apply_bgp_effects(x, fx);
    }
}

fn apply(net: &mut Network, spec: &FaultSpec, on: bool) {
    use FaultType::*;
    let prefix = spec.params.prefix;
    match (spec.kind, spec.location) {
        (SilentDropInSwitch, FaultLocation::Switch(s)) => {
            if on {
                let h = hook(net, spec);
                net.hooks.switch_silent_drop.insert(s, h);
            } else {
                net.hooks.switch_silent_drop.remove(&s);
            }
        }
        (PacketPayloadCorruptionInSwitch, FaultLocation::Switch(s)) => {
            if on {
                let h = hook(net, spec);
                net.hooks.switch_payload_corruption.insert(s, h);
            } else {
                net.hooks.switch_payload_corruption.remove(&s);
            }
        }
        (SilentDropOnLink, FaultLocation::Link(l)) => {
            if on {
                let h = hook(net, spec);
                net.hooks.link_silent_drop.insert(l, h);
            } else {
                net.hooks.link_silent_drop.remove(&l);
            }
        }
        (CorruptionOnLinkIP, FaultLocation::Link(l)) => {
            if on {
                let h = hook(net, spec);
                net.hooks.link_header_corruption.insert(l, h);
            } else {
                net.hooks.link_header_corruption.remove(&l);
            }
        }
        (IncorrectDecrementTTL, FaultLocation::Switch(s)) => {
            if on {
                net.hooks.ttl_decrement.insert(s, spec.params.ttl_delta);
            } else {
                net.hooks.ttl_decrement.remove(&s);
            }
        }
        (IncorrectForwardingDrop, FaultLocation::Switch(s)) => {
            let sel = spec.selector().expect("validated");
            let drops = &mut net.switch_mut(s).dp.forced_drops;
            if on {
                drops.push(sel);
            } else if let Some(i) = drops.iter().position(|f| *f == sel) {
                drops.remove(i);
            }
        }
        (FIBDiscrepancy, FaultLocation::Switch(s)) => {
            let p = prefix.expect("validated");
            let sup = &mut net.switch_mut(s).bgp.fib_suppressed;
            if on {
                sup.insert(p);
            } else {
                sup.remove(&p);
            }
            net.reinstall_fib(s);
        }
        (IngressBgpUpdateModification, FaultLocation::Session { switch, peer }) => {
            if on {
                let p = prefix.expect("validated");
                net.hooks.bgp_ingress_mangle.insert((switch, peer), p);
            } else {
                net.hooks.bgp_ingress_mangle.remove(&(switch, peer));
            }
            soft_reset(net, switch, peer);
        }
        (EgressBgpUpdateModification, FaultLocation::Session { switch, peer }) => {
            if on {
                let p = prefix.expect("validated");
                net.hooks.bgp_egress_mangle.insert((switch, peer), p);
            } else {
                net.hooks.bgp_egress_mangle.remove(&(switch, peer));
            }
            soft_reset(net, switch, peer);
        }
        (BgpNeighborMissing, FaultLocation::Session { switch, peer }) => {
            if on {
                net.hooks.bgp_block.insert((switch, peer));
            } else {
                net.hooks.bgp_block.remove(&(switch, peer));
            }
        }
        (RoutingDaemonCrash, FaultLocation::Switch(s)) => {
            if on {
                net.hooks.daemon_crash.insert(s);
            } else {
                net.hooks.daemon_crash.remove(&s);
            }
        }
        (LinkDown, FaultLocation::Link(l)) => net.links[l.index()].up = !on,
        (AgentCrash, FaultLocation::Switch(s)) => net.switch_mut(s).agent.alive = !on,
        (SwitchCrash, FaultLocation::Switch(s)) => {
            for l in switch_links(net, s) {
                net.links[l.index()].up = !on;
            }
            net.switch_mut(s).agent.alive = !on;
            if on {
                net.hooks.daemon_crash.insert(s);
            } else {
                net.hooks.daemon_crash.remove(&s);
            }
        }
        (kind, loc) => unreachable!("validated {kind} at {loc}"),
    }
}
