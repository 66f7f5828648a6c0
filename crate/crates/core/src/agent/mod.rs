//! Per-switch agent: command delegate, fault and checksum reporters, flow
//! injection, command relay, marker tests and anomaly detectors.

mod wire;

use std::collections::BTreeMap;
use std::net::Ipv4Addr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use wire::{
    decode, encode, AgentCommand, AgentReply, AnomalyKind, AnomalyReport, CapturedMessage,
    CommandEnvelope, DropTestResult, FaultReport, MarkerResult, MgmtBody, MgmtMessage,
    ReplyPayload, RibOutEntry, SessionSummary, WireError, WIRE_VERSION,
};

use crate::controlplane::{BgpMessage, Effects, Outbound, SessionState};
use crate::dataplane::{MirrorRecord, TriggerEvent};
use crate::netmodel::{
    Body, FlowSpec, LinkId, MarkerBody, NodeId, Packet, Protocol, SimTime, StaticRoute, SwitchId,
};
use crate::simkernel::{mix64, CaptureDirection, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub detector_period: SimTime,
    /// RIB changes per detector period that count as churn.
    pub churn_threshold: u64,
    /// Session state changes per detector period that count as flapping.
    pub flap_threshold: u64,
    pub fib_capacity: u64,
    pub rib_capacity: u64,
    pub resource_fraction: f64,
    /// Checksum records sent per episode, until the suppress flag is reset.
    pub checksum_cap: u32,
    pub marker_interval: SimTime,
    pub marker_timeout: SimTime,
    pub relay_timeout: SimTime,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            detector_period: SimTime::from_secs(1),
            churn_threshold: 50,
            flap_threshold: 5,
            fib_capacity: 1000,
            rib_capacity: 1000,
            resource_fraction: 0.95,
            checksum_cap: 10,
            marker_interval: SimTime::from_millis(50),
            marker_timeout: SimTime::from_millis(500),
            relay_timeout: SimTime::from_secs(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentTimer {
    DetectorTick,
    InjectNext { flow: u64 },
    MarkerSend { test: u64, seq: u8 },
    MarkerTimeout { test: u64 },
    CaptureEnd { capture: u64 },
    RelayTimeout { relay: u64 },
}

/// Where and how to answer a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ReplyTo {
    request_id: u64,
    addr: Ipv4Addr,
    from: Ipv4Addr,
    /// Set when the requester is the directly attached neighbor on this
    /// interface; the reply then bypasses routing.
    direct_iface: Option<u8>,
}

#[derive(Debug, Clone)]
struct FlowJob {
    template: Packet,
    iface: u8,
    remaining: u32,
    sent: u32,
    interval: SimTime,
}

#[derive(Debug, Clone)]
struct MarkerTest {
    reply: ReplyTo,
    link: LinkId,
    iface: u8,
    local_ip: Ipv4Addr,
    peer_ip: Ipv4Addr,
    samples: [Option<(u64, u64)>; 2],
}

#[derive(Debug, Clone)]
struct Capture {
    reply: ReplyTo,
    records: Vec<CapturedMessage>,
}

#[derive(Debug, Clone, Copy)]
struct PendingRelay {
    reply: ReplyTo,
}

#[derive(Debug, Clone)]
pub struct AgentState {
    pub config: AgentConfig,
    /// Address fault, checksum and anomaly reports are sent to.
    pub manager: Ipv4Addr,
    pub alive: bool,
    next_id: u64,
    next_ident: u16,
    flows: BTreeMap<u64, FlowJob>,
    markers: BTreeMap<u64, MarkerTest>,
    captures: BTreeMap<u64, Capture>,
    relays: BTreeMap<u64, PendingRelay>,
    pub checksum_sent: u32,
    pub reports_sent: u64,
    pub commands_handled: u64,
    last_rib_changes: u64,
    last_flaps: u64,
    /// Set after the first detector tick, which only records a baseline.
    primed: bool,
    latched: Vec<AnomalyKind>,
}

impl AgentState {
    pub fn new(config: AgentConfig, manager: Ipv4Addr) -> Self {
        AgentState {
            config,
            manager,
            alive: true,
            next_id: 1,
            next_ident: 0x4000,
            flows: BTreeMap::new(),
            markers: BTreeMap::new(),
            captures: BTreeMap::new(),
            relays: BTreeMap::new(),
            checksum_sent: 0,
            reports_sent: 0,
            commands_handled: 0,
            last_rib_changes: 0,
            last_flaps: 0,
            primed: false,
            latched: Vec::new(),
        }
    }

    fn take_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn active_captures(&self) -> usize {
        self.captures.len()
    }
}

/// Error text for routing-table commands on a switch whose daemon is dead.
pub const ROUTING_DAEMON_DOWN: &str = "routing daemon not running";

fn agent(net: &mut Network, s: SwitchId) -> &mut AgentState {
    &mut net.switches[s.index()].agent
}

/// Builds an in-band management packet carrying `body`.
pub fn mgmt_packet(src: Ipv4Addr, dst: Ipv4Addr, body: MgmtBody) -> Packet {
    let bytes: Arc<[u8]> = encode(body).into();
    let mut p = Packet::new(src, dst, Protocol::Mgmt).with_body(Body::Mgmt(bytes));
    p.payload_len = 0;
    p.refresh_checksum();
    p
}

/// Sends a report-style message from the switch loopback to the manager.
fn send_to_manager(net: &mut Network, s: SwitchId, body: MgmtBody) {
    let sw = &net.switches[s.index()];
    let pkt = mgmt_packet(sw.cfg.loopback, sw.agent.manager, body);
    net.switch_send_routed(s, pkt, false);
}

fn send_reply(net: &mut Network, s: SwitchId, to: ReplyTo, result: Result<ReplyPayload, String>) {
    let body = MgmtBody::Reply(AgentReply {
        request_id: to.request_id,
        switch: s,
        result,
    });
    let pkt = mgmt_packet(to.from, to.addr, body);
    match to.direct_iface {
        Some(i) => net.switch_send_direct(s, i, pkt, false),
        None => {
            net.switch_send_routed(s, pkt, false);
        }
    }
}

/// Handles a management packet delivered to the switch CPU.
pub fn on_mgmt(net: &mut Network, s: SwitchId, iface: u8, pkt: Packet) {
    if !net.switches[s.index()].agent.alive {
        return;
    }
    let Body::Mgmt(bytes) = &pkt.body else {
        return;
    };
    let Ok(body) = decode(bytes) else {
        return;
    };
    match body {
        MgmtBody::Command(env) => {
            let direct = net.switches[s.index()]
                .cfg
                .interface(iface)
                .is_some_and(|i| i.peer_ip == pkt.src_ip)
                .then_some(iface);
            let to = ReplyTo {
                request_id: env.request_id,
                addr: pkt.src_ip,
                from: pkt.dst_ip,
                direct_iface: direct,
            };
            agent(net, s).commands_handled += 1;
            if let Some(result) = handle_command(net, s, to, env.command) {
                send_reply(net, s, to, result);
            }
        }
        MgmtBody::Reply(r) => {
            if let Some(p) = agent(net, s).relays.remove(&r.request_id) {
                send_reply(net, s, p.reply, Ok(ReplyPayload::Relayed(Box::new(r))));
            }
        }
        _ => {}
    }
}

/// Executes a command; `None` means the reply is sent later.
fn handle_command(
    net: &mut Network,
    s: SwitchId,
    to: ReplyTo,
    cmd: AgentCommand,
) -> Option<Result<ReplyPayload, String>> {
    let now = net.now;
    if cmd.needs_routing_daemon() && net.hooks.daemon_crash.contains(&s) {
        return Some(Err(ROUTING_DAEMON_DOWN.into()));
    }
    let sw = &net.switches[s.index()];
    let reply = match cmd {
        AgentCommand::GetCounters => Ok(ReplyPayload::Counters(sw.dp.counters.clone())),
        AgentCommand::GetDropCounters => Ok(ReplyPayload::DropCounters(
            sw.dp
                .counters
                .ports
                .iter()
                .map(|(i, p)| (*i, p.drops))
                .collect(),
        )),
        AgentCommand::GetFib => Ok(ReplyPayload::Fib(sw.dp.fib.entries())),
        AgentCommand::GetRib => Ok(ReplyPayload::Rib(sw.bgp.rib.values().cloned().collect())),
        AgentCommand::GetRibIn => Ok(ReplyPayload::RibIn(
            sw.bgp
                .rib_in
                .iter()
                .map(|(p, m)| (*p, m.values().cloned().collect()))
                .collect(),
        )),
        AgentCommand::GetRibOut { peer } => Ok(ReplyPayload::RibOut(
            sw.bgp
                .sessions
                .keys()
                .filter(|p| peer.is_none_or(|x| x == **p))
                .map(|p| {
                    let entries = sw
                        .bgp
                        .rib_out_to(*p)
                        .into_iter()
                        .map(|(prefix, a)| RibOutEntry {
                            prefix,
                            as_path: a.as_path,
                            local_pref_hint: a.local_pref_hint,
                        })
                        .collect();
                    (*p, entries)
                })
                .collect(),
        )),
        AgentCommand::GetAcl => Ok(ReplyPayload::Acl(sw.dp.acl.clone())),
        AgentCommand::GetHeaderLogs => Ok(ReplyPayload::HeaderLogs(sw.dp.logs.clone())),
        AgentCommand::GetBgpSessions => Ok(ReplyPayload::Sessions(
            sw.bgp
                .sessions
                .values()
                .map(|x| SessionSummary {
                    peer: x.peer,
                    kind: x.kind,
                    state: x.state,
                    local_iface: x.local_iface,
                    last_keepalive_rx: x.last_keepalive_rx,
                })
                .collect(),
        )),
        AgentCommand::SetTraceFilter { flow } => {
            let dp = &mut net.switches[s.index()].dp;
            if !dp.trace_filters.contains(&flow) {
                dp.trace_filters.push(flow);
            }
            Ok(ReplyPayload::Ack)
        }
        AgentCommand::ClearTraceFilter => {
            net.switches[s.index()].dp.trace_filters.clear();
            Ok(ReplyPayload::Ack)
        }
        AgentCommand::ResetSuppressFlag => {
            let sw = &mut net.switches[s.index()];
            sw.dp.trigger.suppress = false;
            sw.agent.checksum_sent = 0;
            Ok(ReplyPayload::Ack)
        }
        AgentCommand::RunSwitchDropTest { window } => drop_test(net, s, window),
        AgentCommand::InstallStaticRoute { prefix, next_hop } => {
            let sw = &mut net.switches[s.index()];
            match sw.cfg.interface_to(next_hop) {
                None => Err(format!("{next_hop} is not adjacent to {s}")),
                Some(i) => {
                    let iface = i.index;
                    sw.extra_statics.retain(|r| r.prefix != prefix);
                    sw.extra_statics.push(StaticRoute { prefix, iface });
                    net.reinstall_fib(s);
                    Ok(ReplyPayload::Ack)
                }
            }
        }
        AgentCommand::RemoveStaticRoute { prefix } => {
            let sw = &mut net.switches[s.index()];
            let before = sw.extra_statics.len();
            sw.extra_statics.retain(|r| r.prefix != prefix);
            if sw.extra_statics.len() == before {
                Err(format!("no static route for {prefix}"))
            } else {
                net.reinstall_fib(s);
                Ok(ReplyPayload::Ack)
            }
        }
        AgentCommand::RequestRouteRefresh { peer } => {
            match net.switches[s.index()].bgp.session_state(peer) {
                Some(SessionState::Established) => {
                    let fx = Effects {
                        out: vec![Outbound {
                            peer,
                            msg: BgpMessage::RouteRefresh,
                            background: false,
                        }],
                        ..Effects::default()
                    };
                    net.apply_bgp_effects(s, fx);
                    Ok(ReplyPayload::Ack)
                }
                Some(st) => Err(format!("session with {peer} is {st:?}")),
                None => Err(format!("no session with {peer}")),
            }
        }
        AgentCommand::CaptureControlPackets { duration_us } => {
            let a = agent(net, s);
            let id = a.take_id();
            a.captures.insert(
                id,
                Capture {
                    reply: to,
                    records: Vec::new(),
                },
            );
            net.schedule_agent(
                s,
                now + SimTime(duration_us),
                AgentTimer::CaptureEnd { capture: id },
                false,
            );
            return None;
        }
        AgentCommand::InjectFlow {
            flow,
            count,
            interval_us,
            ttl,
            dscp,
        } => return Some(start_flow(net, s, flow, count, interval_us, ttl, dscp)),
        AgentCommand::RunLinkMarkerTest { link } => return start_marker_test(net, s, to, link),
        AgentCommand::Relay { neighbor, inner } => {
            return start_relay(net, s, to, neighbor, *inner)
        }
    };
    Some(reply)
}

fn drop_test(net: &Network, s: SwitchId, window: Option<u64>) -> Result<ReplyPayload, String> {
    let dp = &net.switches[s.index()].dp;
    let now = net.now;
    let w = match window {
        Some(w) => w,
        None => dp
            .counters
            .window_of(now)
            .checked_sub(1)
            .ok_or("no closed window yet")?,
    };
    let ready = SimTime((w + 1) * dp.counters.window_len_us + dp.pipeline_delay.0);
    if now < ready {
        return Err(format!("window {w} still open until {ready}"));
    }
    let report = dp.counters.window_report(w).map_err(|e| e.to_string())?;
    let mut drops: BTreeMap<_, BTreeMap<u8, u64>> = BTreeMap::new();
    for (iface, p) in &dp.counters.ports {
        for (reason, c) in p.drops.all() {
            let n = c.windows.get(w).unwrap_or(0);
            if n > 0 {
                drops.entry(reason).or_default().insert(*iface, n);
            }
        }
    }
    Ok(ReplyPayload::DropTest(DropTestResult { report, drops }))
}

fn start_flow(
    net: &mut Network,
    s: SwitchId,
    flow: FlowSpec,
    count: u32,
    interval_us: u64,
    ttl: u8,
    dscp: u8,
) -> Result<ReplyPayload, String> {
    let Some(template) = flow.representative() else {
        return Err("flow pattern names no concrete source and destination".into());
    };
    let id = agent(net, s).take_id();
    if count == 0 {
        return Ok(ReplyPayload::FlowStarted { flow_id: id, count });
    }
    let iface = net
        .host_facing_iface(s, template.src_ip)
        .unwrap_or(crate::netmodel::CPU_PORT);
    let template = template.with_ttl(ttl).with_dscp(dscp);
    agent(net, s).flows.insert(
        id,
        FlowJob {
            template,
            iface,
            remaining: count,
            sent: 0,
            interval: SimTime(interval_us),
        },
    );
    let now = net.now;
    net.schedule_agent(s, now, AgentTimer::InjectNext { flow: id }, false);
    Ok(ReplyPayload::FlowStarted { flow_id: id, count })
}

fn inject_next(net: &mut Network, s: SwitchId, id: u64) {
    let a = agent(net, s);
    let Some(job) = a.flows.get_mut(&id) else {
        return;
    };
    let ident = a.next_ident;
    a.next_ident = a.next_ident.wrapping_add(1);
    let digest = mix64((u64::from(s.0) << 48) ^ (id << 24) ^ u64::from(job.sent));
    let pkt = job.template.clone().with_ident(ident).with_payload(digest);
    let iface = job.iface;
    job.sent += 1;
    job.remaining -= 1;
    let interval = job.interval;
    if job.remaining == 0 {
        a.flows.remove(&id);
    } else {
        let at = net.now + interval;
        net.schedule_agent(s, at, AgentTimer::InjectNext { flow: id }, false);
    }
    net.inject_at_switch(s, iface, pkt);
}

fn start_marker_test(
    net: &mut Network,
    s: SwitchId,
    to: ReplyTo,
    link: LinkId,
) -> Option<Result<ReplyPayload, String>> {
    let Some(l) = net.model.topology.links.get(link.index()).copied() else {
        return Some(Err(format!("unknown link {link}")));
    };
    let Some(ep) = l.endpoint_of(NodeId::Switch(s)) else {
        return Some(Err(format!("{link} is not attached to {s}")));
    };
    let Some(intf) = net.switches[s.index()].cfg.interface(ep.iface) else {
        return Some(Err(format!("{s} has no interface {}", ep.iface)));
    };
    let test = MarkerTest {
        reply: to,
        link,
        iface: ep.iface,
        local_ip: intf.ip,
        peer_ip: intf.peer_ip,
        samples: [None, None],
    };
    let a = agent(net, s);
    let id = a.take_id();
    a.markers.insert(id, test);
    let now = net.now;
    let interval = net.switches[s.index()].agent.config.marker_interval;
    let timeout = net.switches[s.index()].agent.config.marker_timeout;
    send_marker(net, s, id, 1);
    net.schedule_agent(
        s,
        now + interval,
        AgentTimer::MarkerSend { test: id, seq: 2 },
        false,
    );
    net.schedule_agent(
        s,
        now + interval + timeout,
        AgentTimer::MarkerTimeout { test: id },
        false,
    );
    None
}

fn send_marker(net: &mut Network, s: SwitchId, id: u64, seq: u8) {
    let Some(t) = net.switches[s.index()].agent.markers.get(&id) else {
        return;
    };
    let (iface, local, peer) = (t.iface, t.local_ip, t.peer_ip);
    let body = MarkerBody {
        request_id: id,
        seq,
        origin: s,
        origin_iface: iface,
        egress_count: net.switches[s.index()].dp.egress_total(iface),
        ingress_count: None,
    };
    let mut pkt = Packet::new(local, peer, Protocol::Marker).with_body(Body::Marker(body));
    pkt.payload_len = 0;
    pkt.refresh_checksum();
    net.switch_send_direct(s, iface, pkt, false);
}

/// Marker intercept, ahead of the forwarding pipeline.
pub fn on_marker(net: &mut Network, s: SwitchId, iface: u8, pkt: Packet) {
    let Body::Marker(mut m) = pkt.body else {
        return;
    };
    if !net.switches[s.index()].agent.alive {
        return;
    }
    match m.ingress_count {
        None => {
            m.ingress_count = Some(net.switches[s.index()].dp.ingress_total(iface));
            let mut back =
                Packet::new(pkt.dst_ip, pkt.src_ip, Protocol::Marker).with_body(Body::Marker(m));
            back.payload_len = 0;
            back.refresh_checksum();
            net.switch_send_direct(s, iface, back, false);
        }
        Some(ingress) if m.origin == s => {
            let a = agent(net, s);
            let Some(t) = a.markers.get_mut(&m.request_id) else {
                return;
            };
            let slot = usize::from(m.seq.clamp(1, 2) - 1);
            t.samples[slot] = Some((m.egress_count, ingress));
            if let [Some((e1, i1)), Some((e2, i2))] = t.samples {
                let t = a.markers.remove(&m.request_id).expect("present");
                let r = MarkerResult {
                    link: t.link,
                    iface: t.iface,
                    egress_delta: e2 - e1,
                    ingress_delta: i2 - i1,
                };
                send_reply(net, s, t.reply, Ok(ReplyPayload::Marker(r)));
            }
        }
        Some(_) => {}
    }
}

fn start_relay(
    net: &mut Network,
    s: SwitchId,
    to: ReplyTo,
    neighbor: SwitchId,
    inner: AgentCommand,
) -> Option<Result<ReplyPayload, String>> {
    let Some(intf) = net.switches[s.index()]
        .cfg
        .interface_to(NodeId::Switch(neighbor))
        .cloned()
    else {
        return Some(Err(format!("{neighbor} is not adjacent to {s}")));
    };
    let a = agent(net, s);
    let id = a.take_id();
    a.relays.insert(id, PendingRelay { reply: to });
    let timeout = a.config.relay_timeout;
    let body = MgmtBody::Command(CommandEnvelope {
        request_id: id,
        command: inner,
    });
    let pkt = mgmt_packet(intf.ip, intf.peer_ip, body);
    net.switch_send_direct(s, intf.index, pkt, false);
    let now = net.now;
    net.schedule_agent(
        s,
        now + timeout,
        AgentTimer::RelayTimeout { relay: id },
        false,
    );
    None
}

pub fn on_timer(net: &mut Network, s: SwitchId, timer: AgentTimer) {
    if !net.switches[s.index()].agent.alive && timer != AgentTimer::DetectorTick {
        return;
    }
    match timer {
        AgentTimer::DetectorTick => {
            detectors_tick(net, s);
            let at = net.now + net.switches[s.index()].agent.config.detector_period;
            net.schedule_agent(s, at, AgentTimer::DetectorTick, true);
        }
        AgentTimer::InjectNext { flow } => inject_next(net, s, flow),
        AgentTimer::MarkerSend { test, seq } => send_marker(net, s, test, seq),
        AgentTimer::MarkerTimeout { test } => {
            if let Some(t) = agent(net, s).markers.remove(&test) {
                send_reply(
                    net,
                    s,
                    t.reply,
                    Err(format!("marker timeout on {}", t.link)),
                );
            }
        }
        AgentTimer::CaptureEnd { capture } => {
            if let Some(c) = agent(net, s).captures.remove(&capture) {
                send_reply(net, s, c.reply, Ok(ReplyPayload::Capture(c.records)));
            }
        }
        AgentTimer::RelayTimeout { relay } => {
            if let Some(p) = agent(net, s).relays.remove(&relay) {
                send_reply(net, s, p.reply, Err("relay neighbor unreachable".into()));
            }
        }
    }
}

/// Records a BGP message in every active capture of the switch.
pub fn on_bgp_capture(
    net: &mut Network,
    s: SwitchId,
    direction: CaptureDirection,
    peer: SwitchId,
    msg: &BgpMessage,
) {
    let now = net.now;
    let a = agent(net, s);
    if a.captures.is_empty() {
        return;
    }
    for c in a.captures.values_mut() {
        c.records.push(CapturedMessage {
            time: now,
            direction,
            peer,
            msg: msg.clone(),
        });
    }
}

/// Fault reporter: the data plane tripped its drop trigger.
pub fn on_trigger(net: &mut Network, s: SwitchId, t: TriggerEvent) {
    if !net.switches[s.index()].agent.alive {
        return;
    }
    agent(net, s).reports_sent += 1;
    let body = MgmtBody::FaultReport(FaultReport {
        switch: s,
        time: t.time,
        ingress_iface: t.ingress_iface,
        reason: t.reason,
        window: t.window,
        arrived: t.arrived,
        dropped: t.dropped,
        sample: t.sample,
    });
    send_to_manager(net, s, body);
}

/// Checksum reporter: forwards a capped number of mirrored digests.
pub fn on_mirror(net: &mut Network, s: SwitchId, m: MirrorRecord) {
    let a = agent(net, s);
    if !a.alive || a.checksum_sent >= a.config.checksum_cap {
        return;
    }
    a.checksum_sent += 1;
    send_to_manager(net, s, MgmtBody::Checksum(m));
}

fn detectors_tick(net: &mut Network, s: SwitchId) {
    let now = net.now;
    let sw = &mut net.switches[s.index()];
    let cfg = sw.agent.config.clone();
    let changes = sw.bgp.rib_change_count - sw.agent.last_rib_changes;
    let flaps = sw.bgp.session_flap_count - sw.agent.last_flaps;
    sw.agent.last_rib_changes = sw.bgp.rib_change_count;
    sw.agent.last_flaps = sw.bgp.session_flap_count;
    // Startup convergence is not churn.
    let rates_known = std::mem::replace(&mut sw.agent.primed, true);
    let (changes, flaps) = if rates_known {
        (changes, flaps)
    } else {
        (0, 0)
    };
    let limit = |cap: u64| (cap as f64 * cfg.resource_fraction).ceil() as u64;
    let checks = [
        (AnomalyKind::RibChurn, changes, cfg.churn_threshold),
        (AnomalyKind::SessionFlap, flaps, cfg.flap_threshold),
        (
            AnomalyKind::FibResource,
            sw.dp.fib.len() as u64,
            limit(cfg.fib_capacity),
        ),
        (
            AnomalyKind::RibResource,
            sw.bgp.rib.len() as u64,
            limit(cfg.rib_capacity),
        ),
    ];
    let mut fired = Vec::new();
    for (kind, value, lim) in checks {
        let over = value >= lim;
        let latched = sw.agent.latched.contains(&kind);
        if over && !latched {
            sw.agent.latched.push(kind);
            fired.push(AnomalyReport {
                switch: s,
                time: now,
                kind,
                value,
                limit: lim,
            });
        } else if !over && latched {
            sw.agent.latched.retain(|k| *k != kind);
        }
    }
    for r in fired {
        net.anomalies.push(r.clone());
        if net.switches[s.index()].agent.alive {
            send_to_manager(net, s, MgmtBody::Anomaly(r));
        }
    }
}

#[cfg(test)]
mod tests;
