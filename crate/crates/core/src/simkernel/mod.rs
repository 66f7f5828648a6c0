//! Deterministic discrete-event engine: event queue, link transit, switch
//! and host packet handling, and the fault hooks the injector arms.

mod event;
mod hooks;
mod host;
mod switch;

use std::collections::{BTreeMap, VecDeque};
use std::hash::Hasher;
use std::net::Ipv4Addr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use event::{Event, EventKind, EventQueue};
pub use hooks::{FaultHooks, StochasticHook};
pub use host::{mix64, HostNode, PingmeshConfig, PingmeshReport, PingmeshState};
pub use switch::{CaptureDirection, SwitchNode};

use crate::agent::{AgentConfig, AgentState, AgentTimer};
use crate::controlplane::{BgpProcess, SessionState, ACTIVE_OPEN_ATTEMPTS, DEFAULT_HOLD_TIME};
use crate::dataplane::{DataPlane, TriggerConfig};
use crate::netmodel::{
    addressing, Body, Endpoint, HostId, LinkId, NetworkModel, NodeId, Packet, Prefix, Protocol,
    SimTime, SwitchId,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub link_latency: SimTime,
    pub pipeline_delay: SimTime,
    pub hold_time: SimTime,
    pub trigger: TriggerConfig,
    pub agent: AgentConfig,
    pub pingmesh: PingmeshConfig,
    /// Livelock guard: maximum events processed by one `run_until` call.
    pub max_events: u64,
    /// Keep a full JSON-lines event log, not just its running hash.
    pub record_log: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 1,
            link_latency: SimTime(50),
            pipeline_delay: SimTime(10),
            hold_time: DEFAULT_HOLD_TIME,
            trigger: TriggerConfig::default(),
            agent: AgentConfig::default(),
            pingmesh: PingmeshConfig::default(),
            max_events: 50_000_000,
            record_log: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopCondition {
    Time(SimTime),
    Quiescence,
    /// Stop as soon as the host's inbox grows, or at the deadline.
    Inbox {
        host: HostId,
        deadline: SimTime,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventStats {
    pub events: u64,
    pub start: SimTime,
    pub end: SimTime,
    /// Time of the last event that was not periodic background work.
    pub last_activity: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("livelock guard tripped after {events} events at {time}")]
    Livelock { events: u64, time: SimTime },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub time: u64,
    pub kind: String,
    pub node: String,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkState {
    pub id: LinkId,
    pub latency: SimTime,
    pub up: bool,
}

/// Counts of packets lost or mutated by modeled rules and fault hooks.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossStats {
    pub deliberate_drops: u64,
    pub silent_switch_drops: u64,
    pub silent_link_drops: u64,
    pub header_corruptions: u64,
    pub payload_corruptions: u64,
    pub link_down_drops: u64,
    pub unroutable_cpu: u64,
    pub bgp_blocked: u64,
}

#[derive(Debug, Clone)]
pub struct Network {
    pub model: Arc<NetworkModel>,
    pub config: SimConfig,
    pub now: SimTime,
    queue: EventQueue,
    pub switches: Vec<SwitchNode>,
    pub hosts: Vec<HostNode>,
    pub links: Vec<LinkState>,
    port_map: BTreeMap<(NodeId, u8), LinkId>,
    pub hooks: FaultHooks,
    pub losses: LossStats,
    pub pingmesh_reports: Vec<PingmeshReport>,
    pub anomalies: Vec<crate::agent::AnomalyReport>,
    pub protocol_errors: Vec<String>,
    processed: u64,
    log_hash: u64,
    log: Vec<EventRecord>,
    last_activity: SimTime,
}

impl Network {
    pub fn new(model: Arc<NetworkModel>, config: SimConfig) -> Self {
        let topo = &model.topology;
        let mut port_map = BTreeMap::new();
        for l in &topo.links {
            port_map.insert((l.a.node, l.a.iface), l.id);
            port_map.insert((l.b.node, l.b.iface), l.id);
        }
        let links = topo
            .links
            .iter()
            .map(|l| LinkState {
                id: l.id,
                latency: config.link_latency,
                up: true,
            })
            .collect();
        let manager = topo.diagnosis_host().ip;
        let switches = model
            .configs
            .values()
            .map(|cfg| {
                let mut dp = DataPlane::new(cfg.id, config.trigger, config.pipeline_delay);
                dp.acl = cfg.acl.clone();
                dp.local_addrs.insert(cfg.loopback);
                dp.local_addrs.insert(cfg.secondary);
                for i in &cfg.interfaces {
                    dp.local_addrs.insert(i.ip);
                    dp.iface_macs.insert(i.index, i.mac);
                }
                SwitchNode {
                    id: cfg.id,
                    cfg: cfg.clone(),
                    dp,
                    bgp: BgpProcess::new(cfg, config.hold_time),
                    agent: AgentState::new(config.agent.clone(), manager),
                    extra_statics: Vec::new(),
                }
            })
            .collect();
        let diag_sip = model.diag_secondary;
        let hosts = topo
            .hosts
            .iter()
            .map(|h| {
                let link = port_map[&(NodeId::Host(h.id), 1)];
                let gw = model
                    .config(h.switch)
                    .interface(h.iface)
                    .expect("host iface")
                    .mac;
                HostNode {
                    id: h.id,
                    ip: h.ip,
                    aliases: if h.diagnosis {
                        vec![diag_sip]
                    } else {
                        Vec::new()
                    },
                    mac: addressing::host_mac(h.id),
                    switch: h.switch,
                    gateway_mac: gw,
                    link,
                    diagnosis: h.diagnosis,
                    inbox: VecDeque::new(),
                    data_received: 0,
                    corrupted_received: 0,
                    echo_replies: 0,
                    ttl_budget: BTreeMap::new(),
                    pingmesh: None,
                    next_ident: 0,
                }
            })
            .collect();
        let mut net = Network {
            model,
            config,
            now: SimTime::ZERO,
            queue: EventQueue::default(),
            switches,
            hosts,
            links,
            port_map,
            hooks: FaultHooks::default(),
            losses: LossStats::default(),
            pingmesh_reports: Vec::new(),
            anomalies: Vec::new(),
            protocol_errors: Vec::new(),
            processed: 0,
            log_hash: 0xcbf2_9ce4_8422_2325,
            log: Vec::new(),
            last_activity: SimTime::ZERO,
        };
        for i in 0..net.switches.len() {
            let s = SwitchId(i as u32);
            net.reinstall_fib(s);
            net.queue
                .push(SimTime::ZERO, true, EventKind::BgpTick { switch: s });
            let period = net.config.agent.detector_period;
            net.queue.push(
                period,
                true,
                EventKind::Agent {
                    switch: s,
                    timer: AgentTimer::DetectorTick,
                },
            );
        }
        net
    }

    pub fn from_model(model: NetworkModel, config: SimConfig) -> Self {
        Self::new(Arc::new(model), config)
    }

    pub fn switch(&self, s: SwitchId) -> &SwitchNode {
        &self.switches[s.index()]
    }

    pub fn switch_mut(&mut self, s: SwitchId) -> &mut SwitchNode {
        &mut self.switches[s.index()]
    }

    pub fn host(&self, h: HostId) -> &HostNode {
        &self.hosts[h.index()]
    }

    pub fn host_mut(&mut self, h: HostId) -> &mut HostNode {
        &mut self.hosts[h.index()]
    }

    pub fn diagnosis_host(&self) -> HostId {
        self.model.topology.diagnosis_host().id
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    /// Running hash over every processed event; equal seeds give equal hashes.
    pub fn log_hash(&self) -> u64 {
        self.log_hash
    }

    pub fn event_log(&self) -> &[EventRecord] {
        &self.log
    }

    /// Event log as JSON lines.
    pub fn event_log_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.log {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn schedule(&mut self, at: SimTime, background: bool, kind: EventKind) {
        let at = at.max(self.now);
        self.queue.push(at, background, kind);
    }

    pub fn schedule_agent(
        &mut self,
        s: SwitchId,
        at: SimTime,
        timer: AgentTimer,
        background: bool,
    ) {
        self.schedule(at, background, EventKind::Agent { switch: s, timer });
    }

    /// Control plane converged and no foreground work pending.
    pub fn quiescent(&self) -> bool {
        self.queue.foreground() == 0
            && self.switches.iter().all(|sw| {
                sw.bgp.sessions.values().all(|s| {
                    s.state == SessionState::Established || s.open_attempts > ACTIVE_OPEN_ATTEMPTS
                })
            })
    }

    pub fn run_until(&mut self, stop: StopCondition) -> Result<EventStats, SimError> {
        let start = self.now;
        let mut events = 0u64;
        let inbox_start = match stop {
            StopCondition::Inbox { host, .. } => self.host(host).inbox.len(),
            _ => 0,
        };
        loop {
            match stop {
                StopCondition::Quiescence if self.quiescent() => break,
                StopCondition::Inbox { host, .. } if self.host(host).inbox.len() > inbox_start => {
                    break
                }
                _ => {}
            }
            let limit = match stop {
                StopCondition::Time(t) => Some(t),
                StopCondition::Inbox { deadline, .. } => Some(deadline),
                StopCondition::Quiescence => None,
            };
            match (self.queue.peek_time(), limit) {
                (None, Some(t)) => {
                    self.now = self.now.max(t);
                    break;
                }
                (None, None) => break,
                (Some(next), Some(t)) if next > t => {
                    self.now = self.now.max(t);
                    break;
                }
                _ => {}
            }
            let ev = self.queue.pop().expect("peeked");
            self.now = ev.time;
            if !ev.background {
                self.last_activity = ev.time;
            }
            self.record(&ev);
            self.dispatch(ev);
            events += 1;
            self.processed += 1;
            if events > self.config.max_events {
                return Err(SimError::Livelock {
                    events,
                    time: self.now,
                });
            }
        }
        Ok(EventStats {
            events,
            start,
            end: self.now,
            last_activity: self.last_activity,
        })
    }

    /// Runs for `d` of simulated time.
    pub fn advance(&mut self, d: SimTime) -> Result<EventStats, SimError> {
        let t = self.now + d;
        self.run_until(StopCondition::Time(t))
    }

    fn record(&mut self, ev: &Event) {
        let (node, detail) = describe(&ev.kind);
        let mut h = FnvHasher(self.log_hash);
        h.write_u64(ev.time.0);
        h.write_u64(ev.seq);
        h.write(ev.kind.label().as_bytes());
        h.write(node.as_bytes());
        h.write(detail.as_bytes());
        self.log_hash = h.finish();
        if self.config.record_log {
            self.log.push(EventRecord {
                seq: ev.seq,
                time: ev.time.0,
                kind: ev.kind.label().to_string(),
                node,
                detail,
            });
        }
    }

    fn dispatch(&mut self, ev: Event) {
        match ev.kind {
            EventKind::Deliver { to, pkt, .. } => match to.node {
                NodeId::Switch(s) => self.switch_receive(s, to.iface, pkt, ev.background),
                NodeId::Host(h) => self.host_receive(h, pkt),
            },
            EventKind::Egress {
                switch,
                iface,
                next_hop_mac,
                pkt,
            } => self.switch_egress(switch, iface, next_hop_mac, pkt, ev.background),
            EventKind::BgpTick { switch } => {
                let fx = self.switches[switch.index()].bgp.tick(self.now);
                self.apply_bgp_effects(switch, fx);
                let next = self.now + self.switches[switch.index()].bgp.keepalive_interval();
                self.schedule(next, true, EventKind::BgpTick { switch });
            }
            EventKind::Agent { switch, timer } => crate::agent::on_timer(self, switch, timer),
            EventKind::PingmeshRound { host } => self.pingmesh_round(host),
            EventKind::Oscillate {
                switch,
                prefix,
                period,
            } => {
                let bgp = &mut self.switches[switch.index()].bgp;
                let fx = if bgp.originated.contains(&prefix) {
                    bgp.withdraw_origin(prefix)
                } else {
                    bgp.originate(prefix)
                };
                self.apply_bgp_effects(switch, fx);
                self.schedule(
                    self.now + period,
                    false,
                    EventKind::Oscillate {
                        switch,
                        prefix,
                        period,
                    },
                );
            }
        }
    }

    pub fn link_of(&self, node: NodeId, iface: u8) -> Option<LinkId> {
        self.port_map.get(&(node, iface)).copied()
    }

    /// Puts a packet on the link attached to `(node, iface)`, applying link
    /// fault hooks.
    pub fn transmit(&mut self, node: NodeId, iface: u8, mut pkt: Packet, background: bool) {
        let Some(lid) = self.link_of(node, iface) else {
            return;
        };
        let state = self.links[lid.index()];
        if !state.up {
            self.losses.link_down_drops += 1;
            return;
        }
        if let Some(h) = self.hooks.link_silent_drop.get_mut(&lid) {
            if h.fires(&pkt) {
                self.losses.silent_link_drops += 1;
                return;
            }
        }
        if let Some(h) = self.hooks.link_header_corruption.get_mut(&lid) {
            if h.fires(&pkt) {
                let bit = h.draw();
                corrupt_header(&mut pkt, bit);
                self.losses.header_corruptions += 1;
            }
        }
        let link = *self.model.topology.link(lid);
        let to = link.other(node).expect("attached link");
        self.schedule(
            self.now + state.latency,
            background,
            EventKind::Deliver { link: lid, to, pkt },
        );
    }

    /// Sends a packet from a host towards its edge switch.
    pub fn host_send(&mut self, h: HostId, mut pkt: Packet) {
        let host = &self.hosts[h.index()];
        pkt.src_mac = host.mac;
        pkt.dst_mac = host.gateway_mac;
        let background = matches!(pkt.body, Body::Echo { .. });
        self.transmit(NodeId::Host(h), 1, pkt, background);
    }

    fn host_receive(&mut self, h: HostId, pkt: Packet) {
        let now = self.now;
        let host = &mut self.hosts[h.index()];
        if !host.owns(pkt.dst_ip) {
            return;
        }
        if !pkt.payload_intact() {
            host.corrupted_received += 1;
            return;
        }
        match (&pkt.body, pkt.protocol) {
            (Body::Mgmt(_), Protocol::Mgmt) => {
                if host.diagnosis {
                    host.inbox.push_back((now, pkt));
                }
            }
            (Body::Echo { reply: false, seq }, Protocol::Icmp) => {
                let ttl = host.ttl_for(pkt.src_ip);
                let ident = host.take_ident();
                let reply = Packet::new(pkt.dst_ip, pkt.src_ip, Protocol::Icmp)
                    .with_ttl(ttl)
                    .with_ident(ident)
                    .with_payload(pkt.payload_digest)
                    .with_body(Body::Echo {
                        reply: true,
                        seq: *seq,
                    });
                self.host_send(h, reply);
            }
            (Body::Echo { reply: true, seq }, Protocol::Icmp) => {
                host.echo_replies += 1;
                let src = self.model.owner_of(pkt.src_ip);
                let seq = *seq;
                if let (Some(NodeId::Host(d)), Some(pm)) = (src, host.pingmesh.as_mut()) {
                    if let Some(o) = pm.outstanding.get_mut(&d) {
                        if o.0 == seq {
                            o.1 = true;
                        }
                    }
                }
            }
            _ => host.data_received += 1,
        }
    }

    /// Starts periodic all-pairs probing from every host.
    pub fn start_pingmesh(&mut self) {
        for i in 0..self.hosts.len() {
            self.hosts[i].pingmesh = Some(PingmeshState::default());
            let offset = SimTime(1_000 * i as u64);
            self.schedule(
                self.now + offset,
                true,
                EventKind::PingmeshRound {
                    host: HostId(i as u32),
                },
            );
        }
    }

    /// Clears loss history and the one-report latch of every host.
    pub fn reset_pingmesh(&mut self) {
        for h in &mut self.hosts {
            if let Some(pm) = h.pingmesh.as_mut() {
                pm.outstanding.clear();
                pm.losses.clear();
                pm.reported = false;
            }
        }
        self.pingmesh_reports.clear();
    }

    fn pingmesh_round(&mut self, h: HostId) {
        let threshold = self.config.pingmesh.loss_threshold;
        let now = self.now;
        let peers: Vec<(HostId, Ipv4Addr)> = self
            .hosts
            .iter()
            .filter(|o| o.id != h)
            .map(|o| (o.id, o.ip))
            .collect();
        let mut to_send = Vec::new();
        {
            let host = &mut self.hosts[h.index()];
            let Some(pm) = host.pingmesh.as_mut() else {
                return;
            };
            for &(d, _) in &peers {
                if let Some(&(_, answered)) = pm.outstanding.get(&d) {
                    let l = pm.losses.entry(d).or_insert(0);
                    *l = if answered { 0 } else { *l + 1 };
                    if *l >= threshold && !pm.reported {
                        pm.reported = true;
                        self.pingmesh_reports.push(PingmeshReport {
                            time: now,
                            src: h,
                            dst: d,
                            consecutive_losses: *l,
                        });
                    }
                }
            }
            pm.seq += 1;
            let seq = pm.seq;
            for &(d, ip) in &peers {
                pm.outstanding.insert(d, (seq, false));
                to_send.push((ip, seq));
            }
        }
        for (ip, seq) in to_send {
            let host = &mut self.hosts[h.index()];
            let ttl = host.ttl_for(ip);
            let ident = host.take_ident();
            let digest = mix64((u64::from(h.0) << 48) ^ (u64::from(u32::from(ip)) << 16) ^ seq);
            let pkt = Packet::new(host.ip, ip, Protocol::Icmp)
                .with_ttl(ttl)
                .with_ident(ident)
                .with_payload(digest)
                .with_body(Body::Echo { reply: false, seq });
            self.host_send(h, pkt);
        }
        let next = self.now + self.config.pingmesh.interval;
        self.schedule(next, true, EventKind::PingmeshRound { host: h });
    }

    /// Rebuilds a switch's FIB from its RIB, static routes and interfaces.
    pub fn reinstall_fib(&mut self, s: SwitchId) {
        let sw = &mut self.switches[s.index()];
        let (fib, unresolved) =
            crate::controlplane::install_fib(&sw.cfg, &sw.bgp, &sw.extra_statics);
        sw.dp.fib = fib;
        for p in unresolved {
            self.protocol_errors.push(format!(
                "{s}: next hop for {p} unresolvable, FIB entry skipped"
            ));
        }
    }

    /// Starts flipping origination of `prefix` at `switch` every `period`.
    pub fn start_oscillation(&mut self, switch: SwitchId, prefix: Prefix, period: SimTime) {
        self.schedule(
            self.now + period,
            false,
            EventKind::Oscillate {
                switch,
                prefix,
                period,
            },
        );
    }

    /// Stable hash of forwarding and routing state, for invertibility checks.
    pub fn state_hash(&self) -> u64 {
        use std::hash::Hash;
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for sw in &self.switches {
            sw.dp.fib.entries().hash(&mut h);
            sw.bgp.rib.hash(&mut h);
            sw.bgp.rib_in.hash(&mut h);
            sw.bgp.rib_out.hash(&mut h);
            for s in sw.bgp.sessions.values() {
                (s.peer, s.state).hash(&mut h);
            }
        }
        h.finish()
    }

    pub fn endpoint_peer(&self, s: SwitchId, iface: u8) -> Option<Endpoint> {
        let lid = self.link_of(NodeId::Switch(s), iface)?;
        self.model.topology.link(lid).other(NodeId::Switch(s))
    }
}

/// Flips one header bit selected by `draw` without fixing the checksum.
fn corrupt_header(pkt: &mut Packet, draw: u64) {
    let bit = (draw % 16) as u32;
    match (draw >> 8) % 3 {
        0 => pkt.ident ^= 1 << bit,
        1 => pkt.dst_ip = Ipv4Addr::from(u32::from(pkt.dst_ip) ^ (1 << (bit % 8))),
        _ => pkt.ttl ^= 1 << (bit % 8),
    }
}

fn describe(kind: &EventKind) -> (String, String) {
    let pkt_detail = |p: &Packet| {
        let extra = match &p.body {
            Body::Bgp(m) => format!(" {}", m.summary()),
            _ => String::new(),
        };
        format!(
            "{} {}->{} ttl={} id={} trace={}{extra}",
            p.protocol, p.src_ip, p.dst_ip, p.ttl, p.ident, p.trace
        )
    };
    match kind {
        EventKind::Deliver { to, pkt, .. } => (to.to_string(), pkt_detail(pkt)),
        EventKind::Egress {
            switch, iface, pkt, ..
        } => (format!("{switch}:{iface}"), pkt_detail(pkt)),
        EventKind::BgpTick { switch } => (switch.to_string(), String::new()),
        EventKind::Agent { switch, timer } => (switch.to_string(), format!("{timer:?}")),
        EventKind::PingmeshRound { host } => (host.to_string(), String::new()),
        EventKind::Oscillate { switch, prefix, .. } => (switch.to_string(), prefix.to_string()),
    }
}

struct FnvHasher(u64);

impl Hasher for FnvHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}
