use std::net::Ipv4Addr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{EventKind, Network};
use crate::agent::{self, AgentState};
use crate::controlplane::{BgpMessage, BgpProcess, Effects};
use crate::dataplane::{DataPlane, ForwardingDecision};
use crate::netmodel::{
    Body, Endpoint, LinkId, NodeId, Packet, Prefix, Protocol, StaticRoute, SwitchConfig, SwitchId,
    CPU_PORT,
};

pub const BGP_PORT: u16 = 179;

#[derive(Debug, Clone)]
pub struct SwitchNode {
    pub id: SwitchId,
    pub cfg: SwitchConfig,
    pub dp: DataPlane,
    pub bgp: BgpProcess,
    pub agent: AgentState,
    /// Static routes installed at run time by the agent.
    pub extra_statics: Vec<StaticRoute>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CaptureDirection {
    Sent,
    Received,
}

/// Rewrites every update for `target` to its sibling prefix.
fn mangle(msg: &BgpMessage, target: Prefix) -> BgpMessage {
    match msg {
        BgpMessage::Update(us) => BgpMessage::Update(
            us.iter()
                .map(|u| {
                    let mut u = u.clone();
                    if u.prefix == target {
                        u.prefix = target.sibling();
                    }
                    u
                })
                .collect(),
        ),
        other => other.clone(),
    }
}

impl Network {
    pub(super) fn switch_receive(
        &mut self,
        s: SwitchId,
        iface: u8,
        mut pkt: Packet,
        background: bool,
    ) {
        let now = self.now;
        if pkt.protocol == Protocol::Marker {
            let sw = &self.switches[s.index()];
            if sw.cfg.interfaces.iter().any(|i| i.ip == pkt.dst_ip) {
                agent::on_marker(self, s, iface, pkt);
                return;
            }
        }
        let out = self.switches[s.index()].dp.ingress(&mut pkt, iface, now);
        if let Some(t) = out.trigger {
            agent::on_trigger(self, s, t);
        }
        if let Some(m) = out.mirror {
            agent::on_mirror(self, s, m);
        }
        match out.decision {
            ForwardingDecision::Forward {
                iface: egress,
                next_hop_mac,
            } => {
                if let Some(h) = self.hooks.switch_silent_drop.get_mut(&s) {
                    if h.fires(&pkt) {
                        self.losses.silent_switch_drops += 1;
                        return;
                    }
                }
                let at = now + self.config.pipeline_delay;
                self.schedule(
                    at,
                    background,
                    EventKind::Egress {
                        switch: s,
                        iface: egress,
                        next_hop_mac,
                        pkt,
                    },
                );
            }
            ForwardingDecision::Drop(_) => self.losses.deliberate_drops += 1,
            ForwardingDecision::ToCpu(_) => self.deliver_local(s, iface, pkt),
        }
    }

    fn deliver_local(&mut self, s: SwitchId, iface: u8, pkt: Packet) {
        match &pkt.body {
            Body::Bgp(msg) if pkt.protocol == Protocol::Bgp => {
                let Some(NodeId::Switch(peer)) = self.model.owner_of(pkt.src_ip) else {
                    return;
                };
                let msg = Arc::clone(msg);
                self.bgp_inbound(s, peer, &msg);
            }
            Body::Mgmt(_) if pkt.protocol == Protocol::Mgmt => agent::on_mgmt(self, s, iface, pkt),
            _ => {}
        }
    }

    fn bgp_inbound(&mut self, s: SwitchId, peer: SwitchId, msg: &BgpMessage) {
        if !self.switches[s.index()].bgp.sessions.contains_key(&peer) {
            return;
        }
        agent::on_bgp_capture(self, s, CaptureDirection::Received, peer, msg);
        if self.hooks.bgp_blocked(s, peer) {
            self.losses.bgp_blocked += 1;
            return;
        }
        let msg = match self.hooks.bgp_ingress_mangle.get(&(s, peer)) {
            Some(&p) => mangle(msg, p),
            None => msg.clone(),
        };
        let now = self.now;
        let fx = self.switches[s.index()].bgp.receive(now, peer, &msg);
        self.apply_bgp_effects(s, fx);
    }

    /// Sends BGP output, applying block, mangle and capture hooks in that
    /// order, and refreshes the FIB if the RIB moved.
    pub fn apply_bgp_effects(&mut self, s: SwitchId, fx: Effects) {
        for o in fx.out {
            if self.hooks.bgp_blocked(s, o.peer) {
                self.losses.bgp_blocked += 1;
                continue;
            }
            let msg = match self.hooks.bgp_egress_mangle.get(&(s, o.peer)) {
                Some(&p) => mangle(&o.msg, p),
                None => o.msg,
            };
            agent::on_bgp_capture(self, s, CaptureDirection::Sent, o.peer, &msg);
            let sw = &self.switches[s.index()];
            let Some(sess) = sw.bgp.sessions.get(&o.peer) else {
                continue;
            };
            let Some(intf) = sw.cfg.interface(sess.local_iface) else {
                continue;
            };
            let pkt = Packet::new(intf.ip, intf.peer_ip, Protocol::Bgp)
                .with_ports(BGP_PORT, BGP_PORT)
                .with_ttl(1)
                .with_body(Body::Bgp(Arc::new(msg)));
            let iface = intf.index;
            self.switch_send_direct(s, iface, pkt, o.background);
        }
        for e in fx.errors {
            self.protocol_errors.push(format!("{s}: {e}"));
        }
        if !fx.rib_changed.is_empty() {
            self.reinstall_fib(s);
        }
    }

    pub(super) fn switch_egress(
        &mut self,
        s: SwitchId,
        iface: u8,
        next_hop_mac: u64,
        mut pkt: Packet,
        background: bool,
    ) {
        let now = self.now;
        let ttl_dec = self.hooks.ttl_decrement.get(&s).copied().unwrap_or(1);
        let flip = self
            .hooks
            .switch_payload_corruption
            .get_mut(&s)
            .and_then(|h| h.fires(&pkt).then(|| h.draw() | 1));
        if flip.is_some() {
            self.losses.payload_corruptions += 1;
        }
        let mirror =
            self.switches[s.index()]
                .dp
                .egress(&mut pkt, iface, next_hop_mac, ttl_dec, now, |p| {
                    if let Some(x) = flip {
                        p.payload_digest ^= x;
                    }
                });
        if let Some(m) = mirror {
            agent::on_mirror(self, s, m);
        }
        self.transmit(NodeId::Switch(s), iface, pkt, background);
    }

    /// Sends a CPU-originated packet out of `iface` without a route lookup.
    pub fn switch_send_direct(
        &mut self,
        s: SwitchId,
        iface: u8,
        mut pkt: Packet,
        background: bool,
    ) {
        let Some(intf) = self.switches[s.index()].cfg.interface(iface) else {
            return;
        };
        pkt.src_mac = intf.mac;
        pkt.dst_mac = intf.peer_mac;
        self.transmit(NodeId::Switch(s), iface, pkt, background);
    }

    /// Sends a CPU-originated packet along the switch's own FIB. Returns
    /// false when no route exists.
    pub fn switch_send_routed(&mut self, s: SwitchId, mut pkt: Packet, background: bool) -> bool {
        let sw = &self.switches[s.index()];
        let Some((iface, nh)) = sw.dp.route_local(pkt.dst_ip) else {
            self.losses.unroutable_cpu += 1;
            return false;
        };
        pkt.src_mac = sw.dp.iface_macs.get(&iface).copied().unwrap_or(0);
        pkt.dst_mac = nh;
        self.transmit(NodeId::Switch(s), iface, pkt, background);
        true
    }

    /// Injects a packet into the switch's ingress pipeline as if it had
    /// arrived on `iface`.
    pub fn inject_at_switch(&mut self, s: SwitchId, iface: u8, pkt: Packet) {
        let link = self
            .link_of(NodeId::Switch(s), iface)
            .unwrap_or(LinkId(u32::MAX));
        let iface = if link.0 == u32::MAX { CPU_PORT } else { iface };
        self.schedule(
            self.now,
            false,
            EventKind::Deliver {
                link,
                to: Endpoint {
                    node: NodeId::Switch(s),
                    iface,
                },
                pkt,
            },
        );
    }

    /// Interface of `s` that faces the host owning `ip`, if directly attached.
    pub fn host_facing_iface(&self, s: SwitchId, ip: Ipv4Addr) -> Option<u8> {
        let h = self.model.topology.host_by_ip(ip)?;
        (h.switch == s).then_some(h.iface)
    }
}
