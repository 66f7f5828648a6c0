use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::acl::acl_eval;
use super::counters::Counters;
use super::fib::{Fib, FibEgress};
use super::headerlog::{HeaderLogs, LoggedHeader, DEFAULT_LOG_CAPACITY};
use crate::netmodel::{AclAction, AclRule, FlowSpec, Packet, SimTime, SwitchId, MIRROR_DSCP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DropReason {
    NoFibEntry,
    AclDeny,
    ZeroTtl,
    BadHeaderChecksum,
    /// Reserved; never produced.
    Congestion,
    SilentInjected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CpuReason {
    LocalAddress,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ForwardingDecision {
    Forward { iface: u8, next_hop_mac: u64 },
    Drop(DropReason),
    ToCpu(CpuReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerConfig {
    pub drop_ratio_threshold: f64,
    pub min_traced_per_window: u64,
    pub window_len: SimTime,
    pub suppress: bool,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        TriggerConfig {
            drop_ratio_threshold: 0.2,
            min_traced_per_window: 5,
            window_len: SimTime::from_millis(200),
            suppress: false,
        }
    }
}

pub fn check_fault_trigger(arrived: u64, dropped: u64, cfg: &TriggerConfig) -> bool {
    !cfg.suppress
        && arrived >= cfg.min_traced_per_window
        && arrived > 0
        && dropped as f64 / arrived as f64 >= cfg.drop_ratio_threshold
}

/// Context captured when the fault trigger fires.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerEvent {
    pub time: SimTime,
    pub ingress_iface: u8,
    pub reason: DropReason,
    pub window: u64,
    pub arrived: u64,
    pub dropped: u64,
    pub sample: LoggedHeader,
}

/// One mirrored packet as seen by a switch: payload digest on entry and, if
/// it left the switch, on exit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MirrorRecord {
    pub switch: SwitchId,
    pub time: SimTime,
    pub ident: u16,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub ingress_iface: u8,
    pub ingress_digest: u64,
    pub ingress_intact: bool,
    pub egress_iface: Option<u8>,
    pub egress_digest: Option<u64>,
    pub egress_intact: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngressOutcome {
    pub decision: ForwardingDecision,
    pub traced: bool,
    pub trigger: Option<TriggerEvent>,
    pub mirror: Option<MirrorRecord>,
}

/// Per-switch forwarding tables and diagnosis instrumentation.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPlane {
    pub switch: SwitchId,
    pub fib: Fib,
    pub acl: Vec<AclRule>,
    pub local_addrs: BTreeSet<Ipv4Addr>,
    pub iface_macs: BTreeMap<u8, u64>,
    pub trace_filters: Vec<FlowSpec>,
    /// Fault hook: matching packets that would be forwarded are dropped as
    /// if no FIB entry existed.
    pub forced_drops: Vec<FlowSpec>,
    pub counters: Counters,
    pub logs: HeaderLogs,
    pub trigger: TriggerConfig,
    pub pipeline_delay: SimTime,
}

/// Rewrites link-layer addresses and decrements TTL, then recomputes the
/// header checksum. Payload, trace bit and DSCP are untouched.
pub fn transform_header(pkt: &mut Packet, egress_mac: u64, next_hop_mac: u64, ttl_decrement: u8) {
    pkt.src_mac = egress_mac;
    pkt.dst_mac = next_hop_mac;
    pkt.ttl = pkt.ttl.saturating_sub(ttl_decrement);
    pkt.refresh_checksum();
}

impl DataPlane {
    pub fn new(switch: SwitchId, trigger: TriggerConfig, pipeline_delay: SimTime) -> Self {
        DataPlane {
            switch,
            fib: Fib::new(),
            acl: Vec::new(),
            local_addrs: BTreeSet::new(),
            iface_macs: BTreeMap::new(),
            trace_filters: Vec::new(),
            forced_drops: Vec::new(),
            counters: Counters::new(trigger.window_len),
            logs: HeaderLogs::new(DEFAULT_LOG_CAPACITY),
            trigger,
            pipeline_delay,
        }
    }

    fn decide(&self, pkt: &Packet, checksum_ok: bool) -> ForwardingDecision {
        if !checksum_ok {
            return ForwardingDecision::Drop(DropReason::BadHeaderChecksum);
        }
        if acl_eval(&self.acl, pkt) == AclAction::Deny {
            return ForwardingDecision::Drop(DropReason::AclDeny);
        }
        let local = self.local_addrs.contains(&pkt.dst_ip);
        if pkt.ttl == 0 && !local {
            return ForwardingDecision::Drop(DropReason::ZeroTtl);
        }
        match self.fib.lookup(pkt.dst_ip) {
            None => ForwardingDecision::Drop(DropReason::NoFibEntry),
            Some(e) => match e.egress {
                FibEgress::Local => ForwardingDecision::ToCpu(CpuReason::LocalAddress),
                FibEgress::Interface(_) if local => {
                    ForwardingDecision::ToCpu(CpuReason::LocalAddress)
                }
                FibEgress::Interface(_)
                    if pkt.protocol.is_data()
                        && self.forced_drops.iter().any(|f| f.matches(pkt)) =>
                {
                    ForwardingDecision::Drop(DropReason::NoFibEntry)
                }
                FibEgress::Interface(iface) => ForwardingDecision::Forward {
                    iface,
                    next_hop_mac: e.next_hop_mac,
                },
            },
        }
    }

    /// Ingress stage: trace filter, traced counters and logs, forwarding
    /// decision, drop accounting and trigger evaluation.
    pub fn ingress(&mut self, pkt: &mut Packet, ingress: u8, now: SimTime) -> IngressOutcome {
        pkt.ingress_ts = Some(now);
        pkt.ingress_port = ingress;
        pkt.ingress_digest = pkt.payload_digest;
        pkt.ingress_intact = pkt.payload_intact();

        let checksum_ok = pkt.checksum_ok();
        if checksum_ok && !pkt.trace && self.trace_filters.iter().any(|f| f.matches(pkt)) {
            pkt.trace = true;
            pkt.refresh_checksum();
        }
        let traced = pkt.trace;
        let w = self.counters.window_of(now);
        if traced {
            self.counters.port(ingress).ingress.add(w);
            self.logs.ingress(ingress, LoggedHeader::of(pkt, now, None));
        }

        let decision = self.decide(pkt, checksum_ok);
        let mut trigger = None;
        let mut mirror = None;
        match decision {
            ForwardingDecision::Drop(reason) => {
                if traced {
                    if let Some(c) = self.counters.port(ingress).drops.counter_mut(reason) {
                        c.add(w);
                    }
                    let sample = LoggedHeader::of(pkt, now, Some(reason));
                    self.logs.dropped(ingress, sample.clone());
                    trigger = self.evaluate_trigger(ingress, reason, w, now, sample);
                }
                if pkt.dscp == MIRROR_DSCP && checksum_ok {
                    mirror = Some(self.mirror_record(pkt, now, None));
                }
            }
            ForwardingDecision::ToCpu(_) => {
                if traced {
                    self.counters.port(ingress).local.add(w);
                }
            }
            ForwardingDecision::Forward { .. } => {}
        }
        IngressOutcome {
            decision,
            traced,
            trigger,
            mirror,
        }
    }

    fn evaluate_trigger(
        &mut self,
        iface: u8,
        reason: DropReason,
        w: u64,
        now: SimTime,
        sample: LoggedHeader,
    ) -> Option<TriggerEvent> {
        let windows = if w > 0 { vec![w, w - 1] } else { vec![w] };
        for win in windows {
            let (arrived, dropped) = self.counters.arrivals_and_drops(win);
            if check_fault_trigger(arrived, dropped, &self.trigger) {
                self.trigger.suppress = true;
                return Some(TriggerEvent {
                    time: now,
                    ingress_iface: iface,
                    reason,
                    window: win,
                    arrived,
                    dropped,
                    sample,
                });
            }
        }
        None
    }

    fn mirror_record(&self, pkt: &Packet, now: SimTime, egress: Option<u8>) -> MirrorRecord {
        MirrorRecord {
            switch: self.switch,
            time: now,
            ident: pkt.ident,
            src: pkt.src_ip,
            dst: pkt.dst_ip,
            ingress_iface: pkt.ingress_port,
            ingress_digest: pkt.ingress_digest,
            ingress_intact: pkt.ingress_intact,
            egress_iface: egress,
            egress_digest: egress.map(|_| pkt.payload_digest),
            egress_intact: egress.map(|_| pkt.payload_intact()),
        }
    }

    /// Egress stage for a forwarded packet. `mutate` runs after the header
    /// rewrite and before egress accounting; it models in-switch corruption.
    pub fn egress(
        &mut self,
        pkt: &mut Packet,
        iface: u8,
        next_hop_mac: u64,
        ttl_decrement: u8,
        now: SimTime,
        mutate: impl FnOnce(&mut Packet),
    ) -> Option<MirrorRecord> {
        let mac = self.iface_macs.get(&iface).copied().unwrap_or(0);
        transform_header(pkt, mac, next_hop_mac, ttl_decrement);
        mutate(pkt);
        if pkt.trace {
            let w = self.counters.window_of(pkt.ingress_ts.unwrap_or(now));
            self.counters.port(iface).egress.add(w);
            self.logs.egress(iface, LoggedHeader::of(pkt, now, None));
        }
        (pkt.dscp == MIRROR_DSCP).then(|| self.mirror_record(pkt, now, Some(iface)))
    }

    /// Route lookup for packets originated by the switch CPU.
    pub fn route_local(&self, dst: Ipv4Addr) -> Option<(u8, u64)> {
        match self.fib.lookup(dst)?.egress {
            FibEgress::Interface(i) => Some((i, self.fib.lookup(dst)?.next_hop_mac)),
            FibEgress::Local => None,
        }
    }

    /// Cumulative traced ingress count on an interface.
    pub fn ingress_total(&self, iface: u8) -> u64 {
        self.counters
            .ports
            .get(&iface)
            .map_or(0, |p| p.ingress.total)
    }

    /// Cumulative traced egress count on an interface.
    pub fn egress_total(&self, iface: u8) -> u64 {
        self.counters
            .ports
            .get(&iface)
            .map_or(0, |p| p.egress.total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataplane::fib::{FibEntry, RouteOrigin};
    use crate::netmodel::{Prefix, Protocol};

    fn dp() -> DataPlane {
        let mut d = DataPlane::new(SwitchId(1), TriggerConfig::default(), SimTime(5));
        d.iface_macs.insert(1, 0xa1);
        d.iface_macs.insert(2, 0xa2);
        d.fib.insert(FibEntry {
            prefix: "10.3.0.0/16".parse().unwrap(),
            egress: FibEgress::Interface(2),
            next_hop_mac: 0xb2,
            origin: RouteOrigin::Bgp,
        });
        let lo = Ipv4Addr::new(10, 255, 0, 1);
        d.local_addrs.insert(lo);
        d.fib.insert(FibEntry {
            prefix: Prefix::host(lo),
            egress: FibEgress::Local,
            next_hop_mac: 0,
            origin: RouteOrigin::Connected,
        });
        d.trace_filters.push(FlowSpec::any());
        d
    }

    fn pkt(dst: Ipv4Addr, ttl: u8) -> Packet {
        Packet::new(Ipv4Addr::new(10, 1, 0, 10), dst, Protocol::Udp).with_ttl(ttl)
    }

    #[test]
    fn happy_path_counts_both_sides() {
        let mut d = dp();
        let mut p = pkt(Ipv4Addr::new(10, 3, 0, 10), 5);
        let out = d.ingress(&mut p, 1, SimTime(100));
        assert_eq!(
            out.decision,
            ForwardingDecision::Forward {
                iface: 2,
                next_hop_mac: 0xb2
            }
        );
        d.egress(&mut p, 2, 0xb2, 1, SimTime(105), |_| {});
        assert_eq!(d.ingress_total(1), 1);
        assert_eq!(d.egress_total(2), 1);
        assert_eq!(p.ttl, 4);
        assert!(p.checksum_ok());
        assert_eq!((p.src_mac, p.dst_mac), (0xa2, 0xb2));
    }

    #[test]
    fn no_fib_drop_is_logged() {
        let mut d = dp();
        let mut p = pkt(Ipv4Addr::new(10, 9, 0, 1), 5);
        let out = d.ingress(&mut p, 1, SimTime(100));
        assert_eq!(
            out.decision,
            ForwardingDecision::Drop(DropReason::NoFibEntry)
        );
        assert_eq!(d.counters.ports[&1].drops.no_fib.total, 1);
        let log = &d.logs.ports[&1].ingress_dropped;
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].reason, Some(DropReason::NoFibEntry));
    }

    #[test]
    fn precedence_checksum_acl_ttl_fib() {
        let mut d = dp();
        d.acl.push(AclRule {
            pattern: FlowSpec::any(),
            action: AclAction::Deny,
        });
        // Bad checksum and ACL deny and ttl 0 and no route.
        let mut p = pkt(Ipv4Addr::new(10, 9, 0, 1), 0);
        p.header_checksum ^= 1;
        assert_eq!(
            d.ingress(&mut p, 1, SimTime(0)).decision,
            ForwardingDecision::Drop(DropReason::BadHeaderChecksum)
        );
        let mut p = pkt(Ipv4Addr::new(10, 9, 0, 1), 0);
        assert_eq!(
            d.ingress(&mut p, 1, SimTime(0)).decision,
            ForwardingDecision::Drop(DropReason::AclDeny)
        );
        d.acl.clear();
        let mut p = pkt(Ipv4Addr::new(10, 9, 0, 1), 0);
        assert_eq!(
            d.ingress(&mut p, 1, SimTime(0)).decision,
            ForwardingDecision::Drop(DropReason::ZeroTtl)
        );
        let mut p = pkt(Ipv4Addr::new(10, 9, 0, 1), 1);
        assert_eq!(
            d.ingress(&mut p, 1, SimTime(0)).decision,
            ForwardingDecision::Drop(DropReason::NoFibEntry)
        );
    }

    #[test]
    fn zero_ttl_local_delivery_exempt() {
        let mut d = dp();
        let mut p = pkt(Ipv4Addr::new(10, 255, 0, 1), 0);
        assert_eq!(
            d.ingress(&mut p, 1, SimTime(0)).decision,
            ForwardingDecision::ToCpu(CpuReason::LocalAddress)
        );
    }

    #[test]
    fn transform_is_not_idempotent() {
        let mut a = pkt(Ipv4Addr::new(10, 3, 0, 1), 64);
        transform_header(&mut a, 1, 2, 1);
        assert_eq!(a.ttl, 63);
        assert!(a.checksum_ok());
        let mut b = a.clone();
        transform_header(&mut b, 1, 2, 1);
        assert_eq!(a.ttl - b.ttl, 1);
    }

    #[test]
    fn trigger_rules() {
        let cfg = TriggerConfig {
            drop_ratio_threshold: 0.5,
            ..TriggerConfig::default()
        };
        assert!(!check_fault_trigger(1, 1, &cfg));
        assert!(check_fault_trigger(10, 9, &cfg));
        let suppressed = TriggerConfig {
            suppress: true,
            ..cfg
        };
        assert!(!check_fault_trigger(100, 100, &suppressed));
    }

    #[test]
    fn mirror_requires_dscp() {
        let mut d = dp();
        let mut p = pkt(Ipv4Addr::new(10, 3, 0, 1), 9).with_dscp(MIRROR_DSCP);
        d.ingress(&mut p, 1, SimTime(0));
        let rec = d.egress(&mut p, 2, 0xb2, 1, SimTime(5), |_| {}).unwrap();
        assert_eq!(rec.egress_digest, Some(rec.ingress_digest));
        let mut q = pkt(Ipv4Addr::new(10, 3, 0, 1), 9);
        d.ingress(&mut q, 1, SimTime(0));
        assert!(d.egress(&mut q, 2, 0xb2, 1, SimTime(5), |_| {}).is_none());
    }

    #[test]
    fn payload_survives_ten_hops() {
        let mut p = pkt(Ipv4Addr::new(10, 3, 0, 1), 64).with_payload(0xfeed);
        for _ in 0..10 {
            let mut d = dp();
            d.ingress(&mut p, 1, SimTime(0));
            d.egress(&mut p, 2, 0xb2, 1, SimTime(5), |_| {});
        }
        assert_eq!(p.payload_digest, 0xfeed);
        assert!(p.payload_intact());
    }
}
