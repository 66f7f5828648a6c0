use std::collections::{BTreeMap, VecDeque};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::DropReason;
use crate::netmodel::{Packet, Protocol, SimTime};

pub const DEFAULT_LOG_CAPACITY: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LoggedHeader {
    pub time: SimTime,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub protocol: Protocol,
    pub src_port: u16,
    pub dst_port: u16,
    pub ident: u16,
    pub ttl: u8,
    pub dscp: u8,
    pub checksum: u16,
    pub checksum_ok: bool,
    pub header_len: u8,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<DropReason>,
}

impl LoggedHeader {
    pub fn of(pkt: &Packet, time: SimTime, reason: Option<DropReason>) -> Self {
        LoggedHeader {
            time,
            src: pkt.src_ip,
            dst: pkt.dst_ip,
            protocol: pkt.protocol,
            src_port: pkt.src_port,
            dst_port: pkt.dst_port,
            ident: pkt.ident,
            ttl: pkt.ttl,
            dscp: pkt.dscp,
            checksum: pkt.header_checksum,
            checksum_ok: pkt.checksum_ok(),
            header_len: 20,
            reason,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PortLog {
    pub ingress_recent: VecDeque<LoggedHeader>,
    pub ingress_dropped: VecDeque<LoggedHeader>,
    pub egress_recent: VecDeque<LoggedHeader>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HeaderLogs {
    pub capacity: usize,
    pub ports: BTreeMap<u8, PortLog>,
}

fn push(ring: &mut VecDeque<LoggedHeader>, cap: usize, h: LoggedHeader) {
    if ring.len() == cap {
        ring.pop_front();
    }
    ring.push_back(h);
}

impl HeaderLogs {
    pub fn new(capacity: usize) -> Self {
        HeaderLogs {
            capacity: capacity.max(1),
            ports: BTreeMap::new(),
        }
    }

    pub fn ingress(&mut self, iface: u8, h: LoggedHeader) {
        let cap = self.capacity;
        push(
            &mut self.ports.entry(iface).or_default().ingress_recent,
            cap,
            h,
        );
    }

    pub fn dropped(&mut self, iface: u8, h: LoggedHeader) {
        let cap = self.capacity;
        push(
            &mut self.ports.entry(iface).or_default().ingress_dropped,
            cap,
            h,
        );
    }

    pub fn egress(&mut self, iface: u8, h: LoggedHeader) {
        let cap = self.capacity;
        push(
            &mut self.ports.entry(iface).or_default().egress_recent,
            cap,
            h,
        );
    }

    pub fn clear(&mut self) {
        self.ports.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_is_bounded_and_ordered() {
        let mut logs = HeaderLogs::new(4);
        let base = Packet::new(
            Ipv4Addr::new(1, 1, 1, 1),
            Ipv4Addr::new(2, 2, 2, 2),
            Protocol::Udp,
        );
        for i in 0..10u16 {
            let p = base.clone().with_ident(i);
            logs.ingress(1, LoggedHeader::of(&p, SimTime(u64::from(i)), None));
        }
        let ring = &logs.ports[&1].ingress_recent;
        assert_eq!(ring.len(), 4);
        let ids: Vec<u16> = ring.iter().map(|h| h.ident).collect();
        assert_eq!(ids, vec![6, 7, 8, 9]);
    }
}
