use std::collections::{BTreeMap, VecDeque};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::netmodel::{HostId, LinkId, Packet, SimTime, SwitchId};

/// SplitMix64 finalizer, used to derive payload digests.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PingmeshConfig {
    pub interval: SimTime,
    pub loss_threshold: u32,
}

impl Default for PingmeshConfig {
    fn default() -> Self {
        PingmeshConfig {
            interval: SimTime::from_secs(1),
            loss_threshold: 3,
        }
    }
}

/// Emitted when a host sees `consecutive_losses` unanswered probes to `dst`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PingmeshReport {
    pub time: SimTime,
    pub src: HostId,
    pub dst: HostId,
    pub consecutive_losses: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PingmeshState {
    pub seq: u64,
    /// Last probe per destination and whether it was answered.
    pub outstanding: BTreeMap<HostId, (u64, bool)>,
    pub losses: BTreeMap<HostId, u32>,
    pub reported: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HostNode {
    pub id: HostId,
    pub ip: Ipv4Addr,
    /// Further addresses answered by this host.
    pub aliases: Vec<Ipv4Addr>,
    pub mac: u64,
    pub switch: SwitchId,
    pub gateway_mac: u64,
    pub link: LinkId,
    pub diagnosis: bool,
    /// Management traffic delivered to the diagnosis host.
    pub inbox: VecDeque<(SimTime, Packet)>,
    pub data_received: u64,
    pub corrupted_received: u64,
    pub echo_replies: u64,
    /// TTL used towards each destination; 64 when absent.
    pub ttl_budget: BTreeMap<Ipv4Addr, u8>,
    pub pingmesh: Option<PingmeshState>,
    pub next_ident: u16,
}

impl HostNode {
    pub fn owns(&self, ip: Ipv4Addr) -> bool {
        self.ip == ip || self.aliases.contains(&ip)
    }

    pub fn ttl_for(&self, dst: Ipv4Addr) -> u8 {
        self.ttl_budget.get(&dst).copied().unwrap_or(64)
    }

    pub fn take_ident(&mut self) -> u16 {
        let i = self.next_ident;
        self.next_ident = self.next_ident.wrapping_add(1);
        i
    }
}
