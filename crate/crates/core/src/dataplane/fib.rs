use std::collections::{BTreeMap, HashMap};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::netmodel::Prefix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RouteOrigin {
    Connected,
    Static,
    Bgp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FibEgress {
    Interface(u8),
    /// Addresses owned by the switch itself.
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FibEntry {
    pub prefix: Prefix,
    pub egress: FibEgress,
    pub next_hop_mac: u64,
    pub origin: RouteOrigin,
}

/// Prefix-unique forwarding table with longest-prefix-match lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fib {
    by_len: Vec<HashMap<u32, FibEntry>>,
    present: u64,
}

impl Default for Fib {
    fn default() -> Self {
        Fib {
            by_len: vec![HashMap::new(); 33],
            present: 0,
        }
    }
}

impl Fib {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces the entry for `entry.prefix`.
    pub fn insert(&mut self, entry: FibEntry) -> Option<FibEntry> {
        let len = entry.prefix.len() as usize;
        self.present |= 1 << len;
        self.by_len[len].insert(entry.prefix.bits(), entry)
    }

    pub fn remove(&mut self, prefix: &Prefix) -> Option<FibEntry> {
        let len = prefix.len() as usize;
        let out = self.by_len[len].remove(&prefix.bits());
        if self.by_len[len].is_empty() {
            self.present &= !(1 << len);
        }
        out
    }

    pub fn get(&self, prefix: &Prefix) -> Option<&FibEntry> {
        self.by_len[prefix.len() as usize].get(&prefix.bits())
    }

    pub fn lookup(&self, dst: Ipv4Addr) -> Option<&FibEntry> {
        lpm_lookup(self, dst)
    }

    pub fn len(&self) -> usize {
        self.by_len.iter().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.present == 0
    }

    /// Entries sorted by prefix.
    pub fn entries(&self) -> Vec<FibEntry> {
        let sorted: BTreeMap<Prefix, FibEntry> = self
            .by_len
            .iter()
            .flat_map(|m| m.values().map(|e| (e.prefix, *e)))
            .collect();
        sorted.into_values().collect()
    }
}

pub fn lpm_lookup(fib: &Fib, dst: Ipv4Addr) -> Option<&FibEntry> {
    let addr = u32::from(dst);
    let mut present = fib.present;
    while present != 0 {
        let len = 63 - present.leading_zeros() as usize;
        present &= !(1 << len);
        let mask = if len == 0 { 0 } else { u32::MAX << (32 - len) };
        if let Some(e) = fib.by_len[len].get(&(addr & mask)) {
            return Some(e);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(p: &str, iface: u8) -> FibEntry {
        FibEntry {
            prefix: p.parse().unwrap(),
            egress: FibEgress::Interface(iface),
            next_hop_mac: 0,
            origin: RouteOrigin::Bgp,
        }
    }

    #[test]
    fn longest_prefix_wins() {
        let mut fib = Fib::new();
        fib.insert(entry("10.0.0.0/8", 1));
        fib.insert(entry("10.1.0.0/16", 2));
        let hit = lpm_lookup(&fib, Ipv4Addr::new(10, 1, 2, 3)).unwrap();
        assert_eq!(hit.egress, FibEgress::Interface(2));
        let hit = lpm_lookup(&fib, Ipv4Addr::new(10, 2, 2, 3)).unwrap();
        assert_eq!(hit.egress, FibEgress::Interface(1));
    }

    #[test]
    fn empty_fib_misses() {
        assert!(lpm_lookup(&Fib::new(), Ipv4Addr::new(1, 2, 3, 4)).is_none());
    }

    #[test]
    fn default_route_and_removal() {
        let mut fib = Fib::new();
        fib.insert(entry("0.0.0.0/0", 9));
        fib.insert(entry("10.1.0.0/16", 2));
        fib.remove(&"10.1.0.0/16".parse().unwrap());
        assert_eq!(
            lpm_lookup(&fib, Ipv4Addr::new(10, 1, 0, 1)).unwrap().egress,
            FibEgress::Interface(9)
        );
        assert_eq!(fib.len(), 1);
    }

    fn linear_scan(entries: &[FibEntry], dst: Ipv4Addr) -> Option<FibEntry> {
        entries
            .iter()
            .filter(|e| e.prefix.contains(dst))
            .max_by_key(|e| e.prefix.len())
            .copied()
    }

    proptest! {
        #[test]
        fn agrees_with_linear_scan(
            raw in prop::collection::vec((any::<u32>(), 0u8..=32, 1u8..8), 50),
            probes in prop::collection::vec(any::<u32>(), 1000),
        ) {
            let mut fib = Fib::new();
            for (a, l, i) in &raw {
                // Bias addresses into a small space so prefixes overlap.
                let addr = Ipv4Addr::from(0x0a00_0000 | (a & 0x00ff_ffff));
                fib.insert(FibEntry {
                    prefix: Prefix::new(addr, *l),
                    egress: FibEgress::Interface(*i),
                    next_hop_mac: 0,
                    origin: RouteOrigin::Bgp,
                });
            }
            let entries = fib.entries();
            for p in probes {
                let dst = Ipv4Addr::from(0x0a00_0000 | (p & 0x00ff_ffff));
                prop_assert_eq!(lpm_lookup(&fib, dst).copied(), linear_scan(&entries, dst));
            }
        }
    }
}
