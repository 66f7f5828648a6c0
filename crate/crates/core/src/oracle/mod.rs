//! Configuration analysis: the fault-free routing and forwarding state of a
//! network, derived from the model alone by a declarative route fixpoint.
//! Shares data types with the control plane but none of its code.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::Ipv4Addr;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controlplane::{Advert, RibEntry, RouteSource};
use crate::dataplane::{FibEgress, FibEntry, RouteOrigin};
use crate::netmodel::{
    AclAction, AdvertiseScope, AsNumber, FlowSpec, HostId, NetworkModel, NodeId, Packet,
    PolicyAction, Prefix, SessionKind, SwitchConfig, SwitchId,
};
use crate::simkernel::Network;

const DEFAULT_PREF: u32 = 100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("unknown switch {0}")]
    UnknownSwitch(SwitchId),
    #[error("unknown host {0}")]
    UnknownHost(HostId),
    #[error("route propagation did not settle after {0} rounds")]
    NonConvergence(usize),
    #[error("flow has no concrete source and destination")]
    AbstractFlow,
}

/// Expected tables of one switch.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedSwitch {
    pub rib_in: BTreeMap<SwitchId, BTreeMap<Prefix, RibEntry>>,
    pub rib: BTreeMap<Prefix, RibEntry>,
    pub rib_out: BTreeMap<SwitchId, BTreeMap<Prefix, Advert>>,
    /// Sorted by prefix.
    pub fib: Vec<FibEntry>,
}

#[derive(Debug, Clone)]
pub struct ExpectedState {
    pub fingerprint: u64,
    pub rounds: usize,
    pub switches: BTreeMap<SwitchId, ExpectedSwitch>,
    model: Arc<NetworkModel>,
}

/// Sessions that come up: configured on both ends.
fn live_sessions(model: &NetworkModel, s: SwitchId) -> Vec<SwitchId> {
    model
        .config(s)
        .bgp_sessions
        .iter()
        .filter(|x| {
            model
                .configs
                .get(&x.peer)
                .is_some_and(|p| p.session(s).is_some())
        })
        .map(|x| x.peer)
        .collect()
}

fn preference(r: &RibEntry, own: AsNumber) -> impl Ord {
    let external_len = match r.as_path.first() {
        Some(&a) if a == own => r.as_path.len() - 1,
        _ => r.as_path.len(),
    };
    (
        r.source != RouteSource::Originated,
        Reverse(r.local_pref),
        external_len,
        !r.ebgp,
        r.next_hop,
    )
}

fn import(cfg: &SwitchConfig, peer: SwitchId, prefix: Prefix, a: &Advert) -> Option<RibEntry> {
    let sess = cfg.session(peer)?;
    if a.as_path.is_empty() {
        return None;
    }
    let ebgp = sess.kind == SessionKind::Ebgp;
    if ebgp && a.as_path.contains(&cfg.asn) {
        return None;
    }
    let local_pref = match sess.policy_in.evaluate(&prefix, &a.as_path) {
        PolicyAction::Reject => return None,
        PolicyAction::SetLocalPref(v) => v,
        PolicyAction::Accept if ebgp => DEFAULT_PREF,
        PolicyAction::Accept => a.local_pref_hint.unwrap_or(DEFAULT_PREF),
    };
    Some(RibEntry {
        prefix,
        next_hop: Some(peer),
        as_path: a.as_path.clone(),
        local_pref,
        source: RouteSource::Session(peer),
        ebgp,
    })
}

fn export(cfg: &SwitchConfig, to: SwitchId, r: &RibEntry) -> Option<Advert> {
    let sess = cfg.session(to)?;
    let learned_from = match r.source {
        RouteSource::Session(p) => Some(p),
        RouteSource::Originated => None,
    };
    if learned_from == Some(to) {
        return None;
    }
    let from_internal = learned_from
        .and_then(|p| cfg.session(p))
        .is_some_and(|x| x.kind == SessionKind::Ibgp);
    if sess.kind == SessionKind::Ibgp && from_internal {
        return None;
    }
    if sess.policy_out.scope == AdvertiseScope::OwnAsOnly && r.as_path != [cfg.asn] {
        return None;
    }
    let pref = match sess.policy_out.evaluate(&r.prefix, &r.as_path) {
        PolicyAction::Reject => return None,
        PolicyAction::SetLocalPref(v) => v,
        PolicyAction::Accept => r.local_pref,
    };
    Some(match sess.kind {
        SessionKind::Ibgp => Advert {
            as_path: r.as_path.clone(),
            local_pref_hint: Some(pref),
        },
        SessionKind::Ebgp => {
            let mut as_path = r.as_path.clone();
            if as_path.first() != Some(&cfg.asn) {
                as_path.insert(0, cfg.asn);
            }
            Advert {
                as_path,
                local_pref_hint: None,
            }
        }
    })
}

fn derive_fib(cfg: &SwitchConfig, rib: &BTreeMap<Prefix, RibEntry>) -> Vec<FibEntry> {
    let mut fib: BTreeMap<Prefix, FibEntry> = BTreeMap::new();
    let mut put = |prefix: Prefix, egress: FibEgress, mac: u64, origin: RouteOrigin| {
        fib.entry(prefix).or_insert(FibEntry {
            prefix,
            egress,
            next_hop_mac: mac,
            origin,
        });
    };
    let mut own = vec![cfg.loopback, cfg.secondary];
    own.extend(cfg.interfaces.iter().map(|i| i.ip));
    for ip in own {
        put(
            Prefix::host(ip),
            FibEgress::Local,
            0,
            RouteOrigin::Connected,
        );
    }
    for i in &cfg.interfaces {
        put(
            Prefix::new(i.ip, i.prefix_len),
            FibEgress::Interface(i.index),
            i.peer_mac,
            RouteOrigin::Connected,
        );
    }
    for r in &cfg.static_routes {
        if let Some(i) = cfg.interface(r.iface) {
            put(
                r.prefix,
                FibEgress::Interface(i.index),
                i.peer_mac,
                RouteOrigin::Static,
            );
        }
    }
    for r in rib.values() {
        let Some(nh) = r.next_hop else { continue };
        if let Some(i) = cfg
            .interfaces
            .iter()
            .find(|i| i.peer.node == NodeId::Switch(nh))
        {
            put(
                r.prefix,
                FibEgress::Interface(i.index),
                i.peer_mac,
                RouteOrigin::Bgp,
            );
        }
    }
    fib.into_values().collect()
}

/// Longest-prefix match over a prefix-sorted entry list.
fn lookup(fib: &[FibEntry], dst: Ipv4Addr) -> Option<&FibEntry> {
    fib.iter()
        .filter(|e| e.prefix.contains(dst))
        .max_by_key(|e| e.prefix.len())
}

impl ExpectedState {
    pub fn compute(model: Arc<NetworkModel>) -> Result<Self, OracleError> {
        let ids: Vec<SwitchId> = model.configs.keys().copied().collect();
        let sessions: BTreeMap<SwitchId, Vec<SwitchId>> =
            ids.iter().map(|&s| (s, live_sessions(&model, s))).collect();
        let mut st: BTreeMap<SwitchId, ExpectedSwitch> = ids
            .iter()
            .map(|&s| (s, ExpectedSwitch::default()))
            .collect();
        let max_rounds = 4 * ids.len() + 32;
        let mut rounds = 0;
        loop {
            rounds += 1;
            if rounds > max_rounds {
                return Err(OracleError::NonConvergence(max_rounds));
            }
            let mut changed = false;
            for &s in &ids {
                let cfg = model.config(s);
                let mut rib_in: BTreeMap<SwitchId, BTreeMap<Prefix, RibEntry>> = BTreeMap::new();
                for &p in &sessions[&s] {
                    let offered = st[&p].rib_out.get(&s);
                    let table: BTreeMap<Prefix, RibEntry> = offered
                        .into_iter()
                        .flatten()
                        .filter_map(|(pfx, a)| import(cfg, p, *pfx, a).map(|e| (*pfx, e)))
                        .collect();
                    if !table.is_empty() {
                        rib_in.insert(p, table);
                    }
                }
                let mut cands: BTreeMap<Prefix, Vec<RibEntry>> = BTreeMap::new();
                for pfx in &cfg.originated {
                    cands.entry(*pfx).or_default().push(RibEntry {
                        prefix: *pfx,
                        next_hop: None,
                        as_path: vec![cfg.asn],
                        local_pref: DEFAULT_PREF,
                        source: RouteSource::Originated,
                        ebgp: false,
                    });
                }
                for e in rib_in.values().flat_map(|t| t.values()) {
                    cands.entry(e.prefix).or_default().push(e.clone());
                }
                let rib: BTreeMap<Prefix, RibEntry> = cands
                    .into_iter()
                    .filter_map(|(p, c)| {
                        c.into_iter()
                            .min_by_key(|r| preference(r, cfg.asn))
                            .map(|r| (p, r))
                    })
                    .collect();
                let rib_out: BTreeMap<SwitchId, BTreeMap<Prefix, Advert>> = sessions[&s]
                    .iter()
                    .map(|&q| {
                        let t: BTreeMap<Prefix, Advert> = rib
                            .values()
                            .filter_map(|r| export(cfg, q, r).map(|a| (r.prefix, a)))
                            .collect();
                        (q, t)
                    })
                    .filter(|(_, t)| !t.is_empty())
                    .collect();
                let cur = st.get_mut(&s).expect("every switch has state");
                if cur.rib_in != rib_in || cur.rib != rib || cur.rib_out != rib_out {
                    changed = true;
                    cur.rib_in = rib_in;
                    cur.rib = rib;
                    cur.rib_out = rib_out;
                }
            }
            if !changed {
                break;
            }
        }
        for (s, x) in st.iter_mut() {
            x.fib = derive_fib(model.config(*s), &x.rib);
        }
        Ok(ExpectedState {
            fingerprint: model.fingerprint(),
            rounds,
            switches: st,
            model,
        })
    }

    pub fn model(&self) -> &Arc<NetworkModel> {
        &self.model
    }

    pub fn switch(&self, s: SwitchId) -> Result<&ExpectedSwitch, OracleError> {
        self.switches.get(&s).ok_or(OracleError::UnknownSwitch(s))
    }

    pub fn fib_lookup(&self, s: SwitchId, dst: Ipv4Addr) -> Result<Option<&FibEntry>, OracleError> {
        Ok(lookup(&self.switch(s)?.fib, dst))
    }

    /// Best expected route at `s` covering `dst`, by longest match.
    pub fn rib_lookup(&self, s: SwitchId, dst: Ipv4Addr) -> Result<Option<&RibEntry>, OracleError> {
        Ok(self
            .switch(s)?
            .rib
            .values()
            .filter(|e| e.prefix.contains(dst))
            .max_by_key(|e| e.prefix.len()))
    }

    /// Neighbors expected to advertise `prefix` to `s`.
    pub fn expected_advertisers(
        &self,
        prefix: Prefix,
        s: SwitchId,
    ) -> Result<BTreeSet<SwitchId>, OracleError> {
        self.switch(s)?;
        Ok(self
            .switches
            .iter()
            .filter(|(_, x)| x.rib_out.get(&s).is_some_and(|t| t.contains_key(&prefix)))
            .map(|(n, _)| *n)
            .collect())
    }

    /// Expected forwarding paths of a concrete flow. Forwarding is
    /// single-path, so the result holds at most one path; it is empty when
    /// the flow is dropped, looped or unroutable.
    pub fn flow_paths(&self, flow: &FlowSpec) -> Result<Vec<Vec<SwitchId>>, OracleError> {
        let pkt = flow.representative().ok_or(OracleError::AbstractFlow)?;
        let (start, from_host) = match self.model.owner_of(pkt.src_ip) {
            Some(NodeId::Host(h)) => (self.model.host(h).switch, true),
            Some(NodeId::Switch(s)) => (s, false),
            None => return Ok(Vec::new()),
        };
        Ok(self.walk(start, from_host, &pkt).into_iter().collect())
    }

    fn walk(&self, start: SwitchId, check_first_acl: bool, pkt: &Packet) -> Option<Vec<SwitchId>> {
        let mut path = Vec::new();
        let mut cur = start;
        let mut check_acl = check_first_acl;
        loop {
            if path.contains(&cur) {
                return None;
            }
            path.push(cur);
            let cfg = self.model.config(cur);
            if check_acl && crate::dataplane::acl_eval(&cfg.acl, pkt) == AclAction::Deny {
                return None;
            }
            check_acl = true;
            let owned = cfg.owns(pkt.dst_ip) || cfg.secondary == pkt.dst_ip;
            if owned {
                return Some(path);
            }
            let e = lookup(&self.switches[&cur].fib, pkt.dst_ip)?;
            let FibEgress::Interface(i) = e.egress else {
                return Some(path);
            };
            match cfg.interface(i)?.peer.node {
                NodeId::Switch(n) => cur = n,
                NodeId::Host(h) => {
                    let hd = self.model.host(h);
                    let reaches = hd.ip == pkt.dst_ip
                        || (hd.diagnosis && self.model.diag_secondary == pkt.dst_ip);
                    return reaches.then_some(path);
                }
            }
        }
    }

    pub fn expected_path(
        &self,
        src: HostId,
        dst: HostId,
    ) -> Result<Vec<Vec<SwitchId>>, OracleError> {
        let hosts = &self.model.topology.hosts;
        let s = hosts
            .get(src.index())
            .ok_or(OracleError::UnknownHost(src))?;
        let d = hosts
            .get(dst.index())
            .ok_or(OracleError::UnknownHost(dst))?;
        self.flow_paths(&FlowSpec::between(s.ip, d.ip))
    }

    /// Whether traffic of `flow` is expected to cross the hop `s2 → s1`.
    pub fn should_forward(
        &self,
        s2: SwitchId,
        s1: SwitchId,
        flow: &FlowSpec,
    ) -> Result<bool, OracleError> {
        self.switch(s2)?;
        self.switch(s1)?;
        Ok(self
            .flow_paths(flow)?
            .iter()
            .any(|p| p.windows(2).any(|w| w[0] == s2 && w[1] == s1)))
    }

    /// Differences between the expected tables and a live network.
    pub fn mismatches(&self, net: &Network) -> Vec<String> {
        let mut out = Vec::new();
        for (s, x) in &self.switches {
            let sw = net.switch(*s);
            let rib_in: BTreeMap<SwitchId, BTreeMap<Prefix, RibEntry>> = sw
                .bgp
                .rib_in
                .iter()
                .filter(|(_, t)| !t.is_empty())
                .map(|(p, t)| (*p, t.clone()))
                .collect();
            let rib_out: BTreeMap<SwitchId, BTreeMap<Prefix, Advert>> = sw
                .bgp
                .rib_out
                .iter()
                .filter(|(_, t)| !t.is_empty())
                .map(|(p, t)| (*p, t.clone()))
                .collect();
            if rib_in != x.rib_in {
                out.push(format!("{s}: RIB-in differs"));
            }
            if sw.bgp.rib != x.rib {
                let missing: Vec<_> = x
                    .rib
                    .keys()
                    .filter(|p| !sw.bgp.rib.contains_key(p))
                    .collect();
                out.push(format!("{s}: RIB differs (missing {missing:?})"));
            }
            if rib_out != x.rib_out {
                out.push(format!("{s}: RIB-out differs"));
            }
            if sw.dp.fib.entries() != x.fib {
                out.push(format!("{s}: FIB differs"));
            }
        }
        out
    }
}

fn cache() -> &'static Mutex<HashMap<u64, Arc<ExpectedState>>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<ExpectedState>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Expected state for `model`, memoized by model fingerprint.
pub fn expected_state(model: &Arc<NetworkModel>) -> Result<Arc<ExpectedState>, OracleError> {
    let fp = model.fingerprint();
    if let Some(s) = cache().lock().expect("oracle cache").get(&fp) {
        return Ok(Arc::clone(s));
    }
    let st = Arc::new(ExpectedState::compute(Arc::clone(model))?);
    cache()
        .lock()
        .expect("oracle cache")
        .insert(fp, Arc::clone(&st));
    Ok(st)
}

#[cfg(test)]
mod tests;
