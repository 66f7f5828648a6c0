use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::rib::{best_path_select, RibEntry, RouteSource, DEFAULT_LOCAL_PREF};
use super::session::{BgpSessionState, SessionState, ACTIVE_OPEN_ATTEMPTS};
use crate::dataplane::{Fib, FibEgress, FibEntry, RouteOrigin};
use crate::netmodel::{
    AdvertiseScope, AsNumber, NodeId, PolicyAction, Prefix, SessionKind, SimTime, StaticRoute,
    SwitchConfig, SwitchId,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UpdateKind {
    Announce,
    Withdraw,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BgpUpdate {
    pub kind: UpdateKind,
    pub prefix: Prefix,
    pub as_path: Vec<AsNumber>,
    pub local_pref_hint: Option<u32>,
    pub sender: SwitchId,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BgpMessage {
    /// `established` tells the receiver the sender already considers the
    /// session up, so no OPEN needs to be echoed back.
    Open {
        asn: AsNumber,
        router: SwitchId,
        established: bool,
    },
    Keepalive,
    Update(Vec<BgpUpdate>),
    RouteRefresh,
}

impl BgpMessage {
    pub fn updates(&self) -> &[BgpUpdate] {
        match self {
            BgpMessage::Update(u) => u,
            _ => &[],
        }
    }

    /// Short human-readable form for event logs.
    pub fn summary(&self) -> String {
        match self {
            BgpMessage::Open { established, .. } => format!("open(up={established})"),
            BgpMessage::Keepalive => "keepalive".into(),
            BgpMessage::RouteRefresh => "refresh".into(),
            BgpMessage::Update(us) => {
                let parts: Vec<String> = us
                    .iter()
                    .map(|u| match u.kind {
                        UpdateKind::Announce => format!("+{}{:?}", u.prefix, u.as_path),
                        UpdateKind::Withdraw => format!("-{}", u.prefix),
                    })
                    .collect();
                format!("update[{}]", parts.join(","))
            }
        }
    }
}

/// Route as advertised to one peer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Advert {
    pub as_path: Vec<AsNumber>,
    pub local_pref_hint: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outbound {
    pub peer: SwitchId,
    pub msg: BgpMessage,
    /// Periodic traffic that does not hold off quiescence.
    pub background: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Effects {
    pub out: Vec<Outbound>,
    pub transitions: Vec<(SwitchId, SessionState, SessionState)>,
    pub rib_changed: BTreeSet<Prefix>,
    pub errors: Vec<String>,
}

impl Effects {
    pub fn merge(&mut self, other: Effects) {
        self.out.extend(other.out);
        self.transitions.extend(other.transitions);
        self.rib_changed.extend(other.rib_changed);
        self.errors.extend(other.errors);
    }
}

/// BGP-lite routing process of one switch.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BgpProcess {
    pub switch: SwitchId,
    pub asn: AsNumber,
    pub hold_time: SimTime,
    pub sessions: BTreeMap<SwitchId, BgpSessionState>,
    pub originated: BTreeSet<Prefix>,
    pub rib_in: BTreeMap<SwitchId, BTreeMap<Prefix, RibEntry>>,
    pub rib: BTreeMap<Prefix, RibEntry>,
    pub rib_out: BTreeMap<SwitchId, BTreeMap<Prefix, Advert>>,
    /// Prefixes kept out of the FIB regardless of the RIB.
    pub fib_suppressed: BTreeSet<Prefix>,
    pub rib_change_count: u64,
    pub session_flap_count: u64,
}

impl BgpProcess {
    pub fn new(cfg: &SwitchConfig, hold_time: SimTime) -> Self {
        let mut p = BgpProcess {
            switch: cfg.id,
            asn: cfg.asn,
            hold_time,
            sessions: cfg
                .bgp_sessions
                .iter()
                .map(|s| (s.peer, BgpSessionState::new(s, hold_time)))
                .collect(),
            originated: cfg.originated.iter().copied().collect(),
            rib_in: BTreeMap::new(),
            rib: BTreeMap::new(),
            rib_out: BTreeMap::new(),
            fib_suppressed: BTreeSet::new(),
            rib_change_count: 0,
            session_flap_count: 0,
        };
        let all: Vec<Prefix> = p.originated.iter().copied().collect();
        let mut fx = Effects::default();
        p.recompute(&all, &mut fx);
        p
    }

    pub fn keepalive_interval(&self) -> SimTime {
        SimTime((self.hold_time.0 / 3).max(1))
    }

    pub fn session_state(&self, peer: SwitchId) -> Option<SessionState> {
        self.sessions.get(&peer).map(|s| s.state)
    }

    fn transition(&mut self, peer: SwitchId, to: SessionState, fx: &mut Effects) {
        let s = self.sessions.get_mut(&peer).expect("known peer");
        let from = s.state;
        if from == to {
            return;
        }
        s.state = to;
        s.open_attempts = 0;
        if from == SessionState::Established || to == SessionState::Down {
            self.session_flap_count += 1;
        }
        fx.transitions.push((peer, from, to));
    }

    fn purge_peer(&mut self, peer: SwitchId, fx: &mut Effects) {
        self.rib_out.remove(&peer);
        if let Some(routes) = self.rib_in.remove(&peer) {
            let prefixes: Vec<Prefix> = routes.into_keys().collect();
            self.recompute(&prefixes, fx);
        }
    }

    /// Periodic session maintenance: keepalives, hold-timer expiry, OPEN retries.
    pub fn tick(&mut self, now: SimTime) -> Effects {
        let mut fx = Effects::default();
        let peers: Vec<SwitchId> = self.sessions.keys().copied().collect();
        for peer in peers {
            let s = &self.sessions[&peer];
            if s.established() {
                if s.hold_expired(now) {
                    self.transition(peer, SessionState::Down, &mut fx);
                    self.purge_peer(peer, &mut fx);
                } else {
                    fx.out.push(Outbound {
                        peer,
                        msg: BgpMessage::Keepalive,
                        background: true,
                    });
                }
                continue;
            }
            if s.state == SessionState::Idle {
                self.transition(peer, SessionState::Connecting, &mut fx);
            }
            let s = self.sessions.get_mut(&peer).expect("known peer");
            s.open_attempts += 1;
            let background = s.open_attempts > ACTIVE_OPEN_ATTEMPTS;
            fx.out.push(Outbound {
                peer,
                msg: BgpMessage::Open {
                    asn: self.asn,
                    router: self.switch,
                    established: false,
                },
                background,
            });
        }
        fx
    }

    pub fn receive(&mut self, now: SimTime, from: SwitchId, msg: &BgpMessage) -> Effects {
        let mut fx = Effects::default();
        let Some(s) = self.sessions.get_mut(&from) else {
            fx.errors
                .push(format!("{}: message from non-peer {from}", self.switch));
            return fx;
        };
        s.last_keepalive_rx = now;
        let established = s.established();
        match msg {
            BgpMessage::Open {
                established: peer_up,
                ..
            } => {
                if !established || !peer_up {
                    if established {
                        // The peer restarted its side; its view of us is gone.
                        self.purge_peer(from, &mut fx);
                    }
                    self.transition(from, SessionState::Established, &mut fx);
                    self.rib_out.remove(&from);
                    if !peer_up {
                        fx.out.push(Outbound {
                            peer: from,
                            msg: BgpMessage::Open {
                                asn: self.asn,
                                router: self.switch,
                                established: true,
                            },
                            background: false,
                        });
                    }
                    let all: Vec<Prefix> = self.rib.keys().copied().collect();
                    self.sync_peer(from, &all, &mut fx);
                }
            }
            BgpMessage::Keepalive => {}
            BgpMessage::RouteRefresh => {
                if established {
                    self.rib_out.remove(&from);
                    let all: Vec<Prefix> = self.rib.keys().copied().collect();
                    self.sync_peer(from, &all, &mut fx);
                }
            }
            BgpMessage::Update(updates) => {
                if !established {
                    fx.errors.push(format!(
                        "{}: update from {from} on non-established session ignored",
                        self.switch
                    ));
                    return fx;
                }
                let mut changed = Vec::new();
                for u in updates {
                    if let Some(p) = self.process_inbound_update(from, u) {
                        changed.push(p);
                    }
                }
                self.recompute(&changed, &mut fx);
            }
        }
        fx
    }

    /// Applies one update to the RIB-in; returns the prefix if the RIB-in changed.
    pub fn process_inbound_update(&mut self, peer: SwitchId, u: &BgpUpdate) -> Option<Prefix> {
        let sess = self.sessions.get(&peer)?;
        let mut accepted = None;
        if u.kind == UpdateKind::Announce && !u.as_path.is_empty() {
            let looped = sess.kind == SessionKind::Ebgp && u.as_path.contains(&self.asn);
            if !looped {
                let lp = match sess.policy_in.evaluate(&u.prefix, &u.as_path) {
                    PolicyAction::Reject => None,
                    PolicyAction::SetLocalPref(v) => Some(v),
                    PolicyAction::Accept => Some(match sess.kind {
                        SessionKind::Ibgp => u.local_pref_hint.unwrap_or(DEFAULT_LOCAL_PREF),
                        SessionKind::Ebgp => DEFAULT_LOCAL_PREF,
                    }),
                };
                accepted = lp.map(|local_pref| RibEntry {
                    prefix: u.prefix,
                    next_hop: Some(peer),
                    as_path: u.as_path.clone(),
                    local_pref,
                    source: RouteSource::Session(peer),
                    ebgp: sess.kind == SessionKind::Ebgp,
                });
            }
        }
        let table = self.rib_in.entry(peer).or_default();
        let before = table.get(&u.prefix).cloned();
        match accepted {
            Some(e) => {
                table.insert(u.prefix, e);
            }
            None => {
                table.remove(&u.prefix);
            }
        }
        (table.get(&u.prefix) != before.as_ref()).then_some(u.prefix)
    }

    fn candidates(&self, prefix: &Prefix) -> Vec<RibEntry> {
        let mut c: Vec<RibEntry> = self
            .rib_in
            .values()
            .filter_map(|t| t.get(prefix).cloned())
            .collect();
        if self.originated.contains(prefix) {
            c.push(RibEntry::originated(*prefix, self.asn));
        }
        c
    }

    fn recompute(&mut self, prefixes: &[Prefix], fx: &mut Effects) {
        let mut changed = Vec::new();
        for p in prefixes {
            let cands = self.candidates(p);
            let best = best_path_select(&cands, self.asn).cloned();
            if self.rib.get(p) != best.as_ref() {
                match best {
                    Some(b) => self.rib.insert(*p, b),
                    None => self.rib.remove(p),
                };
                self.rib_change_count += 1;
                fx.rib_changed.insert(*p);
                changed.push(*p);
            }
        }
        if changed.is_empty() {
            return;
        }
        let peers: Vec<SwitchId> = self
            .sessions
            .values()
            .filter(|s| s.established())
            .map(|s| s.peer)
            .collect();
        for peer in peers {
            self.sync_peer(peer, &changed, fx);
        }
    }

    /// What this switch should advertise to `peer` for its best route `r`.
    pub fn export(&self, peer: SwitchId, r: &RibEntry) -> Option<Advert> {
        let sess = self.sessions.get(&peer)?;
        if r.source == RouteSource::Session(peer) {
            return None;
        }
        if sess.kind == SessionKind::Ibgp {
            if let RouteSource::Session(src) = r.source {
                if self.sessions.get(&src).map(|s| s.kind) == Some(SessionKind::Ibgp) {
                    return None;
                }
            }
        }
        if sess.policy_out.scope == AdvertiseScope::OwnAsOnly && r.as_path != [self.asn] {
            return None;
        }
        let out_pref = match sess.policy_out.evaluate(&r.prefix, &r.as_path) {
            PolicyAction::Reject => return None,
            PolicyAction::SetLocalPref(v) => v,
            PolicyAction::Accept => r.local_pref,
        };
        Some(match sess.kind {
            SessionKind::Ibgp => Advert {
                as_path: r.as_path.clone(),
                local_pref_hint: Some(out_pref),
            },
            SessionKind::Ebgp => {
                let as_path = if r.as_path.first() == Some(&self.asn) {
                    r.as_path.clone()
                } else {
                    std::iter::once(self.asn)
                        .chain(r.as_path.iter().copied())
                        .collect()
                };
                Advert {
                    as_path,
                    local_pref_hint: None,
                }
            }
        })
    }

    fn sync_peer(&mut self, peer: SwitchId, prefixes: &[Prefix], fx: &mut Effects) {
        let mut updates = Vec::new();
        for p in prefixes {
            let desired = self.rib.get(p).and_then(|r| self.export(peer, r));
            let out = self.rib_out.entry(peer).or_default();
            if out.get(p) == desired.as_ref() {
                continue;
            }
            match desired {
                Some(a) => {
                    updates.push(BgpUpdate {
                        kind: UpdateKind::Announce,
                        prefix: *p,
                        as_path: a.as_path.clone(),
                        local_pref_hint: a.local_pref_hint,
                        sender: self.switch,
                    });
                    out.insert(*p, a);
                }
                None => {
                    out.remove(p);
                    updates.push(BgpUpdate {
                        kind: UpdateKind::Withdraw,
                        prefix: *p,
                        as_path: Vec::new(),
                        local_pref_hint: None,
                        sender: self.switch,
                    });
                }
            }
        }
        if !updates.is_empty() {
            fx.out.push(Outbound {
                peer,
                msg: BgpMessage::Update(updates),
                background: false,
            });
        }
    }

    pub fn originate(&mut self, prefix: Prefix) -> Effects {
        let mut fx = Effects::default();
        if self.originated.insert(prefix) {
            self.recompute(&[prefix], &mut fx);
        }
        fx
    }

    pub fn withdraw_origin(&mut self, prefix: Prefix) -> Effects {
        let mut fx = Effects::default();
        if self.originated.remove(&prefix) {
            self.recompute(&[prefix], &mut fx);
        }
        fx
    }

    /// Drops everything learned from and advertised to `peer`, then
    /// re-advertises the full table to it, as after a session restart.
    pub fn soft_reset(&mut self, peer: SwitchId) -> Effects {
        let mut fx = Effects::default();
        if !self.sessions.get(&peer).is_some_and(|s| s.established()) {
            return fx;
        }
        self.purge_peer(peer, &mut fx);
        let all: Vec<Prefix> = self.rib.keys().copied().collect();
        self.sync_peer(peer, &all, &mut fx);
        fx
    }

    /// Forces a session down as if its hold timer expired.
    pub fn reset_session(&mut self, peer: SwitchId) -> Effects {
        let mut fx = Effects::default();
        if self.sessions.contains_key(&peer) {
            self.transition(peer, SessionState::Down, &mut fx);
            self.purge_peer(peer, &mut fx);
        }
        fx
    }

    pub fn rib_out_to(&self, peer: SwitchId) -> Vec<(Prefix, Advert)> {
        self.rib_out
            .get(&peer)
            .map(|m| m.iter().map(|(p, a)| (*p, a.clone())).collect())
            .unwrap_or_default()
    }
}

/// FIB image of the switch's tables: connected and local addresses first,
/// then static routes, then BGP best routes resolved to their egress link.
/// Returns the table and the prefixes whose next hop could not be resolved.
pub fn install_fib(
    cfg: &SwitchConfig,
    bgp: &BgpProcess,
    extra_statics: &[StaticRoute],
) -> (Fib, Vec<Prefix>) {
    let mut fib = Fib::new();
    let put = |fib: &mut Fib, e: FibEntry| {
        if fib.get(&e.prefix).is_none() {
            fib.insert(e);
        }
    };
    let local = |p: Prefix| FibEntry {
        prefix: p,
        egress: FibEgress::Local,
        next_hop_mac: 0,
        origin: RouteOrigin::Connected,
    };
    put(&mut fib, local(Prefix::host(cfg.loopback)));
    put(&mut fib, local(Prefix::host(cfg.secondary)));
    for i in &cfg.interfaces {
        put(&mut fib, local(Prefix::host(i.ip)));
    }
    for i in &cfg.interfaces {
        put(
            &mut fib,
            FibEntry {
                prefix: i.subnet(),
                egress: FibEgress::Interface(i.index),
                next_hop_mac: i.peer_mac,
                origin: RouteOrigin::Connected,
            },
        );
    }
    for r in cfg.static_routes.iter().chain(extra_statics) {
        if let Some(i) = cfg.interface(r.iface) {
            put(
                &mut fib,
                FibEntry {
                    prefix: r.prefix,
                    egress: FibEgress::Interface(i.index),
                    next_hop_mac: i.peer_mac,
                    origin: RouteOrigin::Static,
                },
            );
        }
    }
    let mut unresolved = Vec::new();
    for (p, r) in &bgp.rib {
        if bgp.fib_suppressed.contains(p) {
            continue;
        }
        let Some(nh) = r.next_hop else {
            continue;
        };
        match cfg.interface_to(NodeId::Switch(nh)) {
            Some(i) => put(
                &mut fib,
                FibEntry {
                    prefix: *p,
                    egress: FibEgress::Interface(i.index),
                    next_hop_mac: i.peer_mac,
                    origin: RouteOrigin::Bgp,
                },
            ),
            None => unresolved.push(*p),
        }
    }
    (fib, unresolved)
}
