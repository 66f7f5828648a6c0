//! Topology builders: the bundled 20-switch reference network and seeded
//! random networks used by property tests.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

/// Incremental builder that numbers interfaces in declaration order.
#[derive(Debug, Default)]
pub struct TopologyBuilder {
    asns: Vec<AsNumber>,
    next_iface: BTreeMap<SwitchId, u8>,
    links: Vec<Link>,
    hosts: Vec<HostDecl>,
    ebgp: Vec<(SwitchId, SwitchId)>,
    policies: Vec<PolicyDecl>,
    acl: Vec<(SwitchId, AclRule)>,
    originate: Vec<(SwitchId, Prefix)>,
    statics: Vec<(SwitchId, StaticRoute)>,
}

impl TopologyBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn switch(&mut self, asn: AsNumber) -> SwitchId {
        let id = SwitchId(self.asns.len() as u32);
        self.asns.push(asn);
        id
    }

    fn iface(&mut self, s: SwitchId) -> u8 {
        let n = self.next_iface.entry(s).or_insert(1);
        let i = *n;
        *n += 1;
        i
    }

    /// Adds a link; an eBGP session is declared when the ASes differ.
    pub fn link(&mut self, a: SwitchId, b: SwitchId) -> LinkId {
        let id = LinkId(self.links.len() as u32);
        let (ia, ib) = (self.iface(a), self.iface(b));
        self.links.push(Link {
            id,
            a: Endpoint {
                node: NodeId::Switch(a),
                iface: ia,
            },
            b: Endpoint {
                node: NodeId::Switch(b),
                iface: ib,
            },
        });
        if self.asns[a.index()] != self.asns[b.index()] {
            self.ebgp.push((a, b));
        }
        id
    }

    /// Attaches host `j` with subnet 10.(j+1).0.0/24 and address .10.
    pub fn host(&mut self, s: SwitchId, diagnosis: bool) -> HostId {
        let id = HostId(self.hosts.len() as u32);
        let iface = self.iface(s);
        self.hosts.push(HostDecl {
            id,
            switch: s,
            iface,
            ip: host_ip(id.0 + 1),
            prefix_len: 24,
            diagnosis,
        });
        id
    }

    pub fn scope(&mut self, switch: SwitchId, peer: SwitchId, scope: AdvertiseScope) {
        self.policies.push(PolicyDecl::Scope {
            switch,
            peer,
            scope,
        });
    }

    pub fn clause(
        &mut self,
        switch: SwitchId,
        peer: SwitchId,
        direction: PolicyDirection,
        clause: PolicyClause,
    ) {
        self.policies.push(PolicyDecl::Clause {
            switch,
            peer,
            direction,
            clause,
        });
    }

    pub fn acl(&mut self, switch: SwitchId, rule: AclRule) {
        self.acl.push((switch, rule));
    }

    pub fn originate(&mut self, switch: SwitchId, prefix: Prefix) {
        self.originate.push((switch, prefix));
    }

    pub fn static_route(&mut self, switch: SwitchId, route: StaticRoute) {
        self.statics.push((switch, route));
    }

    /// The declared topology, without host attachment links.
    pub fn declared(&self) -> Topology {
        Topology {
            switches: self
                .asns
                .iter()
                .enumerate()
                .map(|(i, &asn)| SwitchDecl {
                    id: SwitchId(i as u32),
                    asn,
                })
                .collect(),
            hosts: self.hosts.clone(),
            links: self.links.clone(),
            ebgp: self.ebgp.clone(),
            policies: self.policies.clone(),
            acl: self.acl.clone(),
            originate: self.originate.clone(),
            statics: self.statics.clone(),
        }
    }

    pub fn document(&self) -> String {
        serialize_topology(&self.declared())
    }

    pub fn build(&self) -> Result<NetworkModel, ModelError> {
        load_topology(&self.document())
    }
}

fn host_ip(j: u32) -> Ipv4Addr {
    Ipv4Addr::new(10, j as u8, 0, 10)
}

/// Builder for the 5-AS, 20-switch, 9-host reference network.
pub fn reference_builder() -> TopologyBuilder {
    let mut b = TopologyBuilder::new();
    let groups: [(AsNumber, usize); 5] = [(1, 3), (2, 4), (3, 4), (4, 5), (5, 4)];
    let mut members: Vec<Vec<SwitchId>> = Vec::new();
    for (asn, size) in groups {
        members.push((0..size).map(|_| b.switch(asn)).collect());
    }
    for m in &members {
        for (i, &x) in m.iter().enumerate() {
            for &y in &m[i + 1..] {
                b.link(x, y);
            }
        }
    }
    let s = SwitchId;
    for (x, y) in [
        (0, 3),
        (1, 4),
        (5, 7),
        (6, 8),
        (9, 11),
        (8, 12),
        (10, 17),
        (2, 16),
        (5, 18),
    ] {
        b.link(s(x), s(y));
    }
    b.scope(s(2), s(16), AdvertiseScope::OwnAsOnly);
    b.scope(s(5), s(18), AdvertiseScope::OwnAsOnly);
    for (sw, diag) in [
        (0, true),
        (1, false),
        (4, false),
        (9, false),
        (12, false),
        (14, false),
        (16, false),
        (19, false),
        (5, false),
    ] {
        b.host(s(sw), diag);
    }
    b
}

/// The bundled reference network.
pub fn reference_model() -> NetworkModel {
    reference_builder()
        .build()
        .expect("reference topology is valid")
}

/// Canonical document text for the reference network.
pub fn reference_document() -> String {
    reference_builder().document()
}

/// Seeded random multi-AS network: every AS is a clique, ASes are joined by a
/// random spanning tree plus a few extra eBGP links.
pub fn random_model(seed: u64, max_as: usize, max_as_size: usize, hosts: usize) -> NetworkModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_as = rng.gen_range(1..=max_as.max(1));
    let sizes: Vec<usize> = (0..n_as)
        .map(|_| rng.gen_range(1..=max_as_size.max(1)))
        .collect();
    random_with_sizes(&mut rng, &sizes, hosts)
}

/// Seeded random network with an AS count and a total switch count drawn
/// from the given ranges.
pub fn random_model_sized(
    seed: u64,
    ases: std::ops::RangeInclusive<usize>,
    switches: std::ops::RangeInclusive<usize>,
    hosts: usize,
) -> NetworkModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_as = rng.gen_range(ases).max(1);
    let total = rng.gen_range(switches).max(n_as);
    let mut sizes = vec![1usize; n_as];
    for _ in n_as..total {
        sizes[rng.gen_range(0..n_as)] += 1;
    }
    random_with_sizes(&mut rng, &sizes, hosts)
}

fn random_with_sizes(rng: &mut ChaCha8Rng, sizes: &[usize], hosts: usize) -> NetworkModel {
    let mut b = TopologyBuilder::new();
    let n_as = sizes.len();
    let mut members: Vec<Vec<SwitchId>> = Vec::new();
    for (a, &size) in sizes.iter().enumerate() {
        members.push((0..size).map(|_| b.switch(a as AsNumber + 1)).collect());
    }
    for m in &members {
        for (i, &x) in m.iter().enumerate() {
            for &y in &m[i + 1..] {
                b.link(x, y);
            }
        }
    }
    let mut used = std::collections::BTreeSet::new();
    for a in 1..n_as {
        let parent = rng.gen_range(0..a);
        let x = *members[a].choose(rng).expect("non-empty AS");
        let y = *members[parent].choose(rng).expect("non-empty AS");
        used.insert((x.min(y), x.max(y)));
        b.link(x, y);
    }
    for _ in 0..n_as / 2 {
        if n_as < 2 {
            break;
        }
        let a = rng.gen_range(0..n_as);
        let c = rng.gen_range(0..n_as);
        if a == c {
            continue;
        }
        let x = *members[a].choose(rng).expect("non-empty AS");
        let y = *members[c].choose(rng).expect("non-empty AS");
        if used.insert((x.min(y), x.max(y))) {
            b.link(x, y);
        }
    }
    let all: Vec<SwitchId> = members.iter().flatten().copied().collect();
    for j in 0..hosts.max(1) {
        let s = *all.choose(rng).expect("non-empty network");
        b.host(s, j == 0);
    }
    b.build().expect("random topology is valid by construction")
}
