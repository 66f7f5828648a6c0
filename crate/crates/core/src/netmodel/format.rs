//! Plain-text topology document: parser, serializer and model derivation.
//!
//! ```text
//! [switches]
//! S0 1                      # id asn
//! [hosts]
//! H0 S0:5 10.1.0.10/24 diag # id switch:iface ip/len [diag]
//! [links]
//! L0 S0:1 S3:1              # switch-to-switch links only
//! [bgp]
//! session S0 S3             # eBGP; iBGP is synthesized between adjacent same-AS switches
//! policy S2 S16 out scope own-as-only
//! policy S0 S3 in reject 10.9.0.0/16 any
//! policy S0 S3 in local-pref=200 any 3
//! [acl]
//! S5 deny src=any dst=10.3.0.0/16 proto=any sport=any dport=any
//! [originate]
//! S0 10.200.0.0/16          # loopbacks and host subnets are originated implicitly
//! [static]
//! S0 10.250.0.0/24 3        # prefix egress-iface
//! ```
//!
//! Host attachment links are not written in `[links]`; they are appended after
//! the declared links, numbered in host order.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt::Write as _;
use std::net::Ipv4Addr;

use super::*;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Switches,
    Hosts,
    Links,
    Bgp,
    Acl,
    Originate,
    Static,
}

fn perr(line: usize, msg: impl Into<String>) -> ModelError {
    ModelError::Parse {
        line,
        msg: msg.into(),
    }
}

fn invalid(msg: impl Into<String>) -> ModelError {
    ModelError::Invalid(msg.into())
}

fn parse_endpoint(tok: &str) -> Result<(SwitchId, u8), String> {
    let (s, i) = tok
        .split_once(':')
        .ok_or_else(|| format!("endpoint '{tok}' is not switch:iface"))?;
    let iface = i
        .parse::<u8>()
        .map_err(|e| format!("endpoint '{tok}': {e}"))?;
    Ok((s.parse()?, iface))
}

fn parse_clause(action: &str, prefix: &str, asn: &str) -> Result<PolicyClause, String> {
    let action = match action {
        "accept" => PolicyAction::Accept,
        "reject" => PolicyAction::Reject,
        a => match a.strip_prefix("local-pref=") {
            Some(v) => PolicyAction::SetLocalPref(v.parse().map_err(|e| format!("'{a}': {e}"))?),
            None => return Err(format!("unknown policy action '{a}'")),
        },
    };
    Ok(PolicyClause {
        prefix: parse_opt(prefix)?,
        asn: parse_opt(asn)?,
        action,
    })
}

/// Parses only the declared topology, without semantic validation.
fn parse_document(text: &str) -> Result<Topology, ModelError> {
    let mut topo = Topology {
        switches: Vec::new(),
        hosts: Vec::new(),
        links: Vec::new(),
        ebgp: Vec::new(),
        policies: Vec::new(),
        acl: Vec::new(),
        originate: Vec::new(),
        statics: Vec::new(),
    };
    let mut section = Section::None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') {
            section = match content {
                "[switches]" => Section::Switches,
                "[hosts]" => Section::Hosts,
                "[links]" => Section::Links,
                "[bgp]" => Section::Bgp,
                "[acl]" => Section::Acl,
                "[originate]" => Section::Originate,
                "[static]" => Section::Static,
                other => return Err(perr(line, format!("unknown section {other}"))),
            };
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        let e = |m: String| perr(line, m);
        match section {
            Section::None => return Err(perr(line, "content before first section")),
            Section::Switches => {
                if toks.len() != 2 {
                    return Err(perr(line, "expected: <switch> <asn>"));
                }
                topo.switches.push(SwitchDecl {
                    id: toks[0].parse().map_err(e)?,
                    asn: toks[1]
                        .parse()
                        .map_err(|err| perr(line, format!("asn: {err}")))?,
                });
            }
            Section::Hosts => {
                if toks.len() != 3 && toks.len() != 4 {
                    return Err(perr(
                        line,
                        "expected: <host> <switch>:<iface> <ip>/<len> [diag]",
                    ));
                }
                let (switch, iface) = parse_endpoint(toks[1]).map_err(e)?;
                let (ip, len) = toks[2]
                    .split_once('/')
                    .ok_or_else(|| perr(line, "host address lacks /len"))?;
                let diagnosis = match toks.get(3) {
                    None => false,
                    Some(&"diag") => true,
                    Some(t) => return Err(perr(line, format!("unexpected '{t}'"))),
                };
                topo.hosts.push(HostDecl {
                    id: toks[0].parse().map_err(|m: String| perr(line, m))?,
                    switch,
                    iface,
                    ip: ip.parse().map_err(|err| perr(line, format!("{err}")))?,
                    prefix_len: len
                        .parse()
                        .ok()
                        .filter(|l| *l <= 32)
                        .ok_or_else(|| perr(line, "bad prefix length"))?,
                    diagnosis,
                });
            }
            Section::Links => {
                if toks.len() != 3 {
                    return Err(perr(
                        line,
                        "expected: <link> <switch>:<iface> <switch>:<iface>",
                    ));
                }
                let (sa, ia) = parse_endpoint(toks[1]).map_err(|m| perr(line, m))?;
                let (sb, ib) = parse_endpoint(toks[2]).map_err(|m| perr(line, m))?;
                topo.links.push(Link {
                    id: toks[0].parse().map_err(|m: String| perr(line, m))?,
                    a: Endpoint {
                        node: NodeId::Switch(sa),
                        iface: ia,
                    },
                    b: Endpoint {
                        node: NodeId::Switch(sb),
                        iface: ib,
                    },
                });
            }
            Section::Bgp => match toks.as_slice() {
                ["session", a, b] => {
                    let a = a.parse().map_err(|m: String| perr(line, m))?;
                    let b = b.parse().map_err(|m: String| perr(line, m))?;
                    topo.ebgp.push((a, b));
                }
                ["policy", s, p, dir, rest @ ..] => {
                    let switch = s.parse().map_err(|m: String| perr(line, m))?;
                    let peer = p.parse().map_err(|m: String| perr(line, m))?;
                    let direction = match *dir {
                        "in" => PolicyDirection::In,
                        "out" => PolicyDirection::Out,
                        d => return Err(perr(line, format!("direction '{d}'"))),
                    };
                    match rest {
                        ["scope", sc] => {
                            if direction != PolicyDirection::Out {
                                return Err(perr(line, "scope applies to out policies only"));
                            }
                            let scope = match *sc {
                                "all" => AdvertiseScope::All,
                                "own-as-only" => AdvertiseScope::OwnAsOnly,
                                s => return Err(perr(line, format!("scope '{s}'"))),
                            };
                            topo.policies.push(PolicyDecl::Scope {
                                switch,
                                peer,
                                scope,
                            });
                        }
                        [action, prefix, asn] => {
                            let clause =
                                parse_clause(action, prefix, asn).map_err(|m| perr(line, m))?;
                            topo.policies.push(PolicyDecl::Clause {
                                switch,
                                peer,
                                direction,
                                clause,
                            });
                        }
                        _ => return Err(perr(line, "malformed policy line")),
                    }
                }
                _ => return Err(perr(line, "expected 'session' or 'policy' line")),
            },
            Section::Acl => {
                if toks.len() < 2 {
                    return Err(perr(line, "expected: <switch> permit|deny <flow>"));
                }
                let action = match toks[1] {
                    "permit" => AclAction::Permit,
                    "deny" => AclAction::Deny,
                    a => return Err(perr(line, format!("acl action '{a}'"))),
                };
                let pattern: FlowSpec = toks[2..].join(" ").parse().map_err(|m| perr(line, m))?;
                topo.acl.push((
                    toks[0].parse().map_err(|m: String| perr(line, m))?,
                    AclRule { pattern, action },
                ));
            }
            Section::Originate => {
                if toks.len() != 2 {
                    return Err(perr(line, "expected: <switch> <prefix>"));
                }
                topo.originate.push((
                    toks[0].parse().map_err(|m: String| perr(line, m))?,
                    toks[1].parse().map_err(|m: String| perr(line, m))?,
                ));
            }
            Section::Static => {
                if toks.len() != 3 {
                    return Err(perr(line, "expected: <switch> <prefix> <iface>"));
                }
                topo.statics.push((
                    toks[0].parse().map_err(|m: String| perr(line, m))?,
                    StaticRoute {
                        prefix: toks[1].parse().map_err(|m: String| perr(line, m))?,
                        iface: toks[2]
                            .parse()
                            .map_err(|err| perr(line, format!("iface: {err}")))?,
                    },
                ));
            }
        }
    }
    topo.switches.sort_by_key(|s| s.id);
    topo.hosts.sort_by_key(|h| h.id);
    topo.links.sort_by_key(|l| l.id);
    Ok(topo)
}

fn check_dense<I: Iterator<Item = u32>>(ids: I, what: &str) -> Result<(), ModelError> {
    for (i, id) in ids.enumerate() {
        if id as usize != i {
            return Err(invalid(format!(
                "{what} ids must be dense from 0; found {what}{id} at position {i}"
            )));
        }
    }
    Ok(())
}

fn host_gateway(h: &HostDecl) -> Ipv4Addr {
    Ipv4Addr::from(h.subnet().bits() + 1)
}

/// Validates the declared topology and appends host attachment links.
fn validate(mut topo: Topology) -> Result<Topology, ModelError> {
    check_dense(topo.switches.iter().map(|s| s.id.0), "S")?;
    check_dense(topo.hosts.iter().map(|h| h.id.0), "H")?;
    check_dense(topo.links.iter().map(|l| l.id.0), "L")?;
    if topo.switches.is_empty() {
        return Err(invalid("no switches declared"));
    }
    let n = topo.switches.len() as u32;
    let exists = |s: SwitchId| s.0 < n;
    for s in &topo.switches {
        if s.asn == 0 {
            return Err(invalid(format!("{} has AS number 0", s.id)));
        }
    }

    let mut used: HashSet<(SwitchId, u8)> = HashSet::new();
    let mut claim = |s: SwitchId, iface: u8, who: String| -> Result<(), ModelError> {
        if !exists(s) {
            return Err(invalid(format!("{who} references nonexistent switch {s}")));
        }
        if iface == CPU_PORT {
            return Err(invalid(format!(
                "{who} uses interface 0 of {s}, reserved for the CPU port"
            )));
        }
        if !used.insert((s, iface)) {
            return Err(invalid(format!("interface {s}:{iface} used twice ({who})")));
        }
        Ok(())
    };

    let mut pairs = BTreeSet::new();
    for l in &topo.links {
        let (NodeId::Switch(a), NodeId::Switch(b)) = (l.a.node, l.b.node) else {
            return Err(invalid(format!("{} must join two switches", l.id)));
        };
        if a == b {
            return Err(invalid(format!("{} is a self-loop on {a}", l.id)));
        }
        claim(a, l.a.iface, l.id.to_string())?;
        claim(b, l.b.iface, l.id.to_string())?;
        if !pairs.insert((a.min(b), a.max(b))) {
            return Err(invalid(format!(
                "{} duplicates an existing link between {a} and {b}",
                l.id
            )));
        }
    }

    let mut diag = 0;
    let mut subnets = BTreeSet::new();
    for h in &topo.hosts {
        claim(h.switch, h.iface, h.id.to_string())?;
        if h.prefix_len > 30 {
            return Err(invalid(format!(
                "{} subnet /{} leaves no room for a gateway",
                h.id, h.prefix_len
            )));
        }
        let sub = h.subnet();
        if h.ip == sub.addr() || h.ip == host_gateway(h) {
            return Err(invalid(format!(
                "{} address {} collides with the network or gateway address",
                h.id, h.ip
            )));
        }
        if !subnets.insert(sub) {
            return Err(invalid(format!(
                "{} subnet {sub} is used by another host",
                h.id
            )));
        }
        diag += usize::from(h.diagnosis);
    }
    if diag != 1 {
        return Err(invalid(format!(
            "exactly one diagnosis host required, found {diag}"
        )));
    }

    let mut sessions = BTreeSet::new();
    for &(a, b) in &topo.ebgp {
        if !exists(a) || !exists(b) {
            return Err(invalid(format!(
                "session {a} {b} references a nonexistent switch"
            )));
        }
        if topo.asn(a) == topo.asn(b) {
            return Err(invalid(format!(
                "session {a} {b} joins the same AS; iBGP is implicit"
            )));
        }
        if !pairs.contains(&(a.min(b), a.max(b))) {
            return Err(invalid(format!("session {a} {b} has no direct link")));
        }
        if !sessions.insert((a.min(b), a.max(b))) {
            return Err(invalid(format!("session {a} {b} declared twice")));
        }
    }

    // Every AS with several switches must be a directly connected clique.
    let mut by_as: BTreeMap<AsNumber, Vec<SwitchId>> = BTreeMap::new();
    for s in &topo.switches {
        by_as.entry(s.asn).or_default().push(s.id);
    }
    for (asn, members) in &by_as {
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                if !pairs.contains(&(a, b)) {
                    return Err(invalid(format!(
                        "AS {asn}: {a} and {b} are not directly linked"
                    )));
                }
                sessions.insert((a, b));
            }
        }
    }

    for p in &topo.policies {
        let (s, peer) = match p {
            PolicyDecl::Clause { switch, peer, .. } | PolicyDecl::Scope { switch, peer, .. } => {
                (*switch, *peer)
            }
        };
        if !exists(s) || !exists(peer) || !sessions.contains(&(s.min(peer), s.max(peer))) {
            return Err(invalid(format!(
                "policy on {s} towards {peer}: no such BGP session"
            )));
        }
    }
    for (s, _) in &topo.acl {
        if !exists(*s) {
            return Err(invalid(format!("acl references nonexistent switch {s}")));
        }
    }
    for (s, _) in &topo.originate {
        if !exists(*s) {
            return Err(invalid(format!(
                "originate references nonexistent switch {s}"
            )));
        }
    }
    for (s, r) in &topo.statics {
        if !exists(*s) {
            return Err(invalid(format!(
                "static route references nonexistent switch {s}"
            )));
        }
        if !used.contains(&(*s, r.iface)) {
            return Err(invalid(format!(
                "static route on {s} uses nonexistent interface {}",
                r.iface
            )));
        }
    }

    let base = topo.links.len() as u32;
    for h in &topo.hosts {
        topo.links.push(Link {
            id: LinkId(base + h.id.0),
            a: Endpoint {
                node: NodeId::Switch(h.switch),
                iface: h.iface,
            },
            b: Endpoint {
                node: NodeId::Host(h.id),
                iface: 1,
            },
        });
    }

    // Connectivity over all nodes.
    let mut adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for l in &topo.links {
        adj.entry(l.a.node).or_default().push(l.b.node);
        adj.entry(l.b.node).or_default().push(l.a.node);
    }
    let start = NodeId::Switch(SwitchId(0));
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &v in adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
            if seen.insert(v) {
                queue.push_back(v);
            }
        }
    }
    if let Some(s) = topo
        .switch_ids()
        .find(|s| !seen.contains(&NodeId::Switch(*s)))
    {
        return Err(invalid(format!("{s} is not connected to S0")));
    }
    Ok(topo)
}

fn derive_configs(topo: &Topology) -> BTreeMap<SwitchId, SwitchConfig> {
    let diag = topo.diagnosis_host().clone();
    let mut configs = BTreeMap::new();
    for decl in &topo.switches {
        let sid = decl.id;
        let node = NodeId::Switch(sid);
        let mut interfaces = Vec::new();
        for l in &topo.links {
            let Some(me) = l.endpoint_of(node) else {
                continue;
            };
            let peer = l.other(node).expect("link has two ends");
            let (ip, len, peer_ip, peer_mac) = match peer.node {
                NodeId::Switch(ps) => {
                    let (ia, ib) = addressing::link_addrs(l.id);
                    let (mine, theirs) = if l.a.node == node { (ia, ib) } else { (ib, ia) };
                    (mine, 30, theirs, addressing::switch_mac(ps, peer.iface))
                }
                NodeId::Host(h) => {
                    let hd = &topo.hosts[h.index()];
                    (
                        host_gateway(hd),
                        hd.prefix_len,
                        hd.ip,
                        addressing::host_mac(h),
                    )
                }
            };
            interfaces.push(Interface {
                index: me.iface,
                ip,
                prefix_len: len,
                mac: addressing::switch_mac(sid, me.iface),
                link: l.id,
                peer,
                peer_ip,
                peer_mac,
            });
        }
        interfaces.sort_by_key(|i| i.index);

        let mut bgp_sessions = Vec::new();
        for peer in topo.switch_neighbors(sid) {
            let kind = if topo.asn(peer) == decl.asn {
                SessionKind::Ibgp
            } else if topo.ebgp.contains(&(sid, peer)) || topo.ebgp.contains(&(peer, sid)) {
                SessionKind::Ebgp
            } else {
                continue;
            };
            let local_iface = interfaces
                .iter()
                .find(|i| i.peer.node == NodeId::Switch(peer))
                .expect("neighbor has an interface")
                .index;
            let mut policy_in = FilterPolicy::default();
            let mut policy_out = FilterPolicy::default();
            for p in &topo.policies {
                match p {
                    PolicyDecl::Clause {
                        switch,
                        peer: pp,
                        direction,
                        clause,
                    } if *switch == sid && *pp == peer => match direction {
                        PolicyDirection::In => policy_in.clauses.push(clause.clone()),
                        PolicyDirection::Out => policy_out.clauses.push(clause.clone()),
                    },
                    PolicyDecl::Scope {
                        switch,
                        peer: pp,
                        scope,
                    } if *switch == sid && *pp == peer => policy_out.scope = *scope,
                    _ => {}
                }
            }
            bgp_sessions.push(BgpSessionConfig {
                peer,
                local_iface,
                kind,
                policy_in,
                policy_out,
            });
        }

        let loopback = addressing::loopback(sid);
        let mut originated = vec![Prefix::host(loopback)];
        let mut static_routes = Vec::new();
        for h in topo.hosts.iter().filter(|h| h.switch == sid) {
            originated.push(h.subnet());
        }
        if diag.switch == sid {
            let ds = Prefix::host(addressing::diag_secondary());
            originated.push(ds);
            static_routes.push(StaticRoute {
                prefix: ds,
                iface: diag.iface,
            });
        }
        originated.extend(
            topo.originate
                .iter()
                .filter(|(s, _)| *s == sid)
                .map(|(_, p)| *p),
        );
        originated.sort();
        originated.dedup();
        static_routes.extend(
            topo.statics
                .iter()
                .filter(|(s, _)| *s == sid)
                .map(|(_, r)| *r),
        );

        configs.insert(
            sid,
            SwitchConfig {
                id: sid,
                asn: decl.asn,
                loopback,
                secondary: addressing::secondary(sid),
                interfaces,
                bgp_sessions,
                originated,
                acl: topo
                    .acl
                    .iter()
                    .filter(|(s, _)| *s == sid)
                    .map(|(_, r)| r.clone())
                    .collect(),
                static_routes,
            },
        );
    }
    configs
}

/// Parses, validates and derives per-switch configuration.
pub fn load_topology(text: &str) -> Result<NetworkModel, ModelError> {
    let topology = validate(parse_document(text)?)?;
    let configs = derive_configs(&topology);
    Ok(NetworkModel {
        topology,
        configs,
        diag_secondary: addressing::diag_secondary(),
    })
}

fn fmt_clause(c: &PolicyClause) -> String {
    let action = match c.action {
        PolicyAction::Accept => "accept".to_string(),
        PolicyAction::Reject => "reject".to_string(),
        PolicyAction::SetLocalPref(v) => format!("local-pref={v}"),
    };
    format!("{action} {} {}", fmt_opt(&c.prefix), fmt_opt(&c.asn))
}

/// Emits the canonical document for a topology. Host attachment links are
/// implied by `[hosts]` and are not written.
pub fn serialize_topology(topo: &Topology) -> String {
    let mut out = String::new();
    out.push_str("[switches]\n");
    for s in &topo.switches {
        let _ = writeln!(out, "{} {}", s.id, s.asn);
    }
    out.push_str("[hosts]\n");
    for h in &topo.hosts {
        let _ = write!(
            out,
            "{} {}:{} {}/{}",
            h.id, h.switch, h.iface, h.ip, h.prefix_len
        );
        out.push_str(if h.diagnosis { " diag\n" } else { "\n" });
    }
    out.push_str("[links]\n");
    for l in topo.links.iter().filter(|l| l.is_switch_link()) {
        let _ = writeln!(out, "{} {} {}", l.id, l.a, l.b);
    }
    out.push_str("[bgp]\n");
    for (a, b) in &topo.ebgp {
        let _ = writeln!(out, "session {a} {b}");
    }
    for p in &topo.policies {
        match p {
            PolicyDecl::Scope {
                switch,
                peer,
                scope,
            } => {
                let sc = match scope {
                    AdvertiseScope::All => "all",
                    AdvertiseScope::OwnAsOnly => "own-as-only",
                };
                let _ = writeln!(out, "policy {switch} {peer} out scope {sc}");
            }
            PolicyDecl::Clause {
                switch,
                peer,
                direction,
                clause,
            } => {
                let dir = match direction {
                    PolicyDirection::In => "in",
                    PolicyDirection::Out => "out",
                };
                let _ = writeln!(out, "policy {switch} {peer} {dir} {}", fmt_clause(clause));
            }
        }
    }
    out.push_str("[acl]\n");
    for (s, r) in &topo.acl {
        let act = match r.action {
            AclAction::Permit => "permit",
            AclAction::Deny => "deny",
        };
        let _ = writeln!(out, "{s} {act} {}", r.pattern);
    }
    out.push_str("[originate]\n");
    for (s, p) in &topo.originate {
        let _ = writeln!(out, "{s} {p}");
    }
    out.push_str("[static]\n");
    for (s, r) in &topo.statics {
        let _ = writeln!(out, "{s} {} {}", r.prefix, r.iface);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[switches]
S0 1
S1 2
[hosts]
H0 S0:2 10.1.0.10/24 diag
H1 S1:2 10.2.0.10/24
[links]
L0 S0:1 S1:1   # the only core link
[bgp]
session S0 S1
";

    #[test]
    fn minimal_document_loads() {
        let m = load_topology(MINIMAL).unwrap();
        assert_eq!(m.topology.switches.len(), 2);
        assert_eq!(m.topology.links.len(), 3);
        let s0 = m.config(SwitchId(0));
        let s1 = m.config(SwitchId(1));
        assert_eq!(s0.bgp_sessions.len(), 1);
        assert_eq!(s0.bgp_sessions[0].peer, SwitchId(1));
        assert_eq!(s1.bgp_sessions[0].peer, SwitchId(0));
        assert_eq!(s0.bgp_sessions[0].kind, SessionKind::Ebgp);
        assert_eq!(s0.interface(1).unwrap().ip, Ipv4Addr::new(10, 128, 0, 1));
        assert_eq!(s1.interface(1).unwrap().ip, Ipv4Addr::new(10, 128, 0, 2));
        assert_eq!(s0.interface(2).unwrap().ip, Ipv4Addr::new(10, 1, 0, 1));
        assert!(s0.originated.contains(&"10.253.0.1/32".parse().unwrap()));
    }

    #[test]
    fn link_to_bad_interface_names_entity() {
        let doc = MINIMAL.replace("L0 S0:1 S1:1", "L0 S0:1 S7:1");
        let err = load_topology(&doc).unwrap_err().to_string();
        assert!(err.contains("S7"), "{err}");
        let doc = MINIMAL.replace("L0 S0:1 S1:1", "L0 S0:2 S1:1");
        let err = load_topology(&doc).unwrap_err().to_string();
        assert!(err.contains("S0:2"), "{err}");
    }

    #[test]
    fn parse_error_has_line_number() {
        let doc = MINIMAL.replace("S1 2", "S1 two");
        assert!(matches!(
            load_topology(&doc),
            Err(ModelError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn serializer_roundtrip() {
        let m = load_topology(MINIMAL).unwrap();
        let text = serialize_topology(&m.topology);
        let again = load_topology(&text).unwrap();
        assert_eq!(again.topology, m.topology);
        assert_eq!(serialize_topology(&again.topology), text);
    }

    #[test]
    fn non_clique_as_rejected() {
        let doc = "\
[switches]
S0 1
S1 1
S2 1
[hosts]
H0 S0:5 10.1.0.10/24 diag
[links]
L0 S0:1 S1:1
L1 S1:2 S2:1
";
        let err = load_topology(doc).unwrap_err().to_string();
        assert!(err.contains("S0 and S2"), "{err}");
    }
}
