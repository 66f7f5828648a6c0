//! Diagnosis scripts. Each script either returns `Ok` when its part of the
//! network checks out or stops the run with a finding.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use crate::agent::{AgentCommand, CapturedMessage, ReplyPayload, ROUTING_DAEMON_DOWN};
use crate::controlplane::{RibEntry, RouteSource, SessionState, UpdateKind};
use crate::dataplane::{DropReason, LoggedHeader, RouteOrigin};
use crate::faults::FaultCategory;
use crate::netmodel::{FlowSpec, LinkId, NodeId, Prefix, SimTime, SwitchId, MIRROR_DSCP};
use crate::oracle::OracleError;
use crate::simkernel::{CaptureDirection, SimError};

use super::{CmdResult, Finding, Manager, ManagerError, Script, Verdict};

pub(super) enum Stop {
    Found(Finding),
    Fail(ManagerError),
}

impl From<ManagerError> for Stop {
    fn from(e: ManagerError) -> Self {
        Stop::Fail(e)
    }
}

impl From<OracleError> for Stop {
    fn from(e: OracleError) -> Self {
        Stop::Fail(e.into())
    }
}

impl From<SimError> for Stop {
    fn from(e: SimError) -> Self {
        Stop::Fail(e.into())
    }
}

pub(super) type Step<T = ()> = Result<T, Stop>;

fn found<T>(verdict: Verdict, category: FaultCategory) -> Step<T> {
    Err(Stop::Found(Finding::new(verdict, category)))
}

fn stop<T>(verdict: Verdict) -> Step<T> {
    Err(Stop::Found(Finding::bare(verdict)))
}

fn inconclusive<T>(reason: impl Into<String>) -> Step<T> {
    stop(Verdict::Inconclusive(reason.into()))
}

fn unexpected<T>(s: SwitchId, what: &str) -> Step<T> {
    inconclusive(format!("unexpected reply from {s} to {what}"))
}

fn ends(flow: &FlowSpec) -> (Ipv4Addr, Ipv4Addr) {
    let src = flow.src.map_or(Ipv4Addr::UNSPECIFIED, |p| p.addr());
    let dst = flow.dst.map_or(Ipv4Addr::UNSPECIFIED, |p| p.addr());
    (src, dst)
}

fn of_flow(flow: &FlowSpec, h: &LoggedHeader) -> bool {
    let (src, dst) = ends(flow);
    h.src == src && h.dst == dst
}

fn same_route(a: &RibEntry, b: &RibEntry) -> bool {
    a.prefix == b.prefix && a.as_path == b.as_path && a.next_hop == b.next_hop
}

/// A loss counts when it is at least two packets and at least 5% of the
/// packets it is measured against.
fn significant(lost: i64, base: u64) -> bool {
    lost >= 2 && lost as u64 * 20 >= base
}

fn announces(c: &CapturedMessage, dir: CaptureDirection, peer: SwitchId, p: Prefix) -> bool {
    c.direction == dir
        && c.peer == peer
        && c.msg
            .updates()
            .iter()
            .any(|u| u.kind == UpdateKind::Announce && u.prefix == p)
}

fn talks(c: &[CapturedMessage], dir: CaptureDirection, peer: SwitchId) -> bool {
    c.iter().any(|m| m.direction == dir && m.peer == peer)
}

impl Manager<'_> {
    fn link(&self, a: SwitchId, b: SwitchId) -> Step<LinkId> {
        match self.net.model.topology.link_between(a, b) {
            Some(l) => Ok(l.id),
            None => inconclusive(format!("{a} and {b} are not adjacent")),
        }
    }

    /// Interprets a command outcome; a dead daemon, an unreachable agent and
    /// an agent error each end the script here.
    fn expect(&mut self, s: SwitchId, r: CmdResult) -> Step<ReplyPayload> {
        match r {
            CmdResult::Ok(p) => Ok(p),
            CmdResult::Err(e) if e == ROUTING_DAEMON_DOWN => {
                found(Verdict::FaultySwitch(s), FaultCategory::ExternalInteraction)
            }
            CmdResult::Err(e) => inconclusive(format!("{s}: {e}")),
            CmdResult::Timeout => {
                self.disconnected(s)?;
                inconclusive(format!("{s} unreachable"))
            }
        }
    }

    fn ask(&mut self, script: Script, s: SwitchId, cmd: AgentCommand) -> Step<ReplyPayload> {
        let r = self.query(script, s, cmd)?;
        self.expect(s, r)
    }

    fn oracle_paths(&mut self, script: Script, flow: &FlowSpec) -> Step<Vec<Vec<SwitchId>>> {
        let paths = self.oracle.flow_paths(flow)?;
        let summary = match paths.first() {
            Some(p) => p
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(" "),
            None => "no path".into(),
        };
        self.oracle_note(script, "flow_paths", flow, summary);
        Ok(paths)
    }

    /// Diagnoses one direction of the failing traffic.
    pub(super) fn diagnose_flow(&mut self, flow: &FlowSpec) -> Step {
        self.enter(Script::Locate, flow);
        let paths = self.oracle_paths(Script::Locate, flow)?;
        let Some(path) = paths.into_iter().next() else {
            return stop(Verdict::ConfigNotFault(format!(
                "configuration drops or cannot route {flow}"
            )));
        };
        let edge = path[0];
        let since = self.net.now;
        self.state.trace_edges.insert(edge);
        let set = self.send(
            Script::Locate,
            edge,
            AgentCommand::SetTraceFilter { flow: flow.clone() },
        );
        let inject = self.send(
            Script::Locate,
            edge,
            self.inject(flow, &path, self.config.flow_packets, 0),
        );
        for r in self.wait_all(vec![set, inject])? {
            self.expect(edge, r)?;
        }
        let deadline = self.net.now + self.config.report_wait;
        let report = loop {
            if let Some(r) = self.pick_report(since, &path) {
                break Some(r);
            }
            if self.net.now >= deadline {
                break None;
            }
            self.net.run_until(crate::simkernel::StopCondition::Inbox {
                host: self.dh,
                deadline,
            })?;
            self.drain_inbox();
        };
        if let Some((x, iface, reason)) = report {
            self.state.used_fault_report = true;
            self.state.reset.insert(x);
            return self.dispatch_drop(flow, &path, x, iface, reason);
        }
        self.sweep(flow, &path)?;
        self.payload_probe(flow, &path)
    }

    fn inject(&self, flow: &FlowSpec, path: &[SwitchId], count: u32, dscp: u8) -> AgentCommand {
        AgentCommand::InjectFlow {
            flow: flow.clone(),
            count,
            interval_us: self.config.flow_interval.0,
            ttl: path.len().min(255) as u8,
            dscp,
        }
    }

    /// The report nearest the flow source among those received since
    /// `since`.
    fn pick_report(&self, since: SimTime, path: &[SwitchId]) -> Option<(SwitchId, u8, DropReason)> {
        self.fault_reports
            .iter()
            .filter(|(t, _)| *t >= since)
            .min_by_key(|(t, r)| {
                let pos = path
                    .iter()
                    .position(|s| *s == r.switch)
                    .unwrap_or(usize::MAX);
                (pos, *t)
            })
            .map(|(_, r)| (r.switch, r.ingress_iface, r.reason))
    }

    fn dispatch_drop(
        &mut self,
        flow: &FlowSpec,
        path: &[SwitchId],
        x: SwitchId,
        iface: u8,
        reason: DropReason,
    ) -> Step {
        match reason {
            DropReason::NoFibEntry => self.no_forwarding(flow, path, x, iface),
            DropReason::ZeroTtl => self.ttl_check(flow, path, x, iface),
            DropReason::BadHeaderChecksum => self.corrupted_header(flow, x, iface),
            DropReason::AclDeny => {
                self.oracle_note(Script::Locate, "acl", x, "flow permitted by configuration");
                found(Verdict::FaultySwitch(x), FaultCategory::PacketForwarding)
            }
            DropReason::Congestion | DropReason::SilentInjected => {
                found(Verdict::FaultySwitch(x), FaultCategory::PacketForwarding)
            }
        }
    }

    /// Walks back from an off-path switch `x`, which got the flow on
    /// `iface`, to the last switch of the expected path that handled it.
    fn find_divergence(
        &mut self,
        flow: &FlowSpec,
        path: &[SwitchId],
        x: SwitchId,
        iface: u8,
    ) -> Step<SwitchId> {
        let (mut cur, mut port) = (x, iface);
        for _ in 0..self.net.model.switch_count() {
            let peer = self.net.endpoint_peer(cur, port).map(|e| e.node);
            let Some(NodeId::Switch(u)) = peer else {
                return inconclusive(format!("{cur} got the flow from outside the expected path"));
            };
            let on = path.contains(&u);
            let summary = if on {
                "on expected path"
            } else {
                "off expected path"
            };
            self.oracle_note(Script::NoForwarding, "on_path", u, summary);
            if on {
                return Ok(u);
            }
            let ReplyPayload::HeaderLogs(logs) =
                self.ask(Script::NoForwarding, u, AgentCommand::GetHeaderLogs)?
            else {
                return unexpected(u, "GetHeaderLogs");
            };
            let from = logs
                .ports
                .iter()
                .find(|(_, l)| l.ingress_recent.iter().any(|h| of_flow(flow, h)))
                .map(|(i, _)| *i);
            let Some(i) = from else {
                return inconclusive(format!("no record of the flow entering {u}"));
            };
            (cur, port) = (u, i);
        }
        inconclusive("flow origin not found")
    }

    fn no_forwarding(
        &mut self,
        flow: &FlowSpec,
        path: &[SwitchId],
        x: SwitchId,
        iface: u8,
    ) -> Step {
        self.enter(Script::NoForwarding, x);
        let u = if path.contains(&x) {
            x
        } else {
            self.find_divergence(flow, path, x, iface)?
        };
        self.route_check(flow, u)
    }

    /// Compares the forwarding and routing state of `x` for the flow's
    /// destination with the oracle.
    fn route_check(&mut self, flow: &FlowSpec, x: SwitchId) -> Step {
        let (_, dst) = ends(flow);
        let exp = self.oracle.fib_lookup(x, dst)?.copied();
        let summary = exp.map_or("no route".into(), |e| {
            format!("{} via {:?}", e.prefix, e.egress)
        });
        self.oracle_note(Script::NoForwarding, "fib_lookup", x, summary);
        let Some(exp) = exp else {
            return stop(Verdict::ConfigNotFault(format!(
                "{x} has no route to {dst} by configuration"
            )));
        };
        let ReplyPayload::Fib(fib) = self.ask(Script::NoForwarding, x, AgentCommand::GetFib)?
        else {
            return unexpected(x, "GetFib");
        };
        let actual = fib
            .iter()
            .filter(|e| e.prefix.contains(dst))
            .max_by_key(|e| e.prefix.len());
        if actual.is_some_and(|a| a.egress == exp.egress) {
            return found(Verdict::FaultySwitch(x), FaultCategory::PacketForwarding);
        }
        if exp.origin != RouteOrigin::Bgp {
            return found(
                Verdict::FaultySwitch(x),
                FaultCategory::DataPlaneTableGeneration,
            );
        }
        let ReplyPayload::Rib(rib) = self.ask(Script::NoForwarding, x, AgentCommand::GetRib)?
        else {
            return unexpected(x, "GetRib");
        };
        let want = self.oracle.switch(x)?.rib.get(&exp.prefix).cloned();
        self.oracle_note(
            Script::NoForwarding,
            "rib",
            x,
            format!("{} expected", exp.prefix),
        );
        let have = rib.iter().find(|e| e.prefix == exp.prefix);
        if let (Some(h), Some(w)) = (have, &want) {
            if same_route(h, w) {
                return found(
                    Verdict::FaultySwitch(x),
                    FaultCategory::DataPlaneTableGeneration,
                );
            }
        }
        self.route_missing_at(Script::NoForwarding, x, exp.prefix)?;
        inconclusive(format!(
            "{x} lacks its route for {dst} and no upstream cause was found"
        ))
    }

    /// `x` does not hold its expected best route for `p`: either it failed
    /// to select an advertised route or an advertisement never reached it.
    fn route_missing_at(&mut self, script: Script, x: SwitchId, p: Prefix) -> Step {
        let exp = self.oracle.switch(x)?;
        let want = exp.rib.get(&p).cloned();
        let want_in: BTreeMap<SwitchId, RibEntry> = exp
            .rib_in
            .iter()
            .filter_map(|(n, t)| t.get(&p).map(|e| (*n, e.clone())))
            .collect();
        self.oracle_note(
            script,
            "rib_in",
            x,
            format!("{} advertisers of {p}", want_in.len()),
        );
        let Some(want) = want else {
            return Ok(());
        };
        let best = match want.source {
            RouteSource::Originated => {
                return found(
                    Verdict::FaultySwitch(x),
                    FaultCategory::RouteTableGeneration,
                );
            }
            RouteSource::Session(a) => a,
        };
        let ReplyPayload::RibIn(rib_in) = self.ask(script, x, AgentCommand::GetRibIn)? else {
            return unexpected(x, "GetRibIn");
        };
        let has = |n: SwitchId| {
            let Some(w) = want_in.get(&n) else {
                return true;
            };
            rib_in
                .get(&n)
                .is_some_and(|v| v.iter().any(|e| same_route(e, w)))
        };
        if has(best) {
            return found(
                Verdict::FaultySwitch(x),
                FaultCategory::RouteTableGeneration,
            );
        }
        let mut advertisers: Vec<SwitchId> = want_in.keys().copied().filter(|n| !has(*n)).collect();
        advertisers.sort_by_key(|n| *n != best);
        for a in advertisers {
            self.route_adv_missing(a, p, x)?;
        }
        Ok(())
    }

    /// `a` should advertise `p` to `d` and `d` does not hold it.
    fn route_adv_missing(&mut self, a: SwitchId, p: Prefix, d: SwitchId) -> Step {
        if !self.state.visited.insert((a, p, d)) {
            return Ok(());
        }
        self.enter(Script::RouteAdvMissing, format!("{a}>{d} {p}"));
        let sc = Script::RouteAdvMissing;
        let ReplyPayload::Sessions(sessions) = self.ask(sc, d, AgentCommand::GetBgpSessions)?
        else {
            return unexpected(d, "GetBgpSessions");
        };
        let up = sessions
            .iter()
            .any(|x| x.peer == a && x.state == SessionState::Established);
        if !up {
            return self.neighbor_down(d, a);
        }
        let ReplyPayload::Rib(rib) = self.ask(sc, a, AgentCommand::GetRib)? else {
            return unexpected(a, "GetRib");
        };
        let want = self.oracle.switch(a)?.rib.get(&p).cloned();
        self.oracle_note(sc, "rib", a, format!("{p} expected"));
        let holds = match &want {
            Some(w) => rib.iter().any(|e| same_route(e, w)),
            None => true,
        };
        if !holds {
            return self.route_missing_at(sc, a, p);
        }
        let ReplyPayload::RibOut(out) =
            self.ask(sc, a, AgentCommand::GetRibOut { peer: Some(d) })?
        else {
            return unexpected(a, "GetRibOut");
        };
        if !out.get(&d).is_some_and(|v| v.iter().any(|e| e.prefix == p)) {
            return found(
                Verdict::FaultySwitch(a),
                FaultCategory::RouteAdvertisementGeneration,
            );
        }
        let dur = self.config.capture.0;
        let ca = self.send(
            sc,
            a,
            AgentCommand::CaptureControlPackets { duration_us: dur },
        );
        let cd = self.send(
            sc,
            d,
            AgentCommand::CaptureControlPackets { duration_us: dur },
        );
        self.sleep(SimTime::from_millis(10))?;
        let rr = self.query(sc, d, AgentCommand::RequestRouteRefresh { peer: a })?;
        self.expect(d, rr)?;
        let mut caps = Vec::new();
        for (s, r) in [a, d].into_iter().zip(self.wait_all(vec![ca, cd])?) {
            let ReplyPayload::Capture(c) = self.expect(s, r)? else {
                return unexpected(s, "CaptureControlPackets");
            };
            caps.push(c);
        }
        let sent = caps[0]
            .iter()
            .any(|c| announces(c, CaptureDirection::Sent, d, p));
        let received = caps[1]
            .iter()
            .any(|c| announces(c, CaptureDirection::Received, a, p));
        if !sent {
            return found(
                Verdict::FaultySwitch(a),
                FaultCategory::RouteAdvertisementGeneration,
            );
        }
        if !received {
            return found(
                Verdict::FaultyLink(self.link(a, d)?),
                FaultCategory::PacketForwarding,
            );
        }
        let ReplyPayload::RibIn(rib_in) = self.ask(sc, d, AgentCommand::GetRibIn)? else {
            return unexpected(d, "GetRibIn");
        };
        if !rib_in
            .get(&a)
            .is_some_and(|v| v.iter().any(|e| e.prefix == p))
        {
            return found(
                Verdict::FaultySwitch(d),
                FaultCategory::RouteAdvertisementReception,
            );
        }
        Ok(())
    }

    /// The session between `a` and `b` is not established; `a` is known to
    /// answer.
    fn neighbor_down(&mut self, a: SwitchId, b: SwitchId) -> Step {
        self.enter(Script::NeighborDown, format!("{a}-{b}"));
        let sc = Script::NeighborDown;
        self.ask(sc, b, AgentCommand::GetBgpSessions)?;
        let dur = self.config.capture.0;
        let ca = self.send(
            sc,
            a,
            AgentCommand::CaptureControlPackets { duration_us: dur },
        );
        let cb = self.send(
            sc,
            b,
            AgentCommand::CaptureControlPackets { duration_us: dur },
        );
        let mut caps = Vec::new();
        for (s, r) in [a, b].into_iter().zip(self.wait_all(vec![ca, cb])?) {
            let ReplyPayload::Capture(c) = self.expect(s, r)? else {
                return unexpected(s, "CaptureControlPackets");
            };
            caps.push(c);
        }
        let a_sent = talks(&caps[0], CaptureDirection::Sent, b);
        let b_sent = talks(&caps[1], CaptureDirection::Sent, a);
        let a_got = talks(&caps[0], CaptureDirection::Received, b);
        let b_got = talks(&caps[1], CaptureDirection::Received, a);
        match (a_sent, b_sent) {
            (false, true) => found(Verdict::FaultySwitch(a), FaultCategory::ExternalInteraction),
            (true, false) => found(Verdict::FaultySwitch(b), FaultCategory::ExternalInteraction),
            (false, false) => inconclusive(format!("neither {a} nor {b} sends to the other")),
            _ if !a_got || !b_got => found(
                Verdict::FaultyLink(self.link(a, b)?),
                FaultCategory::PacketForwarding,
            ),
            _ => Ok(()),
        }
    }

    /// The agent on `ds` does not answer on its primary address. Reaches it
    /// over its secondary address through a neighbor and reruns the
    /// pipeline toward it.
    fn disconnected(&mut self, ds: SwitchId) -> Step {
        if !self.state.disconnected.insert(ds) || self.mgmt_override.contains_key(&ds) {
            return inconclusive(format!("{ds} unreachable"));
        }
        self.enter(Script::Disconnected, ds);
        self.state.used_disconnected = true;
        let sc = Script::Disconnected;
        let flow = FlowSpec {
            protocol: Some(crate::netmodel::Protocol::Udp),
            ..FlowSpec::between(self.dh_ip, self.net.model.config(ds).loopback)
        };
        let Some(path) = self.oracle_paths(sc, &flow)?.into_iter().next() else {
            return inconclusive(format!("no configured path to {ds}"));
        };
        let hops = &path[..path.len() - 1];
        let pending: Vec<_> = hops
            .iter()
            .map(|h| self.send(sc, *h, AgentCommand::GetCounters))
            .collect();
        let results = self.wait_all(pending)?;
        for (h, r) in hops.iter().zip(results) {
            if r == CmdResult::Timeout {
                self.disconnected(*h)?;
                return inconclusive(format!("{h} unreachable"));
            }
        }
        let mut candidates: Vec<SwitchId> = hops.last().copied().into_iter().collect();
        for n in self.net.model.topology.switch_neighbors(ds) {
            if !candidates.contains(&n) {
                candidates.push(n);
            }
        }
        let diag = Prefix::host(self.net.model.diag_secondary);
        let mut chosen = None;
        let mut failed = Vec::new();
        for n in candidates.iter().copied() {
            let cmd = AgentCommand::Relay {
                neighbor: ds,
                inner: Box::new(AgentCommand::InstallStaticRoute {
                    prefix: diag,
                    next_hop: NodeId::Switch(n),
                }),
            };
            match self.query(sc, n, cmd)? {
                CmdResult::Ok(_) => {
                    chosen = Some(n);
                    break;
                }
                CmdResult::Err(_) => failed.push(n),
                CmdResult::Timeout => {}
            }
        }
        let Some(n) = chosen else {
            let Some(&first) = failed.first() else {
                return inconclusive(format!("no neighbor of {ds} answers"));
            };
            let link = self.link(ds, first)?;
            return stop(Verdict::FaultAt {
                switch: ds,
                neighbor: first,
                link,
            });
        };
        let to_n = FlowSpec::between(self.dh_ip, self.net.model.config(n).loopback);
        let Some(mut route) = self.oracle_paths(sc, &to_n)?.into_iter().next() else {
            return inconclusive(format!("no configured path to {n}"));
        };
        route.push(ds);
        let sip = self.net.model.config(ds).secondary;
        let target = Prefix::host(sip);
        let pending: Vec<_> = route
            .windows(2)
            .map(|w| {
                let cmd = AgentCommand::InstallStaticRoute {
                    prefix: target,
                    next_hop: NodeId::Switch(w[1]),
                };
                self.send(sc, w[0], cmd)
            })
            .collect();
        let results = self.wait_all(pending)?;
        for (w, r) in route.windows(2).zip(results) {
            if matches!(r, CmdResult::Ok(_)) {
                self.state.statics.push((w[0], target, None));
            }
        }
        self.state.statics.push((ds, diag, Some(n)));
        self.mgmt_override.insert(ds, sip);
        self.diagnose_flow(&flow)?;
        stop(Verdict::FaultySwitch(ds))
    }

    fn ttl_check(&mut self, flow: &FlowSpec, path: &[SwitchId], x: SwitchId, iface: u8) -> Step {
        self.enter(Script::TtlCheck, x);
        let sc = Script::TtlCheck;
        for (i, s) in path.iter().copied().enumerate() {
            let ReplyPayload::HeaderLogs(logs) = self.ask(sc, s, AgentCommand::GetHeaderLogs)?
            else {
                return unexpected(s, "GetHeaderLogs");
            };
            let ingress: Vec<&LoggedHeader> = logs
                .ports
                .values()
                .flat_map(|l| l.ingress_recent.iter())
                .filter(|h| of_flow(flow, h))
                .collect();
            if ingress.is_empty() {
                if i == 0 {
                    return inconclusive(format!("{s} saw none of the flow"));
                }
                return self.route_check(flow, path[i - 1]);
            }
            if s == x {
                return inconclusive(format!("no TTL anomaly before {x}"));
            }
            let egress: BTreeMap<u16, u8> = logs
                .ports
                .values()
                .flat_map(|l| l.egress_recent.iter())
                .filter(|h| of_flow(flow, h))
                .map(|h| (h.ident, h.ttl))
                .collect();
            let bad = ingress.iter().any(|h| {
                egress
                    .get(&h.ident)
                    .is_some_and(|t| h.ttl.saturating_sub(*t) != 1)
            });
            if bad {
                return found(
                    Verdict::FaultySwitch(s),
                    FaultCategory::PacketTransformation,
                );
            }
        }
        let u = self.find_divergence(flow, path, x, iface)?;
        self.route_check(flow, u)
    }

    fn corrupted_header(&mut self, flow: &FlowSpec, x: SwitchId, iface: u8) -> Step {
        self.enter(Script::Corruption, x);
        let Some(link) = self.net.link_of(NodeId::Switch(x), iface) else {
            return inconclusive(format!("{x} port {iface} has no link"));
        };
        let Some(up) = self.net.model.topology.link(link).other(NodeId::Switch(x)) else {
            return inconclusive(format!("{link} is not attached to {x}"));
        };
        let NodeId::Switch(u) = up.node else {
            return found(
                Verdict::FaultyLink(link),
                FaultCategory::PacketTransformation,
            );
        };
        let expected = self.oracle.should_forward(u, x, flow)?;
        self.oracle_note(
            Script::Corruption,
            "should_forward",
            format!("{u}>{x}"),
            expected.to_string(),
        );
        let ReplyPayload::HeaderLogs(logs) =
            self.ask(Script::Corruption, u, AgentCommand::GetHeaderLogs)?
        else {
            return unexpected(u, "GetHeaderLogs");
        };
        let bad = logs
            .ports
            .get(&up.iface)
            .is_some_and(|l| l.egress_recent.iter().any(|h| !h.checksum_ok));
        if bad {
            found(
                Verdict::FaultySwitch(u),
                FaultCategory::PacketTransformation,
            )
        } else {
            found(
                Verdict::FaultyLink(link),
                FaultCategory::PacketTransformation,
            )
        }
    }

    /// No report arrived: runs a fresh flow over one full counter window and
    /// checks every switch and link on the path for unexplained loss.
    fn sweep(&mut self, flow: &FlowSpec, path: &[SwitchId]) -> Step {
        self.enter(Script::Locate, "sweep");
        let sc = Script::Locate;
        let len = self.net.switch(path[0]).dp.counters.window_len_us;
        let lead = SimTime::from_millis(2);
        let mut w = self.net.now.0 / len + 1;
        if SimTime(w * len) < self.net.now + lead {
            w += 1;
        }
        self.run_to(SimTime(w * len).saturating_sub(lead))?;
        let count = (len / self.config.flow_interval.0.max(1)) as u32 + 20;
        let edge = path[0];
        let r = self.query(sc, edge, self.inject(flow, path, count, 0))?;
        self.expect(edge, r)?;
        self.run_to(SimTime(w * len) + SimTime::from_millis(20))?;
        let mut markers = Vec::new();
        for p in path.windows(2) {
            let link = self.link(p[0], p[1])?;
            markers.push(self.send(sc, p[0], AgentCommand::RunLinkMarkerTest { link }));
        }
        self.run_to(SimTime((w + 1) * len) + SimTime::from_millis(1))?;
        let tests: Vec<_> = path
            .iter()
            .map(|s| self.send(sc, *s, AgentCommand::RunSwitchDropTest { window: Some(w) }))
            .collect();
        let nm = markers.len();
        let mut results = self.wait_all(markers.into_iter().chain(tests).collect())?;
        let tests = results.split_off(nm);
        let mut reports = Vec::new();
        for (s, r) in path.iter().zip(tests) {
            let ReplyPayload::DropTest(d) = self.expect(*s, r)? else {
                return unexpected(*s, "RunSwitchDropTest");
            };
            reports.push(d);
        }
        for (i, s) in path.iter().copied().enumerate() {
            let d = &reports[i];
            if let Some((reason, ports)) = d.drops.iter().next() {
                let iface = ports.keys().next().copied().unwrap_or(0);
                self.state.reset.insert(s);
                return self.dispatch_drop(flow, path, s, iface, *reason);
            }
            if significant(d.report.deficit, d.report.ingress_sum) {
                return found(Verdict::FaultySwitch(s), FaultCategory::PacketForwarding);
            }
            if let Some(next) = reports.get(i + 1) {
                if d.report.ingress_sum > 0
                    && next.report.ingress_sum == 0
                    && d.report.local_deliveries == 0
                {
                    return self.route_check(flow, s);
                }
            }
            if i + 1 < path.len() {
                let m = std::mem::replace(&mut results[i], CmdResult::Timeout);
                let ReplyPayload::Marker(m) = self.expect(s, m)? else {
                    return unexpected(s, "RunLinkMarkerTest");
                };
                if significant(m.lost(), m.egress_delta) {
                    return found(Verdict::FaultyLink(m.link), FaultCategory::PacketForwarding);
                }
            }
        }
        Ok(())
    }

    /// Sends mirrored probes and compares the payload checksums each switch
    /// reports at ingress and egress.
    fn payload_probe(&mut self, flow: &FlowSpec, path: &[SwitchId]) -> Step {
        self.enter(Script::Corruption, "probe");
        let sc = Script::Corruption;
        let (src, _) = ends(flow);
        for _ in 0..self.config.probe_rounds {
            let since = self.net.now;
            let edge = path[0];
            let r = self.query(
                sc,
                edge,
                self.inject(flow, path, self.config.probe_packets, MIRROR_DSCP),
            )?;
            self.expect(edge, r)?;
            self.sleep(self.config.probe_wait)?;
            let recs: Vec<_> = self
                .checksums
                .iter()
                .filter(|(t, m)| *t >= since && m.src == src)
                .map(|(_, m)| m.clone())
                .collect();
            for (i, s) in path.iter().copied().enumerate() {
                let mine = recs.iter().filter(|m| m.switch == s);
                for m in mine {
                    if m.ingress_intact && m.egress_intact == Some(false) {
                        return found(
                            Verdict::FaultySwitch(s),
                            FaultCategory::PacketTransformation,
                        );
                    }
                    if m.ingress_intact || i == 0 {
                        continue;
                    }
                    let prev = path[i - 1];
                    let intact_out = recs.iter().any(|r| {
                        r.switch == prev && r.ident == m.ident && r.egress_intact == Some(true)
                    });
                    if intact_out {
                        let link = self.link(prev, s)?;
                        return found(
                            Verdict::FaultyLink(link),
                            FaultCategory::PacketTransformation,
                        );
                    }
                }
            }
            let pending: Vec<_> = path
                .iter()
                .map(|s| self.send(sc, *s, AgentCommand::ResetSuppressFlag))
                .collect();
            self.wait_all(pending)?;
        }
        Ok(())
    }
}
