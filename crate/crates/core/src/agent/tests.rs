use super::*;
use crate::faults::{FaultInjector, FaultLocation, FaultSpec, FaultType};
use crate::netmodel::generate::reference_model;
use crate::netmodel::{HostId, Prefix, MIRROR_DSCP};
use crate::simkernel::{SimConfig, StopCondition};
use proptest::prelude::*;

fn converged() -> Network {
    let mut net = Network::from_model(reference_model(), SimConfig::default());
    net.run_until(StopCondition::Quiescence).expect("converges");
    net
}

fn dh(net: &Network) -> HostId {
    net.diagnosis_host()
}

/// Every management message that reached the diagnosis host so far.
fn drain(net: &mut Network) -> Vec<MgmtBody> {
    let h = dh(net);
    let mut out = Vec::new();
    while let Some((_, p)) = net.host_mut(h).inbox.pop_front() {
        if let Body::Mgmt(b) = &p.body {
            out.push(decode(b).expect("valid message"));
        }
    }
    out
}

/// Sends `cmd` to `s` from the diagnosis host and waits for its reply.
fn ask(net: &mut Network, s: SwitchId, cmd: AgentCommand) -> Result<ReplyPayload, String> {
    let h = dh(net);
    let src = net.host(h).ip;
    let dst = net.model.config(s).loopback;
    let id = net.now.0 + 1;
    let env = CommandEnvelope {
        request_id: id,
        command: cmd,
    };
    net.host_send(h, mgmt_packet(src, dst, MgmtBody::Command(env)));
    let deadline = net.now + SimTime::from_secs(3);
    while net.now < deadline {
        net.run_until(StopCondition::Inbox { host: h, deadline })
            .unwrap();
        for m in drain(net) {
            if let MgmtBody::Reply(r) = m {
                if r.request_id == id {
                    return r.result;
                }
            }
        }
    }
    panic!("no reply from {s}");
}

fn h7_to_h3(net: &Network) -> FlowSpec {
    FlowSpec {
        protocol: Some(Protocol::Udp),
        ..FlowSpec::between(net.host(HostId(7)).ip, net.host(HostId(3)).ip)
    }
}

fn inject(flow: &FlowSpec, count: u32, dscp: u8) -> AgentCommand {
    AgentCommand::InjectFlow {
        flow: flow.clone(),
        count,
        interval_us: 1000,
        ttl: 64,
        dscp,
    }
}

fn edge() -> SwitchId {
    SwitchId(19)
}

#[test]
fn fib_readback_equals_installed_table() {
    let mut net = converged();
    for s in [SwitchId(0), SwitchId(10), SwitchId(17)] {
        let Ok(ReplyPayload::Fib(f)) = ask(&mut net, s, AgentCommand::GetFib) else {
            panic!("fib reply")
        };
        assert_eq!(f, net.switch(s).dp.fib.entries());
    }
}

#[test]
fn traced_flow_is_counted_at_the_edge() {
    let mut net = converged();
    let flow = h7_to_h3(&net);
    let iface = net.host(HostId(7)).link;
    let port = net
        .model
        .topology
        .links
        .get(iface.index())
        .and_then(|l| l.endpoint_of(NodeId::Switch(edge())))
        .unwrap()
        .iface;
    let before = net.switch(edge()).dp.counters.ports.get(&port).copied();
    let before = before.map_or(0, |p| p.ingress.total);
    ask(
        &mut net,
        edge(),
        AgentCommand::SetTraceFilter { flow: flow.clone() },
    )
    .unwrap();
    ask(&mut net, edge(), inject(&flow, 50, 0)).unwrap();
    net.advance(SimTime::from_millis(200)).unwrap();
    let after = net.switch(edge()).dp.counters.ports[&port].ingress.total;
    assert_eq!(after - before, 50);
}

#[test]
fn relay_returns_the_same_payload_as_a_direct_command() {
    let mut net = converged();
    let direct = ask(&mut net, SwitchId(10), AgentCommand::GetRib).unwrap();
    let relayed = ask(
        &mut net,
        SwitchId(17),
        AgentCommand::Relay {
            neighbor: SwitchId(10),
            inner: Box::new(AgentCommand::GetRib),
        },
    )
    .unwrap();
    let ReplyPayload::Relayed(inner) = relayed else {
        panic!("relayed reply")
    };
    assert_eq!(inner.switch, SwitchId(10));
    assert_eq!(inner.result, Ok(direct));
}

#[test]
fn relay_over_a_dead_link_fails() {
    let mut net = converged();
    let l = net
        .model
        .topology
        .link_between(SwitchId(17), SwitchId(10))
        .unwrap()
        .id;
    FaultInjector::new()
        .inject(
            &mut net,
            FaultSpec::new(FaultType::LinkDown, FaultLocation::Link(l)),
        )
        .unwrap();
    let r = ask(
        &mut net,
        SwitchId(17),
        AgentCommand::Relay {
            neighbor: SwitchId(10),
            inner: Box::new(AgentCommand::GetRib),
        },
    );
    assert!(r.is_err(), "{r:?}");
}

#[test]
fn relay_to_a_non_neighbor_is_refused() {
    let mut net = converged();
    let r = ask(
        &mut net,
        SwitchId(0),
        AgentCommand::Relay {
            neighbor: SwitchId(17),
            inner: Box::new(AgentCommand::GetRib),
        },
    );
    assert!(r.is_err(), "{r:?}");
}

fn fault_reports(msgs: &[MgmtBody], s: SwitchId) -> usize {
    msgs.iter()
        .filter(|m| matches!(m, MgmtBody::FaultReport(r) if r.switch == s))
        .count()
}

#[test]
fn one_fault_report_until_the_flag_is_reset() {
    let mut net = converged();
    let h3: Prefix = "10.4.0.0/24".parse().unwrap();
    FaultInjector::new()
        .inject(
            &mut net,
            FaultSpec::new(
                FaultType::IncorrectForwardingDrop,
                FaultLocation::Switch(SwitchId(10)),
            )
            .with_prefix(h3),
        )
        .unwrap();
    let flow = h7_to_h3(&net);
    ask(
        &mut net,
        edge(),
        AgentCommand::SetTraceFilter { flow: flow.clone() },
    )
    .unwrap();
    let burst = |net: &mut Network| {
        ask(net, edge(), inject(&flow, 100, 0)).unwrap();
        net.advance(SimTime::from_millis(400)).unwrap();
        drain(net)
    };
    let first = burst(&mut net);
    assert_eq!(fault_reports(&first, SwitchId(10)), 1);
    let r = first
        .iter()
        .find_map(|m| match m {
            MgmtBody::FaultReport(r) => Some(r.clone()),
            _ => None,
        })
        .unwrap();
    assert_eq!(r.reason, crate::dataplane::DropReason::NoFibEntry);
    assert_eq!(fault_reports(&burst(&mut net), SwitchId(10)), 0);
    assert_eq!(fault_reports(&burst(&mut net), SwitchId(10)), 0);
    ask(&mut net, SwitchId(10), AgentCommand::ResetSuppressFlag).unwrap();
    assert_eq!(fault_reports(&burst(&mut net), SwitchId(10)), 1);
}

#[test]
fn silent_drops_never_produce_a_fault_report() {
    let mut net = converged();
    FaultInjector::new()
        .inject(
            &mut net,
            FaultSpec::new(
                FaultType::SilentDropInSwitch,
                FaultLocation::Switch(SwitchId(10)),
            ),
        )
        .unwrap();
    let flow = h7_to_h3(&net);
    ask(
        &mut net,
        edge(),
        AgentCommand::SetTraceFilter { flow: flow.clone() },
    )
    .unwrap();
    ask(&mut net, edge(), inject(&flow, 200, 0)).unwrap();
    net.advance(SimTime::from_millis(600)).unwrap();
    let msgs = drain(&mut net);
    assert!(msgs.iter().all(|m| !matches!(m, MgmtBody::FaultReport(_))));
}

#[test]
fn checksum_reports_stop_at_the_cap() {
    let mut net = converged();
    let flow = h7_to_h3(&net);
    ask(&mut net, edge(), inject(&flow, 20, MIRROR_DSCP)).unwrap();
    net.advance(SimTime::from_millis(200)).unwrap();
    let msgs = drain(&mut net);
    let from = |s: SwitchId| {
        msgs.iter()
            .filter(|m| matches!(m, MgmtBody::Checksum(c) if c.switch == s))
            .count()
    };
    assert_eq!(from(SwitchId(10)), 10);
    assert_eq!(from(edge()), 10);
    ask(&mut net, SwitchId(10), AgentCommand::ResetSuppressFlag).unwrap();
    ask(&mut net, edge(), inject(&flow, 3, MIRROR_DSCP)).unwrap();
    net.advance(SimTime::from_millis(100)).unwrap();
    let msgs = drain(&mut net);
    let again: Vec<_> = msgs
        .iter()
        .filter_map(|m| match m {
            MgmtBody::Checksum(c) => Some(c.switch),
            _ => None,
        })
        .collect();
    assert_eq!(again, vec![SwitchId(10); 3]);
}

#[test]
fn fault_free_digests_agree_along_the_path() {
    let mut net = converged();
    let flow = h7_to_h3(&net);
    ask(&mut net, edge(), inject(&flow, 1, MIRROR_DSCP)).unwrap();
    net.advance(SimTime::from_millis(100)).unwrap();
    let digests: Vec<u64> = drain(&mut net)
        .into_iter()
        .filter_map(|m| match m {
            MgmtBody::Checksum(c) => Some(c.ingress_digest),
            _ => None,
        })
        .collect();
    assert!(digests.len() >= 3);
    assert!(digests.iter().all(|d| *d == digests[0]));
}

#[test]
fn routing_commands_fail_when_the_daemon_is_down() {
    let mut net = converged();
    FaultInjector::new()
        .inject(
            &mut net,
            FaultSpec::new(
                FaultType::RoutingDaemonCrash,
                FaultLocation::Switch(SwitchId(1)),
            ),
        )
        .unwrap();
    assert_eq!(
        ask(&mut net, SwitchId(1), AgentCommand::GetRib),
        Err(ROUTING_DAEMON_DOWN.to_string())
    );
    assert!(ask(&mut net, SwitchId(1), AgentCommand::GetFib).is_ok());
}

#[test]
fn static_routes_install_and_remove() {
    let mut net = converged();
    let p: Prefix = "192.0.2.0/24".parse().unwrap();
    let next_hop = NodeId::Switch(SwitchId(17));
    ask(
        &mut net,
        SwitchId(10),
        AgentCommand::InstallStaticRoute {
            prefix: p,
            next_hop,
        },
    )
    .unwrap();
    assert!(net
        .switch(SwitchId(10))
        .dp
        .fib
        .entries()
        .iter()
        .any(|e| e.prefix == p));
    ask(
        &mut net,
        SwitchId(10),
        AgentCommand::RemoveStaticRoute { prefix: p },
    )
    .unwrap();
    assert!(net.switch(SwitchId(10)).extra_statics.is_empty());
    assert!(ask(
        &mut net,
        SwitchId(10),
        AgentCommand::RemoveStaticRoute { prefix: p }
    )
    .is_err());
}

#[test]
fn route_oscillation_raises_a_churn_anomaly() {
    let mut net = converged();
    let p = net.model.config(SwitchId(10)).originated[0];
    net.start_oscillation(SwitchId(10), p, SimTime::from_millis(10));
    net.advance(SimTime::from_secs(3)).unwrap();
    assert!(net
        .anomalies
        .iter()
        .any(|a| a.kind == AnomalyKind::RibChurn));
    let msgs = drain(&mut net);
    assert!(msgs
        .iter()
        .any(|m| matches!(m, MgmtBody::Anomaly(a) if a.kind == AnomalyKind::RibChurn)));
}

#[test]
fn steady_state_raises_no_anomaly() {
    let mut net = converged();
    net.anomalies.clear();
    net.advance(SimTime::from_secs(10)).unwrap();
    assert!(net.anomalies.is_empty(), "{:?}", net.anomalies);
}

#[test]
fn nearly_full_fib_raises_a_resource_anomaly() {
    let mut net = converged();
    let s = SwitchId(10);
    let n = net.switch(s).dp.fib.len() as u64;
    // n entries is above 95% of a capacity of n + 1.
    net.switch_mut(s).agent.config.fib_capacity = n + 1;
    net.advance(SimTime::from_secs(2)).unwrap();
    let fired: Vec<_> = net.anomalies.iter().filter(|a| a.switch == s).collect();
    assert_eq!(fired.len(), 1);
    assert_eq!(fired[0].kind, AnomalyKind::FibResource);
    // Latched: no repeat while the condition persists.
    net.advance(SimTime::from_secs(3)).unwrap();
    assert_eq!(net.anomalies.iter().filter(|a| a.switch == s).count(), 1);
}

fn read_command(i: usize) -> AgentCommand {
    match i % 10 {
        0 => AgentCommand::GetCounters,
        1 => AgentCommand::GetDropCounters,
        2 => AgentCommand::GetFib,
        3 => AgentCommand::GetRib,
        4 => AgentCommand::GetRibIn,
        5 => AgentCommand::GetRibOut { peer: None },
        6 => AgentCommand::GetAcl,
        7 => AgentCommand::GetHeaderLogs,
        8 => AgentCommand::GetBgpSessions,
        _ => AgentCommand::RunSwitchDropTest { window: None },
    }
}

type Snapshot = (u64, Vec<(Vec<FlowSpec>, usize, bool, u32)>);

fn snapshot(net: &Network) -> Snapshot {
    (
        net.state_hash(),
        net.switches
            .iter()
            .map(|s| {
                (
                    s.dp.trace_filters.clone(),
                    s.extra_statics.len(),
                    s.dp.trigger.suppress,
                    s.agent.checksum_sent,
                )
            })
            .collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn read_commands_do_not_change_switch_state(
        cmds in proptest::collection::vec((0u32..20, 0usize..10), 1..8)
    ) {
        let mut net = converged();
        let before = snapshot(&net);
        for (s, c) in cmds {
            let _ = ask(&mut net, SwitchId(s), read_command(c));
        }
        prop_assert_eq!(snapshot(&net), before);
    }
}
