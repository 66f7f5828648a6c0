use super::*;
use crate::faults::{FaultCategory, FaultInjector, FaultLocation, FaultSpec, FaultType};
use crate::netmodel::generate::reference_model;
use crate::netmodel::{AclAction, AclRule};
use crate::oracle::expected_state;
use crate::simkernel::{SimConfig, StopCondition};

fn converged() -> Network {
    let mut net = Network::from_model(reference_model(), SimConfig::default());
    net.run_until(StopCondition::Quiescence).expect("converges");
    net
}

fn h3() -> Prefix {
    "10.4.0.0/24".parse().unwrap()
}

fn link(net: &Network, a: u32, b: u32) -> LinkId {
    net.model
        .topology
        .link_between(SwitchId(a), SwitchId(b))
        .unwrap()
        .id
}

fn diagnose_fault(spec: Option<FaultSpec>, src: u32, dst: u32) -> (Diagnosis, Network) {
    let mut net = converged();
    if let Some(spec) = spec {
        FaultInjector::new()
            .inject(&mut net, spec)
            .expect("valid fault");
        net.advance(SimTime::from_secs(3)).unwrap();
    }
    let oracle = expected_state(&net.model).unwrap();
    let report = FailureReport::between_hosts(&net, HostId(src), HostId(dst));
    let d = Manager::new(&mut net, oracle, ManagerConfig::default())
        .diagnose(&report)
        .expect("consensus");
    (d, net)
}

fn sw(kind: FaultType, s: u32) -> FaultSpec {
    FaultSpec::new(kind, FaultLocation::Switch(SwitchId(s))).with_stream(3)
}

fn session(kind: FaultType, s: u32, peer: u32) -> FaultSpec {
    FaultSpec::new(
        kind,
        FaultLocation::Session {
            switch: SwitchId(s),
            peer: SwitchId(peer),
        },
    )
}

fn located(spec: FaultSpec, category: Option<FaultCategory>) {
    let label = spec.to_string();
    let culprit = spec.location.culprit();
    let (d, _) = diagnose_fault(Some(spec), 7, 3);
    assert!(
        d.verdict.names(culprit),
        "{label}: got {} after {:?}",
        d.verdict,
        d.script_sequence(1)
    );
    if category.is_some() {
        assert_eq!(d.category, category, "{label}");
    }
    assert!(d.runs_to_consensus >= 2);
}

#[test]
fn silent_switch_drop_is_located_by_counters() {
    located(
        sw(FaultType::SilentDropInSwitch, 10),
        Some(FaultCategory::PacketForwarding),
    );
}

#[test]
fn silent_link_drop_is_located_by_markers() {
    let net = converged();
    let l = link(&net, 10, 17);
    located(
        FaultSpec::new(FaultType::SilentDropOnLink, FaultLocation::Link(l)).with_stream(3),
        None,
    );
}

#[test]
fn link_header_corruption_blames_the_link() {
    let net = converged();
    let l = link(&net, 10, 17);
    let spec = FaultSpec::new(FaultType::CorruptionOnLinkIP, FaultLocation::Link(l)).with_stream(3);
    let (d, _) = diagnose_fault(Some(spec), 7, 3);
    assert_eq!(d.verdict, Verdict::FaultyLink(l));
    assert!(d.used_fault_report);
}

#[test]
fn bad_ttl_decrement_is_located_by_header_logs() {
    located(
        sw(FaultType::IncorrectDecrementTTL, 10),
        Some(FaultCategory::PacketTransformation),
    );
}

#[test]
fn payload_corruption_is_located_by_digests() {
    let (d, _) = diagnose_fault(
        Some(sw(FaultType::PacketPayloadCorruptionInSwitch, 10)),
        7,
        3,
    );
    assert_eq!(d.verdict, Verdict::FaultySwitch(SwitchId(10)));
    assert_eq!(d.category, Some(FaultCategory::PacketTransformation));
    assert!(!d.used_fault_report);
}

#[test]
fn forced_drop_is_located_by_its_fault_report() {
    let (d, _) = diagnose_fault(
        Some(sw(FaultType::IncorrectForwardingDrop, 10).with_prefix(h3())),
        7,
        3,
    );
    assert_eq!(d.verdict, Verdict::FaultySwitch(SwitchId(10)));
    assert_eq!(d.category, Some(FaultCategory::PacketForwarding));
    assert!(d.used_fault_report);
}

#[test]
fn fib_rib_mismatch_is_a_table_generation_fault() {
    located(
        sw(FaultType::FIBDiscrepancy, 10).with_prefix(h3()),
        Some(FaultCategory::DataPlaneTableGeneration),
    );
}

#[test]
fn inbound_update_mangling_blames_the_receiver() {
    located(
        session(FaultType::IngressBgpUpdateModification, 17, 10).with_prefix(h3()),
        Some(FaultCategory::RouteAdvertisementReception),
    );
}

#[test]
fn outbound_update_mangling_blames_the_sender() {
    located(
        session(FaultType::EgressBgpUpdateModification, 10, 17).with_prefix(h3()),
        Some(FaultCategory::RouteAdvertisementGeneration),
    );
}

#[test]
fn blocked_session_blames_the_blocking_side() {
    located(session(FaultType::BgpNeighborMissing, 17, 10), None);
    located(session(FaultType::BgpNeighborMissing, 10, 17), None);
}

#[test]
fn daemon_crash_goes_through_the_disconnected_procedure() {
    let (d, _) = diagnose_fault(Some(sw(FaultType::RoutingDaemonCrash, 10)), 7, 3);
    assert_eq!(d.verdict, Verdict::FaultySwitch(SwitchId(10)));
    assert!(d.used_disconnected);
    let seq = d.script_sequence(1);
    let want = [
        Script::NoForwarding,
        Script::RouteAdvMissing,
        Script::NeighborDown,
        Script::Disconnected,
    ];
    let start = seq
        .iter()
        .position(|s| *s == want[0])
        .expect("no-forwarding ran");
    assert_eq!(&seq[start..start + want.len()], &want, "{seq:?}");
    // The disconnected switch was reached through a relay.
    assert!(d
        .evidence
        .iter()
        .any(|e| e.primitive.starts_with("Relay(InstallStaticRoute)") && e.summary == "ack"));
}

#[test]
fn healthy_network_has_no_fault() {
    let (d, _) = diagnose_fault(None, 7, 3);
    assert_eq!(d.verdict, Verdict::NoFaultFound);
    assert_eq!(d.runs_to_consensus, 2);
    assert!(!d.used_fault_report);
}

#[test]
fn diagnosis_leaves_no_state_behind() {
    let mut net = converged();
    let fibs: Vec<_> = net.switches.iter().map(|s| s.dp.fib.clone()).collect();
    let oracle = expected_state(&net.model).unwrap();
    let report = FailureReport::between_hosts(&net, HostId(7), HostId(3));
    Manager::new(&mut net, oracle, ManagerConfig::default())
        .diagnose(&report)
        .unwrap();
    for (s, fib) in net.switches.iter().zip(&fibs) {
        assert!(s.dp.trace_filters.is_empty(), "{} still traces", s.id);
        assert!(s.extra_statics.is_empty(), "{} keeps statics", s.id);
        assert_eq!(&s.dp.fib, fib, "{} FIB changed", s.id);
    }
}

#[test]
fn crash_diagnosis_removes_its_static_routes() {
    let (_, net) = diagnose_fault(Some(sw(FaultType::RoutingDaemonCrash, 10)), 7, 3);
    for s in &net.switches {
        assert!(s.extra_statics.is_empty(), "{} keeps statics", s.id);
        assert!(s.dp.trace_filters.is_empty(), "{} still traces", s.id);
    }
}

#[test]
fn configured_deny_is_not_a_fault() {
    let mut model = reference_model();
    let h7 = model.topology.hosts[7].ip;
    let h3 = model.topology.hosts[3].ip;
    model
        .configs
        .get_mut(&SwitchId(19))
        .unwrap()
        .acl
        .push(AclRule {
            pattern: FlowSpec::between(h7, h3),
            action: AclAction::Deny,
        });
    let mut net = Network::from_model(model, SimConfig::default());
    net.run_until(StopCondition::Quiescence).unwrap();
    let oracle = expected_state(&net.model).unwrap();
    let report = FailureReport::between_hosts(&net, HostId(7), HostId(3));
    let d = Manager::new(&mut net, oracle, ManagerConfig::default())
        .diagnose(&report)
        .unwrap();
    assert!(
        matches!(d.verdict, Verdict::ConfigNotFault(_)),
        "{}",
        d.verdict
    );
}

#[test]
fn fault_appearing_mid_diagnosis_needs_a_third_run() {
    let mut net = converged();
    let oracle = expected_state(&net.model).unwrap();
    let report = FailureReport::between_hosts(&net, HostId(7), HostId(3));
    let mut inj = FaultInjector::new();
    let d = Manager::new(&mut net, oracle, ManagerConfig::default())
        .diagnose_with(&report, |run, net| {
            if run == 2 {
                inj.inject(net, sw(FaultType::SilentDropInSwitch, 10))
                    .unwrap();
            }
        })
        .unwrap();
    assert_eq!(d.runs[0].finding.verdict, Verdict::NoFaultFound);
    assert_eq!(d.verdict, Verdict::FaultySwitch(SwitchId(10)));
    assert_eq!(d.runs_to_consensus, 3);
    let last: Vec<_> = d.runs.iter().rev().take(2).map(|r| &r.finding).collect();
    assert_eq!(last[0], last[1]);
}

#[test]
fn fault_flapping_every_run_gives_no_consensus() {
    let mut net = converged();
    let oracle = expected_state(&net.model).unwrap();
    let report = FailureReport::between_hosts(&net, HostId(7), HostId(3));
    let mut inj = FaultInjector::new();
    let mut handle = None;
    let r = Manager::new(&mut net, oracle, ManagerConfig::default()).diagnose_with(
        &report,
        |_, net| match handle.take() {
            Some(h) => {
                inj.revert(net, h).unwrap();
            }
            None => {
                handle = Some(
                    inj.inject(
                        net,
                        sw(FaultType::IncorrectForwardingDrop, 10).with_prefix(h3()),
                    )
                    .unwrap(),
                )
            }
        },
    );
    match r {
        Err(ManagerError::NoConsensus { runs }) => assert_eq!(runs.len(), 5),
        Ok(d) => panic!("unexpected consensus on {}", d.verdict),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn evidence_matches_commands_the_agents_handled() {
    for spec in [
        None,
        Some(sw(FaultType::SilentDropInSwitch, 10)),
        Some(sw(FaultType::RoutingDaemonCrash, 10)),
    ] {
        let mut net = converged();
        if let Some(spec) = spec {
            FaultInjector::new().inject(&mut net, spec).unwrap();
            net.advance(SimTime::from_secs(3)).unwrap();
        }
        let before: Vec<u64> = net
            .switches
            .iter()
            .map(|s| s.agent.commands_handled)
            .collect();
        let oracle = expected_state(&net.model).unwrap();
        let report = FailureReport::between_hosts(&net, HostId(7), HostId(3));
        let d = Manager::new(&mut net, oracle, ManagerConfig::default())
            .diagnose(&report)
            .unwrap();
        assert_eq!(d.primitive_count, d.evidence.len());
        let mut answered = vec![0u64; net.switches.len()];
        for e in &d.evidence {
            assert!(e.run >= 1 && e.run <= d.runs_to_consensus);
            assert!(e.time >= d.started && e.time <= d.finished);
            assert_ne!(e.summary, "pending");
            if e.primitive.starts_with("oracle.") {
                continue;
            }
            if e.summary != "timeout" {
                let s = SwitchId(e.target.trim_start_matches('S').parse().unwrap());
                answered[s.index()] += 1;
            }
        }
        for (s, n) in net.switches.iter().zip(&answered) {
            let handled = s.agent.commands_handled - before[s.id.index()];
            assert!(handled >= *n, "{}: {handled} handled, {n} answered", s.id);
        }
        let runs: u32 = d.runs.iter().map(|r| r.primitives as u32).sum();
        assert_eq!(runs as usize, d.primitive_count);
    }
}
