//! Acceptance checks for the end-to-end behavior. Each test prints one
//! `PASS` or `FAIL` line per criterion before asserting it.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use netdx::campaign::{run_double_campaign, run_single_campaign, CampaignConfig, CampaignResult};
use netdx::faults::{FaultInjector, FaultLocation, FaultSpec, FaultType};
use netdx::manager::{FailureReport, Manager, ManagerConfig, Script, Verdict};
use netdx::netmodel::generate::{random_model_sized, reference_model};
use netdx::netmodel::{FlowSpec, HostId, NetworkModel, Protocol, SimTime, SwitchId};
use netdx::oracle::{expected_state, ExpectedState};
use netdx::simkernel::{Network, SimConfig, StopCondition};

const SEED: u64 = 1;

fn check(id: &str, ok: bool, detail: impl AsRef<str>) {
    println!(
        "{} criterion {id}: {}",
        if ok { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    assert!(ok, "criterion {id} failed: {}", detail.as_ref());
}

fn single() -> &'static CampaignResult {
    static R: OnceLock<CampaignResult> = OnceLock::new();
    R.get_or_init(|| {
        let r = run_single_campaign(reference_model(), &CampaignConfig::single(SEED))
            .expect("single campaign runs");
        print!("{}", r.summary_table());
        r
    })
}

fn converged(model: NetworkModel) -> Network {
    let mut net = Network::from_model(model, SimConfig::default());
    net.run_until(StopCondition::Quiescence).expect("converges");
    net
}

#[test]
fn c1_single_fault_campaign_is_fully_correct() {
    let r = single();
    let every_type = FaultType::CAMPAIGN
        .iter()
        .all(|k| r.per_type.iter().any(|t| t.fault_type == *k && t.runs == 10));
    check(
        "1",
        r.total == 100 && r.correct == 100 && every_type,
        format!("{}/{} single-fault runs correct, 10 per type", r.correct, r.total),
    );
}

#[test]
fn c2_double_fault_campaign_is_fully_correct() {
    let r = run_double_campaign(reference_model(), &CampaignConfig::double(SEED))
        .expect("double campaign runs");
    print!("{}", r.summary_table());
    let first = r.mean_primitives_first.unwrap_or(0.0);
    let second = r.mean_primitives_second.unwrap_or(f64::INFINITY);
    check(
        "2",
        r.total == 100 && r.correct == 100,
        format!("{}/{} double-fault runs with both faults found", r.correct, r.total),
    );
    check(
        "2",
        first > second,
        format!("mean primitives first {first:.2} > second {second:.2}"),
    );
}

#[test]
fn c3_fault_report_usage_per_type() {
    use FaultType::*;
    let r = single();
    let used: BTreeMap<FaultType, (u32, u32)> = r
        .per_type
        .iter()
        .map(|t| (t.fault_type, (t.used_fault_report, t.runs)))
        .collect();
    let frac = |k: FaultType| {
        let (u, n) = used[&k];
        u as f64 / n.max(1) as f64
    };
    for k in [
        IncorrectForwardingDrop,
        IncorrectDecrementTTL,
        CorruptionOnLinkIP,
        IngressBgpUpdateModification,
        EgressBgpUpdateModification,
    ] {
        check(
            "3",
            frac(k) >= 0.8,
            format!("{k}: {}/{} runs used a fault report (>= 80%)", used[&k].0, used[&k].1),
        );
    }
    for k in [
        SilentDropInSwitch,
        SilentDropOnLink,
        PacketPayloadCorruptionInSwitch,
    ] {
        check(
            "3",
            used[&k].0 == 0,
            format!("{k}: {} runs used a fault report (== 0)", used[&k].0),
        );
    }
    for k in [FIBDiscrepancy, BgpNeighborMissing] {
        check(
            "3",
            used[&k].0 >= 8,
            format!("{k}: {}/{} runs used a fault report (>= 8)", used[&k].0, used[&k].1),
        );
    }
}

#[test]
fn c4_daemon_crash_walks_down_to_the_disconnected_switch() {
    let mut net = converged(reference_model());
    FaultInjector::new()
        .inject(
            &mut net,
            FaultSpec::new(
                FaultType::RoutingDaemonCrash,
                FaultLocation::Switch(SwitchId(10)),
            ),
        )
        .unwrap();
    net.advance(SimTime::from_secs(3)).unwrap();
    let oracle = expected_state(&net.model).unwrap();
    let report = FailureReport::between_hosts(&net, HostId(7), HostId(3));
    let d = Manager::new(&mut net, oracle, ManagerConfig::default())
        .diagnose(&report)
        .expect("consensus");
    check(
        "4",
        d.verdict == Verdict::FaultySwitch(SwitchId(10)),
        format!("daemon crash on S10 diagnosed as {}", d.verdict),
    );
    let seq = d.script_sequence(1);
    let want = [
        Script::NoForwarding,
        Script::RouteAdvMissing,
        Script::NeighborDown,
        Script::Disconnected,
    ];
    let in_order = seq.windows(want.len()).any(|w| w == want);
    let shown: Vec<String> = seq.iter().map(|s| s.to_string()).collect();
    check(
        "4",
        in_order && d.used_disconnected,
        format!("script sequence {}", shown.join(" -> ")),
    );
}

#[test]
fn c5_oracle_matches_simulation_on_random_topologies() {
    let mut ok = 0;
    let mut failures = Vec::new();
    for seed in 0..20u64 {
        let model = random_model_sized(seed, 3..=6, 8..=24, 4);
        let ases: std::collections::BTreeSet<_> =
            model.topology.switches.iter().map(|s| s.asn).collect();
        let n = model.topology.switches.len();
        assert!((3..=6).contains(&ases.len()) && (8..=24).contains(&n));
        let st = ExpectedState::compute(Arc::new(model.clone())).expect("oracle settles");
        let net = converged(model);
        let diff = st.mismatches(&net);
        if diff.is_empty() {
            ok += 1;
        } else {
            failures.push(format!("seed {seed}: {diff:?}"));
        }
    }
    check(
        "5",
        ok == 20,
        format!("{ok}/20 random topologies (3-6 ASes, 8-24 switches) match {failures:?}"),
    );
}

/// Traced UDP flows between every pair of non-diagnosis hosts whose path
/// satisfies `keep`, injected at the source edge one packet per flow per
/// millisecond. Returns the number of packets injected.
fn traced_traffic(
    net: &mut Network,
    oracle: &ExpectedState,
    per_flow: u32,
    keep: impl Fn(&[SwitchId]) -> bool,
) -> u64 {
    let hosts: Vec<(HostId, std::net::Ipv4Addr, SwitchId)> = net
        .hosts
        .iter()
        .filter(|h| !h.diagnosis)
        .map(|h| (h.id, h.ip, h.switch))
        .collect();
    let mut flows = Vec::new();
    for &(a, aip, edge) in &hosts {
        for &(b, bip, _) in &hosts {
            if a == b {
                continue;
            }
            let Some(path) = oracle.expected_path(a, b).unwrap().into_iter().next() else {
                continue;
            };
            if !keep(&path) {
                continue;
            }
            let flow = FlowSpec {
                protocol: Some(Protocol::Udp),
                ..FlowSpec::between(aip, bip)
            };
            net.switch_mut(edge).dp.trace_filters.push(flow.clone());
            let iface = net.host_facing_iface(edge, aip).unwrap();
            flows.push((edge, iface, flow.representative().unwrap()));
        }
    }
    let mut sent = 0;
    for i in 0..per_flow {
        for (edge, iface, p) in &flows {
            net.inject_at_switch(*edge, *iface, p.clone().with_ident(i as u16));
            sent += 1;
        }
        net.advance(SimTime::from_millis(1)).unwrap();
    }
    net.advance(SimTime::from_secs(1)).unwrap();
    sent
}

/// Traced packets that entered `s` and neither left, were delivered
/// locally nor were deliberately dropped.
fn deficit(net: &Network, s: SwitchId) -> (u64, i64) {
    let ports = &net.switch(s).dp.counters.ports;
    let sum = |f: &dyn Fn(&netdx::dataplane::PortCounters) -> u64| -> u64 {
        ports.values().map(f).sum()
    };
    let ingress = sum(&|p| p.ingress.total);
    let out = sum(&|p| p.egress.total) + sum(&|p| p.local.total) + sum(&|p| p.drops.total());
    (ingress, ingress as i64 - out as i64)
}

#[test]
fn c6_counters_conserve_traced_packets() {
    let mut net = converged(reference_model());
    let oracle = expected_state(&net.model).unwrap();
    let sent = traced_traffic(&mut net, &oracle, 200, |_| true);
    let ids: Vec<SwitchId> = net.switches.iter().map(|s| s.id).collect();
    let unexplained: Vec<(SwitchId, i64)> = ids
        .iter()
        .map(|&s| (s, deficit(&net, s).1))
        .filter(|(_, d)| *d != 0)
        .collect();
    check(
        "6",
        sent >= 10_000 && unexplained.is_empty(),
        format!("{sent} traced packets fault-free, switches with a deficit: {unexplained:?}"),
    );

    let s10 = SwitchId(10);
    let p = 0.3;
    let mut net = converged(reference_model());
    FaultInjector::new()
        .inject(
            &mut net,
            FaultSpec::new(FaultType::SilentDropInSwitch, FaultLocation::Switch(s10))
                .with_stream(7),
        )
        .unwrap();
    let sent = traced_traffic(&mut net, &oracle, 200, |path| {
        path.contains(&s10) && path[0] != s10
    });
    let (arrived, d) = deficit(&net, s10);
    let expected = arrived as f64 * p;
    let err = (d as f64 - expected).abs() / expected;
    check(
        "6",
        arrived > 0 && err <= 0.15,
        format!(
            "silent drop p=0.3 at S10: {arrived} traced arrivals of {sent} sent, \
             deficit {d}, binomial mean {expected:.1}, off by {:.1}%",
            err * 100.0
        ),
    );
    let others: Vec<(SwitchId, i64)> = ids
        .iter()
        .filter(|&&s| s != s10)
        .map(|&s| (s, deficit(&net, s).1))
        .filter(|(_, d)| *d != 0)
        .collect();
    check(
        "6",
        others.is_empty(),
        format!("no deficit outside S10: {others:?}"),
    );
}

#[test]
fn c7_consensus_survives_churn_during_diagnosis() {
    let mut net = converged(reference_model());
    let oracle = expected_state(&net.model).unwrap();
    let report = FailureReport::between_hosts(&net, HostId(7), HostId(3));
    let mut inj = FaultInjector::new();
    let d = Manager::new(&mut net, oracle, ManagerConfig::default())
        .diagnose_with(&report, |run, net| {
            if run == 2 {
                inj.inject(
                    net,
                    FaultSpec::new(
                        FaultType::SilentDropInSwitch,
                        FaultLocation::Switch(SwitchId(10)),
                    )
                    .with_stream(3),
                )
                .unwrap();
            }
        })
        .expect("consensus");
    let verdicts: Vec<String> = d.runs.iter().map(|r| r.finding.verdict.to_string()).collect();
    let n = d.runs.len();
    let last_two_agree = n >= 2 && d.runs[n - 1].finding == d.runs[n - 2].finding;
    check(
        "7",
        d.verdict == Verdict::FaultySwitch(SwitchId(10))
            && d.runs_to_consensus == 3
            && last_two_agree
            && d.runs[0].finding.verdict == Verdict::NoFaultFound,
        format!("fault appearing before run 2 gives runs {verdicts:?}"),
    );
    // Every campaign diagnosis ends on two agreeing runs.
    let all_agree = single().runs.iter().flat_map(|r| &r.diagnoses).all(|rec| {
        rec.diagnosis.as_ref().is_some_and(|d| {
            let n = d.runs.len();
            d.runs_to_consensus >= 2
                && d.runs[n - 1].finding == d.runs[n - 2].finding
                && d.runs[n - 1].finding.verdict == d.verdict
        })
    });
    check(
        "7",
        all_agree,
        "every campaign verdict equals the verdict of its last two runs",
    );
}
