use super::*;
use crate::netmodel::generate::{random_model_sized, reference_model, TopologyBuilder};
use crate::netmodel::{AclRule, HostId};
use crate::simkernel::{SimConfig, StopCondition};
use proptest::prelude::*;

fn reference() -> ExpectedState {
    ExpectedState::compute(Arc::new(reference_model())).expect("reference settles")
}

fn converged(model: NetworkModel) -> Network {
    let mut net = Network::from_model(model, SimConfig::default());
    net.run_until(StopCondition::Quiescence).expect("converges");
    net
}

#[test]
fn two_switches_learn_each_others_prefix() {
    let mut b = TopologyBuilder::new();
    let (a, c) = (b.switch(1), b.switch(2));
    b.link(a, c);
    b.host(a, true);
    b.originate(c, "10.90.0.0/16".parse().unwrap());
    let st = ExpectedState::compute(Arc::new(b.build().unwrap())).unwrap();
    let r = &st.switches[&a].rib[&"10.90.0.0/16".parse().unwrap()];
    assert_eq!(r.as_path, vec![2]);
    assert_eq!(r.next_hop, Some(c));
}

#[test]
fn reference_matches_converged_simulation() {
    let model = Arc::new(reference_model());
    let st = ExpectedState::compute(Arc::clone(&model)).unwrap();
    let mut net = Network::new(model, SimConfig::default());
    net.run_until(StopCondition::Quiescence).unwrap();
    assert_eq!(st.mismatches(&net), Vec::<String>::new());
}

#[test]
fn own_as_only_scope_hides_transit_routes() {
    let st = reference();
    let h3: Prefix = "10.4.0.0/24".parse().unwrap();
    for s in 16..20 {
        let r = &st.switches[&SwitchId(s)].rib[&h3];
        assert!(
            !r.as_path.contains(&2),
            "S{s} routes via AS2: {:?}",
            r.as_path
        );
        assert!(
            !r.as_path.contains(&1),
            "S{s} routes via AS1: {:?}",
            r.as_path
        );
    }
    assert!(st.switches[&SwitchId(5)]
        .rib_out
        .get(&SwitchId(18))
        .is_none_or(|t| !t.contains_key(&h3)));
}

#[test]
fn advertisers_of_remote_prefix_point_at_border_switch() {
    let st = reference();
    let h3: Prefix = "10.4.0.0/24".parse().unwrap();
    let adv = st.expected_advertisers(h3, SwitchId(19)).unwrap();
    assert_eq!(adv, BTreeSet::from([SwitchId(17)]));
    // Same-AS neighbor of the originator.
    let adv = st.expected_advertisers(h3, SwitchId(10)).unwrap();
    assert_eq!(adv, BTreeSet::from([SwitchId(9)]));
    assert!(st
        .expected_advertisers("10.99.0.0/16".parse().unwrap(), SwitchId(3))
        .unwrap()
        .is_empty());
}

#[test]
fn reference_path_follows_expected_fib() {
    let st = reference();
    let paths = st.expected_path(HostId(7), HostId(3)).unwrap();
    assert_eq!(paths.len(), 1);
    let p = &paths[0];
    assert_eq!(p.first(), Some(&SwitchId(19)));
    assert_eq!(p.last(), Some(&SwitchId(9)));
    let dst = st.model().host(HostId(3)).ip;
    for w in p.windows(2) {
        let e = st.fib_lookup(w[0], dst).unwrap().unwrap();
        let FibEgress::Interface(i) = e.egress else {
            panic!("local at transit hop")
        };
        assert_eq!(
            st.model().config(w[0]).interface(i).unwrap().peer.node,
            NodeId::Switch(w[1])
        );
    }
}

#[test]
fn same_edge_hosts_take_a_short_path() {
    let mut b = TopologyBuilder::new();
    let (a, c) = (b.switch(1), b.switch(1));
    b.link(a, c);
    let h0 = b.host(a, true);
    let h1 = b.host(a, false);
    let h2 = b.host(c, false);
    let st = ExpectedState::compute(Arc::new(b.build().unwrap())).unwrap();
    assert_eq!(st.expected_path(h0, h1).unwrap(), vec![vec![a]]);
    assert_eq!(st.expected_path(h0, h2).unwrap(), vec![vec![a, c]]);
}

#[test]
fn acl_denied_flow_has_no_path() {
    let mut b = TopologyBuilder::new();
    let (a, c) = (b.switch(1), b.switch(2));
    b.link(a, c);
    let h0 = b.host(a, true);
    let h1 = b.host(c, false);
    for s in [a, c] {
        b.acl(
            s,
            AclRule {
                pattern: FlowSpec::to_dst("10.2.0.0/24".parse().unwrap()),
                action: AclAction::Deny,
            },
        );
    }
    let st = ExpectedState::compute(Arc::new(b.build().unwrap())).unwrap();
    assert!(st.expected_path(h0, h1).unwrap().is_empty());
    assert!(!st.expected_path(h1, h0).unwrap().is_empty());
}

#[test]
fn unknown_ids_are_errors() {
    let st = reference();
    let f = FlowSpec::between("10.8.0.10".parse().unwrap(), "10.4.0.10".parse().unwrap());
    assert_eq!(
        st.should_forward(SwitchId(99), SwitchId(1), &f),
        Err(OracleError::UnknownSwitch(SwitchId(99)))
    );
    assert_eq!(
        st.expected_path(HostId(40), HostId(1)),
        Err(OracleError::UnknownHost(HostId(40)))
    );
    assert_eq!(
        st.flow_paths(&FlowSpec::any()),
        Err(OracleError::AbstractFlow)
    );
}

#[test]
fn cache_returns_the_same_analysis() {
    let m = Arc::new(reference_model());
    let a = expected_state(&m).unwrap();
    let b = expected_state(&Arc::new(reference_model())).unwrap();
    assert!(Arc::ptr_eq(&a, &b));
    assert_eq!(a.switches, reference().switches);
}

/// Every simple switch path consistent hop by hop with the expected FIB,
/// found by exhaustive search over the link graph.
fn brute_paths(st: &ExpectedState, flow: &FlowSpec) -> Vec<Vec<SwitchId>> {
    let pkt = flow.representative().unwrap();
    let model = st.model();
    let Some(NodeId::Host(h)) = model.owner_of(pkt.src_ip) else {
        return Vec::new();
    };
    let start = model.host(h).switch;
    let mut found = Vec::new();
    let mut stack = vec![vec![start]];
    while let Some(path) = stack.pop() {
        let cur = *path.last().unwrap();
        let cfg = model.config(cur);
        if crate::dataplane::acl_eval(&cfg.acl, &pkt) == AclAction::Deny {
            continue;
        }
        if cfg.owns(pkt.dst_ip) {
            found.push(path);
            continue;
        }
        for i in &cfg.interfaces {
            let hop_ok = st
                .fib_lookup(cur, pkt.dst_ip)
                .unwrap()
                .is_some_and(|e| e.egress == FibEgress::Interface(i.index));
            if !hop_ok {
                continue;
            }
            match i.peer.node {
                NodeId::Host(d) if model.host(d).ip == pkt.dst_ip => found.push(path.clone()),
                NodeId::Switch(n) if !path.contains(&n) => {
                    let mut p = path.clone();
                    p.push(n);
                    stack.push(p);
                }
                _ => {}
            }
        }
    }
    found
}

#[test]
fn should_forward_matches_exhaustive_walk_on_reference() {
    let st = reference();
    let hosts = &st.model().topology.hosts;
    let mut flows = Vec::new();
    for (i, a) in hosts.iter().enumerate() {
        for b in hosts.iter().skip(i + 1).take(2) {
            flows.push(FlowSpec::between(a.ip, b.ip));
        }
    }
    assert!(flows.len() >= 10);
    let ids: Vec<SwitchId> = st.switches.keys().copied().collect();
    for f in &flows {
        let brute = brute_paths(&st, f);
        assert_eq!(st.flow_paths(f).unwrap(), brute, "{f}");
        for &s2 in &ids {
            for &s1 in &ids {
                let want = brute.iter().any(|p| p.windows(2).any(|w| w == [s2, s1]));
                assert_eq!(st.should_forward(s2, s1, f).unwrap(), want);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_networks_match_simulation(seed in 0u64..10_000) {
        let model = random_model_sized(seed, 3..=6, 8..=24, 4);
        let st = ExpectedState::compute(Arc::new(model.clone())).unwrap();
        let net = converged(model);
        prop_assert_eq!(st.mismatches(&net), Vec::<String>::new());
    }

    #[test]
    fn advertisers_match_rib_out_scan(seed in 0u64..10_000, pick in 0usize..64) {
        let model = random_model_sized(seed, 3..=6, 8..=24, 4);
        let st = ExpectedState::compute(Arc::new(model)).unwrap();
        let ids: Vec<SwitchId> = st.switches.keys().copied().collect();
        let s = ids[pick % ids.len()];
        let prefixes: BTreeSet<Prefix> = st.switches.values().flat_map(|x| x.rib.keys().copied()).collect();
        for p in prefixes {
            let scan: BTreeSet<SwitchId> = st.model().topology.switch_neighbors(s).into_iter()
                .filter(|n| st.switches[n].rib_out.get(&s).is_some_and(|t| t.contains_key(&p)))
                .collect();
            prop_assert_eq!(st.expected_advertisers(p, s).unwrap(), scan);
        }
    }

    #[test]
    fn analysis_is_pure(seed in 0u64..10_000) {
        let model = Arc::new(random_model_sized(seed, 3..=6, 8..=24, 4));
        let a = ExpectedState::compute(Arc::clone(&model)).unwrap();
        let b = ExpectedState::compute(model).unwrap();
        prop_assert_eq!(a.switches, b.switches);
    }
}

#[test]
fn cached_state_follows_configuration_changes() {
    let plain = Arc::new(reference_model());
    let mut m = reference_model();
    let (h7, h3) = (m.topology.hosts[7].ip, m.topology.hosts[3].ip);
    m.configs.get_mut(&SwitchId(19)).unwrap().acl.push(AclRule {
        pattern: FlowSpec::between(h7, h3),
        action: AclAction::Deny,
    });
    let denied = Arc::new(m);
    assert_ne!(plain.fingerprint(), denied.fingerprint());
    let a = expected_state(&plain).unwrap();
    let b = expected_state(&denied).unwrap();
    assert!(!a.expected_path(HostId(7), HostId(3)).unwrap().is_empty());
    assert!(b.expected_path(HostId(7), HostId(3)).unwrap().is_empty());
    assert!(Arc::ptr_eq(&a, &expected_state(&plain).unwrap()));
}
