use crate::netmodel::{AclAction, AclRule, Packet};

/// First matching rule decides; no match permits.
pub fn acl_eval(rules: &[AclRule], pkt: &Packet) -> AclAction {
    rules
        .iter()
        .find(|r| r.pattern.matches(pkt))
        .map_or(AclAction::Permit, |r| r.action)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{FlowSpec, Prefix, Protocol};
    use proptest::prelude::*;
    use std::net::Ipv4Addr;

    fn pkt(dst: Ipv4Addr) -> Packet {
        Packet::new(Ipv4Addr::new(10, 1, 0, 10), dst, Protocol::Udp).with_ports(4000, 53)
    }

    fn deny_dst(p: &str) -> AclRule {
        AclRule {
            pattern: FlowSpec::to_dst(p.parse().unwrap()),
            action: AclAction::Deny,
        }
    }

    #[test]
    fn empty_list_permits() {
        assert_eq!(
            acl_eval(&[], &pkt(Ipv4Addr::new(10, 3, 0, 1))),
            AclAction::Permit
        );
    }

    #[test]
    fn single_deny() {
        let rules = [deny_dst("10.3.0.0/16")];
        assert_eq!(
            acl_eval(&rules, &pkt(Ipv4Addr::new(10, 3, 9, 9))),
            AclAction::Deny
        );
        assert_eq!(
            acl_eval(&rules, &pkt(Ipv4Addr::new(10, 4, 9, 9))),
            AclAction::Permit
        );
    }

    #[test]
    fn shadowed_deny() {
        let permit = AclRule {
            pattern: FlowSpec::to_dst("10.3.0.0/16".parse().unwrap()),
            action: AclAction::Permit,
        };
        let rules = [permit, deny_dst("10.3.0.0/16")];
        assert_eq!(
            acl_eval(&rules, &pkt(Ipv4Addr::new(10, 3, 0, 1))),
            AclAction::Permit
        );
    }

    /// Scans every rule and keeps the lowest matching index.
    fn all_rules_oracle(rules: &[AclRule], p: &Packet) -> AclAction {
        let mut best: Option<(usize, AclAction)> = None;
        for (i, r) in rules.iter().enumerate() {
            let m = r.pattern.src.is_none_or(|x| x.contains(p.src_ip))
                && r.pattern.dst.is_none_or(|x| x.contains(p.dst_ip))
                && r.pattern.protocol.is_none_or(|x| x == p.protocol)
                && r.pattern.src_port.is_none_or(|x| x == p.src_port)
                && r.pattern.dst_port.is_none_or(|x| x == p.dst_port);
            if m && best.is_none_or(|(j, _)| i < j) {
                best = Some((i, r.action));
            }
        }
        best.map_or(AclAction::Permit, |(_, a)| a)
    }

    fn arb_rule() -> impl Strategy<Value = AclRule> {
        (
            prop::option::of((0u32..4, 8u8..=24)),
            prop::option::of(prop::sample::select(vec![Protocol::Udp, Protocol::Tcp])),
            prop::option::of(prop::sample::select(vec![53u16, 80, 179])),
            any::<bool>(),
        )
            .prop_map(|(dst, proto, dport, deny)| AclRule {
                pattern: FlowSpec {
                    src: None,
                    dst: dst.map(|(o, l)| Prefix::new(Ipv4Addr::new(10, o as u8, 0, 0), l)),
                    protocol: proto,
                    src_port: None,
                    dst_port: dport,
                },
                action: if deny {
                    AclAction::Deny
                } else {
                    AclAction::Permit
                },
            })
    }

    proptest! {
        #[test]
        fn first_match_agrees_with_oracle(
            rules in prop::collection::vec(arb_rule(), 0..8),
            o in 0u8..4, tcp in any::<bool>(), dport in prop::sample::select(vec![53u16, 80, 179]),
        ) {
            let proto = if tcp { Protocol::Tcp } else { Protocol::Udp };
            let p = Packet::new(Ipv4Addr::new(10, 1, 0, 10), Ipv4Addr::new(10, o, 1, 1), proto)
                .with_ports(999, dport);
            prop_assert_eq!(acl_eval(&rules, &p), all_rules_oracle(&rules, &p));
        }
    }
}
