use std::net::Ipv4Addr;

use crate::netmodel::{Packet, Protocol};

/// IPv4 header fields in wire order. Serialized as the standard 20-byte
/// option-less header; the trace bit occupies the reserved flag bit (0x8000
/// of the flags/fragment word) and DF is always set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeaderFields {
    pub tos: u8,
    pub total_len: u16,
    pub ident: u16,
    pub flags_frag: u16,
    pub ttl: u8,
    pub protocol: u8,
    pub checksum: u16,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
}

const FLAG_DF: u16 = 0x4000;
const FLAG_TRACE: u16 = 0x8000;

fn transport_len(p: Protocol) -> u16 {
    match p {
        Protocol::Tcp | Protocol::Bgp => 20,
        Protocol::Udp | Protocol::Icmp => 8,
        Protocol::Mgmt | Protocol::Marker => 0,
    }
}

impl HeaderFields {
    pub fn from_packet(p: &Packet) -> Self {
        HeaderFields {
            tos: p.dscp << 2,
            total_len: 20u16
                .saturating_add(transport_len(p.protocol))
                .saturating_add(p.payload_len),
            ident: p.ident,
            flags_frag: FLAG_DF | if p.trace { FLAG_TRACE } else { 0 },
            ttl: p.ttl,
            protocol: p.protocol.number(),
            checksum: p.header_checksum,
            src: p.src_ip,
            dst: p.dst_ip,
        }
    }

    pub fn to_bytes(&self) -> [u8; 20] {
        let mut b = [0u8; 20];
        b[0] = 0x45;
        b[1] = self.tos;
        b[2..4].copy_from_slice(&self.total_len.to_be_bytes());
        b[4..6].copy_from_slice(&self.ident.to_be_bytes());
        b[6..8].copy_from_slice(&self.flags_frag.to_be_bytes());
        b[8] = self.ttl;
        b[9] = self.protocol;
        b[10..12].copy_from_slice(&self.checksum.to_be_bytes());
        b[12..16].copy_from_slice(&self.src.octets());
        b[16..20].copy_from_slice(&self.dst.octets());
        b
    }
}

fn ones_complement_sum(bytes: &[u8]) -> u16 {
    let mut sum: u32 = bytes
        .chunks(2)
        .map(|c| u32::from(u16::from_be_bytes([c[0], *c.get(1).unwrap_or(&0)])))
        .sum();
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    sum as u16
}

/// Header checksum with the stored checksum field treated as zero.
pub fn ipv4_header_checksum(h: &HeaderFields) -> u16 {
    let zeroed = HeaderFields { checksum: 0, ..*h };
    !ones_complement_sum(&zeroed.to_bytes())
}

/// Complement of the folded sum over the whole header including the stored
/// checksum; zero iff the checksum is correct.
pub fn verify_header(h: &HeaderFields) -> u16 {
    !ones_complement_sum(&h.to_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Straight RFC 1071 reference over raw bytes, written independently of
    /// the field model above.
    fn rfc1071(bytes: &[u8]) -> u16 {
        let mut acc: u64 = 0;
        let mut i = 0;
        while i + 1 < bytes.len() {
            acc += ((bytes[i] as u64) << 8) | bytes[i + 1] as u64;
            i += 2;
        }
        if i < bytes.len() {
            acc += (bytes[i] as u64) << 8;
        }
        while acc >> 16 != 0 {
            acc = (acc & 0xffff) + (acc >> 16);
        }
        !(acc as u16)
    }

    fn sample() -> HeaderFields {
        HeaderFields {
            tos: 0,
            total_len: 0x73,
            ident: 0,
            flags_frag: 0x4000,
            ttl: 0x40,
            protocol: 0x11,
            checksum: 0,
            src: Ipv4Addr::new(192, 168, 0, 1),
            dst: Ipv4Addr::new(192, 168, 0, 199),
        }
    }

    #[test]
    fn reference_vector() {
        // 45 00 00 73 00 00 40 00 40 11 [b8 61] c0 a8 00 01 c0 a8 00 c7
        let h = sample();
        assert_eq!(ipv4_header_checksum(&h), 0xb861);
        let with = HeaderFields {
            checksum: 0xb861,
            ..h
        };
        assert_eq!(verify_header(&with), 0);
    }

    #[test]
    fn single_bit_flip_detected() {
        let mut h = sample();
        h.checksum = ipv4_header_checksum(&h);
        h.dst = Ipv4Addr::from(u32::from(h.dst) ^ 1);
        assert_ne!(verify_header(&h), 0);
    }

    #[test]
    fn packet_checksum_self_consistent() {
        let mut p = Packet::new(
            Ipv4Addr::new(10, 1, 0, 10),
            Ipv4Addr::new(10, 3, 0, 10),
            Protocol::Udp,
        );
        assert!(p.checksum_ok());
        p.trace = true;
        assert!(!p.checksum_ok());
        p.refresh_checksum();
        assert!(p.checksum_ok());
    }

    proptest! {
        #[test]
        fn matches_rfc1071_oracle(
            tos in any::<u8>(), len in any::<u16>(), ident in any::<u16>(),
            flags in any::<u16>(), ttl in any::<u8>(), proto in any::<u8>(),
            src in any::<u32>(), dst in any::<u32>(),
        ) {
            let h = HeaderFields {
                tos, total_len: len, ident, flags_frag: flags, ttl, protocol: proto,
                checksum: 0, src: Ipv4Addr::from(src), dst: Ipv4Addr::from(dst),
            };
            let c = ipv4_header_checksum(&h);
            prop_assert_eq!(c, rfc1071(&h.to_bytes()));
            let stored = HeaderFields { checksum: c, ..h };
            prop_assert_eq!(verify_header(&stored), 0);
            prop_assert_eq!(rfc1071(&stored.to_bytes()), 0);
        }
    }
}
