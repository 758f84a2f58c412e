//! Ethernet II / IPv4 / TCP frames.
//!
//! Only the fixed 20-byte IPv4 and TCP headers are supported: no IP options,
//! no TCP options, no fragmentation. Within that subset parsing and
//! serialization are exact inverses. The IPv4 header checksum is checked on
//! parse and recomputed on serialize. The TCP checksum is carried verbatim
//! and never validated.

use alloc::vec::Vec;
use core::fmt;
use core::net::Ipv4Addr;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const IPPROTO_TCP: u8 = 6;

pub const ETH_HEADER_LEN: usize = 14;
pub const IPV4_HEADER_LEN: usize = 20;
pub const TCP_HEADER_LEN: usize = 20;
/// Smallest frame this module accepts: all three headers, empty payload.
pub const MIN_FRAME_LEN: usize = ETH_HEADER_LEN + IPV4_HEADER_LEN + TCP_HEADER_LEN;

pub const DEFAULT_TTL: u8 = 64;
/// IPv4 "don't fragment" bit in the flags/fragment-offset word.
pub const IPV4_DONT_FRAGMENT: u16 = 0x4000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PacketError {
    #[error("frame truncated: {len} bytes, need at least {MIN_FRAME_LEN}")]
    Truncated { len: usize },
    #[error("unsupported ethertype {0:#06x}")]
    UnsupportedEthertype(u16),
    #[error("unsupported IPv4 version/IHL byte {0:#04x}")]
    UnsupportedIpHeader(u8),
    #[error("unsupported IP protocol {0}")]
    UnsupportedProtocol(u8),
    #[error("bad IPv4 header checksum: stored {stored:#06x}, computed {computed:#06x}")]
    BadChecksum { stored: u16, computed: u16 },
    #[error("IPv4 total length {total_length} does not match {actual} bytes on the wire")]
    LengthMismatch { total_length: u16, actual: usize },
    #[error("unsupported TCP data offset/reserved byte {0:#04x}")]
    UnsupportedTcpHeader(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("TTL expired")]
pub struct TtlExpired;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    pub const fn new(octets: [u8; 6]) -> Self {
        Self(octets)
    }

    pub const fn octets(&self) -> [u8; 6] {
        self.0
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = &self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            o[0], o[1], o[2], o[3], o[4], o[5]
        )
    }
}

impl fmt::Debug for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid MAC address")]
pub struct MacParseError;

impl FromStr for MacAddr {
    type Err = MacParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut octets = [0u8; 6];
        let mut parts = s.split(':');
        for octet in octets.iter_mut() {
            let part = parts.next().ok_or(MacParseError)?;
            if part.len() != 2 {
                return Err(MacParseError);
            }
            *octet = u8::from_str_radix(part, 16).map_err(|_| MacParseError)?;
        }
        if parts.next().is_some() {
            return Err(MacParseError);
        }
        Ok(Self(octets))
    }
}

impl Serialize for MacAddr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = <alloc::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The TCP flag byte.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TcpFlags(u8);

impl TcpFlags {
    pub const FIN: Self = Self(0x01);
    pub const SYN: Self = Self(0x02);
    pub const RST: Self = Self(0x04);
    pub const PSH: Self = Self(0x08);
    pub const ACK: Self = Self(0x10);
    pub const URG: Self = Self(0x20);

    const NAMES: [(Self, &'static str); 6] = [
        (Self::FIN, "FIN"),
        (Self::SYN, "SYN"),
        (Self::RST, "RST"),
        (Self::PSH, "PSH"),
        (Self::ACK, "ACK"),
        (Self::URG, "URG"),
    ];

    pub const fn empty() -> Self {
        Self(0)
    }

    pub const fn from_bits(bits: u8) -> Self {
        Self(bits)
    }

    pub const fn bits(self) -> u8 {
        self.0
    }

    pub const fn contains(self, other: Self) -> bool {
        self.0 & other.0 == other.0
    }

    /// A connection-opening segment: SYN set and ACK clear.
    pub const fn is_syn(self) -> bool {
        self.contains(Self::SYN) && !self.contains(Self::ACK)
    }
}

impl core::ops::BitOr for TcpFlags {
    type Output = Self;

    fn bitor(self, rhs: Self) -> Self {
        Self(self.0 | rhs.0)
    }
}

impl core::ops::BitOrAssign for TcpFlags {
    fn bitor_assign(&mut self, rhs: Self) {
        self.0 |= rhs.0;
    }
}

impl fmt::Debug for TcpFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (flag, name) in Self::NAMES {
            if self.contains(flag) {
                if !first {
                    f.write_str("|")?;
                }
                f.write_str(name)?;
                first = false;
            }
        }
        let rest = self.0 & !0x3f;
        if rest != 0 {
            if !first {
                f.write_str("|")?;
            }
            write!(f, "{rest:#04x}")?;
        } else if first {
            f.write_str("-")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EthernetHeader {
    pub dst_mac: MacAddr,
    pub src_mac: MacAddr,
    pub ethertype: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ipv4Header {
    pub tos: u8,
    pub total_length: u16,
    pub identification: u16,
    pub flags_fragment: u16,
    pub ttl: u8,
    pub protocol: u8,
    pub header_checksum: u16,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
}

impl Ipv4Header {
    fn write(&self, out: &mut [u8], checksum: u16) {
        out[0] = 0x45;
        out[1] = self.tos;
        out[2..4].copy_from_slice(&self.total_length.to_be_bytes());
        out[4..6].copy_from_slice(&self.identification.to_be_bytes());
        out[6..8].copy_from_slice(&self.flags_fragment.to_be_bytes());
        out[8] = self.ttl;
        out[9] = self.protocol;
        out[10..12].copy_from_slice(&checksum.to_be_bytes());
        out[12..16].copy_from_slice(&self.src_ip.octets());
        out[16..20].copy_from_slice(&self.dst_ip.octets());
    }

    /// The checksum this header should carry, ignoring the stored one.
    pub fn compute_checksum(&self) -> u16 {
        let mut buf = [0u8; IPV4_HEADER_LEN];
        self.write(&mut buf, 0);
        internet_checksum(&buf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TcpHeader {
    pub src_port: u16,
    pub dst_port: u16,
    pub seq: u32,
    pub ack: u32,
    pub flags: TcpFlags,
    pub window: u16,
    pub checksum: u16,
    pub urgent: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Packet {
    pub eth: EthernetHeader,
    pub ip: Ipv4Header,
    pub tcp: TcpHeader,
    pub payload: Vec<u8>,
}

/// One's-complement sum of 16-bit big-endian words, complemented.
pub fn internet_checksum(data: &[u8]) -> u16 {
    let mut sum: u32 = 0;
    let mut chunks = data.chunks_exact(2);
    for word in &mut chunks {
        sum += u32::from(u16::from_be_bytes([word[0], word[1]]));
    }
    if let [last] = chunks.remainder() {
        sum += u32::from(*last) << 8;
    }
    while sum >> 16 != 0 {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

impl Packet {
    /// Builds a TCP segment with default IPv4 fields (TTL 64, DF set) and
    /// consistent length and checksum.
    #[allow(clippy::too_many_arguments)]
    pub fn tcp(
        src_mac: MacAddr,
        dst_mac: MacAddr,
        src_ip: Ipv4Addr,
        dst_ip: Ipv4Addr,
        src_port: u16,
        dst_port: u16,
        flags: TcpFlags,
        payload: Vec<u8>,
    ) -> Self {
        let mut p = Self {
            eth: EthernetHeader {
                dst_mac,
                src_mac,
                ethertype: ETHERTYPE_IPV4,
            },
            ip: Ipv4Header {
                tos: 0,
                total_length: 0,
                identification: 0,
                flags_fragment: IPV4_DONT_FRAGMENT,
                ttl: DEFAULT_TTL,
                protocol: IPPROTO_TCP,
                header_checksum: 0,
                src_ip,
                dst_ip,
            },
            tcp: TcpHeader {
                src_port,
                dst_port,
                seq: 0,
                ack: 0,
                flags,
                window: 8192,
                checksum: 0,
                urgent: 0,
            },
            payload,
        };
        p.refresh();
        p
    }

    /// Recomputes `total_length` and the IPv4 header checksum after edits.
    pub fn refresh(&mut self) {
        self.ip.total_length = (IPV4_HEADER_LEN + TCP_HEADER_LEN + self.payload.len()) as u16;
        self.ip.header_checksum = self.ip.compute_checksum();
    }

    /// Frame length in bytes.
    pub fn wire_len(&self) -> usize {
        MIN_FRAME_LEN + self.payload.len()
    }

    /// Returns the packet with TTL reduced by one and the checksum updated.
    /// A packet that arrives with TTL 0 cannot be forwarded.
    pub fn decrement_ttl(mut self) -> Result<Self, TtlExpired> {
        self.ip.ttl = self.ip.ttl.checked_sub(1).ok_or(TtlExpired)?;
        self.ip.header_checksum = self.ip.compute_checksum();
        Ok(self)
    }

    /// Swaps source and destination at every layer.
    pub fn swap_endpoints(&self) -> Self {
        let mut p = self.clone();
        core::mem::swap(&mut p.eth.src_mac, &mut p.eth.dst_mac);
        core::mem::swap(&mut p.ip.src_ip, &mut p.ip.dst_ip);
        core::mem::swap(&mut p.tcp.src_port, &mut p.tcp.dst_port);
        p.ip.header_checksum = p.ip.compute_checksum();
        p
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, PacketError> {
        if bytes.len() < MIN_FRAME_LEN {
            return Err(PacketError::Truncated { len: bytes.len() });
        }
        let be16 = |at: usize| u16::from_be_bytes([bytes[at], bytes[at + 1]]);
        let be32 = |at: usize| {
            u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
        };
        let mac = |at: usize| {
            let mut o = [0u8; 6];
            o.copy_from_slice(&bytes[at..at + 6]);
            MacAddr(o)
        };
        let ip4 = |at: usize| Ipv4Addr::new(bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]);

        let eth = EthernetHeader {
            dst_mac: mac(0),
            src_mac: mac(6),
            ethertype: be16(12),
        };
        if eth.ethertype != ETHERTYPE_IPV4 {
            return Err(PacketError::UnsupportedEthertype(eth.ethertype));
        }

        let ip_at = ETH_HEADER_LEN;
        if bytes[ip_at] != 0x45 {
            return Err(PacketError::UnsupportedIpHeader(bytes[ip_at]));
        }
        let ip = Ipv4Header {
            tos: bytes[ip_at + 1],
            total_length: be16(ip_at + 2),
            identification: be16(ip_at + 4),
            flags_fragment: be16(ip_at + 6),
            ttl: bytes[ip_at + 8],
            protocol: bytes[ip_at + 9],
            header_checksum: be16(ip_at + 10),
            src_ip: ip4(ip_at + 12),
            dst_ip: ip4(ip_at + 16),
        };
        if ip.protocol != IPPROTO_TCP {
            return Err(PacketError::UnsupportedProtocol(ip.protocol));
        }
        let computed = ip.compute_checksum();
        if computed != ip.header_checksum {
            return Err(PacketError::BadChecksum {
                stored: ip.header_checksum,
                computed,
            });
        }
        let on_wire = bytes.len() - ETH_HEADER_LEN;
        if usize::from(ip.total_length) != on_wire {
            return Err(PacketError::LengthMismatch {
                total_length: ip.total_length,
                actual: on_wire,
            });
        }

        let tcp_at = ip_at + IPV4_HEADER_LEN;
        if bytes[tcp_at + 12] != 0x50 {
            return Err(PacketError::UnsupportedTcpHeader(bytes[tcp_at + 12]));
        }
        let tcp = TcpHeader {
            src_port: be16(tcp_at),
            dst_port: be16(tcp_at + 2),
            seq: be32(tcp_at + 4),
            ack: be32(tcp_at + 8),
            flags: TcpFlags(bytes[tcp_at + 13]),
            window: be16(tcp_at + 14),
            checksum: be16(tcp_at + 16),
            urgent: be16(tcp_at + 18),
        };

        Ok(Self {
            eth,
            ip,
            tcp,
            payload: bytes[MIN_FRAME_LEN..].to_vec(),
        })
    }

    /// Writes the frame. `total_length` and the IPv4 checksum are derived
    /// from the packet contents; the stored values are not consulted.
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = alloc::vec![0u8; self.wire_len()];
        out[0..6].copy_from_slice(&self.eth.dst_mac.0);
        out[6..12].copy_from_slice(&self.eth.src_mac.0);
        out[12..14].copy_from_slice(&self.eth.ethertype.to_be_bytes());

        let mut ip = self.ip;
        ip.total_length = (IPV4_HEADER_LEN + TCP_HEADER_LEN + self.payload.len()) as u16;
        let ip_out = &mut out[ETH_HEADER_LEN..ETH_HEADER_LEN + IPV4_HEADER_LEN];
        ip.write(ip_out, 0);
        let checksum = internet_checksum(ip_out);
        ip_out[10..12].copy_from_slice(&checksum.to_be_bytes());

        let t = &self.tcp;
        let tcp_out = &mut out[ETH_HEADER_LEN + IPV4_HEADER_LEN..MIN_FRAME_LEN];
        tcp_out[0..2].copy_from_slice(&t.src_port.to_be_bytes());
        tcp_out[2..4].copy_from_slice(&t.dst_port.to_be_bytes());
        tcp_out[4..8].copy_from_slice(&t.seq.to_be_bytes());
        tcp_out[8..12].copy_from_slice(&t.ack.to_be_bytes());
        tcp_out[12] = 0x50;
        tcp_out[13] = t.flags.0;
        tcp_out[14..16].copy_from_slice(&t.window.to_be_bytes());
        tcp_out[16..18].copy_from_slice(&t.checksum.to_be_bytes());
        tcp_out[18..20].copy_from_slice(&t.urgent.to_be_bytes());

        out[MIN_FRAME_LEN..].copy_from_slice(&self.payload);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    fn unhex(s: &str) -> Vec<u8> {
        (0..s.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap())
            .collect()
    }

    // Frozen from tools/packet_golden.py.
    const GOLDEN_SYN: &str = "08000000033308000000011108004500002800004000400622cd0a0001010a00030304d20050000003e8000000005002200000000000";
    const GOLDEN_SYN_TTL63: &str = "080000000333080000000111080045000028000040003f0623cd0a0001010a00030304d20050000003e8000000005002200000000000";
    const GOLDEN_PSH_PAYLOAD: &str = "08000000077708000000022208004500002d0000400040061dc30a0002020a000707c35000160000000700000009501820000000000068656c6c6f";

    fn golden_syn() -> Packet {
        let mut p = Packet::tcp(
            "08:00:00:00:01:11".parse().unwrap(),
            "08:00:00:00:03:33".parse().unwrap(),
            Ipv4Addr::new(10, 0, 1, 1),
            Ipv4Addr::new(10, 0, 3, 3),
            1234,
            80,
            TcpFlags::SYN,
            Vec::new(),
        );
        p.tcp.seq = 1000;
        p
    }

    #[test]
    fn serialize_matches_reference_bytes() {
        assert_eq!(golden_syn().serialize(), unhex(GOLDEN_SYN));

        let mut p = Packet::tcp(
            "08:00:00:00:02:22".parse().unwrap(),
            "08:00:00:00:07:77".parse().unwrap(),
            Ipv4Addr::new(10, 0, 2, 2),
            Ipv4Addr::new(10, 0, 7, 7),
            50000,
            22,
            TcpFlags::PSH | TcpFlags::ACK,
            b"hello".to_vec(),
        );
        p.tcp.seq = 7;
        p.tcp.ack = 9;
        assert_eq!(p.serialize(), unhex(GOLDEN_PSH_PAYLOAD));
    }

    #[test]
    fn parse_reference_bytes() {
        let p = Packet::parse(&unhex(GOLDEN_SYN)).unwrap();
        assert_eq!(p, golden_syn());
        assert_eq!(p.ip.src_ip, Ipv4Addr::new(10, 0, 1, 1));
        assert_eq!(p.ip.dst_ip, Ipv4Addr::new(10, 0, 3, 3));
        assert_eq!(p.tcp.src_port, 1234);
        assert_eq!(p.tcp.dst_port, 80);
        assert!(p.tcp.flags.is_syn());
        assert_eq!(p.ip.header_checksum, 0x22cd);
    }

    #[test]
    fn truncated_frame() {
        let bytes = golden_syn().serialize();
        assert_eq!(
            Packet::parse(&bytes[..53]),
            Err(PacketError::Truncated { len: 53 })
        );
    }

    #[test]
    fn rejects_foreign_headers() {
        let mut b = unhex(GOLDEN_SYN);
        b[12] = 0x86;
        b[13] = 0xdd;
        assert_eq!(
            Packet::parse(&b),
            Err(PacketError::UnsupportedEthertype(0x86dd))
        );

        // UDP with a fixed-up checksum still fails on protocol.
        let mut p = golden_syn();
        p.ip.protocol = 17;
        let b = p.serialize();
        assert_eq!(Packet::parse(&b), Err(PacketError::UnsupportedProtocol(17)));

        let mut b = unhex(GOLDEN_SYN);
        b[14] = 0x46;
        assert_eq!(
            Packet::parse(&b),
            Err(PacketError::UnsupportedIpHeader(0x46))
        );

        let mut b = unhex(GOLDEN_SYN);
        b[46] = 0x60;
        assert_eq!(
            Packet::parse(&b),
            Err(PacketError::UnsupportedTcpHeader(0x60))
        );
    }

    #[test]
    fn bad_checksum_and_length() {
        let mut b = unhex(GOLDEN_SYN);
        b[22] = 63; // ttl without checksum fix-up
        assert_eq!(
            Packet::parse(&b),
            Err(PacketError::BadChecksum {
                stored: 0x22cd,
                computed: 0x23cd
            })
        );

        let mut b = unhex(GOLDEN_SYN);
        b.push(0);
        assert!(matches!(
            Packet::parse(&b),
            Err(PacketError::LengthMismatch {
                total_length: 40,
                actual: 41
            })
        ));
    }

    #[test]
    fn ttl_decrement() {
        let p = golden_syn().decrement_ttl().unwrap();
        assert_eq!(p.ip.ttl, 63);
        assert_eq!(p.serialize(), unhex(GOLDEN_SYN_TTL63));
        assert_eq!(p.ip.header_checksum, p.ip.compute_checksum());

        let mut one = golden_syn();
        one.ip.ttl = 1;
        let zero = one.decrement_ttl().unwrap();
        assert_eq!(zero.ip.ttl, 0);
        assert_eq!(zero.clone().decrement_ttl(), Err(TtlExpired));
        // TTL policy is the switch's business; the frame itself is fine.
        assert_eq!(Packet::parse(&zero.serialize()).unwrap(), zero);
    }

    #[test]
    fn mac_text_form() {
        let m: MacAddr = "08:00:00:00:0A:ff".parse().unwrap();
        assert_eq!(m.to_string(), "08:00:00:00:0a:ff");
        assert!("08:00:00:00:0a".parse::<MacAddr>().is_err());
        assert!("08:00:00:00:0a:ff:01".parse::<MacAddr>().is_err());
        assert!("08:00:00:00:0a:f".parse::<MacAddr>().is_err());
        assert!("zz:00:00:00:0a:ff".parse::<MacAddr>().is_err());
    }

    #[test]
    fn checksum_of_odd_length() {
        assert_eq!(internet_checksum(&[0x01]), !0x0100);
        assert_eq!(internet_checksum(&[]), 0xffff);
    }

    #[test]
    fn flag_debug() {
        let f = TcpFlags::SYN | TcpFlags::ACK;
        assert_eq!(alloc::format!("{f:?}"), "SYN|ACK");
        assert!(!f.is_syn());
        assert!(TcpFlags::SYN.is_syn());
        assert_eq!(alloc::format!("{:?}", TcpFlags::empty()), "-");
    }

    prop_compose! {
        pub fn arb_packet()(
            src_mac in any::<[u8; 6]>(),
            dst_mac in any::<[u8; 6]>(),
            src in any::<u32>(),
            dst in any::<u32>(),
            tos in any::<u8>(),
            id in any::<u16>(),
            frag in any::<u16>(),
            ttl in any::<u8>(),
            sport in any::<u16>(),
            dport in any::<u16>(),
            seq in any::<u32>(),
            ack in any::<u32>(),
            flags in any::<u8>(),
            window in any::<u16>(),
            csum in any::<u16>(),
            urgent in any::<u16>(),
            payload in proptest::collection::vec(any::<u8>(), 0..64),
        ) -> Packet {
            let mut p = Packet::tcp(
                MacAddr(src_mac), MacAddr(dst_mac),
                Ipv4Addr::from(src), Ipv4Addr::from(dst),
                sport, dport, TcpFlags::from_bits(flags), payload,
            );
            p.ip.tos = tos;
            p.ip.identification = id;
            p.ip.flags_fragment = frag;
            p.ip.ttl = ttl;
            p.tcp.seq = seq;
            p.tcp.ack = ack;
            p.tcp.window = window;
            p.tcp.checksum = csum;
            p.tcp.urgent = urgent;
            p.refresh();
            p
        }
    }

    proptest! {
        #[test]
        fn parse_inverts_serialize(p in arb_packet()) {
            let bytes = p.serialize();
            let back = Packet::parse(&bytes).unwrap();
            prop_assert_eq!(&back, &p);
            prop_assert_eq!(back.serialize(), bytes);
        }

        #[test]
        fn decrement_keeps_checksum_valid(p in arb_packet()) {
            let ttl = p.ip.ttl;
            match p.clone().decrement_ttl() {
                Ok(q) => {
                    prop_assert_eq!(q.ip.ttl, ttl - 1);
                    prop_assert_eq!(q.ip.header_checksum, q.ip.compute_checksum());
                    let mut reverted = q.clone();
                    reverted.ip.ttl = ttl;
                    reverted.ip.header_checksum = p.ip.header_checksum;
                    prop_assert_eq!(reverted, p);
                    prop_assert!(Packet::parse(&q.serialize()).is_ok());
                }
                Err(TtlExpired) => prop_assert_eq!(ttl, 0),
            }
        }

        #[test]
        fn swap_is_an_involution(p in arb_packet()) {
            prop_assert_eq!(p.swap_endpoints().swap_endpoints(), p);
        }
    }

    #[test]
    fn empty_payload_len() {
        let p = golden_syn();
        assert_eq!(p.wire_len(), 54);
        assert_eq!(vec![0u8; 0], p.payload);
    }
}
