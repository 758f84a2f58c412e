//! Direction-normalized flow keys.

use core::net::Ipv4Addr;

use crate::packet::Packet;

/// Which side of the switch a packet entered from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    /// Entered on a port listed in `check_ports`. Encoded as bit 0.
    Internal,
    /// Entered anywhere else. Encoded as bit 1.
    External,
}

impl Direction {
    pub const fn bit(self) -> u8 {
        match self {
            Self::Internal => 0,
            Self::External => 1,
        }
    }

    pub const fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Self::Internal),
            1 => Some(Self::External),
            _ => None,
        }
    }
}

/// A TCP 4-tuple oriented so that `a` is always the internal endpoint.
///
/// A request seen on the internal side and its reply seen on the external
/// side produce the same key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowKey {
    a_ip: Ipv4Addr,
    b_ip: Ipv4Addr,
    a_port: u16,
    b_port: u16,
}

impl FlowKey {
    pub fn of(p: &Packet, direction: Direction) -> Self {
        let (ip, tcp) = (&p.ip, &p.tcp);
        match direction {
            Direction::Internal => Self {
                a_ip: ip.src_ip,
                b_ip: ip.dst_ip,
                a_port: tcp.src_port,
                b_port: tcp.dst_port,
            },
            Direction::External => Self {
                a_ip: ip.dst_ip,
                b_ip: ip.src_ip,
                a_port: tcp.dst_port,
                b_port: tcp.src_port,
            },
        }
    }

    /// Builds a key from already-oriented fields. Used by fixtures and tests
    /// that need keys without materializing packets.
    pub const fn from_parts(a_ip: Ipv4Addr, b_ip: Ipv4Addr, a_port: u16, b_port: u16) -> Self {
        Self {
            a_ip,
            b_ip,
            a_port,
            b_port,
        }
    }

    pub const fn a_ip(&self) -> Ipv4Addr {
        self.a_ip
    }

    pub const fn b_ip(&self) -> Ipv4Addr {
        self.b_ip
    }

    pub const fn a_port(&self) -> u16 {
        self.a_port
    }

    pub const fn b_port(&self) -> u16 {
        self.b_port
    }

    /// The 12-byte big-endian encoding hashed by the Bloom filters.
    pub fn to_bytes(&self) -> [u8; 12] {
        let mut out = [0u8; 12];
        out[0..4].copy_from_slice(&self.a_ip.octets());
        out[4..8].copy_from_slice(&self.b_ip.octets());
        out[8..10].copy_from_slice(&self.a_port.to_be_bytes());
        out[10..12].copy_from_slice(&self.b_port.to_be_bytes());
        out
    }
}

pub fn flow_key(p: &Packet, direction: Direction) -> FlowKey {
    FlowKey::of(p, direction)
}
