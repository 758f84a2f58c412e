//! Level-2 filtering: per-host dynamic port knocking.
//!
//! Every authorized host owns a [`KnockSequence`] of three knock ports and a
//! service port. Knocks are TCP SYNs to the knock ports in order; each one is
//! absorbed by the switch. After the third, traffic to the service port is
//! forwarded.
//!
//! Transitions, checked top to bottom:
//!
//! | stage | packet                       | next stage | verdict |
//! |-------|------------------------------|------------|---------|
//! | 3     | any, to the service port     | 3          | Forward |
//! | any   | not a SYN                    | unchanged  | Drop    |
//! | s < 3 | SYN to `knocks[s]`           | s + 1      | Consume |
//! | any   | SYN to `knocks[0]`           | 1          | Consume |
//! | any   | any other SYN                | 0          | Drop    |
//!
//! The fourth row restarts an attempt; with pairwise distinct knock ports it
//! makes the true sequence succeed from every stage.

use core::fmt;
use core::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packet::Packet;

pub const KNOCK_COUNT: usize = 3;
/// Lowest port usable as a knock.
pub const MIN_KNOCK_PORT: u16 = 1024;
pub const DEFAULT_SERVICE_PORT: u16 = 22;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SequenceError {
    #[error("knock port {0} is below {MIN_KNOCK_PORT}")]
    PortTooLow(u16),
    #[error("knock port {0} appears more than once")]
    Repeated(u16),
    #[error("service port {0} is also a knock port")]
    ServiceIsKnock(u16),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSequence", into = "RawSequence")]
pub struct KnockSequence {
    knocks: [u16; KNOCK_COUNT],
    service: u16,
}

/// Wire form in the sequence store: `{"knocks": [a, b, c], "service": p}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSequence {
    knocks: [u16; KNOCK_COUNT],
    service: u16,
}

impl TryFrom<RawSequence> for KnockSequence {
    type Error = SequenceError;

    fn try_from(raw: RawSequence) -> Result<Self, Self::Error> {
        Self::new(raw.knocks, raw.service)
    }
}

impl From<KnockSequence> for RawSequence {
    fn from(s: KnockSequence) -> Self {
        Self {
            knocks: s.knocks,
            service: s.service,
        }
    }
}

impl KnockSequence {
    pub fn new(knocks: [u16; KNOCK_COUNT], service: u16) -> Result<Self, SequenceError> {
        for (i, &k) in knocks.iter().enumerate() {
            if k < MIN_KNOCK_PORT {
                return Err(SequenceError::PortTooLow(k));
            }
            if knocks[..i].contains(&k) {
                return Err(SequenceError::Repeated(k));
            }
        }
        if knocks.contains(&service) {
            return Err(SequenceError::ServiceIsKnock(service));
        }
        Ok(Self { knocks, service })
    }

    pub fn knocks(&self) -> [u16; KNOCK_COUNT] {
        self.knocks
    }

    pub fn service_port(&self) -> u16 {
        self.service
    }
}

impl fmt::Display for KnockSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c] = self.knocks;
        write!(f, "{a}, {b}, {c} -> {}", self.service)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnockVerdict {
    /// A correct knock: the probe is absorbed.
    Consume,
    Forward,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("packet from {got} routed to the knock state of {owner}")]
pub struct OwnerMismatch {
    pub owner: Ipv4Addr,
    pub got: Ipv4Addr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnockState {
    owner: Ipv4Addr,
    seq: KnockSequence,
    stage: u8,
}

impl KnockState {
    pub fn new(owner: Ipv4Addr, seq: KnockSequence) -> Self {
        Self {
            owner,
            seq,
            stage: 0,
        }
    }

    pub fn owner(&self) -> Ipv4Addr {
        self.owner
    }

    pub fn sequence(&self) -> &KnockSequence {
        &self.seq
    }

    /// Number of correct knocks so far, 0 through 3.
    pub fn stage(&self) -> u8 {
        self.stage
    }

    pub fn is_open(&self) -> bool {
        usize::from(self.stage) == KNOCK_COUNT
    }

    pub fn reset(&mut self) {
        self.stage = 0;
    }

    /// Advances the state machine by one packet from the owner.
    pub fn step(&mut self, p: &Packet) -> Result<KnockVerdict, OwnerMismatch> {
        if p.ip.src_ip != self.owner {
            return Err(OwnerMismatch {
                owner: self.owner,
                got: p.ip.src_ip,
            });
        }
        Ok(self.advance(p.tcp.dst_port, p.tcp.flags.is_syn()))
    }

    fn advance(&mut self, dst_port: u16, syn: bool) -> KnockVerdict {
        if self.is_open() && dst_port == self.seq.service {
            return KnockVerdict::Forward;
        }
        if !syn {
            return KnockVerdict::Drop;
        }
        let stage = usize::from(self.stage);
        if stage < KNOCK_COUNT && dst_port == self.seq.knocks[stage] {
            self.stage += 1;
            KnockVerdict::Consume
        } else if dst_port == self.seq.knocks[0] {
            self.stage = 1;
            KnockVerdict::Consume
        } else {
            self.stage = 0;
            KnockVerdict::Drop
        }
    }
}

pub fn knock_step(state: &mut KnockState, p: &Packet) -> Result<KnockVerdict, OwnerMismatch> {
    state.step(p)
}
