//! The ACL-driven control plane.
//!
//! A packet punted from a switch is checked against the [`Acl`]. Denied and
//! unknown hosts get a single drop rule. Allowed hosts get a knock sequence,
//! reused from the [`SequenceStore`] when one exists, plus the rules that let
//! their traffic through.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knocking::{KnockSequence, DEFAULT_SERVICE_PORT, KNOCK_COUNT, MIN_KNOCK_PORT};
use crate::packet::{MacAddr, Packet};
use crate::stateless::{CHECK_IP, CHECK_MAC};
use crate::switch::{Feature, IPV4_FORWARD, KNOCK_RULES, PRESENT_TABLE};
use crate::table::{Action, PortId, Rule, TableKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AclVerdict {
    Allow,
    Deny,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AclEntry {
    pub ip: Ipv4Addr,
    #[serde(default)]
    pub mac: Option<MacAddr>,
    pub verdict: AclVerdict,
    /// Overrides the service port of a freshly generated sequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<u16>,
}

impl AclEntry {
    pub fn allow(ip: Ipv4Addr, mac: Option<MacAddr>) -> Self {
        Self {
            ip,
            mac,
            verdict: AclVerdict::Allow,
            service: None,
        }
    }

    pub fn deny(ip: Ipv4Addr) -> Self {
        Self {
            ip,
            mac: None,
            verdict: AclVerdict::Deny,
            service: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AclError {
    #[error("duplicate ACL entry for {0}")]
    Duplicate(Ipv4Addr),
    #[error("service port {0} for {1} must be nonzero and below {MIN_KNOCK_PORT}")]
    BadService(u16, Ipv4Addr),
}

/// One entry per IP; serialized as a bare JSON array.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<AclEntry>", into = "Vec<AclEntry>")]
pub struct Acl {
    entries: BTreeMap<Ipv4Addr, AclEntry>,
}

impl TryFrom<Vec<AclEntry>> for Acl {
    type Error = AclError;

    fn try_from(entries: Vec<AclEntry>) -> Result<Self, Self::Error> {
        Self::new(entries)
    }
}

impl From<Acl> for Vec<AclEntry> {
    fn from(acl: Acl) -> Self {
        acl.entries.into_values().collect()
    }
}

impl Acl {
    pub fn new(entries: impl IntoIterator<Item = AclEntry>) -> Result<Self, AclError> {
        let mut map = BTreeMap::new();
        for e in entries {
            if let Some(s) = e.service {
                if s == 0 || s >= MIN_KNOCK_PORT {
                    return Err(AclError::BadService(s, e.ip));
                }
            }
            if map.insert(e.ip, e.clone()).is_some() {
                return Err(AclError::Duplicate(e.ip));
            }
        }
        Ok(Self { entries: map })
    }

    pub fn get(&self, ip: Ipv4Addr) -> Option<&AclEntry> {
        self.entries.get(&ip)
    }

    pub fn entries(&self) -> impl Iterator<Item = &AclEntry> {
        self.entries.values()
    }

    pub fn is_allowed(&self, ip: Ipv4Addr) -> bool {
        self.get(ip).is_some_and(|e| e.verdict == AclVerdict::Allow)
    }
}

/// Knock sequences by host. Serialized as `{ip: {"knocks": [..], "service": n}}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SequenceStore {
    sequences: BTreeMap<Ipv4Addr, KnockSequence>,
}

impl SequenceStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, ip: Ipv4Addr) -> Option<&KnockSequence> {
        self.sequences.get(&ip)
    }

    pub fn insert(&mut self, ip: Ipv4Addr, seq: KnockSequence) -> Option<KnockSequence> {
        self.sequences.insert(ip, seq)
    }

    pub fn remove(&mut self, ip: Ipv4Addr) -> Option<KnockSequence> {
        self.sequences.remove(&ip)
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Ipv4Addr, &KnockSequence)> {
        self.sequences.iter()
    }

    fn holds(&self, seq: &KnockSequence) -> bool {
        self.sequences.values().any(|s| s.knocks() == seq.knocks())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct PersistError(pub String);

/// Durable storage for the sequence store. Called before any install that
/// depends on a newly allocated sequence.
pub trait SequencePersistence {
    fn persist(&mut self, store: &SequenceStore) -> Result<(), PersistError>;
}

/// Keeps the last persisted snapshot in memory.
#[derive(Debug, Clone, Default)]
pub struct MemoryPersistence {
    pub saved: Option<SequenceStore>,
    pub writes: usize,
}

impl SequencePersistence for MemoryPersistence {
    fn persist(&mut self, store: &SequenceStore) -> Result<(), PersistError> {
        self.saved = Some(store.clone());
        self.writes += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ControllerError {
    #[error("sequence store write failed: {0}")]
    PersistenceFailure(PersistError),
}

/// What the controller knows about a switch.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SwitchProfile {
    pub features: BTreeSet<Feature>,
    /// Next hop for every host address reachable from the switch.
    pub routes: BTreeMap<Ipv4Addr, PortId>,
}

/// Draws three distinct knock ports uniformly from `[1024, 65535]`.
pub fn generate_sequence<R: Rng + ?Sized>(rng: &mut R, service: u16) -> KnockSequence {
    loop {
        let mut knocks = [0u16; KNOCK_COUNT];
        for k in &mut knocks {
            *k = rng.random_range(MIN_KNOCK_PORT..=u16::MAX);
        }
        if let Ok(seq) = KnockSequence::new(knocks, service) {
            return seq;
        }
    }
}

pub type Install = (String, Rule);

pub struct Controller {
    acl: Acl,
    store: SequenceStore,
    rng: ChaCha8Rng,
    handled: BTreeSet<(String, Ipv4Addr)>,
    profiles: BTreeMap<String, SwitchProfile>,
    persistence: Box<dyn SequencePersistence>,
}

impl Controller {
    pub fn new(
        acl: Acl,
        store: SequenceStore,
        seed: u64,
        profiles: BTreeMap<String, SwitchProfile>,
        persistence: Box<dyn SequencePersistence>,
    ) -> Self {
        Self {
            acl,
            store,
            rng: ChaCha8Rng::seed_from_u64(seed),
            handled: BTreeSet::new(),
            profiles,
            persistence,
        }
    }

    pub fn acl(&self) -> &Acl {
        &self.acl
    }

    pub fn store(&self) -> &SequenceStore {
        &self.store
    }

    pub fn is_handled(&self, switch: &str, host: Ipv4Addr) -> bool {
        self.handled.contains(&(switch.to_string(), host))
    }

    /// Returns the stored sequence for `host`, or allocates and persists a
    /// fresh one that no other host holds.
    fn sequence_for(
        &mut self,
        host: Ipv4Addr,
        service: u16,
    ) -> Result<KnockSequence, ControllerError> {
        if let Some(seq) = self.store.get(host) {
            return Ok(*seq);
        }
        let seq = loop {
            let seq = generate_sequence(&mut self.rng, service);
            if !self.store.holds(&seq) {
                break seq;
            }
        };
        self.store.insert(host, seq);
        if let Err(e) = self.persistence.persist(&self.store) {
            self.store.remove(host);
            return Err(ControllerError::PersistenceFailure(e));
        }
        Ok(seq)
    }

    pub fn handle_packet_in(
        &mut self,
        switch: &str,
        p: &Packet,
    ) -> Result<Vec<Install>, ControllerError> {
        let host = p.ip.src_ip;
        if self.is_handled(switch, host) {
            return Ok(Vec::new());
        }
        let install = |table: &str, key: TableKey, action: Action| {
            (table.to_string(), Rule::new(key, action))
        };

        let Some(entry) = self
            .acl
            .get(host)
            .filter(|e| e.verdict == AclVerdict::Allow)
            .cloned()
        else {
            self.handled.insert((switch.to_string(), host));
            return Ok(alloc::vec![install(
                PRESENT_TABLE,
                TableKey::ip(host),
                Action::Drop
            )]);
        };

        let seq = self.sequence_for(host, entry.service.unwrap_or(DEFAULT_SERVICE_PORT))?;
        self.handled.insert((switch.to_string(), host));

        let profile = self.profiles.get(switch).cloned().unwrap_or_default();
        let mut installs = alloc::vec![install(
            PRESENT_TABLE,
            TableKey::ip(host),
            Action::SetAllowed
        )];
        if profile.features.contains(&Feature::Stateless) {
            let mac = entry.mac.unwrap_or(p.eth.src_mac);
            installs.push(install(CHECK_IP, TableKey::ip(host), Action::SetAllowed));
            installs.push(install(
                CHECK_MAC,
                TableKey::ip_mac(host, mac),
                Action::SetAllowed,
            ));
        }
        if profile.features.contains(&Feature::Knocking) {
            for (i, port) in seq.knocks().into_iter().enumerate() {
                installs.push(install(
                    KNOCK_RULES,
                    TableKey::ip_port(host, port),
                    Action::KnockStage(i as u8),
                ));
            }
            installs.push(install(
                KNOCK_RULES,
                TableKey::ip_port(host, seq.service_port()),
                Action::ServicePort,
            ));
        }
        for (&dst, &port) in &profile.routes {
            installs.push(install(
                IPV4_FORWARD,
                TableKey::ip(dst),
                Action::Forward(port),
            ));
        }
        Ok(installs)
    }
}
