//! The switch pipeline.
//!
//! Packets run through, in order: `present_table`, the stateless firewall,
//! the stateful firewall, port knocking and `ipv4_forward`. The three filters
//! are switched on per switch by [`Feature`]. Each processed packet appends
//! exactly one [`EventRecord`] naming the stage that decided its fate.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bloom::{BloomError, BloomPair, DEFAULT_BITS};
use crate::flow::Direction;
use crate::knocking::{KnockSequence, KnockState, KnockVerdict, KNOCK_COUNT};
use crate::packet::Packet;
use crate::stateful::{classify_direction, stateful_process, StatefulVerdict, CHECK_PORTS};
use crate::stateless::{stateless_check, DropCause, StatelessVerdict, CHECK_IP, CHECK_MAC};
use crate::table::{Action, FieldKind, FieldValue, PortId, Rule, TableError, TableKey, TableSet};

pub const PRESENT_TABLE: &str = "present_table";
pub const KNOCK_RULES: &str = "knock_rules";
pub const IPV4_FORWARD: &str = "ipv4_forward";

/// Port over which packets reach the controller.
pub const CPU_PORT: u16 = 55;

fn default_cpu_port() -> PortId {
    PortId::new(CPU_PORT).expect("55 fits in nine bits")
}

fn default_bloom_bits() -> u32 {
    DEFAULT_BITS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Stateless,
    Stateful,
    Knocking,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchConfig {
    pub id: String,
    pub ports: Vec<PortId>,
    #[serde(default = "default_cpu_port")]
    pub cpu_port: PortId,
    #[serde(default)]
    pub features: BTreeSet<Feature>,
    #[serde(default)]
    pub internal_ports: Vec<PortId>,
    #[serde(default = "default_bloom_bits")]
    pub bloom_bits: u32,
}

impl SwitchConfig {
    pub fn new(id: impl Into<String>, ports: impl IntoIterator<Item = u16>) -> Self {
        Self {
            id: id.into(),
            ports: ports.into_iter().filter_map(PortId::new).collect(),
            cpu_port: default_cpu_port(),
            features: BTreeSet::new(),
            internal_ports: Vec::new(),
            bloom_bits: DEFAULT_BITS,
        }
    }

    pub fn with_features(mut self, features: impl IntoIterator<Item = Feature>) -> Self {
        self.features.extend(features);
        self
    }

    pub fn with_internal(mut self, ports: impl IntoIterator<Item = u16>) -> Self {
        self.internal_ports
            .extend(ports.into_iter().filter_map(PortId::new));
        self
    }

    pub fn has(&self, feature: Feature) -> bool {
        self.features.contains(&feature)
    }

    pub fn has_port(&self, port: PortId) -> bool {
        self.ports.contains(&port)
    }

    pub fn validate(&self) -> Result<(), SwitchError> {
        let bad = |msg: String| Err(SwitchError::Config(format!("{}: {msg}", self.id)));
        if self.id.is_empty() {
            return bad("empty switch id".into());
        }
        if self.has_port(self.cpu_port) {
            return bad(format!("cpu port {} is also a data port", self.cpu_port));
        }
        let unique: BTreeSet<_> = self.ports.iter().collect();
        if unique.len() != self.ports.len() {
            return bad("duplicate data port".into());
        }
        if let Some(p) = self.internal_ports.iter().find(|p| !self.has_port(**p)) {
            return bad(format!("internal port {p} is not a data port"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SwitchError {
    #[error("invalid switch configuration: {0}")]
    Config(String),
    #[error("port {0} does not exist on this switch")]
    UnknownPort(PortId),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Bloom(#[from] BloomError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketOut {
    pub egress: PortId,
    pub packet: Packet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Forwarded,
    Dropped,
    Punted,
    Consumed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Parse,
    Present,
    Stateless,
    Stateful,
    Knocking,
    Forward,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Forwarded => "forwarded",
            Self::Dropped => "dropped",
            Self::Punted => "punted",
            Self::Consumed => "consumed",
        })
    }
}

/// One line of the switch event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: u64,
    pub switch: String,
    pub verdict: Verdict,
    pub stage: Stage,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub sport: u16,
    pub dport: u16,
    pub reason: String,
}

struct Decision {
    verdict: Verdict,
    stage: Stage,
    reason: String,
    out: Option<PacketOut>,
}

impl Decision {
    fn new(verdict: Verdict, stage: Stage, reason: impl Into<String>) -> Self {
        Self {
            verdict,
            stage,
            reason: reason.into(),
            out: None,
        }
    }

    fn drop(stage: Stage, reason: impl Into<String>) -> Self {
        Self::new(Verdict::Dropped, stage, reason)
    }
}

#[derive(Debug, Clone)]
pub struct Switch {
    config: SwitchConfig,
    tables: TableSet,
    flows: BloomPair,
    knock_states: BTreeMap<Ipv4Addr, KnockState>,
    /// Hosts punted to the controller whose rules have not arrived yet.
    pending: BTreeSet<Ipv4Addr>,
    log: Vec<EventRecord>,
}

impl Switch {
    pub fn new(config: SwitchConfig) -> Result<Self, SwitchError> {
        config.validate()?;
        let mut tables = TableSet::new();
        let present_default = if config.has(Feature::Knocking) {
            Action::SendToController
        } else {
            Action::NoAction
        };
        tables.create(PRESENT_TABLE, vec![FieldKind::Ipv4], present_default)?;
        tables.create(CHECK_IP, vec![FieldKind::Ipv4], Action::SendToController)?;
        tables.create(
            CHECK_MAC,
            vec![FieldKind::Ipv4, FieldKind::Mac],
            Action::Drop,
        )?;
        let ports = tables.create(CHECK_PORTS, vec![FieldKind::SwitchPort], Action::NoAction)?;
        for &port in &config.internal_ports {
            ports.insert(Rule::new(
                TableKey::switch_port(port),
                Action::SetDirection(Direction::Internal),
            ))?;
        }
        tables.create(
            KNOCK_RULES,
            vec![FieldKind::Ipv4, FieldKind::L4Port],
            Action::Drop,
        )?;
        tables.create(IPV4_FORWARD, vec![FieldKind::Ipv4], Action::Drop)?;
        Ok(Self {
            flows: BloomPair::new(config.bloom_bits)?,
            config,
            tables,
            knock_states: BTreeMap::new(),
            pending: BTreeSet::new(),
            log: Vec::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.config.id
    }

    pub fn config(&self) -> &SwitchConfig {
        &self.config
    }

    pub fn tables(&self) -> &TableSet {
        &self.tables
    }

    pub fn flows(&self) -> &BloomPair {
        &self.flows
    }

    pub fn knock_state(&self, host: Ipv4Addr) -> Option<&KnockState> {
        self.knock_states.get(&host)
    }

    pub fn knock_states(&self) -> impl Iterator<Item = &KnockState> {
        self.knock_states.values()
    }

    pub fn is_pending(&self, host: Ipv4Addr) -> bool {
        self.pending.contains(&host)
    }

    pub fn log(&self) -> &[EventRecord] {
        &self.log
    }

    pub fn take_log(&mut self) -> Vec<EventRecord> {
        core::mem::take(&mut self.log)
    }

    /// Parses `frame` and processes it. A frame that fails to parse is
    /// dropped and logged, not reported as an error.
    pub fn process_frame(
        &mut self,
        now: u64,
        ingress: PortId,
        frame: &[u8],
    ) -> Result<Vec<PacketOut>, SwitchError> {
        if !self.config.has_port(ingress) {
            return Err(SwitchError::UnknownPort(ingress));
        }
        match Packet::parse(frame) {
            Ok(p) => self.process_packet(now, ingress, p),
            Err(e) => {
                self.log.push(EventRecord {
                    time: now,
                    switch: self.config.id.clone(),
                    verdict: Verdict::Dropped,
                    stage: Stage::Parse,
                    src: Ipv4Addr::UNSPECIFIED,
                    dst: Ipv4Addr::UNSPECIFIED,
                    sport: 0,
                    dport: 0,
                    reason: format!("malformed frame: {e}"),
                });
                Ok(Vec::new())
            }
        }
    }

    pub fn process_packet(
        &mut self,
        now: u64,
        ingress: PortId,
        p: Packet,
    ) -> Result<Vec<PacketOut>, SwitchError> {
        if !self.config.has_port(ingress) {
            return Err(SwitchError::UnknownPort(ingress));
        }
        let record = EventRecord {
            time: now,
            switch: self.config.id.clone(),
            verdict: Verdict::Dropped,
            stage: Stage::Present,
            src: p.ip.src_ip,
            dst: p.ip.dst_ip,
            sport: p.tcp.src_port,
            dport: p.tcp.dst_port,
            reason: String::new(),
        };
        let decision = self.decide(ingress, p)?;
        self.log.push(EventRecord {
            verdict: decision.verdict,
            stage: decision.stage,
            reason: decision.reason,
            ..record
        });
        Ok(decision.out.into_iter().collect())
    }

    fn punt(&mut self, stage: Stage, p: Packet, reason: &str) -> Decision {
        let src = p.ip.src_ip;
        if !self.pending.insert(src) {
            return Decision::drop(stage, "awaiting controller");
        }
        Decision {
            out: Some(PacketOut {
                egress: self.config.cpu_port,
                packet: p,
            }),
            ..Decision::new(Verdict::Punted, stage, reason)
        }
    }

    fn route(&self, dst: Ipv4Addr) -> Result<Option<PortId>, SwitchError> {
        let l = self.tables.get(IPV4_FORWARD)?.lookup(&TableKey::ip(dst))?;
        Ok(match l.action {
            Action::Forward(port) => Some(port),
            _ => None,
        })
    }

    fn decide(&mut self, ingress: PortId, p: Packet) -> Result<Decision, SwitchError> {
        let src = p.ip.src_ip;

        // 1. present_table
        let present = self.tables.get(PRESENT_TABLE)?.lookup(&TableKey::ip(src))?;
        match present.action {
            Action::Drop => return Ok(Decision::drop(Stage::Present, "present_table drop")),
            Action::SendToController => {
                return Ok(self.punt(Stage::Present, p, "present_table miss"));
            }
            _ => {}
        }

        // 2. stateless
        if self.config.has(Feature::Stateless) {
            let verdict =
                stateless_check(&p, self.tables.get(CHECK_IP)?, self.tables.get(CHECK_MAC)?)?;
            match verdict {
                StatelessVerdict::Allow => {}
                StatelessVerdict::Drop(DropCause::Ip) => {
                    return Ok(Decision::drop(Stage::Stateless, "check_ip drop"));
                }
                StatelessVerdict::Drop(DropCause::Mac) => {
                    return Ok(Decision::drop(Stage::Stateless, "check_mac drop"));
                }
                // The controller already ruled on this host.
                StatelessVerdict::ToController if present.hit => {
                    return Ok(Decision::drop(Stage::Stateless, "check_ip miss"));
                }
                StatelessVerdict::ToController => {
                    return Ok(self.punt(Stage::Stateless, p, "check_ip miss"));
                }
            }
        }

        let direction = classify_direction(ingress, self.tables.get(CHECK_PORTS)?)?;

        // 3. stateful
        if self.config.has(Feature::Stateful) {
            let internal_to_internal = direction == Direction::Internal
                && self
                    .route(p.ip.dst_ip)?
                    .is_some_and(|e| self.config.internal_ports.contains(&e));
            if !internal_to_internal
                && stateful_process(&p, direction, &mut self.flows) == StatefulVerdict::Drop
            {
                return Ok(Decision::drop(Stage::Stateful, "unknown external flow"));
            }
        }

        // 4. knocking, for connection attempts entering on internal ports
        if self.config.has(Feature::Knocking) && direction == Direction::Internal {
            let Some(state) = self.knock_states.get_mut(&src) else {
                return Ok(Decision::drop(Stage::Knocking, "no knock sequence"));
            };
            let before = state.stage();
            let verdict = state.step(&p).expect("knock states are keyed by owner");
            let after = state.stage();
            match verdict {
                KnockVerdict::Forward => {}
                KnockVerdict::Consume => {
                    return Ok(Decision::new(
                        Verdict::Consumed,
                        Stage::Knocking,
                        format!("knock {after}/{KNOCK_COUNT}"),
                    ));
                }
                KnockVerdict::Drop => {
                    let reason = if after < before || (before == 0 && p.tcp.flags.is_syn()) {
                        "wrong knock"
                    } else {
                        "not authenticated"
                    };
                    return Ok(Decision::drop(Stage::Knocking, reason));
                }
            }
        }

        // 5. ipv4_forward
        let Some(egress) = self.route(p.ip.dst_ip)? else {
            return Ok(Decision::drop(Stage::Forward, "no route"));
        };
        if !self.config.has_port(egress) {
            return Err(SwitchError::UnknownPort(egress));
        }
        match p.decrement_ttl() {
            Ok(packet) => Ok(Decision {
                out: Some(PacketOut { egress, packet }),
                ..Decision::new(Verdict::Forwarded, Stage::Forward, "ipv4_forward")
            }),
            Err(_) => Ok(Decision::drop(Stage::Forward, "ttl expired")),
        }
    }

    /// Installs a batch of rules. The batch is validated as a whole before
    /// anything is written.
    pub fn apply_rule_install(&mut self, installs: &[(String, Rule)]) -> Result<(), SwitchError> {
        for (table, rule) in installs {
            let t = self.tables.get(table)?;
            t.lookup(&rule.key)?;
            if let Action::Forward(port) = rule.action {
                if !self.config.has_port(port) {
                    return Err(SwitchError::UnknownPort(port));
                }
            }
        }

        let mut knock_hosts = BTreeSet::new();
        for (table, rule) in installs {
            self.tables.get_mut(table)?.insert(rule.clone())?;
            let host = match rule.key.fields().first() {
                Some(FieldValue::Ipv4(ip)) => *ip,
                _ => continue,
            };
            match table.as_str() {
                PRESENT_TABLE | CHECK_IP => {
                    self.pending.remove(&host);
                }
                KNOCK_RULES => {
                    knock_hosts.insert(host);
                }
                _ => {}
            }
        }

        for host in knock_hosts {
            if let Some(seq) = self.installed_sequence(host)? {
                let current = self.knock_states.get(&host).map(|s| *s.sequence());
                if current != Some(seq) {
                    self.knock_states.insert(host, KnockState::new(host, seq));
                }
            }
        }
        Ok(())
    }

    /// Reassembles a host's sequence from its `knock_rules` entries.
    fn installed_sequence(&self, host: Ipv4Addr) -> Result<Option<KnockSequence>, SwitchError> {
        let mut knocks = [None; KNOCK_COUNT];
        let mut service = None;
        for rule in self.tables.get(KNOCK_RULES)?.rules() {
            let [FieldValue::Ipv4(ip), FieldValue::L4Port(port)] = rule.key.fields() else {
                continue;
            };
            if *ip != host {
                continue;
            }
            match rule.action {
                Action::KnockStage(i) if usize::from(i) < KNOCK_COUNT => {
                    knocks[usize::from(i)] = Some(*port);
                }
                Action::ServicePort => service = Some(*port),
                _ => {}
            }
        }
        let (Some(a), Some(b), Some(c), Some(service)) = (knocks[0], knocks[1], knocks[2], service)
        else {
            return Ok(None);
        };
        Ok(KnockSequence::new([a, b, c], service).ok())
    }

    /// Lets a punted host be punted again, e.g. when the controller replied
    /// without installing anything.
    pub fn resolve_pending(&mut self, host: Ipv4Addr) {
        self.pending.remove(&host);
    }

    pub fn is_internal(&self, port: PortId) -> bool {
        self.config.internal_ports.contains(&port)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{MacAddr, TcpFlags};
    use alloc::string::ToString;
    use proptest::prelude::*;

    const H2: Ipv4Addr = Ipv4Addr::new(10, 0, 2, 2);
    const H5: Ipv4Addr = Ipv4Addr::new(10, 0, 5, 5);
    const H7: Ipv4Addr = Ipv4Addr::new(10, 0, 7, 7);
    const H2_MAC: MacAddr = MacAddr::new([8, 0, 0, 0, 2, 0x22]);
    const H7_MAC: MacAddr = MacAddr::new([8, 0, 0, 0, 7, 0x77]);

    fn port(n: u16) -> PortId {
        PortId::new(n).unwrap()
    }

    /// An s6-like switch: port 3 faces the network, 1 and 2 face servers.
    fn guard() -> Switch {
        Switch::new(
            SwitchConfig::new("s6", [1, 2, 3])
                .with_features([Feature::Stateless, Feature::Stateful, Feature::Knocking])
                .with_internal([3]),
        )
        .unwrap()
    }

    fn seg(src: Ipv4Addr, dst: Ipv4Addr, dport: u16, flags: TcpFlags) -> Packet {
        Packet::tcp(
            H2_MAC,
            MacAddr::default(),
            src,
            dst,
            40000,
            dport,
            flags,
            Vec::new(),
        )
    }

    fn allow_h2() -> Vec<(String, Rule)> {
        let r = |t: &str, key, action| (t.to_string(), Rule::new(key, action));
        vec![
            r(PRESENT_TABLE, TableKey::ip(H2), Action::SetAllowed),
            r(CHECK_IP, TableKey::ip(H2), Action::SetAllowed),
            r(CHECK_MAC, TableKey::ip_mac(H2, H2_MAC), Action::SetAllowed),
            r(
                KNOCK_RULES,
                TableKey::ip_port(H2, 2222),
                Action::KnockStage(0),
            ),
            r(
                KNOCK_RULES,
                TableKey::ip_port(H2, 3333),
                Action::KnockStage(1),
            ),
            r(
                KNOCK_RULES,
                TableKey::ip_port(H2, 4444),
                Action::KnockStage(2),
            ),
            r(KNOCK_RULES, TableKey::ip_port(H2, 22), Action::ServicePort),
            r(IPV4_FORWARD, TableKey::ip(H7), Action::Forward(port(2))),
            r(IPV4_FORWARD, TableKey::ip(H2), Action::Forward(port(3))),
        ]
    }

    #[test]
    fn config_validation() {
        let mut c = SwitchConfig::new("s", [1, 55]);
        assert!(matches!(c.validate(), Err(SwitchError::Config(_))));
        c = SwitchConfig::new("s", [1, 2]).with_internal([3]);
        assert!(matches!(c.validate(), Err(SwitchError::Config(_))));
        c = SwitchConfig::new("s", [1, 1]);
        assert!(matches!(c.validate(), Err(SwitchError::Config(_))));
        assert!(SwitchConfig::new("s", [1, 2])
            .with_internal([2])
            .validate()
            .is_ok());
    }

    #[test]
    fn first_packet_is_punted_once() {
        let mut sw = guard();
        let out = sw
            .process_packet(0, port(3), seg(H2, H7, 22, TcpFlags::SYN))
            .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].egress.get(), CPU_PORT);
        assert_eq!(sw.log()[0].verdict, Verdict::Punted);
        assert_eq!(sw.log()[0].stage, Stage::Present);

        // Still pending: dropped, not re-punted.
        let out = sw
            .process_packet(1, port(3), seg(H2, H7, 22, TcpFlags::SYN))
            .unwrap();
        assert!(out.is_empty());
        assert_eq!(sw.log()[1].reason, "awaiting controller");
    }

    #[test]
    fn dropped_host_is_never_repunted() {
        let mut sw = guard();
        sw.process_packet(0, port(3), seg(H5, H7, 22, TcpFlags::SYN))
            .unwrap();
        sw.apply_rule_install(&[(
            PRESENT_TABLE.into(),
            Rule::new(TableKey::ip(H5), Action::Drop),
        )])
        .unwrap();
        for t in 1..5 {
            let out = sw
                .process_packet(t, port(3), seg(H5, H7, 22, TcpFlags::SYN))
                .unwrap();
            assert!(out.is_empty());
        }
        assert!(sw.log()[1..]
            .iter()
            .all(|e| e.reason == "present_table drop"));
    }

    #[test]
    fn authorized_packet_is_forwarded_with_ttl_decremented() {
        let mut sw = guard();
        sw.apply_rule_install(&allow_h2()).unwrap();
        assert_eq!(sw.knock_state(H2).map(|s| s.stage()), Some(0));
        for k in [2222, 3333, 4444] {
            assert!(sw
                .process_packet(0, port(3), seg(H2, H7, k, TcpFlags::SYN))
                .unwrap()
                .is_empty());
        }
        let p = seg(H2, H7, 22, TcpFlags::SYN);
        let out = sw.process_packet(1, port(3), p.clone()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].egress, port(2));
        assert_eq!(out[0].packet.ip.ttl, p.ip.ttl - 1);
        assert_eq!(
            Packet::parse(&out[0].packet.serialize()).unwrap(),
            out[0].packet
        );
        let verdicts: Vec<_> = sw.log().iter().map(|e| e.verdict).collect();
        assert_eq!(
            verdicts,
            [
                Verdict::Consumed,
                Verdict::Consumed,
                Verdict::Consumed,
                Verdict::Forwarded
            ]
        );
    }

    #[test]
    fn server_reply_passes_stateful_but_not_unsolicited() {
        let mut sw = guard();
        let mut installs = allow_h2();
        let r = |t: &str, key, action| (t.to_string(), Rule::new(key, action));
        installs.extend([
            r(PRESENT_TABLE, TableKey::ip(H7), Action::SetAllowed),
            r(CHECK_IP, TableKey::ip(H7), Action::SetAllowed),
            r(CHECK_MAC, TableKey::ip_mac(H7, H7_MAC), Action::SetAllowed),
        ]);
        sw.apply_rule_install(&installs).unwrap();
        // Unsolicited packet from the server side.
        let mut unsolicited = seg(H7, H2, 40000, TcpFlags::SYN);
        unsolicited.eth.src_mac = H7_MAC;
        let out = sw.process_packet(0, port(2), unsolicited).unwrap();
        assert!(out.is_empty());
        assert_eq!(sw.log()[0].reason, "unknown external flow");

        for k in [2222, 3333, 4444, 22] {
            sw.process_packet(1, port(3), seg(H2, H7, k, TcpFlags::SYN))
                .unwrap();
        }
        let mut reply = seg(H2, H7, 22, TcpFlags::SYN).swap_endpoints();
        reply.tcp.flags = TcpFlags::SYN | TcpFlags::ACK;
        reply.eth.src_mac = H7_MAC;
        let out = sw.process_packet(2, port(2), reply).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].egress, port(3));
    }

    #[test]
    fn ttl_zero_is_dropped() {
        let mut sw = Switch::new(SwitchConfig::new("s3", [1, 2])).unwrap();
        sw.apply_rule_install(&[(
            IPV4_FORWARD.into(),
            Rule::new(TableKey::ip(H7), Action::Forward(port(2))),
        )])
        .unwrap();
        let mut p = seg(H2, H7, 80, TcpFlags::ACK);
        p.ip.ttl = 0;
        assert!(sw.process_packet(0, port(1), p.clone()).unwrap().is_empty());
        assert_eq!(sw.log()[0].reason, "ttl expired");
        p.ip.ttl = 1;
        let out = sw.process_packet(0, port(1), p).unwrap();
        assert_eq!(out[0].packet.ip.ttl, 0);
    }

    #[test]
    fn plain_switch_forwards_without_controller() {
        let mut sw = Switch::new(SwitchConfig::new("s3", [1, 2])).unwrap();
        let p = seg(H2, H7, 80, TcpFlags::SYN);
        assert!(sw.process_packet(0, port(1), p.clone()).unwrap().is_empty());
        assert_eq!(sw.log()[0].reason, "no route");
        sw.apply_rule_install(&[(
            IPV4_FORWARD.into(),
            Rule::new(TableKey::ip(H7), Action::Forward(port(2))),
        )])
        .unwrap();
        assert_eq!(sw.process_packet(1, port(1), p).unwrap().len(), 1);
    }

    #[test]
    fn install_errors() {
        let mut sw = guard();
        let bad_table = [(
            "nope".to_string(),
            Rule::new(TableKey::ip(H2), Action::Drop),
        )];
        assert!(matches!(
            sw.apply_rule_install(&bad_table),
            Err(SwitchError::Table(TableError::UnknownTable(_)))
        ));
        let bad_port = [(
            IPV4_FORWARD.to_string(),
            Rule::new(TableKey::ip(H2), Action::Forward(port(9))),
        )];
        assert_eq!(
            sw.apply_rule_install(&bad_port),
            Err(SwitchError::UnknownPort(port(9)))
        );
        // Nothing from a rejected batch is applied.
        let mixed = [
            (
                PRESENT_TABLE.to_string(),
                Rule::new(TableKey::ip(H2), Action::SetAllowed),
            ),
            (
                CHECK_MAC.to_string(),
                Rule::new(TableKey::ip(H2), Action::SetAllowed),
            ),
        ];
        assert!(sw.apply_rule_install(&mixed).is_err());
        assert!(sw.tables().get(PRESENT_TABLE).unwrap().is_empty());
    }

    #[test]
    fn unknown_ingress_port() {
        let mut sw = guard();
        assert_eq!(
            sw.process_packet(0, port(7), seg(H2, H7, 22, TcpFlags::SYN)),
            Err(SwitchError::UnknownPort(port(7)))
        );
        assert_eq!(
            sw.process_frame(0, port(7), &[]),
            Err(SwitchError::UnknownPort(port(7)))
        );
    }

    #[test]
    fn malformed_frame_is_logged() {
        let mut sw = guard();
        assert!(sw.process_frame(3, port(1), &[0u8; 20]).unwrap().is_empty());
        assert_eq!(sw.log()[0].stage, Stage::Parse);
        assert_eq!(sw.log()[0].verdict, Verdict::Dropped);
    }

    #[test]
    fn reinstalling_the_same_sequence_keeps_progress() {
        let mut sw = guard();
        sw.apply_rule_install(&allow_h2()).unwrap();
        sw.process_packet(0, port(3), seg(H2, H7, 2222, TcpFlags::SYN))
            .unwrap();
        sw.apply_rule_install(&allow_h2()).unwrap();
        assert_eq!(sw.knock_state(H2).unwrap().stage(), 1);
    }

    #[test]
    fn internal_to_internal_skips_flow_tracking() {
        let mut sw = Switch::new(
            SwitchConfig::new("s1", [1, 2, 3])
                .with_features([Feature::Stateful])
                .with_internal([1, 2]),
        )
        .unwrap();
        sw.apply_rule_install(&[
            (
                IPV4_FORWARD.into(),
                Rule::new(TableKey::ip(H7), Action::Forward(port(2))),
            ),
            (
                IPV4_FORWARD.into(),
                Rule::new(TableKey::ip(H5), Action::Forward(port(3))),
            ),
        ])
        .unwrap();
        sw.process_packet(0, port(1), seg(H2, H7, 80, TcpFlags::SYN))
            .unwrap();
        assert_eq!(sw.flows().first().popcount(), 0);
        sw.process_packet(0, port(1), seg(H2, H5, 80, TcpFlags::SYN))
            .unwrap();
        assert_eq!(sw.flows().first().popcount(), 1);
    }

    // Feature monotonicity: with identical rules and inputs, a switch with
    // more filters forwards a subset of what one with fewer forwards.
    fn world(features: &[Feature]) -> Switch {
        let mut sw = Switch::new(
            SwitchConfig::new("sx", [1, 2, 3])
                .with_features(features.iter().copied())
                .with_internal([1]),
        )
        .unwrap();
        let mut installs = Vec::new();
        let r = |t: &str, key, action| (t.to_string(), Rule::new(key, action));
        for (i, host) in [H2, H5, H7].into_iter().enumerate() {
            let mac = MacAddr::new([8, 0, 0, 0, 0, i as u8]);
            installs.extend([
                r(PRESENT_TABLE, TableKey::ip(host), Action::SetAllowed),
                r(CHECK_IP, TableKey::ip(host), Action::SetAllowed),
                r(CHECK_MAC, TableKey::ip_mac(host, mac), Action::SetAllowed),
                r(
                    KNOCK_RULES,
                    TableKey::ip_port(host, 2000),
                    Action::KnockStage(0),
                ),
                r(
                    KNOCK_RULES,
                    TableKey::ip_port(host, 3000),
                    Action::KnockStage(1),
                ),
                r(
                    KNOCK_RULES,
                    TableKey::ip_port(host, 4000),
                    Action::KnockStage(2),
                ),
                r(
                    KNOCK_RULES,
                    TableKey::ip_port(host, 22),
                    Action::ServicePort,
                ),
                r(
                    IPV4_FORWARD,
                    TableKey::ip(host),
                    Action::Forward(port(i as u16 + 1)),
                ),
            ]);
        }
        sw.apply_rule_install(&installs).unwrap();
        sw
    }

    fn arb_features() -> impl Strategy<Value = Vec<Feature>> {
        proptest::sample::subsequence(
            vec![Feature::Stateless, Feature::Stateful, Feature::Knocking],
            0..=3,
        )
    }

    proptest! {
        #[test]
        fn more_filters_forward_less(
            base in arb_features(),
            extra in prop_oneof![Just(Feature::Stateless), Just(Feature::Stateful), Just(Feature::Knocking)],
            pkts in proptest::collection::vec(
                (0usize..3, 0usize..3, 0u8..4, prop_oneof![Just(22u16), Just(2000), Just(3000), Just(4000), Just(80)],
                 any::<bool>(), 1u16..4),
                0..40),
        ) {
            let hosts = [H2, H5, H7];
            let mut fewer = world(&base);
            let mut more_features = base.clone();
            more_features.push(extra);
            let mut more = world(&more_features);
            for (s, d, m, dport, syn, ingress) in pkts {
                let flags = if syn { TcpFlags::SYN } else { TcpFlags::ACK };
                let mut p = seg(hosts[s], hosts[d], dport, flags);
                p.eth.src_mac = MacAddr::new([8, 0, 0, 0, 0, m]);
                let a = fewer.process_packet(0, port(ingress), p.clone()).unwrap();
                let b = more.process_packet(0, port(ingress), p).unwrap();
                let fwd = |o: &[PacketOut]| o.iter().any(|o| o.egress.get() != CPU_PORT);
                prop_assert!(!fwd(&b) || fwd(&a));
            }
        }

        // Exactly one log record per processed packet.
        #[test]
        fn one_record_per_packet(
            pkts in proptest::collection::vec((0usize..3, 0usize..3, any::<bool>(), 1u16..4), 0..40),
        ) {
            let hosts = [H2, H5, H7];
            let mut sw = guard();
            for (i, (s, d, syn, ingress)) in pkts.iter().enumerate() {
                let flags = if *syn { TcpFlags::SYN } else { TcpFlags::ACK };
                sw.process_packet(i as u64, port(*ingress), seg(hosts[*s], hosts[*d], 22, flags)).unwrap();
                prop_assert_eq!(sw.log().len(), i + 1);
            }
        }
    }
}
