//! Deterministic network simulation.
//!
//! A [`Network`] is built from a [`TopologySpec`] and runs [`Scenario`]s.
//! Everything happens on one global queue ordered by `(time, insertion)`.
//! Links take one tick. Packet-ins and the controller's installs are queued
//! at the tick that produced them, so they land before any later data.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};
use core::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{
    Acl, AclEntry, Controller, Install, MemoryPersistence, SequencePersistence, SequenceStore,
    SwitchProfile,
};
use crate::knocking::KNOCK_COUNT;
use crate::packet::{MacAddr, Packet, TcpFlags};
use crate::switch::{
    EventRecord, Feature, Switch, SwitchConfig, SwitchError, Verdict, IPV4_FORWARD,
};
use crate::table::{Action, PortId, Rule, RuleRecord, TableKey};

pub const DEFAULT_SRC_PORT: u16 = 49152;
pub const LINK_LATENCY: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostSpec {
    pub name: String,
    pub ip: Ipv4Addr,
    pub mac: MacAddr,
    pub switch: String,
    pub port: PortId,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoint {
    pub switch: String,
    pub port: PortId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub a: Endpoint,
    pub b: Endpoint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub switches: Vec<SwitchConfig>,
    pub hosts: Vec<HostSpec>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
}

fn port(n: u16) -> PortId {
    PortId::new(n).expect("port below 512")
}

impl TopologySpec {
    /// Six switches: s1 (stateful) and s2 (stateless) hang off s3, s5 (plain)
    /// and s6 (all three filters) hang off s4, and s3 links to s4. Host `hN`
    /// has address `10.0.N.N`.
    pub fn default_topology() -> Self {
        use Feature::*;
        let switches = vec![
            SwitchConfig::new("s1", [1, 2, 3])
                .with_features([Stateful])
                .with_internal([1, 2]),
            SwitchConfig::new("s2", [1, 2]).with_features([Stateless]),
            SwitchConfig::new("s3", [1, 2, 3]),
            SwitchConfig::new("s4", [1, 2, 3]),
            SwitchConfig::new("s5", [1, 2, 3]),
            SwitchConfig::new("s6", [1, 2, 3])
                .with_features([Stateless, Stateful, Knocking])
                .with_internal([3]),
        ];
        let host = |n: u8, switch: &str, p: u16| HostSpec {
            name: format!("h{n}"),
            ip: Ipv4Addr::new(10, 0, n, n),
            mac: MacAddr::new([8, 0, 0, 0, n, n * 0x11]),
            switch: switch.to_string(),
            port: port(p),
        };
        let hosts = vec![
            host(1, "s1", 1),
            host(2, "s1", 2),
            host(3, "s5", 1),
            host(4, "s5", 2),
            host(5, "s2", 1),
            host(6, "s6", 1),
            host(7, "s6", 2),
        ];
        let end = |s: &str, p: u16| Endpoint {
            switch: s.to_string(),
            port: port(p),
        };
        let link = |a, b| LinkSpec { a, b };
        let links = vec![
            link(end("s1", 3), end("s3", 1)),
            link(end("s2", 2), end("s3", 2)),
            link(end("s3", 3), end("s4", 1)),
            link(end("s4", 2), end("s5", 3)),
            link(end("s4", 3), end("s6", 3)),
        ];
        Self {
            switches,
            hosts,
            links,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid topology: {0}")]
pub struct InvalidTopology(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error(transparent)]
    Topology(#[from] InvalidTopology),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("switch {switch}: {error}")]
    Switch { switch: String, error: SwitchError },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Attachment {
    Host(usize),
    Switch(Endpoint),
}

/// A validated topology with precomputed shortest-path routes.
#[derive(Debug, Clone)]
pub struct Network {
    spec: TopologySpec,
    wiring: BTreeMap<Endpoint, Attachment>,
    routes: BTreeMap<String, BTreeMap<Ipv4Addr, PortId>>,
}

impl Network {
    pub fn build(spec: TopologySpec) -> Result<Self, InvalidTopology> {
        let invalid = |msg: String| Err(InvalidTopology(msg));
        if spec.switches.is_empty() {
            return invalid("no switches".into());
        }
        let mut configs = BTreeMap::new();
        for sw in &spec.switches {
            sw.validate().map_err(|e| InvalidTopology(e.to_string()))?;
            if configs.insert(sw.id.clone(), sw).is_some() {
                return invalid(format!("duplicate switch id {}", sw.id));
            }
        }
        let check_endpoint = |e: &Endpoint| match configs.get(&e.switch) {
            None => Err(InvalidTopology(format!("unknown switch {}", e.switch))),
            Some(c) if !c.has_port(e.port) => Err(InvalidTopology(format!(
                "port {} does not exist on {}",
                e.port, e.switch
            ))),
            Some(_) => Ok(()),
        };

        let mut wiring = BTreeMap::new();
        let mut names = BTreeSet::new();
        let mut ips = BTreeSet::new();
        let mut macs = BTreeSet::new();
        for (i, h) in spec.hosts.iter().enumerate() {
            if !names.insert(&h.name) {
                return invalid(format!("duplicate host name {}", h.name));
            }
            if !ips.insert(h.ip) {
                return invalid(format!("duplicate host ip {}", h.ip));
            }
            if !macs.insert(h.mac) {
                return invalid(format!("duplicate host mac {}", h.mac));
            }
            let end = Endpoint {
                switch: h.switch.clone(),
                port: h.port,
            };
            check_endpoint(&end)?;
            if wiring.insert(end, Attachment::Host(i)).is_some() {
                return invalid(format!("{}:{} is used twice", h.switch, h.port));
            }
        }
        for l in &spec.links {
            check_endpoint(&l.a)?;
            check_endpoint(&l.b)?;
            if l.a.switch == l.b.switch {
                return invalid(format!("link loops back into {}", l.a.switch));
            }
            for (from, to) in [(&l.a, &l.b), (&l.b, &l.a)] {
                if wiring
                    .insert(from.clone(), Attachment::Switch(to.clone()))
                    .is_some()
                {
                    return invalid(format!("{}:{} is used twice", from.switch, from.port));
                }
            }
        }

        let mut net = Self {
            routes: BTreeMap::new(),
            wiring,
            spec,
        };
        for sw in &net.spec.switches {
            let hops = net.first_hops(&sw.id);
            if hops.len() != net.spec.switches.len() {
                return invalid(format!("switch {} cannot reach every other switch", sw.id));
            }
            let routes = net
                .spec
                .hosts
                .iter()
                .map(|h| {
                    let egress = if h.switch == sw.id {
                        h.port
                    } else {
                        hops[&h.switch]
                    };
                    (h.ip, egress)
                })
                .collect();
            net.routes.insert(sw.id.clone(), routes);
        }
        Ok(net)
    }

    /// Breadth-first search from `from`; maps each reachable switch to the
    /// local port of the first hop. Neighbors are visited in port order.
    fn first_hops(&self, from: &str) -> BTreeMap<String, PortId> {
        let mut hops = BTreeMap::new();
        hops.insert(from.to_string(), port(0));
        let mut queue = VecDeque::from([(from.to_string(), None)]);
        while let Some((sw, first)) = queue.pop_front() {
            for (end, att) in self.wiring.range(Self::switch_range(&sw)) {
                if let Attachment::Switch(peer) = att {
                    if !hops.contains_key(&peer.switch) {
                        let hop = first.unwrap_or(end.port);
                        hops.insert(peer.switch.clone(), hop);
                        queue.push_back((peer.switch.clone(), Some(hop)));
                    }
                }
            }
        }
        hops
    }

    fn switch_range(sw: &str) -> core::ops::RangeInclusive<Endpoint> {
        let lo = Endpoint {
            switch: sw.to_string(),
            port: port(0),
        };
        let hi = Endpoint {
            switch: sw.to_string(),
            port: port(PortId::MAX),
        };
        lo..=hi
    }

    pub fn spec(&self) -> &TopologySpec {
        &self.spec
    }

    pub fn routes(&self, switch: &str) -> Option<&BTreeMap<Ipv4Addr, PortId>> {
        self.routes.get(switch)
    }

    pub fn host(&self, name: &str) -> Option<&HostSpec> {
        self.spec.hosts.iter().find(|h| h.name == name)
    }

    pub fn host_by_ip(&self, ip: Ipv4Addr) -> Option<&HostSpec> {
        self.spec.hosts.iter().find(|h| h.ip == ip)
    }

    /// Whether two switches share a link.
    pub fn adjacent(&self, a: &str, b: &str) -> bool {
        self.wiring
            .range(Self::switch_range(a))
            .any(|(_, att)| matches!(att, Attachment::Switch(peer) if peer.switch == b))
    }

    fn profiles(&self) -> BTreeMap<String, SwitchProfile> {
        self.spec
            .switches
            .iter()
            .map(|sw| {
                let profile = SwitchProfile {
                    features: sw.features.clone(),
                    routes: self.routes[&sw.id].clone(),
                };
                (sw.id.clone(), profile)
            })
            .collect()
    }

    /// Fresh switches. Switches without knocking get their routes up front;
    /// knocking switches receive them from the controller.
    fn instantiate(&self) -> Result<BTreeMap<String, Switch>, SimError> {
        let mut switches = BTreeMap::new();
        for cfg in &self.spec.switches {
            let fail = |error| SimError::Switch {
                switch: cfg.id.clone(),
                error,
            };
            let mut sw = Switch::new(cfg.clone()).map_err(fail)?;
            if !cfg.has(Feature::Knocking) {
                let installs: Vec<Install> = self.routes[&cfg.id]
                    .iter()
                    .map(|(&ip, &p)| {
                        (
                            IPV4_FORWARD.to_string(),
                            Rule::new(TableKey::ip(ip), Action::Forward(p)),
                        )
                    })
                    .collect();
                sw.apply_rule_install(&installs).map_err(fail)?;
            }
            switches.insert(cfg.id.clone(), sw);
        }
        Ok(switches)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Fin,
    Syn,
    Rst,
    Psh,
    Ack,
    Urg,
}

impl Flag {
    fn bits(self) -> TcpFlags {
        match self {
            Self::Fin => TcpFlags::FIN,
            Self::Syn => TcpFlags::SYN,
            Self::Rst => TcpFlags::RST,
            Self::Psh => TcpFlags::PSH,
            Self::Ack => TcpFlags::ACK,
            Self::Urg => TcpFlags::URG,
        }
    }
}

fn default_src_port() -> u16 {
    DEFAULT_SRC_PORT
}

fn default_flags() -> Vec<Flag> {
    vec![Flag::Ack]
}

fn default_count() -> u32 {
    1
}

fn default_hello() -> String {
    "hello".to_string()
}

/// Header overrides for forged traffic.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Forge {
    #[serde(default)]
    pub src_ip: Option<Ipv4Addr>,
    #[serde(default)]
    pub src_mac: Option<MacAddr>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum HostAction {
    /// `count` segments, one tick apart.
    Send {
        dst: String,
        dst_port: u16,
        #[serde(default = "default_src_port")]
        src_port: u16,
        #[serde(default = "default_flags")]
        flags: Vec<Flag>,
        #[serde(default)]
        payload: String,
        #[serde(default = "default_count")]
        count: u32,
        #[serde(default)]
        ttl: Option<u8>,
        #[serde(default)]
        forge: Forge,
    },
    /// Three knock SYNs then a SYN to the service port, from the stored
    /// sequence of `sequence_of` (default: the sender). `order` permutes the
    /// knocks.
    Knock {
        dst: String,
        #[serde(default)]
        sequence_of: Option<String>,
        #[serde(default)]
        order: Option<[usize; KNOCK_COUNT]>,
        #[serde(default = "default_src_port")]
        src_port: u16,
        #[serde(default)]
        forge: Forge,
    },
    /// Data segments (PSH|ACK) to the stored service port.
    OpenService {
        dst: String,
        #[serde(default)]
        sequence_of: Option<String>,
        #[serde(default = "default_hello")]
        payload: String,
        #[serde(default = "default_count")]
        count: u32,
        #[serde(default = "default_src_port")]
        src_port: u16,
        #[serde(default)]
        forge: Forge,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEvent {
    pub time: u64,
    pub host: String,
    pub action: HostAction,
}

/// A rule installed before the first event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresetRule {
    pub switch: String,
    #[serde(flatten)]
    pub rule: RuleRecord,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostExpect {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sent: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delivered: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropped: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub punted: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consumed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub received: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Used when no ACL file is given.
    #[serde(default)]
    pub acl: Option<Acl>,
    #[serde(default)]
    pub rules: Vec<PresetRule>,
    pub events: Vec<ScenarioEvent>,
    #[serde(default)]
    pub expect: BTreeMap<String, HostExpect>,
}

impl Scenario {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            seed: 0,
            acl: None,
            rules: Vec::new(),
            events: Vec::new(),
            expect: BTreeMap::new(),
        }
    }

    pub fn event(mut self, time: u64, host: &str, action: HostAction) -> Self {
        self.events.push(ScenarioEvent {
            time,
            host: host.to_string(),
            action,
        });
        self
    }

    pub fn with_acl(mut self, entries: impl IntoIterator<Item = AclEntry>) -> Self {
        self.acl = Some(Acl::new(entries).expect("valid ACL"));
        self
    }
}

/// A plain send of one segment with default source port and no forgery.
pub fn send(dst: &str, dst_port: u16, flags: &[Flag]) -> HostAction {
    HostAction::Send {
        dst: dst.to_string(),
        dst_port,
        src_port: DEFAULT_SRC_PORT,
        flags: flags.to_vec(),
        payload: String::new(),
        count: 1,
        ttl: None,
        forge: Forge::default(),
    }
}

pub fn knock(dst: &str) -> HostAction {
    HostAction::Knock {
        dst: dst.to_string(),
        sequence_of: None,
        order: None,
        src_port: DEFAULT_SRC_PORT,
        forge: Forge::default(),
    }
}

pub fn open_service(dst: &str) -> HostAction {
    HostAction::OpenService {
        dst: dst.to_string(),
        sequence_of: None,
        payload: default_hello(),
        count: 1,
        src_port: DEFAULT_SRC_PORT,
        forge: Forge::default(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no knock sequence stored for {0}")]
pub struct NoSequence(pub Ipv4Addr);

/// One step of a knock client: a SYN to `dst_port`, `offset` ticks after
/// the start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnockProbe {
    pub offset: u64,
    pub dst_port: u16,
}

/// The three knocks in order, then the service connection.
pub fn knock_client(host: Ipv4Addr, store: &SequenceStore) -> Result<Vec<KnockProbe>, NoSequence> {
    let seq = store.get(host).ok_or(NoSequence(host))?;
    Ok(seq
        .knocks()
        .into_iter()
        .chain([seq.service_port()])
        .enumerate()
        .map(|(i, dst_port)| KnockProbe {
            offset: i as u64,
            dst_port,
        })
        .collect())
}

pub struct RunInputs {
    pub acl: Acl,
    pub store: SequenceStore,
    pub seed: u64,
    pub persistence: Box<dyn SequencePersistence>,
}

impl RunInputs {
    /// The scenario's own ACL and seed, an empty store kept in memory.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        Self {
            acl: scenario.acl.clone().unwrap_or_default(),
            store: SequenceStore::new(),
            seed: scenario.seed,
            persistence: Box::new(MemoryPersistence::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fate {
    Delivered,
    Dropped,
    Punted,
    Consumed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketFate {
    pub id: u64,
    pub sender: String,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub sport: u16,
    pub dport: u16,
    pub sent_at: u64,
    pub path: Vec<String>,
    pub fate: Option<Fate>,
    /// Switch or host where the packet ended.
    pub at: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostSummary {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub punted: u64,
    pub consumed: u64,
    pub received: u64,
}

impl HostSummary {
    fn field(&self, name: &str) -> u64 {
        match name {
            "sent" => self.sent,
            "delivered" => self.delivered,
            "dropped" => self.dropped,
            "punted" => self.punted,
            "consumed" => self.consumed,
            _ => self.received,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub packet: u64,
    #[serde(flatten)]
    pub event: EventRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectationResult {
    pub host: String,
    pub field: String,
    pub expected: u64,
    pub actual: u64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub trace: Vec<TraceEntry>,
    pub packets: Vec<PacketFate>,
    pub hosts: BTreeMap<String, HostSummary>,
    pub rules: BTreeMap<String, Vec<RuleRecord>>,
    pub knock_stages: BTreeMap<String, BTreeMap<Ipv4Addr, u8>>,
    pub store: SequenceStore,
    pub expectations: Vec<ExpectationResult>,
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.expectations.iter().all(|e| e.pass)
    }

    pub fn host(&self, name: &str) -> HostSummary {
        self.hosts.get(name).copied().unwrap_or_default()
    }
}

enum Item {
    Script(usize),
    Arrive {
        at: Endpoint,
        frame: Vec<u8>,
        id: u64,
    },
    Deliver {
        host: usize,
        id: u64,
    },
    PacketIn {
        switch: String,
        frame: Vec<u8>,
    },
    Install {
        switch: String,
        host: Ipv4Addr,
        installs: Vec<Install>,
    },
}

struct Scheduled {
    time: u64,
    seq: u64,
    item: Item,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

struct Run<'a> {
    net: &'a Network,
    scenario: &'a Scenario,
    switches: BTreeMap<String, Switch>,
    controller: Controller,
    queue: BinaryHeap<Reverse<Scheduled>>,
    next_seq: u64,
    trace: Vec<TraceEntry>,
    packets: Vec<PacketFate>,
    received: BTreeMap<String, u64>,
    notes: Vec<String>,
    seed: u64,
}

impl Run<'_> {
    fn schedule(&mut self, time: u64, item: Item) {
        self.queue.push(Reverse(Scheduled {
            time,
            seq: self.next_seq,
            item,
        }));
        self.next_seq += 1;
    }

    fn finish(&mut self, id: u64, fate: Fate, at: &str, reason: &str) {
        let p = &mut self.packets[id as usize];
        p.fate = Some(fate);
        p.at = at.to_string();
        p.reason = reason.to_string();
    }

    fn resolve_dst(&self, dst: &str) -> Result<(Ipv4Addr, MacAddr), SimError> {
        if let Some(h) = self.net.host(dst) {
            return Ok((h.ip, h.mac));
        }
        let ip: Ipv4Addr = dst
            .parse()
            .map_err(|_| SimError::Scenario(format!("unknown destination {dst}")))?;
        let mac = self.net.host_by_ip(ip).map(|h| h.mac).unwrap_or_default();
        Ok((ip, mac))
    }

    fn sequence_owner(&self, sender: &HostSpec, of: &Option<String>) -> Result<Ipv4Addr, SimError> {
        match of {
            None => Ok(sender.ip),
            Some(name) => self
                .net
                .host(name)
                .map(|h| h.ip)
                .ok_or_else(|| SimError::Scenario(format!("unknown host {name}"))),
        }
    }

    fn script(&mut self, now: u64, index: usize) -> Result<(), SimError> {
        let ev = &self.scenario.events[index];
        let host_idx = self
            .net
            .spec
            .hosts
            .iter()
            .position(|h| h.name == ev.host)
            .ok_or_else(|| SimError::Scenario(format!("unknown host {}", ev.host)))?;
        let sender = &self.net.spec.hosts[host_idx];

        // (offset, dst_port, flags, payload)
        let mut segments: Vec<(u64, u16, TcpFlags, &[u8])> = Vec::new();
        let (dst, src_port, forge, ttl) = match &ev.action {
            HostAction::Send {
                dst,
                dst_port,
                src_port,
                flags,
                payload,
                count,
                ttl,
                forge,
            } => {
                let bits = flags
                    .iter()
                    .fold(TcpFlags::empty(), |acc, f| acc | f.bits());
                for i in 0..*count {
                    segments.push((u64::from(i), *dst_port, bits, payload.as_bytes()));
                }
                (dst, *src_port, forge, *ttl)
            }
            HostAction::Knock {
                dst,
                sequence_of,
                order,
                src_port,
                forge,
            } => {
                let owner = self.sequence_owner(sender, sequence_of)?;
                match knock_client(owner, self.controller.store()) {
                    Ok(mut probes) => {
                        if let Some(order) = order {
                            let knocks: Vec<u16> = probes.iter().map(|p| p.dst_port).collect();
                            for (slot, &i) in order.iter().enumerate() {
                                probes[slot].dst_port = knocks[i];
                            }
                        }
                        for p in probes {
                            segments.push((p.offset, p.dst_port, TcpFlags::SYN, &[]));
                        }
                    }
                    Err(e) => self.notes.push(format!("t={now} {}: {e}", ev.host)),
                }
                (dst, *src_port, forge, None)
            }
            HostAction::OpenService {
                dst,
                sequence_of,
                payload,
                count,
                src_port,
                forge,
            } => {
                let owner = self.sequence_owner(sender, sequence_of)?;
                match self.controller.store().get(owner) {
                    Some(seq) => {
                        for i in 0..*count {
                            segments.push((
                                u64::from(i),
                                seq.service_port(),
                                TcpFlags::PSH | TcpFlags::ACK,
                                payload.as_bytes(),
                            ));
                        }
                    }
                    None => self
                        .notes
                        .push(format!("t={now} {}: {}", ev.host, NoSequence(owner))),
                }
                (dst, *src_port, forge, None)
            }
        };

        let (dst_ip, dst_mac) = self.resolve_dst(dst)?;
        let src_ip = forge.src_ip.unwrap_or(sender.ip);
        let src_mac = forge.src_mac.unwrap_or(sender.mac);
        let at = Endpoint {
            switch: sender.switch.clone(),
            port: sender.port,
        };
        let name = sender.name.clone();
        for (offset, dst_port, flags, payload) in segments {
            let mut p = Packet::tcp(
                src_mac,
                dst_mac,
                src_ip,
                dst_ip,
                src_port,
                dst_port,
                flags,
                payload.to_vec(),
            );
            if let Some(ttl) = ttl {
                p.ip.ttl = ttl;
            }
            let id = self.packets.len() as u64;
            self.packets.push(PacketFate {
                id,
                sender: name.clone(),
                src: src_ip,
                dst: dst_ip,
                sport: src_port,
                dport: dst_port,
                sent_at: now + offset,
                path: Vec::new(),
                fate: None,
                at: String::new(),
                reason: String::new(),
            });
            let frame = p.serialize();
            self.schedule(
                now + offset + LINK_LATENCY,
                Item::Arrive {
                    at: at.clone(),
                    frame,
                    id,
                },
            );
        }
        Ok(())
    }

    fn arrive(&mut self, now: u64, at: Endpoint, frame: Vec<u8>, id: u64) -> Result<(), SimError> {
        let sw = self
            .switches
            .get_mut(&at.switch)
            .expect("wired to a known switch");
        let fail = |error| SimError::Switch {
            switch: at.switch.clone(),
            error,
        };
        let outs = sw.process_frame(now, at.port, &frame).map_err(fail)?;
        let event = sw.log().last().cloned().expect("one record per packet");
        let cpu = sw.config().cpu_port;
        self.packets[id as usize].path.push(at.switch.clone());
        self.trace.push(TraceEntry {
            packet: id,
            event: event.clone(),
        });

        let Some(out) = outs.into_iter().next() else {
            let fate = if event.verdict == Verdict::Consumed {
                Fate::Consumed
            } else {
                Fate::Dropped
            };
            self.finish(id, fate, &at.switch, &event.reason);
            return Ok(());
        };
        if out.egress == cpu {
            self.finish(id, Fate::Punted, &at.switch, &event.reason);
            let frame = out.packet.serialize();
            self.schedule(
                now,
                Item::PacketIn {
                    switch: at.switch,
                    frame,
                },
            );
            return Ok(());
        }
        let egress = Endpoint {
            switch: at.switch.clone(),
            port: out.egress,
        };
        match self.net.wiring.get(&egress).cloned() {
            Some(Attachment::Host(host)) => {
                self.schedule(now + LINK_LATENCY, Item::Deliver { host, id })
            }
            Some(Attachment::Switch(peer)) => self.schedule(
                now + LINK_LATENCY,
                Item::Arrive {
                    at: peer,
                    frame: out.packet.serialize(),
                    id,
                },
            ),
            None => self.finish(id, Fate::Dropped, &at.switch, "egress port not connected"),
        }
        Ok(())
    }

    fn packet_in(&mut self, now: u64, switch: String, frame: &[u8]) {
        let p = Packet::parse(frame).expect("punted frames are well formed");
        let host = p.ip.src_ip;
        let installs = match self.controller.handle_packet_in(&switch, &p) {
            Ok(installs) => installs,
            Err(e) => {
                self.notes.push(format!("t={now} {switch}: {host}: {e}"));
                Vec::new()
            }
        };
        self.schedule(
            now,
            Item::Install {
                switch,
                host,
                installs,
            },
        );
    }

    fn execute(mut self) -> Result<RunReport, SimError> {
        for rule in &self.scenario.rules {
            let sw = self.switches.get_mut(&rule.switch).ok_or_else(|| {
                SimError::Scenario(format!("rule for unknown switch {}", rule.switch))
            })?;
            let parsed = sw
                .tables()
                .get(&rule.rule.table)
                .and_then(|t| t.rule_from_record(&rule.rule))
                .map_err(|e| SimError::Scenario(format!("rule for {}: {e}", rule.switch)))?;
            sw.apply_rule_install(&[(rule.rule.table.clone(), parsed)])
                .map_err(|error| SimError::Switch {
                    switch: rule.switch.clone(),
                    error,
                })?;
        }
        for (i, ev) in self.scenario.events.iter().enumerate() {
            self.schedule(ev.time, Item::Script(i));
        }

        while let Some(Reverse(Scheduled { time, item, .. })) = self.queue.pop() {
            match item {
                Item::Script(i) => self.script(time, i)?,
                Item::Arrive { at, frame, id } => self.arrive(time, at, frame, id)?,
                Item::Deliver { host, id } => {
                    let name = self.net.spec.hosts[host].name.clone();
                    *self.received.entry(name.clone()).or_default() += 1;
                    self.finish(id, Fate::Delivered, &name, "delivered");
                }
                Item::PacketIn { switch, frame } => self.packet_in(time, switch, &frame),
                Item::Install {
                    switch,
                    host,
                    installs,
                } => {
                    let sw = self.switches.get_mut(&switch).expect("known switch");
                    sw.apply_rule_install(&installs)
                        .map_err(|error| SimError::Switch {
                            switch: switch.clone(),
                            error,
                        })?;
                    sw.resolve_pending(host);
                }
            }
        }
        Ok(self.report())
    }

    fn report(self) -> RunReport {
        let mut hosts: BTreeMap<String, HostSummary> = self
            .net
            .spec
            .hosts
            .iter()
            .map(|h| (h.name.clone(), HostSummary::default()))
            .collect();
        for p in &self.packets {
            let s = hosts.entry(p.sender.clone()).or_default();
            s.sent += 1;
            match p.fate {
                Some(Fate::Delivered) => s.delivered += 1,
                Some(Fate::Dropped) => s.dropped += 1,
                Some(Fate::Punted) => s.punted += 1,
                Some(Fate::Consumed) => s.consumed += 1,
                None => {}
            }
        }
        for (name, n) in &self.received {
            hosts.entry(name.clone()).or_default().received = *n;
        }

        let mut expectations = Vec::new();
        for (host, e) in &self.scenario.expect {
            let actual = hosts.get(host).copied().unwrap_or_default();
            let fields = [
                ("sent", e.sent),
                ("delivered", e.delivered),
                ("dropped", e.dropped),
                ("punted", e.punted),
                ("consumed", e.consumed),
                ("received", e.received),
            ];
            for (field, expected) in fields {
                if let Some(expected) = expected {
                    let actual = actual.field(field);
                    expectations.push(ExpectationResult {
                        host: host.clone(),
                        field: field.to_string(),
                        expected,
                        actual,
                        pass: expected == actual,
                    });
                }
            }
        }

        let rules = self
            .switches
            .iter()
            .map(|(id, sw)| (id.clone(), sw.tables().dump()))
            .collect();
        let knock_stages = self
            .switches
            .iter()
            .filter(|(_, sw)| sw.config().has(Feature::Knocking))
            .map(|(id, sw)| {
                (
                    id.clone(),
                    sw.knock_states().map(|k| (k.owner(), k.stage())).collect(),
                )
            })
            .collect();

        RunReport {
            scenario: self.scenario.name.clone(),
            seed: self.seed,
            trace: self.trace,
            packets: self.packets,
            hosts,
            rules,
            knock_stages,
            store: self.controller.store().clone(),
            expectations,
            notes: self.notes,
        }
    }
}

impl Network {
    /// Runs `scenario` from a fresh network state.
    pub fn run(&self, scenario: &Scenario, inputs: RunInputs) -> Result<RunReport, SimError> {
        let mut last = 0;
        for ev in &scenario.events {
            if ev.time < last {
                return Err(SimError::Scenario(format!(
                    "event at t={} is out of order",
                    ev.time
                )));
            }
            last = ev.time;
            if self.host(&ev.host).is_none() {
                return Err(SimError::Scenario(format!("unknown host {}", ev.host)));
            }
            if let HostAction::Knock {
                order: Some(order), ..
            } = &ev.action
            {
                let mut seen = *order;
                seen.sort_unstable();
                if seen != [0, 1, 2] {
                    return Err(SimError::Scenario(format!(
                        "knock order {order:?} is not a permutation"
                    )));
                }
            }
        }
        let run = Run {
            net: self,
            scenario,
            switches: self.instantiate()?,
            controller: Controller::new(
                inputs.acl,
                inputs.store,
                inputs.seed,
                self.profiles(),
                inputs.persistence,
            ),
            queue: BinaryHeap::new(),
            next_seq: 0,
            trace: Vec::new(),
            packets: Vec::new(),
            received: BTreeMap::new(),
            notes: Vec::new(),
            seed: inputs.seed,
        };
        run.execute()
    }
}
