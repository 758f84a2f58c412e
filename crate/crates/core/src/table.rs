//! Exact-match match-action tables.
//!
//! A [`Table`] has a fixed key schema, at most one [`Rule`] per key and a
//! default action returned on a miss. Tables are owned by one switch and
//! mutated only from its event loop.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::Direction;
use crate::packet::MacAddr;

/// Switch port identifier. Nine bits wide, like a BMv2/Tofino port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub struct PortId(u16);

impl PortId {
    pub const MAX: u16 = 511;

    pub const fn new(port: u16) -> Option<Self> {
        if port <= Self::MAX {
            Some(Self(port))
        } else {
            None
        }
    }

    pub const fn get(self) -> u16 {
        self.0
    }
}

impl TryFrom<u16> for PortId {
    type Error = TableError;

    fn try_from(port: u16) -> Result<Self, Self::Error> {
        Self::new(port).ok_or(TableError::BadValue(port.to_string()))
    }
}

impl From<PortId> for u16 {
    fn from(p: PortId) -> u16 {
        p.0
    }
}

impl fmt::Display for PortId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FieldKind {
    Ipv4,
    Mac,
    L4Port,
    SwitchPort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FieldValue {
    Ipv4(Ipv4Addr),
    Mac(MacAddr),
    L4Port(u16),
    SwitchPort(PortId),
}

impl FieldValue {
    pub const fn kind(&self) -> FieldKind {
        match self {
            Self::Ipv4(_) => FieldKind::Ipv4,
            Self::Mac(_) => FieldKind::Mac,
            Self::L4Port(_) => FieldKind::L4Port,
            Self::SwitchPort(_) => FieldKind::SwitchPort,
        }
    }

    fn parse(kind: FieldKind, s: &str) -> Result<Self, TableError> {
        let bad = || TableError::BadValue(s.to_string());
        Ok(match kind {
            FieldKind::Ipv4 => Self::Ipv4(s.parse().map_err(|_| bad())?),
            FieldKind::Mac => Self::Mac(s.parse().map_err(|_| bad())?),
            FieldKind::L4Port => Self::L4Port(s.parse().map_err(|_| bad())?),
            FieldKind::SwitchPort => {
                let p: u16 = s.parse().map_err(|_| bad())?;
                Self::SwitchPort(PortId::new(p).ok_or_else(bad)?)
            }
        })
    }
}

impl fmt::Display for FieldValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ipv4(ip) => write!(f, "{ip}"),
            Self::Mac(mac) => write!(f, "{mac}"),
            Self::L4Port(p) => write!(f, "{p}"),
            Self::SwitchPort(p) => write!(f, "{p}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TableKey(Vec<FieldValue>);

impl TableKey {
    pub fn new(fields: Vec<FieldValue>) -> Self {
        Self(fields)
    }

    pub fn ip(ip: Ipv4Addr) -> Self {
        Self(alloc::vec![FieldValue::Ipv4(ip)])
    }

    pub fn ip_mac(ip: Ipv4Addr, mac: MacAddr) -> Self {
        Self(alloc::vec![FieldValue::Ipv4(ip), FieldValue::Mac(mac)])
    }

    pub fn ip_port(ip: Ipv4Addr, port: u16) -> Self {
        Self(alloc::vec![FieldValue::Ipv4(ip), FieldValue::L4Port(port)])
    }

    pub fn switch_port(port: PortId) -> Self {
        Self(alloc::vec![FieldValue::SwitchPort(port)])
    }

    pub fn fields(&self) -> &[FieldValue] {
        &self.0
    }

    fn matches(&self, schema: &[FieldKind]) -> bool {
        self.0.len() == schema.len() && self.0.iter().zip(schema).all(|(v, k)| v.kind() == *k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Forward(PortId),
    Drop,
    SendToController,
    SetAllowed,
    SetDirection(Direction),
    NoAction,
    /// Marks the key's L4 port as knock number `index` (0-based) of the
    /// keyed host's sequence.
    KnockStage(u8),
    /// Marks the key's L4 port as the keyed host's service port.
    ServicePort,
}

impl Action {
    pub const fn name(&self) -> &'static str {
        match self {
            Self::Forward(_) => "forward",
            Self::Drop => "drop",
            Self::SendToController => "send_to_controller",
            Self::SetAllowed => "set_allowed",
            Self::SetDirection(_) => "set_direction",
            Self::NoAction => "no_action",
            Self::KnockStage(_) => "knock_stage",
            Self::ServicePort => "service_port",
        }
    }

    pub fn params(&self) -> BTreeMap<String, u64> {
        let mut params = BTreeMap::new();
        match self {
            Self::Forward(port) => {
                params.insert("port".to_string(), u64::from(port.get()));
            }
            Self::SetDirection(dir) => {
                params.insert("direction".to_string(), u64::from(dir.bit()));
            }
            Self::KnockStage(index) => {
                params.insert("index".to_string(), u64::from(*index));
            }
            _ => {}
        }
        params
    }

    pub fn from_parts(name: &str, params: &BTreeMap<String, u64>) -> Result<Self, TableError> {
        let param = |key: &str| {
            params
                .get(key)
                .copied()
                .ok_or_else(|| TableError::BadValue(alloc::format!("{name}: missing param {key}")))
        };
        let narrow = |v: u64| TableError::BadValue(alloc::format!("{name}: {v}"));
        Ok(match name {
            "forward" => {
                let p = param("port")?;
                let port = u16::try_from(p)
                    .ok()
                    .and_then(PortId::new)
                    .ok_or(narrow(p))?;
                Self::Forward(port)
            }
            "drop" => Self::Drop,
            "send_to_controller" => Self::SendToController,
            "set_allowed" => Self::SetAllowed,
            "set_direction" => {
                let d = param("direction")?;
                let dir = u8::try_from(d)
                    .ok()
                    .and_then(Direction::from_bit)
                    .ok_or(narrow(d))?;
                Self::SetDirection(dir)
            }
            "no_action" => Self::NoAction,
            "knock_stage" => {
                let i = param("index")?;
                Self::KnockStage(u8::try_from(i).map_err(|_| narrow(i))?)
            }
            "service_port" => Self::ServicePort,
            other => return Err(TableError::BadValue(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub key: TableKey,
    pub action: Action,
    /// Only orders the rule dump; keys are unique so it never decides a match.
    pub priority: u32,
}

impl Rule {
    pub fn new(key: TableKey, action: Action) -> Self {
        Self {
            key,
            action,
            priority: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lookup {
    pub action: Action,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("table {0} already exists")]
    DuplicateName(String),
    #[error("no table named {0}")]
    UnknownTable(String),
    #[error("key does not match the schema of table {0}")]
    SchemaMismatch(String),
    #[error("no rule for key in table {0}")]
    NotFound(String),
    #[error("invalid value {0}")]
    BadValue(String),
}

/// One line of the rule dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleRecord {
    pub table: String,
    pub key: Vec<String>,
    pub action: String,
    #[serde(default)]
    pub params: BTreeMap<String, u64>,
}

#[derive(Debug, Clone)]
pub struct Table {
    name: String,
    schema: Vec<FieldKind>,
    rules: BTreeMap<TableKey, Rule>,
    default_action: Action,
}

impl Table {
    pub fn new(name: impl Into<String>, schema: Vec<FieldKind>, default_action: Action) -> Self {
        Self {
            name: name.into(),
            schema,
            rules: BTreeMap::new(),
            default_action,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn schema(&self) -> &[FieldKind] {
        &self.schema
    }

    pub fn default_action(&self) -> Action {
        self.default_action
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rules(&self) -> impl Iterator<Item = &Rule> {
        self.rules.values()
    }

    fn check(&self, key: &TableKey) -> Result<(), TableError> {
        if key.matches(&self.schema) {
            Ok(())
        } else {
            Err(TableError::SchemaMismatch(self.name.clone()))
        }
    }

    /// Inserts `rule`, replacing and returning any rule with the same key.
    pub fn insert(&mut self, rule: Rule) -> Result<Option<Rule>, TableError> {
        self.check(&rule.key)?;
        Ok(self.rules.insert(rule.key.clone(), rule))
    }

    pub fn delete(&mut self, key: &TableKey) -> Result<Rule, TableError> {
        self.check(key)?;
        self.rules
            .remove(key)
            .ok_or_else(|| TableError::NotFound(self.name.clone()))
    }

    pub fn lookup(&self, key: &TableKey) -> Result<Lookup, TableError> {
        self.check(key)?;
        Ok(match self.rules.get(key) {
            Some(rule) => Lookup {
                action: rule.action,
                hit: true,
            },
            None => Lookup {
                action: self.default_action,
                hit: false,
            },
        })
    }

    pub fn record(&self, rule: &Rule) -> RuleRecord {
        RuleRecord {
            table: self.name.clone(),
            key: rule.key.fields().iter().map(|f| f.to_string()).collect(),
            action: rule.action.name().to_string(),
            params: rule.action.params(),
        }
    }

    /// Rules ordered by descending priority, then key.
    pub fn dump(&self) -> Vec<RuleRecord> {
        let mut rules: Vec<&Rule> = self.rules.values().collect();
        rules.sort_by(|a, b| b.priority.cmp(&a.priority).then_with(|| a.key.cmp(&b.key)));
        rules.into_iter().map(|r| self.record(r)).collect()
    }

    /// Parses a dump record against this table's schema.
    pub fn rule_from_record(&self, record: &RuleRecord) -> Result<Rule, TableError> {
        if record.key.len() != self.schema.len() {
            return Err(TableError::SchemaMismatch(self.name.clone()));
        }
        let fields = self
            .schema
            .iter()
            .zip(&record.key)
            .map(|(kind, s)| FieldValue::parse(*kind, s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Rule::new(
            TableKey(fields),
            Action::from_parts(&record.action, &record.params)?,
        ))
    }
}

/// The named tables of one switch.
#[derive(Debug, Clone, Default)]
pub struct TableSet {
    tables: BTreeMap<String, Table>,
}

impl TableSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create(
        &mut self,
        name: &str,
        schema: Vec<FieldKind>,
        default_action: Action,
    ) -> Result<&mut Table, TableError> {
        if self.tables.contains_key(name) {
            return Err(TableError::DuplicateName(name.to_string()));
        }
        Ok(self
            .tables
            .entry(name.to_string())
            .or_insert(Table::new(name, schema, default_action)))
    }

    pub fn get(&self, name: &str) -> Result<&Table, TableError> {
        self.tables
            .get(name)
            .ok_or_else(|| TableError::UnknownTable(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Table, TableError> {
        self.tables
            .get_mut(name)
            .ok_or_else(|| TableError::UnknownTable(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Table> {
        self.tables.values()
    }

    pub fn dump(&self) -> Vec<RuleRecord> {
        self.tables.values().flat_map(Table::dump).collect()
    }
}
