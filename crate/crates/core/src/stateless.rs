//! Level-1a filtering: source IP allow/deny plus per-IP MAC binding.

use crate::packet::Packet;
use crate::table::{Action, Table, TableError, TableKey};

/// Table names and their expected schemas: `[Ipv4]` and `[Ipv4, Mac]`.
pub const CHECK_IP: &str = "check_ip";
pub const CHECK_MAC: &str = "check_mac";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatelessVerdict {
    Allow,
    Drop(DropCause),
    ToController,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropCause {
    /// `check_ip` matched a drop rule, or its default is drop.
    Ip,
    /// The source IP is known but is not bound to this source MAC.
    Mac,
}

/// Runs the stateless check for `p`.
///
/// A source IP with no entry in `check_ip` falls through to the table's
/// default, which is `SendToController` on a freshly built switch so the
/// controller can consult its ACL. A known IP must also be bound to the
/// frame's source MAC in `check_mac`.
pub fn stateless_check(
    p: &Packet,
    check_ip: &Table,
    check_mac: &Table,
) -> Result<StatelessVerdict, TableError> {
    let src = p.ip.src_ip;
    let ip = check_ip.lookup(&TableKey::ip(src))?;
    match ip.action {
        Action::Drop => return Ok(StatelessVerdict::Drop(DropCause::Ip)),
        Action::SendToController if !ip.hit => return Ok(StatelessVerdict::ToController),
        _ if !ip.hit => return Ok(StatelessVerdict::Drop(DropCause::Ip)),
        _ => {}
    }
    let mac = check_mac.lookup(&TableKey::ip_mac(src, p.eth.src_mac))?;
    Ok(match (mac.hit, mac.action) {
        (true, Action::Drop) | (false, _) => StatelessVerdict::Drop(DropCause::Mac),
        (true, _) => StatelessVerdict::Allow,
    })
}
