//! Level-1b filtering: admit external traffic only for flows that an
//! internal host opened.

use crate::bloom::BloomPair;
use crate::flow::{Direction, FlowKey};
use crate::packet::Packet;
use crate::table::{Action, PortId, Table, TableError, TableKey};

/// `[SwitchPort]`; a hit marks the port as internal, a miss as external.
pub const CHECK_PORTS: &str = "check_ports";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatefulVerdict {
    Forward,
    Drop,
}

pub fn classify_direction(ingress: PortId, check_ports: &Table) -> Result<Direction, TableError> {
    let l = check_ports.lookup(&TableKey::switch_port(ingress))?;
    Ok(match (l.hit, l.action) {
        (true, Action::SetDirection(dir)) => dir,
        (true, _) => Direction::Internal,
        (false, _) => Direction::External,
    })
}

/// Internal packets always pass; an internal SYN (SYN set, ACK clear) also
/// records its flow. External packets pass only if their flow is recorded.
pub fn stateful_process(p: &Packet, dir: Direction, flows: &mut BloomPair) -> StatefulVerdict {
    match dir {
        Direction::Internal => {
            if p.tcp.flags.is_syn() {
                flows.insert(&FlowKey::of(p, Direction::Internal));
            }
            StatefulVerdict::Forward
        }
        Direction::External => {
            if flows.contains(&FlowKey::of(p, Direction::External)) {
                StatefulVerdict::Forward
            } else {
                StatefulVerdict::Drop
            }
        }
    }
}
