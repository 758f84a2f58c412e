//! Deterministic two-level packet filtering pipeline for software switches.
//!
//! The crate models a programmable switch that runs, in order:
//!
//! 1. a `present_table` lookup that punts first-seen hosts to the controller,
//! 2. a stateless firewall keyed on source IP and (IP, MAC) bindings,
//! 3. a stateful firewall that tracks internally initiated TCP flows in a
//!    pair of Bloom filters,
//! 4. per-host dynamic port knocking,
//! 5. exact-match IPv4 forwarding with TTL decrement.
//!
//! An ACL-driven [`controller::Controller`] answers punted packets with rule
//! installs, and [`simnet`] wires switches, hosts and the controller into a
//! discrete-event simulation whose reports are byte-for-byte reproducible.
//!
//! The crate is `no_std` and only needs `alloc`. File IO, JSON encoding and
//! the command-line runner live in the `p4filter` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod bloom;
pub mod controller;
pub mod flow;
pub mod knocking;
pub mod packet;
pub mod simnet;
pub mod stateful;
pub mod stateless;
pub mod switch;
pub mod table;

pub use core::net::Ipv4Addr;
pub use packet::MacAddr;
pub use packet::Packet;
