//! Allocation-only building blocks for an MCP-based manufacturing cell.
//!
//! Nothing in this crate performs I/O. It holds the JSON-RPC/MCP message
//! model, the capability registry and its rendering into tool descriptors,
//! the spindle-speed table, the shop-floor simulation behind the device
//! bus, session traces and the deterministic planner. The `mcpfab` crate
//! wires these to sockets, processes and HTTP.

#![no_std]

extern crate alloc;

pub mod bus;
pub mod jsonrpc;
pub mod mcp;
pub mod plant;
pub mod planner;
pub mod registry;
pub mod rpm;
pub mod trace;

pub use jsonrpc::{DecodeError, FrameError, Id, Message, Outcome, ProtocolError};
pub use mcp::{ToolCallResult, ToolDescriptor};
pub use planner::{deterministic_plan, PlannerDecision};
pub use registry::{CapabilityDecl, Registry};
pub use trace::{Catalog, EventKind, SessionEvent, SessionTrace, TaskSpec};
