//! Runtime half of the desk-scale manufacturing cell: MCP transports,
//! the three tool servers, the device-bus plant service, the orchestrator
//! with its HTTP session API, and the scenario harness.

pub mod cli;
pub mod client;
pub mod config;
pub mod devicebus;
pub mod harness;
pub mod orchestrator;
pub mod server;
pub mod tools;
pub mod transport;
