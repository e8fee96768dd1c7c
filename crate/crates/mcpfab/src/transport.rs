//! Frame encoding for the two MCP transports.
//!
//! Stdio carries one minified JSON-RPC message per line. HTTP carries one
//! message per POST body; HTTP itself does the framing.

use mcpfab_core::jsonrpc::{self, DecodeError, FrameError, Message};

/// Path of the single JSON-RPC endpoint on HTTP servers.
pub const MCP_PATH: &str = "/mcp";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    Stdio,
    Http,
}

pub fn encode_frame(msg: &Message, transport: Transport) -> Result<Vec<u8>, FrameError> {
    let mut bytes = msg.to_json()?;
    if transport == Transport::Stdio {
        // serde_json escapes control characters inside strings, so a
        // minified message never contains a raw newline
        debug_assert!(!bytes.contains(&b'\n'));
        bytes.push(b'\n');
    }
    Ok(bytes)
}

/// Decodes one frame; a trailing `\n` / `\r\n` is ignored.
pub fn decode_frame(bytes: &[u8]) -> Result<Message, DecodeError> {
    let trimmed = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    let trimmed = trimmed.strip_suffix(b"\r").unwrap_or(trimmed);
    jsonrpc::decode(trimmed)
}
