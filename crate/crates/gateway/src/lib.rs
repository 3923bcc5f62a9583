//! Network front door for the scene engine: framed TCP and WebSocket
//! sessions, transcript replay against goldens, and the context benchmark.

pub mod bench;
pub mod config;
pub mod http;
pub mod replay;
pub mod server;
pub mod wire;
