//! Service layer for `anchorledger`: the HTTP API, the file ingest
//! pipeline, the verification client, a JSON-RPC public-chain backend (and
//! a JSON-RPC mock chain), and the daemon that runs a node.

pub mod api;
pub mod config;
pub mod daemon;
pub mod ingest;
pub mod rpc;
pub mod server;
pub mod testing;
pub mod verify;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/api.md")]
    mod api {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
