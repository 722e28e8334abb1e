pub mod adversary;
pub mod archive;
pub mod bench;
pub mod cli;
pub mod crypto;
pub mod ecu;
pub mod entities;
pub mod ledger;
pub mod netsim;
pub mod protocol;
pub mod tx;
pub mod wire;
