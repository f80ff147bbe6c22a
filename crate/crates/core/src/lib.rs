//! Discrete-event simulator of an IEEE 802.11ax BSS comparing UL OFDMA
//! random access (UORA), scheduled access and adaptive polling against
//! plain EDCA.

pub mod a2p;
pub mod bss;
pub mod edca;
pub mod error;
pub mod harness;
pub mod ids;
pub mod metrics;
pub mod ofdma_ap;
pub mod phy;
pub mod sim;
pub mod traffic;
pub mod uora;

pub use error::{Error, Result};
pub use sim::SimTime;
