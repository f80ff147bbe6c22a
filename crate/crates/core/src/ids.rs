use std::fmt;

use serde::{Deserialize, Serialize};

/// Association ID. AID 0 in a trigger frame marks a random-access RU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Aid(pub u16);

impl Aid {
    pub const RANDOM_ACCESS: Aid = Aid(0);

    pub fn is_random_access(self) -> bool {
        self == Aid::RANDOM_ACCESS
    }
}

impl fmt::Display for Aid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PacketId(pub u64);
