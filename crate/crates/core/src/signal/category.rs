use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Number of driving-event categories.
pub const CATEGORY_COUNT: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventCategory {
    /// Aggressive acceleration.
    AA,
    /// Harsh braking.
    HB,
    /// Harsh left lane change.
    HL,
    /// Harsh right lane change.
    HR,
    /// Regular driving.
    RD,
}

impl EventCategory {
    pub const ALL: [EventCategory; CATEGORY_COUNT] = [
        EventCategory::AA,
        EventCategory::HB,
        EventCategory::HL,
        EventCategory::HR,
        EventCategory::RD,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventCategory::AA => "AA",
            EventCategory::HB => "HB",
            EventCategory::HL => "HL",
            EventCategory::HR => "HR",
            EventCategory::RD => "RD",
        }
    }
}

impl fmt::Display for EventCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown event category `{s}`")))
    }
}
