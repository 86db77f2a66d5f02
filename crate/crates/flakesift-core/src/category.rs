//! The six flakiness categories.

use alloc::string::String;
use core::fmt;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;

/// Root-cause category of a test, including the non-flaky majority class.
///
/// The enum order is load-bearing: it fixes the categorical-head logit
/// layout, confusion-matrix axes, and argmax tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlakinessCategory {
    AsyncWait,
    Concurrency,
    Time,
    UnorderedCollections,
    OrderDependency,
    NonFlaky,
}

impl FlakinessCategory {
    /// All six categories in enum order.
    pub const ALL: [FlakinessCategory; 6] = [
        FlakinessCategory::AsyncWait,
        FlakinessCategory::Concurrency,
        FlakinessCategory::Time,
        FlakinessCategory::UnorderedCollections,
        FlakinessCategory::OrderDependency,
        FlakinessCategory::NonFlaky,
    ];

    /// The five flaky categories (everything but `NonFlaky`).
    pub const FLAKY: [FlakinessCategory; 5] = [
        FlakinessCategory::AsyncWait,
        FlakinessCategory::Concurrency,
        FlakinessCategory::Time,
        FlakinessCategory::UnorderedCollections,
        FlakinessCategory::OrderDependency,
    ];

    /// Stable index in enum order, usable as a logit/row offset.
    pub fn index(self) -> usize {
        match self {
            FlakinessCategory::AsyncWait => 0,
            FlakinessCategory::Concurrency => 1,
            FlakinessCategory::Time => 2,
            FlakinessCategory::UnorderedCollections => 3,
            FlakinessCategory::OrderDependency => 4,
            FlakinessCategory::NonFlaky => 5,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_flaky(self) -> bool {
        self != FlakinessCategory::NonFlaky
    }

    /// Snake-case label used in the JSONL corpus format.
    pub fn as_str(self) -> &'static str {
        match self {
            FlakinessCategory::AsyncWait => "async_wait",
            FlakinessCategory::Concurrency => "concurrency",
            FlakinessCategory::Time => "time",
            FlakinessCategory::UnorderedCollections => "unordered_collections",
            FlakinessCategory::OrderDependency => "order_dependency",
            FlakinessCategory::NonFlaky => "non_flaky",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CoreError> {
        match s {
            "async_wait" => Ok(FlakinessCategory::AsyncWait),
            "concurrency" => Ok(FlakinessCategory::Concurrency),
            "time" => Ok(FlakinessCategory::Time),
            "unordered_collections" => Ok(FlakinessCategory::UnorderedCollections),
            "order_dependency" => Ok(FlakinessCategory::OrderDependency),
            "non_flaky" => Ok(FlakinessCategory::NonFlaky),
            other => Err(CoreError::UnknownLabel(String::from(other))),
        }
    }
}

impl fmt::Display for FlakinessCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn string_round_trip() {
        for c in FlakinessCategory::ALL {
            assert_eq!(FlakinessCategory::parse(c.as_str()).unwrap(), c);
        }
    }

    #[test]
    fn exactly_six_variants() {
        assert_eq!(FlakinessCategory::ALL.len(), 6);
        for (i, c) in FlakinessCategory::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(FlakinessCategory::from_index(i), Some(*c));
        }
        assert_eq!(FlakinessCategory::from_index(6), None);
    }

    #[test]
    fn unknown_label_rejected() {
        assert!(matches!(
            FlakinessCategory::parse("flaky"),
            Err(CoreError::UnknownLabel(_))
        ));
    }
}
