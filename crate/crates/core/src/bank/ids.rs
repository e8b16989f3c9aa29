//! Zero-padded sequential identifiers for candidates (`c_001`) and entries (`e_001`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid {kind} identifier `{raw}`")]
pub struct IdParseError {
    kind: &'static str,
    raw: String,
}

/// Parses `<prefix>_NNN`, also accepting the underscore-less `<prefix>NNN` form
/// that models sometimes emit.
fn parse_seq(raw: &str, prefix: char, kind: &'static str) -> Result<u32, IdParseError> {
    let err = || IdParseError {
        kind,
        raw: raw.to_string(),
    };
    let s = raw.trim();
    let rest = s
        .strip_prefix(prefix)
        .or_else(|| s.strip_prefix(prefix.to_ascii_uppercase()))
        .ok_or_else(err)?;
    let digits = rest.strip_prefix('_').unwrap_or(rest);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(err());
    }
    match digits.parse::<u32>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(err()),
    }
}

macro_rules! seq_id {
    ($(#[$doc:meta])* $name:ident, $prefix:literal, $kind:literal) => {
        $(#[$doc])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(u32);

        impl $name {
            pub fn new(seq: u32) -> Self {
                assert!(seq >= 1, "identifier sequence numbers start at 1");
                Self(seq)
            }

            pub fn seq(self) -> u32 {
                self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "_{:03}"), self.0)
            }
        }

        impl FromStr for $name {
            type Err = IdParseError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let prefix = $prefix.chars().next().unwrap();
                parse_seq(s, prefix, $kind).map(Self)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(deserializer)?;
                raw.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

seq_id!(
    /// Identifier of an extracted candidate cue.
    CandidateId,
    "c",
    "candidate"
);
seq_id!(
    /// Stable identifier of a bank entry. Never reused, even after retraction.
    EntryId,
    "e",
    "entry"
);
