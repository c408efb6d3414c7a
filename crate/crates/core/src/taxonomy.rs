use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::Error;

/// The five collision types. Declaration order is the tie-break order used
/// wherever an argmax over classes is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CollisionClass {
    HeadOn,
    RearEnd,
    Sideswipe,
    Single,
    TBone,
}

impl CollisionClass {
    pub const ALL: [CollisionClass; 5] = [
        CollisionClass::HeadOn,
        CollisionClass::RearEnd,
        CollisionClass::Sideswipe,
        CollisionClass::Single,
        CollisionClass::TBone,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CollisionClass::HeadOn => "head-on",
            CollisionClass::RearEnd => "rear-end",
            CollisionClass::Sideswipe => "sideswipe",
            CollisionClass::Single => "single",
            CollisionClass::TBone => "t-bone",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for CollisionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CollisionClass {
    type Err = Error;

    /// Accepts canonical names in any case, with `_` or spaces in place of `-`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let canon: String = s
            .trim()
            .chars()
            .map(|c| match c {
                '_' | ' ' => '-',
                c => c.to_ascii_lowercase(),
            })
            .collect();
        CollisionClass::ALL
            .into_iter()
            .find(|c| c.as_str() == canon)
            .ok_or_else(|| Error::UnknownClass(s.to_string()))
    }
}

impl Serialize for CollisionClass {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for CollisionClass {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
