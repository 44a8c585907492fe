use std::fmt;

use serde::{Deserialize, Serialize};

/// Object label: the scan an object was born at, and its index among the
/// labels born at that scan. Ordered lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Label {
    pub birth_time: u32,
    pub birth_index: u32,
}

impl Label {
    pub const fn new(birth_time: u32, birth_index: u32) -> Self {
        Self {
            birth_time,
            birth_index,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.birth_time, self.birth_index)
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (t, i) = s
            .split_once(':')
            .ok_or_else(|| format!("label `{s}` is not of the form time:index"))?;
        let birth_time = t.parse().map_err(|_| format!("bad birth time in `{s}`"))?;
        let birth_index = i.parse().map_err(|_| format!("bad birth index in `{s}`"))?;
        Ok(Self::new(birth_time, birth_index))
    }
}
