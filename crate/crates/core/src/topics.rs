//! Topic names, topic filters and wildcard matching.
//!
//! Topics are kept as raw bytes so that deliberately invalid inputs (non UTF-8,
//! embedded NUL, overlong) can still be carried through the fuzzer and
//! described, rather than rejected at the type level.

use std::fmt;

/// Longest topic or filter representable behind a 16-bit length prefix.
pub const MAX_TOPIC_LEN: usize = u16::MAX as usize;

/// Whether `#` also matches the level above it, so `a/#` matches `a`.
///
/// Brokers that disagree with this show up as delivery divergences.
pub const MULTI_LEVEL_MATCHES_PARENT: bool = true;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TopicViolation {
    Empty,
    InvalidUtf8,
    Overlength { len: usize },
    NulCharacter,
    /// `+` or `#` inside a topic name used for publishing.
    WildcardInTopic,
    /// `#` somewhere other than the final level.
    MultiLevelNotLast,
    /// `#` sharing its level with other characters, e.g. `a/b#`.
    MultiLevelNotWholeLevel,
    /// `+` sharing its level with other characters, e.g. `a+/b`.
    SingleLevelNotWholeLevel,
}

impl fmt::Display for TopicViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Empty => write!(f, "empty"),
            Self::InvalidUtf8 => write!(f, "not valid UTF-8"),
            Self::Overlength { len } => {
                write!(f, "overlength ({len} bytes, max {MAX_TOPIC_LEN})")
            }
            Self::NulCharacter => write!(f, "contains NUL"),
            Self::WildcardInTopic => write!(f, "wildcard in publish topic"),
            Self::MultiLevelNotLast => write!(f, "'#' not final level"),
            Self::MultiLevelNotWholeLevel => write!(f, "'#' not a whole level"),
            Self::SingleLevelNotWholeLevel => write!(f, "'+' not a whole level"),
        }
    }
}

fn common_violations(bytes: &[u8], out: &mut Vec<TopicViolation>) {
    if bytes.is_empty() {
        out.push(TopicViolation::Empty);
    }
    if std::str::from_utf8(bytes).is_err() {
        out.push(TopicViolation::InvalidUtf8);
    }
    if bytes.len() > MAX_TOPIC_LEN {
        out.push(TopicViolation::Overlength { len: bytes.len() });
    }
    if bytes.contains(&0) {
        out.push(TopicViolation::NulCharacter);
    }
}

/// Every rule a publish topic name breaks; empty means valid.
pub fn validate_topic(bytes: &[u8]) -> Vec<TopicViolation> {
    let mut out = Vec::new();
    common_violations(bytes, &mut out);
    if bytes.iter().any(|&b| b == b'+' || b == b'#') {
        out.push(TopicViolation::WildcardInTopic);
    }
    out
}

/// Every rule a subscription filter breaks; empty means valid.
pub fn validate_filter(bytes: &[u8]) -> Vec<TopicViolation> {
    let mut out = Vec::new();
    common_violations(bytes, &mut out);

    let levels: Vec<&[u8]> = bytes.split(|&b| b == b'/').collect();
    let last = levels.len() - 1;
    for (i, level) in levels.iter().enumerate() {
        if level.contains(&b'#') {
            if *level != b"#" {
                push_once(&mut out, TopicViolation::MultiLevelNotWholeLevel);
            } else if i != last {
                push_once(&mut out, TopicViolation::MultiLevelNotLast);
            }
        }
        if level.contains(&b'+') && *level != b"+" {
            push_once(&mut out, TopicViolation::SingleLevelNotWholeLevel);
        }
    }
    out
}

fn push_once(out: &mut Vec<TopicViolation>, v: TopicViolation) {
    if !out.contains(&v) {
        out.push(v);
    }
}

/// A validated topic name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Topic<'a>(&'a [u8]);

impl<'a> Topic<'a> {
    pub fn new(bytes: &'a [u8]) -> Result<Self, Vec<TopicViolation>> {
        let v = validate_topic(bytes);
        if v.is_empty() {
            Ok(Self(bytes))
        } else {
            Err(v)
        }
    }

    pub fn as_bytes(&self) -> &'a [u8] {
        self.0
    }

    pub fn levels(&self) -> impl Iterator<Item = &'a [u8]> {
        self.0.split(|&b| b == b'/')
    }
}

/// A validated topic filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TopicFilter<'a>(&'a [u8]);

impl<'a> TopicFilter<'a> {
    pub fn new(bytes: &'a [u8]) -> Result<Self, Vec<TopicViolation>> {
        let v = validate_filter(bytes);
        if v.is_empty() {
            Ok(Self(bytes))
        } else {
            Err(v)
        }
    }

    pub fn as_bytes(&self) -> &'a [u8] {
        self.0
    }

    pub fn levels(&self) -> impl Iterator<Item = &'a [u8]> {
        self.0.split(|&b| b == b'/')
    }
}

/// Level-by-level match. Empty levels are significant (`a//b` has three).
/// `$`-prefixed topics get no special treatment.
pub fn match_filter(filter: &TopicFilter<'_>, topic: &Topic<'_>) -> bool {
    let mut topic_levels = topic.levels();
    for f in filter.levels() {
        if f == b"#" {
            return MULTI_LEVEL_MATCHES_PARENT || topic_levels.next().is_some();
        }
        match topic_levels.next() {
            Some(t) if f == b"+" || f == t => {}
            _ => return false,
        }
    }
    topic_levels.next().is_none()
}

/// Convenience wrapper over raw bytes; `None` when either side is invalid.
pub fn matches_bytes(filter: &[u8], topic: &[u8]) -> Option<bool> {
    let filter = TopicFilter::new(filter).ok()?;
    let topic = Topic::new(topic).ok()?;
    Some(match_filter(&filter, &topic))
}
