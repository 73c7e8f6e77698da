//! The three `key=value` property files describing a grid, its users and their jobs.
//!
//! One entry per line, each but possibly the last followed by a comma.
//! Key names are fixed, including the two `max_` spellings that differ
//! from the rest of their file.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    #[error("expected `key=value`, found {0:?}")]
    Malformed(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("duplicate key `{0}`")]
    DuplicateKey(String),
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("value {value:?} of `{key}` is not a non-negative integer")]
    InvalidValue { key: String, value: String },
    #[error("`{0}` must be at least 1")]
    NonPositive(String),
    #[error("`{min_key}` exceeds `{max_key}`")]
    MinExceedsMax { min_key: String, max_key: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// 1-based line, absent for whole-file problems such as a missing key.
    pub line: Option<usize>,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Range {
    pub min: u64,
    pub max: u64,
}

impl Range {
    pub const fn new(min: u64, max: u64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, v: u64) -> bool {
        self.min <= v && v <= self.max
    }
}

/// A record stored as a fixed, ordered list of integer keys.
pub trait PropertyFile: Sized {
    const KEYS: &'static [&'static str];
    fn from_values(values: &[u64]) -> Self;
    fn values(&self) -> Vec<u64>;
}

macro_rules! property_file {
    (
        $(#[$meta:meta])*
        $name:ident {
            count $count:ident = $count_key:literal,
            $( $field:ident = ($min_key:literal, $max_key:literal) ),* $(,)?
        }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
        pub struct $name {
            pub $count: u64,
            $( pub $field: Range, )*
        }

        impl PropertyFile for $name {
            const KEYS: &'static [&'static str] = &[$count_key, $( $min_key, $max_key, )*];

            fn from_values(v: &[u64]) -> Self {
                let mut it = v.iter().copied();
                let mut next = || it.next().expect("value count matches keys");
                Self {
                    $count: next(),
                    $( $field: Range { min: next(), max: next() }, )*
                }
            }

            fn values(&self) -> Vec<u64> {
                let mut out = vec![self.$count];
                $( out.push(self.$field.min); out.push(self.$field.max); )*
                out
            }
        }
    };
    (
        $(#[$meta:meta])*
        $name:ident {
            $( $field:ident = ($min_key:literal, $max_key:literal) ),* $(,)?
        }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
        pub struct $name {
            $( pub $field: Range, )*
        }

        impl PropertyFile for $name {
            const KEYS: &'static [&'static str] = &[$( $min_key, $max_key, )*];

            fn from_values(v: &[u64]) -> Self {
                let mut it = v.iter().copied();
                let mut next = || it.next().expect("value count matches keys");
                Self {
                    $( $field: Range { min: next(), max: next() }, )*
                }
            }

            fn values(&self) -> Vec<u64> {
                vec![$( self.$field.min, self.$field.max, )*]
            }
        }
    };
}

property_file!(
    /// Contents of `grid_properties.txt`. Fail rates are MTBFs in seconds.
    GridProperties {
        count number_of_resources = "number_of_resources",
        resource_bandwidth = ("minimum_resource_bandwidth", "maximum_resource_bandwidth"),
        resource_bandwidth_fail_rate = ("minimum_resource_bandwidth_fail_rate", "max_resource_bandwidth_fail_rate"),
        machines_per_resource = ("minimum_number_of_machines_in_each_resource", "maximum_number_of_machines_in_each_resource"),
        machine_fail_rate = ("minimum_machine_fail_rate", "maximum_machine_fail_rate"),
        processor_speed = ("minimum_processor_speed", "maximum_processor_speed"),
        processors_per_machine = ("minimum_number_of_processors_in_each_machine", "maximum_number_of_processors_in_each_machine"),
    }
);

property_file!(
    /// Contents of `user_properties.txt`.
    UserProperties {
        count number_of_users = "number_of_users",
        user_bandwidth_fail_rate = ("minimum_user_bandwidth_fail_rate", "maximum_user_bandwidth_fail_rate"),
        user_bandwidth = ("minimum_user_bandwidth", "maximum_user_bandwidth"),
        user_quality_of_service = ("minimum_user_quality_of_service", "max_user_quality_of_service"),
    }
);

property_file!(
    /// Contents of `job_properties`.
    JobProperties {
        job_length = ("minimum_job_length", "maximum_job_length"),
        job_input_volume = ("minimum_job_input_volume", "maximum_job_input_volume"),
    }
);

/// Parses one property file. Every key is required exactly once.
pub fn parse_properties<P: PropertyFile>(text: &str) -> Result<P, ParseError> {
    let mut values: Vec<Option<(u64, usize)>> = vec![None; P::KEYS.len()];
    let err = |line: usize, kind| ParseError {
        line: Some(line),
        kind,
    };
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let mut line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(stripped) = line.strip_suffix(',') {
            line = stripped.trim_end();
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(line_no, ParseErrorKind::Malformed(raw.to_string())))?;
        let (key, value) = (key.trim(), value.trim());
        let slot = P::KEYS
            .iter()
            .position(|k| *k == key)
            .ok_or_else(|| err(line_no, ParseErrorKind::UnknownKey(key.to_string())))?;
        if values[slot].is_some() {
            return Err(err(line_no, ParseErrorKind::DuplicateKey(key.to_string())));
        }
        let parsed = value.parse::<u64>().map_err(|_| {
            err(
                line_no,
                ParseErrorKind::InvalidValue {
                    key: key.to_string(),
                    value: value.to_string(),
                },
            )
        })?;
        if parsed == 0 {
            return Err(err(line_no, ParseErrorKind::NonPositive(key.to_string())));
        }
        values[slot] = Some((parsed, line_no));
    }

    let mut out = Vec::with_capacity(values.len());
    for (k, v) in P::KEYS.iter().zip(&values) {
        match v {
            Some((value, _)) => out.push(*value),
            None => {
                return Err(ParseError {
                    line: None,
                    kind: ParseErrorKind::MissingKey(k.to_string()),
                })
            }
        }
    }
    // keys come in (minimum, maximum) pairs after any leading count
    let first_pair = P::KEYS.len() % 2;
    for i in (first_pair..P::KEYS.len()).step_by(2) {
        if out[i] > out[i + 1] {
            return Err(ParseError {
                line: values[i + 1].map(|(_, l)| l),
                kind: ParseErrorKind::MinExceedsMax {
                    min_key: P::KEYS[i].to_string(),
                    max_key: P::KEYS[i + 1].to_string(),
                },
            });
        }
    }
    Ok(P::from_values(&out))
}

/// Prints a property record in the canonical file layout.
pub fn print_properties<P: PropertyFile>(p: &P) -> String {
    let values = p.values();
    let mut out = String::new();
    for (i, (k, v)) in P::KEYS.iter().zip(values).enumerate() {
        out.push_str(k);
        out.push('=');
        out.push_str(&v.to_string());
        if i + 1 < P::KEYS.len() {
            out.push(',');
        }
        out.push('\n');
    }
    out
}

/// Which of the three property files a text holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropertiesKind {
    Grid,
    User,
    Job,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Properties {
    Grid(GridProperties),
    User(UserProperties),
    Job(JobProperties),
}

pub fn parse_any(text: &str, kind: PropertiesKind) -> Result<Properties, ParseError> {
    Ok(match kind {
        PropertiesKind::Grid => Properties::Grid(parse_properties(text)?),
        PropertiesKind::User => Properties::User(parse_properties(text)?),
        PropertiesKind::Job => Properties::Job(parse_properties(text)?),
    })
}

/// Published grid configurations, by column name.
pub mod presets {
    use super::*;

    const fn grid(v: [u64; 13]) -> GridProperties {
        GridProperties {
            number_of_resources: v[0],
            resource_bandwidth: Range::new(v[1], v[2]),
            resource_bandwidth_fail_rate: Range::new(v[3], v[4]),
            machines_per_resource: Range::new(v[5], v[6]),
            machine_fail_rate: Range::new(v[7], v[8]),
            processor_speed: Range::new(v[9], v[10]),
            processors_per_machine: Range::new(v[11], v[12]),
        }
    }

    pub const GRIDS: &[(&str, GridProperties)] = &[
        ("G1", grid([3, 32, 512, 30, 120, 1, 4, 15, 90, 1200, 3600, 1, 8])),
        ("G2", grid([5, 32, 512, 15, 90, 1, 8, 10, 60, 2400, 3600, 1, 8])),
        ("G3", grid([7, 64, 1024, 30, 120, 1, 4, 10, 60, 1200, 3600, 1, 4])),
        ("G5", grid([5, 32, 512, 30, 120, 1, 8, 15, 90, 1200, 3600, 1, 4])),
        ("G7", grid([3, 64, 1024, 15, 90, 1, 8, 15, 90, 2400, 3600, 1, 4])),
        ("G10", grid([5, 32, 512, 15, 90, 1, 4, 15, 90, 1200, 3600, 1, 4])),
        ("G11", grid([7, 64, 1024, 15, 90, 1, 8, 15, 90, 1200, 3600, 1, 8])),
        ("G12", grid([3, 64, 1024, 15, 90, 1, 4, 10, 60, 1200, 3600, 1, 8])),
        ("G16", grid([5, 32, 512, 15, 90, 1, 8, 10, 60, 1200, 3600, 1, 8])),
        ("G18", grid([7, 32, 512, 30, 120, 1, 8, 15, 90, 1200, 3600, 1, 8])),
    ];

    #[derive(Debug, Error, Clone, PartialEq, Eq)]
    pub enum PresetError {
        #[error("grid {0} was not published; available: G1 G2 G3 G5 G7 G10 G11 G12 G16 G18")]
        Unavailable(String),
        #[error("unknown preset {0}")]
        Unknown(String),
    }

    /// Looks up a grid column such as `"G7"`. G1 to G18 exist, but only ten were published.
    pub fn grid_preset(name: &str) -> Result<GridProperties, PresetError> {
        let upper = name.trim().to_ascii_uppercase();
        if let Some((_, g)) = GRIDS.iter().find(|(n, _)| *n == upper) {
            return Ok(*g);
        }
        match upper.strip_prefix('G').and_then(|n| n.parse::<u32>().ok()) {
            Some(1..=18) => Err(PresetError::Unavailable(upper)),
            _ => Err(PresetError::Unknown(name.to_string())),
        }
    }

    /// The two user populations (1: ten users, 2: twenty users).
    pub fn user_group(group: u32) -> Result<UserProperties, PresetError> {
        match group {
            1 => Ok(UserProperties {
                number_of_users: 10,
                user_bandwidth_fail_rate: Range::new(20, 100),
                user_bandwidth: Range::new(16, 512),
                user_quality_of_service: Range::new(2, 10),
            }),
            2 => Ok(UserProperties {
                number_of_users: 20,
                user_bandwidth_fail_rate: Range::new(20, 400),
                user_bandwidth: Range::new(16, 512),
                user_quality_of_service: Range::new(2, 15),
            }),
            g => Err(PresetError::Unknown(format!("user group {g}"))),
        }
    }

    pub const JOBS: JobProperties = JobProperties {
        job_length: Range::new(1200, 12000),
        job_input_volume: Range::new(32, 1024),
    };
}
