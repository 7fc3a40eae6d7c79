//! Leading-timestamp recognition.

use chrono::{DateTime, FixedOffset, NaiveDate, NaiveDateTime, TimeZone, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use super::Timestamp;

/// Only timestamps that end within this many bytes of the line start count.
pub const SCAN_LIMIT: usize = 64;

/// Words that look like zone abbreviations but are log levels.
const LEVEL_WORDS: &[&str] = &["ALERT", "DEBUG", "ERROR", "FATAL", "INFO", "TRACE", "WARN", "CRIT", "EMERG", "NOTICE"];

/// Known zone abbreviations and their UTC offset in minutes.
const ZONES: &[(&str, i32)] = &[
    ("UTC", 0),
    ("GMT", 0),
    ("WET", 0),
    ("WEST", 60),
    ("BST", 60),
    ("CET", 60),
    ("CEST", 120),
    ("EET", 120),
    ("EEST", 180),
    ("MSK", 180),
    ("IST", 330),
    ("SGT", 480),
    ("HKT", 480),
    ("JST", 540),
    ("KST", 540),
    ("AEST", 600),
    ("AEDT", 660),
    ("HST", -600),
    ("AKST", -540),
    ("AKDT", -480),
    ("PST", -480),
    ("PDT", -420),
    ("MST", -420),
    ("MDT", -360),
    ("CST", -360),
    ("CDT", -300),
    ("EST", -300),
    ("EDT", -240),
];

pub fn zone_offset_minutes(abbr: &str) -> Option<i32> {
    ZONES.iter().find(|(z, _)| *z == abbr).map(|(_, m)| *m)
}

/// One entry of the ordered format table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TimestampFormat {
    /// `YYYY-MM-DD[T ]HH:MM[:SS[.fff]][ zone]`
    Iso8601,
    /// `YY/MM/DD HH:MM[:SS]`
    YyMmDd,
    /// `Mon DD HH:MM:SS`, year taken from configuration
    Syslog,
    /// 13-digit epoch milliseconds
    EpochMillis,
    /// chrono strftime pattern, written `strftime:<pattern>`
    Strftime(String),
}

impl TimestampFormat {
    pub fn defaults() -> Vec<TimestampFormat> {
        vec![Self::Iso8601, Self::YyMmDd, Self::Syslog, Self::EpochMillis]
    }
}

impl fmt::Display for TimestampFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Iso8601 => f.write_str("iso8601"),
            Self::YyMmDd => f.write_str("yy_mm_dd_hm"),
            Self::Syslog => f.write_str("syslog"),
            Self::EpochMillis => f.write_str("epoch_millis"),
            Self::Strftime(p) => write!(f, "strftime:{p}"),
        }
    }
}

impl FromStr for TimestampFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "iso8601" | "ymd_hms" => Ok(Self::Iso8601),
            "yy_mm_dd_hm" => Ok(Self::YyMmDd),
            "syslog" => Ok(Self::Syslog),
            "epoch_millis" => Ok(Self::EpochMillis),
            other => match other.strip_prefix("strftime:") {
                Some(p) if !p.is_empty() => Ok(Self::Strftime(p.to_string())),
                _ => Err(format!("unknown timestamp format `{other}`")),
            },
        }
    }
}

impl Serialize for TimestampFormat {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TimestampFormat {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTimestamp {
    pub instant: Timestamp,
    /// Byte offset where the body starts.
    pub prefix_len: usize,
    /// Zone abbreviation that was not in the table and was read as UTC.
    pub unknown_zone: Option<String>,
}

/// Compiled, ordered format table.
#[derive(Debug, Clone)]
pub struct FormatTable {
    entries: Vec<(TimestampFormat, Option<Regex>)>,
    syslog_year: i32,
}

impl FormatTable {
    pub fn new(formats: &[TimestampFormat], syslog_year: i32) -> Self {
        let entries = formats
            .iter()
            .map(|f| {
                let re = match f {
                    TimestampFormat::Iso8601 => Some(
                        r"^(?P<open>\[)?(?P<y>\d{4})-(?P<mo>\d{2})-(?P<d>\d{2})[T ](?P<h>\d{2}):(?P<mi>\d{2})(?::(?P<s>\d{2})(?:[.,](?P<frac>\d{1,9}))?)?(?P<zone>\s?(?:Z|[+-]\d{2}:?\d{2}|[A-Z]{2,5})\b)?",
                    ),
                    TimestampFormat::YyMmDd => Some(
                        r"^(?P<open>\[)?(?P<y>\d{2})/(?P<mo>\d{2})/(?P<d>\d{2}) (?P<h>\d{2}):(?P<mi>\d{2})(?::(?P<s>\d{2}))?\b",
                    ),
                    TimestampFormat::Syslog => Some(
                        r"^(?P<open>\[)?(?P<mon>Jan|Feb|Mar|Apr|May|Jun|Jul|Aug|Sep|Oct|Nov|Dec) {1,2}(?P<d>\d{1,2}) (?P<h>\d{2}):(?P<mi>\d{2}):(?P<s>\d{2})\b",
                    ),
                    TimestampFormat::EpochMillis => Some(r"^(?P<open>\[)?(?P<ms>\d{13})\b"),
                    TimestampFormat::Strftime(_) => None,
                };
                (f.clone(), re.map(|r| Regex::new(r).expect("built-in timestamp regex")))
            })
            .collect();
        Self { entries, syslog_year }
    }

    pub fn formats(&self) -> impl Iterator<Item = &TimestampFormat> {
        self.entries.iter().map(|(f, _)| f)
    }
}

impl Default for FormatTable {
    fn default() -> Self {
        Self::new(&TimestampFormat::defaults(), 1970)
    }
}

/// Recognises a timestamp at the start of `line`. The first format in the
/// table that matches wins.
pub fn parse_timestamp(line: &str, table: &FormatTable) -> Option<ParsedTimestamp> {
    let mut cut = SCAN_LIMIT.min(line.len());
    while !line.is_char_boundary(cut) {
        cut -= 1;
    }
    let head = &line[..cut];
    table.entries.iter().find_map(|(fmt, re)| match (fmt, re) {
        (TimestampFormat::Strftime(p), _) => parse_strftime(line, p),
        (_, Some(re)) => parse_builtin(fmt, re, head, table.syslog_year),
        _ => None,
    })
    .filter(|p| p.prefix_len <= line.len())
    .map(|mut p| {
        p.prefix_len = skip_to_body(line, p.prefix_len);
        p
    })
}

fn parse_builtin(
    fmt: &TimestampFormat,
    re: &Regex,
    head: &str,
    syslog_year: i32,
) -> Option<ParsedTimestamp> {
    let caps = re.captures(head)?;
    let num = |name: &str| caps.name(name).and_then(|m| m.as_str().parse::<u32>().ok());
    let mut end = caps.get(0)?.end();
    let mut unknown_zone = None;

    let instant = match fmt {
        TimestampFormat::EpochMillis => {
            let ms: i64 = caps.name("ms")?.as_str().parse().ok()?;
            Utc.timestamp_millis_opt(ms).single()?
        }
        TimestampFormat::Syslog => {
            let mon = month_number(caps.name("mon")?.as_str())?;
            naive(syslog_year, mon, num("d")?, num("h")?, num("mi")?, num("s")?, 0)?.and_utc()
        }
        TimestampFormat::YyMmDd => {
            let y = 2000 + num("y")? as i32;
            naive(y, num("mo")?, num("d")?, num("h")?, num("mi")?, num("s").unwrap_or(0), 0)?
                .and_utc()
        }
        TimestampFormat::Iso8601 => {
            let millis = caps.name("frac").map_or(0, |m| {
                let digits: String = m.as_str().chars().chain("000".chars()).take(3).collect();
                digits.parse::<u32>().unwrap_or(0)
            });
            let local = naive(
                num("y")? as i32,
                num("mo")?,
                num("d")?,
                num("h")?,
                num("mi")?,
                num("s").unwrap_or(0),
                millis,
            )?;
            let mut offset_min = 0;
            if let Some(z) = caps.name("zone") {
                let token = z.as_str().trim_start();
                match zone_token(token) {
                    ZoneToken::Offset(m) => offset_min = m,
                    ZoneToken::Unknown => unknown_zone = Some(token.to_string()),
                    ZoneToken::NotAZone => end = z.start(),
                }
            }
            let offset = FixedOffset::east_opt(offset_min * 60)?;
            offset.from_local_datetime(&local).single()?.with_timezone(&Utc)
        }
        TimestampFormat::Strftime(_) => return None,
    };
    if caps.name("open").is_some() && head[end..].starts_with(']') {
        end += 1;
    }
    Some(ParsedTimestamp { instant, prefix_len: end, unknown_zone })
}

enum ZoneToken {
    Offset(i32),
    Unknown,
    NotAZone,
}

fn zone_token(token: &str) -> ZoneToken {
    if token == "Z" {
        return ZoneToken::Offset(0);
    }
    if let Some(rest) = token.strip_prefix(['+', '-']) {
        let sign = if token.starts_with('-') { -1 } else { 1 };
        let digits: String = rest.chars().filter(char::is_ascii_digit).collect();
        if digits.len() == 4 {
            let h: i32 = digits[..2].parse().unwrap_or(0);
            let m: i32 = digits[2..].parse().unwrap_or(0);
            return ZoneToken::Offset(sign * (h * 60 + m));
        }
        return ZoneToken::NotAZone;
    }
    if let Some(m) = zone_offset_minutes(token) {
        return ZoneToken::Offset(m);
    }
    // Unlisted abbreviations are accepted only when they look like one.
    if token.len() >= 3 && token.ends_with('T') && !LEVEL_WORDS.contains(&token) {
        ZoneToken::Unknown
    } else {
        ZoneToken::NotAZone
    }
}

fn parse_strftime(line: &str, pattern: &str) -> Option<ParsedTimestamp> {
    let (instant, rest) = match DateTime::parse_and_remainder(line, pattern) {
        Ok((dt, rest)) => (dt.with_timezone(&Utc), rest),
        Err(_) => {
            let (ndt, rest) = NaiveDateTime::parse_and_remainder(line, pattern).ok()?;
            (ndt.and_utc(), rest)
        }
    };
    let prefix_len = line.len() - rest.len();
    (prefix_len <= SCAN_LIMIT).then_some(ParsedTimestamp { instant, prefix_len, unknown_zone: None })
}

fn naive(y: i32, mo: u32, d: u32, h: u32, mi: u32, s: u32, ms: u32) -> Option<NaiveDateTime> {
    NaiveDate::from_ymd_opt(y, mo, d)?.and_hms_milli_opt(h, mi, s, ms)
}

fn month_number(m: &str) -> Option<u32> {
    const MONTHS: [&str; 12] =
        ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"];
    MONTHS.iter().position(|x| *x == m).map(|i| i as u32 + 1)
}

fn skip_to_body(line: &str, mut at: usize) -> usize {
    let bytes = line.as_bytes();
    while at < bytes.len() && (bytes[at] == b' ' || bytes[at] == b'\t') {
        at += 1;
    }
    at
}
