//! UTC timestamps at second precision.
//!
//! Atomic files store times as `YYYY-MM-DDTHH:MM:SSZ`. Internally a timestamp
//! is a count of seconds since the Unix epoch.

use std::fmt;

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, Timelike, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn seconds(self) -> i64 {
        self.0
    }

    /// Parses the canonical form, or any RFC 3339 string with an offset
    /// (normalized to UTC). Fractional seconds must be zero.
    pub fn parse(s: &str) -> Option<Self> {
        if let Some(ts) = parse_canonical(s.as_bytes()) {
            return Some(ts);
        }
        let dt = DateTime::parse_from_rfc3339(s).ok()?;
        if dt.timestamp_subsec_nanos() != 0 {
            return None;
        }
        Some(Timestamp(dt.timestamp()))
    }

    /// Lenient parser for foreign inputs: canonical/RFC 3339, a few common
    /// naive layouts (taken as UTC), or an explicit `strftime` format.
    pub fn parse_flexible(s: &str, format: Option<&str>) -> Option<Self> {
        let s = s.trim();
        if let Some(fmt) = format {
            if fmt == "unix" {
                return s.parse::<i64>().ok().map(Timestamp);
            }
            if let Ok(dt) = DateTime::parse_from_str(s, fmt) {
                return Some(Timestamp(dt.timestamp()));
            }
            if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
                return Some(Timestamp(naive.and_utc().timestamp()));
            }
            return NaiveDate::parse_from_str(s, fmt)
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
                .map(|n| Timestamp(n.and_utc().timestamp()));
        }
        if let Some(ts) = Self::parse(s) {
            return Some(ts);
        }
        for fmt in [
            "%Y-%m-%d %H:%M:%S",
            "%Y-%m-%dT%H:%M:%S",
            "%Y-%m-%d %H:%M",
            "%Y/%m/%d %H:%M:%S",
            "%Y/%m/%d %H:%M",
        ] {
            if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
                return Some(Timestamp(naive.and_utc().timestamp()));
            }
        }
        None
    }

    fn datetime(self) -> NaiveDateTime {
        DateTime::<Utc>::from_timestamp(self.0, 0)
            .map(|d| d.naive_utc())
            .unwrap_or_default()
    }

    /// Seconds elapsed since midnight of the timestamp's UTC date.
    pub fn seconds_of_day(self) -> i64 {
        self.0.rem_euclid(SECONDS_PER_DAY)
    }

    /// Fraction of the day in `[0, 1)`.
    pub fn time_of_day(self) -> f64 {
        self.seconds_of_day() as f64 / SECONDS_PER_DAY as f64
    }

    /// ISO weekday index, Monday = 0 .. Sunday = 6.
    pub fn weekday(self) -> u32 {
        self.datetime().weekday().num_days_from_monday()
    }

    pub fn is_weekend(self) -> bool {
        self.weekday() >= 5
    }

    pub fn write_canonical(self, out: &mut String) {
        use fmt::Write;
        let dt = self.datetime();
        let _ = write!(
            out,
            "{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z",
            dt.year(),
            dt.month(),
            dt.day(),
            dt.hour(),
            dt.minute(),
            dt.second()
        );
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::with_capacity(20);
        self.write_canonical(&mut s);
        f.write_str(&s)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Timestamp::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("bad timestamp {s}")))
    }
}

fn digits(b: &[u8]) -> Option<u32> {
    b.iter().try_fold(0u32, |acc, &c| {
        c.is_ascii_digit().then(|| acc * 10 + (c - b'0') as u32)
    })
}

// Fast path for `YYYY-MM-DDTHH:MM:SSZ`.
fn parse_canonical(b: &[u8]) -> Option<Timestamp> {
    if b.len() != 20
        || b[4] != b'-'
        || b[7] != b'-'
        || b[10] != b'T'
        || b[13] != b':'
        || b[16] != b':'
        || b[19] != b'Z'
    {
        return None;
    }
    let date = NaiveDate::from_ymd_opt(
        digits(&b[0..4])? as i32,
        digits(&b[5..7])?,
        digits(&b[8..10])?,
    )?;
    let (h, m, s) = (digits(&b[11..13])?, digits(&b[14..16])?, digits(&b[17..19])?);
    let naive = date.and_hms_opt(h, m, s)?;
    Some(Timestamp(naive.and_utc().timestamp()))
}
