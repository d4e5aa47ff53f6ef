//! Behavior-log records, the 04-15..08-15 day calendar and the log TSV format.
//!
//! A log line is `user_id<TAB>brand_id<TAB>action_code<TAB>MM-DD` with no
//! header. Dates carry no year; they are stored as day offsets from 04-15.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Last valid day offset (08-15).
pub const MAX_DAY: u16 = 122;
/// Number of days in the full window.
pub const WINDOW_DAYS: u16 = MAX_DAY + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionType {
    Click,
    Buy,
    Collect,
    Cart,
}

impl ActionType {
    pub const ALL: [ActionType; 4] = [
        ActionType::Click,
        ActionType::Buy,
        ActionType::Collect,
        ActionType::Cart,
    ];

    pub fn code(self) -> u8 {
        match self {
            ActionType::Click => 0,
            ActionType::Buy => 1,
            ActionType::Collect => 2,
            ActionType::Cart => 3,
        }
    }

    pub fn from_code(code: i64) -> Result<Self> {
        match code {
            0 => Ok(ActionType::Click),
            1 => Ok(ActionType::Buy),
            2 => Ok(ActionType::Collect),
            3 => Ok(ActionType::Cart),
            other => Err(Error::ActionCode(other)),
        }
    }

    pub fn index(self) -> usize {
        self.code() as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionType::Click => "click",
            ActionType::Buy => "buy",
            ActionType::Collect => "collect",
            ActionType::Cart => "cart",
        }
    }
}

// (month, first day-of-month in window, days in month, window offset of that first day)
const CALENDAR: [(u8, u8, u8, u16); 5] = [
    (4, 15, 30, 0),
    (5, 1, 31, 16),
    (6, 1, 30, 47),
    (7, 1, 31, 77),
    (8, 1, 15, 108),
];

/// Day offset from 04-15 (day 0) to 08-15 (day 122).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(try_from = "u16", into = "u16")]
pub struct Day(u16);

impl Day {
    pub fn new(day: u16) -> Result<Self> {
        if day > MAX_DAY {
            return Err(Error::DayOutOfWindow(day as i64));
        }
        Ok(Day(day))
    }

    pub fn get(self) -> u16 {
        self.0
    }

    /// Parses zero-padded `MM-DD` text within 04-15..08-15.
    pub fn parse(text: &str) -> Result<Self> {
        let bytes = text.as_bytes();
        if bytes.len() != 5 || bytes[2] != b'-' {
            return Err(Error::Date(text.to_string(), "expected MM-DD"));
        }
        let digits = |s: &[u8]| -> Option<u8> {
            if s.iter().all(u8::is_ascii_digit) {
                Some((s[0] - b'0') * 10 + (s[1] - b'0'))
            } else {
                None
            }
        };
        let (Some(month), Some(dom)) = (digits(&bytes[0..2]), digits(&bytes[3..5])) else {
            return Err(Error::Date(text.to_string(), "expected MM-DD"));
        };
        let Some(&(_, first, len, offset)) = CALENDAR.iter().find(|c| c.0 == month) else {
            return Err(Error::Date(text.to_string(), "outside 04-15..08-15"));
        };
        let last = if month == 8 { 15 } else { len };
        if dom < first || dom > last {
            return Err(Error::Date(text.to_string(), "outside 04-15..08-15"));
        }
        Ok(Day(offset + (dom - first) as u16))
    }

    pub fn month_day(self) -> (u8, u8) {
        let &(month, first, _, offset) = CALENDAR
            .iter()
            .rev()
            .find(|c| c.3 <= self.0)
            .expect("day 0 is in the calendar");
        (month, first + (self.0 - offset) as u8)
    }

    pub fn month(self) -> Month {
        Month::of(self)
    }
}

impl TryFrom<u16> for Day {
    type Error = Error;
    fn try_from(value: u16) -> Result<Self> {
        Day::new(value)
    }
}

impl From<Day> for u16 {
    fn from(day: Day) -> u16 {
        day.0
    }
}

impl fmt::Display for Day {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (m, d) = self.month_day();
        write!(f, "{m:02}-{d:02}")
    }
}

/// Month naming convention over the window. Month boundaries do not follow
/// calendar months: April runs 04-15..05-16, May 05-17..06-20, June
/// 06-21..07-18 and July 07-19..08-15.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Month {
    April,
    May,
    June,
    July,
}

impl Month {
    pub const ALL: [Month; 4] = [Month::April, Month::May, Month::June, Month::July];

    /// Inclusive day range.
    pub fn range(self) -> (u16, u16) {
        match self {
            Month::April => (0, 31),
            Month::May => (32, 66),
            Month::June => (67, 94),
            Month::July => (95, 122),
        }
    }

    pub fn first_day(self) -> u16 {
        self.range().0
    }

    pub fn last_day(self) -> u16 {
        self.range().1
    }

    /// Exclusive end of the month.
    pub fn end(self) -> u16 {
        self.range().1 + 1
    }

    pub fn of(day: Day) -> Month {
        match day.0 {
            0..=31 => Month::April,
            32..=66 => Month::May,
            67..=94 => Month::June,
            _ => Month::July,
        }
    }

    /// Month containing a raw day offset; errors outside the window.
    pub fn of_day(day: u16) -> Result<Month> {
        Day::new(day).map(Month::of)
    }

    /// The month starting exactly at `day`, if any.
    pub fn starting_at(day: u16) -> Option<Month> {
        Month::ALL.into_iter().find(|m| m.first_day() == day)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn next(self) -> Option<Month> {
        Month::ALL.get(self.index() + 1).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Month::April => "April",
            Month::May => "May",
            Month::June => "June",
            Month::July => "July",
        }
    }
}

/// One row of the behavior log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActionRecord {
    pub user: u64,
    pub brand: u64,
    pub action: ActionType,
    pub day: Day,
}

impl ActionRecord {
    pub fn new(user: u64, brand: u64, action: ActionType, day: Day) -> Self {
        ActionRecord {
            user,
            brand,
            action,
            day,
        }
    }

    pub fn day(&self) -> u16 {
        self.day.get()
    }

    /// Canonical on-disk ordering: user, day, brand, action.
    pub fn canonical_key(&self) -> (u64, u16, u64, u8) {
        (self.user, self.day.0, self.brand, self.action.code())
    }

    fn parse_line(line: &str) -> std::result::Result<Self, String> {
        let mut fields = line.split('\t');
        let mut next = |name: &str| {
            fields
                .next()
                .ok_or_else(|| format!("missing field {name}"))
        };
        let user = next("user_id")?;
        let brand = next("brand_id")?;
        let action = next("action_code")?;
        let date = next("date")?;
        if fields.next().is_some() {
            return Err("too many fields".to_string());
        }
        let user = user
            .parse::<u64>()
            .map_err(|e| format!("bad user_id {user:?}: {e}"))?;
        let brand = brand
            .parse::<u64>()
            .map_err(|e| format!("bad brand_id {brand:?}: {e}"))?;
        let code = action
            .parse::<i64>()
            .map_err(|e| format!("bad action code {action:?}: {e}"))?;
        let action = ActionType::from_code(code).map_err(|e| e.to_string())?;
        let day = Day::parse(date).map_err(|e| e.to_string())?;
        Ok(ActionRecord {
            user,
            brand,
            action,
            day,
        })
    }
}

impl fmt::Display for ActionRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}",
            self.user,
            self.brand,
            self.action.code(),
            self.day
        )
    }
}

/// Streaming reader over a log file.
pub struct LogReader<R> {
    inner: R,
    path: PathBuf,
    line_no: usize,
    buf: String,
}

impl LogReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(LogReader::new(BufReader::with_capacity(1 << 20, file), path))
    }
}

impl<R: BufRead> LogReader<R> {
    pub fn new(inner: R, path: impl Into<PathBuf>) -> Self {
        LogReader {
            inner,
            path: path.into(),
            line_no: 0,
            buf: String::new(),
        }
    }
}

impl<R: BufRead> Iterator for LogReader<R> {
    type Item = Result<ActionRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            self.line_no += 1;
            match self.inner.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            }
            let line = self.buf.trim_end_matches(['\n', '\r']);
            if line.is_empty() {
                continue;
            }
            return Some(
                ActionRecord::parse_line(line)
                    .map_err(|msg| Error::parse(&self.path, self.line_no, msg)),
            );
        }
    }
}

pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<ActionRecord>> {
    LogReader::open(path)?.collect()
}

pub fn write_records<'a, W: Write>(
    out: W,
    records: impl IntoIterator<Item = &'a ActionRecord>,
) -> std::io::Result<()> {
    let mut out = BufWriter::with_capacity(1 << 20, out);
    for r in records {
        writeln!(out, "{r}")?;
    }
    out.flush()
}

pub fn write_log<'a>(
    path: impl AsRef<Path>,
    records: impl IntoIterator<Item = &'a ActionRecord>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_records(file, records).map_err(|e| Error::io(path, e))
}
