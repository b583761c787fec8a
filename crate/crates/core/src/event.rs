//! Raw event records, sensor geometry, and the plain-text event-log format.
//!
//! A log is UTF-8 text, one `t_us,x,y,pol` record per line. Lines starting
//! with `#` and blank lines are ignored. Timestamps are microseconds and must
//! be non-decreasing up to a configurable slack; polarity is `1` or `-1`.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Microsecond timestamp. All pipeline time is integer microseconds.
pub type TimeUs = u64;

/// One camera event: a pixel reporting a brightness change.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub t: TimeUs,
    pub x: u16,
    pub y: u16,
    /// `+1` or `-1`. Carried through I/O but ignored by counting and
    /// detection downstream.
    pub pol: i8,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.t, self.x, self.y, self.pol)
    }
}

/// Sensor pixel dimensions. Valid coordinates are `0..width` x `0..height`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorGeometry {
    pub width: u16,
    pub height: u16,
}

impl Default for SensorGeometry {
    fn default() -> Self {
        SensorGeometry { width: 240, height: 180 }
    }
}

impl SensorGeometry {
    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }

    pub fn n_pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Row-major cell index. Caller guarantees `contains(x, y)`.
    #[inline]
    pub fn index(&self, x: u16, y: u16) -> usize {
        y as usize * self.width as usize + x as usize
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("malformed record: {reason}")]
    MalformedRecord { reason: String },
    #[error("coordinates ({x},{y}) outside sensor {width}x{height}")]
    OutOfRange { x: u32, y: u32, width: u16, height: u16 },
    #[error("timestamp {t} precedes {last} by more than slack {slack_us}us")]
    NonMonotonic { t: TimeUs, last: TimeUs, slack_us: u64 },
}

/// Streaming record parser. Tracks the previous timestamp so regressions
/// beyond `slack_us` are rejected.
#[derive(Debug)]
pub struct EventParser {
    geometry: SensorGeometry,
    slack_us: u64,
    last_t: Option<TimeUs>,
}

impl EventParser {
    pub fn new(geometry: SensorGeometry) -> Self {
        Self::with_slack(geometry, 0)
    }

    pub fn with_slack(geometry: SensorGeometry, slack_us: u64) -> Self {
        EventParser { geometry, slack_us, last_t: None }
    }

    /// Parses one `t_us,x,y,pol` record. Comment handling lives in the log
    /// reader; this expects an actual record.
    pub fn parse_record(&mut self, line: &str) -> Result<Event, ParseError> {
        let malformed = |reason: &str| ParseError::MalformedRecord { reason: reason.to_string() };

        let mut fields = line.trim().split(',');
        let mut next = |name: &str| {
            fields
                .next()
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| malformed(&format!("missing field `{name}`")))
        };

        let t: TimeUs = next("t_us")?
            .parse()
            .map_err(|_| malformed("unparsable timestamp"))?;
        // Parse coordinates wide so an out-of-range value reports as a range
        // error rather than an integer overflow.
        let x: u32 = next("x")?.parse().map_err(|_| malformed("unparsable x"))?;
        let y: u32 = next("y")?.parse().map_err(|_| malformed("unparsable y"))?;
        let pol: i8 = next("pol")?.parse().map_err(|_| malformed("unparsable polarity"))?;
        if fields.next().is_some() {
            return Err(malformed("trailing fields"));
        }
        if pol != 1 && pol != -1 {
            return Err(malformed("polarity must be 1 or -1"));
        }

        let (w, h) = (self.geometry.width, self.geometry.height);
        if x >= u32::from(w) || y >= u32::from(h) {
            return Err(ParseError::OutOfRange { x, y, width: w, height: h });
        }

        if let Some(last) = self.last_t {
            if t + self.slack_us < last {
                return Err(ParseError::NonMonotonic { t, last, slack_us: self.slack_us });
            }
        }
        self.last_t = Some(self.last_t.map_or(t, |l| l.max(t)));

        Ok(Event { t, x: x as u16, y: y as u16, pol })
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line_no}: {source}")]
    Parse {
        line_no: usize,
        #[source]
        source: ParseError,
    },
}

/// Iterator over the records of an event log, skipping comments and blanks.
pub struct EventLogReader<R: BufRead> {
    inner: R,
    parser: EventParser,
    line_no: usize,
    buf: String,
}

impl EventLogReader<BufReader<File>> {
    pub fn open(path: &Path, geometry: SensorGeometry, slack_us: u64) -> io::Result<Self> {
        let file = File::open(path)?;
        Ok(EventLogReader::new(BufReader::new(file), geometry, slack_us))
    }
}

impl<R: BufRead> EventLogReader<R> {
    pub fn new(inner: R, geometry: SensorGeometry, slack_us: u64) -> Self {
        EventLogReader {
            inner,
            parser: EventParser::with_slack(geometry, slack_us),
            line_no: 0,
            buf: String::new(),
        }
    }
}

impl<R: BufRead> Iterator for EventLogReader<R> {
    type Item = Result<Event, LogError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.inner.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line_no += 1;
            let line = self.buf.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            return Some(
                self.parser
                    .parse_record(line)
                    .map_err(|source| LogError::Parse { line_no: self.line_no, source }),
            );
        }
    }
}

/// Reads a whole log into memory. Strict monotonicity (zero slack).
pub fn read_event_log(path: &Path, geometry: SensorGeometry) -> Result<Vec<Event>, LogError> {
    EventLogReader::open(path, geometry, 0)?.collect()
}

/// Writes events in log format. `comments` become leading `#` lines, so the
/// output of two identical calls is byte-identical.
pub fn write_event_log<W: Write>(
    mut out: W,
    comments: &[&str],
    events: &[Event],
) -> io::Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    for e in events {
        writeln!(out, "{e}")?;
    }
    Ok(())
}

pub fn write_event_log_file(path: &Path, comments: &[&str], events: &[Event]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_event_log(&mut w, comments, events)?;
    w.flush()
}
