//! Event log. One line per event, tab separated:
//!
//! ```text
//! <ts_ms>\t<kind>\t<subject>\t<verdict-or-detail>
//! ```
//!
//! `kind` is one of `encounter`, `maintenance`, `attack`, `report`,
//! `refused`. `subject` is the vehicle label (`v3`, or `v3~sybil0` for an
//! identity fabricated by an attack on `v3`). The last column holds the
//! verdict for encounters and reports, the attack kind for attacks, and `-`
//! when there is nothing to say.

use std::fmt;
use std::str::FromStr;

use crate::protocol::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LogKind {
    Encounter,
    Maintenance,
    Attack,
    Report,
    Refused,
}

impl LogKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LogKind::Encounter => "encounter",
            LogKind::Maintenance => "maintenance",
            LogKind::Attack => "attack",
            LogKind::Report => "report",
            LogKind::Refused => "refused",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub ts: u64,
    pub kind: LogKind,
    pub subject: String,
    pub verdict: Option<Verdict>,
    pub detail: Option<String>,
}

impl LogRecord {
    /// True if this record concerns `label` or an identity fabricated in an
    /// attack on it.
    pub fn concerns(&self, label: &str) -> bool {
        self.subject == label
            || self
                .subject
                .strip_prefix(label)
                .is_some_and(|rest| rest.starts_with('~'))
    }
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let last = match (&self.verdict, &self.detail) {
            (Some(v), _) => v.as_str(),
            (None, Some(d)) => d.as_str(),
            (None, None) => "-",
        };
        write!(
            f,
            "{}\t{}\t{}\t{}",
            self.ts,
            self.kind.as_str(),
            self.subject,
            last
        )
    }
}

impl FromStr for LogRecord {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let cols: Vec<_> = line.split('\t').collect();
        let [ts, kind, subject, last] = cols.as_slice() else {
            return Err(format!("expected 4 tab-separated columns: {line:?}"));
        };
        let kind = match *kind {
            "encounter" => LogKind::Encounter,
            "maintenance" => LogKind::Maintenance,
            "attack" => LogKind::Attack,
            "report" => LogKind::Report,
            "refused" => LogKind::Refused,
            k => return Err(format!("unknown event kind {k:?}")),
        };
        let verdict = Verdict::ALL.into_iter().find(|v| v.as_str() == *last);
        let detail = match (verdict, *last) {
            (Some(_), _) | (None, "-") => None,
            (None, d) => Some(d.to_string()),
        };
        Ok(LogRecord {
            ts: ts.parse().map_err(|_| format!("bad timestamp {ts:?}"))?,
            kind,
            subject: subject.to_string(),
            verdict,
            detail,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    pub records: Vec<LogRecord>,
}

impl EventLog {
    pub fn push(&mut self, record: LogRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn encounters(&self) -> impl Iterator<Item = &LogRecord> + '_ {
        self.records.iter().filter(|r| r.kind == LogKind::Encounter)
    }

    pub fn verdicts(&self) -> impl Iterator<Item = Verdict> + '_ {
        self.encounters().filter_map(|r| r.verdict)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&r.to_string());
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        Ok(EventLog {
            records: text
                .lines()
                .filter(|l| !l.is_empty())
                .map(str::parse)
                .collect::<Result<_, _>>()?,
        })
    }
}
