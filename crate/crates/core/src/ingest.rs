//! Journal-entry CSV ingestion.
//!
//! Lines are read from a headed, comma-delimited UTF-8 file and grouped into
//! [`JournalEntry`] values keyed by `(company_id, entry_id)`. Groups appear in
//! order of first occurrence and keep file order internally. Entries whose
//! debit and credit totals differ are kept and flagged.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("line {line}: invalid {field} {value:?}: {reason}")]
    Malformed {
        line: u64,
        field: &'static str,
        value: String,
        reason: String,
    },
    #[error("missing required column {0:?} in header")]
    MissingColumn(String),
    #[error("unknown column key {0:?} (expected one of company_id, entry_id, date, account_id, account_name, amount, side)")]
    UnknownColumnKey(String),
    #[error("invalid side alias {0:?} (expected TOKEN=D or TOKEN=C)")]
    InvalidAlias(String),
    #[error("no records")]
    NoRecords,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Debit,
    Credit,
}

impl Side {
    pub fn token(self) -> &'static str {
        match self {
            Side::Debit => "D",
            Side::Credit => "C",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// One ledger line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalEntryLine {
    pub company_id: String,
    pub entry_id: String,
    pub date: NaiveDate,
    pub account_id: String,
    pub account_name: Option<String>,
    pub amount: Decimal,
    pub side: Side,
}

/// All lines sharing one `(company_id, entry_id)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub company_id: String,
    pub entry_id: String,
    pub lines: Vec<JournalEntryLine>,
    pub balanced: bool,
}

impl JournalEntry {
    /// Groups `lines` into an entry. Returns `None` for an empty slice or when
    /// the lines do not share one company and entry id.
    pub fn from_lines(lines: Vec<JournalEntryLine>) -> Option<Self> {
        let first = lines.first()?;
        let (company_id, entry_id) = (first.company_id.clone(), first.entry_id.clone());
        if lines
            .iter()
            .any(|l| l.company_id != company_id || l.entry_id != entry_id)
        {
            return None;
        }
        let balanced = is_balanced(&lines);
        Some(JournalEntry {
            company_id,
            entry_id,
            lines,
            balanced,
        })
    }

    pub fn debit_total(&self) -> Decimal {
        side_total(&self.lines, Side::Debit)
    }

    pub fn credit_total(&self) -> Decimal {
        side_total(&self.lines, Side::Credit)
    }
}

fn side_total(lines: &[JournalEntryLine], side: Side) -> Decimal {
    lines
        .iter()
        .filter(|l| l.side == side)
        .map(|l| l.amount)
        .sum()
}

fn is_balanced(lines: &[JournalEntryLine]) -> bool {
    side_total(lines, Side::Debit) == side_total(lines, Side::Credit)
}

/// Header names for each logical field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub company_id: String,
    pub entry_id: String,
    pub date: String,
    pub account_id: String,
    pub account_name: String,
    pub amount: String,
    pub side: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            company_id: "company_id".into(),
            entry_id: "entry_id".into(),
            date: "date".into(),
            account_id: "account_id".into(),
            account_name: "account_name".into(),
            amount: "amount".into(),
            side: "side".into(),
        }
    }
}

impl ColumnMap {
    /// Overrides the header name of one logical field.
    pub fn set(&mut self, key: &str, header: &str) -> Result<(), IngestError> {
        let slot = match key {
            "company_id" => &mut self.company_id,
            "entry_id" => &mut self.entry_id,
            "date" => &mut self.date,
            "account_id" => &mut self.account_id,
            "account_name" => &mut self.account_name,
            "amount" => &mut self.amount,
            "side" => &mut self.side,
            other => return Err(IngestError::UnknownColumnKey(other.to_string())),
        };
        *slot = header.to_string();
        Ok(())
    }

    /// Applies a `key=value` override as passed on the command line.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), IngestError> {
        let (key, header) = spec
            .split_once('=')
            .ok_or_else(|| IngestError::UnknownColumnKey(spec.to_string()))?;
        self.set(key.trim(), header.trim())
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestConfig {
    pub columns: ColumnMap,
    /// Extra side tokens, matched case-insensitively. `D` and `C` are always accepted.
    pub side_aliases: BTreeMap<String, Side>,
    /// Company id used when the file has no company column.
    pub default_company: Option<String>,
}

impl IngestConfig {
    pub fn add_side_alias(&mut self, spec: &str) -> Result<(), IngestError> {
        let (token, side) = spec
            .split_once('=')
            .ok_or_else(|| IngestError::InvalidAlias(spec.to_string()))?;
        let side = match side.trim().to_ascii_uppercase().as_str() {
            "D" => Side::Debit,
            "C" => Side::Credit,
            _ => return Err(IngestError::InvalidAlias(spec.to_string())),
        };
        self.side_aliases
            .insert(token.trim().to_ascii_uppercase(), side);
        Ok(())
    }

    fn parse_side(&self, token: &str) -> Option<Side> {
        let upper = token.trim().to_ascii_uppercase();
        match upper.as_str() {
            "D" => Some(Side::Debit),
            "C" => Some(Side::Credit),
            _ => self.side_aliases.get(&upper).copied(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub lines: usize,
    pub entries: usize,
    pub distinct_accounts: usize,
    pub unbalanced_entries: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Journal {
    pub entries: Vec<JournalEntry>,
    pub stats: IngestStats,
}

struct ColumnIndex {
    company_id: Option<usize>,
    entry_id: usize,
    date: usize,
    account_id: usize,
    account_name: Option<usize>,
    amount: usize,
    side: usize,
}

impl ColumnIndex {
    fn resolve(headers: &csv::StringRecord, map: &ColumnMap, has_default_company: bool) -> Result<Self, IngestError> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let require = |name: &str| find(name).ok_or_else(|| IngestError::MissingColumn(name.to_string()));
        let company_id = find(&map.company_id);
        if company_id.is_none() && !has_default_company {
            return Err(IngestError::MissingColumn(map.company_id.clone()));
        }
        Ok(ColumnIndex {
            company_id,
            entry_id: require(&map.entry_id)?,
            date: require(&map.date)?,
            account_id: require(&map.account_id)?,
            account_name: find(&map.account_name),
            amount: require(&map.amount)?,
            side: require(&map.side)?,
        })
    }
}

/// Streaming reader yielding one validated line at a time.
pub struct LineReader<'c, R: Read> {
    records: csv::StringRecordsIntoIter<R>,
    index: ColumnIndex,
    config: &'c IngestConfig,
}

impl<'c, R: Read> LineReader<'c, R> {
    pub fn new(source: R, config: &'c IngestConfig) -> Result<Self, IngestError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(source);
        let headers = reader.headers().map_err(csv_error)?.clone();
        if headers.is_empty() {
            return Err(IngestError::NoRecords);
        }
        let index = ColumnIndex::resolve(&headers, &config.columns, config.default_company.is_some())?;
        Ok(LineReader {
            records: reader.into_records(),
            index,
            config,
        })
    }

    fn convert(&self, record: &csv::StringRecord) -> Result<JournalEntryLine, IngestError> {
        let line = record.position().map_or(0, |p| p.line());
        let idx = &self.index;
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let malformed = |field: &'static str, value: &str, reason: &str| IngestError::Malformed {
            line,
            field,
            value: value.to_string(),
            reason: reason.to_string(),
        };

        let company_id = match idx.company_id {
            Some(i) => field(i).to_string(),
            None => self.config.default_company.clone().unwrap_or_default(),
        };
        if company_id.is_empty() {
            return Err(malformed("company_id", "", "must be non-empty"));
        }
        let entry_id = field(idx.entry_id);
        if entry_id.is_empty() {
            return Err(malformed("entry_id", entry_id, "must be non-empty"));
        }
        let account_id = field(idx.account_id);
        if account_id.is_empty() {
            return Err(malformed("account_id", account_id, "must be non-empty"));
        }
        let raw_date = field(idx.date);
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
            .map_err(|e| malformed("date", raw_date, &e.to_string()))?;
        let raw_amount = field(idx.amount);
        let amount = Decimal::from_str(raw_amount)
            .map_err(|e| malformed("amount", raw_amount, &e.to_string()))?;
        if amount.is_sign_negative() && !amount.is_zero() {
            return Err(malformed("amount", raw_amount, "must be non-negative"));
        }
        let raw_side = field(idx.side);
        let side = self
            .config
            .parse_side(raw_side)
            .ok_or_else(|| malformed("side", raw_side, "unknown side token"))?;
        let account_name = idx
            .account_name
            .map(field)
            .filter(|s| !s.is_empty())
            .map(str::to_string);

        Ok(JournalEntryLine {
            company_id,
            entry_id: entry_id.to_string(),
            date,
            account_id: account_id.to_string(),
            account_name,
            amount: amount.normalize_sign(),
            side,
        })
    }
}

trait NormalizeSign {
    fn normalize_sign(self) -> Self;
}

impl NormalizeSign for Decimal {
    // "-0.00" parses with the sign bit set; keep zeros unsigned.
    fn normalize_sign(mut self) -> Self {
        if self.is_zero() {
            self.set_sign_positive(true);
        }
        self
    }
}

impl<R: Read> Iterator for LineReader<'_, R> {
    type Item = Result<JournalEntryLine, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        let record = match self.records.next()? {
            Ok(r) => r,
            Err(e) => return Some(Err(csv_error(e))),
        };
        Some(self.convert(&record))
    }
}

fn csv_error(e: csv::Error) -> IngestError {
    let line = e.position().map_or(0, |p| p.line());
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("wrong column count: expected {expected_len}, found {len}")
        }
        _ => e.to_string(),
    };
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IngestError::Io(io),
        _ => IngestError::Csv { line, message },
    }
}

/// Groups lines into entries by `(company_id, entry_id)`.
pub fn group_lines<I>(lines: I) -> Journal
where
    I: IntoIterator<Item = JournalEntryLine>,
{
    let mut order: Vec<Vec<JournalEntryLine>> = Vec::new();
    let mut slots: HashMap<(String, String), usize> = HashMap::new();
    let mut accounts = BTreeSet::new();
    let mut n_lines = 0;
    for line in lines {
        n_lines += 1;
        accounts.insert((line.company_id.clone(), line.account_id.clone()));
        let key = (line.company_id.clone(), line.entry_id.clone());
        let slot = *slots.entry(key).or_insert_with(|| {
            order.push(Vec::new());
            order.len() - 1
        });
        order[slot].push(line);
    }
    let entries: Vec<JournalEntry> = order
        .into_iter()
        .filter_map(JournalEntry::from_lines)
        .collect();
    let stats = IngestStats {
        lines: n_lines,
        entries: entries.len(),
        distinct_accounts: accounts.len(),
        unbalanced_entries: entries.iter().filter(|e| !e.balanced).count(),
    };
    Journal { entries, stats }
}

/// Parses a whole journal CSV and groups it into entries.
pub fn parse_journal_csv<R: Read>(source: R, config: &IngestConfig) -> Result<Journal, IngestError> {
    let reader = LineReader::new(source, config)?;
    let lines = reader.collect::<Result<Vec<_>, _>>()?;
    if lines.is_empty() {
        return Err(IngestError::NoRecords);
    }
    Ok(group_lines(lines))
}

/// Writes entries in the default column layout, one row per line.
pub fn write_journal_csv<'a, W, I>(sink: W, entries: I) -> Result<(), IngestError>
where
    W: Write,
    I: IntoIterator<Item = &'a JournalEntry>,
{
    let mut writer = csv::Writer::from_writer(sink);
    let cols = ColumnMap::default();
    writer
        .write_record([
            &cols.company_id,
            &cols.entry_id,
            &cols.date,
            &cols.account_id,
            &cols.account_name,
            &cols.amount,
            &cols.side,
        ])
        .map_err(csv_error)?;
    for entry in entries {
        for l in &entry.lines {
            let date = l.date.format("%Y-%m-%d").to_string();
            let amount = l.amount.to_string();
            writer
                .write_record([
                    l.company_id.as_str(),
                    l.entry_id.as_str(),
                    date.as_str(),
                    l.account_id.as_str(),
                    l.account_name.as_deref().unwrap_or(""),
                    amount.as_str(),
                    l.side.token(),
                ])
                .map_err(csv_error)?;
        }
    }
    writer.flush()?;
    Ok(())
}
