//! Seeded synthetic journals.
//!
//! Each account draw opens a not-yet-used account with probability
//! `account_open_rate`; otherwise it picks among accounts already in use with
//! probability proportional to `(pattern degree + 1)^attachment_bias`, so
//! frequently used accounts attract more new patterns. After the first entry,
//! each entry either replays an earlier pattern verbatim or, with probability
//! `pattern_mutation_rate`, perturbs one account of an earlier pattern: the
//! account is replaced, or one account is added or dropped.

use std::collections::HashSet;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{write_journal_csv, IngestError, JournalEntry, JournalEntryLine, Side};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error("accounts_per_entry upper bound {max} exceeds n_accounts {n_accounts}")]
    TooManyAccountsPerEntry { max: usize, n_accounts: usize },
    #[error("a cohort needs at least one company")]
    NoCompanies,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Write(#[from] IngestError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub company_id: String,
    pub n_accounts: usize,
    pub n_entries: usize,
    pub attachment_bias: f64,
    pub pattern_mutation_rate: f64,
    /// Probability that an account draw opens an unused account, while any remain.
    pub account_open_rate: f64,
    /// Inclusive bounds on the number of distinct accounts per new pattern.
    pub accounts_per_entry: (usize, usize),
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            company_id: "C001".into(),
            n_accounts: 300,
            n_entries: 2000,
            attachment_bias: 1.0,
            pattern_mutation_rate: 0.3,
            account_open_rate: 0.05,
            accounts_per_entry: (2, 6),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let (lo, hi) = self.accounts_per_entry;
        if self.n_accounts == 0 || self.n_entries == 0 {
            return Err(SynthError::Config("n_accounts and n_entries must be at least 1".into()));
        }
        if lo == 0 || lo > hi {
            return Err(SynthError::Config(format!("accounts_per_entry {lo}..{hi} is not a valid range")));
        }
        if hi > self.n_accounts {
            return Err(SynthError::TooManyAccountsPerEntry {
                max: hi,
                n_accounts: self.n_accounts,
            });
        }
        if !(self.attachment_bias >= 0.0 && self.attachment_bias.is_finite()) {
            return Err(SynthError::Config("attachment_bias must be a finite value ≥ 0".into()));
        }
        if !(0.0..=1.0).contains(&self.pattern_mutation_rate) {
            return Err(SynthError::Config("pattern_mutation_rate must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.account_open_rate) {
            return Err(SynthError::Config("account_open_rate must lie in [0, 1]".into()));
        }
        if self.company_id.is_empty() {
            return Err(SynthError::Config("company_id must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct RawPattern {
    debit: Vec<usize>,
    credit: Vec<usize>,
}

impl RawPattern {
    fn canonical(&self) -> (Vec<usize>, Vec<usize>) {
        let mut d = self.debit.clone();
        let mut c = self.credit.clone();
        d.sort_unstable();
        c.sort_unstable();
        (d, c)
    }

    fn accounts(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.debit.iter().chain(&self.credit).copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Perturbation {
    Replace,
    Add,
    Drop,
}

/// Iterator over the entries of one synthetic company.
pub struct SyntheticJournal {
    config: SynthConfig,
    rng: ChaCha8Rng,
    amounts: LogNormal<f64>,
    degree: Vec<u64>,
    weights: Vec<f64>,
    /// Accounts `0..opened` have been used.
    opened: usize,
    patterns: Vec<RawPattern>,
    seen: HashSet<(Vec<usize>, Vec<usize>)>,
    emitted: usize,
    start: NaiveDate,
    id_width: usize,
    account_width: usize,
}

pub fn generate_company(config: &SynthConfig) -> Result<SyntheticJournal, SynthError> {
    config.validate()?;
    Ok(SyntheticJournal {
        config: config.clone(),
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        amounts: LogNormal::new(6.0, 1.5).expect("constant parameters are valid"),
        degree: vec![0; config.n_accounts],
        weights: vec![1.0; config.n_accounts],
        opened: 0,
        patterns: Vec::new(),
        seen: HashSet::new(),
        emitted: 0,
        start: NaiveDate::from_ymd_opt(2023, 1, 1).expect("valid date"),
        id_width: config.n_entries.to_string().len().max(6),
        account_width: config.n_accounts.to_string().len().max(4),
    })
}

impl SyntheticJournal {
    /// Opens an unused account or makes a degree-biased draw among used ones,
    /// never returning an account in `exclude`.
    fn draw_account(&mut self, exclude: &[usize]) -> Option<usize> {
        let unused = (self.opened < self.config.n_accounts).then_some(self.opened);
        let open = self.rng.random::<f64>() < self.config.account_open_rate;
        let total: f64 = (0..self.opened)
            .filter(|a| !exclude.contains(a))
            .map(|a| self.weights[a])
            .sum();
        if open || total <= 0.0 {
            if unused.is_some() {
                self.opened += 1;
                return unused;
            }
            if total <= 0.0 {
                return None;
            }
        }
        let mut target = self.rng.random::<f64>() * total;
        let mut last = None;
        for a in 0..self.opened {
            if exclude.contains(&a) {
                continue;
            }
            last = Some(a);
            target -= self.weights[a];
            if target < 0.0 {
                return Some(a);
            }
        }
        last
    }

    fn fresh_pattern(&mut self) -> RawPattern {
        let (lo, hi) = self.config.accounts_per_entry;
        let k = self.rng.random_range(lo..=hi);
        let mut chosen = Vec::with_capacity(k);
        for _ in 0..k {
            let a = self.draw_account(&chosen).expect("k ≤ n_accounts");
            chosen.push(a);
        }
        if k == 1 {
            return RawPattern {
                debit: chosen.clone(),
                credit: chosen,
            };
        }
        let n_debit = self.rng.random_range(1..k);
        let credit = chosen.split_off(n_debit);
        RawPattern { debit: chosen, credit }
    }

    fn mutate(&mut self, parent: &RawPattern) -> RawPattern {
        let mut child = parent.clone();
        // A single-account pattern books one account on both sides.
        if parent.debit == parent.credit {
            if let Some(replacement) = self.draw_account(&parent.debit) {
                child.debit = vec![replacement];
                child.credit = vec![replacement];
            }
            return child;
        }
        let (lo, hi) = self.config.accounts_per_entry;
        let size = parent.debit.len() + parent.credit.len();
        let mut ops = vec![Perturbation::Replace];
        if size < hi {
            ops.push(Perturbation::Add);
        }
        if size > lo.max(2) {
            ops.push(Perturbation::Drop);
        }
        let op = ops[self.rng.random_range(0..ops.len())];
        let slot = self.rng.random_range(0..size);
        let on_debit = slot < parent.debit.len();
        let side = if on_debit { &mut child.debit } else { &mut child.credit };
        let index = if on_debit { slot } else { slot - parent.debit.len() };
        match op {
            Perturbation::Drop => {
                // Keep at least one account per side.
                if side.len() > 1 {
                    side.remove(index);
                }
            }
            Perturbation::Replace | Perturbation::Add => {
                let Some(account) = self.draw_account(&parent.accounts()) else {
                    return child;
                };
                let side = if on_debit { &mut child.debit } else { &mut child.credit };
                if op == Perturbation::Replace {
                    side[index] = account;
                } else {
                    side.push(account);
                }
            }
        }
        child
    }

    fn next_pattern(&mut self) -> RawPattern {
        if self.patterns.is_empty() {
            return self.fresh_pattern();
        }
        let parent = self.patterns[self.rng.random_range(0..self.patterns.len())].clone();
        if self.rng.random::<f64>() < self.config.pattern_mutation_rate {
            self.mutate(&parent)
        } else {
            parent
        }
    }

    fn record(&mut self, pattern: &RawPattern) {
        if self.seen.insert(pattern.canonical()) {
            for a in pattern.accounts() {
                self.degree[a] += 1;
                self.weights[a] = ((self.degree[a] + 1) as f64).powf(self.config.attachment_bias);
            }
            self.patterns.push(pattern.clone());
        }
    }

    /// Splits `total` cents into `parts` positive-or-zero shares.
    fn split_cents(&mut self, total: i64, parts: usize) -> Vec<i64> {
        if parts == 1 {
            return vec![total];
        }
        let weights: Vec<f64> = (0..parts).map(|_| self.rng.random::<f64>() + 0.05).collect();
        let sum: f64 = weights.iter().sum();
        let mut shares: Vec<i64> = weights
            .iter()
            .map(|w| ((w / sum) * total as f64).floor() as i64)
            .collect();
        let assigned: i64 = shares.iter().sum();
        shares[0] += total - assigned;
        shares
    }

    fn account_id(&self, a: usize) -> String {
        format!("A{:0width$}", a + 1, width = self.account_width)
    }
}

impl Iterator for SyntheticJournal {
    type Item = JournalEntry;

    fn next(&mut self) -> Option<JournalEntry> {
        if self.emitted >= self.config.n_entries {
            return None;
        }
        let pattern = self.next_pattern();
        self.record(&pattern);
        let cents = ((self.amounts.sample(&mut self.rng) * 100.0).round() as i64).max(1);
        let debit_shares = self.split_cents(cents, pattern.debit.len());
        let credit_shares = self.split_cents(cents, pattern.credit.len());

        let entry_id = format!("E{:0width$}", self.emitted + 1, width = self.id_width);
        let day = (self.emitted as u64 * 365) / self.config.n_entries as u64;
        let date = self.start + Days::new(day);
        let mut lines = Vec::with_capacity(pattern.debit.len() + pattern.credit.len());
        for (side, accounts, shares) in [
            (Side::Debit, &pattern.debit, &debit_shares),
            (Side::Credit, &pattern.credit, &credit_shares),
        ] {
            for (&a, &share) in accounts.iter().zip(shares) {
                let account_id = self.account_id(a);
                lines.push(JournalEntryLine {
                    company_id: self.config.company_id.clone(),
                    entry_id: entry_id.clone(),
                    date,
                    account_name: Some(format!("Account {}", &account_id[1..])),
                    account_id,
                    amount: Decimal::new(share, 2),
                    side,
                });
            }
        }
        self.emitted += 1;
        Some(JournalEntry::from_lines(lines).expect("lines share company and entry id"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub base: SynthConfig,
    pub n_companies: usize,
    pub industries: Vec<String>,
    /// Inclusive bounds for the log-uniform spread of entry counts.
    pub entries_range: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCompany {
    pub config: SynthConfig,
    pub industry: String,
}

fn mix_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 step
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-company configurations: sizes log-uniform over `entries_range`,
/// industries assigned round-robin.
pub fn plan_cohort(spec: &CohortSpec) -> Result<Vec<SyntheticCompany>, SynthError> {
    if spec.n_companies == 0 {
        return Err(SynthError::NoCompanies);
    }
    if spec.industries.is_empty() {
        return Err(SynthError::Config("at least one industry label is required".into()));
    }
    let (lo, hi) = spec.entries_range;
    if lo == 0 || lo > hi {
        return Err(SynthError::Config(format!("entries range {lo}..{hi} is not valid")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.base.seed);
    let width = spec.n_companies.to_string().len().max(3);
    let (ln_lo, ln_hi) = ((lo as f64).ln(), (hi as f64).ln());
    let companies = (0..spec.n_companies)
        .map(|i| {
            let u: f64 = rng.random();
            let n_entries = ((ln_lo + u * (ln_hi - ln_lo)).exp().round() as usize).clamp(lo, hi);
            let config = SynthConfig {
                seed: mix_seed(spec.base.seed, i as u64),
                company_id: format!("C{:0width$}", i + 1),
                n_entries,
                ..spec.base.clone()
            };
            config.validate()?;
            Ok(SyntheticCompany {
                config,
                industry: spec.industries[i % spec.industries.len()].clone(),
            })
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    Ok(companies)
}

pub const DATA_DIR: &str = "data";
pub const INDUSTRY_MAP_FILE: &str = "industry_map.csv";

/// Writes `out/data/<company>.csv` for every company plus `out/industry_map.csv`.
pub fn write_cohort(spec: &CohortSpec, out: &Path) -> Result<Vec<PathBuf>, SynthError> {
    let companies = plan_cohort(spec)?;
    let data = out.join(DATA_DIR);
    fs::create_dir_all(&data)?;
    let mut paths = Vec::with_capacity(companies.len());
    let mut map = csv::Writer::from_path(out.join(INDUSTRY_MAP_FILE)).map_err(csv_io)?;
    map.write_record(["company_id", "industry_code"]).map_err(csv_io)?;
    for company in &companies {
        let path = data.join(format!("{}.csv", company.config.company_id));
        write_company(&company.config, &path)?;
        map.write_record([company.config.company_id.as_str(), company.industry.as_str()])
            .map_err(csv_io)?;
        paths.push(path);
    }
    map.flush()?;
    Ok(paths)
}

pub fn write_company(config: &SynthConfig, path: &Path) -> Result<(), SynthError> {
    let entries: Vec<JournalEntry> = generate_company(config)?.collect();
    let file = BufWriter::new(fs::File::create(path)?);
    write_journal_csv(file, &entries)?;
    Ok(())
}

fn csv_io(e: csv::Error) -> SynthError {
    SynthError::Io(std::io::Error::other(e))
}
