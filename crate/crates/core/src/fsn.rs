//! Financial statements network construction and its JSON file format.
//!
//! Every distinct booking pattern (the set of debited accounts paired with the
//! set of credited accounts) becomes one business-process (BP) node; every
//! account becomes one financial-account (FA) node. A BP node is linked to
//! each account taking part in its pattern. Node order is canonical: FA nodes
//! sorted by account id, BP nodes sorted by pattern.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{JournalEntry, Side};

pub const SCHEMA_V1: &str = "fsn/1";
pub const DEFAULT_NODE_CAP: usize = 100_000;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("empty network")]
    Empty,
    #[error("entries belong to more than one company ({0:?} and {1:?})")]
    MixedCompanies(String, String),
    #[error("cap exceeded: network has more than {cap} nodes")]
    CapExceeded { cap: usize, nodes: usize },
    #[error("unsupported schema {found:?}, expected {SCHEMA_V1:?}")]
    Schema { found: String },
    #[error("bipartiteness violation in edge {index} {edge:?}: {reason}")]
    NotBipartite {
        index: usize,
        edge: Vec<u64>,
        reason: String,
    },
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("malformed network json: {0}")]
    Json(#[from] serde_json::Error),
}

/// A booking pattern in canonical form: both sides sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pattern {
    pub debit: Vec<String>,
    pub credit: Vec<String>,
}

impl Pattern {
    pub fn new<D, C, S>(debit: D, credit: C) -> Self
    where
        D: IntoIterator<Item = S>,
        C: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let debit: BTreeSet<String> = debit.into_iter().map(Into::into).collect();
        let credit: BTreeSet<String> = credit.into_iter().map(Into::into).collect();
        Pattern {
            debit: debit.into_iter().collect(),
            credit: credit.into_iter().collect(),
        }
    }

    pub fn of_entry(entry: &JournalEntry, mode: PatternMode) -> Self {
        let side_accounts = |side: Side| {
            entry
                .lines
                .iter()
                .filter(move |l| l.side == side)
                .map(|l| l.account_id.as_str())
        };
        match mode {
            PatternMode::Directed => Pattern::new(side_accounts(Side::Debit), side_accounts(Side::Credit)),
            PatternMode::Undirected => Pattern::new(
                entry.lines.iter().map(|l| l.account_id.as_str()),
                std::iter::empty(),
            ),
        }
    }

    /// Distinct accounts on either side, sorted.
    pub fn accounts(&self) -> BTreeSet<&str> {
        self.debit
            .iter()
            .chain(&self.credit)
            .map(String::as_str)
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.debit.is_empty() && self.credit.is_empty()
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "D[{}] C[{}]", self.debit.join(" "), self.credit.join(" "))
    }
}

/// How journal entries are mapped to patterns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum PatternMode {
    /// Debited and credited accounts are kept apart.
    #[default]
    Directed,
    /// A single account set, ignoring flow direction.
    Undirected,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaNode {
    pub id: String,
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpNode {
    pub pattern: Pattern,
    pub count: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub pattern_mode: PatternMode,
    /// Maximum |FA| + |BP|; `None` disables the check.
    pub node_cap: Option<usize>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            pattern_mode: PatternMode::Directed,
            node_cap: Some(DEFAULT_NODE_CAP),
        }
    }
}

/// Bipartite network of one company. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinancialStatementsNetwork {
    company: String,
    fa: Vec<FaNode>,
    bp: Vec<BpNode>,
    /// `(bp_index, fa_index)`, sorted and unique.
    edges: Vec<(u32, u32)>,
    /// Total amount booked on each edge, parallel to `edges`. Empty when unknown.
    edge_amounts: Vec<Decimal>,
}

impl FinancialStatementsNetwork {
    pub fn company(&self) -> &str {
        &self.company
    }

    pub fn fa_nodes(&self) -> &[FaNode] {
        &self.fa
    }

    pub fn bp_nodes(&self) -> &[BpNode] {
        &self.bp
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn edge_amounts(&self) -> &[Decimal] {
        &self.edge_amounts
    }

    pub fn n_fa(&self) -> usize {
        self.fa.len()
    }

    pub fn n_bp(&self) -> usize {
        self.bp.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.fa.len() + self.bp.len()
    }

    /// Number of journal entries the network was built from.
    pub fn n_entries(&self) -> u64 {
        self.bp.iter().map(|b| b.count).sum()
    }
}

#[derive(Default)]
struct PatternAcc {
    count: u64,
    amounts: BTreeMap<String, Decimal>,
}

/// Builds the network of one company from its journal entries.
pub fn build_network<'a, I>(entries: I, options: &BuildOptions) -> Result<FinancialStatementsNetwork, NetworkError>
where
    I: IntoIterator<Item = &'a JournalEntry>,
{
    let mut company: Option<String> = None;
    let mut accounts: BTreeMap<String, Option<String>> = BTreeMap::new();
    let mut patterns: HashMap<Pattern, PatternAcc> = HashMap::new();
    let check_cap = |accounts: usize, patterns: usize| match options.node_cap {
        Some(cap) if accounts + patterns > cap => Err(NetworkError::CapExceeded {
            cap,
            nodes: accounts + patterns,
        }),
        _ => Ok(()),
    };

    for entry in entries {
        match &company {
            None => company = Some(entry.company_id.clone()),
            Some(c) if *c != entry.company_id => {
                return Err(NetworkError::MixedCompanies(c.clone(), entry.company_id.clone()))
            }
            Some(_) => {}
        }
        for line in &entry.lines {
            let name = accounts.entry(line.account_id.clone()).or_default();
            if name.is_none() {
                name.clone_from(&line.account_name);
            }
        }
        let pattern = Pattern::of_entry(entry, options.pattern_mode);
        if pattern.is_empty() {
            continue;
        }
        let acc = patterns.entry(pattern).or_default();
        acc.count += 1;
        for line in &entry.lines {
            *acc.amounts.entry(line.account_id.clone()).or_default() += line.amount;
        }
        check_cap(accounts.len(), patterns.len())?;
    }

    let company = company.ok_or(NetworkError::Empty)?;
    if patterns.is_empty() {
        return Err(NetworkError::Empty);
    }

    let fa: Vec<FaNode> = accounts
        .into_iter()
        .map(|(id, name)| FaNode { id, name })
        .collect();
    let fa_index: HashMap<&str, u32> = fa
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.as_str(), i as u32))
        .collect();

    let mut sorted: Vec<(Pattern, PatternAcc)> = patterns.into_iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));

    let mut edges = Vec::new();
    let mut edge_amounts = Vec::new();
    let mut bp = Vec::with_capacity(sorted.len());
    for (b, (pattern, acc)) in sorted.into_iter().enumerate() {
        // accounts() is sorted, so edges come out sorted by (bp, fa).
        for account in pattern.accounts() {
            edges.push((b as u32, fa_index[account]));
            edge_amounts.push(acc.amounts.get(account).copied().unwrap_or_default());
        }
        bp.push(BpNode {
            pattern,
            count: acc.count,
        });
    }

    Ok(FinancialStatementsNetwork {
        company,
        fa,
        bp,
        edges,
        edge_amounts,
    })
}

#[derive(Serialize, Deserialize)]
struct FaJson {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct BpJson {
    pattern: Pattern,
    count: u64,
}

#[derive(Serialize, Deserialize)]
struct NetworkJson {
    schema: String,
    company: String,
    fa: Vec<FaJson>,
    bp: Vec<BpJson>,
    edges: Vec<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    amounts: Vec<Decimal>,
}

/// Serializes to the `fsn/1` JSON layout, newline-terminated.
pub fn network_to_json(net: &FinancialStatementsNetwork) -> Vec<u8> {
    let doc = NetworkJson {
        schema: SCHEMA_V1.to_string(),
        company: net.company.clone(),
        fa: net
            .fa
            .iter()
            .map(|n| FaJson {
                id: n.id.clone(),
                name: n.name.clone(),
            })
            .collect(),
        bp: net
            .bp
            .iter()
            .map(|n| BpJson {
                pattern: n.pattern.clone(),
                count: n.count,
            })
            .collect(),
        edges: net
            .edges
            .iter()
            .map(|&(b, f)| vec![b as u64, f as u64])
            .collect(),
        amounts: net.edge_amounts.clone(),
    };
    let mut out = serde_json::to_vec(&doc).expect("network json is always serializable");
    out.push(b'\n');
    out
}

/// Parses and validates an `fsn/1` document. Node order is canonicalized on load.
pub fn network_from_json(bytes: &[u8]) -> Result<FinancialStatementsNetwork, NetworkError> {
    let doc: serde_json::Value = serde_json::from_slice(bytes)?;
    match doc.get("schema").and_then(|s| s.as_str()) {
        Some(SCHEMA_V1) => {}
        Some(other) => return Err(NetworkError::Schema { found: other.to_string() }),
        None => return Err(NetworkError::Schema { found: String::new() }),
    }
    let doc: NetworkJson = serde_json::from_value(doc)?;

    let mut fa_order: Vec<usize> = (0..doc.fa.len()).collect();
    fa_order.sort_by(|&a, &b| doc.fa[a].id.cmp(&doc.fa[b].id));
    for w in fa_order.windows(2) {
        if doc.fa[w[0]].id == doc.fa[w[1]].id {
            return Err(NetworkError::Invalid(format!("duplicate FA id {:?}", doc.fa[w[0]].id)));
        }
    }
    let mut fa_remap = vec![0u32; doc.fa.len()];
    for (new, &old) in fa_order.iter().enumerate() {
        fa_remap[old] = new as u32;
    }

    let mut bp_order: Vec<usize> = (0..doc.bp.len()).collect();
    bp_order.sort_by(|&a, &b| doc.bp[a].pattern.cmp(&doc.bp[b].pattern));
    for w in bp_order.windows(2) {
        if doc.bp[w[0]].pattern == doc.bp[w[1]].pattern {
            return Err(NetworkError::Invalid(format!(
                "pattern {} appears as more than one BP node",
                doc.bp[w[0]].pattern
            )));
        }
    }
    let mut bp_remap = vec![0u32; doc.bp.len()];
    for (new, &old) in bp_order.iter().enumerate() {
        bp_remap[old] = new as u32;
    }

    let fa_ids: BTreeSet<&str> = doc.fa.iter().map(|n| n.id.as_str()).collect();
    for node in &doc.bp {
        if node.pattern.is_empty() {
            return Err(NetworkError::Invalid("BP node with empty pattern".into()));
        }
        let canonical = Pattern::new(node.pattern.debit.iter().cloned(), node.pattern.credit.iter().cloned());
        if canonical != node.pattern {
            return Err(NetworkError::Invalid(format!("pattern {} is not sorted and unique", node.pattern)));
        }
        if let Some(missing) = node.pattern.accounts().into_iter().find(|a| !fa_ids.contains(a)) {
            return Err(NetworkError::Invalid(format!("pattern references unknown account {missing:?}")));
        }
    }

    if !doc.amounts.is_empty() && doc.amounts.len() != doc.edges.len() {
        return Err(NetworkError::Invalid("amounts must be parallel to edges".into()));
    }

    let mut edges: Vec<((u32, u32), Decimal)> = Vec::with_capacity(doc.edges.len());
    for (index, edge) in doc.edges.iter().enumerate() {
        let violation = |reason: &str| NetworkError::NotBipartite {
            index,
            edge: edge.clone(),
            reason: reason.to_string(),
        };
        let [b, f] = edge[..] else {
            return Err(violation("edge must be a [bp_idx, fa_idx] pair"));
        };
        if b as usize >= doc.bp.len() {
            return Err(violation("first endpoint is not a BP node"));
        }
        if f as usize >= doc.fa.len() {
            return Err(violation("second endpoint is not an FA node"));
        }
        let account = doc.fa[f as usize].id.as_str();
        if !doc.bp[b as usize].pattern.accounts().contains(account) {
            return Err(violation("FA node does not take part in the BP pattern"));
        }
        let amount = doc.amounts.get(index).copied().unwrap_or_default();
        edges.push(((bp_remap[b as usize], fa_remap[f as usize]), amount));
    }
    edges.sort_by_key(|e| e.0);
    if let Some(w) = edges.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(NetworkError::Invalid(format!("duplicate edge {:?}", w[0].0)));
    }

    let mut fa_slots: Vec<Option<FaJson>> = doc.fa.into_iter().map(Some).collect();
    let fa = fa_order
        .iter()
        .map(|&i| {
            let n = fa_slots[i].take().expect("each index visited once");
            FaNode { id: n.id, name: n.name }
        })
        .collect();
    let mut bp_slots: Vec<Option<BpJson>> = doc.bp.into_iter().map(Some).collect();
    let bp = bp_order
        .iter()
        .map(|&i| {
            let n = bp_slots[i].take().expect("each index visited once");
            BpNode {
                pattern: n.pattern,
                count: n.count,
            }
        })
        .collect();
    let keep_amounts = !doc.amounts.is_empty();
    let (edges, amounts): (Vec<_>, Vec<_>) = edges.into_iter().unzip();

    Ok(FinancialStatementsNetwork {
        company: doc.company,
        fa,
        bp,
        edges,
        edge_amounts: if keep_amounts { amounts } else { Vec::new() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_journal_csv, IngestConfig};

    fn journal(rows: &[(&str, &str, &str)]) -> Vec<JournalEntry> {
        let mut text = String::from("company_id,entry_id,date,account_id,amount,side\n");
        for (entry, account, side) in rows {
            text.push_str(&format!("co,{entry},2023-01-01,{account},10,{side}\n"));
        }
        parse_journal_csv(text.as_bytes(), &IngestConfig::default())
            .unwrap()
            .entries
    }

    #[test]
    fn repeated_sale_pattern_is_one_bp_node() {
        let entries = journal(&[
            ("S1", "trade_receivables", "D"),
            ("S1", "revenue", "C"),
            ("S2", "revenue", "C"),
            ("S2", "trade_receivables", "D"),
        ]);
        let net = build_network(&entries, &BuildOptions::default()).unwrap();
        assert_eq!(net.n_fa(), 2);
        assert_eq!(net.n_bp(), 1);
        assert_eq!(net.bp_nodes()[0].count, 2);
        assert_eq!(net.edges().len(), 2);
        assert_eq!(net.edge_amounts(), [Decimal::from(20), Decimal::from(20)]);
    }

    #[test]
    fn orientation_distinguishes_patterns() {
        let entries = journal(&[("E1", "A", "D"), ("E1", "B", "C"), ("E2", "B", "D"), ("E2", "A", "C")]);
        let net = build_network(&entries, &BuildOptions::default()).unwrap();
        assert_eq!((net.n_fa(), net.n_bp()), (2, 2));

        let undirected = BuildOptions {
            pattern_mode: PatternMode::Undirected,
            ..Default::default()
        };
        let net = build_network(&entries, &undirected).unwrap();
        assert_eq!((net.n_fa(), net.n_bp()), (2, 1));
    }

    #[test]
    fn empty_and_mixed_company() {
        let none: Vec<JournalEntry> = Vec::new();
        assert!(matches!(build_network(&none, &BuildOptions::default()), Err(NetworkError::Empty)));

        let mut entries = journal(&[("E1", "A", "D"), ("E1", "B", "C")]);
        let mut other = entries[0].clone();
        other.company_id = "other".into();
        for l in &mut other.lines {
            l.company_id = "other".into();
        }
        entries.push(other);
        assert!(matches!(
            build_network(&entries, &BuildOptions::default()),
            Err(NetworkError::MixedCompanies(..))
        ));
    }

    #[test]
    fn node_cap() {
        let entries = journal(&[("E1", "A", "D"), ("E1", "B", "C"), ("E2", "C", "D"), ("E2", "A", "C")]);
        let capped = BuildOptions {
            node_cap: Some(4),
            ..Default::default()
        };
        let err = build_network(&entries, &capped).unwrap_err();
        assert!(err.to_string().contains("cap exceeded"), "{err}");
        let open = BuildOptions {
            node_cap: None,
            ..Default::default()
        };
        assert_eq!(build_network(&entries, &open).unwrap().n_nodes(), 5);
    }

    #[test]
    fn account_in_both_sides_yields_one_edge() {
        let entries = journal(&[("E1", "A", "D"), ("E1", "A", "C")]);
        let net = build_network(&entries, &BuildOptions::default()).unwrap();
        assert_eq!(net.edges(), [(0, 0)]);
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let entries = journal(&[("E1", "A", "D"), ("E1", "B", "C"), ("E2", "C", "D"), ("E2", "A", "C")]);
        let net = build_network(&entries, &BuildOptions::default()).unwrap();
        let bytes = network_to_json(&net);
        let back = network_from_json(&bytes).unwrap();
        assert_eq!(back, net);
        assert_eq!(network_to_json(&back), bytes);
    }

    #[test]
    fn json_rejects_bad_documents() {
        let wrong_schema = br#"{"schema":"fsn/2","company":"c","fa":[],"bp":[],"edges":[]}"#;
        assert!(matches!(network_from_json(wrong_schema), Err(NetworkError::Schema { .. })));

        // Edge [1,0] points its BP slot at index 1, which only exists among FA nodes.
        let fa_fa = br#"{"schema":"fsn/1","company":"c","fa":[{"id":"A"},{"id":"B"}],
            "bp":[{"pattern":{"debit":["A"],"credit":["B"]},"count":1}],"edges":[[0,0],[1,0]]}"#;
        assert!(matches!(network_from_json(fa_fa), Err(NetworkError::NotBipartite { index: 1, .. })));

        let not_in_pattern = br#"{"schema":"fsn/1","company":"c","fa":[{"id":"A"},{"id":"B"}],
            "bp":[{"pattern":{"debit":["A"],"credit":[]},"count":1}],"edges":[[0,1]]}"#;
        assert!(matches!(network_from_json(not_in_pattern), Err(NetworkError::NotBipartite { .. })));

        let triple = br#"{"schema":"fsn/1","company":"c","fa":[{"id":"A"}],
            "bp":[{"pattern":{"debit":["A"],"credit":[]},"count":1}],"edges":[[0,0,0]]}"#;
        assert!(matches!(network_from_json(triple), Err(NetworkError::NotBipartite { .. })));

        let dup = br#"{"schema":"fsn/1","company":"c","fa":[{"id":"A"}],
            "bp":[{"pattern":{"debit":["A"],"credit":[]},"count":1}],"edges":[[0,0],[0,0]]}"#;
        assert!(matches!(network_from_json(dup), Err(NetworkError::Invalid(_))));
    }

    #[test]
    fn json_loads_edgeless_network_and_canonicalizes_order() {
        let edgeless = br#"{"schema":"fsn/1","company":"c","fa":[{"id":"A"}],
            "bp":[{"pattern":{"debit":["A"],"credit":[]},"count":1}],"edges":[]}"#;
        let net = network_from_json(edgeless).unwrap();
        assert_eq!((net.n_fa(), net.n_bp(), net.edges().len()), (1, 1, 0));

        let shuffled = br#"{"schema":"fsn/1","company":"c","fa":[{"id":"B"},{"id":"A"}],
            "bp":[{"pattern":{"debit":["B"],"credit":[]},"count":1},
                  {"pattern":{"debit":["A"],"credit":[]},"count":3}],"edges":[[0,0],[1,1]]}"#;
        let net = network_from_json(shuffled).unwrap();
        assert_eq!(net.fa_nodes()[0].id, "A");
        assert_eq!(net.bp_nodes()[0].count, 3);
        assert_eq!(net.edges(), [(0, 0), (1, 1)]);
    }
}
