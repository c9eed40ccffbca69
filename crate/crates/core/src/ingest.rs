//! Tag-assignment parsing, transaction grouping, rare-item filtering and the
//! per-user train/test split.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One `(user, item, tag)` event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagAssignment {
    pub user_id: String,
    pub item_id: String,
    pub tag: String,
    pub timestamp: Option<i64>,
}

/// A user annotating one item with a set of tags.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transaction {
    pub user_id: String,
    pub item_id: String,
    pub tags: BTreeSet<String>,
}

impl Transaction {
    pub fn new<I, S>(user_id: impl Into<String>, item_id: impl Into<String>, tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Transaction {
            user_id: user_id.into(),
            item_id: item_id.into(),
            tags: tags.into_iter().map(|t| normalize_tag(t.as_ref())).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusRole {
    Training,
    Testing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub role: CorpusRole,
    pub transactions: Vec<Transaction>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    /// Items per user, in user id order.
    pub fn items_by_user(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut out: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for tx in &self.transactions {
            out.entry(tx.user_id.as_str())
                .or_default()
                .insert(tx.item_id.as_str());
        }
        out
    }

    pub fn distinct_items(&self) -> BTreeSet<&str> {
        self.transactions.iter().map(|t| t.item_id.as_str()).collect()
    }
}

/// Column positions of the fields in a tab-separated row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldLayout {
    pub user: usize,
    pub item: usize,
    pub tag: usize,
    pub timestamp: Option<usize>,
}

impl Default for FieldLayout {
    fn default() -> Self {
        FieldLayout {
            user: 0,
            item: 1,
            tag: 2,
            timestamp: Some(3),
        }
    }
}

impl FieldLayout {
    fn required_fields(&self) -> usize {
        self.user.max(self.item).max(self.tag) + 1
    }
}

/// How the first non-blank line is treated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeaderMode {
    /// Header when the user field is not an integer.
    #[default]
    Auto,
    Present,
    Absent,
}

/// Lowercase and trim. No stemming or synonym merging.
pub fn normalize_tag(raw: &str) -> String {
    raw.trim().to_lowercase()
}

/// Parses tab-separated tag assignments.
///
/// Blank lines are skipped. The first non-blank line is treated as a header
/// when its user field is not numeric. The timestamp column is optional per
/// row; when present it must parse as an integer.
pub fn parse_tag_assignments<R: BufRead>(
    source: R,
    layout: &FieldLayout,
) -> Result<Vec<TagAssignment>> {
    parse_tag_assignments_with(source, layout, HeaderMode::Auto)
}

pub fn parse_tag_assignments_with<R: BufRead>(
    source: R,
    layout: &FieldLayout,
    header: HeaderMode,
) -> Result<Vec<TagAssignment>> {
    let required = layout.required_fields();
    let mut out = Vec::new();
    let mut seen_data_candidate = false;

    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();

        if !seen_data_candidate {
            seen_data_candidate = true;
            let is_header = match header {
                HeaderMode::Present => true,
                HeaderMode::Absent => false,
                HeaderMode::Auto => {
                    let first = fields.get(layout.user).copied().unwrap_or("").trim();
                    first.parse::<i64>().is_err() && fields.len() >= required
                }
            };
            if is_header {
                continue;
            }
        }

        if fields.len() < required {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("expected at least {required} fields, found {}", fields.len()),
            });
        }

        let user_id = fields[layout.user].trim();
        let item_id = fields[layout.item].trim();
        let tag = normalize_tag(fields[layout.tag]);
        for (name, value) in [("user", user_id), ("item", item_id), ("tag", tag.as_str())] {
            if value.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    reason: format!("empty {name} field"),
                });
            }
        }

        let timestamp = match layout.timestamp.and_then(|i| fields.get(i)) {
            Some(raw) if !raw.trim().is_empty() => {
                Some(raw.trim().parse::<i64>().map_err(|_| Error::Parse {
                    line: line_no,
                    reason: format!("timestamp {raw:?} is not an integer"),
                })?)
            }
            _ => None,
        };

        out.push(TagAssignment {
            user_id: user_id.to_string(),
            item_id: item_id.to_string(),
            tag,
            timestamp,
        });
    }
    Ok(out)
}

/// One transaction per distinct `(user, item)` pair, in order of first
/// appearance. Repeated tags collapse.
pub fn group_transactions(assignments: &[TagAssignment]) -> Vec<Transaction> {
    let mut index: HashMap<(&str, &str), usize> = HashMap::new();
    let mut out: Vec<Transaction> = Vec::new();
    for a in assignments {
        let key = (a.user_id.as_str(), a.item_id.as_str());
        let slot = *index.entry(key).or_insert_with(|| {
            out.push(Transaction {
                user_id: a.user_id.clone(),
                item_id: a.item_id.clone(),
                tags: BTreeSet::new(),
            });
            out.len() - 1
        });
        out[slot].tags.insert(a.tag.clone());
    }
    out
}

/// Keeps transactions whose item was tagged by at least `min_taggers`
/// distinct users.
pub fn filter_rare_items(transactions: &[Transaction], min_taggers: usize) -> Result<Vec<Transaction>> {
    if min_taggers == 0 {
        return Err(Error::InvalidArgument("min_taggers must be at least 1".into()));
    }
    let mut taggers: HashMap<&str, HashSet<&str>> = HashMap::new();
    for tx in transactions {
        taggers
            .entry(tx.item_id.as_str())
            .or_default()
            .insert(tx.user_id.as_str());
    }
    Ok(transactions
        .iter()
        .filter(|tx| taggers[tx.item_id.as_str()].len() >= min_taggers)
        .cloned()
        .collect())
}

/// Number of a user's `n` transactions that go to the test side.
///
/// The small epsilon keeps products such as `100 * 0.29` from landing one
/// below the intended integer.
pub fn test_count(n: usize, test_fraction: f64) -> usize {
    ((n as f64) * test_fraction + 1e-9).floor() as usize
}

fn user_seed(seed: u64, user: &str) -> u64 {
    // FNV-1a over the user id, mixed with the run seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in user.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ seed.rotate_left(17)
}

/// Splits every user's transactions independently: `floor(n * test_fraction)`
/// of them, picked by a seeded shuffle, go to testing.
///
/// Both corpora list users in id order and each user's transactions in item
/// id order, so the output depends only on the input set and the seed.
pub fn split_per_user(
    transactions: &[Transaction],
    test_fraction: f64,
    seed: u64,
) -> Result<(Corpus, Corpus)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction must be in [0, 1), got {test_fraction}"
        )));
    }
    let mut by_user: BTreeMap<&str, Vec<&Transaction>> = BTreeMap::new();
    for tx in transactions {
        by_user.entry(tx.user_id.as_str()).or_default().push(tx);
    }

    let mut training = Vec::new();
    let mut testing = Vec::new();
    for (user, mut txs) in by_user {
        txs.sort_by(|a, b| a.item_id.cmp(&b.item_id));
        let n_test = test_count(txs.len(), test_fraction);
        let mut order: Vec<usize> = (0..txs.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(user_seed(seed, user));
        order.shuffle(&mut rng);
        let test_idx: BTreeSet<usize> = order.into_iter().take(n_test).collect();
        for (i, tx) in txs.into_iter().enumerate() {
            if test_idx.contains(&i) {
                testing.push(tx.clone());
            } else {
                training.push(tx.clone());
            }
        }
    }
    Ok((
        Corpus {
            role: CorpusRole::Training,
            transactions: training,
        },
        Corpus {
            role: CorpusRole::Testing,
            transactions: testing,
        },
    ))
}

/// Raw dataset statistics, taken before any filtering.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub tag_assignments: usize,
    pub users: usize,
    pub items: usize,
    pub distinct_tags: usize,
    pub transactions: usize,
}

impl DatasetStats {
    pub fn from_assignments(assignments: &[TagAssignment]) -> Self {
        let users: HashSet<&str> = assignments.iter().map(|a| a.user_id.as_str()).collect();
        let items: HashSet<&str> = assignments.iter().map(|a| a.item_id.as_str()).collect();
        let tags: HashSet<&str> = assignments.iter().map(|a| a.tag.as_str()).collect();
        let pairs: HashSet<(&str, &str)> = assignments
            .iter()
            .map(|a| (a.user_id.as_str(), a.item_id.as_str()))
            .collect();
        DatasetStats {
            tag_assignments: assignments.len(),
            users: users.len(),
            items: items.len(),
            distinct_tags: tags.len(),
            transactions: pairs.len(),
        }
    }
}
