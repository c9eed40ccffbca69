//! User and item profiles.
//!
//! Profiles store counts only. Tag scores, item weights, tag information
//! values and transaction trusts are derived on read, so a new transaction
//! implicitly refreshes every weight and trust that depends on a changed
//! denominator.
//!
//! The per-item weight and per-tagger trust maps are cached on first read.
//! Recording a transaction clears the cache; code that edits the public
//! count fields directly must do so before reading derived values.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Transaction;
use crate::store::ProfileStore;

/// Lazily computed value that never takes part in equality, cloning or
/// serialization.
#[derive(Default)]
struct Derived<T>(OnceLock<T>);

impl<T> Derived<T> {
    fn get_or_init(&self, f: impl FnOnce() -> T) -> &T {
        self.0.get_or_init(f)
    }
}

impl<T> Clone for Derived<T> {
    fn clone(&self) -> Self {
        Derived(OnceLock::new())
    }
}

impl<T> PartialEq for Derived<T> {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl<T> Eq for Derived<T> {}

impl<T> fmt::Debug for Derived<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.0.get().is_some() { "cached" } else { "empty" })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    /// How many of the user's transactions carry each tag.
    pub tag_freq: BTreeMap<String, u64>,
    /// Tags the user gave each item.
    pub items: BTreeMap<String, BTreeSet<String>>,
    #[serde(skip)]
    weights: Derived<BTreeMap<String, f64>>,
}

impl UserProfile {
    pub fn new(user_id: impl Into<String>) -> Self {
        UserProfile {
            user_id: user_id.into(),
            ..Default::default()
        }
    }

    pub fn tag_total(&self) -> u64 {
        self.tag_freq.values().sum()
    }

    pub fn has_item(&self, item: &str) -> bool {
        self.items.contains_key(item)
    }

    /// Share of the user's tag usages that went to `tag`.
    pub fn tag_score(&self, tag: &str) -> Result<f64> {
        match self.tag_freq.get(tag) {
            Some(&f) if f > 0 => Ok(f as f64 / self.tag_total() as f64),
            _ => Err(Error::UndefinedTag {
                profile: format!("user:{}", self.user_id),
                tag: tag.to_string(),
            }),
        }
    }

    /// Sum of the tag scores of the tags the user gave `item`.
    pub fn item_weight(&self, item: &str) -> Result<f64> {
        let tags = self.items.get(item).ok_or_else(|| Error::UnknownItem {
            user: self.user_id.clone(),
            item: item.to_string(),
        })?;
        let total = self.tag_total() as f64;
        Ok(tags.iter().map(|t| self.tag_freq[t] as f64).sum::<f64>() / total)
    }

    /// Weights of all items.
    pub fn item_weights(&self) -> &BTreeMap<String, f64> {
        self.weights.get_or_init(|| {
            let total = self.tag_total() as f64;
            self.items
                .iter()
                .map(|(item, tags)| {
                    let w = tags.iter().map(|t| self.tag_freq[t] as f64).sum::<f64>() / total;
                    (item.clone(), w)
                })
                .collect()
        })
    }

    fn record(&mut self, tx: &Transaction) -> Result<()> {
        if self.items.contains_key(&tx.item_id) {
            return Err(Error::DuplicateTransaction {
                user: tx.user_id.clone(),
                item: tx.item_id.clone(),
            });
        }
        for tag in &tx.tags {
            *self.tag_freq.entry(tag.clone()).or_insert(0) += 1;
        }
        self.items.insert(tx.item_id.clone(), tx.tags.clone());
        self.weights = Derived::default();
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemProfile {
    pub item_id: String,
    /// Tags each user gave this item.
    pub taggers: BTreeMap<String, BTreeSet<String>>,
    /// Number of distinct users who used each tag on this item.
    pub tag_user_count: BTreeMap<String, u64>,
    #[serde(skip)]
    trusts: Derived<BTreeMap<String, f64>>,
}

impl ItemProfile {
    pub fn new(item_id: impl Into<String>) -> Self {
        ItemProfile {
            item_id: item_id.into(),
            ..Default::default()
        }
    }

    pub fn tagger_count(&self) -> usize {
        self.taggers.len()
    }

    fn count_total(&self) -> u64 {
        self.tag_user_count.values().sum()
    }

    /// Distinct-user count of `tag` over the counts of all tags on the item.
    pub fn tag_information_value(&self, tag: &str) -> Result<f64> {
        match self.tag_user_count.get(tag) {
            Some(&s) if s > 0 => Ok(s as f64 / self.count_total() as f64),
            _ => Err(Error::UndefinedTag {
                profile: format!("item:{}", self.item_id),
                tag: tag.to_string(),
            }),
        }
    }

    /// Mean tag information value of the tags `user` gave this item.
    pub fn transaction_trust(&self, user: &str) -> Result<f64> {
        let tags = self.taggers.get(user).ok_or_else(|| Error::UnknownTagger {
            item: self.item_id.clone(),
            user: user.to_string(),
        })?;
        Ok(self.mean_information_value(tags, self.count_total() as f64))
    }

    /// Trust of every stored transaction, by user.
    pub fn transaction_trusts(&self) -> &BTreeMap<String, f64> {
        self.trusts.get_or_init(|| {
            let total = self.count_total() as f64;
            self.taggers
                .iter()
                .map(|(u, tags)| (u.clone(), self.mean_information_value(tags, total)))
                .collect()
        })
    }

    fn mean_information_value(&self, tags: &BTreeSet<String>, total: f64) -> f64 {
        let sum: f64 = tags
            .iter()
            .map(|t| self.tag_user_count[t] as f64 / total)
            .sum();
        sum / tags.len() as f64
    }

    fn record(&mut self, tx: &Transaction) -> Result<()> {
        if self.taggers.contains_key(&tx.user_id) {
            return Err(Error::DuplicateTransaction {
                user: tx.user_id.clone(),
                item: tx.item_id.clone(),
            });
        }
        for tag in &tx.tags {
            *self.tag_user_count.entry(tag.clone()).or_insert(0) += 1;
        }
        self.taggers.insert(tx.user_id.clone(), tx.tags.clone());
        self.trusts = Derived::default();
        Ok(())
    }
}

fn validate(tx: &Transaction) -> Result<()> {
    if tx.user_id.is_empty() || tx.item_id.is_empty() {
        return Err(Error::InvalidArgument("transaction ids must be non-empty".into()));
    }
    if tx.tags.is_empty() || tx.tags.iter().any(|t| t.is_empty()) {
        return Err(Error::InvalidArgument(format!(
            "transaction ({}, {}) needs at least one non-empty tag",
            tx.user_id, tx.item_id
        )));
    }
    Ok(())
}

/// Records one transaction in the user's and the item's profile.
///
/// A `(user, item)` pair that is already present in either profile is
/// rejected and nothing is written. Read-modify-write is not atomic across
/// the two keys; callers applying transactions concurrently must serialize
/// them per user and per item.
pub fn apply_transaction<S: ProfileStore + ?Sized>(
    tx: &Transaction,
    store: &S,
) -> Result<(Arc<UserProfile>, Arc<ItemProfile>)> {
    validate(tx)?;
    let mut user = store
        .get_user(&tx.user_id)
        .map(|p| (*p).clone())
        .unwrap_or_else(|| UserProfile::new(&tx.user_id));
    let mut item = store
        .get_item(&tx.item_id)
        .map(|p| (*p).clone())
        .unwrap_or_else(|| ItemProfile::new(&tx.item_id));
    user.record(tx)?;
    item.record(tx)?;
    store.put_user(user)?;
    store.put_item(item)?;
    Ok((
        store.get_user(&tx.user_id).expect("just written"),
        store.get_item(&tx.item_id).expect("just written"),
    ))
}

/// Builds all profiles for a transaction set in one pass and writes them.
///
/// Produces the same profiles as applying the transactions one by one, in
/// any order.
pub fn build_profiles<S: ProfileStore + ?Sized>(transactions: &[Transaction], store: &S) -> Result<()> {
    let mut users: HashMap<&str, UserProfile> = HashMap::new();
    let mut items: HashMap<&str, ItemProfile> = HashMap::new();
    for tx in transactions {
        validate(tx)?;
        users
            .entry(tx.user_id.as_str())
            .or_insert_with(|| UserProfile::new(&tx.user_id))
            .record(tx)?;
        items
            .entry(tx.item_id.as_str())
            .or_insert_with(|| ItemProfile::new(&tx.item_id))
            .record(tx)?;
    }
    for (_, p) in users {
        store.put_user(p)?;
    }
    for (_, p) in items {
        store.put_item(p)?;
    }
    Ok(())
}
