//! Top-k neighbor selection and top-N item scoring.

use std::cmp::Reverse;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::ExperimentVariant;
use crate::neighborhood::Neighborhood;
use crate::scoring::{build_context, tie_key, NeighborContext, ScoringConfig};
use crate::store::ProfileStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub item_id: String,
    pub score: f64,
}

/// Items ordered by descending score, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationList {
    pub user_id: String,
    pub entries: Vec<ScoredItem>,
}

impl RecommendationList {
    pub fn empty(user_id: &str) -> Self {
        RecommendationList {
            user_id: user_id.to_string(),
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.item_id.as_str())
    }
}

/// The `k` neighbors with the highest rank, ties by ascending id.
pub fn select_top_k_neighbors(context: &NeighborContext, k: usize) -> Result<Vec<String>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut order: Vec<&crate::scoring::NeighborRecord> = context.records.iter().collect();
    order.sort_by(|a, b| {
        tie_key(b.rank)
            .cmp(&tie_key(a.rank))
            .then_with(|| a.neighbor_id.cmp(&b.neighbor_id))
    });
    Ok(order
        .into_iter()
        .take(k)
        .map(|r| r.neighbor_id.clone())
        .collect())
}

/// Mean over the top neighbors of `cell(v, item) * sim(u, v)`.
pub fn score_item(
    item: &str,
    top: &[String],
    context: &NeighborContext,
    view: &Neighborhood,
) -> Result<f64> {
    if top.is_empty() {
        return Err(Error::InvalidArgument("no top neighbors to score with".into()));
    }
    let mut sum = 0.0;
    for v in top {
        let record = context
            .get(v)
            .ok_or_else(|| Error::InvalidArgument(format!("{v:?} is not in the context")))?;
        let profile = view
            .neighbor_profiles
            .get(v)
            .ok_or_else(|| Error::MissingProfile(format!("user:{v}")))?;
        sum += context.scheme.cell(profile, item) * record.similarity;
    }
    Ok(sum / top.len() as f64)
}

/// Scores of every candidate item some top neighbor tagged.
fn accumulate_scores<'v>(
    top: &[String],
    context: &NeighborContext,
    view: &'v Neighborhood,
) -> Result<BTreeMap<&'v str, f64>> {
    let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
    for v in top {
        let sim = context
            .get(v)
            .ok_or_else(|| Error::InvalidArgument(format!("{v:?} is not in the context")))?
            .similarity;
        let profile = view
            .neighbor_profiles
            .get(v)
            .ok_or_else(|| Error::MissingProfile(format!("user:{v}")))?;
        for (item, cell) in context.scheme.row(profile).iter() {
            if let Some(candidate) = view.candidates.candidates.get(item) {
                *scores.entry(candidate.as_str()).or_insert(0.0) += cell * sim;
            }
        }
    }
    let n = top.len() as f64;
    for s in scores.values_mut() {
        *s /= n;
    }
    Ok(scores)
}

/// Ranks candidates for an already-built context. Zero scores are dropped.
pub fn recommend_with_context(
    view: &Neighborhood,
    context: &NeighborContext,
    k: usize,
    n: usize,
) -> Result<RecommendationList> {
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    let user = &view.user.user_id;
    if context.records.is_empty() {
        return Ok(RecommendationList::empty(user));
    }
    let top = select_top_k_neighbors(context, k)?;
    let scores = accumulate_scores(&top, context, view)?;
    let mut entries: Vec<ScoredItem> = scores
        .into_iter()
        .filter(|(_, s)| *s > 0.0)
        .map(|(item, score)| ScoredItem {
            item_id: item.to_string(),
            score,
        })
        .collect();
    entries.sort_by_key(|e| (Reverse(tie_key(e.score)), e.item_id.clone()));
    entries.truncate(n);
    Ok(RecommendationList {
        user_id: user.clone(),
        entries,
    })
}

/// Top-`n` recommendations for `user` under one experiment variant.
///
/// Reads only the user's profile, the user's items, the neighbors and the
/// candidate items. A user without neighbors gets an empty list; a user
/// without a profile is an error.
pub fn recommend_top_n<S: ProfileStore + ?Sized>(
    user: &str,
    k: usize,
    n: usize,
    variant: ExperimentVariant,
    config: &ScoringConfig,
    store: &S,
) -> Result<RecommendationList> {
    let view = Neighborhood::fetch(user, store)?
        .ok_or_else(|| Error::MissingProfile(format!("user:{user}")))?;
    let context = build_context(&view, variant.scheme(), variant.trust_enabled(), config)?;
    recommend_with_context(&view, &context, k, n)
}
