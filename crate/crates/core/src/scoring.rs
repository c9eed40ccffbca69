//! Similarity, resource importance, user trust, min-max normalization and
//! the fused rank value of each neighbor.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neighborhood::Neighborhood;
use crate::profiles::{ItemProfile, UserProfile};

/// Resolution at which ranks and scores are compared. Values closer than
/// this are treated as tied and fall back to id order, which keeps orderings
/// independent of floating-point summation order.
pub const TIE_RESOLUTION: f64 = 1e-12;

/// Sort key for a score under [`TIE_RESOLUTION`].
pub fn tie_key(x: f64) -> i64 {
    (x / TIE_RESOLUTION).round() as i64
}

/// What fills a cell of the user-item matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingScheme {
    /// 1 if the user tagged the item, else 0.
    Binary,
    /// The user's item weight.
    ItemWeight,
}

impl WeightingScheme {
    /// The user's matrix row: every tagged item with its cell value.
    pub fn row(self, profile: &UserProfile) -> Row<'_> {
        match self {
            WeightingScheme::Binary => Row::Binary(&profile.items),
            WeightingScheme::ItemWeight => Row::Weighted(profile.item_weights()),
        }
    }

    pub fn cell(self, profile: &UserProfile, item: &str) -> f64 {
        match self {
            WeightingScheme::Binary => f64::from(u8::from(profile.has_item(item))),
            WeightingScheme::ItemWeight => profile.item_weight(item).unwrap_or(0.0),
        }
    }
}

/// A borrowed matrix row.
#[derive(Debug, Clone, Copy)]
pub enum Row<'a> {
    /// 1 for every tagged item.
    Binary(&'a BTreeMap<String, BTreeSet<String>>),
    Weighted(&'a BTreeMap<String, f64>),
}

impl<'a> Row<'a> {
    pub fn len(&self) -> usize {
        match self {
            Row::Binary(m) => m.len(),
            Row::Weighted(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell value, `None` for untagged items.
    pub fn get(&self, item: &str) -> Option<f64> {
        match self {
            Row::Binary(m) => m.contains_key(item).then_some(1.0),
            Row::Weighted(m) => m.get(item).copied(),
        }
    }

    /// Tagged items with their cell values, in item id order.
    pub fn iter(&self) -> Box<dyn Iterator<Item = (&'a str, f64)> + 'a> {
        match *self {
            Row::Binary(m) => Box::new(m.keys().map(|i| (i.as_str(), 1.0))),
            Row::Weighted(m) => Box::new(m.iter().map(|(i, w)| (i.as_str(), *w))),
        }
    }
}

/// How cosine similarity treats items outside the common set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMode {
    /// Cosine of the full matrix rows. For a neighbor `v` of `u` the reduced
    /// matrix columns (own items plus candidates) cover every item either of
    /// them tagged, so this equals the cosine over the reduced matrix.
    #[default]
    Matrix,
    /// Numerator and both norms restricted to the common items.
    Strict,
}

/// Whose taggers count towards a resource's importance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportancePool {
    /// The evaluating user plus their neighbors.
    #[default]
    Reduced,
    /// All users. Needs the global user count, the only global quantity the
    /// engine ever uses.
    Global { total_users: usize },
}

/// Divisor of the importance-weighted trust sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustDenominator {
    /// The neighbor's transaction count.
    #[default]
    TransactionCount,
    /// The sum of the importances; a true weighted mean.
    ImportanceSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    lambda: f64,
}

impl FusionConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidArgument(format!("lambda must be in [0, 1], got {lambda}")));
        }
        Ok(FusionConfig { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn similarity_only() -> Self {
        FusionConfig { lambda: 1.0 }
    }
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { lambda: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub fusion: FusionConfig,
    pub similarity_mode: SimilarityMode,
    pub importance_pool: ImportancePool,
    pub trust_denominator: TrustDenominator,
}

fn cosine(a: Row<'_>, b: Row<'_>, mode: SimilarityMode) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut dot = 0.0;
    let mut common_small = 0.0;
    let mut common_large = 0.0;
    for (item, x) in small.iter() {
        if let Some(y) = large.get(item) {
            dot += x * y;
            common_small += x * x;
            common_large += y * y;
        }
    }
    if dot == 0.0 {
        return 0.0;
    }
    let (na, nb) = match mode {
        SimilarityMode::Strict => (common_small, common_large),
        SimilarityMode::Matrix => (
            small.iter().map(|(_, x)| x * x).sum::<f64>(),
            large.iter().map(|(_, x)| x * x).sum::<f64>(),
        ),
    };
    (dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 1.0)
}

/// Cosine similarity of two users' matrix rows; 0 without common items.
pub fn similarity(u: &UserProfile, v: &UserProfile, scheme: WeightingScheme, mode: SimilarityMode) -> f64 {
    cosine(scheme.row(u), scheme.row(v), mode)
}

/// Share of `pool` that tagged the item.
pub fn resource_importance(item: &ItemProfile, pool: &BTreeSet<&str>) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::InvalidArgument("importance pool is empty".into()));
    }
    let hits = item.taggers.keys().filter(|u| pool.contains(u.as_str())).count();
    Ok(hits as f64 / pool.len() as f64)
}

/// Share of all users that tagged the item.
pub fn global_resource_importance(item: &ItemProfile, total_users: usize) -> Result<f64> {
    if total_users == 0 {
        return Err(Error::InvalidArgument("total user count is zero".into()));
    }
    Ok(item.tagger_count() as f64 / total_users as f64)
}

/// Importance-weighted aggregate of `(importance, transaction trust)` pairs.
pub fn weighted_trust(pairs: &[(f64, f64)], denominator: TrustDenominator) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no transactions to aggregate".into()));
    }
    let sum: f64 = pairs.iter().map(|(i, v)| i * v).sum();
    Ok(match denominator {
        TrustDenominator::TransactionCount => sum / pairs.len() as f64,
        TrustDenominator::ImportanceSum => {
            let w: f64 = pairs.iter().map(|(i, _)| i).sum();
            if w > 0.0 {
                sum / w
            } else {
                0.0
            }
        }
    })
}

/// Min-max normalization onto `[0, 1]`. A range narrower than
/// [`TIE_RESOLUTION`] maps every entry to 1.
pub fn normalize_minmax<K: Ord + Clone>(values: &BTreeMap<K, f64>) -> Result<BTreeMap<K, f64>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("cannot normalize an empty set".into()));
    }
    let min = values.values().copied().fold(f64::INFINITY, f64::min);
    let max = values.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    Ok(values
        .iter()
        .map(|(k, &x)| {
            let n = if range <= TIE_RESOLUTION {
                1.0
            } else {
                ((x - min) / range).clamp(0.0, 1.0)
            };
            (k.clone(), n)
        })
        .collect())
}

pub fn rank_value(norm_similarity: f64, norm_trust: f64, config: &FusionConfig) -> f64 {
    config.lambda * norm_similarity + (1.0 - config.lambda) * norm_trust
}

/// Per-item quantities that every neighbor's trust draws on.
struct ItemStats<'a> {
    importance: f64,
    trusts: &'a BTreeMap<String, f64>,
}

/// Raw trust of every neighbor in the view.
pub fn neighbor_trusts(view: &Neighborhood, config: &ScoringConfig) -> Result<BTreeMap<String, f64>> {
    if view.is_isolated() {
        return Ok(BTreeMap::new());
    }
    // Pool members who tagged each item, counted from the members' own rows.
    let pool_size = view.neighbor_profiles.len() + 1;
    let mut pool_hits: HashMap<&str, usize> = HashMap::with_capacity(view.item_profiles.len());
    let members = std::iter::once(&view.user).chain(view.neighbor_profiles.values());
    for member in members {
        for item in member.items.keys() {
            *pool_hits.entry(item.as_str()).or_insert(0) += 1;
        }
    }
    let mut stats: HashMap<&str, ItemStats<'_>> = HashMap::with_capacity(view.item_profiles.len());
    for (id, item) in &view.item_profiles {
        let importance = match config.importance_pool {
            ImportancePool::Reduced => pool_hits.get(id.as_str()).copied().unwrap_or(0) as f64 / pool_size as f64,
            ImportancePool::Global { total_users } => global_resource_importance(item, total_users)?,
        };
        stats.insert(
            id.as_str(),
            ItemStats {
                importance,
                trusts: item.transaction_trusts(),
            },
        );
    }

    let mut out = BTreeMap::new();
    for (n, profile) in &view.neighbor_profiles {
        let mut pairs = Vec::with_capacity(profile.items.len());
        for item in profile.items.keys() {
            let s = stats
                .get(item.as_str())
                .ok_or_else(|| Error::MissingProfile(format!("item:{item}")))?;
            let v = *s.trusts.get(n.as_str()).ok_or_else(|| Error::UnknownTagger {
                item: item.clone(),
                user: n.clone(),
            })?;
            pairs.push((s.importance, v));
        }
        if pairs.is_empty() {
            return Err(Error::NoTransactions(n.clone()));
        }
        out.insert(n.clone(), weighted_trust(&pairs, config.trust_denominator)?);
    }
    Ok(out)
}

/// Trust of one neighbor within the view.
pub fn user_trust(view: &Neighborhood, neighbor: &str, config: &ScoringConfig) -> Result<f64> {
    let profile = view
        .neighbor_profiles
        .get(neighbor)
        .ok_or_else(|| Error::InvalidArgument(format!("{neighbor:?} is not a neighbor")))?;
    if profile.items.is_empty() {
        return Err(Error::NoTransactions(neighbor.to_string()));
    }
    let pool = view.pool();
    let mut pairs = Vec::new();
    for item in profile.items.keys() {
        let p = view
            .item_profiles
            .get(item)
            .ok_or_else(|| Error::MissingProfile(format!("item:{item}")))?;
        let importance = match config.importance_pool {
            ImportancePool::Reduced => resource_importance(p, &pool)?,
            ImportancePool::Global { total_users } => global_resource_importance(p, total_users)?,
        };
        pairs.push((importance, p.transaction_trust(neighbor)?));
    }
    weighted_trust(&pairs, config.trust_denominator)
}

/// Raw similarity between the user and every neighbor.
pub fn neighbor_similarities(
    view: &Neighborhood,
    scheme: WeightingScheme,
    mode: SimilarityMode,
) -> BTreeMap<String, f64> {
    let own = scheme.row(&view.user);
    view.neighbor_profiles
        .iter()
        .map(|(n, p)| (n.clone(), cosine(own, scheme.row(p), mode)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborRecord {
    pub neighbor_id: String,
    pub similarity: f64,
    pub trust: f64,
    pub norm_similarity: f64,
    pub norm_trust: f64,
    pub rank: f64,
}

/// A user's neighbors with similarity, trust and rank, in neighbor id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborContext {
    pub user_id: String,
    pub scheme: WeightingScheme,
    pub records: Vec<NeighborRecord>,
}

impl NeighborContext {
    /// Combines raw similarities and trusts. Both maps must have the same
    /// keys.
    pub fn assemble(
        user_id: &str,
        scheme: WeightingScheme,
        similarities: &BTreeMap<String, f64>,
        trusts: &BTreeMap<String, f64>,
        fusion: &FusionConfig,
    ) -> Result<Self> {
        if similarities.is_empty() {
            return Ok(NeighborContext {
                user_id: user_id.to_string(),
                scheme,
                records: Vec::new(),
            });
        }
        if similarities.len() != trusts.len() || similarities.keys().any(|k| !trusts.contains_key(k)) {
            return Err(Error::InvalidArgument(
                "similarity and trust maps cover different neighbors".into(),
            ));
        }
        let norm_sim = normalize_minmax(similarities)?;
        let norm_trust = normalize_minmax(trusts)?;
        let records = similarities
            .iter()
            .map(|(n, &sim)| {
                let ns = norm_sim[n];
                let nt = norm_trust[n];
                NeighborRecord {
                    neighbor_id: n.clone(),
                    similarity: sim,
                    trust: trusts[n],
                    norm_similarity: ns,
                    norm_trust: nt,
                    rank: rank_value(ns, nt, fusion),
                }
            })
            .collect();
        Ok(NeighborContext {
            user_id: user_id.to_string(),
            scheme,
            records,
        })
    }

    pub fn get(&self, neighbor: &str) -> Option<&NeighborRecord> {
        self.records
            .binary_search_by(|r| r.neighbor_id.as_str().cmp(neighbor))
            .ok()
            .map(|i| &self.records[i])
    }
}

/// Builds the full neighbor context for one weighting scheme. With
/// `trust_enabled == false` the rank is the normalized similarity alone.
pub fn build_context(
    view: &Neighborhood,
    scheme: WeightingScheme,
    trust_enabled: bool,
    config: &ScoringConfig,
) -> Result<NeighborContext> {
    let sims = neighbor_similarities(view, scheme, config.similarity_mode);
    let trusts = neighbor_trusts(view, config)?;
    let fusion = if trust_enabled {
        config.fusion
    } else {
        FusionConfig::similarity_only()
    };
    NeighborContext::assemble(&view.user.user_id, scheme, &sims, &trusts, &fusion)
}
