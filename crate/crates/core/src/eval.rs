//! Offline evaluation: recall, precision and coverage of the four
//! experiment variants over a neighborhood-size sweep.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Corpus;
use crate::neighborhood::Neighborhood;
use crate::profiles::build_profiles;
use crate::recommend::{recommend_with_context, RecommendationList};
use crate::scoring::{
    neighbor_similarities, neighbor_trusts, FusionConfig, NeighborContext, ScoringConfig, WeightingScheme,
};
use crate::store::{ProfileStore, ShardedStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentVariant {
    /// Binary matrix, similarity only.
    Basic,
    /// Item-weight matrix, similarity only.
    Weighted,
    /// Binary matrix fused with trust.
    BasicTrust,
    /// Item-weight matrix fused with trust.
    WeightedTrust,
}

impl ExperimentVariant {
    pub const ALL: [ExperimentVariant; 4] = [
        ExperimentVariant::Basic,
        ExperimentVariant::Weighted,
        ExperimentVariant::BasicTrust,
        ExperimentVariant::WeightedTrust,
    ];

    pub fn scheme(self) -> WeightingScheme {
        match self {
            ExperimentVariant::Basic | ExperimentVariant::BasicTrust => WeightingScheme::Binary,
            ExperimentVariant::Weighted | ExperimentVariant::WeightedTrust => WeightingScheme::ItemWeight,
        }
    }

    pub fn trust_enabled(self) -> bool {
        matches!(self, ExperimentVariant::BasicTrust | ExperimentVariant::WeightedTrust)
    }

    pub fn name(self) -> &'static str {
        match self {
            ExperimentVariant::Basic => "basic",
            ExperimentVariant::Weighted => "weighted",
            ExperimentVariant::BasicTrust => "basic_trust",
            ExperimentVariant::WeightedTrust => "weighted_trust",
        }
    }

    /// The variant with the same matrix and trust switched the other way.
    pub fn counterpart(self) -> Self {
        match self {
            ExperimentVariant::Basic => ExperimentVariant::BasicTrust,
            ExperimentVariant::BasicTrust => ExperimentVariant::Basic,
            ExperimentVariant::Weighted => ExperimentVariant::WeightedTrust,
            ExperimentVariant::WeightedTrust => ExperimentVariant::Weighted,
        }
    }
}

impl fmt::Display for ExperimentVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant {s:?}")))
    }
}

/// Divisor of the hit count in precision.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionDenominator {
    /// Always N, so short lists are penalized.
    #[default]
    FixedN,
    /// The actual list length.
    ListLength,
}

/// `(recall, precision)` of one user's list against their test items.
pub fn recall_precision_at_n(
    recommendations: &RecommendationList,
    test_items: &BTreeSet<&str>,
    n: usize,
    denominator: PrecisionDenominator,
) -> (f64, f64) {
    if test_items.is_empty() || n == 0 {
        return (0.0, 0.0);
    }
    let shown = recommendations.entries.iter().take(n);
    let listed = shown.len();
    let hits = recommendations
        .items()
        .take(n)
        .filter(|i| test_items.contains(i))
        .count() as f64;
    let recall = hits / test_items.len() as f64;
    let precision = match denominator {
        PrecisionDenominator::FixedN => hits / n as f64,
        PrecisionDenominator::ListLength if listed == 0 => 0.0,
        PrecisionDenominator::ListLength => hits / listed as f64,
    };
    (recall, precision)
}

/// Share of distinct test items that appear in at least one list.
pub fn coverage<'a, I>(lists: I, testing: &Corpus) -> Result<f64>
where
    I: IntoIterator<Item = &'a RecommendationList>,
{
    let test_items = testing.distinct_items();
    if test_items.is_empty() {
        return Err(Error::InvalidArgument("test corpus is empty".into()));
    }
    let covered: BTreeSet<&str> = lists
        .into_iter()
        .flat_map(|l| l.items())
        .filter(|i| test_items.contains(i))
        .collect();
    Ok(covered.len() as f64 / test_items.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub variants: Vec<ExperimentVariant>,
    pub k_values: Vec<usize>,
    pub top_n: usize,
    pub scoring: ScoringConfig,
    pub precision: PrecisionDenominator,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            variants: ExperimentVariant::ALL.to_vec(),
            k_values: (1..=10).map(|i| i * 5).collect(),
            top_n: 10,
            scoring: ScoringConfig::default(),
            precision: PrecisionDenominator::default(),
        }
    }
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::InvalidArgument("no variants selected".into()));
        }
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return Err(Error::InvalidArgument("k values must be non-empty and positive".into()));
        }
        if self.top_n == 0 {
            return Err(Error::InvalidArgument("top_n must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub variant: ExperimentVariant,
    pub k: usize,
    pub recall: f64,
    pub precision: f64,
    pub coverage: f64,
    pub users_evaluated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rows: Vec<ReportRow>,
    /// Users with a non-empty test set.
    pub test_users: usize,
    /// Test users skipped because they have no training profile or no
    /// neighbors.
    pub excluded_isolated: usize,
}

pub const CSV_HEADER: &str = "variant,k,recall,precision,coverage,users_evaluated";

impl EvaluationReport {
    pub fn row(&self, variant: ExperimentVariant, k: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.variant == variant && r.k == k)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{}\n",
                r.variant, r.k, r.recall, r.precision, r.coverage, r.users_evaluated
            ));
        }
        out
    }
}

/// Per-user outcome: one entry per (variant, k), in config order.
enum UserOutcome {
    Isolated,
    Evaluated(Vec<(f64, f64, Vec<String>)>),
}

fn evaluate_user<S: ProfileStore + ?Sized>(
    user: &str,
    test_items: &BTreeSet<&str>,
    store: &S,
    config: &ExperimentConfig,
) -> Result<UserOutcome> {
    let Some(view) = Neighborhood::fetch(user, store)? else {
        return Ok(UserOutcome::Isolated);
    };
    if view.is_isolated() {
        return Ok(UserOutcome::Isolated);
    }
    let trusts = neighbor_trusts(&view, &config.scoring)?;
    let mut sims: BTreeMap<WeightingScheme, BTreeMap<String, f64>> = BTreeMap::new();
    let mut out = Vec::with_capacity(config.variants.len() * config.k_values.len());
    for &variant in &config.variants {
        let scheme = variant.scheme();
        let sim = sims
            .entry(scheme)
            .or_insert_with(|| neighbor_similarities(&view, scheme, config.scoring.similarity_mode));
        let fusion = if variant.trust_enabled() {
            config.scoring.fusion
        } else {
            FusionConfig::similarity_only()
        };
        let context = NeighborContext::assemble(user, scheme, sim, &trusts, &fusion)?;
        for &k in &config.k_values {
            let list = recommend_with_context(&view, &context, k, config.top_n)?;
            let (r, p) = recall_precision_at_n(&list, test_items, config.top_n, config.precision);
            out.push((r, p, list.entries.into_iter().map(|e| e.item_id).collect()));
        }
    }
    Ok(UserOutcome::Evaluated(out))
}

/// Builds profiles from `training` in a fresh in-memory store and evaluates.
pub fn run_experiment(training: &Corpus, testing: &Corpus, config: &ExperimentConfig) -> Result<EvaluationReport> {
    let store = ShardedStore::in_memory(1)?;
    build_profiles(&training.transactions, &store)?;
    run_experiment_on_store(&store, testing, config)
}

/// Evaluates every user with a non-empty test set against profiles already
/// in `store`.
///
/// Users are evaluated in parallel on the current rayon pool; aggregation
/// runs in user id order, so the report does not depend on the pool size.
pub fn run_experiment_on_store<S: ProfileStore + ?Sized>(
    store: &S,
    testing: &Corpus,
    config: &ExperimentConfig,
) -> Result<EvaluationReport> {
    config.validate()?;
    let test_by_user = testing.items_by_user();
    let users: Vec<(&str, &BTreeSet<&str>)> = test_by_user.iter().map(|(u, s)| (*u, s)).collect();

    let outcomes: Vec<UserOutcome> = users
        .par_iter()
        .map(|(user, items)| evaluate_user(user, items, store, config))
        .collect::<Result<_>>()?;

    let test_items = testing.distinct_items();
    let combos = config.variants.len() * config.k_values.len();
    let mut recall_sum = vec![0.0; combos];
    let mut precision_sum = vec![0.0; combos];
    let mut covered: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); combos];
    let mut evaluated = 0usize;
    for outcome in &outcomes {
        let UserOutcome::Evaluated(per_combo) = outcome else {
            continue;
        };
        evaluated += 1;
        for (c, (r, p, items)) in per_combo.iter().enumerate() {
            recall_sum[c] += r;
            precision_sum[c] += p;
            for item in items {
                if let Some(t) = test_items.get(item.as_str()) {
                    covered[c].insert(t);
                }
            }
        }
    }

    let mut rows = Vec::with_capacity(combos);
    let mut c = 0;
    for &variant in &config.variants {
        for &k in &config.k_values {
            let mean = |s: f64| if evaluated == 0 { 0.0 } else { s / evaluated as f64 };
            let cov = if test_items.is_empty() {
                0.0
            } else {
                covered[c].len() as f64 / test_items.len() as f64
            };
            rows.push(ReportRow {
                variant,
                k,
                recall: mean(recall_sum[c]),
                precision: mean(precision_sum[c]),
                coverage: cov,
                users_evaluated: evaluated,
            });
            c += 1;
        }
    }
    Ok(EvaluationReport {
        rows,
        test_users: users.len(),
        excluded_isolated: users.len() - evaluated,
    })
}
