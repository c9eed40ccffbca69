//! Shared test support: random corpora and a straight-line reference
//! implementation of the whole scoring pipeline.
//!
//! The reference works on a flat list of `(user, item, tags)` triples and
//! recomputes every quantity from scratch by scanning that list. It shares no
//! code with the engine beyond the input type and the configuration enums.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tagtrust::ingest::Transaction;
use tagtrust::scoring::{ImportancePool, ScoringConfig, SimilarityMode, TrustDenominator, WeightingScheme};

/// Random corpus with at most `max_users` users, `max_items` items and
/// `max_tags` distinct tags.
pub fn random_corpus(seed: u64, max_users: usize, max_items: usize, max_tags: usize) -> Vec<Transaction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_users = rng.gen_range(2..=max_users);
    let n_items = rng.gen_range(2..=max_items);
    let n_tags = rng.gen_range(1..=max_tags);
    let items: Vec<String> = (0..n_items).map(|i| format!("i{i:02}")).collect();
    let tags: Vec<String> = (0..n_tags).map(|t| format!("t{t}")).collect();
    let mut out = Vec::new();
    for u in 0..n_users {
        let count = rng.gen_range(1..=n_items.min(6));
        let chosen: Vec<&String> = items.choose_multiple(&mut rng, count).collect();
        for item in chosen {
            let k = rng.gen_range(1..=n_tags.min(3));
            let picked: Vec<&String> = tags.choose_multiple(&mut rng, k).collect();
            out.push(Transaction::new(format!("u{u:02}"), item.clone(), picked));
        }
    }
    out
}

/// A larger corpus with skewed item popularity and per-item consensus tags,
/// plus some noisy taggers who mostly use idiosyncratic tags.
pub fn synthetic_corpus(seed: u64, users: usize, items: usize) -> Vec<Transaction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let genres = 8;
    let item_genre: Vec<usize> = (0..items).map(|_| rng.gen_range(0..genres)).collect();
    let mut out = Vec::new();
    for u in 0..users {
        let favourite = rng.gen_range(0..genres);
        let noisy = rng.gen_bool(0.15);
        let n = rng.gen_range(3..=25);
        let mut chosen = BTreeSet::new();
        let mut guard = 0;
        while chosen.len() < n && guard < 10 * n {
            guard += 1;
            // Zipf-ish popularity.
            let x: f64 = rng.gen();
            let i = ((x * x * x) * items as f64) as usize % items;
            if item_genre[i] == favourite || rng.gen_bool(0.3) {
                chosen.insert(i);
            }
        }
        for i in chosen {
            let g = item_genre[i];
            let mut tags = BTreeSet::new();
            if noisy {
                tags.insert(format!("noise{}", rng.gen_range(0..200)));
                if rng.gen_bool(0.3) {
                    tags.insert(format!("g{g}"));
                }
            } else {
                tags.insert(format!("g{g}"));
                if rng.gen_bool(0.5) {
                    tags.insert(format!("item{i}"));
                }
                if rng.gen_bool(0.3) {
                    tags.insert(format!("mood{}", rng.gen_range(0..5)));
                }
            }
            out.push(Transaction::new(format!("user{u:04}"), format!("movie{i:04}"), tags));
        }
    }
    out
}

const RES: f64 = 1e-12;

fn quantize(x: f64) -> i64 {
    (x / RES).round() as i64
}

pub struct Oracle {
    rows: Vec<(String, String, BTreeSet<String>)>,
}

impl Oracle {
    pub fn new(txs: &[Transaction]) -> Self {
        Oracle {
            rows: txs
                .iter()
                .map(|t| (t.user_id.clone(), t.item_id.clone(), t.tags.clone()))
                .collect(),
        }
    }

    pub fn users(&self) -> BTreeSet<String> {
        self.rows.iter().map(|r| r.0.clone()).collect()
    }

    pub fn all_items(&self) -> BTreeSet<String> {
        self.rows.iter().map(|r| r.1.clone()).collect()
    }

    pub fn items(&self, u: &str) -> BTreeSet<String> {
        self.rows.iter().filter(|r| r.0 == u).map(|r| r.1.clone()).collect()
    }

    pub fn taggers(&self, r: &str) -> BTreeSet<String> {
        self.rows.iter().filter(|x| x.1 == r).map(|x| x.0.clone()).collect()
    }

    fn tags(&self, u: &str, r: &str) -> Option<&BTreeSet<String>> {
        self.rows.iter().find(|x| x.0 == u && x.1 == r).map(|x| &x.2)
    }

    pub fn user_tags(&self, u: &str) -> BTreeSet<String> {
        self.rows
            .iter()
            .filter(|x| x.0 == u)
            .flat_map(|x| x.2.iter().cloned())
            .collect()
    }

    pub fn item_tags(&self, r: &str) -> BTreeSet<String> {
        self.rows
            .iter()
            .filter(|x| x.1 == r)
            .flat_map(|x| x.2.iter().cloned())
            .collect()
    }

    fn freq(&self, u: &str, t: &str) -> f64 {
        self.rows.iter().filter(|x| x.0 == u && x.2.contains(t)).count() as f64
    }

    pub fn tag_score(&self, u: &str, t: &str) -> f64 {
        let mut total = 0.0;
        for l in self.user_tags(u) {
            total += self.freq(u, &l);
        }
        self.freq(u, t) / total
    }

    pub fn item_weight(&self, u: &str, r: &str) -> f64 {
        match self.tags(u, r) {
            None => 0.0,
            Some(ts) => ts.iter().map(|t| self.tag_score(u, t)).sum(),
        }
    }

    fn distinct_users_with(&self, r: &str, t: &str) -> f64 {
        self.rows.iter().filter(|x| x.1 == r && x.2.contains(t)).count() as f64
    }

    pub fn info_value(&self, r: &str, t: &str) -> f64 {
        let mut total = 0.0;
        for t2 in self.item_tags(r) {
            total += self.distinct_users_with(r, &t2);
        }
        self.distinct_users_with(r, t) / total
    }

    pub fn tx_trust(&self, u: &str, r: &str) -> f64 {
        let ts = self.tags(u, r).expect("transaction exists");
        let mut s = 0.0;
        for t in ts {
            s += self.info_value(r, t);
        }
        s / ts.len() as f64
    }

    /// Pairwise scan over all users.
    pub fn neighbors(&self, u: &str) -> BTreeSet<String> {
        let mine = self.items(u);
        self.users()
            .into_iter()
            .filter(|v| v != u && !self.items(v).is_disjoint(&mine))
            .collect()
    }

    pub fn candidates(&self, u: &str) -> BTreeSet<String> {
        let mine = self.items(u);
        let mut out = BTreeSet::new();
        for v in self.neighbors(u) {
            for r in self.items(&v) {
                if !mine.contains(&r) {
                    out.insert(r);
                }
            }
        }
        out
    }

    fn cell(&self, scheme: WeightingScheme, u: &str, r: &str) -> f64 {
        match scheme {
            WeightingScheme::Binary => {
                if self.tags(u, r).is_some() {
                    1.0
                } else {
                    0.0
                }
            }
            WeightingScheme::ItemWeight => self.item_weight(u, r),
        }
    }

    /// Similarity of `u` to neighbor `v`, built from u's reduced matrix.
    pub fn sim(&self, u: &str, v: &str, scheme: WeightingScheme, mode: SimilarityMode) -> f64 {
        let columns: Vec<String> = match mode {
            SimilarityMode::Matrix => self.items(u).union(&self.candidates(u)).cloned().collect(),
            SimilarityMode::Strict => self.items(u).intersection(&self.items(v)).cloned().collect(),
        };
        let a: Vec<f64> = columns.iter().map(|c| self.cell(scheme, u, c)).collect();
        let b: Vec<f64> = columns.iter().map(|c| self.cell(scheme, v, c)).collect();
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        if dot == 0.0 {
            return 0.0;
        }
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        (dot / (na * nb)).min(1.0)
    }

    pub fn pool(&self, u: &str) -> BTreeSet<String> {
        let mut p = self.neighbors(u);
        p.insert(u.to_string());
        p
    }

    pub fn importance(&self, u: &str, r: &str, pool_kind: ImportancePool) -> f64 {
        match pool_kind {
            ImportancePool::Reduced => {
                let pool = self.pool(u);
                let hit = self.taggers(r).iter().filter(|x| pool.contains(*x)).count();
                hit as f64 / pool.len() as f64
            }
            ImportancePool::Global { total_users } => self.taggers(r).len() as f64 / total_users as f64,
        }
    }

    pub fn trust(&self, u: &str, n: &str, cfg: &ScoringConfig) -> f64 {
        let mut num = 0.0;
        let mut wsum = 0.0;
        let items = self.items(n);
        for r in &items {
            let i = self.importance(u, r, cfg.importance_pool);
            num += i * self.tx_trust(n, r);
            wsum += i;
        }
        match cfg.trust_denominator {
            TrustDenominator::TransactionCount => num / items.len() as f64,
            TrustDenominator::ImportanceSum => {
                if wsum > 0.0 {
                    num / wsum
                } else {
                    0.0
                }
            }
        }
    }

    fn minmax(values: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
        let lo = values.values().cloned().fold(f64::MAX, f64::min);
        let hi = values.values().cloned().fold(f64::MIN, f64::max);
        values
            .iter()
            .map(|(k, x)| {
                let v = if hi - lo <= RES { 1.0 } else { (x - lo) / (hi - lo) };
                (k.clone(), v)
            })
            .collect()
    }

    /// `(sim, trust, norm_sim, norm_trust, rank)` per neighbor.
    pub fn context(
        &self,
        u: &str,
        scheme: WeightingScheme,
        trust_on: bool,
        cfg: &ScoringConfig,
    ) -> BTreeMap<String, [f64; 5]> {
        let ns = self.neighbors(u);
        if ns.is_empty() {
            return BTreeMap::new();
        }
        let sims: BTreeMap<String, f64> = ns
            .iter()
            .map(|v| (v.clone(), self.sim(u, v, scheme, cfg.similarity_mode)))
            .collect();
        let trusts: BTreeMap<String, f64> = ns.iter().map(|v| (v.clone(), self.trust(u, v, cfg))).collect();
        let nsim = Self::minmax(&sims);
        let ntr = Self::minmax(&trusts);
        let lambda = if trust_on { cfg.fusion.lambda() } else { 1.0 };
        ns.iter()
            .map(|v| {
                let rank = lambda * nsim[v] + (1.0 - lambda) * ntr[v];
                (v.clone(), [sims[v], trusts[v], nsim[v], ntr[v], rank])
            })
            .collect()
    }

    pub fn top_k(&self, ctx: &BTreeMap<String, [f64; 5]>, k: usize) -> Vec<String> {
        let mut all: Vec<(&String, f64)> = ctx.iter().map(|(v, rec)| (v, rec[4])).collect();
        all.sort_by(|a, b| quantize(b.1).cmp(&quantize(a.1)).then(a.0.cmp(b.0)));
        all.into_iter().take(k).map(|(v, _)| v.clone()).collect()
    }

    pub fn score(&self, r: &str, top: &[String], ctx: &BTreeMap<String, [f64; 5]>, scheme: WeightingScheme) -> f64 {
        let mut s = 0.0;
        for v in top {
            s += self.cell(scheme, v, r) * ctx[v][0];
        }
        s / top.len() as f64
    }

    pub fn recommend(
        &self,
        u: &str,
        k: usize,
        n: usize,
        scheme: WeightingScheme,
        trust_on: bool,
        cfg: &ScoringConfig,
    ) -> Vec<(String, f64)> {
        let ctx = self.context(u, scheme, trust_on, cfg);
        if ctx.is_empty() {
            return Vec::new();
        }
        let top = self.top_k(&ctx, k);
        let mut scored: Vec<(String, f64)> = self
            .candidates(u)
            .into_iter()
            .map(|r| {
                let s = self.score(&r, &top, &ctx, scheme);
                (r, s)
            })
            .filter(|(_, s)| *s > 0.0)
            .collect();
        scored.sort_by(|a, b| quantize(b.1).cmp(&quantize(a.1)).then(a.0.cmp(&b.0)));
        scored.truncate(n);
        scored
    }
}

/// `(recall, precision, coverage, users)` for one variant and `k`, using
/// fixed-N precision. `test` holds `(user, item)` pairs.
pub fn oracle_metrics(
    train: &Oracle,
    test: &[(String, String)],
    k: usize,
    n: usize,
    scheme: WeightingScheme,
    trust_on: bool,
    cfg: &ScoringConfig,
) -> (f64, f64, f64, usize) {
    let test_users: BTreeSet<&String> = test.iter().map(|x| &x.0).collect();
    let test_items: BTreeSet<&String> = test.iter().map(|x| &x.1).collect();
    let mut covered = BTreeSet::new();
    let (mut rs, mut ps, mut users) = (0.0, 0.0, 0usize);
    for u in test_users {
        if train.neighbors(u).is_empty() {
            continue;
        }
        users += 1;
        let mine: BTreeSet<&String> = test.iter().filter(|x| &x.0 == u).map(|x| &x.1).collect();
        let recs = train.recommend(u, k, n, scheme, trust_on, cfg);
        let hits = recs.iter().filter(|(r, _)| mine.contains(r)).count() as f64;
        rs += hits / mine.len() as f64;
        ps += hits / n as f64;
        for (r, _) in recs {
            if test_items.contains(&r) {
                covered.insert(r);
            }
        }
    }
    let mean = |x: f64| if users == 0 { 0.0 } else { x / users as f64 };
    (mean(rs), mean(ps), covered.len() as f64 / test_items.len() as f64, users)
}

/// Compares every intermediate quantity and every recommendation list the
/// engine produces for `txs` against the reference. Returns the number of
/// values compared, or a description of the first mismatch.
pub fn compare_with_oracle(txs: &[Transaction], cfg: &ScoringConfig, tol: f64) -> Result<usize, String> {
    use tagtrust::eval::ExperimentVariant;
    use tagtrust::neighborhood::{candidate_items, neighbors_of, Neighborhood};
    use tagtrust::profiles::build_profiles;
    use tagtrust::recommend::{recommend_top_n, score_item, select_top_k_neighbors};
    use tagtrust::scoring::{build_context, resource_importance};
    use tagtrust::store::{ProfileStore, ShardedStore};

    let oracle = Oracle::new(txs);
    let store = ShardedStore::in_memory(3).map_err(|e| e.to_string())?;
    build_profiles(txs, &store).map_err(|e| e.to_string())?;

    let mut compared = 0usize;
    let mut check = |what: String, got: f64, want: f64| -> Result<(), String> {
        compared += 1;
        if (got - want).abs() > tol || !got.is_finite() {
            Err(format!("{what}: engine {got} vs oracle {want}"))
        } else {
            Ok(())
        }
    };

    for u in oracle.users() {
        let profile = store.get_user(&u).ok_or(format!("no profile for {u}"))?;
        for t in oracle.user_tags(&u) {
            check(format!("tag_score({u},{t})"), profile.tag_score(&t).map_err(|e| e.to_string())?, oracle.tag_score(&u, &t))?;
        }
        for r in oracle.items(&u) {
            check(format!("W({u},{r})"), profile.item_weight(&r).map_err(|e| e.to_string())?, oracle.item_weight(&u, &r))?;
        }
    }
    for r in oracle.all_items() {
        let item = store.get_item(&r).ok_or(format!("no profile for {r}"))?;
        for t in oracle.item_tags(&r) {
            check(format!("V_{r}({t})"), item.tag_information_value(&t).map_err(|e| e.to_string())?, oracle.info_value(&r, &t))?;
        }
        for u in oracle.taggers(&r) {
            check(format!("V_TR({u},{r})"), item.transaction_trust(&u).map_err(|e| e.to_string())?, oracle.tx_trust(&u, &r))?;
        }
    }

    for u in oracle.users() {
        let ns = neighbors_of(&u, &store).map_err(|e| e.to_string())?;
        if ns.neighbors != oracle.neighbors(&u) {
            return Err(format!("neighbors({u}): {:?} vs {:?}", ns.neighbors, oracle.neighbors(&u)));
        }
        let cs = candidate_items(&ns, &store).map_err(|e| e.to_string())?;
        if cs.candidates != oracle.candidates(&u) {
            return Err(format!("candidates({u}) differ"));
        }
        let view = Neighborhood::fetch(&u, &store).map_err(|e| e.to_string())?.unwrap();
        let pool: BTreeSet<&str> = view.pool();
        if !ns.neighbors.is_empty() {
            for (r, item) in &view.item_profiles {
                if cfg.importance_pool == ImportancePool::Reduced {
                    let got = resource_importance(item, &pool).map_err(|e| e.to_string())?;
                    check(format!("I({u};{r})"), got, oracle.importance(&u, r, cfg.importance_pool))?;
                }
            }
        }

        for variant in ExperimentVariant::ALL {
            let scheme = variant.scheme();
            let trust_on = variant.trust_enabled();
            let ctx = build_context(&view, scheme, trust_on, cfg).map_err(|e| e.to_string())?;
            let octx = oracle.context(&u, scheme, trust_on, cfg);
            if ctx.records.len() != octx.len() {
                return Err(format!("context size for {u}"));
            }
            for rec in &ctx.records {
                let o = octx.get(&rec.neighbor_id).ok_or("neighbor missing from oracle")?;
                let got = [rec.similarity, rec.trust, rec.norm_similarity, rec.norm_trust, rec.rank];
                for (i, name) in ["sim", "trust", "norm_sim", "norm_trust", "rank"].iter().enumerate() {
                    check(format!("{name}({u},{}) [{variant}]", rec.neighbor_id), got[i], o[i])?;
                }
            }
            for k in [1usize, 2, 3, 5, 50] {
                let top = if ctx.records.is_empty() {
                    Vec::new()
                } else {
                    select_top_k_neighbors(&ctx, k).map_err(|e| e.to_string())?
                };
                let otop = oracle.top_k(&octx, k);
                if top != otop {
                    return Err(format!("top-{k}({u}) [{variant}]: {top:?} vs {otop:?}"));
                }
                if !top.is_empty() {
                    for r in &view.candidates.candidates {
                        let got = score_item(r, &top, &ctx, &view).map_err(|e| e.to_string())?;
                        check(format!("score({u},{r}) k={k} [{variant}]"), got, oracle.score(r, &otop, &octx, scheme))?;
                    }
                }
                for n in [1usize, 3, 10] {
                    let list = recommend_top_n(&u, k, n, variant, cfg, &store).map_err(|e| e.to_string())?;
                    let want = oracle.recommend(&u, k, n, scheme, trust_on, cfg);
                    let got_ids: Vec<&str> = list.items().collect();
                    let want_ids: Vec<&str> = want.iter().map(|(r, _)| r.as_str()).collect();
                    if got_ids != want_ids {
                        return Err(format!("list({u}) k={k} n={n} [{variant}]: {got_ids:?} vs {want_ids:?}"));
                    }
                    for (e, (_, s)) in list.entries.iter().zip(&want) {
                        check(format!("list score {}", e.item_id), e.score, *s)?;
                    }
                }
            }
        }
    }
    Ok(compared)
}

/// Runs every variant for every user through a recording store and checks
/// that each call reads only the user, the user's items, the neighbors and
/// the candidate items. Returns the number of calls checked.
pub fn check_access_discipline(txs: &[Transaction], k: usize, n: usize) -> Result<usize, String> {
    use tagtrust::eval::ExperimentVariant;
    use tagtrust::profiles::build_profiles;
    use tagtrust::recommend::recommend_top_n;
    use tagtrust::store::{ProfileKey, RecordingStore, ShardedStore};

    let oracle = Oracle::new(txs);
    let inner = ShardedStore::in_memory(4).map_err(|e| e.to_string())?;
    build_profiles(txs, &inner).map_err(|e| e.to_string())?;
    let store = RecordingStore::new(inner);
    let cfg = ScoringConfig::default();
    let mut calls = 0;
    for u in oracle.users() {
        let mut allowed: BTreeSet<ProfileKey> = BTreeSet::new();
        allowed.insert(ProfileKey::user(u.as_str()));
        allowed.extend(oracle.items(&u).into_iter().map(ProfileKey::item));
        allowed.extend(oracle.neighbors(&u).into_iter().map(ProfileKey::user));
        allowed.extend(oracle.candidates(&u).into_iter().map(ProfileKey::item));
        for variant in ExperimentVariant::ALL {
            store.take_reads();
            recommend_top_n(&u, k, n, variant, &cfg, &store).map_err(|e| e.to_string())?;
            let reads = store.take_reads();
            if let Some(bad) = reads.iter().find(|key| !allowed.contains(*key)) {
                return Err(format!("{u} [{variant}] read {bad} outside its neighborhood"));
            }
            calls += 1;
        }
    }
    Ok(calls)
}

/// The CSV report for a fixed split, evaluated on a dedicated pool of
/// `threads` workers.
pub fn report_csv_on_pool(
    training: &tagtrust::ingest::Corpus,
    testing: &tagtrust::ingest::Corpus,
    cfg: &tagtrust::eval::ExperimentConfig,
    threads: usize,
) -> Result<String, String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| e.to_string())?;
    pool.install(|| tagtrust::eval::run_experiment(training, testing, cfg))
        .map(|r| r.to_csv())
        .map_err(|e| e.to_string())
}
