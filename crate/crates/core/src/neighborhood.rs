//! Neighbor and candidate-item discovery.
//!
//! Neighbors are found through the taggers recorded in the profiles of the
//! items a user tagged; candidates through the profiles of those neighbors.
//! Nothing here enumerates the store.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::profiles::{ItemProfile, UserProfile};
use crate::store::ProfileStore;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NeighborSet {
    pub user_id: String,
    /// The user's own items, as read from their profile.
    pub user_items: BTreeSet<String>,
    pub neighbors: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CandidateSet {
    pub user_id: String,
    pub candidates: BTreeSet<String>,
}

fn missing(kind: &str, id: &str) -> Error {
    Error::MissingProfile(format!("{kind}:{id}"))
}

fn discover_neighbors<S: ProfileStore + ?Sized>(
    user: &UserProfile,
    store: &S,
) -> Result<(NeighborSet, BTreeMap<String, Arc<ItemProfile>>)> {
    let mut neighbors = BTreeSet::new();
    let mut own_items = BTreeMap::new();
    for item in user.items.keys() {
        let profile = store.get_item(item).ok_or_else(|| missing("item", item))?;
        neighbors.extend(
            profile
                .taggers
                .keys()
                .filter(|v| **v != user.user_id)
                .cloned(),
        );
        own_items.insert(item.clone(), profile);
    }
    let set = NeighborSet {
        user_id: user.user_id.clone(),
        user_items: user.items.keys().cloned().collect(),
        neighbors,
    };
    Ok((set, own_items))
}

fn discover_candidates<S: ProfileStore + ?Sized>(
    neighbors: &NeighborSet,
    store: &S,
) -> Result<(CandidateSet, BTreeMap<String, Arc<UserProfile>>)> {
    let mut candidates = BTreeSet::new();
    let mut profiles = BTreeMap::new();
    for v in &neighbors.neighbors {
        let profile = store.get_user(v).ok_or_else(|| missing("user", v))?;
        candidates.extend(
            profile
                .items
                .keys()
                .filter(|r| !neighbors.user_items.contains(*r))
                .cloned(),
        );
        profiles.insert(v.clone(), profile);
    }
    let set = CandidateSet {
        user_id: neighbors.user_id.clone(),
        candidates,
    };
    Ok((set, profiles))
}

/// Users who tagged at least one item in common with `user`.
///
/// Reads the user's profile and the profiles of the user's items. A user
/// without a profile has no neighbors.
pub fn neighbors_of<S: ProfileStore + ?Sized>(user: &str, store: &S) -> Result<NeighborSet> {
    match store.get_user(user) {
        Some(profile) => Ok(discover_neighbors(&profile, store)?.0),
        None => Ok(NeighborSet {
            user_id: user.to_string(),
            ..Default::default()
        }),
    }
}

/// Items tagged by any neighbor and not by the user. Reads neighbor profiles
/// only.
pub fn candidate_items<S: ProfileStore + ?Sized>(
    neighbors: &NeighborSet,
    store: &S,
) -> Result<CandidateSet> {
    Ok(discover_candidates(neighbors, store)?.0)
}

/// `(rows, columns)` of the user's reduced user-item matrix: one row per
/// neighbor, one column per own or candidate item.
pub fn reduced_matrix_footprint(neighbors: &NeighborSet, candidates: &CandidateSet) -> (usize, usize) {
    let columns = neighbors.user_items.union(&candidates.candidates).count();
    (neighbors.neighbors.len(), columns)
}

/// Everything one user's recommendation needs, fetched by following links
/// from that user's profile.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    pub user: Arc<UserProfile>,
    pub neighbors: NeighborSet,
    pub candidates: CandidateSet,
    pub neighbor_profiles: BTreeMap<String, Arc<UserProfile>>,
    /// Profiles of the user's own items and of all candidates.
    pub item_profiles: BTreeMap<String, Arc<ItemProfile>>,
}

impl Neighborhood {
    /// `None` when the user has no profile.
    pub fn fetch<S: ProfileStore + ?Sized>(user: &str, store: &S) -> Result<Option<Self>> {
        let Some(profile) = store.get_user(user) else {
            return Ok(None);
        };
        let (neighbors, mut item_profiles) = discover_neighbors(&profile, store)?;
        let (candidates, neighbor_profiles) = discover_candidates(&neighbors, store)?;
        for r in &candidates.candidates {
            let p = store.get_item(r).ok_or_else(|| missing("item", r))?;
            item_profiles.insert(r.clone(), p);
        }
        Ok(Some(Neighborhood {
            user: profile,
            neighbors,
            candidates,
            neighbor_profiles,
            item_profiles,
        }))
    }

    pub fn footprint(&self) -> (usize, usize) {
        reduced_matrix_footprint(&self.neighbors, &self.candidates)
    }

    /// The user followed by the neighbors, in id order.
    pub fn pool(&self) -> BTreeSet<&str> {
        self.neighbors
            .neighbors
            .iter()
            .map(String::as_str)
            .chain(std::iter::once(self.user.user_id.as_str()))
            .collect()
    }

    pub fn is_isolated(&self) -> bool {
        self.neighbors.neighbors.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Transaction;
    use crate::profiles::build_profiles;
    use crate::store::{ProfileKey, RecordingStore, ShardedStore};

    fn toy() -> ShardedStore {
        // u: m1, m2   v: m1, m3   w: m2, m4   x: m5, m6   y: m3
        let txs = [
            ("u", "m1"),
            ("u", "m2"),
            ("v", "m1"),
            ("v", "m3"),
            ("w", "m2"),
            ("w", "m4"),
            ("x", "m5"),
            ("x", "m6"),
            ("y", "m3"),
        ]
        .map(|(u, m)| Transaction::new(u, m, ["t"]));
        let store = ShardedStore::in_memory(3).unwrap();
        build_profiles(&txs, &store).unwrap();
        store
    }

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn neighbors_and_candidates() {
        let store = toy();
        let n = neighbors_of("u", &store).unwrap();
        assert_eq!(n.neighbors, set(&["v", "w"]));
        let c = candidate_items(&n, &store).unwrap();
        assert_eq!(c.candidates, set(&["m3", "m4"]));
        assert_eq!(reduced_matrix_footprint(&n, &c), (2, 4));
    }

    #[test]
    fn isolated_and_unknown_users() {
        let store = toy();
        let n = neighbors_of("nobody", &store).unwrap();
        assert!(n.neighbors.is_empty());
        assert!(candidate_items(&n, &store).unwrap().candidates.is_empty());
        assert_eq!(reduced_matrix_footprint(&n, &CandidateSet::default()), (0, 0));
        assert!(Neighborhood::fetch("nobody", &store).unwrap().is_none());
    }

    #[test]
    fn isolated_user_footprint_counts_own_items() {
        let store = ShardedStore::in_memory(1).unwrap();
        build_profiles(&[Transaction::new("solo", "m", ["t"])], &store).unwrap();
        let view = Neighborhood::fetch("solo", &store).unwrap().unwrap();
        assert!(view.is_isolated());
        assert_eq!(view.footprint(), (0, 1));
    }

    #[test]
    fn neighbor_discovery_reads_only_own_items() {
        let store = RecordingStore::new(toy());
        let n = neighbors_of("u", &store).unwrap();
        assert_eq!(
            store.take_reads(),
            [ProfileKey::user("u"), ProfileKey::item("m1"), ProfileKey::item("m2")]
                .into_iter()
                .collect()
        );
        candidate_items(&n, &store).unwrap();
        assert_eq!(
            store.take_reads(),
            [ProfileKey::user("v"), ProfileKey::user("w")].into_iter().collect()
        );
    }

    #[test]
    fn dangling_reference_is_reported() {
        let store = ShardedStore::in_memory(1).unwrap();
        let mut u = UserProfile::new("u");
        u.items.insert("ghost".into(), set(&["t"]));
        u.tag_freq.insert("t".into(), 1);
        use crate::store::ProfileStore as _;
        store.put_user(u).unwrap();
        assert!(matches!(neighbors_of("u", &store), Err(Error::MissingProfile(_))));
    }
}
