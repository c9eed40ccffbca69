//! Id-addressed profile storage.
//!
//! Profiles are only reachable through their [`ProfileKey`]. A [`ShardMap`]
//! routes every key to exactly one of several independent partitions, which
//! stand in for separately operated servers. [`ShardedStore`] is the
//! in-memory backend; [`ShardedStore::save`] and [`ShardedStore::load`]
//! persist it as one line-delimited file per shard.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::{ItemProfile, UserProfile};

const FORMAT_HEADER: &str = "#tagtrust-profiles v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    User,
    Item,
}

impl ProfileKind {
    fn as_str(self) -> &'static str {
        match self {
            ProfileKind::User => "user",
            ProfileKind::Item => "item",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProfileKey {
    kind: ProfileKind,
    id: String,
}

impl ProfileKey {
    pub fn new(kind: ProfileKind, id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::InvalidArgument("profile id must be non-empty".into()));
        }
        Ok(ProfileKey { kind, id })
    }

    /// Panics on an empty id.
    pub fn user(id: impl Into<String>) -> Self {
        Self::new(ProfileKind::User, id).expect("empty user id")
    }

    /// Panics on an empty id.
    pub fn item(id: impl Into<String>) -> Self {
        Self::new(ProfileKind::Item, id).expect("empty item id")
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Parses the `kind:id` form produced by `Display`.
    pub fn parse(s: &str) -> Result<Self> {
        let (kind, id) = s
            .split_once(':')
            .ok_or_else(|| Error::StoreFormat(format!("bad key {s:?}")))?;
        let kind = match kind {
            "user" => ProfileKind::User,
            "item" => ProfileKind::Item,
            other => return Err(Error::StoreFormat(format!("bad key kind {other:?}"))),
        };
        Self::new(kind, id)
    }
}

impl fmt::Display for ProfileKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.as_str(), self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    User(Arc<UserProfile>),
    Item(Arc<ItemProfile>),
}

impl Profile {
    pub fn key(&self) -> ProfileKey {
        match self {
            Profile::User(p) => ProfileKey::user(p.user_id.clone()),
            Profile::Item(p) => ProfileKey::item(p.item_id.clone()),
        }
    }

    fn kind(&self) -> ProfileKind {
        match self {
            Profile::User(_) => ProfileKind::User,
            Profile::Item(_) => ProfileKind::Item,
        }
    }
}

/// FNV-1a, 64 bit.
fn fnv1a(data: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &byte in data {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardMap {
    shard_count: usize,
}

impl ShardMap {
    pub fn new(shard_count: usize) -> Result<Self> {
        if shard_count == 0 {
            return Err(Error::InvalidArgument("shard_count must be positive".into()));
        }
        Ok(ShardMap { shard_count })
    }

    pub fn shard_count(&self) -> usize {
        self.shard_count
    }

    /// Stable shard index in `[0, shard_count)`.
    pub fn route(&self, key: &ProfileKey) -> usize {
        if self.shard_count == 1 {
            return 0;
        }
        let mut h = fnv1a(key.kind.as_str().as_bytes());
        h ^= fnv1a(key.id.as_bytes()).rotate_left(1);
        (h % self.shard_count as u64) as usize
    }
}

/// Read/write access to profiles by key.
///
/// Absence is a value: `get_profile` never fabricates an empty profile.
pub trait ProfileStore: Send + Sync {
    fn get_profile(&self, key: &ProfileKey) -> Option<Profile>;

    /// Last write wins. Fails only when the key and profile kinds disagree.
    fn put_profile(&self, key: ProfileKey, profile: Profile) -> Result<()>;

    fn get_user(&self, id: &str) -> Option<Arc<UserProfile>> {
        match self.get_profile(&ProfileKey::new(ProfileKind::User, id).ok()?) {
            Some(Profile::User(p)) => Some(p),
            _ => None,
        }
    }

    fn get_item(&self, id: &str) -> Option<Arc<ItemProfile>> {
        match self.get_profile(&ProfileKey::new(ProfileKind::Item, id).ok()?) {
            Some(Profile::Item(p)) => Some(p),
            _ => None,
        }
    }

    fn put_user(&self, profile: UserProfile) -> Result<()> {
        let profile = Profile::User(Arc::new(profile));
        self.put_profile(profile.key(), profile)
    }

    fn put_item(&self, profile: ItemProfile) -> Result<()> {
        let profile = Profile::Item(Arc::new(profile));
        self.put_profile(profile.key(), profile)
    }
}

fn check_kind(key: &ProfileKey, profile: &Profile) -> Result<()> {
    if key.kind != profile.kind() || key != &profile.key() {
        return Err(Error::InvalidArgument(format!(
            "key {key} does not match profile {}",
            profile.key()
        )));
    }
    Ok(())
}

type Shard = RwLock<HashMap<ProfileKey, Profile>>;

/// Independent key-value partitions behind a [`ShardMap`].
///
/// Each shard has its own lock, so writes to one key are serialized while
/// reads and writes on other shards proceed independently.
#[derive(Debug)]
pub struct ShardedStore {
    map: ShardMap,
    shards: Vec<Shard>,
}

impl ShardedStore {
    pub fn new(map: ShardMap) -> Self {
        let shards = (0..map.shard_count()).map(|_| RwLock::new(HashMap::new())).collect();
        ShardedStore { map, shards }
    }

    pub fn in_memory(shard_count: usize) -> Result<Self> {
        Ok(Self::new(ShardMap::new(shard_count)?))
    }

    pub fn shard_map(&self) -> ShardMap {
        self.map
    }

    /// Number of profiles held by each shard.
    pub fn shard_sizes(&self) -> Vec<usize> {
        self.shards.iter().map(|s| s.read().unwrap().len()).collect()
    }

    /// Every stored key, sorted.
    pub fn keys(&self) -> Vec<ProfileKey> {
        let mut keys: Vec<ProfileKey> = self
            .shards
            .iter()
            .flat_map(|s| s.read().unwrap().keys().cloned().collect::<Vec<_>>())
            .collect();
        keys.sort();
        keys
    }

    pub fn user_ids(&self) -> BTreeSet<String> {
        self.ids_of(ProfileKind::User)
    }

    pub fn item_ids(&self) -> BTreeSet<String> {
        self.ids_of(ProfileKind::Item)
    }

    fn ids_of(&self, kind: ProfileKind) -> BTreeSet<String> {
        self.shards
            .iter()
            .flat_map(|s| {
                s.read()
                    .unwrap()
                    .keys()
                    .filter(|k| k.kind == kind)
                    .map(|k| k.id.clone())
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    fn shard_file(dir: &Path, index: usize) -> PathBuf {
        dir.join(format!("shard-{index:03}.jsonl"))
    }

    /// Writes one file per shard into `dir`, records sorted by key.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let count = self.map.shard_count();
        for (index, shard) in self.shards.iter().enumerate() {
            let guard = shard.read().unwrap();
            let mut entries: Vec<(&ProfileKey, &Profile)> = guard.iter().collect();
            entries.sort_by(|a, b| a.0.cmp(b.0));
            let mut w = BufWriter::new(fs::File::create(Self::shard_file(dir, index))?);
            writeln!(w, "{FORMAT_HEADER} shard={index}/{count}")?;
            for (key, profile) in entries {
                let record = Record {
                    key: key.to_string(),
                    profile: profile.clone(),
                };
                let line = serde_json::to_string(&record)
                    .map_err(|e| Error::StoreFormat(e.to_string()))?;
                writeln!(w, "{line}")?;
            }
            w.flush()?;
        }
        Ok(())
    }

    /// Reads a directory written by [`save`](Self::save). The shard count is
    /// taken from the files; every record must route to the shard it is in.
    pub fn load(dir: &Path) -> Result<Self> {
        let first = Self::shard_file(dir, 0);
        let header = read_header(&first)?;
        let count = header.1;
        let store = Self::new(ShardMap::new(count)?);
        for index in 0..count {
            let path = Self::shard_file(dir, index);
            let reader = BufReader::new(fs::File::open(&path)?);
            let mut lines = reader.lines();
            let head = lines
                .next()
                .transpose()?
                .ok_or_else(|| Error::StoreFormat(format!("{} is empty", path.display())))?;
            let (idx, n) = parse_header(&head)?;
            if idx != index || n != count {
                return Err(Error::StoreFormat(format!(
                    "{} claims shard {idx}/{n}, expected {index}/{count}",
                    path.display()
                )));
            }
            let mut shard = store.shards[index].write().unwrap();
            for (lineno, line) in lines.enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: Record = serde_json::from_str(&line).map_err(|e| {
                    Error::StoreFormat(format!("{}:{}: {e}", path.display(), lineno + 2))
                })?;
                let key = ProfileKey::parse(&record.key)?;
                check_kind(&key, &record.profile)?;
                if store.map.route(&key) != index {
                    return Err(Error::StoreFormat(format!("{key} stored in wrong shard {index}")));
                }
                shard.insert(key, record.profile);
            }
        }
        Ok(store)
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    key: String,
    profile: Profile,
}

fn read_header(path: &Path) -> Result<(usize, usize)> {
    let reader = BufReader::new(fs::File::open(path)?);
    let line = reader
        .lines()
        .next()
        .transpose()?
        .ok_or_else(|| Error::StoreFormat(format!("{} is empty", path.display())))?;
    parse_header(&line)
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let rest = line
        .strip_prefix(FORMAT_HEADER)
        .and_then(|r| r.trim().strip_prefix("shard="))
        .ok_or_else(|| Error::StoreFormat(format!("unsupported header {line:?}")))?;
    let (i, n) = rest
        .split_once('/')
        .ok_or_else(|| Error::StoreFormat(format!("bad shard header {line:?}")))?;
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::StoreFormat(format!("bad shard header {line:?}")))
    };
    Ok((parse(i)?, parse(n)?))
}

impl ProfileStore for ShardedStore {
    fn get_profile(&self, key: &ProfileKey) -> Option<Profile> {
        self.shards[self.map.route(key)].read().unwrap().get(key).cloned()
    }

    fn put_profile(&self, key: ProfileKey, profile: Profile) -> Result<()> {
        check_kind(&key, &profile)?;
        let shard = self.map.route(&key);
        self.shards[shard].write().unwrap().insert(key, profile);
        Ok(())
    }
}

impl<S: ProfileStore + ?Sized> ProfileStore for &S {
    fn get_profile(&self, key: &ProfileKey) -> Option<Profile> {
        (**self).get_profile(key)
    }

    fn put_profile(&self, key: ProfileKey, profile: Profile) -> Result<()> {
        (**self).put_profile(key, profile)
    }
}

impl<S: ProfileStore + ?Sized> ProfileStore for Arc<S> {
    fn get_profile(&self, key: &ProfileKey) -> Option<Profile> {
        (**self).get_profile(key)
    }

    fn put_profile(&self, key: ProfileKey, profile: Profile) -> Result<()> {
        (**self).put_profile(key, profile)
    }
}

/// Wraps a store and records every key read through it.
#[derive(Debug)]
pub struct RecordingStore<S> {
    inner: S,
    reads: Mutex<Vec<ProfileKey>>,
}

impl<S: ProfileStore> RecordingStore<S> {
    pub fn new(inner: S) -> Self {
        RecordingStore {
            inner,
            reads: Mutex::new(Vec::new()),
        }
    }

    /// Distinct keys read since the last call, then clears the log.
    pub fn take_reads(&self) -> BTreeSet<ProfileKey> {
        std::mem::take(&mut *self.reads.lock().unwrap())
            .into_iter()
            .collect()
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

impl<S: ProfileStore> ProfileStore for RecordingStore<S> {
    fn get_profile(&self, key: &ProfileKey) -> Option<Profile> {
        self.reads.lock().unwrap().push(key.clone());
        self.inner.get_profile(key)
    }

    fn put_profile(&self, key: ProfileKey, profile: Profile) -> Result<()> {
        self.inner.put_profile(key, profile)
    }
}
