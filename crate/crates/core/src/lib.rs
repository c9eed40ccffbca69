//! Trust-aware collaborative filtering for social tagging systems.
//!
//! Users and items are kept as independent profiles behind an id-addressed
//! [`store`]. Every per-user computation starts from the user's own profile
//! and only follows links (items the user tagged, the taggers of those items,
//! the items those taggers tagged), so no step needs a global view of the
//! corpus.
//!
//! The pipeline, bottom-up:
//!
//! * [`ingest`] parses tag-assignment rows, groups them into transactions,
//!   filters rare items and splits each user's transactions into train/test.
//! * [`profiles`] maintains user profiles (tag frequencies, item weights) and
//!   item profiles (per-tag distinct-user counts, transaction trust).
//! * [`neighborhood`] discovers neighbors and candidate items through profiles.
//! * [`scoring`] computes similarity, resource importance, user trust and the
//!   fused rank value of every neighbor.
//! * [`recommend`] picks the top-k neighbors and scores candidate items.
//! * [`eval`] runs the four experiment variants over a neighborhood-size sweep.

pub mod error;
pub mod eval;
pub mod ingest;
pub mod neighborhood;
pub mod profiles;
pub mod recommend;
pub mod scoring;
pub mod store;

pub use error::{Error, Result};
