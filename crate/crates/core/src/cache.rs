//! Bounded FIFO cache of past episodes and their historical prediction
//! matrices, replayed under the current model.

use std::collections::VecDeque;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::episodes::MultiViewEpisode;
use crate::error::{Error, Result};
use crate::losses::PredictionMatrix;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CacheConfig {
    pub capacity: usize,
    /// Training steps between replays.
    pub replay_every: u64,
    /// Replace the stored prediction matrix by the replayed one after each replay.
    pub update_h_on_replay: bool,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig { capacity: 64, replay_every: 1, update_h_on_replay: true }
    }
}

impl CacheConfig {
    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 || self.replay_every == 0 {
            return Err(Error::invalid("cache capacity and replay_every must be >= 1"));
        }
        Ok(())
    }
}

/// A stored episode (post-augmentation arrays) with the prediction matrix the
/// model produced for its view-1 queries at step `stage`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub episode_id: u64,
    pub episode: MultiViewEpisode,
    pub history: PredictionMatrix,
    pub stage: u64,
}

impl CacheEntry {
    fn validate(&self) -> Result<()> {
        let ep = &self.episode.view1;
        if self.history.shape() != (ep.n_way, ep.q_query) {
            return Err(Error::shape(format!(
                "history is {:?} but episode is {}-way with {} queries per class",
                self.history.shape(),
                ep.n_way,
                ep.q_query
            )));
        }
        if self.episode_id != self.episode.episode_id {
            return Err(Error::invalid("cache entry id differs from its episode id"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayCache {
    config: CacheConfig,
    entries: VecDeque<CacheEntry>,
}

impl ReplayCache {
    pub fn new(config: CacheConfig) -> Result<Self> {
        config.validate()?;
        Ok(ReplayCache { config, entries: VecDeque::with_capacity(config.capacity) })
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries from oldest to newest.
    pub fn entries(&self) -> impl Iterator<Item = &CacheEntry> {
        self.entries.iter()
    }

    /// Appends `entry`, evicting the oldest entry once capacity is exceeded.
    pub fn push(&mut self, entry: CacheEntry) -> Result<()> {
        entry.validate()?;
        self.entries.push_back(entry);
        while self.entries.len() > self.config.capacity {
            self.entries.pop_front();
        }
        Ok(())
    }

    /// A uniformly chosen entry, or `None` when empty. The entry stays cached.
    pub fn sample_for_replay(&self, rng: &mut Rng) -> Option<&CacheEntry> {
        if self.entries.is_empty() {
            return None;
        }
        let i = rng.random_range(0..self.entries.len());
        self.entries.get(i)
    }

    /// Stores `new_history` for `episode_id` when `update_h_on_replay` is set.
    pub fn refresh(&mut self, episode_id: u64, new_history: PredictionMatrix, new_stage: u64) -> Result<()> {
        let entry = self
            .entries
            .iter_mut()
            .find(|e| e.episode_id == episode_id)
            .ok_or(Error::UnknownEpisode(episode_id))?;
        if new_history.shape() != entry.history.shape() {
            return Err(Error::shape(format!(
                "refreshed history is {:?}, stored is {:?}",
                new_history.shape(),
                entry.history.shape()
            )));
        }
        if self.config.update_h_on_replay {
            entry.history = new_history;
            entry.stage = new_stage;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episodes::{augment_episode, make_synthetic_dataset, sample_episode, AugPolicy, SyntheticParams};
    use crate::rng;
    use ndarray::Array2;

    fn entry(seed: u64, fill: f64) -> CacheEntry {
        let split = make_synthetic_dataset(&SyntheticParams {
            num_classes: 4,
            dim: 3,
            per_class: 5,
            class_sep: 2.0,
            intra_std: 1.0,
            seed: 1,
        })
        .unwrap();
        let ep = sample_episode(&split, 3, 1, 2, &mut rng::seeded(seed)).unwrap();
        let mv = augment_episode(&ep, &AugPolicy::identity(), &mut rng::seeded(0)).unwrap();
        CacheEntry {
            episode_id: mv.episode_id,
            episode: mv,
            history: PredictionMatrix::new(Array2::from_elem((3, 2), fill)).unwrap(),
            stage: seed,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut cache = ReplayCache::new(CacheConfig { capacity: 2, ..Default::default() }).unwrap();
        let entries: Vec<_> = (0..3).map(|i| entry(i, 0.5)).collect();
        for e in &entries {
            cache.push(e.clone()).unwrap();
        }
        let kept: Vec<u64> = cache.entries().map(|e| e.episode_id).collect();
        assert_eq!(kept, vec![entries[1].episode_id, entries[2].episode_id]);
    }

    #[test]
    fn empty_and_single_sampling() {
        let mut cache = ReplayCache::new(CacheConfig::default()).unwrap();
        assert!(cache.sample_for_replay(&mut rng::seeded(0)).is_none());
        let e = entry(4, 0.5);
        cache.push(e.clone()).unwrap();
        for s in 0..20 {
            assert_eq!(cache.sample_for_replay(&mut rng::seeded(s)).unwrap(), &e);
        }
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn mismatched_history_rejected() {
        let mut cache = ReplayCache::new(CacheConfig::default()).unwrap();
        let mut e = entry(1, 0.5);
        e.history = PredictionMatrix::new(Array2::from_elem((2, 2), 0.5)).unwrap();
        assert!(matches!(cache.push(e), Err(Error::Shape(_))));
        assert!(cache.is_empty());
    }

    #[test]
    fn refresh_respects_flag() {
        let e = entry(1, 0.5);
        let id = e.episode_id;
        let new_h = PredictionMatrix::new(Array2::from_elem((3, 2), 0.9)).unwrap();

        let mut frozen = ReplayCache::new(CacheConfig { update_h_on_replay: false, ..Default::default() }).unwrap();
        frozen.push(e.clone()).unwrap();
        frozen.refresh(id, new_h.clone(), 10).unwrap();
        assert_eq!(frozen.entries().next().unwrap(), &e);

        let mut live = ReplayCache::new(CacheConfig::default()).unwrap();
        live.push(e).unwrap();
        live.refresh(id, new_h.clone(), 10).unwrap();
        let stored = live.entries().next().unwrap();
        assert_eq!(stored.history, new_h);
        assert_eq!(stored.stage, 10);

        assert!(matches!(live.refresh(id ^ 1, new_h, 11), Err(Error::UnknownEpisode(_))));
    }

    #[test]
    fn config_validation() {
        assert!(ReplayCache::new(CacheConfig { capacity: 0, ..Default::default() }).is_err());
        assert!(ReplayCache::new(CacheConfig { replay_every: 0, ..Default::default() }).is_err());
    }
}
