use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Live interaction with the environment.
pub const SOURCE_LIVE: u8 = 0;
/// Harvested high-quality experience.
pub const SOURCE_HARVESTED: u8 = 1;

pub const DEFAULT_CAPACITY: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Per-agent observations.
    pub obs: Vec<Vec<f64>>,
    /// Per-agent actions.
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<Vec<f64>>,
    pub done: bool,
    pub source: u8,
}

impl Transition {
    pub fn joint_obs(&self) -> Vec<f64> {
        self.obs.concat()
    }

    pub fn joint_next_obs(&self) -> Vec<f64> {
        self.next_obs.concat()
    }

    pub fn joint_action(&self) -> Vec<f64> {
        self.actions.concat()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub n_agents: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
}

impl Schema {
    fn check(&self, t: &Transition) -> Result<()> {
        let bad = |what: &str| Err(Error::SchemaMismatch(what.to_string()));
        if t.source > SOURCE_HARVESTED {
            return bad("source tag must be 0 or 1");
        }
        let n = self.n_agents;
        if t.obs.len() != n || t.next_obs.len() != n || t.actions.len() != n || t.rewards.len() != n {
            return bad("agent count");
        }
        if t.obs.iter().chain(&t.next_obs).any(|o| o.len() != self.obs_dim) {
            return bad("observation length");
        }
        if t.actions.iter().any(|a| a.len() != self.action_dim) {
            return bad("action length");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFilter {
    Any,
    Only1,
    /// Half live, half harvested (the odd item is live).
    Mixed,
}

/// Fixed-capacity ring of transitions with per-source counts. Eviction is
/// oldest first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    schema: Schema,
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
    counts: [usize; 2],
    pushes: u64,
}

impl ReplayBuffer {
    pub fn new(schema: Schema, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("replay capacity must be positive".into()));
        }
        Ok(Self {
            schema,
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
            counts: [0, 0],
            pushes: 0,
        })
    }

    pub fn schema(&self) -> Schema {
        self.schema
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Stored transitions per source tag.
    pub fn counts(&self) -> [usize; 2] {
        self.counts
    }

    pub fn total_pushes(&self) -> u64 {
        self.pushes
    }

    pub fn evictions(&self) -> u64 {
        self.pushes - self.items.len() as u64
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        self.schema.check(&t)?;
        self.counts[t.source as usize] += 1;
        self.pushes += 1;
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            let old = std::mem::replace(&mut self.items[self.head], t);
            self.counts[old.source as usize] -= 1;
            self.head = (self.head + 1) % self.capacity;
        }
        Ok(())
    }

    /// Items in insertion order, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items[self.head..].iter().chain(&self.items[..self.head])
    }

    fn indices_of(&self, source: u8) -> Vec<usize> {
        self.items
            .iter()
            .enumerate()
            .filter(|(_, t)| t.source == source)
            .map(|(i, _)| i)
            .collect()
    }

    fn pick<'a, R: Rng + ?Sized>(&'a self, pool: &[usize], n: usize, rng: &mut R, out: &mut Vec<&'a Transition>) {
        for i in index::sample(rng, pool.len(), n) {
            out.push(&self.items[pool[i]]);
        }
    }

    /// Uniform sample without replacement among items passing `filter`.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, filter: SourceFilter, rng: &mut R) -> Result<Vec<&Transition>> {
        if batch == 0 {
            return Err(Error::EmptyBatch);
        }
        let under = |available| Err(Error::UnderFilled {
            requested: batch,
            available,
        });
        let mut out = Vec::with_capacity(batch);
        match filter {
            SourceFilter::Any => {
                if self.len() < batch {
                    return under(self.len());
                }
                for i in index::sample(rng, self.len(), batch) {
                    out.push(&self.items[i]);
                }
            }
            SourceFilter::Only1 => {
                if self.counts[1] < batch {
                    return under(self.counts[1]);
                }
                let pool = self.indices_of(SOURCE_HARVESTED);
                self.pick(&pool, batch, rng, &mut out);
            }
            SourceFilter::Mixed => {
                let n1 = batch / 2;
                let n0 = batch - n1;
                if self.counts[0] < n0 || self.counts[1] < n1 {
                    return under(self.counts[0].min(n0) + self.counts[1].min(n1));
                }
                let pool0 = self.indices_of(SOURCE_LIVE);
                let pool1 = self.indices_of(SOURCE_HARVESTED);
                self.pick(&pool0, n0, rng, &mut out);
                self.pick(&pool1, n1, rng, &mut out);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn schema() -> Schema {
        Schema {
            n_agents: 1,
            obs_dim: 1,
            action_dim: 1,
        }
    }

    fn item(x: f64, source: u8) -> Transition {
        Transition {
            obs: vec![vec![x]],
            actions: vec![vec![0.0]],
            rewards: vec![0.0],
            next_obs: vec![vec![x]],
            done: false,
            source,
        }
    }

    #[test]
    fn ring_eviction() {
        let mut b = ReplayBuffer::new(schema(), 3).unwrap();
        for i in 0..4 {
            b.push(item(i as f64, 0)).unwrap();
        }
        assert_eq!(b.len(), 3);
        let xs: Vec<f64> = b.iter().map(|t| t.obs[0][0]).collect();
        assert_eq!(xs, vec![1.0, 2.0, 3.0]);
        assert_eq!(b.evictions(), 1);
    }

    #[test]
    fn counters_follow_sources() {
        let mut b = ReplayBuffer::new(schema(), 1000).unwrap();
        b.push(item(0.0, 1)).unwrap();
        assert_eq!(b.counts(), [0, 1]);
        let mut b = ReplayBuffer::new(schema(), 1000).unwrap();
        for i in 0..150 {
            b.push(item(0.0, if i % 3 == 2 { 1 } else { 0 })).unwrap();
        }
        assert_eq!(b.counts(), [100, 50]);
    }

    #[test]
    fn schema_mismatch_rejected() {
        let mut b = ReplayBuffer::new(schema(), 4).unwrap();
        let mut t = item(0.0, 0);
        t.obs[0].push(1.0);
        assert!(matches!(b.push(t), Err(Error::SchemaMismatch(_))));
        assert!(b.push(item(0.0, 2)).is_err());
        assert!(b.is_empty());
    }

    #[test]
    fn filters() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut b = ReplayBuffer::new(schema(), 100).unwrap();
        b.push(item(7.0, 0)).unwrap();
        assert!(matches!(
            b.sample(1, SourceFilter::Only1, &mut rng),
            Err(Error::UnderFilled { available: 0, .. })
        ));
        assert_eq!(b.sample(1, SourceFilter::Any, &mut rng).unwrap()[0].obs[0][0], 7.0);
        for i in 0..20 {
            b.push(item(i as f64, (i % 2) as u8)).unwrap();
        }
        let s = b.sample(10, SourceFilter::Only1, &mut rng).unwrap();
        assert!(s.iter().all(|t| t.source == 1));
        let s = b.sample(9, SourceFilter::Mixed, &mut rng).unwrap();
        assert_eq!(s.iter().filter(|t| t.source == 1).count(), 4);
        assert!(b.sample(30, SourceFilter::Any, &mut rng).is_err());
    }

    #[test]
    fn no_replacement_within_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut b = ReplayBuffer::new(schema(), 50).unwrap();
        for i in 0..50 {
            b.push(item(i as f64, 0)).unwrap();
        }
        let mut xs: Vec<f64> = b.sample(50, SourceFilter::Any, &mut rng).unwrap().iter().map(|t| t.obs[0][0]).collect();
        xs.sort_by(f64::total_cmp);
        assert_eq!(xs, (0..50).map(|i| i as f64).collect::<Vec<_>>());
    }
}
