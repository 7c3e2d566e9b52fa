//! Fixed-capacity FIFO transition store.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::geom::Vec3;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec3,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// A sampled minibatch, one row per transition.
#[derive(Clone, Debug)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub action: Array2<f64>,
    pub reward: Array1<f64>,
    pub next_obs: Array2<f64>,
    pub done: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }

    pub fn from_transitions(ts: &[Transition]) -> Self {
        let dim = ts.first().map_or(0, |t| t.obs.len());
        let n = ts.len();
        let mut obs = Array2::zeros((n, dim));
        let mut next_obs = Array2::zeros((n, dim));
        let mut action = Array2::zeros((n, 3));
        let mut reward = Array1::zeros(n);
        let mut done = Array1::zeros(n);
        for (i, t) in ts.iter().enumerate() {
            obs.row_mut(i).assign(&ndarray::ArrayView1::from(&t.obs[..]));
            next_obs.row_mut(i).assign(&ndarray::ArrayView1::from(&t.next_obs[..]));
            action.row_mut(i).assign(&ndarray::ArrayView1::from(&t.action.to_array()[..]));
            reward[i] = t.reward;
            done[i] = if t.done { 1.0 } else { 0.0 };
        }
        Self {
            obs,
            action,
            reward,
            next_obs,
            done,
        }
    }
}

/// Ring buffer; once full, each push overwrites the oldest entry.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    dim: usize,
    obs: Vec<f64>,
    next_obs: Vec<f64>,
    action: Vec<f64>,
    reward: Vec<f64>,
    done: Vec<bool>,
    len: usize,
    head: usize,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            dim: obs_dim,
            obs: Vec::new(),
            next_obs: Vec::new(),
            action: Vec::new(),
            reward: Vec::new(),
            done: Vec::new(),
            len: 0,
            head: 0,
            pushed: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Total pushes since creation.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, t: Transition) {
        assert_eq!(t.obs.len(), self.dim, "observation length mismatch");
        assert_eq!(t.next_obs.len(), self.dim, "observation length mismatch");
        let a = t.action.to_array();
        if self.len < self.capacity {
            self.obs.extend_from_slice(&t.obs);
            self.next_obs.extend_from_slice(&t.next_obs);
            self.action.extend_from_slice(&a);
            self.reward.push(t.reward);
            self.done.push(t.done);
            self.len += 1;
        } else {
            let i = self.head;
            self.obs[i * self.dim..(i + 1) * self.dim].copy_from_slice(&t.obs);
            self.next_obs[i * self.dim..(i + 1) * self.dim].copy_from_slice(&t.next_obs);
            self.action[i * 3..i * 3 + 3].copy_from_slice(&a);
            self.reward[i] = t.reward;
            self.done[i] = t.done;
        }
        self.head = (self.head + 1) % self.capacity;
        self.pushed += 1;
    }

    /// Transitions from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = Transition> + '_ {
        let start = if self.len < self.capacity { 0 } else { self.head };
        (0..self.len).map(move |k| self.get((start + k) % self.capacity))
    }

    fn get(&self, i: usize) -> Transition {
        Transition {
            obs: self.obs[i * self.dim..(i + 1) * self.dim].to_vec(),
            action: Vec3::from_slice(&self.action[i * 3..i * 3 + 3]),
            reward: self.reward[i],
            next_obs: self.next_obs[i * self.dim..(i + 1) * self.dim].to_vec(),
            done: self.done[i],
        }
    }

    /// Uniform sample of `min(n, len)` distinct slots.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Batch {
        let n = n.min(self.len);
        let idx = rand::seq::index::sample(rng, self.len, n);
        let mut obs = Array2::zeros((n, self.dim));
        let mut next_obs = Array2::zeros((n, self.dim));
        let mut action = Array2::zeros((n, 3));
        let mut reward = Array1::zeros(n);
        let mut done = Array1::zeros(n);
        for (row, i) in idx.iter().enumerate() {
            let d = self.dim;
            obs.row_mut(row)
                .as_slice_mut()
                .unwrap()
                .copy_from_slice(&self.obs[i * d..(i + 1) * d]);
            next_obs
                .row_mut(row)
                .as_slice_mut()
                .unwrap()
                .copy_from_slice(&self.next_obs[i * d..(i + 1) * d]);
            action
                .row_mut(row)
                .as_slice_mut()
                .unwrap()
                .copy_from_slice(&self.action[i * 3..i * 3 + 3]);
            reward[row] = self.reward[i];
            done[row] = if self.done[i] { 1.0 } else { 0.0 };
        }
        Batch {
            obs,
            action,
            reward,
            next_obs,
            done,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(k: usize) -> Transition {
        Transition {
            obs: vec![k as f64, 0.0],
            action: Vec3::ZERO,
            reward: k as f64,
            next_obs: vec![k as f64 + 1.0, 0.0],
            done: k % 2 == 0,
        }
    }

    #[test]
    fn sample_without_replacement() {
        let mut b = ReplayBuffer::new(50, 2);
        for k in 0..50 {
            b.push(t(k));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = b.sample(50, &mut rng);
        let mut seen: Vec<i64> = batch.reward.iter().map(|r| *r as i64).collect();
        seen.sort();
        assert_eq!(seen, (0..50).collect::<Vec<_>>());
        for i in 0..50 {
            assert_eq!(batch.obs[[i, 0]], batch.reward[i]);
            assert_eq!(batch.done[i], if batch.reward[i] as usize % 2 == 0 { 1.0 } else { 0.0 });
        }
    }

    proptest! {
        #[test]
        fn fifo_eviction(cap in 1usize..20, n in 0usize..60) {
            let mut b = ReplayBuffer::new(cap, 2);
            for k in 0..n {
                b.push(t(k));
                prop_assert!(b.len() <= cap);
            }
            let kept: Vec<usize> = b.iter().map(|x| x.reward as usize).collect();
            let expect: Vec<usize> = (n.saturating_sub(cap)..n).collect();
            prop_assert_eq!(kept, expect);
        }
    }
}
