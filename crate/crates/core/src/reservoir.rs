//! Class-balanced bounded reservoir.
//!
//! Below capacity everything is kept. Once the total exceeds capacity, each
//! class gets a quota of floor(capacity / classes), the remainder going +1 to
//! the lowest class ids; a class with fewer items than its quota keeps all of
//! them and the slack is redistributed to classes that can still give more.
//! Evictions are uniform draws from the reservoir RNG, so the content is a
//! pure function of the insertion sequence and the seed.

use crate::rng::SplitMix64;
use std::collections::BTreeMap;

#[derive(Clone, Debug)]
pub struct BalancedReservoir<T> {
    capacity: usize,
    per_class: BTreeMap<u32, Vec<T>>,
    total: usize,
    rng: SplitMix64,
}

impl<T> BalancedReservoir<T> {
    pub fn new(capacity: usize, seed: u64) -> Self {
        BalancedReservoir {
            capacity,
            per_class: BTreeMap::new(),
            total: 0,
            rng: SplitMix64::new(seed),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn classes(&self) -> usize {
        self.per_class.len()
    }

    pub fn count_for(&self, class_id: u32) -> usize {
        self.per_class.get(&class_id).map_or(0, Vec::len)
    }

    /// Items of one class, in insertion order of the survivors.
    pub fn class_items(&self, class_id: u32) -> &[T] {
        self.per_class.get(&class_id).map_or(&[], Vec::as_slice)
    }

    /// (class_id, item) pairs ordered by class id, then insertion.
    pub fn iter(&self) -> impl Iterator<Item = (u32, &T)> {
        self.per_class
            .iter()
            .flat_map(|(&c, items)| items.iter().map(move |it| (c, it)))
    }

    /// Adds a batch of items and rebalances down to capacity if exceeded.
    pub fn add_batch(&mut self, items: impl IntoIterator<Item = (u32, T)>) {
        for (class, item) in items {
            self.per_class.entry(class).or_default().push(item);
            self.total += 1;
        }
        if self.total > self.capacity {
            self.rebalance();
        }
    }

    /// Per-class targets: waterfill min(available, q) with the largest q that
    /// fits the capacity, then distribute the remaining slack +1 at a time in
    /// ascending class-id order to classes that can still give more. Only
    /// called when total > capacity, so the waterfill loop terminates.
    fn targets(&self) -> BTreeMap<u32, usize> {
        let avail: Vec<(u32, usize)> = self
            .per_class
            .iter()
            .map(|(&c, items)| (c, items.len()))
            .collect();
        let fits = |q: usize| -> usize { avail.iter().map(|&(_, a)| a.min(q)).sum() };
        // q * classes <= capacity, so the starting waterfill always fits.
        let mut q = self.capacity / avail.len().max(1);
        while fits(q + 1) <= self.capacity {
            q += 1;
        }
        let mut targets: BTreeMap<u32, usize> =
            avail.iter().map(|&(c, a)| (c, a.min(q))).collect();
        // Slack is strictly smaller than the number of classes with a > q,
        // so one ascending pass exhausts it.
        let mut slack = self.capacity - targets.values().sum::<usize>();
        for &(c, a) in &avail {
            if slack == 0 {
                break;
            }
            let t = targets.get_mut(&c).unwrap();
            if *t < a {
                *t += 1;
                slack -= 1;
            }
        }
        targets
    }

    fn rebalance(&mut self) {
        let targets = self.targets();
        for (&class, items) in self.per_class.iter_mut() {
            let target = targets.get(&class).copied().unwrap_or(0);
            while items.len() > target {
                let victim = self.rng.uniform_usize(0, items.len() - 1);
                items.remove(victim);
                self.total -= 1;
            }
        }
        self.per_class.retain(|_, items| !items.is_empty());
    }
}
