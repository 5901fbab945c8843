//! Array binary heap behind a single mutex. Snapshots copy the whole array.

use parking_lot::Mutex;

const INITIAL_CAPACITY: usize = 16;

#[derive(Debug)]
pub struct LockedArrayHeap<T> {
    storage: Mutex<Vec<T>>,
}

impl<T> Default for LockedArrayHeap<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> LockedArrayHeap<T> {
    pub fn new() -> Self {
        LockedArrayHeap {
            storage: Mutex::new(Vec::with_capacity(INITIAL_CAPACITY)),
        }
    }

    pub fn len(&self) -> usize {
        self.storage.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.lock().is_empty()
    }
}

impl<T: Ord + Clone> LockedArrayHeap<T> {
    pub fn insert(&self, elem: T) {
        let mut v = self.storage.lock();
        if v.len() == v.capacity() {
            let extra = v.capacity().max(INITIAL_CAPACITY);
            v.reserve_exact(extra);
        }
        v.push(elem);
        let last = v.len() - 1;
        sift_up(&mut v, last);
    }

    pub fn get_min(&self) -> Option<T> {
        self.storage.lock().first().cloned()
    }

    pub fn remove_min(&self) -> Option<T> {
        let mut v = self.storage.lock();
        if v.is_empty() {
            return None;
        }
        let min = v.swap_remove(0);
        sift_down(&mut v, 0);
        Some(min)
    }

    /// Full copy of the backing array, taken under the lock.
    pub fn snapshot(&self) -> LockedArrayHeap<T> {
        let copy = self.storage.lock().clone();
        LockedArrayHeap {
            storage: Mutex::new(copy),
        }
    }

    /// Contents in array order.
    pub fn iterate(&self) -> Vec<T> {
        self.storage.lock().clone()
    }

    pub fn sum(&self) -> i128
    where
        T: Copy + Into<i128>,
    {
        let snap = self.snapshot();
        let v = snap.storage.into_inner();
        v.into_iter().map(Into::into).sum()
    }

    pub fn to_sorted_vec(&self) -> Vec<T> {
        let snap = self.snapshot();
        std::iter::from_fn(|| snap.remove_min()).collect()
    }

    /// True if every parent is no larger than its children.
    pub fn is_heap_ordered(&self) -> bool {
        let v = self.storage.lock();
        (1..v.len()).all(|i| v[(i - 1) / 2] <= v[i])
    }
}

fn sift_up<T: Ord>(v: &mut [T], mut i: usize) {
    while i > 0 {
        let parent = (i - 1) / 2;
        if v[i] >= v[parent] {
            break;
        }
        v.swap(i, parent);
        i = parent;
    }
}

fn sift_down<T: Ord>(v: &mut [T], mut i: usize) {
    let n = v.len();
    loop {
        let (l, r) = (2 * i + 1, 2 * i + 2);
        let mut smallest = i;
        if l < n && v[l] < v[smallest] {
            smallest = l;
        }
        if r < n && v[r] < v[smallest] {
            smallest = r;
        }
        if smallest == i {
            return;
        }
        v.swap(i, smallest);
        i = smallest;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn insert_into_empty() {
        let h = LockedArrayHeap::new();
        h.insert(4i64);
        assert_eq!(h.iterate(), vec![4]);
    }

    #[test]
    fn min_of_three() {
        let h = LockedArrayHeap::new();
        for x in [3i64, 1, 2] {
            h.insert(x);
        }
        assert_eq!(h.get_min(), Some(1));
        assert_eq!(h.sum(), 6);
    }

    #[test]
    fn empty_and_single() {
        let h = LockedArrayHeap::<i64>::new();
        assert_eq!(h.remove_min(), None);
        assert_eq!(h.get_min(), None);
        assert_eq!(h.sum(), 0);
        h.insert(8);
        assert_eq!(h.remove_min(), Some(8));
        assert!(h.is_empty());
    }

    #[test]
    fn drain_equals_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<i64> = (0..10_000).map(|_| rng.gen_range(-500..500)).collect();
        let h = LockedArrayHeap::new();
        for &x in &xs {
            h.insert(x);
        }
        assert!(h.is_heap_ordered());
        let mut sorted = xs.clone();
        sorted.sort();
        assert_eq!(h.to_sorted_vec(), sorted);
        let drained: Vec<i64> = std::iter::from_fn(|| h.remove_min()).collect();
        assert_eq!(drained, sorted);
    }

    #[test]
    fn snapshot_is_a_copy() {
        let h = LockedArrayHeap::new();
        assert!(h.snapshot().is_empty());
        for x in [5i64, 2, 9] {
            h.insert(x);
        }
        let s = h.snapshot();
        h.insert(1);
        h.remove_min();
        h.remove_min();
        assert_eq!(s.to_sorted_vec(), vec![2, 5, 9]);
    }

    #[test]
    fn capacity_doubles_from_sixteen() {
        let h = LockedArrayHeap::new();
        assert_eq!(h.storage.lock().capacity(), 16);
        for x in 0..17i64 {
            h.insert(x);
        }
        assert_eq!(h.storage.lock().capacity(), 32);
    }
}
