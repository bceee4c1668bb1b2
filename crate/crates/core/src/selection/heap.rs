use std::cmp::Ordering;

/// Heap key: distance to the class mean, then sample index.
///
/// Ordering is lexicographic on `(dist, index)`, so among equal distances the
/// larger index sits nearer the root and is evicted first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeapEntry {
    pub dist: f32,
    pub index: usize,
}

impl HeapEntry {
    #[inline]
    fn cmp_key(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.index.cmp(&other.index))
    }
}

/// Operation counters for a [`BoundedMaxHeap`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HeapStats {
    pub inserts: usize,
    pub replacements: usize,
    pub pops: usize,
    pub max_len: usize,
    pub comparisons: usize,
}

impl HeapStats {
    pub fn operations(&self) -> usize {
        self.inserts + self.replacements + self.pops
    }
}

/// Array-backed binary max-heap that refuses to grow past its capacity.
#[derive(Debug, Clone)]
pub struct BoundedMaxHeap {
    items: Vec<HeapEntry>,
    capacity: usize,
    stats: HeapStats,
}

impl BoundedMaxHeap {
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            items: Vec::with_capacity(capacity),
            capacity,
            stats: HeapStats::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() == self.capacity
    }

    pub fn stats(&self) -> HeapStats {
        self.stats
    }

    pub fn peek(&self) -> Option<&HeapEntry> {
        self.items.first()
    }

    /// Inserts into a heap that still has room.
    ///
    /// # Panics
    /// If the heap is already at capacity.
    pub fn push(&mut self, entry: HeapEntry) {
        assert!(self.items.len() < self.capacity, "bounded heap is full");
        self.items.push(entry);
        self.sift_up(self.items.len() - 1);
        self.stats.inserts += 1;
        self.stats.max_len = self.stats.max_len.max(self.items.len());
    }

    /// Replaces the root (current maximum) with `entry`; equivalent to a
    /// pop followed by an insert but with a single sift.
    pub fn replace_top(&mut self, entry: HeapEntry) -> Option<HeapEntry> {
        let old = std::mem::replace(self.items.first_mut()?, entry);
        self.sift_down(0);
        self.stats.replacements += 1;
        Some(old)
    }

    pub fn pop(&mut self) -> Option<HeapEntry> {
        let last = self.items.pop()?;
        self.stats.pops += 1;
        if self.items.is_empty() {
            return Some(last);
        }
        let top = std::mem::replace(&mut self.items[0], last);
        self.sift_down(0);
        Some(top)
    }

    /// Consumes the heap, returning its entries in ascending key order.
    pub fn into_sorted_vec(self) -> Vec<HeapEntry> {
        let mut items = self.items;
        items.sort_unstable_by(HeapEntry::cmp_key);
        items
    }

    #[inline]
    fn greater(&mut self, a: usize, b: usize) -> bool {
        self.stats.comparisons += 1;
        self.items[a].cmp_key(&self.items[b]) == Ordering::Greater
    }

    fn sift_up(&mut self, mut i: usize) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if !self.greater(i, parent) {
                break;
            }
            self.items.swap(i, parent);
            i = parent;
        }
    }

    fn sift_down(&mut self, mut i: usize) {
        let n = self.items.len();
        loop {
            let left = 2 * i + 1;
            if left >= n {
                break;
            }
            let right = left + 1;
            let child = if right < n && self.greater(right, left) {
                right
            } else {
                left
            };
            if !self.greater(child, i) {
                break;
            }
            self.items.swap(i, child);
            i = child;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(dist: f32, index: usize) -> HeapEntry {
        HeapEntry { dist, index }
    }

    #[test]
    fn sorted_drain_is_ascending() {
        let mut h = BoundedMaxHeap::with_capacity(5);
        for (dist, index) in [(2.0, 4), (1.0, 9), (2.0, 1), (0.5, 3), (1.0, 2)] {
            h.push(HeapEntry { dist, index });
        }
        let order: Vec<_> = h.into_sorted_vec().into_iter().map(|e| (e.dist, e.index)).collect();
        assert_eq!(order, vec![(0.5, 3), (1.0, 2), (1.0, 9), (2.0, 1), (2.0, 4)]);
    }

    #[test]
    fn pops_in_descending_key_order() {
        let mut h = BoundedMaxHeap::with_capacity(6);
        for (i, d) in [3.0, 1.0, 4.0, 1.0, 5.0, 9.0].into_iter().enumerate() {
            h.push(e(d, i));
        }
        let order: Vec<_> = std::iter::from_fn(|| h.pop()).map(|x| (x.dist, x.index)).collect();
        assert_eq!(
            order,
            vec![(9.0, 5), (5.0, 4), (4.0, 2), (3.0, 0), (1.0, 3), (1.0, 1)]
        );
    }

    #[test]
    fn replace_top_keeps_heap_order() {
        let mut h = BoundedMaxHeap::with_capacity(3);
        h.push(e(2.0, 0));
        h.push(e(7.0, 1));
        h.push(e(5.0, 2));
        assert_eq!(h.replace_top(e(1.0, 3)).unwrap().index, 1);
        assert_eq!(h.peek().unwrap().index, 2);
        assert_eq!(h.len(), 3);
        let s = h.stats();
        assert_eq!((s.inserts, s.replacements, s.max_len), (3, 1, 3));
    }

    #[test]
    #[should_panic(expected = "full")]
    fn push_past_capacity_panics() {
        let mut h = BoundedMaxHeap::with_capacity(1);
        h.push(e(1.0, 0));
        h.push(e(2.0, 1));
    }
}
