//! Fixed-capacity gapped array: sorted records interleaved with empty slots,
//! tracked by an occupancy bitmap.

use crate::key::Key;

/// Outcome of one model-based insertion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InsertStep {
    pub slot: usize,
    pub shifts: u64,
    pub iters: u64,
}

/// Number of doubling probes an exponential search needs to cover distance `d`.
pub fn search_iters(d: usize) -> u64 {
    if d == 0 {
        0
    } else {
        (usize::BITS - d.leading_zeros()) as u64
    }
}

#[derive(Debug, Clone)]
pub struct GappedArray<K> {
    keys: Vec<K>,
    payloads: Vec<u64>,
    bitmap: Vec<u64>,
    occupied: usize,
}

impl<K: Key> GappedArray<K> {
    pub fn new(capacity: usize) -> Self {
        GappedArray {
            keys: vec![K::default(); capacity],
            payloads: vec![0; capacity],
            bitmap: vec![0; capacity.div_ceil(64)],
            occupied: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.keys.len()
    }

    pub fn occupied(&self) -> usize {
        self.occupied
    }

    pub fn is_occupied(&self, i: usize) -> bool {
        self.bitmap[i >> 6] >> (i & 63) & 1 == 1
    }

    pub fn key_at(&self, i: usize) -> Option<K> {
        self.is_occupied(i).then(|| self.keys[i])
    }

    pub fn popcount(&self) -> usize {
        self.bitmap.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn set(&mut self, i: usize) {
        self.bitmap[i >> 6] |= 1 << (i & 63);
    }

    fn clear(&mut self, i: usize) {
        self.bitmap[i >> 6] &= !(1 << (i & 63));
    }

    /// First occupied slot at or after `from`.
    pub fn next_occupied(&self, from: usize) -> Option<usize> {
        let cap = self.capacity();
        if from >= cap {
            return None;
        }
        let mut w = from >> 6;
        let mut word = self.bitmap[w] & (!0u64 << (from & 63));
        loop {
            if word != 0 {
                let i = (w << 6) + word.trailing_zeros() as usize;
                return (i < cap).then_some(i);
            }
            w += 1;
            if w >= self.bitmap.len() {
                return None;
            }
            word = self.bitmap[w];
        }
    }

    /// Last occupied slot at or before `from`.
    pub fn prev_occupied(&self, from: usize) -> Option<usize> {
        let from = from.min(self.capacity().checked_sub(1)?);
        let mut w = from >> 6;
        let shift = 63 - (from & 63);
        let mut word = (self.bitmap[w] << shift) >> shift;
        loop {
            if word != 0 {
                return Some((w << 6) + 63 - word.leading_zeros() as usize);
            }
            if w == 0 {
                return None;
            }
            w -= 1;
            word = self.bitmap[w];
        }
    }

    /// First empty slot at or after `from`.
    pub fn next_gap(&self, from: usize) -> Option<usize> {
        let cap = self.capacity();
        if from >= cap {
            return None;
        }
        let mut w = from >> 6;
        let mut word = !self.bitmap[w] & (!0u64 << (from & 63));
        loop {
            if word != 0 {
                let i = (w << 6) + word.trailing_zeros() as usize;
                return (i < cap).then_some(i);
            }
            w += 1;
            if w >= self.bitmap.len() {
                return None;
            }
            word = !self.bitmap[w];
        }
    }

    /// Last empty slot at or before `from`.
    pub fn prev_gap(&self, from: usize) -> Option<usize> {
        let from = from.min(self.capacity().checked_sub(1)?);
        let mut w = from >> 6;
        let shift = 63 - (from & 63);
        let mut word = (!self.bitmap[w] << shift) >> shift;
        loop {
            if word != 0 {
                return Some((w << 6) + 63 - word.leading_zeros() as usize);
            }
            if w == 0 {
                return None;
            }
            w -= 1;
            word = !self.bitmap[w];
        }
    }

    fn place(&mut self, i: usize, key: K, payload: u64) {
        debug_assert!(!self.is_occupied(i));
        self.keys[i] = key;
        self.payloads[i] = payload;
        self.set(i);
        self.occupied += 1;
    }

    /// Moves records `[from, gap)` one slot right into the gap at `gap`.
    fn shift_right(&mut self, from: usize, gap: usize) -> u64 {
        self.keys.copy_within(from..gap, from + 1);
        self.payloads.copy_within(from..gap, from + 1);
        self.set(gap);
        self.clear(from);
        (gap - from) as u64
    }

    /// Moves records `(gap, to]` one slot left into the gap at `gap`.
    fn shift_left(&mut self, gap: usize, to: usize) -> u64 {
        self.keys.copy_within(gap + 1..=to, gap);
        self.payloads.copy_within(gap + 1..=to, gap);
        self.set(gap);
        self.clear(to);
        (to - gap) as u64
    }

    /// Whether the first record at or after `i` is past `key` (`>=`, or `>`
    /// when `strict`). Monotone in `i`.
    fn past_at(&self, i: usize, key: K, strict: bool) -> bool {
        match self.next_occupied(i) {
            None => true,
            Some(j) if strict => self.keys[j] > key,
            Some(j) => self.keys[j] >= key,
        }
    }

    /// Exponential search from `start` for the first occupied slot holding a
    /// key `>= key`. Returns that slot (or `None` if every key is smaller) and
    /// the number of doubling probes.
    pub fn lower_bound_from(&self, key: K, start: usize) -> (Option<usize>, u64) {
        self.bound_from(key, start, false)
    }

    /// As [`lower_bound_from`](Self::lower_bound_from) for the first key `> key`.
    pub fn upper_bound_from(&self, key: K, start: usize) -> (Option<usize>, u64) {
        self.bound_from(key, start, true)
    }

    fn bound_from(&self, key: K, start: usize, strict: bool) -> (Option<usize>, u64) {
        let cap = self.capacity();
        if cap == 0 {
            return (None, 0);
        }
        let start = start.min(cap - 1);
        let mut iters = 0;
        // Invariant: past(hi) holds; lo is -1 or a slot where past fails.
        let (mut lo, mut hi): (isize, usize);
        if self.past_at(start, key, strict) {
            hi = start;
            lo = -1;
            let mut step = 1usize;
            while hi > 0 {
                let cand = start.saturating_sub(step);
                iters += 1;
                if self.past_at(cand, key, strict) {
                    hi = cand;
                    step = step.saturating_mul(2);
                } else {
                    lo = cand as isize;
                    break;
                }
            }
        } else {
            lo = start as isize;
            let mut step = 1usize;
            loop {
                let cand = start.saturating_add(step).min(cap);
                iters += 1;
                if cand == cap || self.past_at(cand, key, strict) {
                    hi = cand;
                    break;
                }
                lo = cand as isize;
                step = step.saturating_mul(2);
            }
        }
        while hi as isize - lo > 1 {
            let mid = ((lo + hi as isize) / 2) as usize;
            if self.past_at(mid, key, strict) {
                hi = mid;
            } else {
                lo = mid as isize;
            }
        }
        (self.next_occupied(hi), iters)
    }

    /// Point lookup starting from the predicted slot.
    pub fn find(&self, key: K, predicted: usize) -> (Option<usize>, u64) {
        if predicted < self.capacity() && self.is_occupied(predicted) && self.keys[predicted] == key {
            return (Some(predicted), 0);
        }
        let (slot, iters) = self.lower_bound_from(key, predicted);
        (slot.filter(|&s| self.keys[s] == key), iters)
    }

    pub fn payload(&self, slot: usize) -> u64 {
        self.payloads[slot]
    }

    /// Model-based insertion. A key equal to the record at `predicted` lands
    /// on that slot, moving the neighbours toward the closer gap (right on
    /// ties), so copies of one key stay contiguous. Any other key goes
    /// between its sorted neighbours (right of equal keys), into the free
    /// slot there nearest the prediction; when the neighbours are adjacent
    /// the records move toward the closer gap.
    ///
    /// Panics if the array is full.
    pub fn insert(&mut self, key: K, payload: u64, predicted: usize) -> InsertStep {
        let cap = self.capacity();
        assert!(self.occupied < cap, "insert into a full gapped array");
        let p = predicted.min(cap - 1);

        if self.is_occupied(p) && self.keys[p] == key {
            let right_gap = self.next_gap(p + 1);
            let left_gap = if p > 0 { self.prev_gap(p - 1) } else { None };
            let shifts = match (left_gap, right_gap) {
                (Some(l), Some(r)) if p - l < r - p => self.shift_left(l, p),
                (_, Some(r)) => self.shift_right(p, r),
                (Some(l), None) => self.shift_left(l, p),
                (None, None) => unreachable!("non-full array has a gap"),
            };
            self.place(p, key, payload);
            return InsertStep { slot: p, shifts, iters: 0 };
        }

        if !self.is_occupied(p) {
            let prev_ok = p == 0 || self.prev_occupied(p - 1).is_none_or(|i| self.keys[i] <= key);
            let next_ok = self.next_occupied(p + 1).is_none_or(|i| key < self.keys[i]);
            if prev_ok && next_ok {
                self.place(p, key, payload);
                return InsertStep { slot: p, shifts: 0, iters: 0 };
            }
        }

        let (bound, iters) = self.upper_bound_from(key, p);
        let b = bound.unwrap_or(cap);
        let a = if b == 0 { None } else { self.prev_occupied(b - 1) };
        let first_free = a.map_or(0, |a| a + 1);
        if first_free < b {
            let slot = p.clamp(first_free, b - 1);
            self.place(slot, key, payload);
            return InsertStep { slot, shifts: 0, iters };
        }
        // Packed boundary: `a + 1 == b`.
        let right_gap = if b < cap { self.next_gap(b) } else { None };
        let left_gap = a.and_then(|a| self.prev_gap(a));
        let (slot, shifts) = match (left_gap, right_gap) {
            (Some(l), Some(r)) if a.unwrap() - l < r - b => {
                let a = a.unwrap();
                (a, self.shift_left(l, a))
            }
            (_, Some(r)) => (b, self.shift_right(b, r)),
            (Some(l), None) => {
                let a = a.unwrap();
                (a, self.shift_left(l, a))
            }
            (None, None) => unreachable!("non-full array has a gap"),
        };
        self.place(slot, key, payload);
        InsertStep { slot, shifts, iters }
    }

    /// Occupied records in slot order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, K, u64)> + '_ {
        let mut next = self.next_occupied(0);
        std::iter::from_fn(move || {
            let i = next?;
            next = self.next_occupied(i + 1);
            Some((i, self.keys[i], self.payloads[i]))
        })
    }

    pub fn records(&self) -> Vec<(K, u64)> {
        self.iter().map(|(_, k, v)| (k, v)).collect()
    }

    /// Longest run of consecutive occupied slots as `(start, len)`; leftmost on ties.
    pub fn longest_run(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize)> = None;
        let mut i = 0;
        while let Some(start) = self.next_occupied(i) {
            let end = self.next_gap(start).unwrap_or(self.capacity());
            let len = end - start;
            if best.is_none_or(|(_, l)| len > l) {
                best = Some((start, len));
            }
            i = end;
        }
        best
    }

    pub fn is_sorted(&self) -> bool {
        let mut last: Option<K> = None;
        for (_, k, _) in self.iter() {
            if last.is_some_and(|l| l > k) {
                return false;
            }
            last = Some(k);
        }
        true
    }
}
