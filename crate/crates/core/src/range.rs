//! Linearizable range queries over the versioned structure.
//!
//! A range query takes a clock value `ts` (advancing the clock past it), then
//! walks the structure in key order and, for each key in the interval, returns
//! the newest version whose timestamp is at most `ts`. Writes stamped later
//! than `ts` are skipped by walking down the version chain, so the result is a
//! snapshot at `ts` even while writers and bin transformations run.

use crate::index::{Child, KanvaIndex, MNode};
use crate::version::{init_ts, GlobalClock, Key, Timestamp, Value, VersionSlot, UNSET_TS};

/// Outcome of reading a key's chain as of a timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VersionedRead {
    Value(Value),
    /// The visible version is a deletion.
    Deleted,
    /// No version existed at or before the timestamp.
    Tombstone,
}

/// Newest version of `slot` with timestamp `<= ts`. Stamps the head first.
pub fn read_value_at(slot: &VersionSlot, ts: Timestamp, clock: &GlobalClock) -> VersionedRead {
    let head = slot.head();
    init_ts(head, clock);
    let mut cur = Some(head);
    while let Some(v) = cur {
        let vts = v.ts();
        debug_assert_ne!(vts, UNSET_TS, "unstamped version below a stamped head");
        if vts <= ts {
            return match v.val() {
                Some(x) => VersionedRead::Value(x),
                None => VersionedRead::Deleted,
            };
        }
        cur = v.older();
    }
    VersionedRead::Tombstone
}

/// Accumulates range output with an optional result-count cap.
#[derive(Debug, Default)]
pub struct RangeSink {
    pairs: Vec<(Key, Value)>,
    cap: Option<usize>,
}

impl RangeSink {
    pub fn unbounded() -> Self {
        Self::default()
    }

    pub fn capped(cap: Option<usize>) -> Self {
        RangeSink {
            pairs: Vec::new(),
            cap,
        }
    }

    #[inline]
    pub fn is_full(&self) -> bool {
        self.cap.is_some_and(|c| self.pairs.len() >= c)
    }

    #[inline]
    pub fn push(&mut self, key: Key, value: Value) {
        debug_assert!(self.pairs.last().is_none_or(|&(k, _)| k < key), "scan out of order");
        self.pairs.push((key, value));
    }

    pub fn into_pairs(self) -> Vec<(Key, Value)> {
        self.pairs
    }
}

/// A range result together with the snapshot timestamp it was read at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RangeSnapshot {
    pub ts: Timestamp,
    pub pairs: Vec<(Key, Value)>,
}

pub(crate) fn scan_node(
    node: &MNode,
    lo: Key,
    hi: Key,
    ts: Timestamp,
    clock: &GlobalClock,
    out: &mut RangeSink,
) {
    let keys = node.keys();
    let (start, skip_first_child) = match node.search(lo) {
        Ok(i) => (i, true),
        Err(ix) => ((ix + 1) as usize, false),
    };
    for j in start..=keys.len() {
        if out.is_full() {
            return;
        }
        if !(skip_first_child && j == start) {
            // One load per slot: a concurrent replacement is either seen or not.
            match node.child(j) {
                Some(Child::Node(n)) => scan_node(n, lo, hi, ts, clock, out),
                Some(Child::Bin(b)) => b.scan(lo, hi, ts, clock, out),
                None => {}
            }
        }
        let Some(&k) = keys.get(j) else { return };
        if k > hi || out.is_full() {
            return;
        }
        if let VersionedRead::Value(v) = read_value_at(node.version(j), ts, clock) {
            out.push(k, v);
        }
    }
}

impl KanvaIndex {
    /// Every live pair with `key <= k <= key + width`, ascending.
    pub fn range(&self, key: Key, width: Key) -> Vec<(Key, Value)> {
        self.range_snapshot(key, width, None).pairs
    }

    /// As [`range`](Self::range), stopping after `max_results` pairs and also
    /// returning the snapshot timestamp.
    pub fn range_snapshot(&self, key: Key, width: Key, max_results: Option<usize>) -> RangeSnapshot {
        crate::trace::op_start();
        let hi = key.saturating_add(width);
        let ts = self.clock().read_and_bump();
        let mut sink = RangeSink::capped(max_results);
        scan_node(self.root(), key, hi, ts, self.clock(), &mut sink);
        RangeSnapshot {
            ts,
            pairs: sink.into_pairs(),
        }
    }

    /// Scans `[lo, hi]` as of an explicit timestamp without touching the clock.
    pub fn scan_at(&self, lo: Key, hi: Key, ts: Timestamp) -> Vec<(Key, Value)> {
        let mut sink = RangeSink::unbounded();
        if lo <= hi {
            scan_node(self.root(), lo, hi, ts, self.clock(), &mut sink);
        }
        sink.into_pairs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::IndexConfig;

    fn chain(versions: &[(Option<Value>, Timestamp)]) -> VersionSlot {
        // Build oldest first with explicit timestamps.
        let clock = GlobalClock::new();
        let (first, rest) = versions.split_last().unwrap();
        let slot = VersionSlot::with_ts(first.0, first.1);
        for &(v, t) in rest.iter().rev() {
            while clock.now() < t {
                clock.read_and_bump();
            }
            assert!(slot.write(v, &clock));
        }
        slot
    }

    #[test]
    fn read_skips_newer_versions() {
        let c = GlobalClock::new();
        let s = chain(&[(Some(9), 5), (Some(1), 3)]);
        assert_eq!(read_value_at(&s, 4, &c), VersionedRead::Value(1));
        assert_eq!(read_value_at(&s, 5, &c), VersionedRead::Value(9));
    }

    #[test]
    fn read_deleted_and_tombstone() {
        let c = GlobalClock::new();
        let s = chain(&[(None, 2)]);
        assert_eq!(read_value_at(&s, 2, &c), VersionedRead::Deleted);
        let s = chain(&[(Some(9), 5)]);
        assert_eq!(read_value_at(&s, 4, &c), VersionedRead::Tombstone);
    }

    #[test]
    fn sink_cap() {
        let mut s = RangeSink::capped(Some(2));
        s.push(1, 1);
        assert!(!s.is_full());
        s.push(2, 2);
        assert!(s.is_full());
    }

    #[test]
    fn range_over_built_keys() {
        let pairs: Vec<_> = (1..=10).map(|k| (k, k)).collect();
        let idx = KanvaIndex::build(&pairs, IndexConfig::default()).unwrap();
        assert_eq!(idx.range(3, 4), (3..=7).map(|k| (k, k)).collect::<Vec<_>>());
        assert_eq!(idx.range(11, 5), vec![]);
        assert_eq!(idx.range(0, 0), vec![]);
        assert_eq!(idx.range(10, Key::MAX), vec![(10, 10)]);
        let capped = idx.range_snapshot(1, 100, Some(3));
        assert_eq!(capped.pairs, vec![(1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn range_visits_children_in_order() {
        let idx = KanvaIndex::build(&[(10, 10), (20, 20)], IndexConfig::default()).unwrap();
        idx.insert(15, 15);
        idx.insert(5, 5);
        idx.insert(25, 25);
        assert_eq!(idx.range(10, 10), vec![(10, 10), (15, 15), (20, 20)]);
        assert_eq!(idx.range(11, 4), vec![(15, 15)]);
        assert_eq!(idx.range(11, 3), vec![]);
        assert_eq!(idx.range(0, 100).len(), 5);
    }

    #[test]
    fn empty_index_range() {
        let idx = KanvaIndex::build(&[], IndexConfig::default()).unwrap();
        assert!(idx.range(0, Key::MAX).is_empty());
        idx.insert(7, 70);
        assert_eq!(idx.range(0, Key::MAX), vec![(7, 70)]);
    }

    #[test]
    fn equal_ts_scans_agree() {
        let pairs: Vec<_> = (0..500).map(|k| (k * 3, k)).collect();
        let idx = KanvaIndex::build(&pairs, IndexConfig::small()).unwrap();
        for k in 0..300 {
            idx.insert(k * 3 + 1, k);
        }
        let ts = idx.clock().now();
        assert_eq!(idx.scan_at(0, 2_000, ts), idx.scan_at(0, 2_000, ts));
    }
}
