//! Update-ingesting bins hanging off model-node child slots.
//!
//! A one-level bin ([`Olb`]) is a sorted lock-free linked list of [`KNode`]s.
//! Once it fills up it is frozen and replaced by a two-level bin ([`Tlb`]): a
//! fixed separator array over `fanout` one-level bins. A full two-level bin is
//! in turn frozen and retrained into a model node by the index.
//!
//! Keys are never unlinked. Deletion writes an absent payload into the key's
//! version chain. Freezing sets the low bit on every next link so that no
//! further splice can succeed; readers ignore the bit.

use std::ptr::{self, NonNull};
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::link::MarkedLink;
use crate::range::{read_value_at, RangeSink, VersionedRead};
use crate::version::{init_ts, GlobalClock, Key, Timestamp, Value, VersionSlot};

/// Pointer to a version slot that may be shared between several nodes.
///
/// Slots are owned by exactly one [`KNode`] (or by the root model node) and
/// are never freed while the index is alive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct SlotPtr(NonNull<VersionSlot>);

impl SlotPtr {
    /// # Safety
    /// The slot must outlive every use of the returned reference.
    #[inline]
    pub(crate) unsafe fn get<'a>(self) -> &'a VersionSlot {
        self.0.as_ref()
    }

    pub(crate) fn leak(slot: VersionSlot) -> SlotPtr {
        SlotPtr(NonNull::from(Box::leak(Box::new(slot))))
    }

    /// # Safety
    /// Must be the unique owner and no reference may outlive this call.
    pub(crate) unsafe fn free(self) {
        drop(Box::from_raw(self.0.as_ptr()));
    }

    pub(crate) fn addr(self) -> usize {
        self.0.as_ptr() as usize
    }
}

/// A key in a bin list.
#[derive(Debug)]
pub struct KNode {
    key: Key,
    slot: SlotPtr,
    owns_slot: bool,
    next: MarkedLink<KNode>,
}

impl KNode {
    fn owning(key: Key, value: Value) -> Box<KNode> {
        Box::new(KNode {
            key,
            slot: SlotPtr::leak(VersionSlot::new(Some(value))),
            owns_slot: true,
            next: MarkedLink::null(),
        })
    }

    #[inline]
    pub fn key(&self) -> Key {
        self.key
    }

    #[inline]
    pub fn version(&self) -> &VersionSlot {
        // SAFETY: a slot lives at least as long as its owning KNode, and every
        // non-owning KNode is created from and retired alongside an owner that
        // the index keeps alive until teardown.
        unsafe { self.slot.get() }
    }

    pub(crate) fn slot_ptr(&self) -> SlotPtr {
        self.slot
    }

    #[inline]
    fn next(&self) -> Option<&KNode> {
        // SAFETY: list nodes are only freed when the whole list drops.
        unsafe { self.next.load().0.as_ref() }
    }
}

impl Drop for KNode {
    fn drop(&mut self) {
        if self.owns_slot {
            // SAFETY: this node is the slot's unique owner.
            unsafe { self.slot.free() }
        }
    }
}

/// Result of a mutating bin operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOpResult {
    Done(bool),
    /// A frozen link was observed; the caller must help replace the bin.
    UnderMakeModel,
}

enum Upsert {
    Spliced,
    Updated(bool),
    Frozen,
}

/// Sorted lock-free linked list of keys.
#[derive(Debug)]
pub struct Olb {
    head: MarkedLink<KNode>,
    size: AtomicUsize,
    threshold: usize,
}

// SAFETY: nodes are reached only through atomic links; shared state is atomic.
unsafe impl Send for Olb {}
unsafe impl Sync for Olb {}

impl Olb {
    /// One-key bin. The version's timestamp is left unset so it is stamped
    /// only after the bin becomes reachable.
    pub fn new(key: Key, value: Value, threshold: usize) -> Olb {
        let node = Box::into_raw(KNode::owning(key, value));
        Olb {
            head: MarkedLink::new(node),
            size: AtomicUsize::new(1),
            threshold,
        }
    }

    /// List over already sorted keys whose slots are owned elsewhere.
    pub(crate) fn from_shared(keys: &[Key], slots: &[SlotPtr], threshold: usize) -> Olb {
        let mut next: *mut KNode = ptr::null_mut();
        for (&key, &slot) in keys.iter().zip(slots).rev() {
            next = Box::into_raw(Box::new(KNode {
                key,
                slot,
                owns_slot: false,
                next: MarkedLink::new(next),
            }));
        }
        Olb {
            head: MarkedLink::new(next),
            size: AtomicUsize::new(keys.len()),
            threshold,
        }
    }

    pub fn size(&self) -> usize {
        self.size.load(Ordering::SeqCst)
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    fn first(&self) -> Option<&KNode> {
        // SAFETY: see `KNode::next`.
        unsafe { self.head.load().0.as_ref() }
    }

    /// Iterates the list in key order, ignoring freeze flags.
    pub fn iter(&self) -> impl Iterator<Item = &KNode> {
        std::iter::successors(self.first(), |n| n.next())
    }

    fn upsert(&self, key: Key, value: Value, clock: &GlobalClock) -> Upsert {
        let mut fresh: Option<Box<KNode>> = None;
        let mut pred = &self.head;
        loop {
            let (mut cur, frozen) = pred.load();
            if frozen {
                return Upsert::Frozen;
            }
            // SAFETY (all derefs below): list nodes outlive `self`.
            while let Some(n) = unsafe { cur.as_ref() } {
                if n.key > key {
                    break;
                }
                if n.key == key {
                    return Upsert::Updated(n.version().write(Some(value), clock));
                }
                pred = &n.next;
                let (c, f) = pred.load();
                if f {
                    return Upsert::Frozen;
                }
                cur = c;
            }
            let mut node = fresh.take().unwrap_or_else(|| KNode::owning(key, value));
            node.next.set_private(cur);
            let raw = Box::into_raw(node);
            match pred.cas(cur, raw) {
                Ok(()) => {
                    self.size.fetch_add(1, Ordering::SeqCst);
                    init_ts(unsafe { &*raw }.version().head(), clock);
                    return Upsert::Spliced;
                }
                // Retry from the same predecessor; nothing is ever unlinked.
                Err(_) => fresh = Some(unsafe { Box::from_raw(raw) }),
            }
        }
    }

    pub fn insert(&self, key: Key, value: Value, clock: &GlobalClock) -> BinOpResult {
        match self.upsert(key, value, clock) {
            Upsert::Spliced => BinOpResult::Done(true),
            Upsert::Updated(changed) => BinOpResult::Done(changed),
            Upsert::Frozen => BinOpResult::UnderMakeModel,
        }
    }

    pub fn delete(&self, key: Key, clock: &GlobalClock) -> BinOpResult {
        let mut link = &self.head;
        loop {
            let (cur, frozen) = link.load();
            if frozen {
                return BinOpResult::UnderMakeModel;
            }
            // SAFETY: list nodes outlive `self`.
            match unsafe { cur.as_ref() } {
                Some(n) if n.key < key => link = &n.next,
                Some(n) if n.key == key => {
                    let slot = n.version();
                    return BinOpResult::Done(
                        slot.read_latest(clock).is_some() && slot.write(None, clock),
                    );
                }
                _ => return BinOpResult::Done(false),
            }
        }
    }

    pub fn search(&self, key: Key) -> Option<&KNode> {
        self.iter()
            .take_while(|n| n.key <= key)
            .find(|n| n.key == key)
    }

    pub fn scan(&self, lo: Key, hi: Key, ts: Timestamp, clock: &GlobalClock, out: &mut RangeSink) {
        for n in self.iter().skip_while(|n| n.key < lo) {
            if n.key > hi || out.is_full() {
                return;
            }
            if let VersionedRead::Value(v) = read_value_at(n.version(), ts, clock) {
                out.push(n.key, v);
            }
        }
    }

    /// Freezes the head and then every next link, in list order.
    pub fn freeze(&self) {
        let mut link = &self.head;
        loop {
            let target = link.freeze();
            // SAFETY: list nodes outlive `self`.
            match unsafe { target.as_ref() } {
                Some(n) => link = &n.next,
                None => return,
            }
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.head.is_frozen()
    }

    fn collect_into(&self, clock: &GlobalClock, out: &mut Collected) {
        for n in self.iter() {
            init_ts(n.version().head(), clock);
            out.keys.push(n.key);
            out.slots.push(n.slot);
        }
    }

    pub(crate) fn stamp_all(&self, clock: &GlobalClock) {
        for n in self.iter() {
            init_ts(n.version().head(), clock);
        }
    }
}

impl Drop for Olb {
    fn drop(&mut self) {
        let mut p = self.head.load().0;
        while !p.is_null() {
            // SAFETY: the list exclusively owns its nodes.
            let node = unsafe { Box::from_raw(p) };
            p = node.next.load().0;
        }
    }
}

/// Static separator array over one-level bins.
///
/// Child `i` holds keys in `(separators[i - 1], separators[i]]`.
#[derive(Debug)]
pub struct Tlb {
    separators: Box<[Key]>,
    children: Box<[Olb]>,
    size: AtomicUsize,
    threshold: usize,
}

impl Tlb {
    pub fn size(&self) -> usize {
        self.size.load(Ordering::SeqCst)
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn separators(&self) -> &[Key] {
        &self.separators
    }

    pub fn children(&self) -> &[Olb] {
        &self.children
    }

    #[inline]
    fn child_for(&self, key: Key) -> &Olb {
        &self.children[self.separators.partition_point(|&s| s < key)]
    }

    pub fn insert(&self, key: Key, value: Value, clock: &GlobalClock) -> BinOpResult {
        match self.child_for(key).upsert(key, value, clock) {
            Upsert::Spliced => {
                self.size.fetch_add(1, Ordering::SeqCst);
                BinOpResult::Done(true)
            }
            Upsert::Updated(changed) => BinOpResult::Done(changed),
            Upsert::Frozen => BinOpResult::UnderMakeModel,
        }
    }
}

/// A bin of either shape.
#[derive(Debug)]
pub enum Bin {
    One(Olb),
    Two(Tlb),
}

/// Keys of a frozen bin in ascending order with their live version slots.
#[derive(Debug, Default)]
pub struct Collected {
    pub keys: Vec<Key>,
    pub(crate) slots: Vec<SlotPtr>,
}

impl Collected {
    /// Version slot of the `i`th collected key.
    ///
    /// Valid while the bin it was collected from is alive.
    pub fn version(&self, i: usize) -> &VersionSlot {
        // SAFETY: slots outlive the bin they were collected from, and the
        // collection is only used while that bin (or the index) lives.
        unsafe { self.slots[i].get() }
    }
}

impl Bin {
    pub fn new(key: Key, value: Value, threshold: usize) -> Bin {
        Bin::One(Olb::new(key, value, threshold))
    }

    pub fn is_one_level(&self) -> bool {
        matches!(self, Bin::One(_))
    }

    pub fn size(&self) -> usize {
        match self {
            Bin::One(o) => o.size(),
            Bin::Two(t) => t.size(),
        }
    }

    pub fn threshold(&self) -> usize {
        match self {
            Bin::One(o) => o.threshold(),
            Bin::Two(t) => t.threshold(),
        }
    }

    pub fn insert(&self, key: Key, value: Value, clock: &GlobalClock) -> BinOpResult {
        match self {
            Bin::One(o) => o.insert(key, value, clock),
            Bin::Two(t) => t.insert(key, value, clock),
        }
    }

    pub fn delete(&self, key: Key, clock: &GlobalClock) -> BinOpResult {
        match self {
            Bin::One(o) => o.delete(key, clock),
            Bin::Two(t) => t.child_for(key).delete(key, clock),
        }
    }

    pub fn search(&self, key: Key) -> Option<&KNode> {
        match self {
            Bin::One(o) => o.search(key),
            Bin::Two(t) => t.child_for(key).search(key),
        }
    }

    pub fn scan(&self, lo: Key, hi: Key, ts: Timestamp, clock: &GlobalClock, out: &mut RangeSink) {
        match self {
            Bin::One(o) => o.scan(lo, hi, ts, clock, out),
            Bin::Two(t) => {
                let first = t.separators.partition_point(|&s| s < lo);
                let last = t.separators.partition_point(|&s| s < hi);
                for c in &t.children[first..=last] {
                    c.scan(lo, hi, ts, clock, out);
                }
            }
        }
    }

    pub fn freeze(&self) {
        match self {
            Bin::One(o) => o.freeze(),
            Bin::Two(t) => t.children.iter().for_each(Olb::freeze),
        }
    }

    /// All keys and version slots of a frozen bin, stamping each head.
    pub fn collect_frozen(&self, clock: &GlobalClock) -> Collected {
        let mut out = Collected::default();
        match self {
            Bin::One(o) => o.collect_into(clock, &mut out),
            Bin::Two(t) => t.children.iter().for_each(|c| c.collect_into(clock, &mut out)),
        }
        out
    }

    /// Iterates every key node in key order.
    pub fn nodes(&self) -> Box<dyn Iterator<Item = &KNode> + '_> {
        match self {
            Bin::One(o) => Box::new(o.iter()),
            Bin::Two(t) => Box::new(t.children.iter().flat_map(Olb::iter)),
        }
    }
}

/// Splits a collected one-level bin into `fanout` contiguous children.
///
/// The first `n % fanout` children take one extra key. Version slots are
/// shared with the source, so writes racing the split stay visible.
pub(crate) fn olb_to_tlb(collected: &Collected, fanout: usize, threshold: usize) -> Tlb {
    let n = collected.keys.len();
    let parts = fanout.max(1).min(n.max(1));
    let (q, r) = (n / parts, n % parts);
    let mut children = Vec::with_capacity(parts);
    let mut separators = Vec::with_capacity(parts - 1);
    let mut at = 0;
    for i in 0..parts {
        let len = q + usize::from(i < r);
        let keys = &collected.keys[at..at + len];
        children.push(Olb::from_shared(keys, &collected.slots[at..at + len], usize::MAX));
        if i + 1 < parts {
            separators.push(*keys.last().expect("non-empty child"));
        }
        at += len;
    }
    Tlb {
        separators: separators.into(),
        children: children.into(),
        size: AtomicUsize::new(n),
        threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::version::UNSET_TS;
    use std::sync::Arc;
    use std::thread;

    fn olb_of(pairs: &[(Key, Value)], clock: &GlobalClock) -> Bin {
        let bin = Bin::new(pairs[0].0, pairs[0].1, 64);
        for &(k, v) in &pairs[1..] {
            assert_eq!(bin.insert(k, v, clock), BinOpResult::Done(true));
        }
        bin
    }

    fn keys_of(bin: &Bin) -> Vec<Key> {
        bin.nodes().map(KNode::key).collect()
    }

    fn latest(bin: &Bin, key: Key, clock: &GlobalClock) -> Option<Value> {
        bin.search(key).and_then(|n| n.version().read_latest(clock))
    }

    fn scan_all(bin: &Bin, lo: Key, hi: Key, ts: Timestamp, clock: &GlobalClock) -> Vec<(Key, Value)> {
        let mut sink = RangeSink::unbounded();
        bin.scan(lo, hi, ts, clock, &mut sink);
        sink.into_pairs()
    }

    /// Sixteen keys split over four children: [1,2,3,4] [5..8] [9..12] [13..16].
    fn tlb_of(n: Key, fanout: usize, clock: &GlobalClock) -> (Bin, Bin) {
        let pairs: Vec<_> = (1..=n).map(|k| (k, k * 10)).collect();
        let olb = olb_of(&pairs, clock);
        olb.freeze();
        let c = olb.collect_frozen(clock);
        let tlb = Bin::Two(olb_to_tlb(&c, fanout, 1024));
        (olb, tlb)
    }

    #[test]
    fn new_bin_holds_one_key() {
        let clock = GlobalClock::new();
        for (k, v) in [(5, 100), (0, 1)] {
            let bin = Bin::new(k, v, 64);
            assert_eq!(keys_of(&bin), vec![k]);
            assert_eq!(bin.size(), 1);
            assert_eq!(latest(&bin, k, &clock), Some(v));
        }
    }

    #[test]
    fn new_bin_leaves_ts_for_publication() {
        let clock = GlobalClock::new();
        let Bin::One(olb) = Bin::new(3, 4, 64) else { unreachable!() };
        assert_eq!(olb.first().unwrap().version().head().ts(), UNSET_TS);
        olb.stamp_all(&clock);
        assert_eq!(olb.first().unwrap().version().head().ts(), 0);
    }

    #[test]
    fn insert_splices_in_order() {
        let clock = GlobalClock::new();
        let bin = olb_of(&[(3, 30), (7, 70)], &clock);
        assert_eq!(bin.insert(5, 50, &clock), BinOpResult::Done(true));
        assert_eq!(keys_of(&bin), vec![3, 5, 7]);
        assert_eq!(bin.size(), 3);
        assert_eq!(bin.insert(7, 70, &clock), BinOpResult::Done(false));
        assert_eq!(bin.insert(7, 71, &clock), BinOpResult::Done(true));
        assert_eq!(latest(&bin, 7, &clock), Some(71));
        assert_eq!(bin.size(), 3);
    }

    #[test]
    fn frozen_bin_refuses_mutation() {
        let clock = GlobalClock::new();
        let bin = olb_of(&[(3, 30), (7, 70)], &clock);
        bin.freeze();
        assert_eq!(bin.insert(1, 1, &clock), BinOpResult::UnderMakeModel);
        assert_eq!(bin.insert(7, 1, &clock), BinOpResult::UnderMakeModel);
        assert_eq!(bin.delete(3, &clock), BinOpResult::UnderMakeModel);
        assert_eq!(bin.delete(9, &clock), BinOpResult::UnderMakeModel);
        bin.freeze();
        assert_eq!(keys_of(&bin), vec![3, 7]);
        // reads ignore the flags
        assert_eq!(bin.search(7).map(KNode::key), Some(7));
        assert_eq!(scan_all(&bin, 0, 100, i64::MAX, &clock), vec![(3, 30), (7, 70)]);
    }

    #[test]
    fn delete_marks_absent() {
        let clock = GlobalClock::new();
        let bin = olb_of(&[(3, 30), (7, 70)], &clock);
        assert_eq!(bin.delete(3, &clock), BinOpResult::Done(true));
        assert_eq!(latest(&bin, 3, &clock), None);
        assert!(bin.search(3).is_some());
        assert_eq!(bin.delete(3, &clock), BinOpResult::Done(false));
        assert_eq!(bin.delete(9, &clock), BinOpResult::Done(false));
        assert_eq!(bin.insert(3, 31, &clock), BinOpResult::Done(true));
        assert_eq!(latest(&bin, 3, &clock), Some(31));
    }

    #[test]
    fn scan_filters_interval_and_versions() {
        let clock = GlobalClock::new();
        let bin = olb_of(&[(3, 1), (5, 2), (9, 3)], &clock);
        assert_eq!(scan_all(&bin, 4, 9, i64::MAX, &clock), vec![(5, 2), (9, 3)]);
        assert_eq!(scan_all(&bin, 6, 8, i64::MAX, &clock), vec![]);

        // 5 rewritten at ts 4 and again at ts 6; a read at 5 sees the ts-4 value.
        let clock = GlobalClock::new();
        let bin = olb_of(&[(3, 1), (5, 2)], &clock);
        (0..4).for_each(|_| {
            clock.read_and_bump();
        });
        bin.insert(5, 40, &clock);
        (0..2).for_each(|_| {
            clock.read_and_bump();
        });
        bin.insert(5, 60, &clock);
        assert_eq!(scan_all(&bin, 5, 5, 5, &clock), vec![(5, 40)]);
        assert_eq!(scan_all(&bin, 5, 5, 3, &clock), vec![(5, 2)]);
    }

    #[test]
    fn collect_keeps_deleted_keys() {
        let clock = GlobalClock::new();
        let bin = olb_of(&[(1, 1), (4, 4), (9, 9)], &clock);
        bin.delete(4, &clock);
        bin.freeze();
        let c = bin.collect_frozen(&clock);
        assert_eq!(c.keys, vec![1, 4, 9]);
        assert_eq!(c.version(1).head().val(), None);
        assert!((0..3).all(|i| c.version(i).head().ts() != UNSET_TS));
    }

    #[test]
    fn tlb_split_sizes() {
        let clock = GlobalClock::new();
        let (_src, tlb) = tlb_of(8, 4, &clock);
        let Bin::Two(t) = &tlb else { unreachable!() };
        let sizes: Vec<_> = t.children().iter().map(Olb::size).collect();
        assert_eq!(sizes, vec![2, 2, 2, 2]);
        assert_eq!(t.separators(), &[2, 4, 6]);

        let (_src, tlb) = tlb_of(5, 4, &clock);
        let Bin::Two(t) = &tlb else { unreachable!() };
        let sizes: Vec<_> = t.children().iter().map(|c| c.iter().count()).collect();
        assert_eq!(sizes, vec![2, 1, 1, 1]);
        assert_eq!(tlb.size(), 5);
    }

    #[test]
    fn tlb_routes_and_collects() {
        let clock = GlobalClock::new();
        let (_src, tlb) = tlb_of(16, 4, &clock);
        // Oracle: linear scan over every child list.
        for k in 0..=20 {
            let linear = tlb.nodes().find(|n| n.key() == k).map(KNode::key);
            assert_eq!(tlb.search(k).map(KNode::key), linear);
        }
        assert_eq!(tlb.insert(100, 1, &clock), BinOpResult::Done(true));
        assert_eq!(tlb.size(), 17);
        let Bin::Two(t) = &tlb else { unreachable!() };
        assert_eq!(t.children().last().unwrap().size(), 5);
        assert_eq!(
            scan_all(&tlb, 3, 10, i64::MAX, &clock),
            (3..=10).map(|k| (k, k * 10)).collect::<Vec<_>>()
        );
        tlb.freeze();
        let c = tlb.collect_frozen(&clock);
        assert_eq!(c.keys, (1..=16).chain([100]).collect::<Vec<_>>());
    }

    #[test]
    fn tlb_collect_concatenates_children() {
        let clock = GlobalClock::new();
        let olb = olb_of(&[(1, 1), (4, 4), (9, 9)], &clock);
        olb.freeze();
        let tlb = Bin::Two(olb_to_tlb(&olb.collect_frozen(&clock), 2, 1024));
        let Bin::Two(t) = &tlb else { unreachable!() };
        let layout: Vec<Vec<Key>> = t.children().iter().map(|c| c.iter().map(KNode::key).collect()).collect();
        assert_eq!(layout, vec![vec![1, 4], vec![9]]);
        tlb.freeze();
        assert_eq!(tlb.collect_frozen(&clock).keys, vec![1, 4, 9]);
    }

    #[test]
    fn split_shares_version_slots() {
        let clock = GlobalClock::new();
        let (src, tlb) = tlb_of(8, 4, &clock);
        // A writer that reached key 6 in the frozen source before the split.
        let stale = src.search(6).unwrap();
        assert!(stale.version().write(Some(600), &clock));
        assert_eq!(latest(&tlb, 6, &clock), Some(600));
    }

    #[test]
    fn freeze_insert_interleavings() {
        // Two-node list [3, 7]; the insert of 5 splices into 3's next link.
        let clock = GlobalClock::new();

        // Splice first, then freeze: key collected.
        let bin = olb_of(&[(3, 3), (7, 7)], &clock);
        assert_eq!(bin.insert(5, 5, &clock), BinOpResult::Done(true));
        bin.freeze();
        assert_eq!(bin.collect_frozen(&clock).keys, vec![3, 5, 7]);

        // Freeze first: the insert reports the transformation.
        let bin = olb_of(&[(3, 3), (7, 7)], &clock);
        bin.freeze();
        assert_eq!(bin.insert(5, 5, &clock), BinOpResult::UnderMakeModel);
        assert_eq!(bin.collect_frozen(&clock).keys, vec![3, 7]);

        // Freezer stopped after the head link but before 3's next link: the
        // inserter traversing from the head sees the frozen head.
        let bin = olb_of(&[(3, 3), (7, 7)], &clock);
        let Bin::One(o) = &bin else { unreachable!() };
        o.head.freeze();
        assert_eq!(bin.insert(5, 5, &clock), BinOpResult::UnderMakeModel);

        // Inserter read 3's next link before the freeze and CASes after it.
        let bin = olb_of(&[(3, 3), (7, 7)], &clock);
        let Bin::One(o) = &bin else { unreachable!() };
        let three = o.first().unwrap();
        let (seen, _) = three.next.load();
        bin.freeze();
        let node = Box::into_raw(KNode::owning(5, 5));
        assert!(three.next.cas(seen, node).is_err());
        drop(unsafe { Box::from_raw(node) });
        assert_eq!(bin.collect_frozen(&clock).keys, vec![3, 7]);
    }

    #[test]
    fn concurrent_freeze_never_drops_acknowledged_keys() {
        for round in 0..50u64 {
            let clock = Arc::new(GlobalClock::new());
            let bin = Arc::new(Bin::new(0, 0, usize::MAX));
            let writers: Vec<_> = (0..4u64)
                .map(|t| {
                    let (bin, clock) = (Arc::clone(&bin), Arc::clone(&clock));
                    thread::spawn(move || {
                        let mut acked = Vec::new();
                        for i in 0..200u64 {
                            let k = 1 + i * 4 + t;
                            match bin.insert(k, k + round, &clock) {
                                BinOpResult::Done(true) => acked.push(k),
                                BinOpResult::Done(false) => unreachable!(),
                                BinOpResult::UnderMakeModel => break,
                            }
                        }
                        acked
                    })
                })
                .collect();
            thread::yield_now();
            bin.freeze();
            let acked: Vec<Key> = writers.into_iter().flat_map(|h| h.join().unwrap()).collect();
            let collected = bin.collect_frozen(&clock);
            assert!(collected.keys.windows(2).all(|w| w[0] < w[1]));
            for k in acked {
                assert!(collected.keys.binary_search(&k).is_ok(), "lost key {k}");
            }
            assert_eq!(bin.size(), collected.keys.len());
        }
    }
}
