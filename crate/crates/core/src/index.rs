//! The index: a root model node built over the initial data set, child slots
//! that grow bins, and the helping path that turns full bins into deeper model
//! nodes.
//!
//! Every child slot moves only forward through `empty -> one-level bin ->
//! two-level bin -> model node`, each step a single CAS. Operations that find a
//! full or frozen bin help finish its replacement and retry from the root.

use std::fmt;
use std::ptr;
use std::sync::atomic::{AtomicPtr, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::bins::{olb_to_tlb, Bin, BinOpResult, Collected, Olb, SlotPtr};
use crate::models::{fit_linear, search_exponential, search_segmented, segment_root, Model, NodeSearch, Segment};
use crate::trace;
use crate::version::{GlobalClock, Key, Value, VersionSlot};

/// Tunables. The defaults are the ones the benchmark harness uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexConfig {
    /// A one-level bin is split once it holds this many keys.
    pub olb_threshold: usize,
    /// A two-level bin is retrained into a model node at this many keys.
    pub tlb_threshold: usize,
    /// Children per two-level bin.
    pub fanout: usize,
    /// Residual bound for the root's piecewise model.
    pub eps: f64,
    /// Record every child-slot transition (for tests).
    pub log_transitions: bool,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            olb_threshold: 64,
            tlb_threshold: 1024,
            fanout: 8,
            eps: 32.0,
            log_transitions: false,
        }
    }
}

impl IndexConfig {
    /// Tiny thresholds so a handful of inserts exercises every transformation.
    pub fn small() -> Self {
        IndexConfig {
            olb_threshold: 4,
            tlb_threshold: 16,
            fanout: 2,
            eps: 4.0,
            log_transitions: false,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BuildError {
    #[error("keys must be strictly increasing (violated at position {0})")]
    Unsorted(usize),
    #[error("invalid configuration: {0}")]
    Config(&'static str),
}

/// What a child slot holds.
#[derive(Debug)]
pub enum Child {
    Bin(Bin),
    Node(MNode),
}

/// Lifecycle stage of a child slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SlotKind {
    Empty,
    OneLevel,
    TwoLevel,
    Model,
}

impl SlotKind {
    fn of(child: Option<&Child>) -> SlotKind {
        match child {
            None => SlotKind::Empty,
            Some(Child::Bin(Bin::One(_))) => SlotKind::OneLevel,
            Some(Child::Bin(Bin::Two(_))) => SlotKind::TwoLevel,
            Some(Child::Node(_)) => SlotKind::Model,
        }
    }
}

enum Router {
    Segments(Box<[Segment]>),
    Single(Model),
}

/// Model node: immutable sorted keys, their version slots, and `m + 1` child
/// slots where child `j` covers the keys strictly between `keys[j - 1]` and
/// `keys[j]`.
pub struct MNode {
    keys: Box<[Key]>,
    router: Router,
    versions: Box<[SlotPtr]>,
    owns_versions: bool,
    children: Box<[AtomicPtr<Child>]>,
}

// SAFETY: all shared mutable state is behind atomics; version slots are Sync.
unsafe impl Send for MNode {}
unsafe impl Sync for MNode {}

impl fmt::Debug for MNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MNode")
            .field("keys", &self.keys.len())
            .field("root", &self.is_root())
            .finish()
    }
}

impl MNode {
    fn root(pairs: &[(Key, Value)], eps: f64) -> MNode {
        let keys: Box<[Key]> = pairs.iter().map(|p| p.0).collect();
        let segments = segment_root(&keys, eps).into_boxed_slice();
        let versions = pairs
            .iter()
            .map(|&(_, v)| SlotPtr::leak(VersionSlot::with_ts(Some(v), 0)))
            .collect();
        MNode::assemble(keys, Router::Segments(segments), versions, true)
    }

    fn from_collected(c: &Collected) -> MNode {
        let model = fit_linear(&c.keys);
        MNode::assemble(c.keys.clone().into(), Router::Single(model), c.slots.clone().into(), false)
    }

    fn assemble(keys: Box<[Key]>, router: Router, versions: Box<[SlotPtr]>, owns_versions: bool) -> MNode {
        let children = (0..=keys.len()).map(|_| AtomicPtr::new(ptr::null_mut())).collect();
        MNode {
            keys,
            router,
            versions,
            owns_versions,
            children,
        }
    }

    pub fn keys(&self) -> &[Key] {
        &self.keys
    }

    pub fn is_root(&self) -> bool {
        matches!(self.router, Router::Segments(_))
    }

    /// Root segments, empty for non-root nodes.
    pub fn segments(&self) -> &[Segment] {
        match &self.router {
            Router::Segments(s) => s,
            Router::Single(_) => &[],
        }
    }

    /// The single model of a non-root node.
    pub fn model(&self) -> Option<&Model> {
        match &self.router {
            Router::Segments(_) => None,
            Router::Single(m) => Some(m),
        }
    }

    /// `Ok(i)` if `keys[i] == key`, else `Err(greatest index below key)`.
    #[inline]
    pub fn search(&self, key: Key) -> NodeSearch {
        match &self.router {
            Router::Segments(s) => search_segmented(&self.keys, s, key),
            Router::Single(m) => search_exponential(&self.keys, m, key),
        }
    }

    #[inline]
    pub fn version(&self, i: usize) -> &VersionSlot {
        // SAFETY: slots are owned by the root or by bin nodes the index keeps
        // alive until teardown.
        unsafe { self.versions[i].get() }
    }

    pub(crate) fn version_ptr(&self, i: usize) -> SlotPtr {
        self.versions[i]
    }

    pub fn child_count(&self) -> usize {
        self.children.len()
    }

    #[inline]
    pub(crate) fn child_ptr(&self, j: usize) -> *mut Child {
        self.children[j].load(Ordering::SeqCst)
    }

    /// Current content of child slot `j`.
    #[inline]
    pub fn child(&self, j: usize) -> Option<&Child> {
        // SAFETY: installed children are never freed before the index drops;
        // replaced ones are parked on the retired list.
        unsafe { self.child_ptr(j).as_ref() }
    }

    fn cas_child(&self, j: usize, current: *mut Child, new: *mut Child) -> bool {
        let slot = &self.children[j];
        trace::cas(slot as *const _ as usize, || {
            slot.compare_exchange(current, new, Ordering::SeqCst, Ordering::SeqCst)
        })
        .is_ok()
    }
}

impl Drop for MNode {
    fn drop(&mut self) {
        for c in self.children.iter_mut() {
            let p = *c.get_mut();
            if !p.is_null() {
                // SAFETY: installed children are exclusively owned by the slot.
                drop(unsafe { Box::from_raw(p) });
            }
        }
        if self.owns_versions {
            for s in self.versions.iter() {
                // SAFETY: the root is the unique owner of its slots.
                unsafe { s.free() }
            }
        }
    }
}

/// Where a key search stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeekStatus {
    /// `slot` is the key's index in `node`.
    Found,
    /// `slot` is an empty child slot of `node`.
    NotFound,
    /// `slot` is a child slot of `node` holding a bin.
    Maybe,
}

#[derive(Debug, Clone, Copy)]
pub struct SeekResult<'a> {
    pub node: &'a MNode,
    pub slot: usize,
    pub status: SeekStatus,
    child: *mut Child,
}

impl<'a> SeekResult<'a> {
    /// The bin observed at `slot` when the status is `Maybe`.
    pub fn bin(&self) -> Option<&'a Bin> {
        // SAFETY: see `MNode::child`.
        match unsafe { self.child.as_ref() } {
            Some(Child::Bin(b)) => Some(b),
            _ => None,
        }
    }
}

/// A recorded child-slot replacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub from: SlotKind,
    pub to: SlotKind,
}

struct Retired {
    child: *mut Child,
    next: *mut Retired,
}

/// Replaced children, kept until the index drops.
struct RetiredList {
    head: AtomicPtr<Retired>,
}

impl RetiredList {
    fn push(&self, child: *mut Child) {
        let node = Box::into_raw(Box::new(Retired {
            child,
            next: ptr::null_mut(),
        }));
        let mut head = self.head.load(Ordering::SeqCst);
        loop {
            // SAFETY: `node` is still private.
            unsafe { (*node).next = head };
            match trace::cas(&self.head as *const _ as usize, || {
                self.head
                    .compare_exchange(head, node, Ordering::SeqCst, Ordering::SeqCst)
            }) {
                Ok(_) => return,
                Err(h) => head = h,
            }
        }
    }

    fn len(&self) -> usize {
        let mut n = 0;
        let mut p = self.head.load(Ordering::SeqCst);
        while !p.is_null() {
            n += 1;
            // SAFETY: entries are only freed on drop.
            p = unsafe { (*p).next };
        }
        n
    }
}

impl Drop for RetiredList {
    fn drop(&mut self) {
        let mut p = *self.head.get_mut();
        while !p.is_null() {
            // SAFETY: exclusively owned at drop.
            let e = unsafe { Box::from_raw(p) };
            drop(unsafe { Box::from_raw(e.child) });
            p = e.next;
        }
    }
}

/// Lock-free learned ordered map from `u64` keys to `u64` values.
pub struct KanvaIndex {
    root: MNode,
    clock: GlobalClock,
    config: IndexConfig,
    retired: RetiredList,
    transitions: Option<Mutex<Vec<Transition>>>,
}

// SAFETY: see the Sync impls of the contained node types.
unsafe impl Send for KanvaIndex {}
unsafe impl Sync for KanvaIndex {}

impl fmt::Debug for KanvaIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KanvaIndex")
            .field("root_keys", &self.root.keys.len())
            .field("config", &self.config)
            .finish()
    }
}

impl KanvaIndex {
    /// Builds the root over `pairs`, which must be sorted by strictly
    /// increasing key. Every initial version is stamped 0.
    pub fn build(pairs: &[(Key, Value)], config: IndexConfig) -> Result<Self, BuildError> {
        if let Some(i) = pairs.windows(2).position(|w| w[0].0 >= w[1].0) {
            return Err(BuildError::Unsorted(i + 1));
        }
        if config.olb_threshold == 0 || config.tlb_threshold == 0 || config.fanout == 0 {
            return Err(BuildError::Config("thresholds and fanout must be positive"));
        }
        if !(config.eps > 0.0) {
            return Err(BuildError::Config("eps must be positive"));
        }
        Ok(KanvaIndex {
            root: MNode::root(pairs, config.eps),
            clock: GlobalClock::new(),
            config,
            retired: RetiredList {
                head: AtomicPtr::new(ptr::null_mut()),
            },
            transitions: config.log_transitions.then(|| Mutex::new(Vec::new())),
        })
    }

    pub fn root(&self) -> &MNode {
        &self.root
    }

    pub fn clock(&self) -> &GlobalClock {
        &self.clock
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    /// Number of bins and nodes replaced so far.
    pub fn retired_count(&self) -> usize {
        self.retired.len()
    }

    /// Transitions recorded so far when `log_transitions` is set.
    pub fn transitions(&self) -> Vec<Transition> {
        self.transitions
            .as_ref()
            .map(|t| t.lock().unwrap().clone())
            .unwrap_or_default()
    }

    fn log(&self, from: SlotKind, to: SlotKind) {
        if let Some(t) = &self.transitions {
            t.lock().unwrap().push(Transition { from, to });
        }
    }

    /// Descends from the root to the node where `key` is stored or would go.
    pub fn seek(&self, key: Key) -> SeekResult<'_> {
        let mut node = &self.root;
        loop {
            match node.search(key) {
                Ok(i) => {
                    return SeekResult {
                        node,
                        slot: i,
                        status: SeekStatus::Found,
                        child: ptr::null_mut(),
                    }
                }
                Err(ix) => {
                    let slot = (ix + 1) as usize;
                    let child = node.child_ptr(slot);
                    // SAFETY: see `MNode::child`.
                    match unsafe { child.as_ref() } {
                        None => {
                            return SeekResult {
                                node,
                                slot,
                                status: SeekStatus::NotFound,
                                child,
                            }
                        }
                        Some(Child::Bin(_)) => {
                            return SeekResult {
                                node,
                                slot,
                                status: SeekStatus::Maybe,
                                child,
                            }
                        }
                        Some(Child::Node(n)) => node = n,
                    }
                }
            }
        }
    }

    /// Inserts or updates `key`. Returns `false` only when `key` is already
    /// present with `value`.
    pub fn insert(&self, key: Key, value: Value) -> bool {
        trace::op_start();
        loop {
            let s = self.seek(key);
            match s.status {
                SeekStatus::Found => return s.node.version(s.slot).write(Some(value), &self.clock),
                SeekStatus::NotFound => {
                    let fresh = Box::into_raw(Box::new(Child::Bin(Bin::new(
                        key,
                        value,
                        self.config.olb_threshold,
                    ))));
                    if s.node.cas_child(s.slot, ptr::null_mut(), fresh) {
                        // SAFETY: installed; freed only at teardown.
                        if let Child::Bin(Bin::One(olb)) = unsafe { &*fresh } {
                            olb.stamp_all(&self.clock);
                        }
                        self.log(SlotKind::Empty, SlotKind::OneLevel);
                        return true;
                    }
                    // SAFETY: the CAS failed, so `fresh` was never shared.
                    drop(unsafe { Box::from_raw(fresh) });
                }
                SeekStatus::Maybe => {
                    let bin = s.bin().expect("maybe status carries a bin");
                    if bin.size() >= bin.threshold() {
                        self.help_make_model(s.node, s.slot, s.child);
                        continue;
                    }
                    match bin.insert(key, value, &self.clock) {
                        BinOpResult::Done(r) => return r,
                        BinOpResult::UnderMakeModel => self.help_make_model(s.node, s.slot, s.child),
                    }
                }
            }
        }
    }

    /// Marks `key` deleted. Returns `false` if it was absent or already deleted.
    pub fn delete(&self, key: Key) -> bool {
        trace::op_start();
        loop {
            let s = self.seek(key);
            match s.status {
                SeekStatus::Found => {
                    let slot = s.node.version(s.slot);
                    return slot.read_latest(&self.clock).is_some() && slot.write(None, &self.clock);
                }
                SeekStatus::NotFound => return false,
                SeekStatus::Maybe => {
                    let bin = s.bin().expect("maybe status carries a bin");
                    match bin.delete(key, &self.clock) {
                        BinOpResult::Done(r) => return r,
                        BinOpResult::UnderMakeModel => self.help_make_model(s.node, s.slot, s.child),
                    }
                }
            }
        }
    }

    /// Latest value of `key`, `None` if absent or deleted. Never helps.
    pub fn search(&self, key: Key) -> Option<Value> {
        trace::op_start();
        let s = self.seek(key);
        match s.status {
            SeekStatus::Found => s.node.version(s.slot).read_latest(&self.clock),
            SeekStatus::NotFound => None,
            SeekStatus::Maybe => s
                .bin()
                .and_then(|b| b.search(key))
                .and_then(|n| n.version().read_latest(&self.clock)),
        }
    }

    /// Replaces the bin observed at `parent.children[slot]`: a one-level bin
    /// becomes a two-level bin, a two-level bin becomes a model node. Makes a
    /// single replacement attempt; losing the CAS means another helper won.
    fn help_make_model(&self, parent: &MNode, slot: usize, observed: *mut Child) {
        // SAFETY: `observed` was read from a child slot and is never freed
        // before teardown.
        let Some(Child::Bin(bin)) = (unsafe { observed.as_ref() }) else {
            return;
        };
        bin.freeze();
        if parent.child_ptr(slot) != observed {
            return;
        }
        let collected = bin.collect_frozen(&self.clock);
        let (replacement, to) = match bin {
            Bin::One(_) => (
                Child::Bin(Bin::Two(olb_to_tlb(&collected, self.config.fanout, self.config.tlb_threshold))),
                SlotKind::TwoLevel,
            ),
            Bin::Two(_) => (Child::Node(MNode::from_collected(&collected)), SlotKind::Model),
        };
        let fresh = Box::into_raw(Box::new(replacement));
        if parent.cas_child(slot, observed, fresh) {
            self.retired.push(observed);
            self.log(SlotKind::of(Some(unsafe { &*observed })), to);
        } else {
            // SAFETY: never published; its key nodes do not own their slots.
            drop(unsafe { Box::from_raw(fresh) });
        }
    }

    /// Freezes the bin holding `key` without replacing it, leaving the slot
    /// mid-transformation. Returns whether a bin was found.
    #[doc(hidden)]
    pub fn freeze_bin_of(&self, key: Key) -> bool {
        match self.seek(key).bin() {
            Some(b) => {
                b.freeze();
                true
            }
            None => false,
        }
    }

    /// Installs a one-level bin holding `keys` (values equal to keys) into an
    /// empty root child slot, bypassing routing. For auditor fault tests.
    #[doc(hidden)]
    pub fn plant_root_bin(&self, slot: usize, keys: &[Key]) -> bool {
        let Some((&first, rest)) = keys.split_first() else {
            return false;
        };
        let olb = Olb::new(first, first, usize::MAX);
        for &k in rest {
            olb.insert(k, k, &self.clock);
        }
        olb.stamp_all(&self.clock);
        let fresh = Box::into_raw(Box::new(Child::Bin(Bin::One(olb))));
        if self.root.cas_child(slot, ptr::null_mut(), fresh) {
            true
        } else {
            drop(unsafe { Box::from_raw(fresh) });
            false
        }
    }
}
