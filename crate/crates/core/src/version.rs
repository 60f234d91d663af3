//! Versioned values and the global clock.
//!
//! Every key carries a [`VersionSlot`]: an atomic head pointer into a chain of
//! [`VersionedValue`]s, newest first. Timestamps are assigned lazily from the
//! [`GlobalClock`] by whichever thread first touches an unset version, which is
//! what lets a range scan pick a clock value and read a consistent snapshot.

use std::ptr;
use std::sync::atomic::{AtomicI64, AtomicPtr, Ordering};

use crate::trace;

/// Key type stored by the index.
pub type Key = u64;
/// Concrete user value.
pub type Value = u64;
/// A value or the deletion marker (`None`).
pub type Payload = Option<Value>;
/// Clock value attached to a version. `UNSET_TS` means not yet assigned.
pub type Timestamp = i64;

pub const UNSET_TS: Timestamp = -1;

/// Monotone counter versioning every update.
#[derive(Debug, Default)]
pub struct GlobalClock {
    now: AtomicI64,
}

impl GlobalClock {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn now(&self) -> Timestamp {
        self.now.load(Ordering::SeqCst)
    }

    /// Reads the clock and tries once to advance it by one.
    ///
    /// A failed advance means some concurrent caller already moved the clock
    /// past the returned value, so the caller's snapshot is still closed.
    pub fn read_and_bump(&self) -> Timestamp {
        let t = self.now.load(Ordering::SeqCst);
        let _ = trace::cas(&self.now as *const _ as usize, || {
            self.now
                .compare_exchange(t, t + 1, Ordering::SeqCst, Ordering::SeqCst)
        });
        t
    }
}

/// One entry of a version chain.
#[derive(Debug)]
pub struct VersionedValue {
    val: Payload,
    ts: AtomicI64,
    // Written once before publication, immutable afterwards.
    next: *mut VersionedValue,
}

// SAFETY: `next` is immutable once the node is reachable by other threads.
unsafe impl Send for VersionedValue {}
unsafe impl Sync for VersionedValue {}

impl VersionedValue {
    pub fn new(val: Payload) -> Self {
        Self::with_ts(val, UNSET_TS)
    }

    pub fn with_ts(val: Payload, ts: Timestamp) -> Self {
        VersionedValue {
            val,
            ts: AtomicI64::new(ts),
            next: ptr::null_mut(),
        }
    }

    #[inline]
    pub fn val(&self) -> Payload {
        self.val
    }

    #[inline]
    pub fn ts(&self) -> Timestamp {
        self.ts.load(Ordering::SeqCst)
    }

    /// Older version, if any.
    #[inline]
    pub fn older(&self) -> Option<&VersionedValue> {
        // SAFETY: chain links are immutable once published and versions are
        // only freed together with their owning slot.
        unsafe { self.next.as_ref() }
    }

    /// Single compare-and-swap from unset to `t`. Returns whether this call
    /// assigned the timestamp.
    pub fn try_assign_ts(&self, t: Timestamp) -> bool {
        if self.ts.load(Ordering::SeqCst) != UNSET_TS {
            return false;
        }
        trace::cas(&self.ts as *const _ as usize, || {
            self.ts
                .compare_exchange(UNSET_TS, t, Ordering::SeqCst, Ordering::SeqCst)
        })
        .is_ok()
    }
}

/// Assigns `v` a timestamp from `clock` if it has none.
///
/// The clock is read immediately before the single CAS attempt.
#[inline]
pub fn init_ts(v: &VersionedValue, clock: &GlobalClock) {
    if v.ts() == UNSET_TS {
        v.try_assign_ts(clock.now());
    }
}

/// Atomic head of a version chain. Owns every version reachable from it.
#[derive(Debug)]
pub struct VersionSlot {
    head: AtomicPtr<VersionedValue>,
}

// SAFETY: all shared mutation goes through atomics; chain nodes are immutable
// apart from their atomic timestamp.
unsafe impl Send for VersionSlot {}
unsafe impl Sync for VersionSlot {}

impl VersionSlot {
    /// Slot whose single version has an unset timestamp.
    pub fn new(val: Payload) -> Self {
        Self::from_version(VersionedValue::new(val))
    }

    /// Slot whose single version already carries `ts`.
    pub fn with_ts(val: Payload, ts: Timestamp) -> Self {
        Self::from_version(VersionedValue::with_ts(val, ts))
    }

    fn from_version(v: VersionedValue) -> Self {
        VersionSlot {
            head: AtomicPtr::new(Box::into_raw(Box::new(v))),
        }
    }

    #[inline]
    pub fn head(&self) -> &VersionedValue {
        // SAFETY: the head is never null and never freed while the slot lives.
        unsafe { &*self.head.load(Ordering::SeqCst) }
    }

    /// Iterates the chain newest first.
    pub fn versions(&self) -> impl Iterator<Item = &VersionedValue> {
        std::iter::successors(Some(self.head()), |v| v.older())
    }

    /// Latest payload; assigns the head's timestamp first.
    pub fn read_latest(&self, clock: &GlobalClock) -> Payload {
        let h = self.head();
        init_ts(h, clock);
        h.val
    }

    /// Installs `val` as the newest version unless it already is.
    ///
    /// Returns `false` without touching the chain when the current head holds
    /// an equal payload.
    pub fn write(&self, val: Payload, clock: &GlobalClock) -> bool {
        let mut fresh: Option<Box<VersionedValue>> = None;
        loop {
            let cur = self.head.load(Ordering::SeqCst);
            // SAFETY: see `head`.
            let cur_ref = unsafe { &*cur };
            init_ts(cur_ref, clock);
            if cur_ref.val == val {
                return false;
            }
            let mut node = fresh.take().unwrap_or_else(|| Box::new(VersionedValue::new(val)));
            node.next = cur;
            let raw = Box::into_raw(node);
            let res = trace::cas(&self.head as *const _ as usize, || {
                self.head
                    .compare_exchange(cur, raw, Ordering::SeqCst, Ordering::SeqCst)
            });
            match res {
                Ok(_) => {
                    // SAFETY: just published, never freed before the slot.
                    init_ts(unsafe { &*raw }, clock);
                    return true;
                }
                // SAFETY: the CAS failed, so `raw` was never shared.
                Err(_) => fresh = Some(unsafe { Box::from_raw(raw) }),
            }
        }
    }
}

impl Drop for VersionSlot {
    fn drop(&mut self) {
        let mut p = *self.head.get_mut();
        while !p.is_null() {
            // SAFETY: the slot exclusively owns its chain.
            let b = unsafe { Box::from_raw(p) };
            p = b.next;
        }
    }
}
