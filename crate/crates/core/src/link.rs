use std::marker::PhantomData;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::trace;

const FROZEN: usize = 0b1;

/// Atomic `(target, frozen)` pair packed into one word.
///
/// The flag lives in the low bit of the target address, so both halves are
/// read and compare-and-swapped together. Once frozen the link never changes.
pub struct MarkedLink<T> {
    word: AtomicUsize,
    _marker: PhantomData<*mut T>,
}

// SAFETY: the link only stores an address; the pointee's own Sync bounds are
// enforced by the containers that dereference it.
unsafe impl<T: Send + Sync> Send for MarkedLink<T> {}
unsafe impl<T: Send + Sync> Sync for MarkedLink<T> {}

impl<T> std::fmt::Debug for MarkedLink<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (p, frozen) = self.load();
        f.debug_struct("MarkedLink")
            .field("target", &p)
            .field("frozen", &frozen)
            .finish()
    }
}

impl<T> MarkedLink<T> {
    pub fn new(target: *mut T) -> Self {
        debug_assert_eq!(target as usize & FROZEN, 0, "misaligned link target");
        MarkedLink {
            word: AtomicUsize::new(target as usize),
            _marker: PhantomData,
        }
    }

    pub fn null() -> Self {
        Self::new(std::ptr::null_mut())
    }

    #[inline]
    pub fn load(&self) -> (*mut T, bool) {
        let w = self.word.load(Ordering::SeqCst);
        ((w & !FROZEN) as *mut T, w & FROZEN != 0)
    }

    #[inline]
    pub fn is_frozen(&self) -> bool {
        self.word.load(Ordering::SeqCst) & FROZEN != 0
    }

    /// Swings an unfrozen link from `current` to `new`. Fails if the target
    /// moved or the link froze in the meantime.
    pub fn cas(&self, current: *mut T, new: *mut T) -> Result<(), (*mut T, bool)> {
        trace::cas(self.addr(), || {
            self.word.compare_exchange(
                current as usize,
                new as usize,
                Ordering::SeqCst,
                Ordering::SeqCst,
            )
        })
        .map(drop)
        .map_err(|w| ((w & !FROZEN) as *mut T, w & FROZEN != 0))
    }

    /// Sets the frozen flag, keeping the target. Idempotent. Returns the
    /// target the link is frozen on.
    pub fn freeze(&self) -> *mut T {
        let mut w = self.word.load(Ordering::SeqCst);
        loop {
            if w & FROZEN != 0 {
                return (w & !FROZEN) as *mut T;
            }
            match trace::cas(self.addr(), || {
                self.word
                    .compare_exchange(w, w | FROZEN, Ordering::SeqCst, Ordering::SeqCst)
            }) {
                Ok(_) => return w as *mut T,
                Err(actual) => w = actual,
            }
        }
    }

    /// Unsynchronized target update for links not yet shared.
    pub fn set_private(&mut self, target: *mut T) {
        *self.word.get_mut() = target as usize;
    }

    fn addr(&self) -> usize {
        &self.word as *const _ as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn freeze_blocks_cas_and_keeps_target() {
        let mut a = 0u64;
        let mut b = 0u64;
        let pa: *mut u64 = &mut a;
        let pb: *mut u64 = &mut b;
        let link = MarkedLink::new(pa);
        assert_eq!(link.freeze(), pa);
        assert_eq!(link.load(), (pa, true));
        assert_eq!(link.cas(pa, pb), Err((pa, true)));
        // idempotent
        assert_eq!(link.freeze(), pa);
        assert_eq!(link.load(), (pa, true));
    }

    #[test]
    fn cas_swings_unfrozen_link() {
        let mut b = 0u64;
        let pb: *mut u64 = &mut b;
        let link = MarkedLink::<u64>::null();
        assert!(link.cas(std::ptr::null_mut(), pb).is_ok());
        assert_eq!(link.load(), (pb, false));
        assert_eq!(link.cas(std::ptr::null_mut(), pb), Err((pb, false)));
    }
}
