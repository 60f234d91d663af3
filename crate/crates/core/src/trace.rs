//! Optional log of compare-and-swap outcomes on shared locations.
//!
//! Compiled to no-ops unless the `cas-trace` feature is enabled. When enabled,
//! every CAS performed by the index appends `(seq, thread, location, ok)` to a
//! process-wide log, and operations mark their start so a failed CAS can be
//! matched against a concurrent success.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEvent {
    /// An index operation started on `thread`.
    OpStart { seq: u64, thread: u64 },
    Cas {
        seq: u64,
        thread: u64,
        location: usize,
        ok: bool,
    },
}

#[cfg(feature = "cas-trace")]
mod imp {
    use super::TraceEvent;
    use std::cell::Cell;
    use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};
    use std::sync::Mutex;

    static ENABLED: AtomicBool = AtomicBool::new(false);
    static SEQ: AtomicU64 = AtomicU64::new(0);
    static NEXT_THREAD: AtomicU64 = AtomicU64::new(0);
    static LOG: Mutex<Vec<TraceEvent>> = Mutex::new(Vec::new());
    static YIELD_EVERY: AtomicU32 = AtomicU32::new(0);

    thread_local! {
        static THREAD: Cell<u64> = Cell::new(NEXT_THREAD.fetch_add(1, Ordering::Relaxed));
        static RNG: Cell<u64> = Cell::new(0x9e37_79b9_7f4a_7c15 ^ (NEXT_THREAD.fetch_add(1, Ordering::Relaxed) << 32 | 1));
    }

    pub fn perturb_schedule(every: u32) {
        YIELD_EVERY.store(every, Ordering::Relaxed);
    }

    /// Yields before roughly one CAS in `every`, so even a single core
    /// interleaves operations mid-flight.
    fn perturb() {
        let every = YIELD_EVERY.load(Ordering::Relaxed);
        if every == 0 {
            return;
        }
        let r = RNG.with(|c| {
            // xorshift64
            let mut x = c.get();
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            c.set(x);
            x
        });
        if r % u64::from(every) == 0 {
            std::thread::yield_now();
        }
    }

    fn push(make: impl FnOnce(u64, u64) -> TraceEvent) {
        if !ENABLED.load(Ordering::Relaxed) {
            return;
        }
        let mut log = LOG.lock().unwrap();
        let seq = SEQ.fetch_add(1, Ordering::SeqCst);
        let thread = THREAD.with(|t| t.get());
        log.push(make(seq, thread));
    }

    pub fn cas<T, E>(location: usize, f: impl FnOnce() -> Result<T, E>) -> Result<T, E> {
        perturb();
        if !ENABLED.load(Ordering::Relaxed) {
            return f();
        }
        // The CAS runs under the log lock so log order matches CAS order.
        let mut log = LOG.lock().unwrap();
        let res = f();
        let seq = SEQ.fetch_add(1, Ordering::SeqCst);
        let thread = THREAD.with(|t| t.get());
        log.push(TraceEvent::Cas {
            seq,
            thread,
            location,
            ok: res.is_ok(),
        });
        res
    }

    pub fn op_start() {
        push(|seq, thread| TraceEvent::OpStart { seq, thread });
    }

    pub fn start() {
        LOG.lock().unwrap().clear();
        ENABLED.store(true, Ordering::SeqCst);
    }

    pub fn stop() -> Vec<TraceEvent> {
        ENABLED.store(false, Ordering::SeqCst);
        std::mem::take(&mut *LOG.lock().unwrap())
    }
}

#[cfg(not(feature = "cas-trace"))]
mod imp {
    use super::TraceEvent;

    #[inline(always)]
    pub fn cas<T, E>(_location: usize, f: impl FnOnce() -> Result<T, E>) -> Result<T, E> {
        f()
    }
    #[inline(always)]
    pub fn op_start() {}
    pub fn start() {}
    pub fn perturb_schedule(_every: u32) {}
    pub fn stop() -> Vec<TraceEvent> {
        Vec::new()
    }
}

pub(crate) use imp::{cas, op_start};

/// Clears the log and starts recording.
pub fn start() {
    imp::start()
}

/// Makes every traced CAS yield the thread with probability `1 / every`
/// (0 turns it off). A no-op without the `cas-trace` feature.
pub fn perturb_schedule(every: u32) {
    imp::perturb_schedule(every)
}

/// Stops recording and returns everything logged since [`start`].
pub fn stop() -> Vec<TraceEvent> {
    imp::stop()
}

/// Failed CASes that no other thread's successful CAS on the same location
/// can explain.
///
/// A failure by thread `t` at `seq` is explained when some other thread
/// succeeded on the same location after `t` started its current operation and
/// before `seq`.
pub fn unexplained_failures(events: &[TraceEvent]) -> Vec<TraceEvent> {
    use std::collections::HashMap;

    let mut op_started: HashMap<u64, u64> = HashMap::new();
    let mut successes: HashMap<usize, Vec<(u64, u64)>> = HashMap::new();
    let mut out = Vec::new();
    for ev in events {
        match *ev {
            TraceEvent::OpStart { seq, thread } => {
                op_started.insert(thread, seq);
            }
            TraceEvent::Cas {
                seq,
                thread,
                location,
                ok: true,
            } => successes.entry(location).or_default().push((seq, thread)),
            TraceEvent::Cas {
                seq,
                thread,
                location,
                ok: false,
            } => {
                let since = op_started.get(&thread).copied().unwrap_or(0);
                let explained = successes.get(&location).is_some_and(|v| {
                    v.iter()
                        .rev()
                        .take_while(|(s, _)| *s > since)
                        .any(|&(s, th)| th != thread && s < seq)
                });
                if !explained {
                    out.push(*ev);
                }
            }
        }
    }
    out
}
