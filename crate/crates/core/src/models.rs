//! Linear rank models over sorted key arrays and the searches they drive.
//!
//! A [`Model`] maps a key to an approximate position `a * key + b` in a sorted
//! array, with `eps` the largest absolute residual over the keys it was fitted
//! on. Fitting is the closed-form least-squares solution accumulated in one
//! pass; `eps` is then measured exactly with a second pass using the same
//! floating-point expression as [`Model::predict_raw`], so the bound holds for
//! every fitted key regardless of rounding in the fit itself.

use std::ptr;
use std::sync::atomic::{AtomicPtr, Ordering};

use crate::version::Key;

/// `rank ≈ a * key + b`, off by at most `eps` on the fitted keys.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    pub a: f64,
    pub b: f64,
    pub eps: f64,
}

impl Model {
    pub const ZERO: Model = Model {
        a: 0.0,
        b: 0.0,
        eps: 0.0,
    };

    #[inline]
    pub fn predict_raw(&self, key: Key) -> f64 {
        self.a * key as f64 + self.b
    }

    /// Rounded (half up) prediction clamped to `[0, len - 1]`.
    #[inline]
    pub fn predict(&self, key: Key, len: usize) -> usize {
        let r = (self.predict_raw(key) + 0.5).floor();
        clamp_index(r, 0, len.saturating_sub(1))
    }

    /// Inclusive index window `[lo, hi]` guaranteed to contain the rank of any
    /// fitted key, clamped to `[first, last]`.
    #[inline]
    pub fn window(&self, key: Key, first: usize, last: usize) -> (usize, usize) {
        let p = self.predict_raw(key);
        let lo = clamp_index((p - self.eps).floor(), first, last);
        let hi = clamp_index((p + self.eps).ceil(), first, last);
        (lo, hi)
    }

    /// Largest `|predict_raw(keys[i]) - (offset + i)|`.
    pub fn max_residual(&self, keys: &[Key], offset: usize) -> f64 {
        keys.iter()
            .enumerate()
            .map(|(i, &k)| (self.predict_raw(k) - (offset + i) as f64).abs())
            .fold(0.0, f64::max)
    }
}

fn clamp_index(x: f64, lo: usize, hi: usize) -> usize {
    if x.is_nan() || x <= lo as f64 {
        lo
    } else if x >= hi as f64 {
        hi
    } else {
        x as usize
    }
}

/// Least-squares fit of rank on key for a sorted key array.
pub fn fit_linear(keys: &[Key]) -> Model {
    fit_ranked(keys, 0)
}

/// As [`fit_linear`], with ranks starting at `offset` instead of zero.
pub fn fit_ranked(keys: &[Key], offset: usize) -> Model {
    let n = keys.len();
    if n == 0 {
        return Model::ZERO;
    }
    let base = keys[0];
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (i, &k) in keys.iter().enumerate() {
        // Accumulate over key offsets from the first key to keep the sums small.
        let x = (k - base) as f64;
        let y = i as f64;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let nf = n as f64;
    let denom = nf * sxx - sx * sx;
    let mut m = if n == 1 || !(denom > 0.0) {
        Model {
            a: 0.0,
            b: offset as f64,
            eps: 0.0,
        }
    } else {
        let a = (nf * sxy - sx * sy) / denom;
        let b_local = (sy - a * sx) / nf;
        Model {
            a,
            b: b_local + offset as f64 - a * base as f64,
            eps: 0.0,
        }
    };
    m.eps = m.max_residual(keys, offset);
    m
}

/// Write-once slot where concurrent fitters publish one result.
#[derive(Debug, Default)]
pub struct PublishedModel {
    slot: AtomicPtr<Model>,
}

impl PublishedModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Offers `m`; the first offer wins. Returns the winning model and whether
    /// this call published it.
    pub fn publish(&self, m: Model) -> (Model, bool) {
        let mine = Box::into_raw(Box::new(m));
        match self
            .slot
            .compare_exchange(ptr::null_mut(), mine, Ordering::SeqCst, Ordering::SeqCst)
        {
            Ok(_) => (m, true),
            Err(winner) => {
                // SAFETY: our box lost the race and was never shared.
                drop(unsafe { Box::from_raw(mine) });
                // SAFETY: the winner stays allocated until `self` drops.
                (unsafe { *winner }, false)
            }
        }
    }

    pub fn get(&self) -> Option<Model> {
        // SAFETY: see `publish`.
        unsafe { self.slot.load(Ordering::SeqCst).as_ref().copied() }
    }
}

impl Drop for PublishedModel {
    fn drop(&mut self) {
        let p = *self.slot.get_mut();
        if !p.is_null() {
            // SAFETY: exclusively owned at drop.
            drop(unsafe { Box::from_raw(p) });
        }
    }
}

/// Fits `keys` on `helpers` threads, each into private storage, and returns
/// the one result published first.
pub fn fit_linear_published(keys: &[Key], helpers: usize) -> Model {
    let slot = PublishedModel::new();
    std::thread::scope(|s| {
        for _ in 0..helpers.max(1) {
            s.spawn(|| slot.publish(fit_linear(keys)));
        }
    });
    slot.get().expect("at least one helper publishes")
}

/// One piece of the root's piecewise model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start_key: Key,
    pub start_index: usize,
    /// Predicts global ranks (already offset by `start_index`).
    pub model: Model,
}

/// Greedy left-to-right segmentation with every segment's residual within
/// `eps_target`.
///
/// Each segment is grown by doubling its length while the refitted model stays
/// within bound, then the boundary between the last passing and first failing
/// length is bisected. Every accepted length is re-verified against all keys in
/// the segment.
pub fn segment_root(keys: &[Key], eps_target: f64) -> Vec<Segment> {
    let n = keys.len();
    let mut out = Vec::new();
    let mut start = 0;
    let fits = |s: usize, len: usize| {
        let m = fit_ranked(&keys[s..s + len], s);
        (m.eps <= eps_target).then_some(m)
    };
    while start < n {
        let rest = n - start;
        let mut good_len = 1;
        let mut good = fit_ranked(&keys[start..start + 1], start);
        let mut bad_len = None;
        let mut len = 2;
        while good_len < rest {
            let try_len = len.min(rest);
            match fits(start, try_len) {
                Some(m) => {
                    good_len = try_len;
                    good = m;
                    len = try_len.saturating_mul(2);
                }
                None => {
                    bad_len = Some(try_len);
                    break;
                }
            }
        }
        if let Some(mut bad) = bad_len {
            while bad - good_len > 1 {
                let mid = good_len + (bad - good_len) / 2;
                match fits(start, mid) {
                    Some(m) => {
                        good_len = mid;
                        good = m;
                    }
                    None => bad = mid,
                }
            }
        }
        out.push(Segment {
            start_key: keys[start],
            start_index: start,
            model: good,
        });
        start += good_len;
    }
    out
}

/// Outcome of an in-node search: `Ok(i)` when `keys[i] == key`, otherwise
/// `Err(i)` with `i` the index of the greatest key below `key` (`-1` if none).
pub type NodeSearch = Result<usize, isize>;

fn to_node_search(keys: &[Key], lower_bound: usize, key: Key) -> NodeSearch {
    if lower_bound < keys.len() && keys[lower_bound] == key {
        Ok(lower_bound)
    } else {
        Err(lower_bound as isize - 1)
    }
}

/// First index in `keys[lo..hi]` holding a key `>= key`, or `hi`.
#[inline]
fn lower_bound_in(keys: &[Key], lo: usize, hi: usize, key: Key) -> usize {
    lo + keys[lo..hi].partition_point(|&k| k < key)
}

/// Root search: pick the segment by start key, predict, then binary-search
/// the `eps` window.
pub fn search_segmented(keys: &[Key], segments: &[Segment], key: Key) -> NodeSearch {
    if keys.is_empty() || key < keys[0] {
        return Err(-1);
    }
    let si = segments.partition_point(|s| s.start_key <= key) - 1;
    let seg = &segments[si];
    let first = seg.start_index;
    let end = segments.get(si + 1).map_or(keys.len(), |s| s.start_index);
    let (wlo, whi) = seg.model.window(key, first, end - 1);
    let mut lb = lower_bound_in(keys, wlo, whi + 1, key);
    // Fitted keys always land inside the window; absent keys only can
    // straddle its edge, so widen to the segment when the bound hits it.
    if lb == wlo && wlo > first && keys[wlo - 1] >= key {
        lb = lower_bound_in(keys, first, wlo, key);
    } else if lb == whi + 1 && whi + 1 < end && keys[whi + 1] < key {
        lb = lower_bound_in(keys, whi + 1, end, key);
    }
    to_node_search(keys, lb, key)
}

/// Non-root search: gallop outward from the predicted position, then
/// binary-search the bracket.
pub fn search_exponential(keys: &[Key], model: &Model, key: Key) -> NodeSearch {
    let n = keys.len();
    if n == 0 {
        return Err(-1);
    }
    let p = model.predict(key, n);
    let lb = if keys[p] < key {
        // Bracket (lo, hi]: keys[lo] < key, and keys[hi] >= key or hi == n.
        let mut lo = p;
        let mut step = 1;
        let mut hi = p + 1;
        while hi < n && keys[hi] < key {
            lo = hi;
            step *= 2;
            hi = (p + step).min(n);
        }
        lower_bound_in(keys, lo + 1, hi, key)
    } else {
        // Bracket [lo, hi]: keys[hi] >= key, and keys[lo] < key or lo == 0.
        let mut hi = p;
        let mut step = 1;
        let mut lo = p.saturating_sub(1);
        while lo > 0 && keys[lo] >= key {
            hi = lo;
            step *= 2;
            lo = p.saturating_sub(step);
        }
        lower_bound_in(keys, lo, hi, key)
    };
    to_node_search(keys, lb, key)
}
