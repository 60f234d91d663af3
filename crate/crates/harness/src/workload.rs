//! Operation mixes, per-thread op streams and the timed multi-threaded run.

use std::str::FromStr;
use std::thread;
use std::time::{Duration, Instant};

use kanva::{KanvaIndex, Key};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("mix fractions must be non-negative and sum to 1 (got {0}, {1}, {2})")]
    Mix(f64, f64, f64),
    #[error("mix must be three comma-separated numbers: search,insert,delete")]
    MixSyntax,
    #[error("hotspot ratio must be in (0, 1], got {0}")]
    Hotspot(f64),
    #[error("range fraction must be in [0, 1], got {0}")]
    RangeFraction(f64),
    #[error("thread count must be positive")]
    Threads,
    #[error("prefill {prefill} exceeds dataset size {size}")]
    Prefill { prefill: usize, size: usize },
    #[error("unknown workload `{0}`")]
    Preset(String),
}

/// Fractions of search, insert and delete.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mix {
    pub search: f64,
    pub insert: f64,
    pub delete: f64,
}

impl Mix {
    pub fn new(search: f64, insert: f64, delete: f64) -> Result<Mix, SpecError> {
        let ok = [search, insert, delete].iter().all(|f| (0.0..=1.0).contains(f))
            && (search + insert + delete - 1.0).abs() <= 1e-9;
        if ok {
            Ok(Mix { search, insert, delete })
        } else {
            Err(SpecError::Mix(search, insert, delete))
        }
    }
}

impl FromStr for Mix {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Mix, SpecError> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse().map_err(|_| SpecError::MixSyntax))
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [a, b, c] => Mix::new(a, b, c),
            _ => Err(SpecError::MixSyntax),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 95% search, 3% insert, 2% delete.
    ReadHeavy,
    /// 30% search, 50% insert, 20% delete.
    UpdateHeavy,
    /// 50% search, 50% update, Zipfian keys.
    YcsbA,
    /// 95% search, 5% update, Zipfian keys.
    YcsbB,
    /// Search only, Zipfian keys.
    YcsbC,
}

impl Preset {
    pub fn mix(self) -> Mix {
        let (s, i, d) = match self {
            Preset::ReadHeavy => (0.95, 0.03, 0.02),
            Preset::UpdateHeavy => (0.30, 0.50, 0.20),
            Preset::YcsbA => (0.50, 0.50, 0.0),
            Preset::YcsbB => (0.95, 0.05, 0.0),
            Preset::YcsbC => (1.0, 0.0, 0.0),
        };
        Mix::new(s, i, d).unwrap()
    }

    pub fn key_choice(self) -> KeyChoice {
        match self {
            Preset::ReadHeavy | Preset::UpdateHeavy => KeyChoice::Uniform,
            Preset::YcsbA | Preset::YcsbB | Preset::YcsbC => KeyChoice::Zipf(0.99),
        }
    }

    /// YCSB presets update prefilled keys instead of inserting new ones.
    pub fn updates_only(self) -> bool {
        matches!(self, Preset::YcsbA | Preset::YcsbB | Preset::YcsbC)
    }
}

impl FromStr for Preset {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Preset, SpecError> {
        Ok(match s {
            "read-heavy" => Preset::ReadHeavy,
            "update-heavy" => Preset::UpdateHeavy,
            "ycsb-a" => Preset::YcsbA,
            "ycsb-b" => Preset::YcsbB,
            "ycsb-c" => Preset::YcsbC,
            _ => return Err(SpecError::Preset(s.into())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KeyChoice {
    Uniform,
    /// Zipfian over positions in the hot span with exponent θ; position 0 is
    /// the hottest.
    Zipf(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stop {
    Ops(u64),
    Duration(Duration),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub mix: Mix,
    pub threads: usize,
    pub prefill: usize,
    pub stop: Stop,
    /// Operation keys come from a contiguous span holding this fraction of
    /// the key pool.
    pub hotspot: f64,
    /// Fraction of searches issued as range queries instead.
    pub range_frac: f64,
    pub range_width: Key,
    pub key_choice: KeyChoice,
    /// Draw operation keys from the prefilled keys only.
    pub updates_only: bool,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn preset(p: Preset, threads: usize, prefill: usize, stop: Stop, seed: u64) -> Self {
        WorkloadSpec {
            mix: p.mix(),
            threads,
            prefill,
            stop,
            hotspot: 1.0,
            range_frac: 0.0,
            range_width: 100,
            key_choice: p.key_choice(),
            updates_only: p.updates_only(),
            seed,
        }
    }

    pub fn validate(&self, dataset_len: usize) -> Result<(), SpecError> {
        Mix::new(self.mix.search, self.mix.insert, self.mix.delete)?;
        if !(self.hotspot > 0.0 && self.hotspot <= 1.0) {
            return Err(SpecError::Hotspot(self.hotspot));
        }
        if !(0.0..=1.0).contains(&self.range_frac) {
            return Err(SpecError::RangeFraction(self.range_frac));
        }
        if self.threads == 0 {
            return Err(SpecError::Threads);
        }
        if self.prefill > dataset_len {
            return Err(SpecError::Prefill {
                prefill: self.prefill,
                size: dataset_len,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Search,
    Range,
    Insert,
    Delete,
}

/// The prefilled subset of `dataset`, sorted, chosen by `seed`.
pub fn prefill_keys(dataset: &[Key], prefill: usize, seed: u64) -> Vec<Key> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f111);
    let mut keys = rand::seq::index::sample(&mut rng, dataset.len(), prefill)
        .into_iter()
        .map(|i| dataset[i])
        .collect::<Vec<_>>();
    keys.sort_unstable();
    keys
}

/// The contiguous hot span of `pool` for `hotspot`, placed by `seed`.
pub fn hot_span(pool: &[Key], hotspot: f64, seed: u64) -> &[Key] {
    let len = ((pool.len() as f64 * hotspot).ceil() as usize).clamp(pool.len().min(1), pool.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x407_5907);
    let start = rng.random_range(0..=pool.len() - len);
    &pool[start..start + len]
}

/// Op stream of one worker thread, independent of every other thread.
pub struct OpStream<'a> {
    rng: ChaCha8Rng,
    span: &'a [Key],
    zipf: Option<Zipf<f64>>,
    mix: Mix,
    range_frac: f64,
}

impl<'a> OpStream<'a> {
    pub fn new(spec: &WorkloadSpec, span: &'a [Key], thread: usize) -> Self {
        let zipf = match spec.key_choice {
            KeyChoice::Zipf(theta) if !span.is_empty() => Some(Zipf::new(span.len() as f64, theta).expect("valid zipf")),
            _ => None,
        };
        let thread_seed = spec.seed.wrapping_add((thread as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        OpStream {
            rng: ChaCha8Rng::seed_from_u64(thread_seed),
            span,
            zipf,
            mix: spec.mix,
            range_frac: spec.range_frac,
        }
    }

    fn key(&mut self) -> Key {
        let i = match &self.zipf {
            Some(z) => z.sample(&mut self.rng) as usize - 1,
            None => self.rng.random_range(0..self.span.len()),
        };
        self.span[i]
    }
}

impl Iterator for OpStream<'_> {
    type Item = (OpKind, Key);

    fn next(&mut self) -> Option<(OpKind, Key)> {
        if self.span.is_empty() {
            return None;
        }
        let u: f64 = self.rng.random();
        let kind = if u < self.mix.search {
            if self.range_frac > 0.0 && self.rng.random_bool(self.range_frac) {
                OpKind::Range
            } else {
                OpKind::Search
            }
        } else if u < self.mix.search + self.mix.insert {
            OpKind::Insert
        } else {
            OpKind::Delete
        };
        Some((kind, self.key()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub search: u64,
    pub range: u64,
    pub insert: u64,
    pub delete: u64,
    /// Searches that found their key.
    pub search_hits: u64,
}

impl Counts {
    pub fn total(&self) -> u64 {
        self.search + self.range + self.insert + self.delete
    }

    fn add(&mut self, o: &Counts) {
        self.search += o.search;
        self.range += o.range;
        self.insert += o.insert;
        self.delete += o.delete;
        self.search_hits += o.search_hits;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub threads: usize,
    pub counts: Counts,
    pub elapsed: Duration,
}

impl Report {
    pub fn mops(&self) -> f64 {
        self.counts.total() as f64 / self.elapsed.as_secs_f64().max(1e-9) / 1e6
    }
}

/// Builds the index over the prefilled keys (value = key).
pub fn build_prefilled(keys: &[Key], config: kanva::IndexConfig) -> KanvaIndex {
    let pairs: Vec<_> = keys.iter().map(|&k| (k, k)).collect();
    KanvaIndex::build(&pairs, config).expect("prefill keys are sorted and unique")
}

/// Runs the timed phase on `index`. `pool` is where operation keys come from:
/// the dataset, or the prefilled keys for update-only workloads.
pub fn run_workload(index: &KanvaIndex, pool: &[Key], spec: &WorkloadSpec) -> Report {
    let span = hot_span(pool, spec.hotspot, spec.seed);
    let start = Instant::now();
    let counts = thread::scope(|s| {
        let hs: Vec<_> = (0..spec.threads)
            .map(|t| {
                let quota = match spec.stop {
                    Stop::Ops(n) => Some(n / spec.threads as u64 + u64::from((t as u64) < n % spec.threads as u64)),
                    Stop::Duration(_) => None,
                };
                s.spawn(move || worker(index, OpStream::new(spec, span, t), quota, spec, start))
            })
            .collect();
        let mut total = Counts::default();
        for h in hs {
            total.add(&h.join().expect("worker panicked"));
        }
        total
    });
    Report {
        threads: spec.threads,
        counts,
        elapsed: start.elapsed(),
    }
}

fn worker(index: &KanvaIndex, ops: OpStream<'_>, quota: Option<u64>, spec: &WorkloadSpec, start: Instant) -> Counts {
    let deadline = match spec.stop {
        Stop::Duration(d) => Some(start + d),
        Stop::Ops(_) => None,
    };
    let mut c = Counts::default();
    for (n, (kind, key)) in ops.enumerate() {
        if quota.is_some_and(|q| n as u64 >= q) {
            break;
        }
        if n % 1024 == 0 && deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        match kind {
            OpKind::Search => {
                c.search += 1;
                c.search_hits += u64::from(index.search(key).is_some());
            }
            OpKind::Range => {
                c.range += 1;
                std::hint::black_box(index.range(key, spec.range_width));
            }
            OpKind::Insert => {
                c.insert += 1;
                index.insert(key, key);
            }
            OpKind::Delete => {
                c.delete += 1;
                index.delete(key);
            }
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(mix: Mix) -> WorkloadSpec {
        WorkloadSpec {
            mix,
            threads: 2,
            prefill: 0,
            stop: Stop::Ops(1000),
            hotspot: 1.0,
            range_frac: 0.0,
            range_width: 10,
            key_choice: KeyChoice::Uniform,
            updates_only: false,
            seed: 3,
        }
    }

    #[test]
    fn mix_validation() {
        assert!(Mix::new(0.5, 0.5, 0.0).is_ok());
        assert!(Mix::new(0.5, 0.5, 1e-10).is_ok());
        assert!(Mix::new(0.5, 0.4, 0.0).is_err());
        assert!(Mix::new(1.5, -0.5, 0.0).is_err());
        assert_eq!("0.95,0.03,0.02".parse::<Mix>().unwrap(), Preset::ReadHeavy.mix());
        assert_eq!("1,0".parse::<Mix>(), Err(SpecError::MixSyntax));
    }

    #[test]
    fn streams_are_per_thread_deterministic() {
        let pool: Vec<Key> = (0..1000).collect();
        let s = spec(Preset::UpdateHeavy.mix());
        let a: Vec<_> = OpStream::new(&s, &pool, 0).take(100).collect();
        let b: Vec<_> = OpStream::new(&s, &pool, 0).take(100).collect();
        let c: Vec<_> = OpStream::new(&s, &pool, 1).take(100).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn hotspot_keys_stay_in_span() {
        let pool: Vec<Key> = (0..10_000).map(|k| k * 3).collect();
        let mut s = spec(Preset::ReadHeavy.mix());
        s.hotspot = 0.1;
        let span = hot_span(&pool, s.hotspot, s.seed);
        assert_eq!(span.len(), 1000);
        let (lo, hi) = (span[0], span[span.len() - 1]);
        for t in 0..4 {
            assert!(OpStream::new(&s, span, t).take(20_000).all(|(_, k)| (lo..=hi).contains(&k)));
        }
    }

    #[test]
    fn search_only_on_built_index_hits() {
        let keys: Vec<Key> = (0..5000).map(|k| k * 7).collect();
        let idx = build_prefilled(&keys, kanva::IndexConfig::default());
        let mut s = spec(Mix::new(1.0, 0.0, 0.0).unwrap());
        s.threads = 1;
        s.stop = Stop::Ops(20_000);
        let r = run_workload(&idx, &keys, &s);
        assert_eq!(r.counts.search, 20_000);
        assert_eq!(r.counts.search_hits, 20_000);
    }

    #[test]
    fn zipf_prefers_front_of_span() {
        let pool: Vec<Key> = (0..1000).collect();
        let mut s = spec(Preset::YcsbC.mix());
        s.key_choice = KeyChoice::Zipf(0.99);
        let keys: Vec<_> = OpStream::new(&s, &pool, 0).take(10_000).map(|(_, k)| k).collect();
        let front = keys.iter().filter(|&&k| k < 10).count();
        let back = keys.iter().filter(|&&k| k >= 990).count();
        assert!(front > 10 * back.max(1));
    }

    #[test]
    fn ops_quota_split_exactly() {
        let keys: Vec<Key> = (0..100).collect();
        let idx = build_prefilled(&keys, kanva::IndexConfig::default());
        let mut s = spec(Preset::UpdateHeavy.mix());
        s.threads = 3;
        s.stop = Stop::Ops(1000);
        assert_eq!(run_workload(&idx, &keys, &s).counts.total(), 1000);
    }

    #[test]
    fn validation_errors() {
        let mut s = spec(Preset::ReadHeavy.mix());
        s.prefill = 11;
        assert!(matches!(s.validate(10), Err(SpecError::Prefill { .. })));
        s.prefill = 0;
        s.hotspot = 0.0;
        assert_eq!(s.validate(10), Err(SpecError::Hotspot(0.0)));
    }
}
