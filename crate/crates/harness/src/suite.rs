//! The acceptance criteria as runnable checks, shared by `kanva verify` and
//! the `acceptance` test target.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Barrier;
use std::thread;
use std::time::{Duration, Instant};

use kanva::models::{fit_linear, fit_linear_published, search_exponential, NodeSearch};
use kanva::verify::checker::check_linearizable_from;
use kanva::verify::history::{format_history, merge, parse_history};
use kanva::verify::oracle::{apply, run, Op};
use kanva::verify::{audit_structure, check_linearizable, CheckOutcome, Recorder};
use kanva::{IndexConfig, KanvaIndex, Key, Value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{generate_dataset, DatasetSpec, Source};
use crate::workload::{build_prefilled, prefill_keys, run_workload, Preset, Stop, WorkloadSpec};

/// Committed histories that must all be rejected.
pub const PLANTED: &[(&str, &str)] = &[
    ("planted_violation.log", include_str!("../corpus/planted_violation.log")),
    ("planted_stale_range.log", include_str!("../corpus/planted_stale_range.log")),
    ("planted_lost_insert.log", include_str!("../corpus/planted_lost_insert.log")),
    ("planted_double_delete.log", include_str!("../corpus/planted_double_delete.log")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// The host cannot exercise the criterion; the measurement is still
    /// reported.
    NotApplicable,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u32,
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::NotApplicable => "N/A ",
        };
        write!(
            f,
            "{tag} [{}] {} ({:.2} s, budget {} s): {}",
            self.id,
            self.name,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs(),
            self.detail
        )
    }
}

pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    pub budget: Duration,
    run: fn() -> (Status, String),
}

impl Criterion {
    /// Runs the check; exceeding the time budget fails an otherwise passing
    /// criterion.
    pub fn run(&self) -> Outcome {
        let start = Instant::now();
        let (mut status, mut detail) = (self.run)();
        let elapsed = start.elapsed();
        if status == Status::Pass && elapsed > self.budget {
            status = Status::Fail;
            detail = format!("over time budget; {detail}");
        }
        Outcome {
            id: self.id,
            name: self.name,
            status,
            detail,
            elapsed,
            budget: self.budget,
        }
    }
}

const fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

pub const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, name: "sequential ADT conformance", budget: secs(30), run: sequential_conformance },
    Criterion { id: 2, name: "eps soundness and search equivalence", budget: secs(10), run: eps_soundness },
    Criterion { id: 3, name: "lock-free fit equivalence", budget: secs(5), run: published_fit },
    Criterion { id: 4, name: "no lost pair under transformation", budget: secs(60), run: no_lost_pair },
    Criterion { id: 5, name: "linearizability at small scale", budget: secs(300), run: small_linearizability },
    Criterion { id: 6, name: "range snapshot soundness and completeness", budget: secs(30), run: snapshot_ranges },
    Criterion { id: 7, name: "workload fidelity", budget: secs(30), run: workload_fidelity },
    Criterion { id: 8, name: "scaling sanity", budget: secs(60), run: scaling },
    Criterion { id: 9, name: "frozen-bin read availability", budget: secs(30), run: frozen_bin_reads },
];

fn verdict(ok: bool, detail: String) -> (Status, String) {
    (if ok { Status::Pass } else { Status::Fail }, detail)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn finish(r: Result<String, String>) -> (Status, String) {
    match r {
        Ok(d) => (Status::Pass, d),
        Err(e) => (Status::Fail, e),
    }
}

fn audit_against(index: &KanvaIndex, expect: &BTreeMap<Key, Value>) -> Result<(), String> {
    let report = audit_structure(index);
    ensure(report.is_clean(), || {
        format!(
            "audit findings: {:?}",
            &report.findings[..report.findings.len().min(5)]
        )
    })?;
    ensure(report.map == *expect, || {
        let missing = expect.keys().filter(|k| !report.map.contains_key(k)).count();
        let extra = report.map.keys().filter(|k| !expect.contains_key(k)).count();
        format!("audit map differs from oracle: {missing} missing, {extra} extra")
    })
}

fn sequential_conformance() -> (Status, String) {
    finish((|| {
        const OPS: usize = 1_000_000;
        const DOMAIN: Key = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut prefill: Vec<Key> = (0..10_000).map(|_| rng.random_range(0..DOMAIN)).collect();
        prefill.sort_unstable();
        prefill.dedup();
        let idx = build_prefilled(&prefill, IndexConfig::default());
        let mut oracle: BTreeMap<Key, Value> = prefill.iter().map(|&k| (k, k)).collect();
        for n in 0..OPS {
            let k = rng.random_range(0..DOMAIN);
            let op = match rng.random_range(0..10) {
                0..=3 => Op::Insert(k, rng.random_range(0..4)),
                4..=5 => Op::Delete(k),
                6..=8 => Op::Search(k),
                _ => Op::Range(k, rng.random_range(0..100)),
            };
            let want = apply(&mut oracle, &op);
            let got = run(&idx, &op);
            ensure(got == want, || format!("op {n} `{op}`: index {got}, oracle {want}"))?;
        }
        audit_against(&idx, &oracle)?;
        Ok(format!("{OPS} ops identical to oracle, {} live keys, audit clean", oracle.len()))
    })())
}

fn oracle_search(keys: &[Key], key: Key) -> NodeSearch {
    keys.binary_search(&key)
        .map_err(|i| i as isize - 1)
}

fn eps_soundness() -> (Status, String) {
    finish((|| {
        let eps = IndexConfig::default().eps;
        let mut summary = Vec::new();
        for (name, source) in [("uniform", Source::uniform()), ("lognormal", Source::lognormal())] {
            let keys = generate_dataset(&DatasetSpec {
                source,
                size: 100_000,
                seed: 2,
            })
            .map_err(|e| e.to_string())?;
            let pairs: Vec<_> = keys.iter().map(|&k| (k, 0)).collect();
            let idx = KanvaIndex::build(&pairs, IndexConfig::default()).map_err(|e| e.to_string())?;
            let segs = idx.root().segments();
            for (si, s) in segs.iter().enumerate() {
                ensure(s.model.eps <= eps, || format!("{name}: segment {si} eps {} > {eps}", s.model.eps))?;
                let end = segs.get(si + 1).map_or(keys.len(), |n| n.start_index);
                for (i, &k) in keys.iter().enumerate().take(end).skip(s.start_index) {
                    let p = s.model.predict_raw(k);
                    let (lo, hi) = s.model.window(k, s.start_index, end - 1);
                    ensure((p - i as f64).abs() <= s.model.eps && (lo..=hi).contains(&i), || {
                        format!("{name}: key {k} rank {i} predicted {p} eps {}", s.model.eps)
                    })?;
                }
            }
            let flat = fit_linear(&keys);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for n in 0..100_000 {
                let probe = if n % 2 == 0 {
                    keys[rng.random_range(0..keys.len())]
                } else {
                    rng.random_range(0..=keys[keys.len() - 1].saturating_add(1))
                };
                let want = oracle_search(&keys, probe);
                let root = idx.root().search(probe);
                let nonroot = search_exponential(&keys, &flat, probe);
                ensure(root == want && nonroot == want, || {
                    format!("{name}: probe {probe}: root {root:?} nonroot {nonroot:?} oracle {want:?}")
                })?;
            }
            summary.push(format!("{name} {} segments", segs.len()));
        }
        Ok(format!("every rank within eps {eps}; 2x100000 probes agree; {}", summary.join(", ")))
    })())
}

fn published_fit() -> (Status, String) {
    finish((|| {
        let keys = generate_dataset(&DatasetSpec {
            source: Source::lognormal(),
            size: 100_000,
            seed: 4,
        })
        .map_err(|e| e.to_string())?;
        let want = fit_linear(&keys);
        let bits = |m: &kanva::models::Model| (m.a.to_bits(), m.b.to_bits(), m.eps.to_bits());
        for helpers in [1, 8, 32] {
            let got = fit_linear_published(&keys, helpers);
            ensure(bits(&got) == bits(&want), || format!("{helpers} helpers: {got:?} vs {want:?}"))?;
        }
        Ok(format!("1, 8, 32 helpers bit-identical (a={:e}, b={:e}, eps={})", want.a, want.b, want.eps))
    })())
}

fn no_lost_pair() -> (Status, String) {
    finish((|| {
        const THREADS: u64 = 8;
        const PER: u64 = 100_000;
        let root: Vec<_> = (0..16u64).map(|i| (i << 40, i)).collect();
        let cfg = IndexConfig {
            log_transitions: true,
            ..IndexConfig::default()
        };
        let idx = KanvaIndex::build(&root, cfg).map_err(|e| e.to_string())?;
        kanva::trace::perturb_schedule(8);
        thread::scope(|s| {
            for t in 0..THREADS {
                let idx = &idx;
                s.spawn(move || {
                    for i in 0..PER {
                        // Interleaved so every thread hits the same bins.
                        let k = 1 + i * THREADS + t;
                        idx.insert(k, k.wrapping_mul(31));
                    }
                });
            }
        });
        kanva::trace::perturb_schedule(0);
        let mut expect: BTreeMap<Key, Value> = root.into_iter().collect();
        expect.extend((1..=THREADS * PER).map(|k| (k, k.wrapping_mul(31))));
        audit_against(&idx, &expect)?;
        let n = idx.transitions().len();
        ensure(n >= 1000, || format!("only {n} transitions"))?;
        Ok(format!("{} keys present after {n} slot transitions, audit clean", expect.len()))
    })())
}

/// Thresholds small enough that a dozen operations split and retrain bins.
fn tiny() -> IndexConfig {
    IndexConfig {
        olb_threshold: 2,
        tlb_threshold: 4,
        fanout: 2,
        eps: 1.0,
        log_transitions: false,
    }
}

fn random_op(rng: &mut ChaCha8Rng) -> Op {
    let k = rng.random_range(1..=8);
    match rng.random_range(0..10) {
        0..=3 => Op::Insert(k, rng.random_range(0..3)),
        4..=5 => Op::Delete(k),
        6..=7 => Op::Search(k),
        _ => Op::Range(rng.random_range(0..=8), rng.random_range(0..4)),
    }
}

/// Records one 3-thread history of up to 12 ops on a fresh index.
fn record_history(seed: u64) -> (BTreeMap<Key, Value>, Vec<kanva::verify::HistoryEvent>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut root: Vec<Key> = (1..=8).filter(|_| rng.random_bool(0.15)).collect();
    root.dedup();
    let pairs: Vec<_> = root.iter().map(|&k| (k, 9)).collect();
    let idx = KanvaIndex::build(&pairs, tiny()).unwrap();
    let mut initial: BTreeMap<Key, Value> = pairs.into_iter().collect();
    for _ in 0..rng.random_range(0..4) {
        let k = rng.random_range(1..=8);
        idx.insert(k, 8);
        initial.insert(k, 8);
    }
    if rng.random_bool(0.3) {
        // Leave a bin frozen mid-transformation for the threads to find.
        idx.freeze_bin_of(rng.random_range(1..=8));
    }
    let scripts: Vec<Vec<(Op, bool)>> = (0..3)
        .map(|_| {
            (0..rng.random_range(1..=4))
                .map(|_| (random_op(&mut rng), rng.random_bool(0.3)))
                .collect()
        })
        .collect();
    let rec = Recorder::new();
    let barrier = Barrier::new(3);
    let logs = thread::scope(|s| {
        let hs: Vec<_> = scripts
            .into_iter()
            .enumerate()
            .map(|(t, script)| {
                let (idx, rec, barrier) = (&idx, &rec, &barrier);
                s.spawn(move || {
                    let mut log = Vec::new();
                    barrier.wait();
                    for (op, yield_first) in script {
                        if yield_first {
                            thread::yield_now();
                        }
                        rec.run(t, idx, op, &mut log);
                    }
                    log
                })
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect::<Vec<_>>()
    });
    (initial, merge(logs))
}

fn small_linearizability() -> (Status, String) {
    finish((|| {
        const HISTORIES: u64 = 10_000;
        let mut overlapping = 0;
        for seed in 0..HISTORIES {
            // Odd histories run with random yields at CAS points so that
            // operations interleave mid-flight even on one core.
            kanva::trace::perturb_schedule(if seed % 2 == 1 { 3 } else { 0 });
            let (initial, h) = record_history(seed);
            kanva::trace::perturb_schedule(0);
            if h.windows(2).any(|w| w[1].invoke < w[0].response) {
                overlapping += 1;
            }
            if let CheckOutcome::Violation { prefix, blocked } = check_linearizable_from(&h, &initial) {
                return Err(format!(
                    "history {seed} not linearizable (initial {initial:?}, prefix {prefix:?}, blocked {blocked:?}):\n{}",
                    format_history(&h)
                ));
            }
        }
        for (name, text) in PLANTED {
            let h = parse_history(text).map_err(|e| format!("{name}: {e}"))?;
            ensure(!check_linearizable(&h).is_linearizable(), || format!("{name} was accepted"))?;
        }
        Ok(format!(
            "{HISTORIES} histories linearizable ({overlapping} with overlapping ops); {} planted logs rejected",
            PLANTED.len()
        ))
    })())
}

fn embedded_ts(v: Value) -> i64 {
    (v >> 8) as i64
}

fn snapshot_ranges() -> (Status, String) {
    finish((|| {
        const WRITERS: u64 = 4;
        const DOMAIN: Key = 20_000;
        const RUN: Duration = Duration::from_secs(10);
        // Root keys are multiples of 1000 and never written by workers.
        let root: Vec<_> = (0..DOMAIN / 1000).map(|i| (i * 1000, 0)).collect();
        let idx = KanvaIndex::build(&root, IndexConfig::small()).map_err(|e| e.to_string())?;
        let stop = AtomicBool::new(false);
        kanva::trace::perturb_schedule(8);
        let (finals, scans) = thread::scope(|s| {
            let writers: Vec<_> = (0..WRITERS)
                .map(|w| {
                    let (idx, stop) = (&idx, &stop);
                    s.spawn(move || {
                        let mut rng = ChaCha8Rng::seed_from_u64(60 + w);
                        let mut mine = BTreeMap::new();
                        while !stop.load(Ordering::Relaxed) {
                            let k = rng.random_range(0..DOMAIN / WRITERS) * WRITERS + w;
                            if k % 1000 == 0 {
                                continue;
                            }
                            if rng.random_bool(0.2) {
                                idx.delete(k);
                                mine.insert(k, None);
                            } else {
                                let v = ((idx.clock().now() as u64) << 8) | w;
                                idx.insert(k, v);
                                mine.insert(k, Some(v));
                            }
                        }
                        mine
                    })
                })
                .collect();
            let scanners: Vec<_> = (0..4u64)
                .map(|r| {
                    let (idx, stop) = (&idx, &stop);
                    s.spawn(move || -> Result<u64, String> {
                        let mut rng = ChaCha8Rng::seed_from_u64(70 + r);
                        let mut n = 0;
                        while !stop.load(Ordering::Relaxed) {
                            let lo = rng.random_range(0..DOMAIN);
                            let width = rng.random_range(0..1000);
                            let snap = idx.range_snapshot(lo, width, None);
                            ensure(snap.pairs.windows(2).all(|p| p[0].0 < p[1].0), || "unsorted range".into())?;
                            for &(k, v) in &snap.pairs {
                                ensure((lo..=lo + width).contains(&k), || format!("key {k} outside [{lo}, {}]", lo + width))?;
                                if k % 1000 != 0 {
                                    let t = embedded_ts(v);
                                    ensure(t <= snap.ts, || format!("key {k} written at {t} > scan ts {}", snap.ts))?;
                                }
                            }
                            n += 1;
                        }
                        Ok(n)
                    })
                })
                .collect();
            thread::sleep(RUN);
            stop.store(true, Ordering::Relaxed);
            let scans: Result<u64, String> = scanners.into_iter().map(|h| h.join().unwrap()).sum();
            let finals: Vec<_> = writers.into_iter().map(|h| h.join().unwrap()).collect();
            (finals, scans)
        });
        kanva::trace::perturb_schedule(0);
        let scans = scans?;
        let mut expect: BTreeMap<Key, Value> = root.into_iter().collect();
        for m in finals {
            for (k, v) in m {
                match v {
                    Some(v) => expect.insert(k, v),
                    None => expect.remove(&k),
                };
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(80);
        for _ in 0..1000 {
            let lo = rng.random_range(0..DOMAIN);
            let width = rng.random_range(0..2000);
            let want: Vec<_> = expect.range(lo..=lo + width).map(|(&k, &v)| (k, v)).collect();
            ensure(idx.range(lo, width) == want, || format!("quiescent range [{lo}, +{width}] differs"))?;
        }
        audit_against(&idx, &expect)?;
        Ok(format!(
            "{scans} concurrent scans sound; 1000 quiescent ranges exact over {} keys; audit clean",
            expect.len()
        ))
    })())
}

fn workload_fidelity() -> (Status, String) {
    finish((|| {
        const OPS: u64 = 1_000_000;
        let keys = generate_dataset(&DatasetSpec {
            source: Source::uniform(),
            size: 100_000,
            seed: 5,
        })
        .map_err(|e| e.to_string())?;
        let mut parts = Vec::new();
        for (name, preset) in [("read-heavy", Preset::ReadHeavy), ("update-heavy", Preset::UpdateHeavy)] {
            let spec = WorkloadSpec::preset(preset, 2, 50_000, Stop::Ops(OPS), 6);
            let idx = build_prefilled(&prefill_keys(&keys, spec.prefill, spec.seed), IndexConfig::default());
            let r = run_workload(&idx, &keys, &spec);
            let c = r.counts;
            ensure(c.total() == OPS, || format!("{name}: ran {} ops", c.total()))?;
            let got = [c.search, c.insert, c.delete].map(|x| x as f64 / OPS as f64);
            let want = [spec.mix.search, spec.mix.insert, spec.mix.delete];
            ensure(got.iter().zip(want).all(|(g, w)| (g - w).abs() <= 0.005), || {
                format!("{name}: realized {got:?}, target {want:?}")
            })?;
            parts.push(format!("{name} {:.4}/{:.4}/{:.4}", got[0], got[1], got[2]));
        }
        Ok(format!("s/i/d within 0.005: {}", parts.join(", ")))
    })())
}

/// Read-heavy throughput ratio of `threads` workers to one worker.
pub fn scaling_ratio(threads: usize, run: Duration) -> (f64, f64, f64) {
    let keys = generate_dataset(&DatasetSpec {
        source: Source::uniform(),
        size: 1_000_000,
        seed: 7,
    })
    .expect("synthetic dataset");
    let mops = |t: usize| {
        let spec = WorkloadSpec::preset(Preset::ReadHeavy, t, keys.len(), Stop::Duration(run), 8);
        let idx = build_prefilled(&keys, IndexConfig::default());
        run_workload(&idx, &keys, &spec).mops()
    };
    let one = mops(1);
    let many = mops(threads);
    (one, many, many / one)
}

fn scaling() -> (Status, String) {
    let cores = thread::available_parallelism().map_or(1, |n| n.get());
    let (one, eight, ratio) = scaling_ratio(8, Duration::from_secs(3));
    let detail = format!("1 thread {one:.2} Mops/s, 8 threads {eight:.2} Mops/s, ratio {ratio:.2} (need >= 2.5) on {cores} cores");
    if cores < 8 {
        (Status::NotApplicable, format!("needs >= 8 cores; measured {detail}"))
    } else {
        verdict(ratio >= 2.5, detail)
    }
}

fn frozen_bin_reads() -> (Status, String) {
    finish((|| {
        let mut checks = 0;
        for seed in 0..500u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let idx = KanvaIndex::build(&[(0, 0), (1000, 0)], IndexConfig::small()).unwrap();
            let mut oracle: BTreeMap<Key, Value> = [(0, 0), (1000, 0)].into_iter().collect();
            for round in 0..6 {
                for _ in 0..rng.random_range(1..12) {
                    let op = if rng.random_bool(0.8) {
                        Op::Insert(rng.random_range(1..1000), rng.random_range(0..5))
                    } else {
                        Op::Delete(rng.random_range(1..1000))
                    };
                    let want = apply(&mut oracle, &op);
                    ensure(run(&idx, &op) == want, || format!("seed {seed} round {round}: {op}"))?;
                }
                // Freeze whichever bin holds a random key and read around it.
                let victim = rng.random_range(1..1000);
                if !idx.freeze_bin_of(victim) {
                    continue;
                }
                let probes: Vec<Key> = (victim.saturating_sub(30)..victim + 30)
                    .chain(oracle.keys().copied().take(50))
                    .collect();
                for k in probes {
                    let want = apply(&mut oracle, &Op::Search(k));
                    ensure(run(&idx, &Op::Search(k)) == want, || format!("seed {seed}: frozen search {k}"))?;
                    checks += 1;
                }
                for w in [0, 5, 40, 1000] {
                    let op = Op::Range(victim.saturating_sub(w / 2), w);
                    let want = apply(&mut oracle, &op);
                    ensure(run(&idx, &op) == want, || format!("seed {seed}: frozen {op}"))?;
                    checks += 1;
                }
            }
            audit_against(&idx, &oracle)?;
        }
        Ok(format!("{checks} reads through frozen bins matched the oracle"))
    })())
}

/// Runs every criterion, or only those listed in `only`.
pub fn run_all(only: &[u32], mut each: impl FnMut(&Outcome)) -> Vec<Outcome> {
    CRITERIA
        .iter()
        .filter(|c| only.is_empty() || only.contains(&c.id))
        .map(|c| {
            let o = c.run();
            each(&o);
            o
        })
        .collect()
}

/// Exit status for a set of outcomes: failure if any criterion failed.
pub fn all_passed(outcomes: &[Outcome]) -> bool {
    outcomes.iter().all(|o| o.status != Status::Fail)
}
