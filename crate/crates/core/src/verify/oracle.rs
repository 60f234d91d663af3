use std::collections::BTreeMap;
use std::fmt;

use crate::version::{Key, Payload, Timestamp, Value};
use crate::KanvaIndex;

/// An index operation with its arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Insert(Key, Value),
    Delete(Key),
    Search(Key),
    /// Interval `[key, key + width]`.
    Range(Key, Key),
}

/// What an operation returned.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum OpResult {
    Bool(bool),
    Value(Option<Value>),
    Pairs(Vec<(Key, Value)>),
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Insert(k, v) => write!(f, "insert {k} {v}"),
            Op::Delete(k) => write!(f, "delete {k}"),
            Op::Search(k) => write!(f, "search {k}"),
            Op::Range(k, w) => write!(f, "range {k} {w}"),
        }
    }
}

impl fmt::Display for OpResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpResult::Bool(b) => write!(f, "{b}"),
            OpResult::Value(Some(v)) => write!(f, "{v}"),
            OpResult::Value(None) => f.write_str("absent"),
            OpResult::Pairs(p) if p.is_empty() => f.write_str("empty"),
            OpResult::Pairs(p) => {
                for (i, (k, v)) in p.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{k}:{v}")?;
                }
                Ok(())
            }
        }
    }
}

/// Applies `op` to a plain map of live pairs, returning the ordered-map ADT's
/// result.
pub fn apply(state: &mut BTreeMap<Key, Value>, op: &Op) -> OpResult {
    match *op {
        Op::Insert(k, v) => OpResult::Bool(state.insert(k, v) != Some(v)),
        Op::Delete(k) => OpResult::Bool(state.remove(&k).is_some()),
        Op::Search(k) => OpResult::Value(state.get(&k).copied()),
        Op::Range(k, w) => OpResult::Pairs(
            state
                .range(k..=k.saturating_add(w))
                .map(|(&k, &v)| (k, v))
                .collect(),
        ),
    }
}

/// Runs `op` against the real index.
pub fn run(index: &KanvaIndex, op: &Op) -> OpResult {
    match *op {
        Op::Insert(k, v) => OpResult::Bool(index.insert(k, v)),
        Op::Delete(k) => OpResult::Bool(index.delete(k)),
        Op::Search(k) => OpResult::Value(index.search(k)),
        Op::Range(k, w) => OpResult::Pairs(index.range(k, w)),
    }
}

/// Sequential reference map that also keeps every key's full write history,
/// each entry tagged with a caller-supplied stamp.
#[derive(Debug, Clone, Default)]
pub struct Oracle {
    live: BTreeMap<Key, Value>,
    history: BTreeMap<Key, Vec<(Payload, Timestamp)>>,
    seq: Timestamp,
}

impl Oracle {
    pub fn new() -> Self {
        Self::default()
    }

    /// Oracle preloaded with `pairs` stamped 0.
    pub fn with_pairs(pairs: &[(Key, Value)]) -> Self {
        let mut o = Oracle::new();
        for &(k, v) in pairs {
            o.live.insert(k, v);
            o.history.insert(k, vec![(Some(v), 0)]);
        }
        o
    }

    /// Applies `op`, stamping any write with an internal sequence number.
    pub fn apply(&mut self, op: &Op) -> OpResult {
        self.seq += 1;
        let s = self.seq;
        self.apply_stamped(op, s)
    }

    /// Applies `op`, stamping any state change with `stamp`.
    pub fn apply_stamped(&mut self, op: &Op, stamp: Timestamp) -> OpResult {
        let r = apply(&mut self.live, op);
        let changed = r == OpResult::Bool(true);
        match *op {
            Op::Insert(k, v) if changed => self.history.entry(k).or_default().push((Some(v), stamp)),
            Op::Delete(k) if changed => self.history.entry(k).or_default().push((None, stamp)),
            _ => {}
        }
        r
    }

    pub fn live(&self) -> &BTreeMap<Key, Value> {
        &self.live
    }

    pub fn get(&self, key: Key) -> Option<Value> {
        self.live.get(&key).copied()
    }

    /// Live pairs in `[lo, hi]` as of `stamp`: per key, the last write stamped
    /// at or before it.
    pub fn snapshot_at(&self, lo: Key, hi: Key, stamp: Timestamp) -> Vec<(Key, Value)> {
        self.history
            .range(lo..=hi)
            .filter_map(|(&k, h)| {
                h.iter()
                    .rev()
                    .find(|(_, s)| *s <= stamp)
                    .and_then(|(p, _)| p.map(|v| (k, v)))
            })
            .collect()
    }
}
