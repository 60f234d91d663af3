//! Exhaustive linearizability checking for small histories.
//!
//! Depth-first search over sequential orders consistent with real-time
//! precedence (an operation may be linearized next only if no pending
//! operation responded before it was invoked), pruning revisits of the same
//! (linearized set, map state) pair.

use std::collections::{BTreeMap, HashSet};

use super::history::HistoryEvent;
use super::oracle::apply;
use crate::version::{Key, Value};

/// Largest history the checker accepts.
pub const MAX_EVENTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckOutcome {
    /// `witness` lists event indices in a legal linearization order.
    Linearizable { witness: Vec<usize> },
    /// No legal order exists. `prefix` is the longest legal partial order the
    /// search reached and `blocked` the events none of which could extend it.
    Violation { prefix: Vec<usize>, blocked: Vec<usize> },
}

impl CheckOutcome {
    pub fn is_linearizable(&self) -> bool {
        matches!(self, CheckOutcome::Linearizable { .. })
    }
}

struct Search<'a> {
    events: &'a [HistoryEvent],
    seen: HashSet<(u64, BTreeMap<Key, Value>)>,
    order: Vec<usize>,
    best: Vec<usize>,
    best_blocked: Vec<usize>,
}

impl Search<'_> {
    fn candidates(&self, done: u64) -> Vec<usize> {
        let n = self.events.len();
        let horizon = (0..n)
            .filter(|&j| done & (1 << j) == 0)
            .map(|j| self.events[j].response)
            .min()
            .unwrap_or(u64::MAX);
        (0..n)
            .filter(|&i| done & (1 << i) == 0 && self.events[i].invoke < horizon)
            .collect()
    }

    fn dfs(&mut self, done: u64, state: &BTreeMap<Key, Value>) -> bool {
        if self.order.len() == self.events.len() {
            return true;
        }
        if !self.seen.insert((done, state.clone())) {
            return false;
        }
        let cands = self.candidates(done);
        for &i in &cands {
            let mut next = state.clone();
            if apply(&mut next, &self.events[i].op) != self.events[i].result {
                continue;
            }
            self.order.push(i);
            if self.dfs(done | (1 << i), &next) {
                return true;
            }
            self.order.pop();
        }
        if self.order.len() >= self.best.len() {
            self.best = self.order.clone();
            self.best_blocked = cands;
        }
        false
    }
}

/// Checks `history` against an initially empty map.
pub fn check_linearizable(history: &[HistoryEvent]) -> CheckOutcome {
    check_linearizable_from(history, &BTreeMap::new())
}

/// Checks `history` against a map preloaded with `initial`.
///
/// # Panics
/// If the history has more than [`MAX_EVENTS`] events.
pub fn check_linearizable_from(history: &[HistoryEvent], initial: &BTreeMap<Key, Value>) -> CheckOutcome {
    assert!(history.len() <= MAX_EVENTS, "history too long for exhaustive checking");
    let mut s = Search {
        events: history,
        seen: HashSet::new(),
        order: Vec::with_capacity(history.len()),
        best: Vec::new(),
        best_blocked: Vec::new(),
    };
    if s.dfs(0, initial) {
        CheckOutcome::Linearizable { witness: s.order }
    } else {
        CheckOutcome::Violation {
            prefix: s.best,
            blocked: s.best_blocked,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::history::parse_history;
    use crate::verify::oracle::{Op, OpResult};

    fn ev(thread: usize, op: Op, result: OpResult, invoke: u64, response: u64) -> HistoryEvent {
        HistoryEvent {
            thread,
            op,
            result,
            invoke,
            response,
        }
    }

    #[test]
    fn sequential_history_accepted() {
        let h = parse_history(
            "0 1 0 insert 1 5 -> true\n2 3 0 search 1 -> 5\n4 5 0 insert 1 5 -> false\n6 7 0 range 0 3 -> 1:5\n8 9 0 delete 1 -> true\n10 11 0 search 1 -> absent\n",
        )
        .unwrap();
        match check_linearizable(&h) {
            CheckOutcome::Linearizable { witness } => assert_eq!(witness, vec![0, 1, 2, 3, 4, 5]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn concurrent_overlap_reordered() {
        // Search overlaps the insert and sees its value.
        let h = vec![
            ev(0, Op::Search(1), OpResult::Value(Some(5)), 0, 3),
            ev(1, Op::Insert(1, 5), OpResult::Bool(true), 1, 2),
        ];
        assert_eq!(check_linearizable(&h), CheckOutcome::Linearizable { witness: vec![1, 0] });
    }

    #[test]
    fn value_never_written_rejected() {
        let h = vec![
            ev(0, Op::Insert(1, 5), OpResult::Bool(true), 0, 1),
            ev(1, Op::Search(1), OpResult::Value(Some(6)), 2, 3),
        ];
        match check_linearizable(&h) {
            CheckOutcome::Violation { prefix, blocked } => {
                assert_eq!(prefix, vec![0]);
                assert_eq!(blocked, vec![1]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn real_time_order_enforced() {
        // The search finished before the insert started, so it cannot see it.
        let h = vec![
            ev(0, Op::Search(1), OpResult::Value(Some(5)), 0, 1),
            ev(1, Op::Insert(1, 5), OpResult::Bool(true), 2, 3),
        ];
        assert!(!check_linearizable(&h).is_linearizable());
    }

    #[test]
    fn stale_range_rejected() {
        let h = vec![
            ev(0, Op::Insert(1, 5), OpResult::Bool(true), 0, 1),
            ev(0, Op::Insert(2, 6), OpResult::Bool(true), 2, 3),
            ev(1, Op::Range(0, 5), OpResult::Pairs(vec![(2, 6)]), 4, 5),
        ];
        assert!(!check_linearizable(&h).is_linearizable());
    }

    #[test]
    fn preloaded_state() {
        let init: BTreeMap<Key, Value> = [(3, 30)].into_iter().collect();
        let h = vec![ev(0, Op::Delete(3), OpResult::Bool(true), 0, 1)];
        assert!(check_linearizable_from(&h, &init).is_linearizable());
        assert!(!check_linearizable(&h).is_linearizable());
    }
}
