//! Structural audit of a quiesced index.

use std::collections::BTreeMap;
use std::fmt;

use crate::bins::{Bin, Olb};
use crate::index::{Child, KanvaIndex, MNode, SeekStatus};
use crate::version::{Key, Value, VersionSlot, UNSET_TS};

/// One violated structural invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Finding {
    /// Keys of a node or bin list are not strictly increasing.
    Unsorted { key: Key },
    /// A key sits outside the open interval its parent slot covers.
    OutsideInterval { key: Key, lo: Option<Key>, hi: Option<Key> },
    /// A two-level bin child holds a key beyond its separator range.
    SeparatorViolation { key: Key, child: usize },
    /// The key is stored more than once.
    DuplicateKey { key: Key, copies: usize },
    /// `seek` does not reach the stored copy of the key.
    Unreachable { key: Key },
    SizeMismatch { counted: usize, recorded: usize },
    /// A version below the head has no timestamp.
    UnstampedVersion { key: Key },
    /// Timestamps increase toward older versions.
    VersionOrder { key: Key },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuditReport {
    pub findings: Vec<Finding>,
    /// Latest live value of every stored key, deleted keys omitted.
    pub map: BTreeMap<Key, Value>,
    /// Stored keys including deleted ones.
    pub stored_keys: usize,
    pub model_nodes: usize,
    pub one_level_bins: usize,
    pub two_level_bins: usize,
    pub max_depth: usize,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

struct Auditor {
    report: AuditReport,
    copies: BTreeMap<Key, Vec<usize>>,
}

fn within(key: Key, lo: Option<Key>, hi: Option<Key>) -> bool {
    lo.is_none_or(|l| key > l) && hi.is_none_or(|h| key < h)
}

impl Auditor {
    fn record(&mut self, key: Key, slot: &VersionSlot) {
        self.copies
            .entry(key)
            .or_default()
            .push(slot as *const _ as usize);
        let head = slot.head();
        if let Some(v) = head.val() {
            self.report.map.insert(key, v);
        }
        let mut prev = head.ts();
        for v in slot.versions().skip(1) {
            let ts = v.ts();
            if ts == UNSET_TS {
                self.report.findings.push(Finding::UnstampedVersion { key });
                break;
            }
            if prev != UNSET_TS && ts > prev {
                self.report.findings.push(Finding::VersionOrder { key });
                break;
            }
            prev = ts;
        }
    }

    fn check_order(&mut self, keys: impl Iterator<Item = Key>, lo: Option<Key>, hi: Option<Key>) -> usize {
        let mut last: Option<Key> = None;
        let mut n = 0;
        for k in keys {
            if last.is_some_and(|l| l >= k) {
                self.report.findings.push(Finding::Unsorted { key: k });
            }
            if !within(k, lo, hi) {
                self.report.findings.push(Finding::OutsideInterval { key: k, lo, hi });
            }
            last = Some(k);
            n += 1;
        }
        n
    }

    fn node(&mut self, node: &MNode, lo: Option<Key>, hi: Option<Key>, depth: usize) {
        self.report.model_nodes += 1;
        self.report.max_depth = self.report.max_depth.max(depth);
        let keys = node.keys();
        self.check_order(keys.iter().copied(), lo, hi);
        for (i, &k) in keys.iter().enumerate() {
            self.record(k, node.version(i));
        }
        for j in 0..node.child_count() {
            let clo = if j == 0 { lo } else { Some(keys[j - 1]) };
            let chi = keys.get(j).copied().or(hi);
            match node.child(j) {
                Some(Child::Node(n)) => self.node(n, clo, chi, depth + 1),
                Some(Child::Bin(b)) => self.bin(b, clo, chi, depth + 1),
                None => {}
            }
        }
    }

    fn olb(&mut self, olb: &Olb, lo: Option<Key>, hi: Option<Key>) -> usize {
        let n = self.check_order(olb.iter().map(|n| n.key()), lo, hi);
        for kn in olb.iter() {
            self.record(kn.key(), kn.version());
        }
        n
    }

    fn bin(&mut self, bin: &Bin, lo: Option<Key>, hi: Option<Key>, depth: usize) {
        self.report.max_depth = self.report.max_depth.max(depth);
        let counted = match bin {
            Bin::One(o) => {
                self.report.one_level_bins += 1;
                self.olb(o, lo, hi)
            }
            Bin::Two(t) => {
                self.report.two_level_bins += 1;
                let seps = t.separators();
                let mut total = 0;
                for (i, c) in t.children().iter().enumerate() {
                    for k in c.iter().map(|n| n.key()) {
                        let above = i == 0 || k > seps[i - 1];
                        let below = i == seps.len() || k <= seps[i];
                        if !(above && below) {
                            self.report.findings.push(Finding::SeparatorViolation { key: k, child: i });
                        }
                    }
                    let n = self.olb(c, lo, hi);
                    if n != c.size() {
                        self.report.findings.push(Finding::SizeMismatch {
                            counted: n,
                            recorded: c.size(),
                        });
                    }
                    total += n;
                }
                total
            }
        };
        if counted != bin.size() {
            self.report.findings.push(Finding::SizeMismatch {
                counted,
                recorded: bin.size(),
            });
        }
    }
}

/// Walks the whole structure and checks sortedness, interval containment,
/// unique paths, size counters, and version-chain ordering.
///
/// The caller must guarantee no concurrent mutators.
pub fn audit_structure(index: &KanvaIndex) -> AuditReport {
    let mut a = Auditor {
        report: AuditReport::default(),
        copies: BTreeMap::new(),
    };
    a.node(index.root(), None, None, 0);
    a.report.stored_keys = a.copies.len();
    for (&key, slots) in &a.copies {
        if slots.len() > 1 {
            a.report.findings.push(Finding::DuplicateKey {
                key,
                copies: slots.len(),
            });
        }
        let s = index.seek(key);
        let reached = match s.status {
            SeekStatus::Found => Some(s.node.version_ptr(s.slot).addr()),
            SeekStatus::Maybe => s
                .bin()
                .and_then(|b| b.search(key))
                .map(|n| n.slot_ptr().addr()),
            SeekStatus::NotFound => None,
        };
        if !reached.is_some_and(|r| slots.contains(&r)) {
            a.report.findings.push(Finding::Unreachable { key });
        }
    }
    a.report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::IndexConfig;

    #[test]
    fn fresh_index_is_clean() {
        let pairs: Vec<_> = (0..1000).map(|k| (k * 2, k)).collect();
        let idx = KanvaIndex::build(&pairs, IndexConfig::default()).unwrap();
        let r = audit_structure(&idx);
        assert!(r.is_clean(), "{:?}", r.findings);
        assert_eq!(r.map, pairs.into_iter().collect());
        assert_eq!(r.model_nodes, 1);
    }

    #[test]
    fn grown_index_is_clean() {
        let idx = KanvaIndex::build(&[(0, 0), (1 << 40, 0)], IndexConfig::small()).unwrap();
        for k in 1..=3_000 {
            idx.insert(k * 3, k);
        }
        for k in (1..=3_000).step_by(7) {
            idx.delete(k * 3);
        }
        let r = audit_structure(&idx);
        assert!(r.is_clean(), "{:?}", r.findings);
        assert!(r.max_depth >= 2);
        assert_eq!(r.stored_keys, 3_002);
        assert_eq!(r.map.len(), 3_002 - (1..=3_000).step_by(7).count());
    }

    #[test]
    fn planted_duplicate_detected() {
        let idx = KanvaIndex::build(&[(10, 1), (20, 2), (30, 3)], IndexConfig::default()).unwrap();
        // Slot 2 covers (20, 30); plant a copy of 10 and an out-of-range 25.
        assert!(idx.plant_root_bin(2, &[10, 25]));
        let r = audit_structure(&idx);
        assert!(r.findings.contains(&Finding::DuplicateKey { key: 10, copies: 2 }));
        assert!(r
            .findings
            .iter()
            .any(|f| matches!(f, Finding::OutsideInterval { key: 10, .. })));
        assert!(!r.findings.iter().any(|f| matches!(f, Finding::Unreachable { key: 25 })));
    }

    #[test]
    fn planted_misrouted_key_unreachable() {
        let idx = KanvaIndex::build(&[(10, 1), (20, 2)], IndexConfig::default()).unwrap();
        assert!(idx.plant_root_bin(0, &[15]));
        let r = audit_structure(&idx);
        assert!(r.findings.contains(&Finding::Unreachable { key: 15 }));
    }
}
