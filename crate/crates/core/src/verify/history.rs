//! Concurrent operation histories and their line-oriented text form.
//!
//! One event per line:
//!
//! ```text
//! <invoke> <response> <thread> <op> <args...> -> <result>
//! ```
//!
//! where `<op>` is `insert K V`, `delete K`, `search K` or `range K W`, and
//! `<result>` is `true`/`false`, a value or `absent`, or a comma-separated
//! `key:value` list (`empty` for none). Blank lines and lines starting with
//! `#` are ignored.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use super::oracle::{run, Op, OpResult};
use crate::KanvaIndex;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryEvent {
    pub thread: usize,
    pub op: Op,
    pub result: OpResult,
    pub invoke: u64,
    pub response: u64,
}

impl fmt::Display for HistoryEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} -> {}",
            self.invoke, self.response, self.thread, self.op, self.result
        )
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
}

fn bad(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Malformed {
        line,
        msg: msg.into(),
    }
}

fn num<T: FromStr>(line: usize, tok: Option<&str>, what: &str) -> Result<T, ParseError> {
    let tok = tok.ok_or_else(|| bad(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| bad(line, format!("bad {what} `{tok}`")))
}

fn parse_event(line: usize, text: &str) -> Result<HistoryEvent, ParseError> {
    let (lhs, rhs) = text
        .split_once("->")
        .ok_or_else(|| bad(line, "missing `->`"))?;
    let mut toks = lhs.split_whitespace();
    let invoke = num(line, toks.next(), "invoke tick")?;
    let response = num(line, toks.next(), "response tick")?;
    let thread = num(line, toks.next(), "thread")?;
    let op = match toks.next() {
        Some("insert") => Op::Insert(num(line, toks.next(), "key")?, num(line, toks.next(), "value")?),
        Some("delete") => Op::Delete(num(line, toks.next(), "key")?),
        Some("search") => Op::Search(num(line, toks.next(), "key")?),
        Some("range") => Op::Range(num(line, toks.next(), "key")?, num(line, toks.next(), "width")?),
        Some(other) => return Err(bad(line, format!("unknown op `{other}`"))),
        None => return Err(bad(line, "missing op")),
    };
    if let Some(extra) = toks.next() {
        return Err(bad(line, format!("unexpected `{extra}`")));
    }
    let rhs = rhs.trim();
    let result = match op {
        Op::Insert(..) | Op::Delete(_) => OpResult::Bool(num(line, Some(rhs), "boolean result")?),
        Op::Search(_) if rhs == "absent" => OpResult::Value(None),
        Op::Search(_) => OpResult::Value(Some(num(line, Some(rhs), "value result")?)),
        Op::Range(..) if rhs == "empty" => OpResult::Pairs(Vec::new()),
        Op::Range(..) => OpResult::Pairs(
            rhs.split(',')
                .map(|p| {
                    let (k, v) = p
                        .split_once(':')
                        .ok_or_else(|| bad(line, format!("bad pair `{p}`")))?;
                    Ok((num(line, Some(k.trim()), "key")?, num(line, Some(v.trim()), "value")?))
                })
                .collect::<Result<_, ParseError>>()?,
        ),
    };
    if response < invoke {
        return Err(bad(line, "response before invocation"));
    }
    Ok(HistoryEvent {
        thread,
        op,
        result,
        invoke,
        response,
    })
}

/// Parses a history log.
pub fn parse_history(text: &str) -> Result<Vec<HistoryEvent>, ParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| parse_event(i + 1, l))
        .collect()
}

/// Renders a history log, one event per line.
pub fn format_history(events: &[HistoryEvent]) -> String {
    events.iter().map(|e| format!("{e}\n")).collect()
}

/// Hands out invocation and response ticks from one shared counter.
#[derive(Debug, Default)]
pub struct Recorder {
    tick: AtomicU64,
}

impl Recorder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Runs `op` on `index`, appending the event to the caller's own log.
    pub fn run(&self, thread: usize, index: &KanvaIndex, op: Op, log: &mut Vec<HistoryEvent>) {
        let invoke = self.tick.fetch_add(1, Ordering::SeqCst);
        let result = run(index, &op);
        let response = self.tick.fetch_add(1, Ordering::SeqCst);
        log.push(HistoryEvent {
            thread,
            op,
            result,
            invoke,
            response,
        });
    }
}

/// Merges per-thread logs into one history ordered by invocation.
pub fn merge(logs: impl IntoIterator<Item = Vec<HistoryEvent>>) -> Vec<HistoryEvent> {
    let mut all: Vec<_> = logs.into_iter().flatten().collect();
    all.sort_by_key(|e| e.invoke);
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_every_op() {
        let text = "# comment\n0 3 0 insert 1 5 -> true\n1 2 1 search 1 -> absent\n\n4 5 1 range 0 9 -> 1:5,2:6\n6 7 0 range 3 1 -> empty\n8 9 2 delete 1 -> false\n";
        let h = parse_history(text).unwrap();
        assert_eq!(h.len(), 5);
        assert_eq!(h[0].op, Op::Insert(1, 5));
        assert_eq!(h[1].result, OpResult::Value(None));
        assert_eq!(h[2].result, OpResult::Pairs(vec![(1, 5), (2, 6)]));
        assert_eq!(h[3].result, OpResult::Pairs(vec![]));
        assert_eq!(h[4].thread, 2);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse_history("0 1 0 insert 1 -> true").is_err());
        assert!(parse_history("0 1 0 frob 1 -> true").is_err());
        assert!(parse_history("0 1 0 search 1 absent").is_err());
        assert!(parse_history("3 1 0 search 1 -> absent").is_err());
        let err = parse_history("0 1 0 search 1 -> 7\nx").unwrap_err();
        assert!(matches!(err, ParseError::Malformed { line: 2, .. }));
    }

    fn event() -> impl Strategy<Value = HistoryEvent> {
        let op = prop_oneof![
            (0u64..100, 0u64..100).prop_map(|(k, v)| Op::Insert(k, v)),
            (0u64..100).prop_map(Op::Delete),
            (0u64..100).prop_map(Op::Search),
            (0u64..100, 0u64..10).prop_map(|(k, w)| Op::Range(k, w)),
        ];
        (op, 0usize..4, 0u64..1000, 0u64..10, any::<bool>(), prop::option::of(0u64..50), prop::collection::btree_map(0u64..100, 0u64..100, 0..4))
            .prop_map(|(op, thread, invoke, dur, b, v, pairs)| {
                let result = match op {
                    Op::Insert(..) | Op::Delete(_) => OpResult::Bool(b),
                    Op::Search(_) => OpResult::Value(v),
                    Op::Range(..) => OpResult::Pairs(pairs.into_iter().collect()),
                };
                HistoryEvent { thread, op, result, invoke, response: invoke + dur }
            })
    }

    proptest! {
        #[test]
        fn text_form_round_trips(events in prop::collection::vec(event(), 0..20)) {
            prop_assert_eq!(parse_history(&format_history(&events)).unwrap(), events);
        }
    }
}
