//! Correctness machinery: a sequential oracle, history recording and
//! linearizability checking, and structural audits of a quiesced index.

pub mod audit;
pub mod checker;
pub mod history;
pub mod oracle;

pub use audit::{audit_structure, AuditReport, Finding};
pub use checker::{check_linearizable, CheckOutcome};
pub use history::{HistoryEvent, ParseError, Recorder};
pub use oracle::{Op, OpResult, Oracle};
