//! A lock-free learned ordered index over `u64` keys.
//!
//! The index is built over an initial sorted data set whose keys go into a
//! root node routed by a piecewise linear model. New keys land in lock-free
//! bins hanging off the root's child slots; full bins are frozen and
//! retrained into deeper model nodes by whichever operations run into them.
//! Every update is versioned against a global clock, which gives linearizable
//! range queries.
//!
//! ```
//! use kanva::{IndexConfig, KanvaIndex};
//!
//! let idx = KanvaIndex::build(&[(10, 1), (20, 2)], IndexConfig::default()).unwrap();
//! assert!(idx.insert(15, 3));
//! assert!(idx.delete(20));
//! assert_eq!(idx.search(15), Some(3));
//! assert_eq!(idx.range(10, 10), vec![(10, 1), (15, 3)]);
//! ```

pub mod bins;
pub mod index;
mod link;
pub mod models;
pub mod range;
pub mod trace;
pub mod verify;
pub mod version;

pub use index::{BuildError, IndexConfig, KanvaIndex, SeekResult, SeekStatus};
pub use link::MarkedLink;
pub use range::{RangeSnapshot, VersionedRead};
pub use version::{GlobalClock, Key, Payload, Timestamp, Value};
