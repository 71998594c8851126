//! A learned index with gapped-array data nodes and linear-model routing, and
//! the algorithmic-complexity attacks that exploit its structural adaptation.
//!
//! The index ([`IndexTree`]) expands data nodes at the upper density limit,
//! splits them by halving their key range, and doubles parent child tables to
//! make room for new children. The attacks in [`attack`] turn each of those
//! mechanisms into a resource sink.

pub mod attack;
pub mod config;
pub mod datasets;
pub mod error;
pub mod gapped;
pub mod graybox;
pub mod harness;
pub mod key;
pub mod memory;
pub mod metrics;
pub mod model;
pub mod node;
pub mod tree;
pub mod workload;

pub use config::{IndexConfig, SplitPolicy, GIB, MIB};
pub use error::IndexError;
pub use key::{Key, KeyKind};
pub use memory::{MemoryAccountant, MemoryReport};
pub use metrics::MetricsRecord;
pub use model::LinearModel;
pub use node::{node_cost, CostStats, DataNode, InternalNode};
pub use tree::{Counters, IndexTree, Node, NodeId, TreeEvent};
