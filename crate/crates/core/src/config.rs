use crate::error::IndexError;

pub const COARSE_LEAF_MIN_KEYS: usize = 1 << 14;

/// How a data node answers a catastrophic cost event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitPolicy {
    /// Split sideways (or downwards when the parent table is maxed out).
    SidewaysFirst,
    /// Expand and retrain in place; never split on a catastrophic event.
    ExpansionOnly,
}

impl SplitPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitPolicy::SidewaysFirst => "vanilla",
            SplitPolicy::ExpansionOnly => "modified",
        }
    }
}

impl std::str::FromStr for SplitPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vanilla" | "sideways-first" => Ok(SplitPolicy::SidewaysFirst),
            "modified" | "expansion-only" => Ok(SplitPolicy::ExpansionOnly),
            other => Err(format!("unknown split policy `{other}`")),
        }
    }
}

pub const MIB: u64 = 1 << 20;
pub const GIB: u64 = 1 << 30;

/// Global tuning for an [`IndexTree`](crate::IndexTree).
///
/// Byte accounting uses `slot_bytes` per gapped-array slot, one bitmap bit per
/// slot rounded up to whole 64-bit words, `ref_bytes` per child-table entry and
/// a fixed `node_header_bytes` per node.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexConfig {
    pub lower_density: f64,
    pub upper_density: f64,
    pub max_routing_bytes: u64,
    pub max_data_node_slots: usize,
    pub min_data_node_slots: usize,
    pub catastrophic_factor: f64,
    pub catastrophic_min_ops: u64,
    /// Floor applied to the expected cost before comparing against it.
    pub cost_epsilon: f64,
    pub search_weight: f64,
    pub shift_weight: f64,
    pub slot_bytes: u64,
    pub ref_bytes: u64,
    pub node_header_bytes: u64,
    pub memory_cap_bytes: u64,
    pub split_policy: SplitPolicy,
    pub allow_duplicates: bool,
    /// Bulk load never creates a data node holding more keys than this.
    pub bulk_leaf_max_keys: usize,
    /// Ranges with at most this many keys become data nodes regardless of fit.
    pub bulk_leaf_min_keys: usize,
    /// Larger ranges become data nodes only when their modeled cost is at most this.
    pub bulk_leaf_max_cost: f64,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            lower_density: 0.6,
            upper_density: 0.8,
            max_routing_bytes: 16 * MIB,
            max_data_node_slots: 1 << 24,
            min_data_node_slots: 16,
            catastrophic_factor: 4.0,
            catastrophic_min_ops: 64,
            cost_epsilon: 0.5,
            search_weight: 1.0,
            shift_weight: 1.0,
            slot_bytes: 16,
            ref_bytes: 8,
            node_header_bytes: 64,
            memory_cap_bytes: 2 * GIB,
            split_policy: SplitPolicy::SidewaysFirst,
            allow_duplicates: true,
            bulk_leaf_max_keys: 1 << 16,
            bulk_leaf_min_keys: 1 << 8,
            bulk_leaf_max_cost: 1.0,
        }
    }
}

impl IndexConfig {
    pub fn with_policy(mut self, policy: SplitPolicy) -> Self {
        self.split_policy = policy;
        self
    }

    /// Bulk load into leaves of at least `COARSE_LEAF_MIN_KEYS` keys, so a
    /// small index has few data nodes.
    pub fn with_coarse_leaves(mut self) -> Self {
        self.bulk_leaf_min_keys = COARSE_LEAF_MIN_KEYS.min(self.bulk_leaf_max_keys);
        self
    }

    pub fn with_cap(mut self, cap_bytes: u64) -> Self {
        self.memory_cap_bytes = cap_bytes;
        self
    }

    pub fn validate(&self) -> Result<(), IndexError> {
        let bad = |msg: &str| Err(IndexError::InvalidConfig(msg.to_string()));
        if !(self.lower_density > 0.0 && self.lower_density < self.upper_density && self.upper_density < 1.0) {
            return bad("densities must satisfy 0 < lower < upper < 1");
        }
        if self.memory_cap_bytes == 0 {
            return bad("memory cap must be positive");
        }
        if self.min_data_node_slots < 2 || self.max_data_node_slots < self.min_data_node_slots {
            return bad("data node slot limits are inconsistent");
        }
        if self.ref_bytes == 0 || self.max_routing_bytes < 2 * self.ref_bytes {
            return bad("routing table limit must hold at least two references");
        }
        if self.catastrophic_factor <= 0.0 || self.cost_epsilon <= 0.0 {
            return bad("catastrophic factor and cost epsilon must be positive");
        }
        if self.bulk_leaf_max_keys == 0
            || (self.bulk_leaf_max_keys as f64 / self.lower_density) > self.max_data_node_slots as f64
        {
            return bad("bulk leaf size must fit a data node at lower density");
        }
        Ok(())
    }

    /// Largest occupancy allowed at `capacity` slots.
    pub fn max_occupancy(&self, capacity: usize) -> usize {
        ((self.upper_density * capacity as f64) + 1e-9).floor() as usize
    }

    /// Capacity provisioned for `keys` records at the lower density limit.
    pub fn capacity_for(&self, keys: usize) -> usize {
        let raw = ((keys as f64 / self.lower_density) - 1e-9).ceil().max(0.0) as usize;
        raw.max(self.min_data_node_slots)
    }

    pub fn max_table_len(&self) -> usize {
        (self.max_routing_bytes / self.ref_bytes) as usize
    }

    pub fn data_node_bytes(&self, capacity: usize) -> u64 {
        let bitmap_words = capacity.div_ceil(64) as u64;
        self.node_header_bytes + capacity as u64 * self.slot_bytes + bitmap_words * 8
    }

    pub fn internal_node_bytes(&self, table_len: usize) -> u64 {
        self.node_header_bytes + table_len as u64 * self.ref_bytes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = IndexConfig::default();
        c.validate().unwrap();
        assert_eq!(c.max_routing_bytes, 16 * 1024 * 1024);
        assert_eq!(c.capacity_for(80), 134);
        assert_eq!(c.capacity_for(81), 135);
        assert_eq!(c.max_occupancy(100), 80);
        assert_eq!(c.max_occupancy(135), 108);
        assert_eq!(c.capacity_for(0), 16);
    }

    #[test]
    fn rejects_inverted_densities() {
        let c = IndexConfig { lower_density: 0.8, upper_density: 0.6, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn byte_formulas() {
        let c = IndexConfig::default();
        assert_eq!(c.data_node_bytes(16), 64 + 256 + 8);
        assert_eq!(c.data_node_bytes(65), 64 + 65 * 16 + 16);
        assert_eq!(c.internal_node_bytes(4), 64 + 32);
    }
}
