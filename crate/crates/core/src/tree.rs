//! The index tree: arena-allocated nodes, routing, structural adaptation and
//! byte accounting.

use crate::config::{IndexConfig, SplitPolicy};
use crate::error::IndexError;
use crate::key::Key;
use crate::memory::{MemoryAccountant, MemoryReport};
use crate::model::LinearModel;
use crate::node::{expected_search_cost, expected_shift_cost, DataNode, InternalNode};

pub type NodeId = u32;

#[derive(Debug, Clone)]
pub enum Node<K> {
    Data(DataNode<K>),
    Internal(InternalNode<K>),
}

impl<K: Key> Node<K> {
    pub fn lo(&self) -> K {
        match self {
            Node::Data(d) => d.lo,
            Node::Internal(n) => n.lo,
        }
    }

    pub fn hi(&self) -> K {
        match self {
            Node::Data(d) => d.hi,
            Node::Internal(n) => n.hi,
        }
    }
}

/// A node plus its position in the parent's child table.
#[derive(Debug, Clone)]
struct Slot<K> {
    node: Node<K>,
    parent: Option<NodeId>,
    start: usize,
    len: usize,
}

/// Global structural counters. `retrains` counts every model rebuild: one per
/// expansion and two per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counters {
    pub expansions: u64,
    pub sideways_splits: u64,
    pub downwards_splits: u64,
    pub retrains: u64,
    pub catastrophic_events: u64,
    pub doublings: u64,
    pub floor_hits: u64,
    pub routing_corrections: u64,
    pub cap_exceeded: u64,
}

impl Counters {
    pub fn splits(&self) -> u64 {
        self.sideways_splits + self.downwards_splits
    }

    /// Counts accumulated since the `before` snapshot.
    pub fn since(&self, before: &Counters) -> Counters {
        Counters {
            expansions: self.expansions - before.expansions,
            sideways_splits: self.sideways_splits - before.sideways_splits,
            downwards_splits: self.downwards_splits - before.downwards_splits,
            retrains: self.retrains - before.retrains,
            catastrophic_events: self.catastrophic_events - before.catastrophic_events,
            doublings: self.doublings - before.doublings,
            floor_hits: self.floor_hits - before.floor_hits,
            routing_corrections: self.routing_corrections - before.routing_corrections,
            cap_exceeded: self.cap_exceeded - before.cap_exceeded,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeEvent {
    Expansion { node: NodeId, old_capacity: usize, new_capacity: usize },
    Sideways { node: NodeId, left: NodeId, right: NodeId },
    Downwards { node: NodeId, internal: NodeId },
    Doubling { parent: NodeId, old_len: usize, new_len: usize, current_bytes: u64 },
    Catastrophic { node: NodeId, at_creation: bool },
    Floor { node: NodeId },
}

#[derive(Debug, Clone)]
pub struct IndexTree<K> {
    nodes: Vec<Option<Slot<K>>>,
    free: Vec<NodeId>,
    root: NodeId,
    config: IndexConfig,
    mem: MemoryAccountant,
    counters: Counters,
    events: Option<Vec<TreeEvent>>,
    len: usize,
}

enum SplitMode {
    InPlace,
    Double(NodeId),
    Down,
}

impl<K: Key> IndexTree<K> {
    /// Builds a tree over sorted `records`. The root covers one key unit past
    /// either end of the input; an empty input covers the whole key domain.
    pub fn bulk_load(records: &[(K, u64)], config: IndexConfig) -> Result<Self, IndexError> {
        config.validate()?;
        if records.windows(2).any(|w| !(w[0].0 <= w[1].0)) {
            return Err(IndexError::Unsorted);
        }
        let (lo, hi) = match (records.first(), records.last()) {
            (Some(a), Some(b)) => (a.0.unit_below(), b.0.unit_above()),
            _ => K::full_domain(),
        };
        if let (Some(a), Some(b)) = (records.first(), records.last()) {
            if !(lo <= a.0 && b.0 < hi) {
                return Err(IndexError::OutOfDomain { key: b.0.to_string(), lo: lo.to_string(), hi: hi.to_string() });
            }
        }
        let mut tree = IndexTree {
            nodes: Vec::new(),
            free: Vec::new(),
            root: 0,
            mem: MemoryAccountant::new(config.memory_cap_bytes),
            config,
            counters: Counters::default(),
            events: None,
            len: records.len(),
        };
        tree.root = tree.build_range(records, lo, hi, None, 0, 1)?;
        Ok(tree)
    }

    /// Bulk loads sorted keys with payload equal to each key's input position.
    pub fn from_keys(keys: &[K], config: IndexConfig) -> Result<Self, IndexError> {
        let records: Vec<(K, u64)> = keys.iter().enumerate().map(|(i, &k)| (k, i as u64)).collect();
        Self::bulk_load(&records, config)
    }

    fn leaf_ok(&self, recs: &[(K, u64)], lo: K, hi: K) -> bool {
        let c = &self.config;
        let n = recs.len();
        if K::halve(lo, hi).is_none() {
            return true;
        }
        if n > c.bulk_leaf_max_keys {
            return false;
        }
        if n <= c.bulk_leaf_min_keys {
            return true;
        }
        let cap = c.capacity_for(n);
        let offsets: Vec<f64> = recs.iter().map(|r| r.0.offset_from(lo)).collect();
        let model = LinearModel::fit_ranks(&offsets, cap);
        let preds: Vec<usize> = offsets.iter().map(|&x| model.predict_slot(x, cap)).collect();
        c.search_weight * expected_search_cost(&preds, cap) + c.shift_weight * expected_shift_cost(&preds, cap)
            <= c.bulk_leaf_max_cost
    }

    fn build_range(
        &mut self,
        recs: &[(K, u64)],
        lo: K,
        hi: K,
        parent: Option<NodeId>,
        start: usize,
        len: usize,
    ) -> Result<NodeId, IndexError> {
        if self.leaf_ok(recs, lo, hi) {
            return self.new_data_node(recs, lo, hi, parent, start, len);
        }
        let c = &self.config;
        let want = recs.len().div_ceil(c.bulk_leaf_max_keys).next_power_of_two();
        let fanout = want.clamp(2, c.max_table_len().max(2));
        self.allocate(c.internal_node_bytes(fanout))?;
        let id = self.alloc_slot(Slot {
            node: Node::Internal(InternalNode::new(lo, hi, vec![NodeId::MAX; fanout])),
            parent,
            start,
            len,
        });
        self.fill_block(id, recs, lo, hi, 0, fanout)?;
        Ok(id)
    }

    fn fill_block(
        &mut self,
        parent: NodeId,
        recs: &[(K, u64)],
        lo: K,
        hi: K,
        start: usize,
        size: usize,
    ) -> Result<(), IndexError> {
        let child = if size == 1 {
            self.build_range(recs, lo, hi, Some(parent), start, 1)?
        } else if self.leaf_ok(recs, lo, hi) {
            self.new_data_node(recs, lo, hi, Some(parent), start, size)?
        } else {
            let mid = K::halve(lo, hi).expect("halvable range");
            let cut = recs.partition_point(|r| r.0 < mid);
            self.fill_block(parent, &recs[..cut], lo, mid, start, size / 2)?;
            return self.fill_block(parent, &recs[cut..], mid, hi, start + size / 2, size / 2);
        };
        self.internal_mut(parent).children[start..start + size].fill(child);
        Ok(())
    }

    fn new_data_node(
        &mut self,
        recs: &[(K, u64)],
        lo: K,
        hi: K,
        parent: Option<NodeId>,
        start: usize,
        len: usize,
    ) -> Result<NodeId, IndexError> {
        let cap = self.config.capacity_for(recs.len());
        self.allocate(self.config.data_node_bytes(cap))?;
        let node = DataNode::build(recs, lo, hi, cap, &self.config);
        Ok(self.alloc_slot(Slot { node: Node::Data(node), parent, start, len }))
    }

    fn alloc_slot(&mut self, slot: Slot<K>) -> NodeId {
        match self.free.pop() {
            Some(id) => {
                self.nodes[id as usize] = Some(slot);
                id
            }
            None => {
                self.nodes.push(Some(slot));
                (self.nodes.len() - 1) as NodeId
            }
        }
    }

    fn free_slot(&mut self, id: NodeId) -> Slot<K> {
        self.free.push(id);
        self.nodes[id as usize].take().expect("live node")
    }

    fn allocate(&mut self, bytes: u64) -> Result<(), IndexError> {
        let r = self.mem.allocate(bytes);
        if r.is_err() {
            self.counters.cap_exceeded += 1;
        }
        r
    }

    fn check_alloc(&mut self, bytes: u64) -> Result<(), IndexError> {
        let r = self.mem.check(bytes);
        if r.is_err() {
            self.counters.cap_exceeded += 1;
        }
        r
    }

    fn slot(&self, id: NodeId) -> &Slot<K> {
        self.nodes[id as usize].as_ref().expect("live node")
    }

    fn slot_mut(&mut self, id: NodeId) -> &mut Slot<K> {
        self.nodes[id as usize].as_mut().expect("live node")
    }

    fn data(&self, id: NodeId) -> &DataNode<K> {
        match &self.slot(id).node {
            Node::Data(d) => d,
            Node::Internal(_) => panic!("node {id} is not a data node"),
        }
    }

    fn data_mut(&mut self, id: NodeId) -> &mut DataNode<K> {
        match &mut self.slot_mut(id).node {
            Node::Data(d) => d,
            Node::Internal(_) => panic!("node {id} is not a data node"),
        }
    }

    fn internal(&self, id: NodeId) -> &InternalNode<K> {
        match &self.slot(id).node {
            Node::Internal(n) => n,
            Node::Data(_) => panic!("node {id} is not an internal node"),
        }
    }

    fn internal_mut(&mut self, id: NodeId) -> &mut InternalNode<K> {
        match &mut self.slot_mut(id).node {
            Node::Internal(n) => n,
            Node::Data(_) => panic!("node {id} is not an internal node"),
        }
    }

    fn log(&mut self, event: TreeEvent) {
        if let Some(ev) = self.events.as_mut() {
            ev.push(event);
        }
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn domain(&self) -> (K, K) {
        let n = &self.slot(self.root).node;
        (n.lo(), n.hi())
    }

    pub fn memory_report(&self) -> MemoryReport {
        self.mem.report()
    }

    /// Starts (or stops and discards) the structural event log.
    pub fn set_event_log(&mut self, on: bool) {
        self.events = on.then(Vec::new);
    }

    pub fn events(&self) -> &[TreeEvent] {
        self.events.as_deref().unwrap_or(&[])
    }

    pub fn take_events(&mut self) -> Vec<TreeEvent> {
        self.events.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node<K>> {
        self.nodes.get(id as usize)?.as_ref().map(|s| &s.node)
    }

    pub fn data_node(&self, id: NodeId) -> Option<&DataNode<K>> {
        match self.node(id)? {
            Node::Data(d) => Some(d),
            Node::Internal(_) => None,
        }
    }

    /// Parent and `(start, len)` block of a node in its parent's table.
    pub fn position(&self, id: NodeId) -> Option<(Option<NodeId>, usize, usize)> {
        let s = self.nodes.get(id as usize)?.as_ref()?;
        Some((s.parent, s.start, s.len))
    }

    pub fn check_domain(&self, key: K) -> Result<(), IndexError> {
        let (lo, hi) = self.domain();
        if lo <= key && key < hi {
            Ok(())
        } else {
            Err(IndexError::OutOfDomain { key: key.to_string(), lo: lo.to_string(), hi: hi.to_string() })
        }
    }

    /// Child of `internal` whose range holds `key`, plus the number of
    /// correction steps taken past the model's prediction.
    pub fn route(&self, internal: NodeId, key: K) -> (NodeId, u64) {
        let node = self.internal(internal);
        let mut s = node.predict(key);
        let mut corrections = 0;
        loop {
            let c = node.children[s];
            let child = self.slot(c);
            if key < child.node.lo() {
                s = child.start - 1;
            } else if !(key < child.node.hi()) {
                s = child.start + child.len;
            } else {
                return (c, corrections);
            }
            corrections += 1;
        }
    }

    /// The data node whose range holds `key` (which must be in the domain).
    pub fn leaf_for(&self, key: K) -> NodeId {
        self.descend(key).0
    }

    fn descend(&self, key: K) -> (NodeId, u64) {
        let mut cur = self.root;
        let mut corrections = 0;
        while let Node::Internal(_) = self.slot(cur).node {
            let (c, k) = self.route(cur, key);
            corrections += k;
            cur = c;
        }
        (cur, corrections)
    }

    fn descend_counted(&mut self, key: K) -> NodeId {
        let (leaf, corrections) = self.descend(key);
        self.counters.routing_corrections += corrections;
        leaf
    }

    /// Point lookup. Updates the cost counters of the touched data node and
    /// may run the catastrophic path; a cap failure there is only counted.
    pub fn lookup(&mut self, key: K) -> Option<u64> {
        self.check_domain(key).ok()?;
        let leaf = self.descend_counted(key);
        let (found, iters) = self.data_mut(leaf).lookup(key);
        if iters >= 1 {
            let d = self.data(leaf);
            if !d.at_floor && d.is_catastrophic(&self.config) {
                let _ = self.on_catastrophic(leaf);
            }
        }
        found
    }

    /// Lookup that leaves every counter untouched.
    pub fn get(&self, key: K) -> Option<u64> {
        self.check_domain(key).ok()?;
        self.data(self.descend(key).0).peek(key)
    }

    pub fn contains(&self, key: K) -> bool {
        self.get(key).is_some()
    }

    /// Inserts one record. On a cap failure the tree stays valid; if the
    /// failure came from the catastrophic path the record is already stored.
    pub fn insert(&mut self, key: K, payload: u64) -> Result<(), IndexError> {
        self.check_domain(key)?;
        if !self.config.allow_duplicates && self.contains(key) {
            return Err(IndexError::DuplicateKey(key.to_string()));
        }
        let leaf = loop {
            let leaf = self.descend_counted(key);
            let d = self.data(leaf);
            if d.occupied() < self.config.max_occupancy(d.capacity()) {
                break leaf;
            }
            self.make_room(leaf)?;
        };
        self.data_mut(leaf).insert(key, payload);
        self.len += 1;
        let d = self.data(leaf);
        if !d.at_floor && d.is_catastrophic(&self.config) {
            self.on_catastrophic(leaf)?;
        }
        Ok(())
    }

    fn make_room(&mut self, leaf: NodeId) -> Result<(), IndexError> {
        let d = self.data(leaf);
        let c = &self.config;
        let oversize = c.capacity_for(d.occupied() + 1) > c.max_data_node_slots;
        let catastrophic = c.split_policy == SplitPolicy::SidewaysFirst && d.is_catastrophic(c);
        if d.at_floor || !(oversize || catastrophic) {
            return self.expand(leaf, 1);
        }
        if catastrophic {
            self.note_catastrophic(leaf, false);
        }
        if !self.split_cascade(leaf)? {
            self.expand(leaf, 1)?;
        }
        Ok(())
    }

    fn note_catastrophic(&mut self, node: NodeId, at_creation: bool) {
        self.counters.catastrophic_events += 1;
        self.log(TreeEvent::Catastrophic { node, at_creation });
    }

    fn on_catastrophic(&mut self, leaf: NodeId) -> Result<(), IndexError> {
        self.note_catastrophic(leaf, false);
        match self.config.split_policy {
            SplitPolicy::SidewaysFirst => self.split_cascade(leaf).map(|_| ()),
            SplitPolicy::ExpansionOnly => self.expand(leaf, 0),
        }
    }

    /// Splits `leaf`, then keeps splitting every new node that is already
    /// catastrophic by its own creation work. Returns false if `leaf` itself
    /// could not be split because its range is at the resolution floor.
    fn split_cascade(&mut self, leaf: NodeId) -> Result<bool, IndexError> {
        let Some((l, r)) = self.split(leaf)? else {
            return Ok(false);
        };
        let mut work = vec![r, l];
        while let Some(id) = work.pop() {
            if !self.data(id).born_catastrophic(&self.config) {
                continue;
            }
            self.note_catastrophic(id, true);
            if let Some((l, r)) = self.split(id)? {
                work.push(r);
                work.push(l);
            }
        }
        Ok(true)
    }

    /// Rebuilds a data node at `capacity_for(occupied + extra)` slots.
    pub fn expand(&mut self, leaf: NodeId, extra: usize) -> Result<(), IndexError> {
        let d = self.data(leaf);
        let old_cap = d.capacity();
        let new_cap = self.config.capacity_for(d.occupied() + extra);
        let new_bytes = self.config.data_node_bytes(new_cap);
        let old_bytes = self.config.data_node_bytes(old_cap);
        self.allocate(new_bytes)?;
        let d = self.data(leaf);
        let mut rebuilt = DataNode::build(&d.records(), d.lo, d.hi, new_cap, &self.config);
        rebuilt.at_floor = d.at_floor;
        *self.data_mut(leaf) = rebuilt;
        self.mem.release(old_bytes);
        self.counters.expansions += 1;
        self.counters.retrains += 1;
        self.log(TreeEvent::Expansion { node: leaf, old_capacity: old_cap, new_capacity: new_cap });
        Ok(())
    }

    /// Halves the key range of a data node. Sideways when the parent can take
    /// the extra child (doubling its table if needed), downwards otherwise.
    /// Returns `None` and marks the node if its range cannot be halved.
    pub fn split(&mut self, leaf: NodeId) -> Result<Option<(NodeId, NodeId)>, IndexError> {
        let d = self.data(leaf);
        let (lo, hi) = (d.lo, d.hi);
        let Some(mid) = K::halve(lo, hi) else {
            if !d.at_floor {
                self.data_mut(leaf).at_floor = true;
                self.counters.floor_hits += 1;
                self.log(TreeEvent::Floor { node: leaf });
            }
            return Ok(None);
        };
        let records = d.records();
        let old_bytes = self.config.data_node_bytes(d.capacity());
        let cut = records.partition_point(|r| r.0 < mid);
        let (lrec, rrec) = records.split_at(cut);
        let (lcap, rcap) = (self.config.capacity_for(lrec.len()), self.config.capacity_for(rrec.len()));
        let child_bytes = self.config.data_node_bytes(lcap) + self.config.data_node_bytes(rcap);

        let Slot { parent, start, len, .. } = *self.slot(leaf);
        let mode = match parent {
            None => SplitMode::Down,
            Some(_) if len >= 2 => SplitMode::InPlace,
            Some(p) => {
                let table = self.internal(p).children.len();
                if (table as u64) * 2 * self.config.ref_bytes <= self.config.max_routing_bytes {
                    SplitMode::Double(p)
                } else {
                    SplitMode::Down
                }
            }
        };
        let extra = match mode {
            SplitMode::InPlace => 0,
            SplitMode::Double(p) => self.internal(p).children.len() as u64 * self.config.ref_bytes,
            SplitMode::Down => self.config.internal_node_bytes(2),
        };
        self.check_alloc(child_bytes + extra)?;
        self.mem.allocate(child_bytes + extra).expect("checked");

        let left = DataNode::build(lrec, lo, mid, lcap, &self.config);
        let right = DataNode::build(rrec, mid, hi, rcap, &self.config);
        self.free_slot(leaf);
        self.mem.release(old_bytes);
        self.counters.retrains += 2;

        let (l, r) = match mode {
            SplitMode::Down => {
                let l = self.alloc_slot(Slot { node: Node::Data(left), parent: None, start: 0, len: 1 });
                let r = self.alloc_slot(Slot { node: Node::Data(right), parent: None, start: 1, len: 1 });
                let inner = InternalNode::new(lo, hi, vec![l, r]);
                let i = self.alloc_slot(Slot { node: Node::Internal(inner), parent, start, len });
                self.slot_mut(l).parent = Some(i);
                self.slot_mut(r).parent = Some(i);
                match parent {
                    None => self.root = i,
                    Some(p) => self.internal_mut(p).children[start..start + len].fill(i),
                }
                self.counters.downwards_splits += 1;
                self.log(TreeEvent::Downwards { node: leaf, internal: i });
                (l, r)
            }
            SplitMode::InPlace | SplitMode::Double(_) => {
                let p = parent.expect("sideways split has a parent");
                let (start, len) = if let SplitMode::Double(p) = mode {
                    self.double_table(p);
                    (start * 2, len * 2)
                } else {
                    (start, len)
                };
                let half = len / 2;
                let l = self.alloc_slot(Slot { node: Node::Data(left), parent, start, len: half });
                let r = self.alloc_slot(Slot { node: Node::Data(right), parent, start: start + half, len: half });
                let table = &mut self.internal_mut(p).children;
                table[start..start + half].fill(l);
                table[start + half..start + len].fill(r);
                self.counters.sideways_splits += 1;
                self.log(TreeEvent::Sideways { node: leaf, left: l, right: r });
                (l, r)
            }
        };
        Ok(Some((l, r)))
    }

    /// Doubles a child table in place; bytes were already accounted.
    fn double_table(&mut self, p: NodeId) {
        let old_len = self.internal(p).children.len();
        let mut i = 0;
        while i < old_len {
            let c = self.internal(p).children[i];
            let s = self.nodes[c as usize].as_mut();
            match s {
                Some(s) if s.parent == Some(p) && s.start == i => {
                    let step = s.len;
                    s.start *= 2;
                    s.len *= 2;
                    i += step;
                }
                // the node being split was already released
                _ => i += 1,
            }
        }
        self.internal_mut(p).double();
        self.counters.doublings += 1;
        let current_bytes = self.mem.current();
        self.log(TreeEvent::Doubling { parent: p, old_len, new_len: old_len * 2, current_bytes });
    }

    /// Data nodes in key order.
    pub fn data_nodes(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            match &self.slot(id).node {
                Node::Data(_) => out.push(id),
                Node::Internal(n) => {
                    let mut kids = Vec::new();
                    let mut i = 0;
                    while i < n.children.len() {
                        let c = n.children[i];
                        kids.push(c);
                        i += self.slot(c).len;
                    }
                    stack.extend(kids.into_iter().rev());
                }
            }
        }
        out
    }

    pub fn internal_nodes(&self) -> Vec<NodeId> {
        (0..self.nodes.len() as NodeId)
            .filter(|&i| matches!(self.node(i), Some(Node::Internal(_))))
            .collect()
    }

    pub fn depth(&self) -> usize {
        fn go<K: Key>(t: &IndexTree<K>, id: NodeId) -> usize {
            match &t.slot(id).node {
                Node::Data(_) => 1,
                Node::Internal(n) => 1 + n.children.iter().map(|&c| go(t, c)).max().unwrap_or(0),
            }
        }
        go(self, self.root)
    }

    /// Accounted bytes recomputed from a walk of every reachable node.
    pub fn walk_bytes(&self) -> u64 {
        let mut total = 0;
        let mut stack = vec![self.root];
        let mut seen = std::collections::HashSet::new();
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            match &self.slot(id).node {
                Node::Data(d) => total += self.config.data_node_bytes(d.capacity()),
                Node::Internal(n) => {
                    total += self.config.internal_node_bytes(n.children.len());
                    stack.extend(n.children.iter().copied());
                }
            }
        }
        total
    }

    /// All records in key order.
    pub fn records(&self) -> Vec<(K, u64)> {
        self.data_nodes().into_iter().flat_map(|id| self.data(id).records()).collect()
    }

    /// Verifies every structural invariant; returns the first violation found.
    pub fn check_invariants(&self) -> Result<(), String> {
        let c = &self.config;
        if self.slot(self.root).parent.is_some() {
            return Err("root has a parent".into());
        }
        let mut reachable = 0usize;
        let mut records = 0usize;
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            reachable += 1;
            let slot = self.slot(id);
            match &slot.node {
                Node::Data(d) => {
                    let a = &d.array;
                    if a.occupied() != a.popcount() {
                        return Err(format!("node {id}: occupied count disagrees with bitmap"));
                    }
                    if !a.is_sorted() {
                        return Err(format!("node {id}: keys out of order"));
                    }
                    if a.occupied() > c.max_occupancy(a.capacity()) {
                        return Err(format!("node {id}: occupancy {} over limit at capacity {}", a.occupied(), a.capacity()));
                    }
                    if let Some((_, k, _)) = a.iter().find(|&(_, k, _)| !d.contains_range(k)) {
                        return Err(format!("node {id}: key {k} outside [{}, {})", d.lo, d.hi));
                    }
                    records += a.occupied();
                }
                Node::Internal(n) => {
                    let len = n.children.len();
                    if !len.is_power_of_two() || len < 2 {
                        return Err(format!("node {id}: table length {len} not a power of two"));
                    }
                    if len as u64 * c.ref_bytes > c.max_routing_bytes {
                        return Err(format!("node {id}: table over routing limit"));
                    }
                    let mut i = 0;
                    let mut edge = n.lo;
                    while i < len {
                        let cid = n.children[i];
                        let child = self
                            .nodes
                            .get(cid as usize)
                            .and_then(|s| s.as_ref())
                            .ok_or_else(|| format!("node {id}: dangling child {cid}"))?;
                        if child.parent != Some(id) || child.start != i {
                            return Err(format!("node {id}: child {cid} has wrong back link"));
                        }
                        let r = child.len;
                        if !r.is_power_of_two() || i % r != 0 || i + r > len {
                            return Err(format!("node {id}: child {cid} block ({i}, {r}) misaligned"));
                        }
                        if n.children[i..i + r].iter().any(|&x| x != cid) {
                            return Err(format!("node {id}: child {cid} block not contiguous"));
                        }
                        if child.node.lo() != edge {
                            return Err(format!("node {id}: gap or overlap before child {cid}"));
                        }
                        edge = child.node.hi();
                        stack.push(cid);
                        i += r;
                    }
                    if edge != n.hi {
                        return Err(format!("node {id}: children stop at {edge}, range ends at {}", n.hi));
                    }
                }
            }
        }
        let live = self.nodes.iter().filter(|s| s.is_some()).count();
        if live != reachable {
            return Err(format!("{live} live nodes but {reachable} reachable"));
        }
        if records != self.len {
            return Err(format!("{records} stored records, expected {}", self.len));
        }
        let walked = self.walk_bytes();
        if walked != self.mem.current() {
            return Err(format!("accounted {} bytes, walk finds {walked}", self.mem.current()));
        }
        if self.mem.peak() < self.mem.current() {
            return Err("peak below current".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> IndexConfig {
        IndexConfig::default()
    }

    #[test]
    fn empty_load_is_one_minimal_node() {
        let t = IndexTree::<u64>::bulk_load(&[], cfg()).unwrap();
        assert_eq!(t.data_nodes().len(), 1);
        assert_eq!(t.domain(), u64::full_domain());
        assert_eq!(t.memory_report().current_bytes, cfg().data_node_bytes(16));
        t.check_invariants().unwrap();
    }

    #[test]
    fn small_load_densities() {
        let keys: Vec<u64> = (1..=100).collect();
        let t = IndexTree::from_keys(&keys, cfg()).unwrap();
        for id in t.data_nodes() {
            let d = t.data_node(id).unwrap();
            let f = d.occupied() as f64 / d.capacity() as f64;
            assert!((0.59..=0.8).contains(&f), "density {f}");
        }
        assert_eq!(t.len(), 100);
        t.check_invariants().unwrap();
    }

    #[test]
    fn insert_and_read_back() {
        let mut t = IndexTree::<u64>::bulk_load(&[], cfg()).unwrap();
        t.insert(42, 7).unwrap();
        assert_eq!(t.lookup(42), Some(7));
        assert_eq!(t.lookup(43), None);
        for k in 0..2000u64 {
            t.insert(k * 3, k).unwrap();
        }
        t.check_invariants().unwrap();
        assert_eq!(t.get(300), Some(100));
    }

    #[test]
    fn unsorted_rejected() {
        let err = IndexTree::from_keys(&[3u64, 1], cfg()).unwrap_err();
        assert_eq!(err, IndexError::Unsorted);
    }

    #[test]
    fn out_of_domain_insert_rejected() {
        let mut t = IndexTree::from_keys(&[10u64, 20], cfg()).unwrap();
        assert!(matches!(t.insert(100, 0), Err(IndexError::OutOfDomain { .. })));
        assert!(t.insert(9, 0).is_ok());
    }

    #[test]
    fn sideways_split_doubles_single_reference_parent() {
        let keys: Vec<f64> = (0..40).map(|i| 10.0 + i as f64 * 0.25).collect();
        let mut t = IndexTree::from_keys(&keys, cfg()).unwrap();
        let leaf = t.data_nodes()[0];
        t.split(leaf).unwrap().unwrap();
        let root = t.root();
        assert_eq!(t.internal(root).children.len(), 2);
        let leaf = t.data_nodes()[0];
        t.split(leaf).unwrap().unwrap();
        assert_eq!(t.internal(root).children.len(), 4);
        assert_eq!(t.counters().doublings, 1);
        t.check_invariants().unwrap();
    }

    #[test]
    fn downwards_split_under_full_parent() {
        let keys: Vec<u64> = (0..8).collect();
        let config = IndexConfig { max_routing_bytes: 16, ..cfg() };
        let mut t = IndexTree::from_keys(&keys, config).unwrap();
        let leaf = t.data_nodes()[0];
        t.split(leaf).unwrap();
        let leaf = t.data_nodes()[0];
        let before = t.records();
        t.split(leaf).unwrap();
        assert_eq!(t.counters().downwards_splits, 2);
        assert_eq!(t.depth(), 3);
        assert_eq!(t.records(), before);
        t.check_invariants().unwrap();
    }

    #[test]
    fn expansion_byte_delta() {
        let keys: Vec<u64> = (0..80).map(|k| k * 10).collect();
        let mut t = IndexTree::from_keys(&keys, cfg()).unwrap();
        let leaf = t.data_nodes()[0];
        let before = t.memory_report().current_bytes;
        let old = t.data_node(leaf).unwrap().capacity();
        t.expand(leaf, 0).unwrap();
        let new = t.data_node(leaf).unwrap().capacity();
        let c = cfg();
        assert_eq!(
            t.memory_report().current_bytes - before,
            (new - old) as u64 * c.slot_bytes + (new.div_ceil(64) - old.div_ceil(64)) as u64 * 8
        );
    }

    #[test]
    fn cap_refusal_leaves_tree_intact() {
        let keys: Vec<u64> = (0..1000).collect();
        let base = IndexTree::from_keys(&keys, cfg()).unwrap();
        let cap = base.memory_report().current_bytes + 10;
        let mut t = IndexTree::from_keys(&keys, cfg().with_cap(cap)).unwrap();
        let leaf = t.data_nodes()[0];
        let err = t.expand(leaf, 0).unwrap_err();
        assert!(err.is_cap_exceeded());
        assert_eq!(t.counters().cap_exceeded, 1);
        t.check_invariants().unwrap();
    }
}
