//! Hierarchical navigable small world graph over executed test points.
//!
//! Every node lives on layer 0 and on each layer up to its randomly assigned
//! level. Searches start at the entry point on the top layer, walk greedily to
//! a local minimum with a dynamic list of one element, use that minimum as the
//! entry of the next layer down, and widen the list on the ground layer.
//!
//! Node ids are dense insertion indices. Equal distances are broken in favour
//! of the lower id so every traversal is deterministic.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{ArtError, Result};
use crate::geometry::{Metric, RandomSource, TestPoint};

/// Graph construction and query parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HnswParams {
    /// Link cap on layers >= 1.
    pub m: usize,
    /// Link cap on layer 0.
    pub m0: usize,
    /// Dynamic list size for queries.
    pub ef_search: usize,
    /// Dynamic list size during insertion.
    pub ef_construct: usize,
    /// Layer assignment normalizer.
    pub level_norm: f64,
    /// Number of nodes the graph accepts before it must be rebuilt.
    pub base_capacity: usize,
}

impl HnswParams {
    pub const DEFAULT_CAPACITY: usize = 10_000;
    /// Multiplier `A` of the logarithmic construction list size.
    pub const EF_CONSTRUCT_FACTOR: f64 = 4.0;
    pub const DEFAULT_EF_SEARCH: usize = 2;

    /// Defaults for a `dim`-dimensional domain: `m = 3 * dim`, `m0 = 2 * m`,
    /// `ef_search = 2`, capacity 10^4.
    pub fn for_dimension(dim: usize) -> Self {
        let m = 3 * dim.max(1);
        let m0 = 2 * m;
        HnswParams {
            m,
            m0,
            ef_search: Self::DEFAULT_EF_SEARCH,
            ef_construct: Self::ef_construct_for(m, Self::DEFAULT_CAPACITY),
            level_norm: Self::default_level_norm(m),
            base_capacity: Self::DEFAULT_CAPACITY,
        }
    }

    /// `1 / ln(m)`; falls back to 1 when `m < 2`.
    pub fn default_level_norm(m: usize) -> f64 {
        if m < 2 {
            1.0
        } else {
            1.0 / (m as f64).ln()
        }
    }

    /// `max(m, ceil(A * ln(capacity)))`.
    pub fn ef_construct_for(m: usize, capacity: usize) -> usize {
        let log_term = (Self::EF_CONSTRUCT_FACTOR * (capacity.max(1) as f64).ln()).ceil() as usize;
        m.max(log_term)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ArtError::InvalidParameter(msg));
        if self.m < 1 {
            return bad("m must be at least 1".into());
        }
        if self.m0 < self.m {
            return bad(format!("m0 ({}) must be >= m ({})", self.m0, self.m));
        }
        if self.ef_search < 1 {
            return bad("ef_search must be at least 1".into());
        }
        if self.ef_construct < self.m {
            return bad(format!(
                "ef_construct ({}) must be >= m ({})",
                self.ef_construct, self.m
            ));
        }
        if !(self.level_norm > 0.0 && self.level_norm.is_finite()) {
            return bad(format!("level_norm must be positive, got {}", self.level_norm));
        }
        if self.base_capacity < 1 {
            return bad("base_capacity must be at least 1".into());
        }
        Ok(())
    }
}

/// Level for a draw `u` in `(0, 1]`: `floor(-ln(u) * level_norm)`.
pub fn level_for_draw(u: f64, level_norm: f64) -> usize {
    let l = (-u.ln() * level_norm).floor();
    if l.is_finite() && l > 0.0 {
        l as usize
    } else {
        0
    }
}

/// Draws a level from the exponentially decaying layer distribution.
pub fn assign_level<R: RandomSource + ?Sized>(rng: &mut R, level_norm: f64) -> usize {
    // next_unit is in [0, 1); flip it so ln never sees zero.
    level_for_draw(1.0 - rng.next_unit(), level_norm)
}

/// Node id plus its rank key (squared distance for Euclidean).
#[derive(Debug, Clone, Copy)]
struct Candidate {
    key: f64,
    id: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    /// Rank keys are never NaN, so the float comparison is total here.
    #[inline]
    fn cmp(&self, other: &Self) -> Ordering {
        if self.key < other.key {
            Ordering::Less
        } else if self.key > other.key {
            Ordering::Greater
        } else {
            self.id.cmp(&other.id)
        }
    }
}

/// Reusable per-searcher buffers. One scratch per thread.
#[derive(Debug, Default, Clone)]
pub struct SearchScratch {
    stamps: Vec<u32>,
    epoch: u32,
    frontier: BinaryHeap<Reverse<Candidate>>,
    found: BinaryHeap<Candidate>,
}

impl SearchScratch {
    pub fn new() -> Self {
        Self::default()
    }

    fn begin(&mut self, nodes: usize) {
        if self.stamps.len() < nodes {
            self.stamps.resize(nodes, 0);
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamps.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        self.frontier.clear();
        self.found.clear();
    }

    /// Marks `id` visited; returns false if it already was.
    #[inline]
    fn visit(&mut self, id: u32) -> bool {
        let slot = &mut self.stamps[id as usize];
        if *slot == self.epoch {
            false
        } else {
            *slot = self.epoch;
            true
        }
    }
}

const NO_SLOT: u32 = u32::MAX;

/// Adjacency of one layer: a fixed block of `cap` link ids and rank keys per
/// member node.
#[derive(Debug, Clone)]
struct LinkLayer {
    cap: usize,
    /// Layer 0 holds every node, so its slot is the node id.
    dense: bool,
    slot: Vec<u32>,
    lens: Vec<u32>,
    ids: Vec<u32>,
    keys: Vec<f64>,
}

impl LinkLayer {
    fn new(cap: usize, dense: bool, reserve: usize) -> Self {
        let reserve = if dense { reserve } else { 0 };
        LinkLayer {
            cap,
            dense,
            slot: Vec::new(),
            lens: Vec::with_capacity(reserve),
            ids: Vec::with_capacity(reserve * cap),
            keys: Vec::with_capacity(reserve * cap),
        }
    }

    fn add_node(&mut self, id: u32) {
        if !self.dense {
            let id = id as usize;
            if self.slot.len() <= id {
                self.slot.resize(id + 1, NO_SLOT);
            }
            self.slot[id] = self.lens.len() as u32;
        }
        self.lens.push(0);
        self.ids.resize(self.ids.len() + self.cap, 0);
        self.keys.resize(self.keys.len() + self.cap, 0.0);
    }

    #[inline]
    fn slot_of(&self, id: u32) -> Option<usize> {
        if self.dense {
            return ((id as usize) < self.lens.len()).then_some(id as usize);
        }
        match self.slot.get(id as usize) {
            Some(&s) if s != NO_SLOT => Some(s as usize),
            _ => None,
        }
    }

    #[inline]
    fn slot(&self, id: u32) -> usize {
        if self.dense {
            id as usize
        } else {
            self.slot[id as usize] as usize
        }
    }

    #[inline]
    fn ids_at(&self, slot: usize) -> &[u32] {
        let start = slot * self.cap;
        &self.ids[start..start + self.lens[slot] as usize]
    }

    #[inline]
    fn keys_at(&self, slot: usize) -> &[f64] {
        let start = slot * self.cap;
        &self.keys[start..start + self.lens[slot] as usize]
    }

    #[inline]
    fn neighbors(&self, id: u32) -> &[u32] {
        self.ids_at(self.slot(id))
    }

    fn set(&mut self, id: u32, links: &[Candidate]) {
        let slot = self.slot(id);
        let start = slot * self.cap;
        for (i, c) in links.iter().enumerate() {
            self.ids[start + i] = c.id;
            self.keys[start + i] = c.key;
        }
        self.lens[slot] = links.len() as u32;
    }

    fn push(&mut self, id: u32, link: Candidate) {
        let slot = self.slot(id);
        let at = slot * self.cap + self.lens[slot] as usize;
        self.ids[at] = link.id;
        self.keys[at] = link.key;
        self.lens[slot] += 1;
    }

    /// Position (within the node's block) of its farthest link.
    fn farthest(&self, id: u32) -> (usize, Candidate) {
        let slot = self.slot(id);
        let (ids, keys) = (self.ids_at(slot), self.keys_at(slot));
        let mut worst = (
            0,
            Candidate {
                key: keys[0],
                id: ids[0],
            },
        );
        for i in 1..ids.len() {
            let c = Candidate {
                key: keys[i],
                id: ids[i],
            };
            if c > worst.1 {
                worst = (i, c);
            }
        }
        worst
    }

    fn replace(&mut self, id: u32, pos: usize, link: Candidate) {
        let at = self.slot(id) * self.cap + pos;
        self.ids[at] = link.id;
        self.keys[at] = link.key;
    }

    /// Removes `other` from the links of `id`, moving the last link into its
    /// place.
    fn remove(&mut self, id: u32, other: u32) {
        let slot = self.slot(id);
        let start = slot * self.cap;
        let len = self.lens[slot] as usize;
        if let Some(pos) = self.ids[start..start + len].iter().position(|&x| x == other) {
            self.ids[start + pos] = self.ids[start + len - 1];
            self.keys[start + pos] = self.keys[start + len - 1];
            self.lens[slot] -= 1;
        }
    }
}

/// Layered proximity graph over test points.
#[derive(Debug, Clone)]
pub struct SmallWorldIndex {
    dim: usize,
    params: HnswParams,
    metric: Metric,
    coords: Vec<f64>,
    levels: Vec<usize>,
    layers: Vec<LinkLayer>,
    entry_point: Option<u32>,
    max_layer: usize,
}

impl SmallWorldIndex {
    pub fn new(dim: usize, params: HnswParams, metric: Metric) -> Result<Self> {
        if dim == 0 {
            return Err(ArtError::InvalidParameter("dimension must be at least 1".into()));
        }
        params.validate()?;
        let cap = params.base_capacity;
        Ok(SmallWorldIndex {
            dim,
            metric,
            coords: Vec::with_capacity(cap * dim),
            levels: Vec::with_capacity(cap),
            layers: vec![LinkLayer::new(params.m0, true, cap)],
            entry_point: None,
            max_layer: 0,
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn capacity(&self) -> usize {
        self.params.base_capacity
    }

    pub fn is_full(&self) -> bool {
        self.len() >= self.capacity()
    }

    pub fn entry_point(&self) -> Option<usize> {
        self.entry_point.map(|e| e as usize)
    }

    pub fn max_layer(&self) -> usize {
        self.max_layer
    }

    pub fn level_of(&self, id: usize) -> Option<usize> {
        self.levels.get(id).copied()
    }

    pub fn point(&self, id: usize) -> Option<&[f64]> {
        (id < self.len()).then(|| self.coords_of(id as u32))
    }

    /// Links of `id` on `layer`, or `None` when the node is not on that layer.
    pub fn links(&self, id: usize, layer: usize) -> Option<&[u32]> {
        let layer = self.layers.get(layer)?;
        layer.slot_of(u32::try_from(id).ok()?).map(|s| layer.ids_at(s))
    }

    /// Stored points in insertion order.
    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    #[inline]
    fn coords_of(&self, id: u32) -> &[f64] {
        let start = id as usize * self.dim;
        &self.coords[start..start + self.dim]
    }

    #[inline]
    fn key(&self, q: &[f64], id: u32) -> f64 {
        let key = self.metric.rank_key(q, self.coords_of(id));
        debug_assert!(!key.is_nan());
        key
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim {
            return Err(ArtError::DimensionMismatch {
                expected: self.dim,
                found,
            });
        }
        Ok(())
    }

    /// Inserts `point` at a level drawn from `rng`. Returns the new node id.
    pub fn insert<R: RandomSource + ?Sized>(&mut self, point: &[f64], rng: &mut R) -> Result<usize> {
        self.check_dim(point.len())?;
        if self.is_full() {
            return Err(ArtError::CapacityExceeded {
                capacity: self.capacity(),
            });
        }
        let level = assign_level(rng, self.params.level_norm);
        let mut scratch = SearchScratch::new();
        Ok(self.insert_at_level(point, level, &mut scratch))
    }

    /// Inserts `point` with a caller-chosen top level.
    pub fn insert_with_level(&mut self, point: &[f64], level: usize) -> Result<usize> {
        self.check_dim(point.len())?;
        if self.is_full() {
            return Err(ArtError::CapacityExceeded {
                capacity: self.capacity(),
            });
        }
        let mut scratch = SearchScratch::new();
        Ok(self.insert_at_level(point, level, &mut scratch))
    }

    /// Insert with caller-owned buffers; dimensionality and capacity are the
    /// caller's responsibility.
    pub(crate) fn insert_with_scratch<R: RandomSource + ?Sized>(
        &mut self,
        point: &[f64],
        rng: &mut R,
        scratch: &mut SearchScratch,
    ) -> usize {
        let level = assign_level(rng, self.params.level_norm);
        self.insert_at_level(point, level, scratch)
    }

    fn insert_at_level(&mut self, point: &[f64], level: usize, scratch: &mut SearchScratch) -> usize {
        let id = self.len() as u32;
        self.coords.extend_from_slice(point);
        self.levels.push(level);
        while self.layers.len() <= level {
            self.layers.push(LinkLayer::new(self.params.m, false, 0));
        }
        for layer in &mut self.layers[..=level] {
            layer.add_node(id);
        }

        let Some(ep) = self.entry_point else {
            self.entry_point = Some(id);
            self.max_layer = level;
            return id as usize;
        };

        // Phase I: one-element descent through the layers above the new node.
        let mut cur = Candidate {
            key: self.key(point, ep),
            id: ep,
        };
        for layer in (level + 1..=self.max_layer).rev() {
            cur = self.greedy_closest(point, cur, layer);
        }

        // Phase II: widen to ef_construct on the node's own layers and link.
        let mut entries = vec![cur];
        for layer in (0..=level.min(self.max_layer)).rev() {
            let found = self.search_layer_from(point, &entries, self.params.ef_construct, layer, scratch);
            let cap = self.cap(layer);
            let chosen = &found[..cap.min(found.len())];
            let links = &mut self.layers[layer];
            links.set(id, chosen);
            for c in chosen {
                let back = Candidate { key: c.key, id };
                if links.neighbors(c.id).len() < cap {
                    links.push(c.id, back);
                    continue;
                }
                // Over capacity: the farthest of the old links and the new one
                // is dropped in both directions.
                let (pos, worst) = links.farthest(c.id);
                if back > worst {
                    links.remove(id, c.id);
                } else {
                    links.replace(c.id, pos, back);
                    links.remove(worst.id, c.id);
                }
            }
            entries = found;
        }

        if level > self.max_layer {
            self.entry_point = Some(id);
            self.max_layer = level;
        }
        id as usize
    }

    #[inline]
    fn cap(&self, layer: usize) -> usize {
        if layer == 0 {
            self.params.m0
        } else {
            self.params.m
        }
    }

    /// Greedy walk with a one-element list: move to any closer neighbor until
    /// none is closer.
    fn greedy_closest(&self, q: &[f64], start: Candidate, layer: usize) -> Candidate {
        let mut cur = start;
        loop {
            let mut improved = false;
            for &nb in self.layers[layer].neighbors(cur.id) {
                let cand = Candidate {
                    key: self.key(q, nb),
                    id: nb,
                };
                if cand < cur {
                    cur = cand;
                    improved = true;
                }
            }
            if !improved {
                return cur;
            }
        }
    }

    /// Best-first expansion on one layer, keeping the `ef` closest nodes seen.
    /// Result is sorted ascending.
    fn search_layer_from(
        &self,
        q: &[f64],
        entries: &[Candidate],
        ef: usize,
        layer: usize,
        scratch: &mut SearchScratch,
    ) -> Vec<Candidate> {
        scratch.begin(self.len());
        for &e in entries {
            if scratch.visit(e.id) {
                scratch.frontier.push(Reverse(e));
                scratch.found.push(e);
                if scratch.found.len() > ef {
                    scratch.found.pop();
                }
            }
        }
        while let Some(Reverse(closest)) = scratch.frontier.pop() {
            let worst = *scratch.found.peek().expect("found set is never empty here");
            if closest > worst {
                break;
            }
            for &nb in self.layers[layer].neighbors(closest.id) {
                if !scratch.visit(nb) {
                    continue;
                }
                let cand = Candidate {
                    key: self.key(q, nb),
                    id: nb,
                };
                let full = scratch.found.len() >= ef;
                if !full || cand < *scratch.found.peek().unwrap() {
                    scratch.frontier.push(Reverse(cand));
                    scratch.found.push(cand);
                    if scratch.found.len() > ef {
                        scratch.found.pop();
                    }
                }
            }
        }
        let mut out: Vec<Candidate> = scratch.found.drain().collect();
        out.sort_unstable();
        out
    }

    /// Up to `ef` nodes of `layer` closest to `q`, found by greedy best-first
    /// expansion from `entry`, sorted ascending by distance.
    ///
    /// Returns an empty list when `layer` is above the graph's top layer.
    pub fn search_layer(&self, q: &TestPoint, entry: usize, ef: usize, layer: usize) -> Result<Vec<(usize, f64)>> {
        self.check_dim(q.dim())?;
        if ef == 0 {
            return Err(ArtError::InvalidParameter("ef must be at least 1".into()));
        }
        if self.is_empty() || layer > self.max_layer {
            return Ok(Vec::new());
        }
        let level = self.level_of(entry).ok_or(ArtError::UnknownNode(entry))?;
        if level < layer {
            return Err(ArtError::InvalidParameter(format!(
                "entry node {entry} has level {level}, below layer {layer}"
            )));
        }
        let q = q.coords();
        let start = Candidate {
            key: self.key(q, entry as u32),
            id: entry as u32,
        };
        let mut scratch = SearchScratch::new();
        Ok(self
            .search_layer_from(q, &[start], ef, layer, &mut scratch)
            .into_iter()
            .map(|c| (c.id as usize, self.metric.key_to_distance(c.key)))
            .collect())
    }

    /// Approximate nearest neighbor of `q`, with the configured `ef_search`.
    pub fn nearest(&self, q: &TestPoint) -> Result<(TestPoint, f64)> {
        self.check_dim(q.dim())?;
        let mut scratch = SearchScratch::new();
        let (id, dist) = self
            .nearest_with(q.coords(), self.params.ef_search, &mut scratch)
            .ok_or(ArtError::EmptyIndex)?;
        let point = TestPoint::new(self.coords_of(id as u32).to_vec())?;
        Ok((point, dist))
    }

    /// `(node id, distance)` of the approximate nearest neighbor with an
    /// explicit ground-layer list size. `None` on an empty index.
    pub fn nearest_with(&self, q: &[f64], ef: usize, scratch: &mut SearchScratch) -> Option<(usize, f64)> {
        self.nearest_key_with(q, ef, scratch)
            .map(|(id, key)| (id, self.metric.key_to_distance(key)))
    }

    /// [`nearest_with`](Self::nearest_with) reporting the metric's rank key
    /// instead of the distance.
    pub(crate) fn nearest_key_with(&self, q: &[f64], ef: usize, scratch: &mut SearchScratch) -> Option<(usize, f64)> {
        let ep = self.entry_point?;
        let mut cur = Candidate {
            key: self.key(q, ep),
            id: ep,
        };
        for layer in (1..=self.max_layer).rev() {
            cur = self.greedy_closest(q, cur, layer);
        }
        let best = if ef <= 1 {
            self.greedy_closest(q, cur, 0)
        } else {
            self.search_layer_from(q, &[cur], ef, 0, scratch)[0]
        };
        Some((best.id as usize, best.key))
    }

    /// Same search as [`nearest`](Self::nearest), returning the local minimum
    /// reached on each layer from the top down to layer 0.
    pub fn nearest_traced(&self, q: &TestPoint) -> Result<Vec<usize>> {
        self.check_dim(q.dim())?;
        let ep = self.entry_point.ok_or(ArtError::EmptyIndex)?;
        let q = q.coords();
        let mut cur = Candidate {
            key: self.key(q, ep),
            id: ep,
        };
        let mut trace = Vec::with_capacity(self.max_layer + 1);
        for layer in (1..=self.max_layer).rev() {
            cur = self.greedy_closest(q, cur, layer);
            trace.push(cur.id as usize);
        }
        let mut scratch = SearchScratch::new();
        let best = self.search_layer_from(q, &[cur], self.params.ef_search.max(1), 0, &mut scratch)[0];
        trace.push(best.id as usize);
        Ok(trace)
    }

    /// A fresh index with twice the capacity and a recomputed `ef_construct`,
    /// holding the same points re-inserted in their original order.
    pub fn rebuild_doubled<R: RandomSource + ?Sized>(&self, rng: &mut R) -> SmallWorldIndex {
        let mut params = self.params.clone();
        params.base_capacity = self.params.base_capacity * 2;
        params.ef_construct = HnswParams::ef_construct_for(params.m, params.base_capacity);
        let mut next =
            SmallWorldIndex::new(self.dim, params, self.metric).expect("parameters were valid before doubling");
        let mut scratch = SearchScratch::new();
        for p in self.points() {
            next.insert_with_scratch(p, rng, &mut scratch);
        }
        next
    }

    /// Exhaustive structural check: layer membership, mutual links, degree
    /// caps and entry point placement.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let n = self.len();
        match self.entry_point {
            None if n == 0 => return Ok(()),
            None => return Err("non-empty index without entry point".into()),
            Some(ep) => {
                if ep as usize >= n {
                    return Err(format!("entry point {ep} out of range"));
                }
                if self.levels[ep as usize] != self.max_layer {
                    return Err(format!(
                        "entry point level {} != max layer {}",
                        self.levels[ep as usize], self.max_layer
                    ));
                }
            }
        }
        for id in 0..n {
            let level = self.levels[id];
            if level > self.max_layer {
                return Err(format!("node {id} level {level} above max layer {}", self.max_layer));
            }
            let on_layers = self
                .layers
                .iter()
                .take_while(|l| l.slot_of(id as u32).is_some())
                .count();
            let anywhere = self.layers.iter().filter(|l| l.slot_of(id as u32).is_some()).count();
            if on_layers != level + 1 || anywhere != level + 1 {
                return Err(format!("node {id} is on {anywhere} layers, expected {}", level + 1));
            }
            for layer in 0..=level {
                let list = self.links(id, layer).expect("membership checked above");
                if list.len() > self.cap(layer) {
                    return Err(format!(
                        "node {id} layer {layer} degree {} > cap {}",
                        list.len(),
                        self.cap(layer)
                    ));
                }
                for &nb in list {
                    let nb = nb as usize;
                    if nb == id {
                        return Err(format!("node {id} links to itself on layer {layer}"));
                    }
                    if nb >= n || self.levels[nb] < layer {
                        return Err(format!("node {id} links to {nb}, absent from layer {layer}"));
                    }
                    if !self.links(nb, layer).is_some_and(|l| l.contains(&(id as u32))) {
                        return Err(format!("link {id}->{nb} on layer {layer} is not mutual"));
                    }
                }
                let mut sorted = list.to_vec();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != list.len() {
                    return Err(format!("node {id} has duplicate links on layer {layer}"));
                }
                let links = &self.layers[layer];
                let keys = links.keys_at(links.slot(id as u32));
                if keys.len() != list.len()
                    || list
                        .iter()
                        .zip(keys)
                        .any(|(&nb, &k)| k != self.key(self.coords_of(id as u32), nb))
                {
                    return Err(format!("node {id} has stale link distances on layer {layer}"));
                }
            }
        }
        Ok(())
    }

    /// Debug dump: `id level x1,...,xd` per node, followed by one
    /// `L<layer>: id,id,...` line per layer the node is on.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for id in 0..self.len() {
            let coords: Vec<String> = self.coords_of(id as u32).iter().map(|c| c.to_string()).collect();
            let _ = writeln!(out, "{id} {} {}", self.levels[id], coords.join(","));
            for layer in 0..=self.levels[id] {
                let list = self.links(id, layer).unwrap_or(&[]);
                let ids: Vec<String> = list.iter().map(|x| x.to_string()).collect();
                let _ = writeln!(out, "L{layer}: {}", ids.join(","));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_uniform, seeded_rng, InputDomain, ScriptedSource};

    fn pt(c: &[f64]) -> TestPoint {
        TestPoint::new(c.to_vec()).unwrap()
    }

    fn brute_nearest(points: &[Vec<f64>], q: &[f64]) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in points.iter().enumerate() {
            let d = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    #[test]
    fn level_examples() {
        assert_eq!(level_for_draw(1.0, 1.0), 0);
        assert_eq!(level_for_draw((-1.0f64).exp(), 1.0), 1);
        let mut src = ScriptedSource::new(vec![0.0]);
        assert_eq!(assign_level(&mut src, 3.0), 0);
    }

    #[test]
    fn level_mean_matches_exponential() {
        let norm = 1.0 / 6f64.ln();
        let mut rng = seeded_rng(11);
        let n = 1_000_000;
        // floor(X) for X ~ Exp(rate 1/norm) has mean 1/(e^{1/norm} - 1) = 1/5.
        let mean = (0..n).map(|_| assign_level(&mut rng, norm) as f64).sum::<f64>() / n as f64;
        assert!((mean - 0.2).abs() < 0.005, "mean level {mean}");
        // Tail: P(level >= 1) = exp(-1/norm) = 1/6.
        let mut rng = seeded_rng(12);
        let tail = (0..n).filter(|_| assign_level(&mut rng, norm) >= 1).count() as f64 / n as f64;
        assert!((tail - 1.0 / 6.0).abs() < 0.003, "tail {tail}");
    }

    #[test]
    fn first_insert_becomes_entry_point() {
        let mut idx = SmallWorldIndex::new(2, HnswParams::for_dimension(2), Metric::Euclidean).unwrap();
        let id = idx.insert_with_level(&[0.2, 0.3], 3).unwrap();
        assert_eq!(idx.entry_point(), Some(id));
        assert_eq!(idx.max_layer(), 3);
        for layer in 0..=3 {
            assert!(idx.links(id, layer).unwrap().is_empty());
        }
        idx.check_invariants().unwrap();
    }

    #[test]
    fn nearest_on_empty_index_errors() {
        let idx = SmallWorldIndex::new(2, HnswParams::for_dimension(2), Metric::Euclidean).unwrap();
        assert_eq!(idx.nearest(&pt(&[0.0, 0.0])).unwrap_err(), ArtError::EmptyIndex);
        assert!(idx.search_layer(&pt(&[0.0, 0.0]), 0, 1, 0).unwrap().is_empty());
    }

    #[test]
    fn single_node_queries() {
        let mut idx = SmallWorldIndex::new(2, HnswParams::for_dimension(2), Metric::Euclidean).unwrap();
        idx.insert(&[1.0, 1.0], &mut seeded_rng(0)).unwrap();
        let (p, d) = idx.nearest(&pt(&[4.0, 5.0])).unwrap();
        assert_eq!(p.coords(), &[1.0, 1.0]);
        assert_eq!(d, 5.0);
        assert_eq!(idx.search_layer(&pt(&[4.0, 5.0]), 0, 3, 0).unwrap(), vec![(0, 5.0)]);
    }

    #[test]
    fn exact_hit_on_tiny_layer() {
        let mut idx = SmallWorldIndex::new(2, HnswParams::for_dimension(2), Metric::Euclidean).unwrap();
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        for p in &pts {
            idx.insert_with_level(p, 0).unwrap();
        }
        let hit = idx.search_layer(&pt(&[1.0, 1.0]), 0, 1, 0).unwrap();
        assert_eq!(hit, vec![(3, 0.0)]);
    }

    #[test]
    fn search_layer_with_full_list_equals_exhaustive_sort() {
        let dom = InputDomain::unit(3).unwrap();
        let mut rng = seeded_rng(3);
        let mut idx = SmallWorldIndex::new(3, HnswParams::for_dimension(3), Metric::Euclidean).unwrap();
        let pts: Vec<Vec<f64>> = (0..50).map(|_| sample_uniform(&dom, &mut rng).into_coords()).collect();
        for p in &pts {
            idx.insert(p, &mut rng).unwrap();
        }
        for _ in 0..20 {
            let q = sample_uniform(&dom, &mut rng);
            let got = idx.search_layer(&q, idx.entry_point().unwrap(), 50, 0).unwrap();
            let mut want: Vec<(usize, f64)> = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (i, Metric::Euclidean.distance_raw(p, q.coords())))
                .collect();
            want.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            assert_eq!(
                got.iter().map(|x| x.0).collect::<Vec<_>>(),
                want.iter().map(|x| x.0).collect::<Vec<_>>()
            );
            for ((_, g), (_, w)) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn saturated_single_layer_search_is_exact() {
        let dom = InputDomain::unit(4).unwrap();
        let mut rng = seeded_rng(5);
        let n = 40;
        let params = HnswParams {
            m: n,
            m0: n,
            ef_search: n,
            ef_construct: n,
            level_norm: 1.0,
            base_capacity: 64,
        };
        let mut idx = SmallWorldIndex::new(4, params, Metric::Euclidean).unwrap();
        let pts: Vec<Vec<f64>> = (0..n).map(|_| sample_uniform(&dom, &mut rng).into_coords()).collect();
        for p in &pts {
            idx.insert_with_level(p, 0).unwrap();
        }
        for _ in 0..200 {
            let q = sample_uniform(&dom, &mut rng);
            let (_, d) = idx.nearest(&q).unwrap();
            let want = brute_nearest(&pts, q.coords()).1;
            assert!((d - want).abs() <= 1e-12 * want.max(1.0), "{d} vs {want}");
        }
    }

    #[test]
    fn capacity_is_enforced() {
        let mut params = HnswParams::for_dimension(1);
        params.base_capacity = 2;
        let mut idx = SmallWorldIndex::new(1, params, Metric::Euclidean).unwrap();
        let mut rng = seeded_rng(0);
        idx.insert(&[0.1], &mut rng).unwrap();
        idx.insert(&[0.2], &mut rng).unwrap();
        assert_eq!(
            idx.insert(&[0.3], &mut rng).unwrap_err(),
            ArtError::CapacityExceeded { capacity: 2 }
        );
    }

    #[test]
    fn rebuild_doubles_capacity_and_keeps_points() {
        let mut params = HnswParams::for_dimension(2);
        params.base_capacity = 4;
        params.ef_construct = HnswParams::ef_construct_for(params.m, 4);
        let mut idx = SmallWorldIndex::new(2, params, Metric::Euclidean).unwrap();
        let mut rng = seeded_rng(9);
        let pts = [[0.1, 0.1], [0.9, 0.2], [0.4, 0.8], [0.5, 0.5]];
        for p in &pts {
            idx.insert(p, &mut rng).unwrap();
        }
        assert!(idx.is_full());
        let next = idx.rebuild_doubled(&mut rng);
        assert_eq!(next.capacity(), 8);
        assert_eq!(next.len(), 4);
        assert_eq!(
            next.params().ef_construct,
            HnswParams::ef_construct_for(next.params().m, 8)
        );
        for (i, p) in pts.iter().enumerate() {
            assert_eq!(next.point(i).unwrap(), p);
            let (found, d) = next.nearest(&pt(p)).unwrap();
            assert_eq!(found.coords(), p);
            assert_eq!(d, 0.0);
        }
        next.check_invariants().unwrap();
    }

    #[test]
    fn capacity_doubling_sequence() {
        let params = HnswParams::for_dimension(1);
        let mut idx = SmallWorldIndex::new(1, params, Metric::Euclidean).unwrap();
        let mut rng = seeded_rng(1);
        let mut caps = vec![idx.capacity()];
        for _ in 0..2 {
            while !idx.is_full() {
                let x = rng.next_unit();
                idx.insert(&[x], &mut rng).unwrap();
            }
            idx = idx.rebuild_doubled(&mut rng);
            caps.push(idx.capacity());
        }
        assert_eq!(caps, vec![10_000, 20_000, 40_000]);
        assert_eq!(idx.len(), 20_000);
    }

    #[test]
    fn ef_construct_rule() {
        // max(m, ceil(4 ln b))
        assert_eq!(HnswParams::ef_construct_for(6, 10_000), 37);
        assert_eq!(HnswParams::ef_construct_for(45, 10_000), 45);
        assert_eq!(HnswParams::ef_construct_for(6, 20_000), 40);
        let p = HnswParams::for_dimension(5);
        assert_eq!((p.m, p.m0, p.ef_search, p.ef_construct), (15, 30, 2, 37));
        p.validate().unwrap();
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = HnswParams::for_dimension(2);
        p.m0 = p.m - 1;
        assert!(p.validate().is_err());
        let mut p = HnswParams::for_dimension(2);
        p.ef_construct = p.m - 1;
        assert!(p.validate().is_err());
        let mut p = HnswParams::for_dimension(2);
        p.level_norm = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn duplicates_are_distinct_nodes() {
        let mut idx = SmallWorldIndex::new(2, HnswParams::for_dimension(2), Metric::Euclidean).unwrap();
        let mut rng = seeded_rng(2);
        for _ in 0..5 {
            idx.insert(&[0.5, 0.5], &mut rng).unwrap();
        }
        assert_eq!(idx.len(), 5);
        idx.check_invariants().unwrap();
        assert_eq!(idx.nearest(&pt(&[0.5, 0.5])).unwrap().1, 0.0);
    }

    #[test]
    fn dump_format() {
        let mut idx = SmallWorldIndex::new(2, HnswParams::for_dimension(2), Metric::Euclidean).unwrap();
        idx.insert_with_level(&[0.0, 1.0], 1).unwrap();
        idx.insert_with_level(&[2.0, 3.5], 0).unwrap();
        assert_eq!(idx.dump(), "0 1 0,1\nL0: 1\nL1: \n1 0 2,3.5\nL0: 0\n");
    }

    fn walkthrough_params() -> HnswParams {
        HnswParams {
            m: 3,
            m0: 6,
            ef_search: 1,
            ef_construct: 3,
            level_norm: 1.0,
            base_capacity: 16,
        }
    }

    /// Node numbers in the walkthroughs start at 1; ids start at 0.
    fn linked(idx: &SmallWorldIndex, node: usize, layer: usize) -> Vec<usize> {
        let mut out: Vec<usize> = idx
            .links(node - 1, layer)
            .unwrap()
            .iter()
            .map(|&x| x as usize + 1)
            .collect();
        out.sort_unstable();
        out
    }

    #[test]
    fn insertion_walkthrough() {
        let mut idx = SmallWorldIndex::new(2, walkthrough_params(), Metric::Euclidean).unwrap();
        // (node, position, level); node 4 is the first node on the top layer.
        let initial = [
            (1, [-1.0, -0.5], 0),
            (2, [-1.0, 0.5], 1),
            (3, [1.5, -0.8], 0),
            (4, [0.0, 0.0], 2),
            (5, [1.0, 0.5], 1),
            (6, [2.0, 0.0], 2),
        ];
        for (node, p, level) in initial {
            assert_eq!(idx.insert_with_level(&p, level).unwrap() + 1, node);
        }
        assert_eq!(idx.entry_point(), Some(3));
        assert_eq!(idx.max_layer(), 2);
        assert!(linked(&idx, 4, 1).contains(&6));

        assert_eq!(idx.insert_with_level(&[-0.6, 0.0], 1).unwrap(), 6);
        assert_eq!(linked(&idx, 7, 1), vec![2, 4, 5]);
        assert_eq!(linked(&idx, 7, 0), vec![1, 2, 4]);
        assert!(!linked(&idx, 4, 1).contains(&6));
        assert!(!linked(&idx, 6, 1).contains(&4));
        assert_eq!(linked(&idx, 4, 1).len(), 3);

        assert_eq!(idx.insert_with_level(&[1.3, 0.3], 0).unwrap(), 7);
        assert_eq!(linked(&idx, 8, 0), vec![3, 5, 6]);
        assert_eq!(idx.entry_point(), Some(3));
        idx.check_invariants().unwrap();
    }

    #[test]
    fn layered_search_walkthrough() {
        let mut idx = SmallWorldIndex::new(2, walkthrough_params(), Metric::Euclidean).unwrap();
        let nodes = [
            (1, [0.0, 0.0], 2),
            (2, [0.2, 0.3], 0),
            (3, [0.3, -0.1], 0),
            (4, [0.2, 0.9], 1),
            (5, [0.8, 0.6], 1),
            (6, [0.95, 0.85], 0),
            (7, [-0.5, 0.5], 1),
            (8, [0.6, 0.3], 2),
        ];
        for (node, p, level) in nodes {
            assert_eq!(idx.insert_with_level(&p, level).unwrap() + 1, node);
        }
        assert_eq!(idx.entry_point(), Some(0));
        let trace = idx.nearest_traced(&pt(&[0.9, 0.9])).unwrap();
        assert_eq!(trace.iter().map(|id| id + 1).collect::<Vec<_>>(), vec![8, 5, 6]);
        idx.check_invariants().unwrap();
    }
}
