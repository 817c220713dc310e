use std::cmp::Ordering;

use rayon::prelude::*;

use super::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Call,
    Sms,
}

/// A communication event over dense user indices. `time` is seconds since
/// the Unix epoch of the local (configured timezone) wall-clock time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub src: u32,
    pub dst: u32,
    pub time: i64,
    pub duration: u32,
    pub kind: EventKind,
    pub direction: Direction,
}

/// Traffic aggregated over one ordered pair `(src, dst)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairCounters {
    pub calls: u64,
    pub call_seconds: u64,
    pub sms: u64,
}

impl PairCounters {
    fn add(&mut self, other: &PairCounters) {
        self.calls += other.calls;
        self.call_seconds += other.call_seconds;
        self.sms += other.sms;
    }

    pub fn interactions(&self) -> u64 {
        self.calls + self.sms
    }
}

fn pair_key(src: u32, dst: u32) -> u64 {
    (u64::from(src) << 32) | u64::from(dst)
}

fn unpack(key: u64) -> (u32, u32) {
    ((key >> 32) as u32, key as u32)
}

/// Directed per-pair counters, sorted by `(src, dst)`.
///
/// Aggregates built over disjoint shards of a record stream can be combined
/// with [`PairAggregate::merge`]; the merge is associative and commutative.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairAggregate {
    keys: Vec<u64>,
    counters: Vec<PairCounters>,
}

impl PairAggregate {
    pub fn from_events(events: &[Event]) -> Self {
        let mut items: Vec<(u64, u32, bool)> = events
            .par_iter()
            .map(|e| (pair_key(e.src, e.dst), e.duration, e.kind == EventKind::Call))
            .collect();
        items.par_sort_unstable_by_key(|item| item.0);

        let mut keys = Vec::new();
        let mut counters: Vec<PairCounters> = Vec::new();
        for (key, duration, is_call) in items {
            if keys.last() != Some(&key) {
                keys.push(key);
                counters.push(PairCounters::default());
            }
            let c = counters.last_mut().expect("just pushed");
            if is_call {
                c.calls += 1;
                c.call_seconds += u64::from(duration);
            } else {
                c.sms += 1;
            }
        }
        PairAggregate { keys, counters }
    }

    pub fn merge(self, other: PairAggregate) -> PairAggregate {
        let mut keys = Vec::with_capacity(self.keys.len() + other.keys.len());
        let mut counters = Vec::with_capacity(keys.capacity());
        let (mut i, mut j) = (0, 0);
        while i < self.keys.len() || j < other.keys.len() {
            let order = match (self.keys.get(i), other.keys.get(j)) {
                (Some(a), Some(b)) => a.cmp(b),
                (Some(_), None) => Ordering::Less,
                _ => Ordering::Greater,
            };
            match order {
                Ordering::Less => {
                    keys.push(self.keys[i]);
                    counters.push(self.counters[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    keys.push(other.keys[j]);
                    counters.push(other.counters[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    let mut c = self.counters[i];
                    c.add(&other.counters[j]);
                    keys.push(self.keys[i]);
                    counters.push(c);
                    i += 1;
                    j += 1;
                }
            }
        }
        PairAggregate { keys, counters }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn get(&self, src: u32, dst: u32) -> Option<PairCounters> {
        self.keys
            .binary_search(&pair_key(src, dst))
            .ok()
            .map(|i| self.counters[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, &PairCounters)> + '_ {
        self.keys.iter().zip(&self.counters).map(|(&k, c)| {
            let (s, d) = unpack(k);
            (s, d, c)
        })
    }

    pub fn total_call_seconds(&self) -> u64 {
        self.counters.iter().map(|c| c.call_seconds).sum()
    }

    fn max_node(&self) -> Option<u32> {
        self.iter().map(|(s, d, _)| s.max(d)).max()
    }
}

/// Undirected, unweighted communication graph over dense user indices, plus
/// the directed traffic counters.
///
/// `w(x, y) = 1` iff any call or message exists between `x` and `y` in either
/// direction. Adjacency is stored as CSR with ascending neighbor lists.
#[derive(Debug, Clone)]
pub struct SocialGraph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    pairs: PairAggregate,
    /// Index range into `pairs` for each source node.
    out_offsets: Vec<usize>,
    in_offsets: Vec<usize>,
    in_sources: Vec<u32>,
}

impl SocialGraph {
    pub fn build(node_count: usize, events: &[Event]) -> Self {
        Self::from_pairs(node_count, PairAggregate::from_events(events))
    }

    pub fn from_pairs(node_count: usize, pairs: PairAggregate) -> Self {
        let node_count = node_count.max(pairs.max_node().map_or(0, |m| m as usize + 1));

        let mut out_offsets = vec![0usize; node_count + 1];
        let mut in_offsets = vec![0usize; node_count + 1];
        for (s, d, _) in pairs.iter() {
            out_offsets[s as usize + 1] += 1;
            in_offsets[d as usize + 1] += 1;
        }
        prefix_sum(&mut out_offsets);
        prefix_sum(&mut in_offsets);

        // Pairs are sorted by (src, dst), so each bucket fills in ascending order.
        let mut in_sources = vec![0u32; pairs.len()];
        let mut cursor = in_offsets.clone();
        for (s, d, _) in pairs.iter() {
            in_sources[cursor[d as usize]] = s;
            cursor[d as usize] += 1;
        }

        let mut offsets = Vec::with_capacity(node_count + 1);
        let mut neighbors = Vec::with_capacity(pairs.len());
        offsets.push(0);
        for u in 0..node_count {
            let outs = pairs.keys[out_offsets[u]..out_offsets[u + 1]]
                .iter()
                .map(|&k| unpack(k).1);
            let ins = in_sources[in_offsets[u]..in_offsets[u + 1]].iter().copied();
            merge_union(outs, ins, &mut neighbors);
            offsets.push(neighbors.len());
        }
        neighbors.shrink_to_fit();

        SocialGraph {
            offsets,
            neighbors,
            pairs,
            out_offsets,
            in_offsets,
            in_sources,
        }
    }

    /// Graph with one call from `x` to `y` per listed pair.
    pub fn from_edges(node_count: usize, edges: &[(u32, u32)]) -> Self {
        let events: Vec<Event> = edges
            .iter()
            .map(|&(src, dst)| Event {
                src,
                dst,
                time: 0,
                duration: 1,
                kind: EventKind::Call,
                direction: super::Direction::Outgoing,
            })
            .collect();
        Self::build(node_count, &events)
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, node: u32) -> &[u32] {
        let u = node as usize;
        &self.neighbors[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn degree(&self, node: u32) -> usize {
        let u = node as usize;
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn adjacency(&self) -> &[u32] {
        &self.neighbors
    }

    pub fn weight(&self, x: u32, y: u32) -> u8 {
        if (x as usize) >= self.node_count() {
            return 0;
        }
        u8::from(self.neighbors(x).binary_search(&y).is_ok())
    }

    /// Undirected edges as `(x, y)` with `x < y`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.node_count() as u32).flat_map(move |x| {
            self.neighbors(x)
                .iter()
                .copied()
                .filter(move |&y| y > x)
                .map(move |y| (x, y))
        })
    }

    pub fn pairs(&self) -> &PairAggregate {
        &self.pairs
    }

    pub fn pair(&self, src: u32, dst: u32) -> Option<PairCounters> {
        self.pairs.get(src, dst)
    }

    /// Distinct users `node` contacted.
    pub fn out_contacts(&self, node: u32) -> impl Iterator<Item = u32> + '_ {
        let u = node as usize;
        self.pairs.keys[self.out_offsets[u]..self.out_offsets[u + 1]]
            .iter()
            .map(|&k| unpack(k).1)
    }

    /// Distinct users that contacted `node`.
    pub fn in_contacts(&self, node: u32) -> &[u32] {
        let u = node as usize;
        &self.in_sources[self.in_offsets[u]..self.in_offsets[u + 1]]
    }

    /// Symmetrized interaction counts aligned with [`SocialGraph::adjacency`]:
    /// the weight of `x ~ y` is the number of calls and messages in both
    /// directions.
    pub fn interaction_weights(&self) -> Vec<f64> {
        (0..self.node_count() as u32)
            .into_par_iter()
            .flat_map_iter(|x| {
                self.neighbors(x).iter().map(move |&y| {
                    let fwd = self.pair(x, y).map_or(0, |c| c.interactions());
                    let back = self.pair(y, x).map_or(0, |c| c.interactions());
                    (fwd + back) as f64
                })
            })
            .collect()
    }
}

fn prefix_sum(v: &mut [usize]) {
    for i in 1..v.len() {
        v[i] += v[i - 1];
    }
}

fn merge_union(
    mut a: impl Iterator<Item = u32>,
    mut b: impl Iterator<Item = u32>,
    out: &mut Vec<u32>,
) {
    let mut x = a.next();
    let mut y = b.next();
    loop {
        match (x, y) {
            (Some(p), Some(q)) => match p.cmp(&q) {
                Ordering::Less => {
                    out.push(p);
                    x = a.next();
                }
                Ordering::Greater => {
                    out.push(q);
                    y = b.next();
                }
                Ordering::Equal => {
                    out.push(p);
                    x = a.next();
                    y = b.next();
                }
            },
            (Some(p), None) => {
                out.push(p);
                x = a.next();
            }
            (None, Some(q)) => {
                out.push(q);
                y = b.next();
            }
            (None, None) => break,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(src: u32, dst: u32, duration: u32) -> Event {
        Event {
            src,
            dst,
            time: 0,
            duration,
            kind: EventKind::Call,
            direction: Direction::Outgoing,
        }
    }

    fn sms(src: u32, dst: u32) -> Event {
        Event {
            kind: EventKind::Sms,
            duration: 0,
            ..call(src, dst, 0)
        }
    }

    #[test]
    fn dedups_pairs_into_edges() {
        // A=0 calls B=1, B calls A, A texts C=2
        let g = SocialGraph::build(3, &[call(0, 1, 10), call(1, 0, 5), sms(0, 2)]);
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (0, 2)]);
        assert_eq!(g.weight(1, 0), 1);
        assert_eq!(g.weight(0, 1), 1);
        assert_eq!(g.weight(1, 2), 0);
    }

    #[test]
    fn empty_stream() {
        let g = SocialGraph::build(0, &[]);
        assert_eq!(g.node_count(), 0);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn aggregates_directed_counters() {
        let g = SocialGraph::build(2, &[call(0, 1, 60), call(0, 1, 30)]);
        assert_eq!(
            g.pair(0, 1),
            Some(PairCounters {
                calls: 2,
                call_seconds: 90,
                sms: 0
            })
        );
        assert_eq!(g.pair(1, 0), None);
        assert_eq!(g.weight(0, 1), 1);
    }

    #[test]
    fn contacts_by_direction() {
        // A called B and C; B called A
        let g = SocialGraph::build(3, &[call(0, 1, 1), call(0, 2, 1), call(1, 0, 1)]);
        assert_eq!(g.out_contacts(0).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(g.in_contacts(0), &[1]);
        assert_eq!(g.neighbors(0), &[1, 2]);
        assert_eq!(g.interaction_weights()[..2], [2.0, 1.0]);
    }

    #[test]
    fn merge_matches_single_pass() {
        let events: Vec<Event> = (0..200u32)
            .map(|i| {
                if i % 3 == 0 {
                    sms(i % 7, (i * 5 + 1) % 7 + 7)
                } else {
                    call(i % 5, i % 11 + 5, i)
                }
            })
            .collect();
        let whole = PairAggregate::from_events(&events);
        let (a, b) = events.split_at(77);
        let (b, c) = b.split_at(50);
        let left = PairAggregate::from_events(a)
            .merge(PairAggregate::from_events(b))
            .merge(PairAggregate::from_events(c));
        let right = PairAggregate::from_events(c)
            .merge(PairAggregate::from_events(a).merge(PairAggregate::from_events(b)));
        assert_eq!(whole, left);
        assert_eq!(whole, right);
    }
}
