//! Room partitioning and the relay graph between rooms.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::session::RoomId;

/// Which participant went to which room.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub group_sizes: Vec<usize>,
    /// `assignments[i]` is the room of the i-th participant.
    pub assignments: Vec<RoomId>,
}

impl PartitionPlan {
    pub fn room_count(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn participant_count(&self) -> usize {
        self.assignments.len()
    }

    /// Participant positions in `room`, ascending.
    pub fn members(&self, room: RoomId) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == room)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Largest room count whose size range brackets `n`, if any.
fn max_feasible_rooms(n: usize, min_size: usize, max_size: usize) -> Option<usize> {
    let r = n / min_size;
    (r >= 1 && r * max_size >= n).then_some(r)
}

/// Room sizes for `n` participants: as many rooms as the bounds allow, sizes
/// differing by at most one so the fewest rooms grow past `min_size`.
///
/// When no room count fits `n` inside `[min_size, max_size]` (e.g. 7 people
/// with bounds 5..=6) the population is split into `n / min_size` rooms,
/// which keeps every room at least `min_size` and overshoots `max_size` by the
/// smallest amount. Fewer than `min_size` people share a single room.
pub fn group_sizes(n: usize, min_size: usize, max_size: usize) -> Vec<usize> {
    assert!(n >= 1 && min_size >= 1 && min_size <= max_size);
    let rooms = max_feasible_rooms(n, min_size, max_size).unwrap_or((n / min_size).max(1));
    even_split(n, rooms)
}

fn even_split(n: usize, rooms: usize) -> Vec<usize> {
    let base = n / rooms;
    let extra = n % rooms;
    (0..rooms).map(|i| base + usize::from(i < extra)).collect()
}

/// Partitions `n` participants into rooms, assigning them by a seeded shuffle.
pub fn partition(n: usize, min_size: usize, max_size: usize, seed: u64) -> PartitionPlan {
    assign(group_sizes(n, min_size, max_size), seed)
}

/// Partitions into exactly `rooms` rooms of near-equal size, ignoring the
/// size bounds. Used to pin a known room layout.
pub fn partition_into(n: usize, rooms: usize, seed: u64) -> PartitionPlan {
    assert!(n >= 1 && rooms >= 1 && rooms <= n);
    assign(even_split(n, rooms), seed)
}

fn assign(group_sizes: Vec<usize>, seed: u64) -> PartitionPlan {
    let n: usize = group_sizes.iter().sum();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignments = vec![RoomId(0); n];
    let mut slots = order.into_iter();
    for (room, &size) in group_sizes.iter().enumerate() {
        for p in slots.by_ref().take(size) {
            assignments[p] = RoomId(room as u32);
        }
    }
    PartitionPlan {
        group_sizes,
        assignments,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    #[default]
    DirectedRing,
}

/// Directed relay graph: an edge `(a, b)` lets room `a`'s observer speak in `b`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub room_count: usize,
    pub edges: Vec<(RoomId, RoomId)>,
    pub kind: TopologyKind,
}

impl Topology {
    pub fn build(room_count: usize, kind: TopologyKind) -> Self {
        assert!(room_count >= 1);
        let edges = match kind {
            TopologyKind::DirectedRing if room_count == 1 => Vec::new(),
            TopologyKind::DirectedRing => (0..room_count)
                .map(|i| (RoomId(i as u32), RoomId(((i + 1) % room_count) as u32)))
                .collect(),
        };
        Self {
            room_count,
            edges,
            kind,
        }
    }

    pub fn has_edge(&self, from: RoomId, to: RoomId) -> bool {
        self.edges.contains(&(from, to))
    }

    pub fn targets(&self, from: RoomId) -> impl Iterator<Item = RoomId> + '_ {
        self.edges
            .iter()
            .filter(move |(a, _)| *a == from)
            .map(|(_, b)| *b)
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.room_count];
        for (a, b) in &self.edges {
            adj[a.index()].push(b.index());
        }
        adj
    }

    /// Longest shortest directed path between any two rooms, or `None` when
    /// some room cannot reach another.
    pub fn propagation_diameter(&self) -> Option<usize> {
        let adj = self.adjacency();
        let mut diameter = 0;
        for start in 0..self.room_count {
            let dist = bfs(&adj, start);
            for d in dist {
                diameter = diameter.max(d?);
            }
        }
        Some(diameter)
    }
}

fn bfs(adj: &[Vec<usize>], start: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap();
        for &v in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sizes_histogram(sizes: &[usize]) -> Vec<(usize, usize)> {
        let mut h = std::collections::BTreeMap::new();
        for &s in sizes {
            *h.entry(s).or_insert(0) += 1;
        }
        h.into_iter().collect()
    }

    /// Brute force: most rooms `a + b` with `a` rooms of `lo` and `b` of `hi`.
    fn brute_max_rooms(n: usize, lo: usize, hi: usize) -> Option<usize> {
        let mut best = None;
        for a in 0..=n / lo {
            for b in 0..=n / hi {
                if a * lo + b * hi == n && a + b >= 1 {
                    best = best.max(Some(a + b));
                }
            }
        }
        best
    }

    #[test]
    fn four_hundred_into_fives() {
        let p = partition(400, 5, 5, 1);
        assert_eq!(p.room_count(), 80);
        assert!(p.group_sizes.iter().all(|&s| s == 5));
    }

    #[test]
    fn tiny_population_is_one_room() {
        let p = partition(3, 5, 6, 9);
        assert_eq!(p.group_sizes, vec![3]);
        assert_eq!(p.assignments, vec![RoomId(0); 3]);
    }

    #[test]
    fn infeasible_counts_overshoot_max_by_the_least() {
        assert_eq!(group_sizes(7, 5, 6), vec![7]);
        assert_eq!(group_sizes(13, 5, 6), vec![7, 6]);
        assert_eq!(group_sizes(19, 5, 6), vec![7, 6, 6]);
        assert_eq!(group_sizes(11, 5, 5), vec![6, 5]);
    }

    #[test]
    fn max_rule_on_241() {
        // 48 rooms fit (48 * 5 <= 241 <= 48 * 6), so the rule uses 48.
        let p = partition(241, 5, 6, 0);
        assert_eq!(sizes_histogram(&p.group_sizes), vec![(5, 47), (6, 1)]);
    }

    #[test]
    fn fixed_room_count_layout() {
        let p = partition_into(241, 47, 3);
        assert_eq!(sizes_histogram(&p.group_sizes), vec![(5, 41), (6, 6)]);
    }

    #[test]
    fn room_count_matches_brute_force_for_two_sizes() {
        for n in 1..=600 {
            let sizes = group_sizes(n, 5, 6);
            if let Some(best) = brute_max_rooms(n, 5, 6) {
                assert_eq!(sizes.len(), best, "n = {n}");
                assert!(sizes.iter().all(|s| (5..=6).contains(s)), "n = {n}");
            }
        }
    }

    #[test]
    fn ring_edges_and_diameter() {
        let t = Topology::build(3, TopologyKind::DirectedRing);
        assert_eq!(
            t.edges,
            vec![
                (RoomId(0), RoomId(1)),
                (RoomId(1), RoomId(2)),
                (RoomId(2), RoomId(0))
            ]
        );
        let single = Topology::build(1, TopologyKind::DirectedRing);
        assert!(single.edges.is_empty());
        assert_eq!(single.propagation_diameter(), Some(0));
        assert_eq!(
            Topology::build(5, TopologyKind::DirectedRing).propagation_diameter(),
            Some(4)
        );
    }

    #[test]
    fn ring_of_47_is_one_cycle() {
        let t = Topology::build(47, TopologyKind::DirectedRing);
        assert_eq!(t.edges.len(), 47);
        let mut seen = [false; 47];
        let mut at = 0usize;
        for _ in 0..47 {
            assert!(!seen[at]);
            seen[at] = true;
            let next: Vec<_> = t.targets(RoomId(at as u32)).collect();
            assert_eq!(next.len(), 1);
            at = next[0].index();
        }
        assert_eq!(at, 0);
        assert!(seen.iter().all(|s| *s));
        assert_eq!(t.propagation_diameter(), Some(46));
    }

    #[test]
    fn diameter_is_none_when_disconnected() {
        let t = Topology {
            room_count: 2,
            edges: vec![(RoomId(0), RoomId(1))],
            kind: TopologyKind::DirectedRing,
        };
        assert_eq!(t.propagation_diameter(), None);
    }

    proptest! {
        #[test]
        fn plan_invariants(n in 1usize..3000, lo in 1usize..8, extra in 0usize..4, seed: u64) {
            let hi = lo + extra;
            let p = partition(n, lo, hi, seed);
            prop_assert_eq!(p.group_sizes.iter().sum::<usize>(), n);
            prop_assert_eq!(p.assignments.len(), n);
            let mut counted = vec![0usize; p.room_count()];
            for r in &p.assignments {
                counted[r.index()] += 1;
            }
            prop_assert_eq!(&counted, &p.group_sizes);
            let feasible = (1..=n).any(|r| r * lo <= n && n <= r * hi);
            if feasible || n < lo {
                if n >= lo {
                    prop_assert!(p.group_sizes.iter().all(|s| (lo..=hi).contains(s)));
                } else {
                    prop_assert_eq!(p.room_count(), 1);
                }
            }
        }

        #[test]
        fn seeds_change_assignment_not_sizes(n in 1usize..800, s1: u64, s2: u64) {
            let a = partition(n, 5, 6, s1);
            prop_assert_eq!(&a, &partition(n, 5, 6, s1));
            let b = partition(n, 5, 6, s2);
            prop_assert_eq!(sizes_histogram(&a.group_sizes), sizes_histogram(&b.group_sizes));
        }

        #[test]
        fn ring_is_strongly_connected(r in 1usize..200) {
            let t = Topology::build(r, TopologyKind::DirectedRing);
            prop_assert_eq!(t.propagation_diameter(), Some(r - 1));
            for i in 0..r {
                prop_assert!(!t.has_edge(RoomId(i as u32), RoomId(i as u32)) || r == 1);
            }
        }
    }
}
