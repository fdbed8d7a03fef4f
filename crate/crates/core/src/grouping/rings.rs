//! Minimum cycle basis by shortest-cycle candidates and GF(2) elimination.
//!
//! Candidates are the Horton cycles `P(x,u) + (u,v) + P(v,x)` built from BFS
//! trees rooted at every vertex of the 2-core. They are sorted by length and
//! kept greedily while linearly independent over GF(2) (edge-incidence
//! vectors), until `E - V + C` cycles are selected.

use std::collections::{HashSet, VecDeque};

type Bits = Vec<u64>;

fn bitset(len: usize) -> Bits {
    vec![0; len.div_ceil(64)]
}

fn set_bit(b: &mut Bits, i: usize) {
    b[i / 64] |= 1 << (i % 64);
}

fn lowest_bit(b: &Bits) -> Option<usize> {
    b.iter()
        .enumerate()
        .find(|(_, w)| **w != 0)
        .map(|(k, w)| k * 64 + w.trailing_zeros() as usize)
}

fn connected_components(n: usize, adj: &[Vec<(usize, usize)>]) -> usize {
    let mut seen = vec![false; n];
    let mut count = 0;
    for s in 0..n {
        if seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    q.push_back(v);
                }
            }
        }
    }
    count
}

/// Rotates a cycle to start at its smallest atom, walking towards the
/// smaller of that atom's two ring neighbours.
fn canonical_cycle(mut cycle: Vec<usize>) -> Vec<usize> {
    let k = cycle
        .iter()
        .enumerate()
        .min_by_key(|(_, &a)| a)
        .map(|(i, _)| i)
        .unwrap();
    cycle.rotate_left(k);
    if cycle.len() > 2 && cycle[cycle.len() - 1] < cycle[1] {
        cycle[1..].reverse();
    }
    cycle
}

/// Smallest cycle basis of an undirected graph given as an edge list.
/// Each ring is returned as an ordered cycle of vertex ids.
pub fn smallest_cycle_basis(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for (k, &(u, v)) in edges.iter().enumerate() {
        adj[u].push((v, k));
        adj[v].push((u, k));
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    let target = edges.len() + connected_components(n, &adj);
    let target = target.saturating_sub(n);
    if target == 0 {
        return Vec::new();
    }

    // Prune to the 2-core; tree-like parts carry no cycles.
    let mut degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut alive = vec![true; n];
    let mut stack: Vec<usize> = (0..n).filter(|&v| degree[v] <= 1).collect();
    while let Some(v) = stack.pop() {
        if !alive[v] {
            continue;
        }
        alive[v] = false;
        for &(w, _) in &adj[v] {
            if alive[w] {
                degree[w] -= 1;
                if degree[w] == 1 {
                    stack.push(w);
                }
            }
        }
    }
    let core_edges: Vec<usize> = (0..edges.len())
        .filter(|&k| alive[edges[k].0] && alive[edges[k].1])
        .collect();

    let mut seen: HashSet<Bits> = HashSet::new();
    let mut candidates: Vec<(Vec<usize>, Bits)> = Vec::new();
    for root in (0..n).filter(|&v| alive[v]) {
        let mut dist = vec![usize::MAX; n];
        let mut parent = vec![(usize::MAX, usize::MAX); n];
        dist[root] = 0;
        let mut q = VecDeque::from([root]);
        while let Some(u) = q.pop_front() {
            for &(v, k) in &adj[u] {
                if alive[v] && dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    parent[v] = (u, k);
                    q.push_back(v);
                }
            }
        }
        let path = |mut v: usize| {
            let mut atoms = vec![v];
            let mut bonds = Vec::new();
            while v != root {
                let (p, k) = parent[v];
                bonds.push(k);
                atoms.push(p);
                v = p;
            }
            (atoms, bonds)
        };
        for &k in &core_edges {
            let (u, v) = edges[k];
            if dist[u] == usize::MAX || dist[v] == usize::MAX {
                continue;
            }
            if parent[u].1 == k || parent[v].1 == k {
                continue;
            }
            let (pu, bu) = path(u);
            let (pv, bv) = path(v);
            let su: HashSet<usize> = pu.iter().copied().collect();
            if pv.iter().filter(|a| su.contains(a)).count() != 1 {
                continue;
            }
            let mut bits = bitset(edges.len());
            for &b in bu.iter().chain(&bv).chain(std::iter::once(&k)) {
                set_bit(&mut bits, b);
            }
            if !seen.insert(bits.clone()) {
                continue;
            }
            let mut cycle: Vec<usize> = pu.into_iter().rev().collect();
            cycle.extend(pv.into_iter().take_while(|&a| a != root));
            candidates.push((canonical_cycle(cycle), bits));
        }
    }
    candidates.sort_by(|a, b| {
        a.0.len().cmp(&b.0.len()).then_with(|| {
            let mut sa = a.0.clone();
            let mut sb = b.0.clone();
            sa.sort_unstable();
            sb.sort_unstable();
            sa.cmp(&sb).then_with(|| a.0.cmp(&b.0))
        })
    });

    // Gaussian elimination keyed by pivot bit.
    let mut basis: Vec<(usize, Bits)> = Vec::new();
    let mut rings = Vec::new();
    for (cycle, bits) in candidates {
        let mut r = bits;
        while let Some(pivot) = lowest_bit(&r) {
            let Some((_, row)) = basis.iter().find(|(p, _)| *p == pivot) else { break };
            for (a, b) in r.iter_mut().zip(row) {
                *a ^= b;
            }
        }
        if let Some(pivot) = lowest_bit(&r) {
            basis.push((pivot, r));
            rings.push(cycle);
            if rings.len() == target {
                break;
            }
        }
    }
    rings
}
