use std::collections::VecDeque;

use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;

/// Bijection between original indices and reordered indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    /// `order[new] = old`
    order: Vec<usize>,
    /// `position[old] = new`
    position: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
            position: (0..n).collect(),
        }
    }

    pub fn from_order(order: Vec<usize>) -> Self {
        let mut position = vec![usize::MAX; order.len()];
        for (new, &old) in order.iter().enumerate() {
            assert!(position[old] == usize::MAX, "index {old} repeated in ordering");
            position[old] = new;
        }
        Self { order, position }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    #[inline]
    pub fn new_of(&self, old: usize) -> usize {
        self.position[old]
    }

    #[inline]
    pub fn old_of(&self, new: usize) -> usize {
        self.order[new]
    }

    /// Vector in original numbering → vector in new numbering.
    pub fn apply<T: Copy>(&self, v: &[T]) -> Vec<T> {
        self.order.iter().map(|&old| v[old]).collect()
    }

    /// Vector in new numbering → vector in original numbering.
    pub fn apply_inverse<T: Copy>(&self, v: &[T]) -> Vec<T> {
        self.position.iter().map(|&new| v[new]).collect()
    }
}

fn bfs_levels(adj: &[Vec<usize>], start: usize, seen: &mut [bool]) -> Vec<Vec<usize>> {
    let mut levels = vec![vec![start]];
    seen[start] = true;
    loop {
        let mut next = Vec::new();
        for &v in levels.last().unwrap() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            return levels;
        }
        levels.push(next);
    }
}

/// Start node of a component: a pseudo-peripheral vertex found by repeated
/// BFS from the lowest-degree vertex of the last level.
fn pseudo_peripheral(adj: &[Vec<usize>], component: &[usize]) -> usize {
    let mut start = *component
        .iter()
        .min_by_key(|&&v| (adj[v].len(), v))
        .unwrap();
    let mut depth = 0;
    for _ in 0..8 {
        let mut seen = vec![false; adj.len()];
        let levels = bfs_levels(adj, start, &mut seen);
        if levels.len() <= depth {
            break;
        }
        depth = levels.len();
        let candidate = *levels
            .last()
            .unwrap()
            .iter()
            .min_by_key(|&&v| (adj[v].len(), v))
            .unwrap();
        if candidate == start {
            break;
        }
        start = candidate;
    }
    start
}

/// Reverse Cuthill–McKee ordering of an undirected graph given as adjacency
/// lists. Ties are broken by index so the result is deterministic.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Permutation {
    let n = adj.len();
    let mut order = Vec::with_capacity(n);
    let mut placed = vec![false; n];

    for root in 0..n {
        if placed[root] {
            continue;
        }
        let mut seen = vec![false; n];
        let component: Vec<usize> = bfs_levels(adj, root, &mut seen).concat();
        let start = pseudo_peripheral(adj, &component);

        let mut queue = VecDeque::from([start]);
        placed[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&w| !placed[w]).collect();
            nbrs.sort_by_key(|&w| (adj[w].len(), w));
            for w in nbrs {
                placed[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    Permutation::from_order(order)
}

/// Lower and upper bandwidth of `A` in the permuted numbering.
pub fn bandwidths<T: Scalar>(a: &CsrMatrix<T>, perm: &Permutation) -> (usize, usize) {
    a.iter().fold((0, 0), |(lo, up), (i, j, _)| {
        let (pi, pj) = (perm.new_of(i), perm.new_of(j));
        if pi >= pj {
            (lo.max(pi - pj), up)
        } else {
            (lo, up.max(pj - pi))
        }
    })
}
