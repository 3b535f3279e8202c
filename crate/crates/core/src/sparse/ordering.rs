use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Minimum-degree elimination order on an undirected graph given as sorted,
/// diagonal-free adjacency lists. Returns `order[k]` = node eliminated at step k.
///
/// Plain explicit-graph minimum degree: eliminating a node turns its live
/// neighbourhood into a clique. Feeder networks are trees with small
/// per-bus cliques, so fill stays near-linear and the simple variant suffices.
/// Ties break on the smaller node index, which keeps the order deterministic.
pub fn min_degree_order(mut adj: Vec<Vec<usize>>) -> Vec<usize> {
    let n = adj.len();
    let mut eliminated = vec![false; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n).map(|v| Reverse((adj[v].len(), v))).collect();
    let mut order = Vec::with_capacity(n);
    let mut merged = Vec::new();

    while let Some(Reverse((deg, v))) = heap.pop() {
        if eliminated[v] || deg != adj[v].len() {
            continue;
        }
        eliminated[v] = true;
        order.push(v);
        let nb = std::mem::take(&mut adj[v]);
        for &u in &nb {
            merged.clear();
            let au = &adj[u];
            let (mut a, mut b) = (0, 0);
            while a < au.len() || b < nb.len() {
                let next = match (au.get(a), nb.get(b)) {
                    (Some(&x), Some(&y)) if x == y => {
                        a += 1;
                        b += 1;
                        x
                    }
                    (Some(&x), Some(&y)) if x < y => {
                        a += 1;
                        x
                    }
                    (Some(_), Some(&y)) => {
                        b += 1;
                        y
                    }
                    (Some(&x), None) => {
                        a += 1;
                        x
                    }
                    (None, Some(&y)) => {
                        b += 1;
                        y
                    }
                    (None, None) => unreachable!(),
                };
                if next != u && next != v {
                    merged.push(next);
                }
            }
            std::mem::swap(&mut adj[u], &mut merged);
            heap.push(Reverse((adj[u].len(), u)));
        }
    }
    debug_assert_eq!(order.len(), n);
    order
}

/// Row-to-column matching of a rectangular sparse pattern, for use as 2×2
/// pivot pairs. `entries` are `(row, col, magnitude)`; each row greedily
/// takes its largest free entry, then unmatched rows are retried along
/// augmenting paths. Entries below `rel_tol` times their row maximum are
/// ignored.
pub fn weighted_matching(n_rows: usize, n_cols: usize, entries: &[(usize, usize, f64)], rel_tol: f64) -> Vec<Option<usize>> {
    let mut row_adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rows];
    for &(r, c, v) in entries {
        row_adj[r].push((c, v.abs()));
    }
    for adj in &mut row_adj {
        let max = adj.iter().map(|e| e.1).fold(0.0, f64::max);
        adj.retain(|e| e.1 > 0.0 && e.1 >= rel_tol * max);
        adj.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        adj.dedup_by_key(|e| e.0);
    }
    let mut row_to = vec![None; n_rows];
    let mut col_to: Vec<Option<usize>> = vec![None; n_cols];
    for r in 0..n_rows {
        if let Some(&(c, _)) = row_adj[r].iter().find(|e| col_to[e.0].is_none()) {
            row_to[r] = Some(c);
            col_to[c] = Some(r);
        }
    }
    // breadth-first augmenting paths for the rows left over
    let mut visited = vec![usize::MAX; n_cols];
    let mut parent_row = vec![0usize; n_cols];
    for r0 in 0..n_rows {
        if row_to[r0].is_some() {
            continue;
        }
        let mut queue = std::collections::VecDeque::from([r0]);
        let mut end = None;
        'search: while let Some(r) = queue.pop_front() {
            for &(c, _) in &row_adj[r] {
                if visited[c] == r0 {
                    continue;
                }
                visited[c] = r0;
                parent_row[c] = r;
                match col_to[c] {
                    None => {
                        end = Some(c);
                        break 'search;
                    }
                    Some(next) => queue.push_back(next),
                }
            }
        }
        let mut c = match end {
            Some(c) => c,
            None => continue,
        };
        loop {
            let r = parent_row[c];
            let prev = row_to[r];
            row_to[r] = Some(c);
            col_to[c] = Some(r);
            match prev {
                Some(pc) if r != r0 => c = pc,
                _ => break,
            }
        }
    }
    row_to
}

/// Minimum-degree order in which each `(a, b)` pair is eliminated as one
/// block. Returns the column order and, per step, the preferred pivot row:
/// the partner for paired nodes, the node itself otherwise.
pub fn paired_min_degree_order(adj: &[Vec<usize>], pairs: &[(usize, usize)]) -> (Vec<usize>, Vec<usize>) {
    let n = adj.len();
    let mut group = vec![usize::MAX; n];
    let mut members: Vec<(usize, Option<usize>)> = Vec::with_capacity(n - pairs.len());
    for &(a, b) in pairs {
        group[a] = members.len();
        group[b] = members.len();
        members.push((a, Some(b)));
    }
    for v in 0..n {
        if group[v] == usize::MAX {
            group[v] = members.len();
            members.push((v, None));
        }
    }
    let mut cadj: Vec<Vec<usize>> = vec![Vec::new(); members.len()];
    for (v, nb) in adj.iter().enumerate() {
        let g = group[v];
        cadj[g].extend(nb.iter().map(|&u| group[u]).filter(|&h| h != g));
    }
    for a in &mut cadj {
        a.sort_unstable();
        a.dedup();
    }
    let mut order = Vec::with_capacity(n);
    let mut pivot_row = Vec::with_capacity(n);
    for g in min_degree_order(cadj) {
        match members[g] {
            (a, Some(b)) => {
                order.extend([a, b]);
                pivot_row.extend([b, a]);
            }
            (a, None) => {
                order.push(a);
                pivot_row.push(a);
            }
        }
    }
    (order, pivot_row)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Vec<Vec<usize>> {
        (0..n)
            .map(|i| {
                let mut a = Vec::new();
                if i > 0 {
                    a.push(i - 1);
                }
                if i + 1 < n {
                    a.push(i + 1);
                }
                a
            })
            .collect()
    }

    #[test]
    fn order_is_a_permutation() {
        let order = min_degree_order(path(9));
        let mut seen = order.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn star_center_goes_last() {
        // node 0 connected to 1..=5
        let mut adj = vec![(1..=5).collect::<Vec<_>>()];
        for _ in 1..=5 {
            adj.push(vec![0]);
        }
        let order = min_degree_order(adj);
        assert_eq!(order[0], 1);
        assert!(order.iter().position(|&v| v == 0).unwrap() >= 4);
    }

    #[test]
    fn matching_prefers_large_entries_and_augments() {
        // row 0 can only use col 0; row 1 prefers col 0 but must move to col 1
        let m = weighted_matching(2, 2, &[(1, 0, 5.0), (1, 1, 1.0), (0, 0, 1.0)], 1e-3);
        assert_eq!(m, vec![Some(0), Some(1)]);
    }

    #[test]
    fn pairs_stay_adjacent() {
        let (order, rows) = paired_min_degree_order(&path(6), &[(1, 4)]);
        let k = order.iter().position(|&v| v == 1).unwrap();
        assert_eq!(order[k + 1], 4);
        assert_eq!((rows[k], rows[k + 1]), (4, 1));
        let mut seen = order.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..6).collect::<Vec<_>>());
    }
}
