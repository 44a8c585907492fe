//! Linear assignment solvers used by the OSPA family.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Minimum-cost assignment of every row of a dense `m x n` cost matrix
/// (`m <= n`, row-major) to a distinct column. Returns the total cost and
/// the column chosen for each row.
pub fn hungarian(cost: &[f64], m: usize, n: usize) -> (f64, Vec<usize>) {
    assert!(m <= n, "hungarian needs rows <= columns");
    assert_eq!(cost.len(), m * n);
    if m == 0 {
        return (0.0, Vec::new());
    }
    // potentials and matching over 1-based indices, column 0 is a sentinel
    let mut u = vec![0.0; m + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=m {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; m];
    for j in 1..=n {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    let total = assign.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    (total, assign)
}

/// Minimum-cost matching on a sparse bipartite graph where each row may
/// instead take a private saturation option at cost `saturation`.
///
/// `edges[i]` lists `(column, cost)` for row `i`; costs are non-negative.
/// Returns the matched `(row, column, cost)` triples. Rows left on their
/// saturation option are absent.
pub fn sparse_min_cost_matching(edges: &[Vec<(usize, f64)>], n: usize, saturation: f64) -> Vec<(usize, usize, f64)> {
    let m = edges.len();
    // columns 0..n are real, n + i is the saturation column of row i
    let cols = n + m;
    let mut v = vec![0.0f64; cols];
    let mut row_of = vec![usize::MAX; cols];
    let mut col_of = vec![usize::MAX; m];
    let mut dist = vec![f64::INFINITY; cols];
    let mut pred = vec![usize::MAX; cols];
    let mut done = vec![false; cols];
    let mut touched: Vec<usize> = Vec::new();
    let mut scanned: Vec<usize> = Vec::new();
    let mut heap: BinaryHeap<Reverse<(Ord64, usize)>> = BinaryHeap::new();

    let cost_of = |row: usize, col: usize| -> f64 {
        if col >= n {
            saturation
        } else {
            edges[row].iter().find(|(c, _)| *c == col).map(|(_, w)| *w).expect("edge exists")
        }
    };

    for s in 0..m {
        heap.clear();
        let relax = |row: usize,
                     base: f64,
                     v: &[f64],
                     dist: &mut [f64],
                     pred: &mut [usize],
                     done: &[bool],
                     touched: &mut Vec<usize>,
                     heap: &mut BinaryHeap<Reverse<(Ord64, usize)>>| {
            let options = edges[row].iter().copied().chain(std::iter::once((n + row, saturation)));
            for (col, w) in options {
                if done[col] {
                    continue;
                }
                let nd = base + w - v[col];
                if nd < dist[col] {
                    if dist[col].is_infinite() {
                        touched.push(col);
                    }
                    dist[col] = nd;
                    pred[col] = row;
                    heap.push(Reverse((Ord64(nd), col)));
                }
            }
        };
        relax(s, 0.0, &v, &mut dist, &mut pred, &done, &mut touched, &mut heap);
        let (end, total) = loop {
            let Reverse((Ord64(d), col)) = heap.pop().expect("saturation column keeps every row feasible");
            if done[col] || d > dist[col] {
                continue;
            }
            done[col] = true;
            scanned.push(col);
            let r = row_of[col];
            if r == usize::MAX {
                break (col, d);
            }
            // u_r makes r's matched edge tight
            let u_r = cost_of(r, col) - v[col];
            relax(r, d - u_r, &v, &mut dist, &mut pred, &done, &mut touched, &mut heap);
        };
        for &col in &scanned {
            v[col] += dist[col] - total;
        }
        // augment along predecessor rows
        let mut col = end;
        loop {
            let r = pred[col];
            let prev = col_of[r];
            col_of[r] = col;
            row_of[col] = r;
            if r == s {
                break;
            }
            col = prev;
        }
        for &c in &touched {
            dist[c] = f64::INFINITY;
            pred[c] = usize::MAX;
            done[c] = false;
        }
        touched.clear();
        scanned.clear();
    }

    (0..m)
        .filter(|&i| col_of[i] < n)
        .map(|i| (i, col_of[i], cost_of(i, col_of[i])))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ord64(f64);

impl Eq for Ord64 {}

impl PartialOrd for Ord64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ord64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
