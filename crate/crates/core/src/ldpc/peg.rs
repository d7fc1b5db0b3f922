//! Progressive edge-growth construction of column-weight-two codes.
//!
//! With every variable node of degree two, the Tanner graph is a multigraph
//! on the check nodes: each variable is an edge between its two checks, and
//! a cycle of length `2L` in the Tanner graph is a cycle of length `L` among
//! checks. Each variable's first edge goes to the least-loaded check; the
//! second goes to the check farthest from the first (unreachable counts as
//! infinitely far), breaking ties by lowest degree and then lowest index.
//! Check capacities keep every check degree within one of the mean.

use std::collections::VecDeque;

use rand::Rng;

use super::{LdpcError, ParityCheckMatrix};
use crate::crypto::rng::labeled_rng;
use crate::fieldmath::GaloisField;

const UNREACHED: u32 = u32::MAX;

struct Sockets {
    deg: Vec<u32>,
    floor: u32,
    /// Checks still allowed to reach `floor + 1`.
    ceil_slots: usize,
}

impl Sockets {
    fn open(&self, c: usize) -> bool {
        self.deg[c] < self.floor || (self.deg[c] == self.floor && self.ceil_slots > 0)
    }

    fn place(&mut self, c: usize) {
        if self.deg[c] == self.floor {
            self.ceil_slots -= 1;
        }
        self.deg[c] += 1;
    }
}

/// Number of checks for block length `n` at design rate `rate`.
pub(crate) fn check_count(n: usize, rate: f64) -> usize {
    (n as f64 * (1.0 - rate)).round() as usize
}

/// Builds a check-concentrated, column-weight-two code with random nonzero
/// edge labels drawn from `seed`.
pub fn peg_construct(
    n: usize,
    rate: f64,
    field: &GaloisField,
    seed: u64,
) -> Result<ParityCheckMatrix, LdpcError> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(LdpcError::Infeasible(format!("rate {rate} outside (0, 1)")));
    }
    let m = check_count(n, rate);
    if m < 2 {
        return Err(LdpcError::Infeasible(format!(
            "n = {n} at rate {rate} gives {m} checks; column weight two needs at least 2"
        )));
    }
    let edges = 2 * n;
    let mut sockets = Sockets {
        deg: vec![0; m],
        floor: (edges / m) as u32,
        ceil_slots: edges % m,
    };
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); m];
    let mut cols: Vec<[u32; 2]> = Vec::with_capacity(n);
    let mut dist = vec![UNREACHED; m];
    let mut touched: Vec<u32> = Vec::new();
    let mut queue = VecDeque::new();

    for v in 0..n {
        let c1 = (0..m)
            .filter(|&c| sockets.open(c))
            .min_by_key(|&c| (sockets.deg[c], c))
            .ok_or_else(|| LdpcError::Infeasible(format!("no open check for variable {v}")))?;
        sockets.place(c1);

        // Breadth-first search over the check multigraph from c1.
        for &c in &touched {
            dist[c as usize] = UNREACHED;
        }
        touched.clear();
        dist[c1] = 0;
        touched.push(c1 as u32);
        queue.push_back(c1 as u32);
        while let Some(c) = queue.pop_front() {
            let dc = dist[c as usize];
            for &nb in &adj[c as usize] {
                if dist[nb as usize] == UNREACHED {
                    dist[nb as usize] = dc + 1;
                    touched.push(nb);
                    queue.push_back(nb);
                }
            }
        }

        let c2 = (0..m)
            .filter(|&c| c != c1 && sockets.open(c))
            .min_by_key(|&c| (std::cmp::Reverse(dist[c]), sockets.deg[c], c))
            .ok_or_else(|| {
                LdpcError::Infeasible(format!("variable {v} has no second check available"))
            })?;
        sockets.place(c2);
        adj[c1].push(c2 as u32);
        adj[c2].push(c1 as u32);
        cols.push([c1.min(c2) as u32, c1.max(c2) as u32]);
    }

    let mut rng = labeled_rng(seed, "ldpc/edge-labels");
    let q = field.order() as u16;
    let mut rows: Vec<Vec<(u32, u8)>> = vec![Vec::new(); m];
    for (v, pair) in cols.iter().enumerate() {
        for &c in pair {
            let h = rng.random_range(1..q) as u8;
            rows[c as usize].push((v as u32, h));
        }
    }
    ParityCheckMatrix::from_rows(field.clone(), n, rows, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Girth of the Tanner graph by BFS from every variable node.
    fn tanner_girth(h: &ParityCheckMatrix) -> Option<usize> {
        // Nodes: variables 0..n, checks n..n+m.
        let n = h.n();
        let m = h.n_checks();
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n + m];
        let mut eid = 0;
        for j in 0..m {
            for (c, _) in h.row(j) {
                adj[c].push((n + j, eid));
                adj[n + j].push((c, eid));
                eid += 1;
            }
        }
        let mut best: Option<usize> = None;
        for s in 0..n + m {
            let mut dist = vec![usize::MAX; n + m];
            let mut via = vec![usize::MAX; n + m];
            dist[s] = 0;
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for &(w, e) in &adj[u] {
                    if e == via[u] {
                        continue;
                    }
                    if dist[w] == usize::MAX {
                        dist[w] = dist[u] + 1;
                        via[w] = e;
                        q.push_back(w);
                    } else {
                        let len = dist[u] + dist[w] + 1;
                        best = Some(best.map_or(len, |b| b.min(len)));
                    }
                }
            }
        }
        best
    }

    #[test]
    fn tiny_code_shape() {
        let f = GaloisField::new(2).unwrap();
        let h = peg_construct(4, 0.5, &f, 1).unwrap();
        assert_eq!(h.n_checks(), 2);
        assert_eq!(h.row_degree(0), 4);
        assert_eq!(h.row_degree(1), 4);
        h.check_invariants().unwrap();
        assert!(tanner_girth(&h).unwrap() >= 4);
    }

    #[test]
    fn invariants_across_parameters() {
        let f = GaloisField::new(6).unwrap();
        for &n in &[6usize, 50, 101, 997, 2000] {
            for rate in [0.5, 0.61, 0.75, 0.83, 0.9, 0.95] {
                let m = check_count(n, rate);
                if m < 2 {
                    continue;
                }
                let h = peg_construct(n, rate, &f, 3).unwrap();
                assert_eq!(h.n_checks(), m);
                h.check_invariants().unwrap_or_else(|e| panic!("n={n} rate={rate}: {e}"));
            }
        }
    }

    #[test]
    fn girth_improves_on_sparse_codes() {
        let f = GaloisField::new(4).unwrap();
        let h = peg_construct(400, 0.5, &f, 2).unwrap();
        // Check graph with 200 nodes and 400 edges: PEG should avoid short cycles.
        assert!(tanner_girth(&h).unwrap() >= 12, "girth {:?}", tanner_girth(&h));
    }

    #[test]
    fn deterministic_for_seed() {
        let f = GaloisField::new(5).unwrap();
        let a = peg_construct(500, 0.8, &f, 77).unwrap();
        let b = peg_construct(500, 0.8, &f, 77).unwrap();
        let c = peg_construct(500, 0.8, &f, 78).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn infeasible_parameters() {
        let f = GaloisField::new(5).unwrap();
        assert!(peg_construct(10, 0.95, &f, 0).is_err());
        assert!(peg_construct(10, 1.0, &f, 0).is_err());
        assert!(peg_construct(10, 0.0, &f, 0).is_err());
    }

    #[test]
    fn large_block_has_expected_checks() {
        let f = GaloisField::new(8).unwrap();
        let h = peg_construct(10_000, 0.5, &f, 5).unwrap();
        assert_eq!(h.n_checks(), 5_000);
        h.check_invariants().unwrap();
    }
}
