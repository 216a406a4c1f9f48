//! Directed communication graphs.
//!
//! Edge `(j, i)` means agent `j` can send to agent `i`. Each agent keeps its
//! in-neighbor list and its out-degree `d_i`, which is all the local
//! information the distributed methods use.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::io::BufRead;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    n: usize,
    in_neighbors: Vec<Vec<usize>>,
    out_neighbors: Vec<Vec<usize>>,
}

/// Structural and spectral facts derived from a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphFacts {
    pub n: usize,
    pub edges: usize,
    pub d_max: usize,
    /// Longest shortest directed path in hops; `None` when some pair is unreachable.
    pub phi: Option<usize>,
    /// Second-largest eigenvalue magnitude of `P = (I + A D^-1) / 2`.
    /// Set to 1 when `P` is undefined (some agent cannot send).
    pub lambda2: f64,
    pub strongly_connected: bool,
}

impl DirectedGraph {
    /// Builds a graph from `(src, dst)` pairs. Rejects self-loops, duplicates
    /// and out-of-range ids.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidTopology("graph needs at least one agent".into()));
        }
        let mut in_neighbors = vec![Vec::new(); n];
        let mut out_neighbors = vec![Vec::new(); n];
        for &(src, dst) in edges {
            if src >= n || dst >= n {
                return Err(Error::InvalidTopology(format!(
                    "edge ({src}, {dst}) references an agent outside [0, {n})"
                )));
            }
            if src == dst {
                return Err(Error::InvalidTopology(format!("self-loop at agent {src}")));
            }
            if out_neighbors[src].contains(&dst) {
                return Err(Error::InvalidTopology(format!("duplicate edge ({src}, {dst})")));
            }
            out_neighbors[src].push(dst);
            in_neighbors[dst].push(src);
        }
        for list in in_neighbors.iter_mut().chain(out_neighbors.iter_mut()) {
            list.sort_unstable();
        }
        Ok(Self {
            n,
            in_neighbors,
            out_neighbors,
        })
    }

    /// Directed ring `i -> i+1 (mod n)` with every other ordered pair added
    /// independently with probability `p`.
    pub fn ring_with_random_chords(n: usize, p: f64, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidTopology(format!("ring needs n >= 2, got {n}")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidInput(format!("chord probability {p} outside [0, 1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::with_capacity(n + (p * (n * n) as f64) as usize);
        for i in 0..n {
            edges.push((i, (i + 1) % n));
        }
        for i in 0..n {
            for j in 0..n {
                if i == j || j == (i + 1) % n {
                    continue;
                }
                // one draw per candidate pair keeps the edge set a pure function of the seed
                let u: f64 = rng.random();
                if u < p {
                    edges.push((i, j));
                }
            }
        }
        Self::from_edges(n, &edges)
    }

    pub fn cycle(n: usize) -> Result<Self> {
        Self::ring_with_random_chords(n, 0.0, 0)
    }

    /// The single-agent graph with no edges.
    pub fn singleton() -> Self {
        Self {
            n: 1,
            in_neighbors: vec![Vec::new()],
            out_neighbors: vec![Vec::new()],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.in_neighbors[i]
    }

    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out_neighbors[i]
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out_neighbors[i].len()
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.in_neighbors[i].len()
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        self.out_neighbors.iter().map(Vec::len).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.out_neighbors.iter().map(Vec::len).sum()
    }

    /// All edges as `(src, dst)`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.out_neighbors
            .iter()
            .enumerate()
            .flat_map(|(src, outs)| outs.iter().map(move |&dst| (src, dst)))
            .collect()
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.out_neighbors[src].binary_search(&dst).is_ok()
    }

    /// Hop distances from `source` along edge directions; `None` if unreachable.
    pub fn bfs_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &v in &self.out_neighbors[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Forward and backward reachability from agent 0.
    pub fn is_strongly_connected(&self) -> bool {
        let forward = self.bfs_distances(0);
        if forward.iter().any(Option::is_none) {
            return false;
        }
        let mut seen = vec![false; self.n];
        seen[0] = true;
        let mut stack = vec![0];
        while let Some(u) = stack.pop() {
            for &v in &self.in_neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Longest shortest path over all ordered pairs, via BFS from every agent.
    pub fn diameter(&self) -> Option<usize> {
        let mut best = 0;
        for s in 0..self.n {
            for d in self.bfs_distances(s) {
                best = best.max(d?);
            }
        }
        Some(best)
    }

    /// Adjacency matrix with `A[i][j] = 1` iff `(j, i)` is an edge.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for (i, ins) in self.in_neighbors.iter().enumerate() {
            for &j in ins {
                a[(i, j)] = 1.0;
            }
        }
        a
    }

    /// `P = (I + A D^-1) / 2`, column-stochastic.
    pub fn build_p(&self) -> Result<DMatrix<f64>> {
        if self.n == 1 {
            return Ok(DMatrix::identity(1, 1));
        }
        let degrees = self.out_degrees();
        if let Some(agent) = degrees.iter().position(|&d| d == 0) {
            return Err(Error::ZeroOutDegree { agent });
        }
        let mut p = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            p[(i, i)] = 0.5;
            for &j in &self.in_neighbors[i] {
                p[(i, j)] = 0.5 / degrees[j] as f64;
            }
        }
        Ok(p)
    }

    pub fn analyze(&self) -> GraphFacts {
        let strongly_connected = self.n == 1 || self.is_strongly_connected();
        let phi = if strongly_connected { self.diameter() } else { None };
        let lambda2 = self
            .build_p()
            .map(|p| second_eigenvalue_magnitude(&p))
            .unwrap_or(1.0);
        GraphFacts {
            n: self.n,
            edges: self.edge_count(),
            d_max: self.out_degrees().into_iter().max().unwrap_or(0),
            phi,
            lambda2,
            strongly_connected,
        }
    }

    /// Edge-list text: a header `n <count>` followed by one `src dst` per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("n {}\n", self.n);
        for (src, dst) in self.edges() {
            let _ = writeln!(out, "{src} {dst}");
        }
        out
    }

    /// Parses the edge-list format. Blank lines and `#` comments are skipped.
    pub fn read_edge_list(reader: impl BufRead) -> Result<Self> {
        let mut n = None;
        let mut edges = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| Error::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (a, b) = (parts.next(), parts.next());
            if parts.next().is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "expected two fields".into(),
                });
            }
            let parse = |s: Option<&str>| -> Result<usize> {
                s.ok_or_else(|| Error::Parse {
                    line: line_no,
                    msg: "expected two fields".into(),
                })?
                .parse()
                .map_err(|e| Error::Parse {
                    line: line_no,
                    msg: format!("bad integer: {e}"),
                })
            };
            match n {
                None => {
                    if a != Some("n") {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: "first line must be `n <count>`".into(),
                        });
                    }
                    n = Some(parse(b)?);
                }
                Some(_) => edges.push((parse(a)?, parse(b)?)),
            }
        }
        let n = n.ok_or(Error::Parse {
            line: 0,
            msg: "missing `n <count>` header".into(),
        })?;
        Self::from_edges(n, &edges)
    }
}

impl GraphFacts {
    /// The degree-based initialization bound `d_max^-(2 phi + 1)` on the
    /// balancing weights. A single agent has nothing to balance and gets 1.
    pub fn initial_weight_bound(&self) -> Result<f64> {
        if !self.strongly_connected {
            return Err(Error::InvalidTopology("graph is not strongly connected".into()));
        }
        if self.n == 1 {
            return Ok(1.0);
        }
        let phi = self.phi.expect("strongly connected graphs have a diameter");
        let exponent = -(2.0 * phi as f64 + 1.0);
        Ok((self.d_max as f64).powf(exponent))
    }
}

/// Second-largest eigenvalue magnitude of a square matrix. Eigenvalues come
/// from a real Schur decomposition (Hessenberg reduction plus shifted QR).
pub fn second_eigenvalue_magnitude(m: &DMatrix<f64>) -> f64 {
    if m.nrows() < 2 {
        return 0.0;
    }
    let mut mags: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    mags[1]
}
