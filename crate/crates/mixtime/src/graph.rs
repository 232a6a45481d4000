//! Graph representation, family generators, and input validation.
//!
//! Nodes are dense labels `0..n-1`. Graphs are simple, undirected and
//! connected; those invariants are established once at construction and
//! everything downstream relies on them.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use std::collections::VecDeque;
use std::fmt;
use thiserror::Error;

/// Retries before giving up on drawing a connected random graph.
const ERDOS_RENYI_MAX_ATTEMPTS: u32 = 256;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("self loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("graph is disconnected: node {0} is unreachable from node 0")]
    Disconnected(usize),
    #[error("node label {label} out of range for n = {n}")]
    LabelOutOfRange { label: usize, n: usize },
    #[error("invalid family parameters: {0}")]
    InvalidParameters(String),
    #[error("graph is bipartite; parts witnessed by a 2-coloring")]
    BipartiteGraph { witness: Vec<bool> },
    #[error("graph has no edges; the walk is undefined")]
    NoEdges,
    #[error("malformed graph text at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// A validated simple connected undirected graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    m: usize,
    adjacency: Vec<Vec<usize>>,
    degrees: Vec<usize>,
}

impl Graph {
    /// Number of nodes.
    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.m
    }

    /// Sorted neighbor list of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.degrees[v]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && v < self.n && self.adjacency[u].binary_search(&v).is_ok()
    }

    /// All edges as `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |u| {
            self.adjacency[u]
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    /// Hop distances from `root` by plain breadth-first search.
    pub fn bfs_distances(&self, root: usize) -> Vec<u64> {
        let mut dist = vec![u64::MAX; self.n];
        dist[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &w in &self.adjacency[u] {
                if dist[w] == u64::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Exact diameter via breadth-first search from every node.
    pub fn diameter(&self) -> u64 {
        (0..self.n)
            .flat_map(|v| self.bfs_distances(v))
            .max()
            .unwrap_or(0)
    }
}

/// Probability vector over the nodes with exact rational entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistVector {
    entries: Vec<BigRational>,
}

impl DistVector {
    /// Wraps entries after checking non-negativity and exact unit total.
    pub fn new(entries: Vec<BigRational>) -> Self {
        let mut total = BigRational::zero();
        for (i, e) in entries.iter().enumerate() {
            assert!(!e.is_negative(), "negative probability at node {i}");
            total += e;
        }
        assert!(total.is_one(), "probabilities must sum to exactly 1");
        DistVector { entries }
    }

    /// Point mass at `node`.
    pub fn indicator(n: usize, node: usize) -> Self {
        let mut entries = vec![BigRational::zero(); n];
        entries[node] = BigRational::one();
        DistVector { entries }
    }

    pub fn entries(&self) -> &[BigRational] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact L1 distance to another vector of the same length.
    pub fn l1_distance(&self, other: &DistVector) -> BigRational {
        assert_eq!(self.entries.len(), other.entries.len());
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| {
                let d = a - b;
                if d.is_negative() {
                    -d
                } else {
                    d
                }
            })
            .sum()
    }
}

/// Named graph families understood by the generator and the CLI.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphFamily {
    Complete(usize),
    Cycle(usize),
    /// Clique on `clique` nodes with a path of `path` extra nodes hung off
    /// one clique node.
    Lollipop { clique: usize, path: usize },
    /// Two cliques of size `clique` joined by a single bridge edge.
    Barbell(usize),
    Hypercube(u32),
    Petersen,
    /// G(n, p) with rational `p`, redrawn until connected.
    ErdosRenyi { n: usize, p: BigRational },
}

impl fmt::Display for GraphFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphFamily::Complete(k) => write!(f, "complete:{k}"),
            GraphFamily::Cycle(k) => write!(f, "cycle:{k}"),
            GraphFamily::Lollipop { clique, path } => write!(f, "lollipop:{clique},{path}"),
            GraphFamily::Barbell(k) => write!(f, "barbell:{k}"),
            GraphFamily::Hypercube(d) => write!(f, "hypercube:{d}"),
            GraphFamily::Petersen => write!(f, "petersen"),
            GraphFamily::ErdosRenyi { n, p } => write!(f, "erdos_renyi:{n},{p}"),
        }
    }
}

/// Validates an edge list and builds the adjacency representation.
pub fn build_graph(edges: &[(usize, usize)], n: usize) -> Result<Graph, GraphError> {
    if n == 0 {
        return Err(GraphError::InvalidParameters(
            "graph needs at least one node".into(),
        ));
    }
    let mut adjacency = vec![Vec::new(); n];
    for &(u, v) in edges {
        if u >= n {
            return Err(GraphError::LabelOutOfRange { label: u, n });
        }
        if v >= n {
            return Err(GraphError::LabelOutOfRange { label: v, n });
        }
        if u == v {
            return Err(GraphError::SelfLoop(u));
        }
        adjacency[u].push(v);
        adjacency[v].push(u);
    }
    for (u, list) in adjacency.iter_mut().enumerate() {
        list.sort_unstable();
        if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
            let (a, b) = (u.min(w[0]), u.max(w[0]));
            return Err(GraphError::DuplicateEdge(a, b));
        }
    }
    let degrees: Vec<usize> = adjacency.iter().map(Vec::len).collect();
    let graph = Graph {
        n,
        m: edges.len(),
        adjacency,
        degrees,
    };
    let dist = graph.bfs_distances(0);
    if let Some(node) = dist.iter().position(|&d| d == u64::MAX) {
        return Err(GraphError::Disconnected(node));
    }
    Ok(graph)
}

/// Deterministically generates a member of `family`; `seed` only feeds the
/// Erdos-Renyi draws.
pub fn generate(family: &GraphFamily, seed: u64) -> Result<Graph, GraphError> {
    match family {
        GraphFamily::Complete(k) => {
            if *k < 2 {
                return Err(GraphError::InvalidParameters(
                    "complete graph needs at least 2 nodes".into(),
                ));
            }
            let mut edges = Vec::new();
            for u in 0..*k {
                for v in (u + 1)..*k {
                    edges.push((u, v));
                }
            }
            build_graph(&edges, *k)
        }
        GraphFamily::Cycle(k) => {
            if *k < 3 {
                return Err(GraphError::InvalidParameters(
                    "cycle length must be at least 3".into(),
                ));
            }
            let edges: Vec<_> = (0..*k).map(|i| (i, (i + 1) % k)).collect();
            build_graph(&edges, *k)
        }
        GraphFamily::Lollipop { clique, path } => {
            if *clique < 2 || *path < 1 {
                return Err(GraphError::InvalidParameters(
                    "lollipop needs clique >= 2 and path >= 1".into(),
                ));
            }
            let n = clique + path;
            let mut edges = Vec::new();
            for u in 0..*clique {
                for v in (u + 1)..*clique {
                    edges.push((u, v));
                }
            }
            // junction is clique node `clique - 1`
            for i in 0..*path {
                edges.push((clique - 1 + i, clique + i));
            }
            build_graph(&edges, n)
        }
        GraphFamily::Barbell(k) => {
            if *k < 2 {
                return Err(GraphError::InvalidParameters(
                    "barbell needs cliques of at least 2 nodes".into(),
                ));
            }
            let n = 2 * k;
            let mut edges = Vec::new();
            for offset in [0, *k] {
                for u in 0..*k {
                    for v in (u + 1)..*k {
                        edges.push((offset + u, offset + v));
                    }
                }
            }
            edges.push((k - 1, *k));
            build_graph(&edges, n)
        }
        GraphFamily::Hypercube(d) => {
            if *d < 1 || *d > 20 {
                return Err(GraphError::InvalidParameters(
                    "hypercube dimension must be in 1..=20".into(),
                ));
            }
            let n = 1usize << d;
            let mut edges = Vec::new();
            for v in 0..n {
                for b in 0..*d {
                    let w = v ^ (1 << b);
                    if v < w {
                        edges.push((v, w));
                    }
                }
            }
            build_graph(&edges, n)
        }
        GraphFamily::Petersen => {
            let mut edges = Vec::new();
            for i in 0..5 {
                edges.push((i, (i + 1) % 5)); // outer cycle
                edges.push((i, i + 5)); // spoke
                edges.push((5 + i, 5 + (i + 2) % 5)); // inner pentagram
            }
            let edges: Vec<_> = edges
                .into_iter()
                .map(|(u, v)| (u.min(v), u.max(v)))
                .collect();
            build_graph(&edges, 10)
        }
        GraphFamily::ErdosRenyi { n, p } => {
            if *n < 2 {
                return Err(GraphError::InvalidParameters(
                    "erdos_renyi needs at least 2 nodes".into(),
                ));
            }
            if !(p > &BigRational::zero() && p <= &BigRational::one()) {
                return Err(GraphError::InvalidParameters(
                    "erdos_renyi probability must be in (0, 1]".into(),
                ));
            }
            let num = p.numer().clone();
            let den = p.denom();
            let den_u64 = u64::try_from(den).map_err(|_| {
                GraphError::InvalidParameters("erdos_renyi denominator too large".into())
            })?;
            let num_u64 = u64::try_from(&num).expect("p <= 1 so numer <= denom");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..ERDOS_RENYI_MAX_ATTEMPTS {
                let mut edges = Vec::new();
                for u in 0..*n {
                    for v in (u + 1)..*n {
                        // edge iff a uniform draw below den lands below num
                        if rng.random_range(0..den_u64) < num_u64 {
                            edges.push((u, v));
                        }
                    }
                }
                match build_graph(&edges, *n) {
                    Ok(g) => return Ok(g),
                    Err(GraphError::Disconnected(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(GraphError::InvalidParameters(format!(
                "no connected erdos_renyi({n}, {p}) draw within {ERDOS_RENYI_MAX_ATTEMPTS} attempts"
            )))
        }
    }
}

/// The stationary distribution of the simple (and lazy) walk: `d(v) / 2m`.
pub fn stationary_distribution(g: &Graph) -> DistVector {
    if g.m == 0 {
        // single stuck node; its point mass is already stationary
        return DistVector::indicator(g.n, 0);
    }
    let two_m = BigInt::from(2 * g.m);
    DistVector::new(
        g.degrees
            .iter()
            .map(|&d| BigRational::new(BigInt::from(d), two_m.clone()))
            .collect(),
    )
}

/// Checks that the walk converges on `g`: the graph must be non-bipartite,
/// unless the lazy flag removes periodicity.
pub fn validate_for_walk(g: &Graph, lazy: bool) -> Result<(), GraphError> {
    if g.m == 0 {
        return Err(GraphError::NoEdges);
    }
    if lazy {
        return Ok(());
    }
    match two_coloring(g) {
        Some(witness) => Err(GraphError::BipartiteGraph { witness }),
        None => Ok(()),
    }
}

/// BFS 2-coloring; returns the side assignment when the graph is bipartite.
fn two_coloring(g: &Graph) -> Option<Vec<bool>> {
    let mut color = vec![None; g.n];
    color[0] = Some(false);
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        let cu = color[u].unwrap();
        for &w in g.neighbors(u) {
            match color[w] {
                None => {
                    color[w] = Some(!cu);
                    queue.push_back(w);
                }
                Some(cw) if cw == cu => return None,
                Some(_) => {}
            }
        }
    }
    Some(color.into_iter().map(|c| c.unwrap()).collect())
}

/// Parses the on-disk graph format: a header line `n m`, then exactly `m`
/// lines `u v` with `u < v`. Anything else is rejected.
pub fn parse_graph_text(text: &str) -> Result<Graph, GraphError> {
    fn field(s: &str, line: usize) -> Result<usize, GraphError> {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(GraphError::Malformed {
                line,
                reason: format!("expected an unsigned decimal, got {s:?}"),
            });
        }
        s.parse().map_err(|_| GraphError::Malformed {
            line,
            reason: format!("number {s:?} too large"),
        })
    }
    fn pair(s: &str, line: usize) -> Result<(usize, usize), GraphError> {
        let mut it = s.split(' ');
        let a = it.next().unwrap_or("");
        let b = it.next().ok_or(GraphError::Malformed {
            line,
            reason: "expected two space-separated fields".into(),
        })?;
        if it.next().is_some() {
            return Err(GraphError::Malformed {
                line,
                reason: "expected exactly two fields".into(),
            });
        }
        Ok((field(a, line)?, field(b, line)?))
    }

    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.contains('\r') {
        return Err(GraphError::Malformed {
            line: 0,
            reason: "carriage returns are not allowed".into(),
        });
    }
    let mut lines = body.split('\n');
    let header = lines.next().ok_or(GraphError::Malformed {
        line: 1,
        reason: "empty input".into(),
    })?;
    let (n, m) = pair(header, 1)?;
    let mut edges = Vec::with_capacity(m);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let (u, v) = pair(line, lineno)?;
        if u >= v {
            return Err(GraphError::Malformed {
                line: lineno,
                reason: format!("edge must satisfy u < v, got {u} {v}"),
            });
        }
        edges.push((u, v));
    }
    if edges.len() != m {
        return Err(GraphError::Malformed {
            line: edges.len() + 2,
            reason: format!("header promised {m} edges, found {}", edges.len()),
        });
    }
    build_graph(&edges, n)
}

/// Renders a graph in the same text format `parse_graph_text` accepts.
pub fn to_graph_text(g: &Graph) -> String {
    let mut out = format!("{} {}\n", g.node_count(), g.edge_count());
    for (u, v) in g.edges() {
        out.push_str(&format!("{u} {v}\n"));
    }
    out
}
