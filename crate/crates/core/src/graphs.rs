//! Graph families and sequential oracles.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec::BitString;
use crate::engine::{Graph, GraphError, NodeId};

const ER_RETRIES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    Path,
    Cycle,
    Star,
    Complete,
    Grid,
    RandomTree,
    ErConnected,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Path => "path",
            Family::Cycle => "cycle",
            Family::Star => "star",
            Family::Complete => "complete",
            Family::Grid => "grid",
            Family::RandomTree => "tree",
            Family::ErConnected => "er",
        }
    }

    pub const ALL: [Family; 7] = [
        Family::Path,
        Family::Cycle,
        Family::Star,
        Family::Complete,
        Family::Grid,
        Family::RandomTree,
        Family::ErConnected,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpec {
    pub family: Family,
    pub n: usize,
    pub seed: u64,
    /// Edge probability, only meaningful for `ErConnected`.
    pub edge_probability: f64,
    /// Label range; ids are drawn from `0..label_range`. Defaults to `n`.
    pub label_range: Option<u64>,
}

impl GraphSpec {
    pub fn new(family: Family, n: usize, seed: u64) -> Self {
        Self {
            family,
            n,
            seed,
            edge_probability: 0.2,
            label_range: None,
        }
    }

    pub fn er(n: usize, p: f64, seed: u64) -> Self {
        Self {
            edge_probability: p,
            ..Self::new(Family::ErConnected, n, seed)
        }
    }

    pub fn with_label_range(mut self, l: u64) -> Self {
        self.label_range = Some(l);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerateError {
    #[error("bad graph spec {spec:?}: {reason}")]
    Spec { spec: String, reason: String },
    #[error("no connected G(n={n}, p={p}) sample after {ER_RETRIES} attempts")]
    RetriesExhausted { n: usize, p: f64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:n={}", self.family.name(), self.n)?;
        if self.family == Family::ErConnected {
            write!(f, ",p={}", self.edge_probability)?;
        }
        write!(f, ",seed={}", self.seed)?;
        if let Some(l) = self.label_range {
            write!(f, ",l={l}")?;
        }
        Ok(())
    }
}

impl FromStr for GraphSpec {
    type Err = GenerateError;

    /// Parses `family:key=value,...`, e.g. `er:n=25,p=0.2,seed=7`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| GenerateError::Spec {
            spec: s.to_string(),
            reason: reason.to_string(),
        };
        let (family, rest) = s.split_once(':').unwrap_or((s, ""));
        let family = match family.trim() {
            "path" => Family::Path,
            "cycle" => Family::Cycle,
            "star" => Family::Star,
            "complete" => Family::Complete,
            "grid" => Family::Grid,
            "tree" | "randomTree" => Family::RandomTree,
            "er" | "erConnected" => Family::ErConnected,
            _ => return Err(err("unknown family")),
        };
        let mut spec = GraphSpec::new(family, 0, 0);
        let mut have_n = false;
        for kv in rest.split(',').filter(|kv| !kv.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| err("expected key=value"))?;
            let v = v.trim();
            match k.trim() {
                "n" => {
                    spec.n = v.parse().map_err(|_| err("bad n"))?;
                    have_n = true;
                }
                "seed" => spec.seed = v.parse().map_err(|_| err("bad seed"))?,
                "p" => spec.edge_probability = v.parse().map_err(|_| err("bad p"))?,
                "l" => spec.label_range = Some(v.parse().map_err(|_| err("bad l"))?),
                _ => return Err(err("unknown key")),
            }
        }
        if !have_n || spec.n == 0 {
            return Err(err("n must be given and positive"));
        }
        if !(0.0..=1.0).contains(&spec.edge_probability) {
            return Err(err("p must be in [0, 1]"));
        }
        if spec.label_range.is_some_and(|l| l < spec.n as u64) {
            return Err(err("label range smaller than n"));
        }
        Ok(spec)
    }
}

/// Builds the graph described by `spec`. Deterministic given the seed.
pub fn generate(spec: &GraphSpec) -> Result<Graph, GenerateError> {
    let n = spec.n;
    if n == 0 {
        return Err(GenerateError::Spec {
            spec: spec.to_string(),
            reason: "n must be positive".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let edges: Vec<(usize, usize)> = match spec.family {
        Family::Path => (1..n).map(|i| (i - 1, i)).collect(),
        Family::Cycle => {
            let mut e: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
            if n >= 3 {
                e.push((n - 1, 0));
            }
            e
        }
        Family::Star => (1..n).map(|i| (0, i)).collect(),
        Family::Complete => (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect(),
        Family::Grid => {
            let w = (n as f64).sqrt().ceil() as usize;
            let mut e = Vec::new();
            for k in 0..n {
                if (k + 1) % w != 0 && k + 1 < n {
                    e.push((k, k + 1));
                }
                if k + w < n {
                    e.push((k, k + w));
                }
            }
            e
        }
        Family::RandomTree => (1..n).map(|i| (rng.gen_range(0..i), i)).collect(),
        Family::ErConnected => {
            let p = spec.edge_probability;
            let mut found = None;
            for _ in 0..ER_RETRIES {
                let e: Vec<_> = (0..n)
                    .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                    .filter(|_| rng.gen_bool(p))
                    .collect();
                if index_connected(n, &e) {
                    found = Some(e);
                    break;
                }
            }
            found.ok_or(GenerateError::RetriesExhausted { n, p })?
        }
    };
    let range = spec.label_range.unwrap_or(n as u64);
    let labels = assign_labels(n, range, &mut rng);
    let ids: Vec<NodeId> = labels.iter().copied().map(NodeId).collect();
    let edges: Vec<_> = edges.iter().map(|&(a, b)| (ids[a], ids[b])).collect();
    Ok(Graph::with_label_range(ids, &edges, range)?)
}

fn assign_labels(n: usize, range: u64, rng: &mut ChaCha8Rng) -> Vec<u64> {
    if range == n as u64 {
        let mut v: Vec<u64> = (0..range).collect();
        v.shuffle(rng);
        return v;
    }
    let mut chosen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = rng.gen_range(0..range);
        if chosen.insert(x) {
            out.push(x);
        }
    }
    out
}

fn index_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut components = n;
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            components -= 1;
        }
    }
    components == 1
}

/// Sequential DFS from `root` that always descends into the highest-id
/// unvisited neighbour. Returns the visit numbering `1..=n`.
pub fn reference_dfs(graph: &Graph, root: NodeId) -> BTreeMap<NodeId, u64> {
    let mut number = BTreeMap::new();
    let mut stack = vec![root];
    number.insert(root, 1);
    while let Some(&x) = stack.last() {
        match graph.neighbors(x).filter(|v| !number.contains_key(v)).max() {
            Some(y) => {
                number.insert(y, number.len() as u64 + 1);
                stack.push(y);
            }
            None => {
                stack.pop();
            }
        }
    }
    number
}

/// Bitwise OR of `msgs`, each right-padded with zeros to `p` bits.
pub fn or_oracle<'a>(msgs: impl IntoIterator<Item = &'a BitString>, p: usize) -> BitString {
    let mut out = BitString::zeros(p);
    for m in msgs {
        for (i, &b) in m.bits().iter().enumerate() {
            if b {
                out.set(i, true);
            }
        }
    }
    out
}

/// Distinct `len`-bit prefixes of `strings`, in lexicographic order.
pub fn prefix_oracle<'a>(
    strings: impl IntoIterator<Item = &'a BitString>,
    len: usize,
) -> Vec<BitString> {
    strings
        .into_iter()
        .map(|s| s.prefix(len))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// All-pairs hop distances computed by repeated boolean matrix products:
/// `dist(u, v)` is the smallest `k` with `(A + I)^k[u][v] = 1`.
pub fn reachability_distances(graph: &Graph) -> BTreeMap<(NodeId, NodeId), u64> {
    let ids: Vec<NodeId> = graph.sorted_ids().collect();
    let n = ids.len();
    let pos: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut adj = vec![vec![false; n]; n];
    for (a, b) in graph.edges() {
        adj[pos[&a]][pos[&b]] = true;
        adj[pos[&b]][pos[&a]] = true;
    }
    for (i, row) in adj.iter_mut().enumerate() {
        row[i] = true;
    }
    let mut reach: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i == j).collect()).collect();
    let mut dist = BTreeMap::new();
    for k in 0..=n as u64 {
        for i in 0..n {
            for j in 0..n {
                if reach[i][j] {
                    dist.entry((ids[i], ids[j])).or_insert(k);
                }
            }
        }
        let next: Vec<Vec<bool>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).any(|m| reach[i][m] && adj[m][j]))
                    .collect()
            })
            .collect();
        if next == reach {
            break;
        }
        reach = next;
    }
    dist
}
