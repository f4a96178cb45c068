//! Adjacency matrices: the similarity-derived temporal graph, the spatial
//! graph read from an edge list, and the block-structured fusion graph that
//! ties `K` consecutive time steps together.

use std::fmt;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::DistanceMatrix;

/// Dense square adjacency with nonnegative entries.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    size: usize,
    entries: Vec<f64>,
    binary: bool,
}

impl AdjacencyMatrix {
    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            entries: vec![0.0; size * size],
            binary: true,
        }
    }

    pub fn identity(size: usize) -> Self {
        let mut a = Self::zeros(size);
        for i in 0..size {
            a.entries[i * size + i] = 1.0;
        }
        a
    }

    /// Wraps row-major entries; all must be finite and nonnegative.
    pub fn from_dense(size: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != size * size {
            return Err(Error::Usage(format!(
                "expected {} entries for a {size}x{size} matrix, got {}",
                size * size,
                entries.len()
            )));
        }
        if let Some(pos) = entries.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Usage(format!(
                "adjacency entry {pos} is negative or non-finite"
            )));
        }
        let binary = entries.iter().all(|&v| v == 0.0 || v == 1.0);
        Ok(Self {
            size,
            entries,
            binary,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.size..(i + 1) * self.size]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.size + j] = v;
        if v != 0.0 && v != 1.0 {
            self.binary = false;
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.size).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn has_zero_diagonal(&self) -> bool {
        (0..self.size).all(|i| self.get(i, i) == 0.0)
    }

    pub fn nonzero_count(&self) -> usize {
        self.entries.iter().filter(|&&v| v != 0.0).count()
    }

    /// Copy of the `n x n` block at block coordinates `(p, q)`.
    pub fn block(&self, p: usize, q: usize, n: usize) -> Result<AdjacencyMatrix> {
        if n == 0 || !self.size.is_multiple_of(n) || (p + 1) * n > self.size || (q + 1) * n > self.size {
            return Err(Error::Usage(format!(
                "block ({p}, {q}) of size {n} outside a {}x{} matrix",
                self.size, self.size
            )));
        }
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            let row = &self.row(p * n + i)[q * n..(q + 1) * n];
            entries.extend_from_slice(row);
        }
        AdjacencyMatrix::from_dense(n, entries)
    }

    /// Divides each row by its sum; all-zero rows are left as zeros.
    pub fn row_normalized(&self) -> AdjacencyMatrix {
        let mut entries = self.entries.clone();
        for row in entries.chunks_mut(self.size.max(1)) {
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                row.iter_mut().for_each(|v| *v /= sum);
            }
        }
        let binary = entries.iter().all(|&v| v == 0.0 || v == 1.0);
        AdjacencyMatrix {
            size: self.size,
            entries,
            binary,
        }
    }

    /// Writes every nonzero entry as `from,to,cost` with a header line.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "from,to,cost")?;
        for i in 0..self.size {
            for j in 0..self.size {
                let v = self.get(i, j);
                if v != 0.0 {
                    writeln!(w, "{i},{j},{v}")?;
                }
            }
        }
        Ok(())
    }

    /// Row-major comma-separated dump of the dense matrix.
    pub fn write_dense<W: Write>(&self, mut w: W) -> io::Result<()> {
        for i in 0..self.size {
            let line: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Nonzero count divided by `size^2`.
pub fn sparsity(a: &AdjacencyMatrix) -> f64 {
    if a.size == 0 {
        return 0.0;
    }
    a.nonzero_count() as f64 / (a.size * a.size) as f64
}

/// Target nonzero ratio of the temporal graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityTarget {
    alpha: f64,
}

impl SparsityTarget {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Usage(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Neighbours kept per node: `max(1, round(alpha * n))`.
    pub fn k_per_node(&self, n: usize) -> usize {
        ((self.alpha * n as f64).round() as usize).max(1)
    }
}

/// Links every node to its `k` nearest other nodes by DTW distance, then
/// symmetrizes. Equal distances resolve to the lower node index.
pub fn temporal_graph(dist: &DistanceMatrix, target: SparsityTarget) -> Result<AdjacencyMatrix> {
    let n = dist.size();
    let k = target.k_per_node(n);
    if k >= n {
        return Err(Error::Usage(format!(
            "k_per_node = {k} must be smaller than the node count {n}"
        )));
    }
    let mut graph = AdjacencyMatrix::zeros(n);
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        let row = dist.row(i);
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        for &j in &order[..k] {
            graph.set(i, j, 1.0);
            graph.set(j, i, 1.0);
        }
    }
    Ok(graph)
}

/// Parses a `from,to[,cost]` edge list into a symmetric `n x n` matrix.
///
/// Directed rows are symmetrized with `max(A, A^T)`; repeated rows keep the
/// largest cost. Self-loops are dropped.
pub fn parse_edge_list(text: &str, n: usize, directed: bool, binarize: bool) -> Result<AdjacencyMatrix> {
    let mut graph = AdjacencyMatrix::zeros(n);
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if idx == 0 && fields[0].starts_with(|c: char| c.is_alphabetic()) {
            continue;
        }
        if fields.len() < 2 || fields.len() > 3 {
            return Err(Error::ingestion_line(
                line_no,
                format!("expected `from,to[,cost]`, got {} fields", fields.len()),
            ));
        }
        let node = |s: &str| -> Result<usize> {
            let id: usize = s
                .parse()
                .map_err(|_| Error::ingestion_line(line_no, format!("invalid node id `{s}`")))?;
            if id >= n {
                return Err(Error::ingestion_line(
                    line_no,
                    format!("node id {id} out of range for {n} nodes"),
                ));
            }
            Ok(id)
        };
        let from = node(fields[0])?;
        let to = node(fields[1])?;
        let cost = match fields.get(2) {
            Some(c) => {
                let v: f64 = c
                    .parse()
                    .map_err(|_| Error::ingestion_line(line_no, format!("invalid cost `{c}`")))?;
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::ingestion_line(line_no, format!("invalid cost `{c}`")));
                }
                v
            }
            None => 1.0,
        };
        if from == to {
            continue;
        }
        let value = if binarize {
            if cost > 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            cost
        };
        let forward = graph.get(from, to).max(value);
        graph.set(from, to, forward);
        if !directed {
            let backward = graph.get(to, from).max(value);
            graph.set(to, from, backward);
        }
    }
    if directed {
        for i in 0..n {
            for j in 0..i {
                let v = graph.get(i, j).max(graph.get(j, i));
                graph.set(i, j, v);
                graph.set(j, i, v);
            }
        }
    }
    Ok(graph)
}

pub fn load_spatial_graph(
    path: impl AsRef<Path>,
    n: usize,
    directed: bool,
    binarize: bool,
) -> Result<AdjacencyMatrix> {
    let text = std::fs::read_to_string(path)?;
    parse_edge_list(&text, n, directed, binarize)
}

/// Content of one `N x N` block of the fusion graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BlockKind {
    /// Spatial graph.
    Sg,
    /// Temporal (similarity) graph.
    Tg,
    /// Identity: the same node at adjacent steps.
    Tc,
    Zero,
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BlockKind::Sg => "SG",
            BlockKind::Tg => "TG",
            BlockKind::Tc => "TC",
            BlockKind::Zero => "ZERO",
        };
        f.write_str(s)
    }
}

/// `K x K` grid describing which graph fills each block of the fusion graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionLayout {
    window: usize,
    blocks: Vec<BlockKind>,
    self_loops: bool,
}

impl FusionLayout {
    /// Validates that the grid is transpose-symmetric and that the first
    /// off-diagonals are temporal-connectivity blocks.
    pub fn new(window: usize, blocks: Vec<BlockKind>, self_loops: bool) -> Result<Self> {
        if window < 2 {
            return Err(Error::Config(format!(
                "window size must be at least 2, got {window}"
            )));
        }
        if blocks.len() != window * window {
            return Err(Error::Config(format!(
                "layout for K = {window} needs {} blocks, got {}",
                window * window,
                blocks.len()
            )));
        }
        for p in 0..window {
            for q in 0..window {
                let kind = blocks[p * window + q];
                if kind != blocks[q * window + p] {
                    return Err(Error::Config(format!(
                        "layout is not symmetric at blocks ({p}, {q})"
                    )));
                }
                if p.abs_diff(q) == 1 && kind != BlockKind::Tc {
                    return Err(Error::Config(format!(
                        "block ({p}, {q}) must be TC, found {kind}"
                    )));
                }
            }
        }
        Ok(Self {
            window,
            blocks,
            self_loops,
        })
    }

    /// Spatial graph on the interior diagonal, temporal graph on the end
    /// diagonal blocks and the two far corners, connectivity next to the
    /// diagonal, self-loops on.
    pub fn default_for(window: usize) -> Result<Self> {
        if window < 2 {
            return Err(Error::Config(format!(
                "window size must be at least 2, got {window}"
            )));
        }
        let last = window - 1;
        let mut blocks = vec![BlockKind::Zero; window * window];
        for p in 0..window {
            for q in 0..window {
                blocks[p * window + q] = if p == q {
                    if window > 2 && (p == 0 || p == last) {
                        BlockKind::Tg
                    } else {
                        BlockKind::Sg
                    }
                } else if p.abs_diff(q) == 1 {
                    BlockKind::Tc
                } else if (p, q) == (0, last) || (p, q) == (last, 0) {
                    BlockKind::Tg
                } else {
                    BlockKind::Zero
                };
            }
        }
        Self::new(window, blocks, true)
    }

    /// Every SG block replaced by TG.
    pub fn temporal_only(&self) -> Self {
        self.map_blocks(|k| if k == BlockKind::Sg { BlockKind::Tg } else { k })
    }

    /// Only connectivity links (and self-loops) remain.
    pub fn connectivity_only(&self) -> Self {
        self.map_blocks(|k| match k {
            BlockKind::Sg | BlockKind::Tg => BlockKind::Zero,
            other => other,
        })
    }

    fn map_blocks(&self, f: impl Fn(BlockKind) -> BlockKind) -> Self {
        Self {
            window: self.window,
            blocks: self.blocks.iter().map(|&k| f(k)).collect(),
            self_loops: self.self_loops,
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn self_loops(&self) -> bool {
        self.self_loops
    }

    pub fn kind(&self, p: usize, q: usize) -> BlockKind {
        self.blocks[p * self.window + q]
    }
}

/// Assembles the `KN x KN` fusion graph. Node `l` at window step `t`
/// occupies row `t * N + l`.
pub fn fusion_graph(
    spatial: &AdjacencyMatrix,
    temporal: &AdjacencyMatrix,
    layout: &FusionLayout,
) -> Result<AdjacencyMatrix> {
    let n = spatial.size();
    if temporal.size() != n {
        return Err(Error::Usage(format!(
            "spatial graph has {n} nodes but temporal graph has {}",
            temporal.size()
        )));
    }
    for (name, g) in [("spatial", spatial), ("temporal", temporal)] {
        if !g.is_binary() || !g.has_zero_diagonal() {
            return Err(Error::Usage(format!(
                "{name} graph must be binary with a zero diagonal"
            )));
        }
    }
    let k = layout.window();
    let size = k * n;
    let mut out = AdjacencyMatrix::zeros(size);
    for p in 0..k {
        for q in 0..k {
            let source = match layout.kind(p, q) {
                BlockKind::Sg => spatial,
                BlockKind::Tg => temporal,
                BlockKind::Tc => {
                    for l in 0..n {
                        out.set(p * n + l, q * n + l, 1.0);
                    }
                    continue;
                }
                BlockKind::Zero => continue,
            };
            for i in 0..n {
                for j in 0..n {
                    let v = source.get(i, j);
                    if v != 0.0 {
                        out.set(p * n + i, q * n + j, v);
                    }
                }
            }
        }
    }
    if layout.self_loops() {
        for i in 0..size {
            out.set(i, i, 1.0);
        }
    }
    Ok(out)
}
