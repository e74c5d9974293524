//! Feature-dependency graph, hop-distance receptive fields, and canonical
//! lattice graphs.
//!
//! Only the zero/nonzero pattern of the adjacency matrix matters for kernel
//! masking; entry magnitudes are kept as given but never interpreted. Hop
//! masks always include the diagonal: a node reaches itself at distance 0,
//! whether or not the adjacency carries an explicit self-loop.

use std::collections::VecDeque;
use std::path::Path;

use crate::error::{Error, Result};

/// Undirected feature graph: a square, symmetric, nonnegative adjacency
/// matrix over `f` nodes. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    f: usize,
    adjacency: Vec<f64>, // row-major f x f
}

impl Graph {
    /// Validate rows of an adjacency matrix. Rejects non-square, asymmetric,
    /// and negative input; performs no normalization.
    pub fn validate(rows: &[Vec<f64>]) -> Result<Graph> {
        let f = rows.len();
        if f == 0 {
            return Err(Error::NonSquare { rows: 0, row: 0, cols: 0 });
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != f {
                return Err(Error::NonSquare { rows: f, row: i, cols: row.len() });
            }
        }
        let mut adjacency = Vec::with_capacity(f * f);
        for row in rows {
            adjacency.extend_from_slice(row);
        }
        Self::from_flat(f, adjacency)
    }

    /// Validate a flat row-major adjacency buffer.
    pub fn from_flat(f: usize, adjacency: Vec<f64>) -> Result<Graph> {
        if f == 0 || adjacency.len() != f * f {
            return Err(Error::NonSquare {
                rows: f,
                row: 0,
                cols: if f == 0 { 0 } else { adjacency.len() / f },
            });
        }
        for i in 0..f {
            for j in 0..f {
                let v = adjacency[i * f + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::NegativeEntry { i, j });
                }
                if v != adjacency[j * f + i] {
                    return Err(Error::Asymmetric { i, j });
                }
            }
        }
        Ok(Graph { f, adjacency })
    }

    pub fn f(&self) -> usize {
        self.f
    }

    pub fn adjacency(&self) -> &[f64] {
        &self.adjacency
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i * self.f + j]
    }

    /// 1-hop neighbors of `i` through nonzero off-diagonal entries,
    /// excluding `i` itself.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.f)
            .filter(|&j| j != i && self.at(i, j) != 0.0)
            .collect()
    }

    /// True when every node is reachable from node 0.
    pub fn is_connected(&self) -> bool {
        bfs_distance(self, 0)
            .map(|d| d.iter().all(|x| x.is_some()))
            .unwrap_or(false)
    }

    /// Read an adjacency matrix from CSV: `f` rows of `f` decimal reals,
    /// no header.
    pub fn load_csv(path: &Path) -> Result<Graph> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|_| Error::MissingFile { path: path.to_path_buf() })?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (r, record) in reader.records().enumerate() {
            let record = record.map_err(|e| csv_error(e, r))?;
            let mut row = Vec::with_capacity(record.len());
            for (c, field) in record.iter().enumerate() {
                row.push(field.parse::<f64>().map_err(|_| Error::ParseError {
                    row: r,
                    col: c,
                    message: format!("not a number: {field:?}"),
                })?);
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::EmptyFile);
        }
        Graph::validate(&rows)
    }

    /// Write the adjacency matrix as CSV, one row per node.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for i in 0..self.f {
            let row: Vec<String> = (0..self.f).map(|j| format!("{}", self.at(i, j))).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

pub(crate) fn csv_error(e: csv::Error, row: usize) -> Error {
    match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::RaggedRow {
            row,
            got: *len as usize,
            expected: *expected_len as usize,
        },
        _ => Error::ParseError {
            row,
            col: 0,
            message: e.to_string(),
        },
    }
}

/// Receptive-field mask at hop distance `k`: `mask[i][j]` is true iff the
/// unweighted shortest path from `i` to `j` has length at most `k`. The
/// diagonal is always true.
#[derive(Debug, Clone, PartialEq)]
pub struct HopMask {
    k: usize,
    f: usize,
    mask: Vec<bool>,
}

impl HopMask {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn f(&self) -> usize {
        self.f
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.f + j]
    }

    pub fn bits(&self) -> &[bool] {
        &self.mask
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.mask[i * self.f..(i + 1) * self.f]
    }

    /// Export as CSV of 0/1 integers.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for i in 0..self.f {
            let row: Vec<&str> = self.row(i).iter().map(|&b| if b { "1" } else { "0" }).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Compute the hop-`k` mask of a graph by breadth-first search from every
/// node over nonzero off-diagonal entries.
pub fn hop_mask(g: &Graph, k: usize) -> HopMask {
    let f = g.f();
    let mut mask = vec![false; f * f];
    for i in 0..f {
        let dist = bfs_distance(g, i).expect("source in range");
        for j in 0..f {
            mask[i * f + j] = j == i || matches!(dist[j], Some(d) if d <= k);
        }
    }
    HopMask { k, f, mask }
}

/// Unweighted shortest-path hop counts from `source`; `None` marks
/// unreachable nodes.
pub fn bfs_distance(g: &Graph, source: usize) -> Result<Vec<Option<usize>>> {
    let f = g.f();
    if source >= f {
        return Err(Error::IndexOutOfRange { index: source, len: f });
    }
    let mut dist = vec![None; f];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap();
        for v in 0..f {
            if v != u && g.at(u, v) != 0.0 && dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    Ok(dist)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Neighborhood {
    Four,
    Eight,
}

/// Regular `rows x cols` grid with 4- or 8-neighborhood connectivity and
/// unit self-loops. Node `(r, c)` has index `r * cols + c`.
pub fn lattice_graph(rows: usize, cols: usize, neighborhood: Neighborhood) -> Graph {
    assert!(rows >= 1 && cols >= 1, "empty lattice");
    let f = rows * cols;
    let mut adjacency = vec![0.0; f * f];
    let offsets: &[(isize, isize)] = match neighborhood {
        Neighborhood::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
        Neighborhood::Eight => &[
            (-1, -1), (-1, 0), (-1, 1),
            (0, -1), (0, 1),
            (1, -1), (1, 0), (1, 1),
        ],
    };
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            adjacency[i * f + i] = 1.0;
            for (dr, dc) in offsets {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if (0..rows as isize).contains(&nr) && (0..cols as isize).contains(&nc) {
                    let j = nr as usize * cols + nc as usize;
                    adjacency[i * f + j] = 1.0;
                }
            }
        }
    }
    Graph { f, adjacency }
}

/// Small 5-node demo graph used across examples and the gradient audit:
/// self-loops of weight 2 plus edges 0-1, 0-4, 1-2, 1-3, 3-4.
pub fn five_node_example() -> Graph {
    Graph::validate(&[
        vec![2.0, 1.0, 0.0, 0.0, 1.0],
        vec![1.0, 2.0, 1.0, 1.0, 0.0],
        vec![0.0, 1.0, 2.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0, 2.0, 1.0],
        vec![1.0, 0.0, 0.0, 1.0, 2.0],
    ])
    .expect("demo graph is valid")
}
