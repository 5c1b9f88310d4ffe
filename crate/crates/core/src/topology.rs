//! Network structures with reciprocally paired half-links.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Neighborhood {
    /// The 4 orthogonal neighbours.
    #[default]
    VonNeumann,
    /// The 8 surrounding cells.
    Moore,
}

/// How nodes are laid out, for rendering and contour extraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Ring { n: usize },
    Torus { width: usize, height: usize, neighborhood: Neighborhood },
    Graph,
}

/// Nodes plus directed half-links, each paired with its reverse.
///
/// Half-links are grouped by source: node `u` owns the contiguous range
/// [`outgoing(u)`](Self::outgoing), in the order its neighbours were listed.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    offsets: Vec<usize>,
    sources: Vec<u32>,
    targets: Vec<u32>,
    reverse: Vec<u32>,
    layout: Layout,
}

impl Topology {
    /// `n` kinons in a ring. Each node lists its left then right neighbour.
    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid("topology.n", format!("a ring needs at least 3 nodes, got {n}")));
        }
        let adjacency = (0..n).map(|i| vec![(i + n - 1) % n, (i + 1) % n]).collect();
        Self::from_adjacency(adjacency, Layout::Ring { n })
    }

    /// A periodic `width x height` grid; node `(x, y)` has index `y * width + x`.
    ///
    /// Von Neumann neighbours are listed as `(x-1, y), (x+1, y), (x, y-1), (x, y+1)`;
    /// Moore adds the diagonals row by row.
    pub fn torus(width: usize, height: usize, neighborhood: Neighborhood) -> Result<Self> {
        if width < 3 || height < 3 {
            return Err(Error::invalid("topology", format!("a torus needs width and height of at least 3, got {width}x{height}")));
        }
        let offsets: &[(isize, isize)] = match neighborhood {
            Neighborhood::VonNeumann => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
            Neighborhood::Moore => &[(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)],
        };
        let (w, h) = (width as isize, height as isize);
        let adjacency = (0..width * height)
            .map(|i| {
                let (x, y) = ((i % width) as isize, (i / width) as isize);
                offsets
                    .iter()
                    .map(|(dx, dy)| ((y + dy).rem_euclid(h) * w + (x + dx).rem_euclid(w)) as usize)
                    .collect()
            })
            .collect();
        Self::from_adjacency(adjacency, Layout::Torus { width, height, neighborhood })
    }

    /// An arbitrary undirected graph. Each edge becomes two reciprocal half-links.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); node_count];
        let mut seen = HashMap::new();
        for (i, &(a, b)) in edges.iter().enumerate() {
            let field = format!("topology.edges[{i}]");
            if a >= node_count || b >= node_count {
                return Err(Error::invalid(field, format!("({a}, {b}) references a node outside 0..{node_count}")));
            }
            if a == b {
                return Err(Error::invalid(field, format!("({a}, {b}) is a self-edge")));
            }
            if let Some(first) = seen.insert((a.min(b), a.max(b)), i) {
                return Err(Error::invalid(field, format!("({a}, {b}) duplicates edges[{first}]")));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        Self::from_adjacency(adjacency, Layout::Graph)
    }

    fn from_adjacency(adjacency: Vec<Vec<usize>>, layout: Layout) -> Result<Self> {
        let node_count = adjacency.len();
        if node_count == 0 {
            return Err(Error::invalid("topology", "no nodes"));
        }
        if node_count > u32::MAX as usize {
            return Err(Error::invalid("topology", "too many nodes"));
        }
        let mut offsets = Vec::with_capacity(node_count + 1);
        let mut sources = Vec::new();
        let mut targets = Vec::new();
        let mut index = HashMap::new();
        offsets.push(0);
        for (u, neighbours) in adjacency.iter().enumerate() {
            if neighbours.is_empty() {
                return Err(Error::invalid("topology", format!("node {u} has no links")));
            }
            for &v in neighbours {
                if v == u {
                    return Err(Error::invalid("topology", format!("self-link at node {u}")));
                }
                if index.insert((u, v), sources.len()).is_some() {
                    return Err(Error::invalid("topology", format!("duplicate link {u} -> {v}")));
                }
                sources.push(u as u32);
                targets.push(v as u32);
            }
            offsets.push(sources.len());
        }
        let reverse = (0..sources.len())
            .map(|l| {
                let (u, v) = (sources[l] as usize, targets[l] as usize);
                index
                    .get(&(v, u))
                    .map(|&r| r as u32)
                    .ok_or_else(|| Error::invalid("topology", format!("link {u} -> {v} has no reverse")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Topology { offsets, sources, targets, reverse, layout })
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn half_link_count(&self) -> usize {
        self.sources.len()
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// `(width, height)` of the rendered field: rings and graphs are one row.
    pub fn frame_dims(&self) -> (usize, usize) {
        match self.layout {
            Layout::Torus { width, height, .. } => (width, height),
            _ => (self.node_count(), 1),
        }
    }

    pub fn is_grid(&self) -> bool {
        matches!(self.layout, Layout::Torus { .. })
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.node_count()).map(|u| self.degree(u)).max().unwrap_or(0)
    }

    pub fn outgoing(&self, node: usize) -> std::ops::Range<usize> {
        self.offsets[node]..self.offsets[node + 1]
    }

    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.outgoing(node).map(|l| self.targets[l] as usize)
    }

    pub fn source(&self, link: usize) -> usize {
        self.sources[link] as usize
    }

    pub fn target(&self, link: usize) -> usize {
        self.targets[link] as usize
    }

    #[inline]
    pub fn reverse(&self, link: usize) -> usize {
        self.reverse[link] as usize
    }

    /// The half-link from `from` to `to`, if they are adjacent.
    pub fn link(&self, from: usize, to: usize) -> Option<usize> {
        if from >= self.node_count() {
            return None;
        }
        self.outgoing(from).find(|&l| self.targets[l] as usize == to)
    }

    /// Node index of grid cell `(x, y)`.
    pub fn cell(&self, x: usize, y: usize) -> Option<usize> {
        match self.layout {
            Layout::Torus { width, height, .. } if x < width && y < height => Some(y * width + x),
            _ => None,
        }
    }
}
