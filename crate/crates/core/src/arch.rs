//! The modular search space: homogeneous architectures `A(B, i, j)` laid out
//! on an `n_blocks x n_stacks` grid, connected by two minimal expansion steps.
//!
//! Nodes are `(i, j)` pairs and edges are computed on demand; the largest grid
//! anyone uses has a few dozen nodes.

use alloc::collections::VecDeque;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::InputShape;
use crate::nn::{self, NetworkSpec};
use crate::{Error, Result};

/// Block families a [`BlockSpec`] can name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockKind {
    /// `beta` affine+ReLU layers with an identity skip.
    ResidualDense,
    /// `beta` 3x3 conv+batch-norm+ReLU layers with an identity skip.
    ResidualConv,
}

impl BlockKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::ResidualDense => "residual-dense",
            BlockKind::ResidualConv => "residual-conv",
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BlockKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "residual-dense" => Ok(BlockKind::ResidualDense),
            "residual-conv" => Ok(BlockKind::ResidualConv),
            other => Err(Error::UnknownBlockKind(other.to_string())),
        }
    }
}

/// The repeated unit of an architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    /// Parameterized layers per block.
    pub beta: usize,
    /// Parameterized layers of the initial block plus the classification block.
    pub alpha: usize,
    /// Width of the first stack; stack `k` has `base_width * 2^(k-1)` units.
    pub base_width: usize,
    pub kind: BlockKind,
}

impl BlockSpec {
    pub fn new(kind: BlockKind, beta: usize, alpha: usize, base_width: usize) -> Result<Self> {
        let spec = BlockSpec { beta, alpha, base_width, kind };
        spec.validate()?;
        Ok(spec)
    }

    /// Two-layer residual block with an initial and a classification layer.
    pub fn reference(kind: BlockKind, base_width: usize) -> Self {
        BlockSpec { beta: 2, alpha: 2, base_width, kind }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta == 0 || self.alpha == 0 || self.base_width == 0 {
            return Err(Error::invalid("beta, alpha and base_width must all be >= 1"));
        }
        Ok(())
    }
}

/// `(i, j)`: `i` blocks in each of `j` stacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArchPoint {
    pub i: usize,
    pub j: usize,
}

impl ArchPoint {
    pub const fn new(i: usize, j: usize) -> Self {
        ArchPoint { i, j }
    }

    /// Number of layers: `i * j * beta + alpha`.
    pub fn depth(self, block: &BlockSpec) -> usize {
        depth(self, block)
    }

    /// `(i + 1, j)`.
    pub fn expand_depth(self) -> Self {
        expand_depth(self)
    }

    /// `(floor(i*j / (j+1)) + 1, j + 1)`.
    pub fn expand_stacks(self) -> Self {
        expand_stacks(self)
    }
}

impl fmt::Display for ArchPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.i, self.j)
    }
}

pub fn depth(arch: ArchPoint, block: &BlockSpec) -> usize {
    arch.i * arch.j * block.beta + block.alpha
}

pub fn expand_depth(arch: ArchPoint) -> ArchPoint {
    ArchPoint::new(arch.i + 1, arch.j)
}

/// Adds a stack and shrinks the per-stack block count to the smallest value
/// whose depth still exceeds that of `arch`: `i' (j+1) > i j`.
pub fn expand_stacks(arch: ArchPoint) -> ArchPoint {
    ArchPoint::new(arch.i * arch.j / (arch.j + 1) + 1, arch.j + 1)
}

/// Bounded rectangular search space `{1..=n_blocks} x {1..=n_stacks}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub block: BlockSpec,
    pub n_blocks: usize,
    pub n_stacks: usize,
}

impl SearchGrid {
    pub fn new(block: BlockSpec, n_blocks: usize, n_stacks: usize) -> Result<Self> {
        block.validate()?;
        if n_blocks == 0 || n_stacks == 0 {
            return Err(Error::invalid("grid dimensions must be >= 1"));
        }
        Ok(SearchGrid { block, n_blocks, n_stacks })
    }

    pub fn contains(&self, arch: ArchPoint) -> bool {
        (1..=self.n_blocks).contains(&arch.i) && (1..=self.n_stacks).contains(&arch.j)
    }

    pub fn check(&self, arch: ArchPoint) -> Result<()> {
        if self.contains(arch) {
            Ok(())
        } else {
            Err(Error::OutsideGrid(arch))
        }
    }

    pub fn smallest(&self) -> ArchPoint {
        ArchPoint::new(1, 1)
    }

    pub fn largest(&self) -> ArchPoint {
        ArchPoint::new(self.n_blocks, self.n_stacks)
    }

    pub fn len(&self) -> usize {
        self.n_blocks * self.n_stacks
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All nodes, stack-major (`j` outer, `i` inner).
    pub fn nodes(&self) -> impl Iterator<Item = ArchPoint> + '_ {
        (1..=self.n_stacks).flat_map(move |j| (1..=self.n_blocks).map(move |i| ArchPoint::new(i, j)))
    }

    pub fn depth(&self, arch: ArchPoint) -> usize {
        depth(arch, &self.block)
    }

    /// Outgoing expansion edges of `arch` that stay inside the grid.
    pub fn expansions(&self, arch: ArchPoint) -> Vec<ArchPoint> {
        [expand_depth(arch), expand_stacks(arch)]
            .into_iter()
            .filter(|a| self.contains(*a))
            .collect()
    }

    /// Every `(from, to)` edge of the DAG.
    pub fn edges(&self) -> Vec<(ArchPoint, ArchPoint)> {
        self.nodes()
            .flat_map(|a| self.expansions(a).into_iter().map(move |b| (a, b)))
            .collect()
    }
}

/// `{arch, expand_depth(arch), expand_stacks(arch)}` clipped to the grid, in
/// that order. `arch` itself is always the first element.
pub fn neighbors(grid: &SearchGrid, arch: ArchPoint) -> Result<Vec<ArchPoint>> {
    grid.check(arch)?;
    let mut out = vec![arch];
    out.extend(grid.expansions(arch));
    Ok(out)
}

/// Breadth-first search from `(1,1)` over expansion edges. Returns whether every
/// node was visited and the (sorted) unvisited nodes.
pub fn verify_reachability(grid: &SearchGrid) -> (bool, Vec<ArchPoint>) {
    let idx = |a: ArchPoint| (a.j - 1) * grid.n_blocks + (a.i - 1);
    let mut seen = vec![false; grid.len()];
    let mut queue = VecDeque::new();
    let start = grid.smallest();
    seen[idx(start)] = true;
    queue.push_back(start);
    while let Some(a) = queue.pop_front() {
        for b in grid.expansions(a) {
            if !seen[idx(b)] {
                seen[idx(b)] = true;
                queue.push_back(b);
            }
        }
    }
    let mut missing: Vec<ArchPoint> = grid.nodes().filter(|a| !seen[idx(*a)]).collect();
    missing.sort();
    (missing.is_empty(), missing)
}

/// Minimum number of expansion edges leading from `from` to `to`, if any
/// path exists inside the grid.
pub fn expansion_distance(grid: &SearchGrid, from: ArchPoint, to: ArchPoint) -> Option<usize> {
    if !grid.contains(from) || !grid.contains(to) {
        return None;
    }
    let idx = |a: ArchPoint| (a.j - 1) * grid.n_blocks + (a.i - 1);
    let mut dist = vec![usize::MAX; grid.len()];
    let mut queue = VecDeque::new();
    dist[idx(from)] = 0;
    queue.push_back(from);
    while let Some(a) = queue.pop_front() {
        if a == to {
            return Some(dist[idx(a)]);
        }
        for b in grid.expansions(a) {
            if dist[idx(b)] == usize::MAX {
                dist[idx(b)] = dist[idx(a)] + 1;
                queue.push_back(b);
            }
        }
    }
    None
}

/// Static capacity figures of an instantiated architecture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub depth_layers: usize,
    /// Total trainable parameters `W`.
    pub params_w: usize,
    /// Total computation units (neurons / filters) `U`.
    pub units_u: usize,
    /// `(1/W) * sum_i W_i`, with `W_i` the parameters feeding layer `i`.
    pub lbar: f64,
    /// `lbar * W * log2(U)`, a relative VC-dimension proxy.
    pub score: f64,
}

pub fn capacity_report(
    grid: &SearchGrid,
    arch: ArchPoint,
    input_shape: InputShape,
    n_classes: usize,
) -> Result<CapacityReport> {
    grid.check(arch)?;
    let spec = NetworkSpec::new(arch, grid.block, input_shape, n_classes, 0.0)?;
    let layout = nn::layout(&spec)?;
    let params_w = layout.param_count();
    let units_u = layout.unit_count();
    let mut cumulative = 0usize;
    let mut sum_wi = 0usize;
    let mut layers = 0usize;
    for layer in layout.layers() {
        cumulative += layer.param_count();
        if layer.counted {
            sum_wi += cumulative;
            layers += 1;
        }
    }
    let depth_layers = depth(arch, &grid.block);
    if layers != depth_layers {
        return Err(Error::Invariant(alloc::format!(
            "network has {layers} counted layers, depth formula gives {depth_layers}"
        )));
    }
    let lbar = sum_wi as f64 / params_w as f64;
    let score = lbar * params_w as f64 * libm::log2(units_u as f64);
    Ok(CapacityReport { depth_layers, params_w, units_u, lbar, score })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_grid(n_blocks: usize, n_stacks: usize) -> SearchGrid {
        SearchGrid::new(BlockSpec::reference(BlockKind::ResidualDense, 64), n_blocks, n_stacks).unwrap()
    }

    #[test]
    fn depth_examples() {
        let b = BlockSpec::reference(BlockKind::ResidualConv, 64);
        assert_eq!(depth(ArchPoint::new(2, 4), &b), 18);
        assert_eq!(depth(ArchPoint::new(1, 1), &b), 4);
        assert_eq!(depth(ArchPoint::new(12, 5), &b), 122);
    }

    #[test]
    fn expand_depth_examples() {
        assert_eq!(expand_depth(ArchPoint::new(1, 1)), ArchPoint::new(2, 1));
        assert_eq!(expand_depth(ArchPoint::new(2, 4)), ArchPoint::new(3, 4));
        assert_eq!(expand_depth(ArchPoint::new(11, 5)), ArchPoint::new(12, 5));
    }

    #[test]
    fn expand_stacks_examples() {
        assert_eq!(expand_stacks(ArchPoint::new(2, 4)), ArchPoint::new(2, 5));
        assert_eq!(expand_stacks(ArchPoint::new(1, 1)), ArchPoint::new(1, 2));
        assert_eq!(expand_stacks(ArchPoint::new(5, 2)), ArchPoint::new(4, 3));
    }

    #[test]
    fn neighbors_examples() {
        let g = reference_grid(12, 5);
        assert_eq!(
            neighbors(&g, ArchPoint::new(2, 4)).unwrap(),
            vec![ArchPoint::new(2, 4), ArchPoint::new(3, 4), ArchPoint::new(2, 5)]
        );
        assert_eq!(neighbors(&g, ArchPoint::new(12, 5)).unwrap(), vec![ArchPoint::new(12, 5)]);
        assert_eq!(
            neighbors(&g, ArchPoint::new(12, 4)).unwrap(),
            vec![ArchPoint::new(12, 4), ArchPoint::new(10, 5)]
        );
        assert!(neighbors(&g, ArchPoint::new(13, 1)).is_err());
    }

    #[test]
    fn reachability_examples() {
        for (nb, ns) in [(12, 5), (1, 1), (5, 4)] {
            let (ok, missing) = verify_reachability(&reference_grid(nb, ns));
            assert!(ok);
            assert!(missing.is_empty());
        }
    }

    #[test]
    fn expansion_distance_counts_edges() {
        let g = reference_grid(5, 4);
        assert_eq!(expansion_distance(&g, ArchPoint::new(1, 1), ArchPoint::new(1, 1)), Some(0));
        assert_eq!(expansion_distance(&g, ArchPoint::new(1, 1), ArchPoint::new(2, 1)), Some(1));
        assert_eq!(expansion_distance(&g, ArchPoint::new(1, 1), ArchPoint::new(1, 3)), Some(2));
        assert_eq!(expansion_distance(&g, ArchPoint::new(2, 1), ArchPoint::new(1, 1)), None);
    }

    #[test]
    fn block_kind_names() {
        assert_eq!("residual-dense".parse::<BlockKind>().unwrap(), BlockKind::ResidualDense);
        assert_eq!(BlockKind::ResidualConv.to_string(), "residual-conv");
        assert!(matches!("resnet".parse::<BlockKind>(), Err(Error::UnknownBlockKind(_))));
    }

    #[test]
    fn grid_edges_strictly_increase_depth() {
        let g = reference_grid(12, 5);
        for (a, b) in g.edges() {
            assert!(g.depth(b) > g.depth(a), "{a} -> {b}");
        }
    }
}
