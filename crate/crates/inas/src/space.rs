//! Search-space inspection: capacity table, edge list and grid diagram.

use std::fmt::Write as _;

use inas_core::arch::{self, CapacityReport, SearchGrid};
use inas_core::data::InputShape;

use crate::error::Result;
use crate::svg::{Scale, Svg};

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceRow {
    pub i: usize,
    pub j: usize,
    pub capacity: CapacityReport,
}

pub fn rows(grid: &SearchGrid, input_shape: InputShape, n_classes: usize) -> Result<Vec<SpaceRow>> {
    grid.nodes()
        .map(|a| Ok(SpaceRow { i: a.i, j: a.j, capacity: arch::capacity_report(grid, a, input_shape, n_classes)? }))
        .collect()
}

pub fn table(rows: &[SpaceRow]) -> String {
    let mut out = format!("{:>3} {:>3} {:>6} {:>12} {:>8} {:>9} {:>14}\n", "i", "j", "depth", "params", "units", "lbar", "score");
    for r in rows {
        let c = &r.capacity;
        let _ = writeln!(
            out,
            "{:>3} {:>3} {:>6} {:>12} {:>8} {:>9.3} {:>14.4e}",
            r.i, r.j, c.depth_layers, c.params_w, c.units_u, c.lbar, c.score
        );
    }
    out
}

/// One `i,j -> i',j'` line per expansion edge.
pub fn edge_list(grid: &SearchGrid) -> String {
    grid.edges().iter().map(|(a, b)| format!("{},{} -> {},{}\n", a.i, a.j, b.i, b.j)).collect()
}

/// Nodes laid out with blocks per stack across and stacks down; depth
/// expansions run horizontally, stack expansions diagonally.
pub fn grid_svg(grid: &SearchGrid) -> String {
    let cell = 64.0;
    let margin = 56.0;
    let width = margin * 2.0 + cell * (grid.n_blocks.max(2) - 1) as f64;
    let height = margin * 2.0 + cell * (grid.n_stacks.max(2) - 1) as f64;
    let x = Scale { d0: 1.0, d1: grid.n_blocks.max(2) as f64, p0: margin, p1: width - margin };
    let y = Scale { d0: 1.0, d1: grid.n_stacks.max(2) as f64, p0: margin, p1: height - margin };
    let mut svg = Svg::new(width, height);
    let r = 9.0;
    for (a, b) in grid.edges() {
        let (x1, y1, x2, y2) = (x.map(a.i as f64), y.map(a.j as f64), x.map(b.i as f64), y.map(b.j as f64));
        let len = ((x2 - x1).powi(2) + (y2 - y1).powi(2)).sqrt();
        let (ux, uy) = ((x2 - x1) / len, (y2 - y1) / len);
        let color = if a.j == b.j { "#1f77b4" } else { "#d62728" };
        svg.arrow(x1 + ux * r, y1 + uy * r, x2 - ux * (r + 2.0), y2 - uy * (r + 2.0), color);
    }
    for a in grid.nodes() {
        let (cx, cy) = (x.map(a.i as f64), y.map(a.j as f64));
        svg.circle(cx, cy, r, "#333333");
        svg.text(cx, cy - r - 4.0, 9.0, "middle", &format!("{},{}", a.i, a.j));
        svg.text(cx, cy + r + 11.0, 8.0, "middle", &grid.depth(a).to_string());
    }
    svg.text(margin, 18.0, 11.0, "start", "blocks per stack (i) across, stacks (j) down; node label: depth");
    svg.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use inas_core::arch::{BlockKind, BlockSpec};

    #[test]
    fn edge_list_of_a_small_grid() {
        let g = SearchGrid::new(BlockSpec::reference(BlockKind::ResidualDense, 4), 2, 2).unwrap();
        assert_eq!(edge_list(&g), "1,1 -> 2,1\n1,1 -> 1,2\n2,1 -> 2,2\n1,2 -> 2,2\n");
    }

    #[test]
    fn table_has_a_row_per_node() {
        let g = SearchGrid::new(BlockSpec::reference(BlockKind::ResidualDense, 4), 3, 2).unwrap();
        let rows = rows(&g, InputShape::Flat { dim: 2 }, 2).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(table(&rows).lines().count(), 7);
        assert_eq!(grid_svg(&g), grid_svg(&g));
    }
}
