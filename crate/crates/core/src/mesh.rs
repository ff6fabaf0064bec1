//! Uniform quadrilateral meshes of the unit square.
//!
//! Cells are numbered row-major: cell `(i, j)` (column `i`, row `j`) has
//! index `j * n + i` and lower-left corner `(i h, j h)`. Every interior
//! facet is oriented from its lower-indexed cell (`cell_minus`), so its
//! normal is `+e1` for vertical facets and `+e2` for horizontal ones.

use crate::error::{Error, Result};

/// Edge of the reference square `[0,1]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `x = 0`
    Left,
    /// `x = 1`
    Right,
    /// `y = 0`
    Bottom,
    /// `y = 1`
    Top,
}

impl Side {
    /// Reference coordinates of the point at fraction `t` along this edge,
    /// traversed in the direction of increasing `x` or `y`.
    pub fn reference_point(self, t: f64) -> [f64; 2] {
        match self {
            Side::Left => [0.0, t],
            Side::Right => [1.0, t],
            Side::Bottom => [t, 0.0],
            Side::Top => [t, 1.0],
        }
    }

    /// Outward unit normal of the reference square on this edge.
    pub fn outward_normal(self) -> [f64; 2] {
        match self {
            Side::Left => [-1.0, 0.0],
            Side::Right => [1.0, 0.0],
            Side::Bottom => [0.0, -1.0],
            Side::Top => [0.0, 1.0],
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
            Side::Bottom => Side::Top,
            Side::Top => Side::Bottom,
        }
    }

    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub index: usize,
    /// Column and row of the cell in the `n x n` grid.
    pub ij: [usize; 2],
    pub origin: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FacetInfo {
    pub facet_id: usize,
    pub cell_minus: usize,
    pub cell_plus: Option<usize>,
    /// Unit normal pointing out of `cell_minus`.
    pub normal: [f64; 2],
    pub h_e: f64,
    /// Ordered so that `endpoints[0] + t (endpoints[1] - endpoints[0])`
    /// matches `side_minus.reference_point(t)` in `cell_minus`.
    pub endpoints: [[f64; 2]; 2],
    /// Edge of `cell_minus` the facet lies on; the `cell_plus` edge is the
    /// opposite one.
    pub side_minus: Side,
}

impl FacetInfo {
    pub fn is_interior(&self) -> bool {
        self.cell_plus.is_some()
    }

    pub fn point_at(&self, t: f64) -> [f64; 2] {
        let [a, b] = self.endpoints;
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub n_per_side: usize,
    pub h: f64,
    pub cells: Vec<Cell>,
    pub interior_facets: Vec<FacetInfo>,
    pub boundary_facets: Vec<FacetInfo>,
}

impl Mesh {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.n_per_side + i
    }

    /// Physical point of reference coordinates `r` in `cell`.
    pub fn map_point(&self, cell: usize, r: [f64; 2]) -> [f64; 2] {
        let o = self.cells[cell].origin;
        [o[0] + self.h * r[0], o[1] + self.h * r[1]]
    }

    /// Vertex coordinates of `cell`, counter-clockwise from the origin.
    pub fn cell_vertices(&self, cell: usize) -> [[f64; 2]; 4] {
        [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]].map(|r| self.map_point(cell, r))
    }
}

/// Builds the uniform `n x n` mesh of `(0,1)^2`.
pub fn unit_square_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("mesh needs at least one cell per side".into()));
    }
    let h = 1.0 / n as f64;
    let coord = |k: usize| k as f64 / n as f64;
    let mut cells = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            cells.push(Cell {
                index: j * n + i,
                ij: [i, j],
                origin: [coord(i), coord(j)],
            });
        }
    }

    let mut interior = Vec::with_capacity(2 * n * (n - 1));
    // vertical facets x = (i+1) h between (i, j) and (i+1, j)
    for j in 0..n {
        for i in 0..n - 1 {
            interior.push(FacetInfo {
                facet_id: interior.len(),
                cell_minus: j * n + i,
                cell_plus: Some(j * n + i + 1),
                normal: [1.0, 0.0],
                h_e: h,
                endpoints: [[coord(i + 1), coord(j)], [coord(i + 1), coord(j + 1)]],
                side_minus: Side::Right,
            });
        }
    }
    // horizontal facets y = (j+1) h between (i, j) and (i, j+1)
    for j in 0..n - 1 {
        for i in 0..n {
            interior.push(FacetInfo {
                facet_id: interior.len(),
                cell_minus: j * n + i,
                cell_plus: Some((j + 1) * n + i),
                normal: [0.0, 1.0],
                h_e: h,
                endpoints: [[coord(i), coord(j + 1)], [coord(i + 1), coord(j + 1)]],
                side_minus: Side::Top,
            });
        }
    }

    let mut boundary = Vec::with_capacity(4 * n);
    for k in 0..n {
        let sides = [
            (Side::Bottom, k, [[coord(k), 0.0], [coord(k + 1), 0.0]]),
            (Side::Top, (n - 1) * n + k, [[coord(k), 1.0], [coord(k + 1), 1.0]]),
            (Side::Left, k * n, [[0.0, coord(k)], [0.0, coord(k + 1)]]),
            (Side::Right, k * n + n - 1, [[1.0, coord(k)], [1.0, coord(k + 1)]]),
        ];
        for (side, cell, endpoints) in sides {
            boundary.push(FacetInfo {
                facet_id: interior.len() + boundary.len(),
                cell_minus: cell,
                cell_plus: None,
                normal: side.outward_normal(),
                h_e: h,
                endpoints,
                side_minus: side,
            });
        }
    }

    Ok(Mesh {
        n_per_side: n,
        h,
        cells,
        interior_facets: interior,
        boundary_facets: boundary,
    })
}
