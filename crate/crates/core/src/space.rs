//! Continuous tensor-product Lagrange spaces on a [`Mesh`].
//!
//! Global nodes form the `(degree * n + 1)^2` equispaced lattice and are
//! numbered lexicographically by coordinate (`x` fastest), so nodes on a
//! shared cell edge get a single global index and C⁰ continuity is built in.

use crate::basis::{pullback_scalings, tabulate};
use crate::error::{Error, Result};
use crate::mesh::Mesh;

#[derive(Debug, Clone)]
pub struct DofMap {
    pub degree: usize,
    pub n_per_side: usize,
    pub h: f64,
    pub n_global: usize,
    /// `cell_to_global[c][i]` for local basis `i` in reference order.
    pub cell_to_global: Vec<Vec<usize>>,
    /// Sorted.
    pub boundary_dofs: Vec<usize>,
    pub dof_coords: Vec<[f64; 2]>,
}

impl DofMap {
    pub fn n_local(&self) -> usize {
        (self.degree + 1) * (self.degree + 1)
    }

    pub fn is_boundary(&self, dof: usize) -> bool {
        self.boundary_dofs.binary_search(&dof).is_ok()
    }

    /// Gathers the coefficients of `cell` from a global vector.
    pub fn gather(&self, coeffs: &[f64], cell: usize, out: &mut [f64]) {
        for (o, &g) in out.iter_mut().zip(&self.cell_to_global[cell]) {
            *o = coeffs[g];
        }
    }
}

pub fn build_dofmap(mesh: &Mesh, degree: usize) -> Result<DofMap> {
    if degree == 0 {
        return Err(Error::InvalidArgument("space degree must be >= 1".into()));
    }
    let n = mesh.n_per_side;
    let side = degree * n + 1;
    let n_global = side * side;
    let spacing = 1.0 / (degree * n) as f64;

    let mut dof_coords = Vec::with_capacity(n_global);
    let mut boundary_dofs = Vec::new();
    for jj in 0..side {
        for ii in 0..side {
            dof_coords.push([ii as f64 * spacing, jj as f64 * spacing]);
            if ii == 0 || jj == 0 || ii == side - 1 || jj == side - 1 {
                boundary_dofs.push(jj * side + ii);
            }
        }
    }

    let cell_to_global = mesh
        .cells
        .iter()
        .map(|cell| {
            let [ci, cj] = cell.ij;
            let mut dofs = Vec::with_capacity((degree + 1) * (degree + 1));
            for iy in 0..=degree {
                for ix in 0..=degree {
                    dofs.push((degree * cj + iy) * side + degree * ci + ix);
                }
            }
            dofs
        })
        .collect();

    Ok(DofMap {
        degree,
        n_per_side: n,
        h: mesh.h,
        n_global,
        cell_to_global,
        boundary_dofs,
        dof_coords,
    })
}

/// Nodal interpolant of `f`.
pub fn interpolate(dofmap: &DofMap, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    dofmap.dof_coords.iter().map(|&p| f(p)).collect()
}

/// Value, physical gradient and physical Hessian of a finite element function.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PointJet {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

/// Evaluates the finite element function `coeffs` on `cell` at reference point `ref_point`.
pub fn eval_fe(dofmap: &DofMap, coeffs: &[f64], cell: usize, ref_point: [f64; 2]) -> Result<PointJet> {
    if coeffs.len() != dofmap.n_global {
        return Err(Error::DimensionMismatch {
            what: "coefficient vector",
            expected: dofmap.n_global,
            actual: coeffs.len(),
        });
    }
    if cell >= dofmap.cell_to_global.len() {
        return Err(Error::InvalidArgument(format!("cell {cell} out of range")));
    }
    let tab = tabulate(dofmap.degree, &[ref_point])?;
    let (gs, hs) = pullback_scalings(dofmap.h);
    let mut jet = PointJet::default();
    for (i, &g) in dofmap.cell_to_global[cell].iter().enumerate() {
        let c = coeffs[g];
        jet.value += c * tab.values[0][i];
        let d = tab.gradients[0][i];
        jet.grad[0] += c * d[0] * gs;
        jet.grad[1] += c * d[1] * gs;
        let h = tab.hessians[0][i];
        for a in 0..2 {
            for b in 0..2 {
                jet.hess[a][b] += c * h[a][b] * hs;
            }
        }
    }
    Ok(jet)
}

/// Coefficients for `(u, Q11, Q12)`; `Q = [[Q11, Q12], [Q12, -Q11]]`.
///
/// Fields that a problem does not solve for are left empty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SystemState {
    pub u: Vec<f64>,
    pub q11: Vec<f64>,
    pub q12: Vec<f64>,
}

impl SystemState {
    /// The symmetric traceless matrix assembled from its two components.
    pub fn q_tensor(q11: f64, q12: f64) -> [[f64; 2]; 2] {
        [[q11, q12], [q12, -q11]]
    }
}
