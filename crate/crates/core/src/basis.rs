//! Tensor-product Lagrange bases on the reference square `[0,1]^2`.
//!
//! Basis functions are indexed lexicographically with `x` running fastest:
//! basis `iy * (degree + 1) + ix` is the product of the 1D Lagrange
//! polynomials attached to nodes `ix / degree` and `iy / degree`.

use crate::error::{Error, Result};

/// Equispaced tensor-product nodes, in basis order.
pub fn reference_nodes(degree: usize) -> Result<Vec<[f64; 2]>> {
    check_degree(degree)?;
    let line = line_nodes(degree);
    let mut nodes = Vec::with_capacity((degree + 1) * (degree + 1));
    for &y in &line {
        for &x in &line {
            nodes.push([x, y]);
        }
    }
    Ok(nodes)
}

fn check_degree(degree: usize) -> Result<()> {
    if degree == 0 {
        return Err(Error::InvalidArgument("Lagrange degree must be >= 1".into()));
    }
    Ok(())
}

fn line_nodes(degree: usize) -> Vec<f64> {
    (0..=degree).map(|k| k as f64 / degree as f64).collect()
}

/// Values, first and second derivatives of the 1D Lagrange polynomials at `x`.
fn lagrange_1d(nodes: &[f64], x: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let m = nodes.len();
    let mut v = vec![0.0; m];
    let mut d1 = vec![0.0; m];
    let mut d2 = vec![0.0; m];
    for k in 0..m {
        let denom: f64 = (0..m)
            .filter(|&j| j != k)
            .map(|j| nodes[k] - nodes[j])
            .product();
        // product of (x - x_j) over j != k, j not in `skip`
        let prod = |skip: &[usize]| -> f64 {
            (0..m)
                .filter(|j| *j != k && !skip.contains(j))
                .map(|j| x - nodes[j])
                .product()
        };
        v[k] = prod(&[]) / denom;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for a in (0..m).filter(|&a| a != k) {
            s1 += prod(&[a]);
            for b in (0..m).filter(|&b| b != k && b != a) {
                s2 += prod(&[a, b]);
            }
        }
        d1[k] = s1 / denom;
        d2[k] = s2 / denom;
    }
    (v, d1, d2)
}

/// Basis values and reference-cell derivatives at a set of points.
#[derive(Debug, Clone)]
pub struct BasisTabulation {
    pub degree: usize,
    pub points: Vec<[f64; 2]>,
    /// `values[p][i]`
    pub values: Vec<Vec<f64>>,
    /// `gradients[p][i]`
    pub gradients: Vec<Vec<[f64; 2]>>,
    /// `hessians[p][i]`, symmetric
    pub hessians: Vec<Vec<[[f64; 2]; 2]>>,
}

impl BasisTabulation {
    pub fn n_basis(&self) -> usize {
        (self.degree + 1) * (self.degree + 1)
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }
}

/// Tabulates the degree-`degree` basis at reference `points`.
pub fn tabulate(degree: usize, points: &[[f64; 2]]) -> Result<BasisTabulation> {
    check_degree(degree)?;
    let line = line_nodes(degree);
    let nb = degree + 1;
    let mut values = Vec::with_capacity(points.len());
    let mut gradients = Vec::with_capacity(points.len());
    let mut hessians = Vec::with_capacity(points.len());
    for &[x, y] in points {
        let (vx, dx, ddx) = lagrange_1d(&line, x);
        let (vy, dy, ddy) = lagrange_1d(&line, y);
        let mut val = Vec::with_capacity(nb * nb);
        let mut grad = Vec::with_capacity(nb * nb);
        let mut hess = Vec::with_capacity(nb * nb);
        for iy in 0..nb {
            for ix in 0..nb {
                val.push(vx[ix] * vy[iy]);
                grad.push([dx[ix] * vy[iy], vx[ix] * dy[iy]]);
                let cross = dx[ix] * dy[iy];
                hess.push([[ddx[ix] * vy[iy], cross], [cross, vx[ix] * ddy[iy]]]);
            }
        }
        values.push(val);
        gradients.push(grad);
        hessians.push(hess);
    }
    Ok(BasisTabulation {
        degree,
        points: points.to_vec(),
        values,
        gradients,
        hessians,
    })
}

/// Factors converting reference derivatives to physical ones on an
/// axis-aligned square cell of side `h`: `(1/h, 1/h^2)`.
pub fn pullback_scalings(h: f64) -> (f64, f64) {
    (1.0 / h, 1.0 / (h * h))
}
