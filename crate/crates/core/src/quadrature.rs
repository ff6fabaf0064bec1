//! Gauss–Legendre rules on the unit interval, the unit square and cell edges.

use crate::error::{Error, Result};

/// Largest supported number of points in a one-dimensional rule.
pub const MAX_POINTS_1D: usize = 20;

/// A quadrature rule on a reference domain of dimension `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<const D: usize> {
    pub points: Vec<[f64; D]>,
    pub weights: Vec<f64>,
}

impl<const D: usize> QuadratureRule<D> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn integrate(&self, f: impl Fn([f64; D]) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(*p))
            .sum()
    }
}

/// Which integrand a cell rule is meant for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    /// Residual and Jacobian assembly: exact for the quartic bulk term.
    Residual,
    /// Error norms: over-integrated relative to the discretisation.
    Error,
}

/// `n`-point Gauss–Legendre rule mapped to `[0, 1]`.
pub fn gauss_1d(n: usize) -> Result<QuadratureRule<1>> {
    if n == 0 || n > MAX_POINTS_1D {
        return Err(Error::InvalidArgument(format!(
            "Gauss rule needs 1..={MAX_POINTS_1D} points, got {n}"
        )));
    }
    let mut points = vec![[0.0]; n];
    let mut weights = vec![0.0; n];
    // Roots are symmetric about zero; find the upper half by Newton's
    // method on P_n starting from the Chebyshev-like guess.
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1,1] -> [0,1]
        points[i] = [0.5 * (1.0 - x)];
        points[n - 1 - i] = [0.5 * (1.0 + x)];
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    Ok(QuadratureRule { points, weights })
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let dp = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Tensor-product rule on `[0,1]^2` with `n` points per direction, `x` fastest.
pub fn tensor_rule(n: usize) -> Result<QuadratureRule<2>> {
    let line = gauss_1d(n)?;
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (py, wy) in line.points.iter().zip(&line.weights) {
        for (px, wx) in line.points.iter().zip(&line.weights) {
            points.push([px[0], py[0]]);
            weights.push(wx * wy);
        }
    }
    Ok(QuadratureRule { points, weights })
}

/// Points per direction used by [`cell_rule`].
pub fn cell_points_per_direction(degree: usize, kind: RuleKind) -> usize {
    match kind {
        RuleKind::Residual => 2 * degree + 1,
        RuleKind::Error => degree + 3,
    }
}

/// Cell rule on `[0,1]^2` for polynomial degree `degree`.
pub fn cell_rule(degree: usize, kind: RuleKind) -> Result<QuadratureRule<2>> {
    if degree == 0 {
        return Err(Error::InvalidArgument("cell rule degree must be >= 1".into()));
    }
    tensor_rule(cell_points_per_direction(degree, kind))
}

/// Edge rule, parameterised by arc length fraction in `[0,1]`.
pub fn facet_rule(degree: usize) -> Result<QuadratureRule<1>> {
    if degree == 0 {
        return Err(Error::InvalidArgument("facet rule degree must be >= 1".into()));
    }
    gauss_1d(degree + 2)
}
