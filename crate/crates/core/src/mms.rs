//! Manufactured solution for the coupled smectic / nematic system.
//!
//! The exact fields are
//!
//! ```text
//! Q11 = cos²θ - 1/2 = cos(φ)/2,   Q12 = cosθ sinθ = sin(φ)/2,
//! u   = 10 (x(x-1) y(y-1))³,
//! θ   = π (2x-1)(2y-1) / 8,       φ = 2θ.
//! ```
//!
//! All derivatives below are closed form; `u` is separable, `u = 10 f(x) f(y)`
//! with `f(s) = (s² - s)³`, so every mixed partial is a product of 1D
//! polynomial derivatives.

use std::f64::consts::PI;

use crate::forms::{Forcing, ModelParams, ProblemKind};
use crate::space::{interpolate, DofMap, SystemState};

/// Value, gradient and Hessian of a scalar field at a point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FieldJet {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactFields {
    pub u: FieldJet,
    pub q11: FieldJet,
    pub q12: FieldJet,
}

/// Coefficients of `f(s) = s⁶ - 3s⁵ + 3s⁴ - s³`, lowest order first.
const F_COEFFS: [f64; 7] = [0.0, 0.0, 0.0, -1.0, 3.0, -3.0, 1.0];

/// `k`-th derivative of `f` at `s`, by Horner's rule on the differentiated
/// coefficients.
fn f_deriv(k: usize, s: f64) -> f64 {
    let mut acc = 0.0;
    for p in (k..F_COEFFS.len()).rev() {
        let falling: f64 = (0..k).map(|j| (p - j) as f64).product();
        acc = acc * s + F_COEFFS[p] * falling;
    }
    acc
}

/// Mixed partial `∂x^i ∂y^j u` for `i, j <= 4`.
pub fn u_partial(i: usize, j: usize, p: [f64; 2]) -> f64 {
    10.0 * f_deriv(i, p[0]) * f_deriv(j, p[1])
}

fn u_jet(p: [f64; 2]) -> FieldJet {
    let d = |i, j| u_partial(i, j, p);
    FieldJet {
        value: d(0, 0),
        grad: [d(1, 0), d(0, 1)],
        hess: [[d(2, 0), d(1, 1)], [d(1, 1), d(0, 2)]],
    }
}

/// `φ = π(2x-1)(2y-1)/4` and its first derivatives; `φ_xx = φ_yy = 0`, `φ_xy = π`.
fn phase(p: [f64; 2]) -> (f64, f64, f64) {
    let [x, y] = p;
    let phi = PI * (2.0 * x - 1.0) * (2.0 * y - 1.0) / 4.0;
    let px = PI * (2.0 * y - 1.0) / 2.0;
    let py = PI * (2.0 * x - 1.0) / 2.0;
    (phi, px, py)
}

fn q_jets(p: [f64; 2]) -> (FieldJet, FieldJet) {
    let (phi, px, py) = phase(p);
    let pxy = PI;
    let (s, c) = phi.sin_cos();
    let q11 = FieldJet {
        value: 0.5 * c,
        grad: [-0.5 * s * px, -0.5 * s * py],
        hess: [
            [-0.5 * c * px * px, -0.5 * (c * px * py + s * pxy)],
            [-0.5 * (c * px * py + s * pxy), -0.5 * c * py * py],
        ],
    };
    let q12 = FieldJet {
        value: 0.5 * s,
        grad: [0.5 * c * px, 0.5 * c * py],
        hess: [
            [-0.5 * s * px * px, 0.5 * (c * pxy - s * px * py)],
            [0.5 * (c * pxy - s * px * py), -0.5 * s * py * py],
        ],
    };
    (q11, q12)
}

pub fn exact_fields(p: [f64; 2]) -> ExactFields {
    let (q11, q12) = q_jets(p);
    ExactFields {
        u: u_jet(p),
        q11,
        q12,
    }
}

fn laplacian(j: &FieldJet) -> f64 {
    j.hess[0][0] + j.hess[1][1]
}

/// Second derivative `∂a∂b` of a product `u g` from the jets of both factors.
fn product_second(u: &FieldJet, g: &FieldJet, a: usize, b: usize) -> f64 {
    u.hess[a][b] * g.value + u.grad[a] * g.grad[b] + u.grad[b] * g.grad[a] + u.value * g.hess[a][b]
}

/// Source terms `(s1, s2, s3)` obtained by applying the strong operators of the
/// coupled system to the exact fields.
pub fn sources(p: [f64; 2], params: &ModelParams) -> [f64; 3] {
    let ModelParams {
        a1,
        a2,
        a3,
        b,
        k,
        l,
        q,
        ..
    } = *params;
    let ExactFields { u, q11, q12 } = exact_fields(p);
    let (uv, a, c) = (u.value, q11.value, q12.value);
    let q2 = q * q;
    let q4 = q2 * q2;
    let s = a * a + c * c;
    let uxx = u.hess[0][0];
    let uyy = u.hess[1][1];
    let uxy = u.hess[0][1];

    let s1 = 4.0 * b * q4 * uv * uv * a + 2.0 * b * q2 * uv * (uxx - uyy) - 2.0 * k * laplacian(&q11)
        - 4.0 * l * a
        + 16.0 * l * a * s;
    let s2 = 4.0 * b * q4 * uv * uv * c + 4.0 * b * q2 * uv * uxy - 2.0 * k * laplacian(&q12) - 4.0 * l * c
        + 16.0 * l * c * s;

    let bilaplacian = u_partial(4, 0, p) + 2.0 * u_partial(2, 2, p) + u_partial(0, 4, p);
    // M = Q + I/2
    let t1 = (a + 0.5) * uxx + (0.5 - a) * uyy + 2.0 * c * uxy;
    let half = FieldJet {
        value: 0.5,
        ..FieldJet::default()
    };
    let m11 = add_jets(&q11, &half, 1.0);
    let m22 = add_jets(&half, &q11, -1.0);
    let t2 = product_second(&u, &m11, 0, 0) + product_second(&u, &m22, 1, 1) + 2.0 * product_second(&u, &q12, 0, 1);
    let s3 = a1 * uv + a2 * uv * uv + a3 * uv * uv * uv + 2.0 * b * bilaplacian
        + b * q4 * (4.0 * s + 1.0) * uv
        + 2.0 * b * q2 * (t1 + t2);
    [s1, s2, s3]
}

fn add_jets(x: &FieldJet, y: &FieldJet, sign: f64) -> FieldJet {
    let mut out = *x;
    out.value += sign * y.value;
    for i in 0..2 {
        out.grad[i] += sign * y.grad[i];
        for j in 0..2 {
            out.hess[i][j] += sign * y.hess[i][j];
        }
    }
    out
}

/// Boundary traces `(u_b, Q11_b, Q12_b)`.
pub fn dirichlet_data(p: [f64; 2]) -> [f64; 3] {
    let e = exact_fields(p);
    [e.u.value, e.q11.value, e.q12.value]
}

/// Newton starting state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialGuess {
    /// Half the exact fields plus `1e-9` in the interior.
    #[default]
    HalfExact,
    /// Interpolant of the exact fields.
    Exact,
}

/// A manufactured problem of a given kind: exact fields plus forcing.
///
/// Decoupled kinds use the `q = 0` sources, matching their equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ManufacturedCase {
    pub kind: ProblemKind,
}

impl ManufacturedCase {
    pub fn new(kind: ProblemKind) -> Self {
        Self { kind }
    }

    pub fn exact(&self, p: [f64; 2]) -> ExactFields {
        exact_fields(p)
    }

    /// `0.5 * exact + 1e-9` at interior nodes, exact traces on the boundary.
    /// Fields the kind does not solve for are left empty.
    pub fn initial_guess(&self, u_map: &DofMap, q_map: &DofMap) -> SystemState {
        self.initial_state(InitialGuess::HalfExact, u_map, q_map)
    }

    pub fn initial_state(&self, guess: InitialGuess, u_map: &DofMap, q_map: &DofMap) -> SystemState {
        let (scale, shift) = match guess {
            InitialGuess::HalfExact => (0.5, 1e-9),
            InitialGuess::Exact => (1.0, 0.0),
        };
        let guess = |map: &DofMap, pick: fn(&ExactFields) -> f64| -> Vec<f64> {
            let mut c = interpolate(map, |p| scale * pick(&exact_fields(p)) + shift);
            for &g in &map.boundary_dofs {
                c[g] = pick(&exact_fields(map.dof_coords[g]));
            }
            c
        };
        let mut state = SystemState::default();
        if self.kind.has_u() {
            state.u = guess(u_map, |e| e.u.value);
        }
        if self.kind.has_q() {
            state.q11 = guess(q_map, |e| e.q11.value);
            state.q12 = guess(q_map, |e| e.q12.value);
        }
        state
    }
}

impl Forcing for ManufacturedCase {
    fn source(&self, p: [f64; 2], params: &ModelParams) -> [f64; 3] {
        match self.kind {
            ProblemKind::Coupled => sources(p, params),
            _ => sources(p, &ModelParams { q: 0.0, ..*params }),
        }
    }

    fn boundary_hessian(&self, p: [f64; 2]) -> [[f64; 2]; 2] {
        exact_fields(p).u.hess
    }
}
