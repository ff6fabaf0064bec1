//! Measurements shared by the integration tests and the acceptance run.
//! Each returns the observed discrepancy; callers compare it to their bound.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smectic_cip::basis::tabulate;
use smectic_cip::forms::{Discretization, FormVariant, ModelParams, ProblemKind};
use smectic_cip::mms::{exact_fields, sources, ManufacturedCase};
use smectic_cip::norms::jump_seminorm_sq;
use smectic_cip::quadrature::{cell_rule, gauss_1d, tensor_rule, RuleKind, MAX_POINTS_1D};
use smectic_cip::space::{interpolate, SystemState};

pub const KINDS: [ProblemKind; 3] = [ProblemKind::P1, ProblemKind::P2, ProblemKind::Coupled];
pub const VARIANTS: [FormVariant; 2] = [FormVariant::Consistent, FormVariant::Inconsistent];

pub fn params(kind: ProblemKind, variant: FormVariant) -> ModelParams {
    ModelParams {
        q: if kind == ProblemKind::Coupled { 30.0 } else { 0.0 },
        epsilon: 3.0,
        variant,
        ..ModelParams::default()
    }
}

/// MMS initial guess with every free DOF nudged by a relative 10%.
pub fn perturbed_state(disc: &Discretization, seed: u64) -> SystemState {
    let mms = ManufacturedCase::new(disc.kind);
    let mut state = mms.initial_guess(&disc.u_map, &disc.q_map);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = disc.free_vector(&state);
    let dx: Vec<f64> = x.iter().map(|v| 0.1 * (v.abs() + 1e-3) * (2.0 * rng.random::<f64>() - 1.0)).collect();
    disc.add_to_free(&mut state, &dx, 1.0);
    state
}

/// Largest entrywise gap between the assembled Jacobian and central
/// differences of the residual, relative to the max-norm of its column.
pub fn jacobian_fd_error(kind: ProblemKind, variant: FormVariant, n: usize, deg_u: usize, deg_q: usize) -> f64 {
    let disc = Discretization::new(n, deg_u, deg_q, kind).unwrap();
    let p = params(kind, variant);
    let mms = ManufacturedCase::new(kind);
    let state = perturbed_state(&disc, 11);
    let sys = disc.assemble(&state, &p, Some(&mms)).unwrap();
    let nf = disc.n_free();
    let x = disc.free_vector(&state);
    let mut worst = 0.0f64;
    for j in 0..nf {
        let d = 1e-6 * x[j].abs().max(1e-2);
        let mut e = vec![0.0; nf];
        e[j] = d;
        let mut plus = state.clone();
        disc.add_to_free(&mut plus, &e, 1.0);
        let mut minus = state.clone();
        disc.add_to_free(&mut minus, &e, -1.0);
        let rp = disc.assemble(&plus, &p, Some(&mms)).unwrap().residual;
        let rm = disc.assemble(&minus, &p, Some(&mms)).unwrap().residual;
        let col: Vec<f64> = (0..nf).map(|i| sys.jacobian.get(i, j)).collect();
        let scale = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..nf {
            let fd = (rp[i] - rm[i]) / (2.0 * d);
            worst = worst.max((fd - col[i]).abs() / scale);
        }
    }
    worst
}

/// Largest relative gap between the `q = 0` coupled assembly and the
/// separate `u` and `Q` assemblies, over residual, Jacobian and energy.
pub fn block_diagonal_error(deg_u: usize, deg_q: usize, variant: FormVariant) -> f64 {
    let p = ModelParams {
        variant,
        ..ModelParams::default()
    };
    let coupled = Discretization::new(4, deg_u, deg_q, ProblemKind::Coupled).unwrap();
    let p1 = Discretization::new(4, deg_u, deg_q, ProblemKind::P1).unwrap();
    let p2 = Discretization::new(4, deg_u, deg_q, ProblemKind::P2).unwrap();
    let state = perturbed_state(&coupled, 17);
    let only_u = SystemState {
        u: state.u.clone(),
        ..Default::default()
    };
    let only_q = SystemState {
        q11: state.q11.clone(),
        q12: state.q12.clone(),
        ..Default::default()
    };
    let c = coupled.assemble(&state, &p, Some(&ManufacturedCase::new(ProblemKind::Coupled))).unwrap();
    let a = p1.assemble(&only_u, &p, Some(&ManufacturedCase::new(ProblemKind::P1))).unwrap();
    let b = p2.assemble(&only_q, &p, Some(&ManufacturedCase::new(ProblemKind::P2))).unwrap();
    let nu = p1.n_free();
    assert_eq!(coupled.n_free(), nu + p2.n_free());
    let gap = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs()).max(1.0);
    let mut worst = gap(c.energy, a.energy + b.energy);
    for (i, r) in c.residual.iter().enumerate() {
        let expect = if i < nu { a.residual[i] } else { b.residual[i - nu] };
        worst = worst.max(gap(*r, expect));
    }
    for (i, j, v) in c.jacobian.entries() {
        let expect = match (i < nu, j < nu) {
            (true, true) => a.jacobian.get(i, j),
            (false, false) => b.jacobian.get(i - nu, j - nu),
            _ => 0.0,
        };
        worst = worst.max(gap(v, expect));
    }
    worst
}

/// Free-DOF position of every global DOF of one field, found by tagging
/// coefficients with their own index.
pub fn free_positions(disc: &Discretization, field: usize) -> Vec<Option<usize>> {
    let tag = |n: usize, on: bool| -> Vec<f64> { (0..n).map(|g| if on { g as f64 + 1.0 } else { 0.0 }).collect() };
    let state = SystemState {
        u: if disc.kind.has_u() { tag(disc.u_map.n_global, field == 0) } else { Vec::new() },
        q11: if disc.kind.has_q() { tag(disc.q_map.n_global, field == 1) } else { Vec::new() },
        q12: if disc.kind.has_q() { tag(disc.q_map.n_global, field == 2) } else { Vec::new() },
    };
    let n_global = if field == 0 { disc.u_map.n_global } else { disc.q_map.n_global };
    let mut pos = vec![None; n_global];
    for (i, v) in disc.free_vector(&state).into_iter().enumerate() {
        if v > 0.0 {
            pos[v as usize - 1] = Some(i);
        }
    }
    pos
}

fn mat(a: f64, b: f64) -> [[f64; 2]; 2] {
    [[a, b], [b, -a]]
}

fn ddot(x: &[[f64; 2]; 2], y: &[[f64; 2]; 2]) -> f64 {
    x[0][0] * y[0][0] + x[0][1] * y[0][1] + x[1][0] * y[1][0] + x[1][1] * y[1][1]
}

/// `B(Ψ, Φ, Θ, Ξ) = 4l/3 ∫ (Ψ:Φ)(Θ:Ξ) + 2 (Ψ:Θ)(Φ:Ξ)` at one point.
fn quartic(l: f64, psi: &[[f64; 2]; 2], phi: &[[f64; 2]; 2], theta: &[[f64; 2]; 2], xi: &[[f64; 2]; 2]) -> f64 {
    4.0 * l / 3.0 * (ddot(psi, phi) * ddot(theta, xi) + 2.0 * ddot(psi, theta) * ddot(phi, xi))
}

/// Residual of the unforced `Q` problem written with full tensors,
/// `K ∫ ∇Q:∇P + B(Q,Q,Q,P) - 2l ∫ Q:P`, against the component assembly;
/// largest gap relative to the residual's max-norm.
pub fn tensor_form_error(deg: usize) -> f64 {
    let p = ModelParams::default();
    let (k, l) = (p.k, p.l);
    let disc = Discretization::new(3, 2, deg, ProblemKind::P2).unwrap();
    let state = perturbed_state(&disc, 23);
    let assembled = disc.assemble(&state, &p, None).unwrap().residual;

    let rule = cell_rule(deg, RuleKind::Residual).unwrap();
    let tab = tabulate(deg, &rule.points).unwrap();
    let h = disc.mesh.h;
    let map = &disc.q_map;
    let mut r = [vec![0.0; map.n_global], vec![0.0; map.n_global]];
    for cell in 0..disc.mesh.n_cells() {
        let dofs = &map.cell_to_global[cell];
        for (pt, w) in rule.weights.iter().enumerate() {
            let w = w * h * h;
            let mut qv = [0.0; 2];
            let mut gq = [[0.0; 2]; 2];
            for (i, &g) in dofs.iter().enumerate() {
                let (v, d) = (tab.values[pt][i], tab.gradients[pt][i]);
                for (c, coeff) in [state.q11[g], state.q12[g]].into_iter().enumerate() {
                    qv[c] += coeff * v;
                    gq[c][0] += coeff * d[0] / h;
                    gq[c][1] += coeff * d[1] / h;
                }
            }
            let q = mat(qv[0], qv[1]);
            let dq = [mat(gq[0][0], gq[1][0]), mat(gq[0][1], gq[1][1])];
            for (i, &g) in dofs.iter().enumerate() {
                let (v, d) = (tab.values[pt][i], tab.gradients[pt][i]);
                for (c, out) in r.iter_mut().enumerate() {
                    let (pa, pb) = if c == 0 { (1.0, 0.0) } else { (0.0, 1.0) };
                    let pm = mat(pa * v, pb * v);
                    let dp = [mat(pa * d[0] / h, pb * d[0] / h), mat(pa * d[1] / h, pb * d[1] / h)];
                    let a_n = k * (ddot(&dq[0], &dp[0]) + ddot(&dq[1], &dp[1]));
                    let b_n = quartic(l, &q, &q, &q, &pm);
                    let c_n = -2.0 * l * ddot(&q, &pm);
                    out[g] += w * (a_n + b_n + c_n);
                }
            }
        }
    }
    let scale = assembled.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    for (field, rf) in [(1, &r[0]), (2, &r[1])] {
        for (g, pos) in free_positions(&disc, field).into_iter().enumerate() {
            if let Some(i) = pos {
                worst = worst.max((assembled[i] - rf[g]).abs() / scale);
            }
        }
    }
    worst
}

/// For the interpolant of a global polynomial of degree `deg`: the squared
/// gradient-jump seminorm and the relative change in energy when the
/// penalty grows from 1 to 1e4.
pub fn c1_jump_and_penalty(deg: usize) -> (f64, f64) {
    let disc = Discretization::new(3, deg, 1, ProblemKind::P1).unwrap();
    let poly = |p: [f64; 2]| p[0].powi(deg as i32) * p[1] - 2.0 * p[0] * p[1].powi(2) + 0.5;
    let state = SystemState {
        u: interpolate(&disc.u_map, poly),
        ..Default::default()
    };
    let jump = jump_seminorm_sq(&disc.u_map, &disc.mesh, &state.u).unwrap();
    let energy = |eps: f64| {
        let p = ModelParams {
            epsilon: eps,
            variant: FormVariant::Inconsistent,
            ..ModelParams::default()
        };
        disc.assemble(&state, &p, None).unwrap().energy
    };
    let (e1, e2) = (energy(1.0), energy(1e4));
    (jump, (e1 - e2).abs() / e1.abs())
}

/// Largest error of every Gauss rule on monomials it should integrate
/// exactly: `x^k`, `k <= 2n - 1` in 1D and `x^a y^b` on the square.
pub fn quadrature_exactness_error() -> f64 {
    let mut worst = 0.0f64;
    for n in 1..=MAX_POINTS_1D {
        let line = gauss_1d(n).unwrap();
        for k in 0..2 * n {
            let got = line.integrate(|[x]| x.powi(k as i32));
            worst = worst.max((got - 1.0 / (k as f64 + 1.0)).abs());
        }
        if n <= 8 {
            let square = tensor_rule(n).unwrap();
            for a in 0..2 * n {
                for b in 0..2 * n {
                    let got = square.integrate(|[x, y]| x.powi(a as i32) * y.powi(b as i32));
                    worst = worst.max((got - 1.0 / ((a + 1) * (b + 1)) as f64).abs());
                }
            }
        }
    }
    worst
}

// fourth-order central stencils on values only
fn d1(f: &dyn Fn(f64) -> f64, h: f64) -> f64 {
    (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h)
}

fn d2(f: &dyn Fn(f64) -> f64, h: f64) -> f64 {
    (-f(-2.0 * h) + 16.0 * f(-h) - 30.0 * f(0.0) + 16.0 * f(h) - f(2.0 * h)) / (12.0 * h * h)
}

fn d4(f: &dyn Fn(f64) -> f64, h: f64) -> f64 {
    let c = [-1.0 / 6.0, 2.0, -13.0 / 2.0, 28.0 / 3.0, -13.0 / 2.0, 2.0, -1.0 / 6.0];
    c.iter().enumerate().map(|(i, c)| c * f((i as f64 - 3.0) * h)).sum::<f64>() / h.powi(4)
}

type Field = dyn Fn([f64; 2]) -> f64;

fn dxx(f: &Field, p: [f64; 2], h: f64) -> f64 {
    d2(&|t| f([p[0] + t, p[1]]), h)
}

fn dyy(f: &Field, p: [f64; 2], h: f64) -> f64 {
    d2(&|t| f([p[0], p[1] + t]), h)
}

fn dxy(f: &Field, p: [f64; 2], h: f64) -> f64 {
    d1(&|s| d1(&|t| f([p[0] + s, p[1] + t]), h), h)
}

/// Left-hand sides of the three manufactured equations, built from finite
/// differences of the exact field values alone.
pub fn strong_operators_fd(p: [f64; 2], params: &ModelParams, h: f64) -> [f64; 3] {
    let ModelParams { a1, a2, a3, b, k, l, q, .. } = *params;
    let u = |x: [f64; 2]| exact_fields(x).u.value;
    let q11 = |x: [f64; 2]| exact_fields(x).q11.value;
    let q12 = |x: [f64; 2]| exact_fields(x).q12.value;
    let (uv, a, c) = (u(p), q11(p), q12(p));
    let s = a * a + c * c;
    let (q2, q4) = (q * q, q.powi(4));
    let (uxx, uyy, uxy) = (dxx(&u, p, h), dyy(&u, p, h), dxy(&u, p, h));
    let lap = |f: &Field| dxx(f, p, h) + dyy(f, p, h);
    let s1 = 4.0 * b * q4 * uv * uv * a + 2.0 * b * q2 * uv * (uxx - uyy) - 2.0 * k * lap(&q11) - 4.0 * l * a
        + 16.0 * l * a * s;
    let s2 = 4.0 * b * q4 * uv * uv * c + 4.0 * b * q2 * uv * uxy - 2.0 * k * lap(&q12) - 4.0 * l * c
        + 16.0 * l * c * s;
    let bilap = d4(&|t| u([p[0] + t, p[1]]), h)
        + 2.0 * d2(&|s| d2(&|t| u([p[0] + s, p[1] + t]), h), h)
        + d4(&|t| u([p[0], p[1] + t]), h);
    let t1 = (a + 0.5) * uxx + (0.5 - a) * uyy + 2.0 * c * uxy;
    let um11 = move |x: [f64; 2]| u(x) * (q11(x) + 0.5);
    let um22 = move |x: [f64; 2]| u(x) * (0.5 - q11(x));
    let um12 = move |x: [f64; 2]| u(x) * q12(x);
    let t2 = dxx(&um11, p, h) + dyy(&um22, p, h) + 2.0 * dxy(&um12, p, h);
    let s3 = a1 * uv + a2 * uv * uv + a3 * uv.powi(3) + 2.0 * b * bilap + b * q4 * (4.0 * s + 1.0) * uv
        + 2.0 * b * q2 * (t1 + t2);
    [s1, s2, s3]
}

/// Largest relative gap between closed-form sources and the finite-difference
/// strong operators at `count` random interior points.
pub fn source_fd_error(params: &ModelParams, count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let p = [0.05 + 0.9 * rng.random::<f64>(), 0.05 + 0.9 * rng.random::<f64>()];
        let exact = sources(p, params);
        let fd = strong_operators_fd(p, params, 1e-3);
        for (e, f) in exact.iter().zip(fd) {
            worst = worst.max((e - f).abs() / e.abs().max(1e-300));
        }
    }
    worst
}
