//! Residual, Jacobian and energy assembly for the smectic density `u`, the
//! two-dimensional Q-tensor `(Q11, Q12)` and their coupling.
//!
//! The discrete energy is
//!
//! ```text
//! E = Σ_T ∫_T [ B|D²u|² + a1/2 u² + a2/3 u³ + a3/4 u⁴
//!             + 2Bq² u M:D²u + Bq⁴ u² |M|²
//!             + K(|∇Q11|² + |∇Q12|²) - 2l|q|² + 4l|q|⁴ ]
//!   + Σ_{e∈E_I} ∫_e [ -2B {{∂²u/∂ν²}} [[∇u]]   (consistent variant only)
//!                    + Bε/h_e³ [[∇u]]² ]
//!   - 2B ∫_∂Ω (D²u_b ∇u)·ν - ∫_Ω (s1 Q11 + s2 Q12 + s3 u)
//! ```
//!
//! with `M = Q + I/2` and `|q|² = Q11² + Q12²`. The residual is its gradient
//! with respect to the free coefficients and the Jacobian its Hessian.

use crate::basis::{pullback_scalings, tabulate};
use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::mesh::{unit_square_mesh, FacetInfo, Mesh, Side};
use crate::quadrature::{cell_rule, facet_rule, QuadratureRule, RuleKind};
use crate::space::{build_dofmap, DofMap, SystemState};

/// Whether the symmetric average-times-jump facet terms are included.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormVariant {
    Consistent,
    Inconsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    /// Fourth-order density problem alone (`q = 0`).
    P1,
    /// Q-tensor problem alone (`q = 0`).
    P2,
    /// Full system in `(u, Q11, Q12)`.
    Coupled,
}

impl ProblemKind {
    pub fn has_u(self) -> bool {
        matches!(self, ProblemKind::P1 | ProblemKind::Coupled)
    }

    pub fn has_q(self) -> bool {
        matches!(self, ProblemKind::P2 | ProblemKind::Coupled)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    /// Nematic–smectic coupling `B`.
    pub b: f64,
    pub k: f64,
    pub l: f64,
    /// Wave number.
    pub q: f64,
    pub epsilon: f64,
    pub variant: FormVariant,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            a1: -10.0,
            a2: 0.0,
            a3: 10.0,
            b: 1e-5,
            k: 0.3,
            l: 30.0,
            q: 0.0,
            epsilon: 1.0,
            variant: FormVariant::Consistent,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.a3 > 0.0, "a3 must be positive"),
            (self.b > 0.0, "B must be positive"),
            (self.k > 0.0, "K must be positive"),
            (self.l > 0.0, "l must be positive"),
            (self.q >= 0.0, "q must be non-negative"),
            (self.epsilon > 0.0, "epsilon must be positive"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidArgument(msg.into()));
            }
        }
        let all = [self.a1, self.a2, self.a3, self.b, self.k, self.l, self.q, self.epsilon];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("model parameters must be finite".into()));
        }
        Ok(())
    }
}

/// Volume sources and boundary Hessian data entering the right-hand side.
pub trait Forcing {
    /// `(s1, s2, s3)` at a physical point: sources of the `Q11`, `Q12` and `u` equations.
    fn source(&self, p: [f64; 2], params: &ModelParams) -> [f64; 3];

    /// `D²u_b` at a boundary point, used by the natural boundary load.
    fn boundary_hessian(&self, p: [f64; 2]) -> [[f64; 2]; 2];
}

/// Reduced (free-DOF) residual, Jacobian and energy at a state.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub residual: Vec<f64>,
    pub jacobian: SparseMatrix,
    pub energy: f64,
}

/// Basis data scaled to a physical cell of side `h`, stored point-major.
#[derive(Debug, Clone)]
pub struct ScaledTab {
    pub nb: usize,
    pub np: usize,
    pub val: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
    /// `[xx, xy, yy]`
    pub hess: Vec<[f64; 3]>,
}

impl ScaledTab {
    pub fn new(degree: usize, points: &[[f64; 2]], h: f64) -> Result<Self> {
        let tab = tabulate(degree, points)?;
        let (gs, hs) = pullback_scalings(h);
        let nb = tab.n_basis();
        let np = points.len();
        let mut val = Vec::with_capacity(nb * np);
        let mut grad = Vec::with_capacity(nb * np);
        let mut hess = Vec::with_capacity(nb * np);
        for p in 0..np {
            for i in 0..nb {
                val.push(tab.values[p][i]);
                let g = tab.gradients[p][i];
                grad.push([g[0] * gs, g[1] * gs]);
                let hh = tab.hessians[p][i];
                hess.push([hh[0][0] * hs, hh[0][1] * hs, hh[1][1] * hs]);
            }
        }
        Ok(Self { nb, np, val, grad, hess })
    }

    /// Value, gradient and `[xx, xy, yy]` Hessian of `coeffs` at point `p`.
    #[inline]
    pub fn eval(&self, p: usize, coeffs: &[f64]) -> (f64, [f64; 2], [f64; 3]) {
        let base = p * self.nb;
        let mut v = 0.0;
        let mut g = [0.0; 2];
        let mut h = [0.0; 3];
        for (i, &c) in coeffs.iter().enumerate() {
            v += c * self.val[base + i];
            let gi = self.grad[base + i];
            g[0] += c * gi[0];
            g[1] += c * gi[1];
            let hi = self.hess[base + i];
            h[0] += c * hi[0];
            h[1] += c * hi[1];
            h[2] += c * hi[2];
        }
        (v, g, h)
    }
}

/// Dense local residual, Jacobian (row-major) and energy contribution.
#[derive(Debug, Clone)]
pub struct LocalSystem {
    pub n: usize,
    pub res: Vec<f64>,
    pub jac: Vec<f64>,
    pub energy: f64,
}

impl LocalSystem {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            res: vec![0.0; n],
            jac: vec![0.0; n * n],
            energy: 0.0,
        }
    }

    pub fn clear(&mut self) {
        self.res.iter_mut().for_each(|v| *v = 0.0);
        self.jac.iter_mut().for_each(|v| *v = 0.0);
        self.energy = 0.0;
    }

    #[inline]
    fn add_jac(&mut self, i: usize, j: usize, v: f64) {
        self.jac[i * self.n + j] += v;
    }

    pub fn jac_entry(&self, i: usize, j: usize) -> f64 {
        self.jac[i * self.n + j]
    }
}

#[inline]
fn hess_dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + 2.0 * a[1] * b[1] + a[2] * b[2]
}

/// Bulk density terms of the `u` equation on one cell:
/// `2B ∫ D²u:D²t + ∫ (a1 u + a2 u² + a3 u³) t` and their derivatives.
/// `weights` already include the cell area.
pub fn cell_kernel_u(params: &ModelParams, tab: &ScaledTab, weights: &[f64], u_local: &[f64], out: &mut LocalSystem, off: usize) {
    let nb = tab.nb;
    let two_b = 2.0 * params.b;
    for (p, &w) in weights.iter().enumerate() {
        let (u, _, hu) = tab.eval(p, u_local);
        let poly = params.a1 * u + params.a2 * u * u + params.a3 * u * u * u;
        let dpoly = params.a1 + 2.0 * params.a2 * u + 3.0 * params.a3 * u * u;
        out.energy += w
            * (params.b * hess_dot(&hu, &hu)
                + 0.5 * params.a1 * u * u
                + params.a2 * u * u * u / 3.0
                + 0.25 * params.a3 * u * u * u * u);
        let base = p * nb;
        let phi = &tab.val[base..base + nb];
        let hphi = &tab.hess[base..base + nb];
        for i in 0..nb {
            out.res[off + i] += w * (two_b * hess_dot(&hu, &hphi[i]) + poly * phi[i]);
            let wi = w * dpoly * phi[i];
            let hi = hphi[i];
            let row = (off + i) * out.n + off;
            for j in 0..nb {
                out.jac[row + j] += w * two_b * hess_dot(&hi, &hphi[j]) + wi * phi[j];
            }
        }
    }
}

/// Interior-facet terms of the C⁰ interior penalty form for `u`.
///
/// Local numbering is `[minus cell | plus cell]`. Always adds the penalty
/// `2Bε/h_e³ ∫ [[∇u]][[∇t]]`; the consistent variant also adds
/// `-2B ∫ ({{∂²u/∂ν²}}[[∇t]] + {{∂²t/∂ν²}}[[∇u]])`.
#[allow(clippy::too_many_arguments)]
pub fn facet_kernel_u(
    params: &ModelParams,
    facet: &FacetInfo,
    tab_minus: &ScaledTab,
    tab_plus: &ScaledTab,
    weights: &[f64],
    u_minus: &[f64],
    u_plus: &[f64],
    out: &mut LocalSystem,
) -> Result<()> {
    if !facet.is_interior() {
        return Err(Error::InvalidArgument(format!(
            "facet {} is on the boundary; interior penalty terms live on interior facets",
            facet.facet_id
        )));
    }
    let nb = tab_minus.nb;
    let n = 2 * nb;
    let nu = facet.normal;
    let penalty = 2.0 * params.b * params.epsilon / facet.h_e.powi(3);
    let consistent = params.variant == FormVariant::Consistent;
    let two_b = 2.0 * params.b;
    let mut jump = vec![0.0; n];
    let mut avg = vec![0.0; n];
    let normal_second = |h: &[f64; 3]| nu[0] * nu[0] * h[0] + 2.0 * nu[0] * nu[1] * h[1] + nu[1] * nu[1] * h[2];
    for (p, &w) in weights.iter().enumerate() {
        let base = p * nb;
        for i in 0..nb {
            let gm = tab_minus.grad[base + i];
            let gp = tab_plus.grad[base + i];
            jump[i] = gm[0] * nu[0] + gm[1] * nu[1];
            jump[nb + i] = -(gp[0] * nu[0] + gp[1] * nu[1]);
            avg[i] = 0.5 * normal_second(&tab_minus.hess[base + i]);
            avg[nb + i] = 0.5 * normal_second(&tab_plus.hess[base + i]);
        }
        let coeff = |i: usize| if i < nb { u_minus[i] } else { u_plus[i - nb] };
        let ju: f64 = (0..n).map(|i| coeff(i) * jump[i]).sum();
        let au: f64 = (0..n).map(|i| coeff(i) * avg[i]).sum();
        out.energy += w * 0.5 * penalty * ju * ju;
        if consistent {
            out.energy -= w * two_b * au * ju;
        }
        for i in 0..n {
            let mut r = penalty * ju * jump[i];
            if consistent {
                r -= two_b * (au * jump[i] + avg[i] * ju);
            }
            out.res[i] += w * r;
            for j in 0..n {
                let mut v = penalty * jump[i] * jump[j];
                if consistent {
                    v -= two_b * (avg[i] * jump[j] + jump[i] * avg[j]);
                }
                out.add_jac(i, j, w * v);
            }
        }
    }
    Ok(())
}

/// Landau–de Gennes terms for the two Q components on one cell.
#[allow(clippy::too_many_arguments)]
pub fn cell_kernel_q(
    params: &ModelParams,
    tab: &ScaledTab,
    weights: &[f64],
    q11: &[f64],
    q12: &[f64],
    out: &mut LocalSystem,
    off11: usize,
    off12: usize,
) {
    let nb = tab.nb;
    let (k, l) = (params.k, params.l);
    for (p, &w) in weights.iter().enumerate() {
        let (a, ga, _) = tab.eval(p, q11);
        let (b, gb, _) = tab.eval(p, q12);
        let s = a * a + b * b;
        out.energy += w * (k * (ga[0] * ga[0] + ga[1] * ga[1] + gb[0] * gb[0] + gb[1] * gb[1]) - 2.0 * l * s
            + 4.0 * l * s * s);
        let bulk = -4.0 * l + 16.0 * l * s;
        let base = p * nb;
        let psi = &tab.val[base..base + nb];
        let gpsi = &tab.grad[base..base + nb];
        for i in 0..nb {
            let gi = gpsi[i];
            out.res[off11 + i] += w * (2.0 * k * (ga[0] * gi[0] + ga[1] * gi[1]) + bulk * a * psi[i]);
            out.res[off12 + i] += w * (2.0 * k * (gb[0] * gi[0] + gb[1] * gi[1]) + bulk * b * psi[i]);
            for j in 0..nb {
                let gj = gpsi[j];
                let stiff = 2.0 * k * (gi[0] * gj[0] + gi[1] * gj[1]);
                let mass = psi[i] * psi[j];
                out.add_jac(off11 + i, off11 + j, w * (stiff + (bulk + 32.0 * l * a * a) * mass));
                out.add_jac(off12 + i, off12 + j, w * (stiff + (bulk + 32.0 * l * b * b) * mass));
                let cross = w * 32.0 * l * a * b * mass;
                out.add_jac(off11 + i, off12 + j, cross);
                out.add_jac(off12 + i, off11 + j, cross);
            }
        }
    }
}

/// Coupling terms from `B|D²u + q²(Q + I/2)u|²` beyond `B|D²u|²`.
///
/// The `u` test function enters through `M:D²t` without facet corrections.
#[allow(clippy::too_many_arguments)]
pub fn cell_kernel_coupling(
    params: &ModelParams,
    tab_u: &ScaledTab,
    tab_q: &ScaledTab,
    weights: &[f64],
    u_local: &[f64],
    q11: &[f64],
    q12: &[f64],
    out: &mut LocalSystem,
    offs: [usize; 3],
) {
    if params.q == 0.0 {
        return;
    }
    let [ou, oa, ob] = offs;
    let nu = tab_u.nb;
    let nq = tab_q.nb;
    let bq2 = 2.0 * params.b * params.q * params.q;
    let bq4 = params.b * params.q.powi(4);
    let mut mphi = vec![0.0; nu];
    for (p, &w) in weights.iter().enumerate() {
        let (u, _, hu) = tab_u.eval(p, u_local);
        let (a, _, _) = tab_q.eval(p, q11);
        let (b, _, _) = tab_q.eval(p, q12);
        let s = a * a + b * b;
        let m = [a + 0.5, b, 0.5 - a];
        let mdot = |h: &[f64; 3]| m[0] * h[0] + 2.0 * m[1] * h[1] + m[2] * h[2];
        let mh = mdot(&hu);
        let diff = hu[0] - hu[2];
        out.energy += w * (bq2 * u * mh + bq4 * u * u * (2.0 * s + 0.5));

        let ub = p * nu;
        let qb = p * nq;
        let phi = &tab_u.val[ub..ub + nu];
        let hphi = &tab_u.hess[ub..ub + nu];
        let psi = &tab_q.val[qb..qb + nq];
        for i in 0..nu {
            mphi[i] = mdot(&hphi[i]);
        }
        let mass_u = bq4 * (4.0 * s + 1.0);
        for i in 0..nu {
            out.res[ou + i] += w * (bq2 * (phi[i] * mh + u * mphi[i]) + mass_u * u * phi[i]);
            for j in 0..nu {
                out.add_jac(
                    ou + i,
                    ou + j,
                    w * (bq2 * (phi[i] * mphi[j] + phi[j] * mphi[i]) + mass_u * phi[i] * phi[j]),
                );
            }
            // ∂(u-residual)/∂Q11 and ∂/∂Q12, mirrored into the Q rows
            let hi = hphi[i];
            let da = bq2 * (phi[i] * diff + u * (hi[0] - hi[2])) + 8.0 * bq4 * a * u * phi[i];
            let db = bq2 * (2.0 * phi[i] * hu[1] + 2.0 * u * hi[1]) + 8.0 * bq4 * b * u * phi[i];
            for j in 0..nq {
                let va = w * da * psi[j];
                let vb = w * db * psi[j];
                out.add_jac(ou + i, oa + j, va);
                out.add_jac(oa + j, ou + i, va);
                out.add_jac(ou + i, ob + j, vb);
                out.add_jac(ob + j, ou + i, vb);
            }
        }
        let u2 = u * u;
        for i in 0..nq {
            out.res[oa + i] += w * (bq2 * u * diff + 4.0 * bq4 * u2 * a) * psi[i];
            out.res[ob + i] += w * (2.0 * bq2 * u * hu[1] + 4.0 * bq4 * u2 * b) * psi[i];
            for j in 0..nq {
                let v = w * 4.0 * bq4 * u2 * psi[i] * psi[j];
                out.add_jac(oa + i, oa + j, v);
                out.add_jac(ob + i, ob + j, v);
            }
        }
    }
}

/// `L(t) = 2B ∫_e (D²u_b ∇t)·ν` on one boundary facet, as a load over the
/// cell's `u` basis. Also returns `L(u)` for the energy.
pub fn boundary_load_u(
    params: &ModelParams,
    facet: &FacetInfo,
    tab: &ScaledTab,
    rule: &QuadratureRule<1>,
    boundary_hessian: &dyn Fn([f64; 2]) -> [[f64; 2]; 2],
    u_local: &[f64],
    load: &mut [f64],
) -> f64 {
    let nb = tab.nb;
    let nu = facet.normal;
    let mut l_of_u = 0.0;
    for (p, (pt, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
        let x = facet.point_at(pt[0]);
        let hb = boundary_hessian(x);
        // D²u_b ν, paired with ∇t
        let hn = [hb[0][0] * nu[0] + hb[0][1] * nu[1], hb[1][0] * nu[0] + hb[1][1] * nu[1]];
        let wq = 2.0 * params.b * w * facet.h_e;
        let base = p * nb;
        for i in 0..nb {
            let g = tab.grad[base + i];
            let v = wq * (hn[0] * g[0] + hn[1] * g[1]);
            load[i] += v;
            l_of_u += v * u_local[i];
        }
    }
    l_of_u
}

/// Compressed-row sparsity pattern over free DOFs.
#[derive(Debug, Clone)]
struct Pattern {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl Pattern {
    fn build(n: usize, stencils: impl Iterator<Item = Vec<usize>>) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for s in stencils {
            for &r in &s {
                rows[r].extend_from_slice(&s);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(&r);
            row_ptr.push(col_idx.len());
        }
        Self { row_ptr, col_idx }
    }

    #[inline]
    fn position(&self, row: usize, col: usize) -> usize {
        let lo = self.row_ptr[row];
        let hi = self.row_ptr[row + 1];
        lo + self.col_idx[lo..hi]
            .binary_search(&col)
            .expect("entry outside the assembled sparsity pattern")
    }
}

const NONE: usize = usize::MAX;

/// Mesh, spaces, free-DOF numbering and precomputed tabulations for one
/// problem kind. Free unknowns are ordered `[u | Q11 | Q12]` over the fields
/// the kind solves for.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub kind: ProblemKind,
    pub u_map: DofMap,
    pub q_map: DofMap,
    /// Global DOF to free index, or `usize::MAX` for Dirichlet DOFs.
    u_free: Vec<usize>,
    q11_free: Vec<usize>,
    q12_free: Vec<usize>,
    n_free: usize,
    pattern: Pattern,
    cell_rule: QuadratureRule<2>,
    cell_weights: Vec<f64>,
    u_cell: ScaledTab,
    q_cell: ScaledTab,
    facet_rule: QuadratureRule<1>,
    facet_weights: Vec<f64>,
    /// `u` basis on each reference edge, indexed by [`side_index`].
    u_side: Vec<ScaledTab>,
}

fn side_index(s: Side) -> usize {
    match s {
        Side::Left => 0,
        Side::Right => 1,
        Side::Bottom => 2,
        Side::Top => 3,
    }
}

impl Discretization {
    pub fn new(n: usize, deg_u: usize, deg_q: usize, kind: ProblemKind) -> Result<Self> {
        let mesh = unit_square_mesh(n)?;
        let u_map = build_dofmap(&mesh, deg_u)?;
        let q_map = build_dofmap(&mesh, deg_q)?;

        let mut n_free = 0;
        let mut number = |map: &DofMap, active: bool| -> Vec<usize> {
            (0..map.n_global)
                .map(|g| {
                    if active && !map.is_boundary(g) {
                        n_free += 1;
                        n_free - 1
                    } else {
                        NONE
                    }
                })
                .collect()
        };
        let u_free = number(&u_map, kind.has_u());
        let q11_free = number(&q_map, kind.has_q());
        let q12_free = number(&q_map, kind.has_q());

        let deg = match kind {
            ProblemKind::P1 => deg_u,
            ProblemKind::P2 => deg_q,
            ProblemKind::Coupled => deg_u.max(deg_q),
        };
        let cell_rule = cell_rule(deg, RuleKind::Residual)?;
        let area = mesh.h * mesh.h;
        let cell_weights = cell_rule.weights.iter().map(|w| w * area).collect();
        let u_cell = ScaledTab::new(deg_u, &cell_rule.points, mesh.h)?;
        let q_cell = ScaledTab::new(deg_q, &cell_rule.points, mesh.h)?;
        let facet_rule = facet_rule(deg_u)?;
        let facet_weights = facet_rule.weights.iter().map(|w| w * mesh.h).collect();
        let u_side = Side::ALL
            .iter()
            .map(|s| {
                let pts: Vec<[f64; 2]> = facet_rule.points.iter().map(|t| s.reference_point(t[0])).collect();
                ScaledTab::new(deg_u, &pts, mesh.h)
            })
            .collect::<Result<Vec<_>>>()?;

        let mut disc = Self {
            mesh,
            kind,
            u_map,
            q_map,
            u_free,
            q11_free,
            q12_free,
            n_free,
            pattern: Pattern {
                row_ptr: vec![0],
                col_idx: Vec::new(),
            },
            cell_rule,
            cell_weights,
            u_cell,
            q_cell,
            facet_rule,
            facet_weights,
            u_side,
        };
        disc.pattern = disc.build_pattern();
        Ok(disc)
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn cell_rule(&self) -> &QuadratureRule<2> {
        &self.cell_rule
    }

    /// Free indices of the cell's local unknowns, `[u | Q11 | Q12]` over
    /// active fields, `usize::MAX` for Dirichlet DOFs.
    fn cell_free_indices(&self, cell: usize, out: &mut Vec<usize>) {
        out.clear();
        if self.kind.has_u() {
            out.extend(self.u_map.cell_to_global[cell].iter().map(|&g| self.u_free[g]));
        }
        if self.kind.has_q() {
            let dofs = &self.q_map.cell_to_global[cell];
            out.extend(dofs.iter().map(|&g| self.q11_free[g]));
            out.extend(dofs.iter().map(|&g| self.q12_free[g]));
        }
    }

    fn facet_free_indices(&self, facet: &FacetInfo, out: &mut Vec<usize>) {
        out.clear();
        let plus = facet.cell_plus.expect("interior facet");
        for c in [facet.cell_minus, plus] {
            out.extend(self.u_map.cell_to_global[c].iter().map(|&g| self.u_free[g]));
        }
    }

    fn build_pattern(&self) -> Pattern {
        let mut stencils = Vec::new();
        let mut buf = Vec::new();
        for c in 0..self.mesh.n_cells() {
            self.cell_free_indices(c, &mut buf);
            stencils.push(buf.iter().copied().filter(|&g| g != NONE).collect::<Vec<_>>());
        }
        if self.kind.has_u() {
            for f in &self.mesh.interior_facets {
                self.facet_free_indices(f, &mut buf);
                stencils.push(buf.iter().copied().filter(|&g| g != NONE).collect());
            }
        }
        Pattern::build(self.n_free, stencils.into_iter())
    }

    fn check_state(&self, state: &SystemState) -> Result<()> {
        let check = |what, v: &Vec<f64>, map: &DofMap, active: bool| {
            if active && v.len() != map.n_global {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: map.n_global,
                    actual: v.len(),
                });
            }
            Ok(())
        };
        check("u coefficients", &state.u, &self.u_map, self.kind.has_u())?;
        check("Q11 coefficients", &state.q11, &self.q_map, self.kind.has_q())?;
        check("Q12 coefficients", &state.q12, &self.q_map, self.kind.has_q())
    }

    /// Free-DOF values of `state`, in system order.
    pub fn free_vector(&self, state: &SystemState) -> Vec<f64> {
        let mut x = vec![0.0; self.n_free];
        self.for_each_free(|field, g, i| x[i] = field_of(state, field)[g]);
        x
    }

    /// Adds `scale * dx` to the free DOFs of `state`; Dirichlet DOFs are untouched.
    pub fn add_to_free(&self, state: &mut SystemState, dx: &[f64], scale: f64) {
        let mut updates = Vec::with_capacity(self.n_free);
        self.for_each_free(|field, g, i| updates.push((field, g, i)));
        for (field, g, i) in updates {
            field_of_mut(state, field)[g] += scale * dx[i];
        }
    }

    fn for_each_free(&self, mut f: impl FnMut(usize, usize, usize)) {
        for (field, map) in [&self.u_free, &self.q11_free, &self.q12_free].into_iter().enumerate() {
            for (g, &i) in map.iter().enumerate() {
                if i != NONE {
                    f(field, g, i);
                }
            }
        }
    }

    /// Sum of `L(t)` over boundary facets for every free `u` test function.
    pub fn boundary_load(&self, params: &ModelParams, boundary_hessian: &dyn Fn([f64; 2]) -> [[f64; 2]; 2]) -> Vec<f64> {
        let mut load = vec![0.0; self.n_free];
        if !self.kind.has_u() {
            return load;
        }
        let zeros = vec![0.0; self.u_map.n_local()];
        let mut local = vec![0.0; self.u_map.n_local()];
        for f in &self.mesh.boundary_facets {
            local.iter_mut().for_each(|v| *v = 0.0);
            let tab = &self.u_side[side_index(f.side_minus)];
            boundary_load_u(params, f, tab, &self.facet_rule, boundary_hessian, &zeros, &mut local);
            for (&g, v) in self.u_map.cell_to_global[f.cell_minus].iter().zip(&local) {
                let i = self.u_free[g];
                if i != NONE {
                    load[i] += v;
                }
            }
        }
        load
    }

    /// Residual, Jacobian and energy over free DOFs at `state`.
    ///
    /// Dirichlet DOFs of `state` must already hold the boundary data. With a
    /// forcing, its volume sources and boundary load enter the residual.
    pub fn assemble(&self, state: &SystemState, params: &ModelParams, forcing: Option<&dyn Forcing>) -> Result<AssembledSystem> {
        self.check_state(state)?;
        params.validate()?;
        let has_u = self.kind.has_u();
        let has_q = self.kind.has_q();
        let nu = if has_u { self.u_map.n_local() } else { 0 };
        let nq = if has_q { self.q_map.n_local() } else { 0 };
        let n_local = nu + 2 * nq;
        let offs = [0, nu, nu + nq];

        let mut residual = vec![0.0; self.n_free];
        let mut values = vec![0.0; self.pattern.col_idx.len()];
        let mut energy = 0.0;

        let mut local = LocalSystem::new(n_local);
        let mut free = Vec::with_capacity(n_local);
        let mut ul = vec![0.0; self.u_map.n_local()];
        let mut al = vec![0.0; self.q_map.n_local()];
        let mut bl = vec![0.0; self.q_map.n_local()];

        for c in 0..self.mesh.n_cells() {
            local.clear();
            if has_u {
                self.u_map.gather(&state.u, c, &mut ul);
                cell_kernel_u(params, &self.u_cell, &self.cell_weights, &ul, &mut local, 0);
            }
            if has_q {
                self.q_map.gather(&state.q11, c, &mut al);
                self.q_map.gather(&state.q12, c, &mut bl);
                cell_kernel_q(params, &self.q_cell, &self.cell_weights, &al, &bl, &mut local, offs[1], offs[2]);
            }
            if self.kind == ProblemKind::Coupled {
                cell_kernel_coupling(params, &self.u_cell, &self.q_cell, &self.cell_weights, &ul, &al, &bl, &mut local, offs);
            }
            if let Some(forcing) = forcing {
                self.cell_sources(c, params, forcing, &ul, &al, &bl, &mut local, offs);
            }
            energy += local.energy;
            self.cell_free_indices(c, &mut free);
            self.scatter(&local, &free, &mut residual, &mut values);
        }

        if has_u {
            let mut fl = LocalSystem::new(2 * nu);
            let mut ur = vec![0.0; nu];
            for f in &self.mesh.interior_facets {
                fl.clear();
                let plus = f.cell_plus.expect("interior facet");
                self.u_map.gather(&state.u, f.cell_minus, &mut ul);
                self.u_map.gather(&state.u, plus, &mut ur);
                let tm = &self.u_side[side_index(f.side_minus)];
                let tp = &self.u_side[side_index(f.side_minus.opposite())];
                facet_kernel_u(params, f, tm, tp, &self.facet_weights, &ul, &ur, &mut fl)?;
                energy += fl.energy;
                self.facet_free_indices(f, &mut free);
                self.scatter(&fl, &free, &mut residual, &mut values);
            }
            if let Some(forcing) = forcing {
                let hess = |p: [f64; 2]| forcing.boundary_hessian(p);
                let mut load = vec![0.0; nu];
                for f in &self.mesh.boundary_facets {
                    load.iter_mut().for_each(|v| *v = 0.0);
                    self.u_map.gather(&state.u, f.cell_minus, &mut ul);
                    let tab = &self.u_side[side_index(f.side_minus)];
                    energy -= boundary_load_u(params, f, tab, &self.facet_rule, &hess, &ul, &mut load);
                    for (&g, v) in self.u_map.cell_to_global[f.cell_minus].iter().zip(&load) {
                        let i = self.u_free[g];
                        if i != NONE {
                            residual[i] -= v;
                        }
                    }
                }
            }
        }

        if residual.iter().chain(&values).any(|v| !v.is_finite()) || !energy.is_finite() {
            return Err(Error::NonFinite("assembly"));
        }
        let jacobian = SparseMatrix::from_csr(self.n_free, self.pattern.row_ptr.clone(), self.pattern.col_idx.clone(), values)?;
        Ok(AssembledSystem {
            residual,
            jacobian,
            energy,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn cell_sources(
        &self,
        cell: usize,
        params: &ModelParams,
        forcing: &dyn Forcing,
        ul: &[f64],
        al: &[f64],
        bl: &[f64],
        local: &mut LocalSystem,
        offs: [usize; 3],
    ) {
        let has_u = self.kind.has_u();
        let has_q = self.kind.has_q();
        for (p, (rp, &w)) in self.cell_rule.points.iter().zip(&self.cell_weights).enumerate() {
            let x = self.mesh.map_point(cell, *rp);
            let [s1, s2, s3] = forcing.source(x, params);
            if has_u {
                let t = &self.u_cell;
                let base = p * t.nb;
                let (u, _, _) = t.eval(p, ul);
                local.energy -= w * s3 * u;
                for i in 0..t.nb {
                    local.res[offs[0] + i] -= w * s3 * t.val[base + i];
                }
            }
            if has_q {
                let t = &self.q_cell;
                let base = p * t.nb;
                let (a, _, _) = t.eval(p, al);
                let (b, _, _) = t.eval(p, bl);
                local.energy -= w * (s1 * a + s2 * b);
                for i in 0..t.nb {
                    local.res[offs[1] + i] -= w * s1 * t.val[base + i];
                    local.res[offs[2] + i] -= w * s2 * t.val[base + i];
                }
            }
        }
    }

    fn scatter(&self, local: &LocalSystem, free: &[usize], residual: &mut [f64], values: &mut [f64]) {
        let n = local.n;
        for (i, &gi) in free.iter().enumerate() {
            if gi == NONE {
                continue;
            }
            residual[gi] += local.res[i];
            let row = &local.jac[i * n..(i + 1) * n];
            for (j, &gj) in free.iter().enumerate() {
                if gj == NONE {
                    continue;
                }
                values[self.pattern.position(gi, gj)] += row[j];
            }
        }
    }
}

fn field_of(state: &SystemState, field: usize) -> &Vec<f64> {
    match field {
        0 => &state.u,
        1 => &state.q11,
        _ => &state.q12,
    }
}

fn field_of_mut(state: &mut SystemState, field: usize) -> &mut Vec<f64> {
    match field {
        0 => &mut state.u,
        1 => &mut state.q11,
        _ => &mut state.q12,
    }
}
