//! Error norms against closed-form fields and observed convergence orders.

use crate::error::{Error, Result};
use crate::forms::ScaledTab;
use crate::mesh::{Mesh, Side};
use crate::mms::FieldJet;
use crate::quadrature::{cell_rule, facet_rule, RuleKind};

fn check_len(map_n: usize, coeffs: &[f64]) -> Result<()> {
    if coeffs.len() != map_n {
        return Err(Error::DimensionMismatch {
            what: "coefficient vector",
            expected: map_n,
            actual: coeffs.len(),
        });
    }
    Ok(())
}

/// Squared L², H¹-seminorm and broken H²-seminorm errors summed over components.
fn squared_errors(
    dofmap: &crate::space::DofMap,
    mesh: &Mesh,
    components: &[(&[f64], &dyn Fn([f64; 2]) -> FieldJet)],
) -> Result<[f64; 3]> {
    for (c, _) in components {
        check_len(dofmap.n_global, c)?;
    }
    let rule = cell_rule(dofmap.degree, RuleKind::Error)?;
    let tab = ScaledTab::new(dofmap.degree, &rule.points, mesh.h)?;
    let area = mesh.h * mesh.h;
    let mut local = vec![0.0; dofmap.n_local()];
    let mut acc = [0.0; 3];
    for cell in 0..mesh.n_cells() {
        for (coeffs, exact) in components {
            dofmap.gather(coeffs, cell, &mut local);
            for (p, (rp, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                let e = exact(mesh.map_point(cell, *rp));
                let (v, g, h) = tab.eval(p, &local);
                let w = w * area;
                acc[0] += w * (e.value - v).powi(2);
                acc[1] += w * ((e.grad[0] - g[0]).powi(2) + (e.grad[1] - g[1]).powi(2));
                acc[2] += w
                    * ((e.hess[0][0] - h[0]).powi(2) + 2.0 * (e.hess[0][1] - h[1]).powi(2) + (e.hess[1][1] - h[2]).powi(2));
            }
        }
    }
    Ok(acc)
}

/// `(‖e‖₀, ‖e‖₁)` with `‖e‖₁² = ‖e‖₀² + |e|₁²`.
pub fn error_l2_h1(
    dofmap: &crate::space::DofMap,
    mesh: &Mesh,
    coeffs: &[f64],
    exact: &dyn Fn([f64; 2]) -> FieldJet,
) -> Result<(f64, f64)> {
    let [l2, h1, _] = squared_errors(dofmap, mesh, &[(coeffs, exact)])?;
    Ok((l2.sqrt(), (l2 + h1).sqrt()))
}

/// Same as [`error_l2_h1`] for the pair `(Q11, Q12)` treated as one vector field.
pub fn error_l2_h1_pair(
    dofmap: &crate::space::DofMap,
    mesh: &Mesh,
    coeffs: [&[f64]; 2],
    exact: [&dyn Fn([f64; 2]) -> FieldJet; 2],
) -> Result<(f64, f64)> {
    let [l2, h1, _] = squared_errors(dofmap, mesh, &[(coeffs[0], exact[0]), (coeffs[1], exact[1])])?;
    Ok((l2.sqrt(), (l2 + h1).sqrt()))
}

/// Mesh-dependent norm of the error:
/// `sqrt(Σ_T |e|²_{H²(T)} + Σ_{e∈E_I} h_e⁻³ ∫_e [[∇u_h]]²)`.
///
/// The exact field is C¹, so the gradient jump of the error is that of the
/// discrete function.
pub fn error_triple_norm(
    dofmap: &crate::space::DofMap,
    mesh: &Mesh,
    coeffs: &[f64],
    exact: &dyn Fn([f64; 2]) -> FieldJet,
) -> Result<f64> {
    let [_, _, h2] = squared_errors(dofmap, mesh, &[(coeffs, exact)])?;
    Ok((h2 + jump_seminorm_sq(dofmap, mesh, coeffs)?).sqrt())
}

/// `Σ_{e∈E_I} h_e⁻³ ∫_e [[∇v]]²` for a finite element function `v`.
pub fn jump_seminorm_sq(dofmap: &crate::space::DofMap, mesh: &Mesh, coeffs: &[f64]) -> Result<f64> {
    check_len(dofmap.n_global, coeffs)?;
    let rule = facet_rule(dofmap.degree)?;
    let tab_for = |s: Side| -> Result<ScaledTab> {
        let pts: Vec<[f64; 2]> = rule.points.iter().map(|t| s.reference_point(t[0])).collect();
        ScaledTab::new(dofmap.degree, &pts, mesh.h)
    };
    let tabs = [
        tab_for(Side::Right)?,
        tab_for(Side::Left)?,
        tab_for(Side::Top)?,
        tab_for(Side::Bottom)?,
    ];
    let mut lm = vec![0.0; dofmap.n_local()];
    let mut lp = vec![0.0; dofmap.n_local()];
    let mut total = 0.0;
    for f in &mesh.interior_facets {
        let (tm, tp) = match f.side_minus {
            Side::Right => (&tabs[0], &tabs[1]),
            Side::Top => (&tabs[2], &tabs[3]),
            _ => unreachable!("interior facets are oriented right/top from the minus cell"),
        };
        dofmap.gather(coeffs, f.cell_minus, &mut lm);
        dofmap.gather(coeffs, f.cell_plus.expect("interior facet"), &mut lp);
        let nu = f.normal;
        let mut s = 0.0;
        for (p, w) in rule.weights.iter().enumerate() {
            let (_, gm, _) = tm.eval(p, &lm);
            let (_, gp, _) = tp.eval(p, &lp);
            let jump = (gm[0] - gp[0]) * nu[0] + (gm[1] - gp[1]) * nu[1];
            s += w * f.h_e * jump * jump;
        }
        total += s / f.h_e.powi(3);
    }
    Ok(total)
}

/// `log2(e_i / e_{i+1})` between consecutive levels of mesh halving.
pub fn convergence_orders(errors: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = errors.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(Error::InvalidArgument(format!("errors must be positive, got {bad}")));
    }
    Ok(errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect())
}

/// Errors at one refinement level; `None` for fields the study did not solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelErrors {
    pub n_per_side: usize,
    pub eu_l2: Option<f64>,
    pub eu_h1: Option<f64>,
    pub eu_triple: Option<f64>,
    pub eq_l2: Option<f64>,
    pub eq_h1: Option<f64>,
    pub newton_iters: usize,
}

/// Per-level errors and orders between consecutive levels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorReport {
    pub levels: Vec<LevelErrors>,
}

/// Selects one error column from a level.
pub type Column = fn(&LevelErrors) -> Option<f64>;

pub const COLUMNS: [(&str, Column); 5] = [
    ("eq_l2", |l| l.eq_l2),
    ("eq_h1", |l| l.eq_h1),
    ("eu_l2", |l| l.eu_l2),
    ("eu_h1", |l| l.eu_h1),
    ("eu_triple", |l| l.eu_triple),
];

impl ErrorReport {
    /// Values of one column across levels, if present at every level.
    pub fn column(&self, col: Column) -> Option<Vec<f64>> {
        self.levels.iter().map(col).collect()
    }

    /// Orders of one column; empty with fewer than two levels.
    pub fn orders(&self, col: Column) -> Option<Vec<f64>> {
        let v = self.column(col)?;
        convergence_orders(&v).ok()
    }

    /// Order between level `i - 1` and `i`, when both errors exist.
    pub fn order_at(&self, col: Column, i: usize) -> Option<f64> {
        if i == 0 || i >= self.levels.len() || self.levels[i].n_per_side != 2 * self.levels[i - 1].n_per_side {
            return None;
        }
        let a = col(&self.levels[i - 1])?;
        let b = col(&self.levels[i])?;
        convergence_orders(&[a, b]).ok().map(|o| o[0])
    }
}
