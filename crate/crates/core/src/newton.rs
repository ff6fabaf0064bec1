//! Undamped Newton iteration on the reduced (free-DOF) system.

use crate::error::{Error, Result};
use crate::forms::{Discretization, Forcing, ModelParams};
use crate::linalg::factor_and_solve;
use crate::space::SystemState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol_abs: f64,
    pub tol_rel: f64,
    /// After at least one step, the last step must also satisfy
    /// `‖δx‖ <= tol_step ‖x‖` over free DOFs.
    pub tol_step: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol_abs: 1e-10,
            tol_rel: 1e-12,
            tol_step: 1e-10,
            max_iter: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Free-DOF residual 2-norms, starting with the initial state.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// Set when the residual grew over consecutive iterations.
    pub diverged: bool,
    /// Set when the iterate stopped moving (last step below `tol_step`) but
    /// the residual, stuck at its rounding floor, stayed above the tolerance.
    pub stalled: bool,
    pub final_energy: f64,
    /// Worst relative residual among the linear solves.
    pub max_linear_residual: f64,
    /// `‖δx‖ / ‖x‖` of each step.
    pub step_history: Vec<f64>,
}

impl NewtonReport {
    /// Converged, or stalled at the rounding floor with a vanishing step.
    pub fn solved(&self) -> bool {
        self.converged || self.stalled
    }

    /// Largest `r_{k+1} / r_k²` over the last three steps, skipping steps
    /// whose residual is already at roundoff level (`<= floor`).
    pub fn quadratic_constant(&self, floor: f64) -> Option<f64> {
        let h = &self.residual_history;
        if h.len() < 2 {
            return None;
        }
        let start = h.len().saturating_sub(4);
        h[start..]
            .windows(2)
            .filter(|w| w[1] > floor && w[0] > 0.0)
            .map(|w| w[1] / (w[0] * w[0]))
            .reduce(f64::max)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Runs Newton's method from `initial`, whose Dirichlet DOFs must already hold
/// the boundary data. Stops when the residual drops below
/// `max(tol_abs, tol_rel * r0)` and, once a step has been taken, that step
/// was below `tol_step` relative to the iterate. A small residual alone is not
/// enough on fine meshes, where the fourth-order residual is scaled by
/// `B h²` and 1e-10 can still leave coefficient errors near 1e-9.
///
/// With a large penalty the residual can bottom out above `tol_abs` while
/// the steps keep shrinking to roundoff; the iteration then stops with
/// `stalled` set. Stalling, failing to converge within `max_iter` steps, and
/// growing for five consecutive steps are all reported through the returned
/// [`NewtonReport`] rather than as errors.
pub fn newton_solve(
    disc: &Discretization,
    initial: SystemState,
    params: &ModelParams,
    forcing: Option<&dyn Forcing>,
    opts: &NewtonOptions,
) -> Result<(SystemState, NewtonReport)> {
    if !(opts.tol_abs > 0.0 && opts.tol_rel > 0.0 && opts.tol_step > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidArgument("Newton tolerances must be positive and max_iter >= 1".into()));
    }
    let mut state = initial;
    let mut sys = disc.assemble(&state, params, forcing)?;
    let r0 = norm(&sys.residual);
    let target = opts.tol_abs.max(opts.tol_rel * r0);
    let mut report = NewtonReport {
        iterations: 0,
        residual_history: vec![r0],
        converged: r0 <= target,
        diverged: false,
        stalled: false,
        final_energy: sys.energy,
        max_linear_residual: 0.0,
        step_history: Vec::new(),
    };
    let mut growth = 0;
    while !report.converged && !report.stalled && report.iterations < opts.max_iter {
        let rhs: Vec<f64> = sys.residual.iter().map(|r| -r).collect();
        let step = factor_and_solve(&sys.jacobian, &rhs)?;
        report.max_linear_residual = report.max_linear_residual.max(step.relative_residual);
        let prev = *report.residual_history.last().unwrap();
        disc.add_to_free(&mut state, &step.x, 1.0);
        let xnorm = norm(&disc.free_vector(&state));
        let rel_step = if xnorm > 0.0 { norm(&step.x) / xnorm } else { norm(&step.x) };
        report.step_history.push(rel_step);
        sys = disc.assemble(&state, params, forcing)?;
        let r = norm(&sys.residual);
        report.iterations += 1;
        report.residual_history.push(r);
        report.final_energy = sys.energy;
        report.converged = r <= target && rel_step <= opts.tol_step;
        report.stalled = !report.converged && rel_step <= opts.tol_step && r > 0.5 * prev;
        growth = if r > prev { growth + 1 } else { 0 };
        if growth >= 5 {
            report.diverged = true;
            break;
        }
    }
    Ok((state, report))
}
