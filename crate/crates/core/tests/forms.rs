mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smectic_cip::forms::{Discretization, FormVariant, ModelParams, ProblemKind};
use smectic_cip::mms::ManufacturedCase;
use smectic_cip::space::{interpolate, SystemState};

#[test]
fn jacobian_matches_central_differences() {
    for kind in KINDS {
        for variant in VARIANTS {
            let err = jacobian_fd_error(kind, variant, 3, 2, 2);
            assert!(err <= 1e-5, "{kind:?} {variant:?}: {err:e}");
        }
    }
    let err = jacobian_fd_error(ProblemKind::Coupled, FormVariant::Inconsistent, 2, 3, 1);
    assert!(err <= 1e-5, "{err:e}");
}

#[test]
fn residual_is_energy_gradient() {
    for kind in KINDS {
        for variant in VARIANTS {
            let disc = Discretization::new(3, 3, 2, kind).unwrap();
            let p = params(kind, variant);
            let mms = ManufacturedCase::new(kind);
            let state = perturbed_state(&disc, 5);
            let sys = disc.assemble(&state, &p, Some(&mms)).unwrap();
            let n = disc.n_free();
            // probe the u and Q blocks separately: their residual scales differ by orders
            let n_u = if kind.has_u() { disc.u_map.n_global - disc.u_map.boundary_dofs.len() } else { 0 };
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            for range in [0..n_u, n_u..n] {
                if range.is_empty() {
                    continue;
                }
                let mut dir = vec![0.0; n];
                for i in range.clone() {
                    dir[i] = 2.0 * rng.random::<f64>() - 1.0;
                }
                let t = 1e-3 * if range.start == 0 { 1e-1 } else { 1.0 };
                let energy_at = |s: f64| {
                    let mut st = state.clone();
                    disc.add_to_free(&mut st, &dir, s);
                    disc.assemble(&st, &p, Some(&mms)).unwrap().energy
                };
                let fd = (8.0 * (energy_at(t) - energy_at(-t)) - (energy_at(2.0 * t) - energy_at(-2.0 * t))) / (12.0 * t);
                let exact: f64 = sys.residual.iter().zip(&dir).map(|(r, d)| r * d).sum();
                assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1e-12), "{kind:?} {variant:?}: {fd} vs {exact}");
            }
        }
    }
}

#[test]
fn jacobian_is_symmetric() {
    for kind in KINDS {
        for variant in VARIANTS {
            let disc = Discretization::new(4, 3, 2, kind).unwrap();
            let state = perturbed_state(&disc, 2);
            let sys = disc.assemble(&state, &params(kind, variant), None).unwrap();
            assert!(sys.jacobian.max_asymmetry() <= 1e-13 * sys.jacobian.max_abs());
        }
    }
}

#[test]
fn q_zero_coupled_assembly_is_block_diagonal() {
    for (deg_u, deg_q) in [(2, 2), (3, 3)] {
        for variant in VARIANTS {
            let err = block_diagonal_error(deg_u, deg_q, variant);
            assert!(err <= 1e-12, "({deg_u}, {deg_q}) {variant:?}: {err:e}");
        }
    }
}

#[test]
fn tensor_form_matches_component_residual() {
    for deg in 1..=3 {
        let err = tensor_form_error(deg);
        assert!(err <= 1e-10, "deg {deg}: {err:e}");
    }
}

#[test]
fn c1_interpolants_have_no_jump_or_penalty() {
    for deg in 2..=4 {
        let (jump, penalty) = c1_jump_and_penalty(deg);
        assert!(jump < 1e-20, "deg {deg}: {jump}");
        assert!(penalty < 1e-13, "deg {deg}: {penalty}");
    }
}

#[test]
fn gauss_rules_are_exact_on_monomials() {
    assert!(quadrature_exactness_error() < 1e-14);
}

#[test]
fn closed_form_sources_match_strong_operators() {
    for q in [0.0, 30.0] {
        let p = ModelParams {
            q,
            ..ModelParams::default()
        };
        let err = source_fd_error(&p, 10, 4);
        assert!(err <= 1e-4, "q = {q}: {err:e}");
    }
}

#[test]
fn kink_penalty_by_hand() {
    // |x - 1/2| on a 2x2 mesh: gradient jump 2 across x = 1/2, a facet of
    // total length 1; penalty energy B ε / h³ ∫ jump² = 32 B ε at h = 1/2
    let disc = Discretization::new(2, 2, 1, ProblemKind::P1).unwrap();
    let state = SystemState {
        u: interpolate(&disc.u_map, |p| (p[0] - 0.5).abs()),
        ..Default::default()
    };
    let energy = |eps: f64| {
        let p = ModelParams {
            epsilon: eps,
            variant: FormVariant::Inconsistent,
            ..ModelParams::default()
        };
        disc.assemble(&state, &p, None).unwrap().energy
    };
    let b = ModelParams::default().b;
    let diff = energy(3.0) - energy(1.0);
    assert!((diff - 64.0 * b).abs() < 1e-14, "{diff}");
}

#[test]
fn boundary_load_by_hand() {
    // D²u_b = I gives L(t) = 2B ∫_∂Ω ∂t/∂ν = 2B ∫_Ω Δt; for t = x(1-x)y(1-y)
    // that is 2B (-2/3)
    let disc = Discretization::new(3, 2, 1, ProblemKind::P1).unwrap();
    let p = ModelParams::default();
    let load = disc.boundary_load(&p, &|_| [[1.0, 0.0], [0.0, 1.0]]);
    let t = SystemState {
        u: interpolate(&disc.u_map, |x| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1])),
        ..Default::default()
    };
    let lt: f64 = load.iter().zip(disc.free_vector(&t)).map(|(a, b)| a * b).sum();
    assert!((lt + 4.0 * p.b / 3.0).abs() < 1e-18, "{lt}");
}

#[test]
fn manufactured_boundary_load_vanishes() {
    let disc = Discretization::new(4, 3, 1, ProblemKind::P1).unwrap();
    let mms = ManufacturedCase::new(ProblemKind::P1);
    let load = disc.boundary_load(&ModelParams::default(), &|x| smectic_cip::forms::Forcing::boundary_hessian(&mms, x));
    assert!(load.iter().all(|v| v.abs() < 1e-20));
}

#[test]
fn uniform_nematic_state_is_unforced_equilibrium() {
    let disc = Discretization::new(4, 2, 2, ProblemKind::P2).unwrap();
    let angle: f64 = 0.7;
    let state = SystemState {
        q11: vec![0.5 * angle.cos(); disc.q_map.n_global],
        q12: vec![0.5 * angle.sin(); disc.q_map.n_global],
        ..Default::default()
    };
    let r = disc.assemble(&state, &ModelParams::default(), None).unwrap().residual;
    assert!(r.iter().all(|v| v.abs() < 1e-13));
}

#[test]
fn mismatched_state_is_rejected() {
    let disc = Discretization::new(2, 2, 1, ProblemKind::P1).unwrap();
    let state = SystemState {
        u: vec![0.0; 3],
        ..Default::default()
    };
    assert!(disc.assemble(&state, &ModelParams::default(), None).is_err());
}
