use impulse_core::qvi::{
    generator_apply, intervention_operator, qvi_residual_nonzero_sum, FnCandidate, GeneratorOptions, Mode,
};
use impulse_core::zero_sum::{self, ZeroSumProblem, ZeroSumSolution};
use impulse_core::{Candidate, Domain, Error};

// Reference values from an independent nested-Brent solver (scalar root in the
// amplitude, tangency roots found separately), frozen here.
struct Reference {
    p: ZeroSumProblem,
    b1: f64,
    b2: f64,
    inflection: f64,
    a: f64,
    x_low: f64,
    x_tilde: f64,
    x_hash: f64,
    x_bar: f64,
}

fn references() -> [Reference; 2] {
    [
        Reference {
            p: ZeroSumProblem {
                alpha: 0.5,
                beta: 1.0,
                delta: 0.5,
                lambda1: 0.1,
                kappa1: 0.1,
                lambda2: 0.1,
                kappa2: 0.1,
            },
            b1: 0.6180339887498949,
            b2: -1.618033988749895,
            inflection: 0.8608178819280081,
            a: 0.5409861059825869,
            x_low: 0.35524506881203766,
            x_tilde: 1.4662305613622328,
            x_hash: 0.35524506881203766,
            x_bar: 0.3056270099851998,
        },
        Reference {
            p: ZeroSumProblem {
                alpha: 1.0,
                beta: 1.0,
                delta: 0.5,
                lambda1: 0.2,
                kappa1: 0.05,
                lambda2: 0.2,
                kappa2: 0.05,
            },
            b1: 0.41421356237309515,
            b2: -2.414213562373095,
            inflection: 1.2464504802804608,
            a: 0.9367102550944859,
            x_low: 0.8695964947570028,
            x_tilde: 1.746995537332645,
            x_hash: 0.8695964947570028,
            x_bar: 0.8446808542962956,
        },
    ]
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

#[test]
fn exponents_of_driftless_unit_case() {
    let p = ZeroSumProblem {
        alpha: 0.0,
        beta: 1.0,
        delta: 0.5,
        lambda1: 0.1,
        kappa1: 0.1,
        lambda2: 0.1,
        kappa2: 0.1,
    };
    let (b1, b2) = zero_sum::solve_exponents(&p).unwrap();
    assert!((b1 - 1.0).abs() < 1e-15 && (b2 + 1.0).abs() < 1e-15);
}

#[test]
fn exponents_solve_the_characteristic_quadratic() {
    for r in references() {
        let (b1, b2) = zero_sum::solve_exponents(&r.p).unwrap();
        assert!(close(b1, r.b1, 1e-13) && close(b2, r.b2, 1e-13));
        for b in [b1, b2] {
            let q = -r.p.delta + r.p.alpha * b + 0.5 * r.p.beta * r.p.beta * b * b;
            assert!(q.abs() < 1e-12);
        }
        assert!(close(zero_sum::inflection_point(b1, b2), r.inflection, 1e-13));
    }
}

#[test]
fn free_boundaries_match_reference_solver() {
    for r in references() {
        let s = zero_sum::solve_free_boundaries(&r.p).unwrap();
        assert!(s.max_residual() <= zero_sum::ACCEPT_TOL, "{:?}", s.residuals);
        assert!(close(s.a, r.a, 1e-9), "a {} vs {}", s.a, r.a);
        assert!(close(s.x_low, r.x_low, 1e-9));
        assert!(close(s.x_tilde, r.x_tilde, 1e-9));
        assert!(close(s.x_hash, r.x_hash, 1e-9));
        assert!(close(s.x_bar, r.x_bar, 1e-9));
        assert!(s.player1_accepted());
    }
}

#[test]
fn player_two_ordering_is_reported_not_hidden() {
    // Both reference sets put x_bar below x_hash; the solution must say so.
    for r in references() {
        let s = zero_sum::solve_free_boundaries(&r.p).unwrap();
        assert!(s.x_bar < s.x_hash);
        assert!(!s.feasible);
        assert!(!s.violations.is_empty());
        let [p1, p2] = zero_sum::build_policies(&s, &r.p);
        assert!(p1.is_ok());
        assert!(matches!(p2, Err(Error::Regime(_))));
    }
}

#[test]
fn player_one_smooth_fit_and_value_matching() {
    for r in references() {
        let s = zero_sum::solve_free_boundaries(&r.p).unwrap();
        let psi0 = s.psi0();
        let slope = 1.0 / (1.0 + r.p.lambda1);
        assert!((psi0.d1(s.x_low) - slope).abs() < 1e-10);
        assert!((psi0.d1(s.x_tilde) - slope).abs() < 1e-10);
        let jump = psi0.value(s.x_low) + (s.x_tilde - s.x_low - r.p.kappa1) * slope - psi0.value(s.x_tilde);
        assert!(jump.abs() < 1e-8);
    }
}

#[test]
fn psi0_is_concave_before_the_inflection() {
    for r in references() {
        let s = zero_sum::solve_free_boundaries(&r.p).unwrap();
        let psi0 = s.psi0();
        for k in 1..100 {
            let x = s.x_inflection * k as f64 / 100.0;
            assert!(psi0.d2(x) < 0.0, "ψ₀'' ≥ 0 at {x}");
        }
        assert!(psi0.d2(s.x_inflection + 0.1) > 0.0);
    }
}

fn value(r: &Reference) -> (ZeroSumSolution, zero_sum::ZeroSumValue) {
    let s = zero_sum::solve_free_boundaries(&r.p).unwrap();
    let v = zero_sum::build_value_function(&s, &r.p, 2.0 * s.x_tilde + 1.0).unwrap();
    (s, v)
}

#[test]
fn psi_vanishes_at_ruin_and_scales_in_time() {
    for r in references() {
        let (_, v) = value(&r);
        assert_eq!(v.psi(0.0), 0.0);
        for &x in &[0.1, 0.5, 1.0, 2.0] {
            let base = v.value(0.0, &[x]).unwrap();
            for &t in &[0.5, 1.0, 3.0] {
                let ratio = v.value(t, &[x]).unwrap() / base;
                assert!((ratio - (-r.p.delta * t).exp()).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn value_function_rejects_points_outside_domain() {
    let r = &references()[0];
    let (_, v) = value(r);
    assert!(matches!(v.value(0.0, &[-0.1]), Err(Error::Domain(_))));
    assert!(matches!(v.value(0.0, &[v.x_max() + 1.0]), Err(Error::Domain(_))));
}

#[test]
fn consumption_maps_are_affine_with_the_right_fixed_points() {
    for r in references() {
        let s = zero_sum::solve_free_boundaries(&r.p).unwrap();
        let l1 = 1.0 + r.p.lambda1;
        for &x in &[s.x_tilde, s.x_tilde + 0.3, s.x_tilde + 2.0] {
            let xi = zero_sum::xi_hat(&s, &r.p, x).unwrap();
            assert!((x - r.p.kappa1 - l1 * xi - s.x_low).abs() < 1e-12);
        }
        // Extending the affine map down to x_low + κ₁ gives zero consumption.
        let at_tilde = zero_sum::xi_hat(&s, &r.p, s.x_tilde).unwrap();
        let extrapolated = at_tilde + (s.x_low + r.p.kappa1 - s.x_tilde) / l1;
        assert!(extrapolated.abs() < 1e-12);
        assert!(matches!(zero_sum::xi_hat(&s, &r.p, 0.5 * s.x_tilde), Err(Error::Domain(_))));

        assert!(matches!(zero_sum::eta_hat(&s, &r.p, 0.5 * s.x_bar), Err(Error::Domain(_))));
    }
}

#[test]
fn player_two_branch_is_psi0_at_retarget_plus_impulse() {
    for r in references() {
        let (s, v) = value(&r);
        let psi0 = s.psi0();
        for &x in &[s.x_bar, s.x_bar + 0.2, s.x_bar + 1.0] {
            let eta = zero_sum::eta_hat(&s, &r.p, x).unwrap();
            assert!((eta - (s.x_hash - x - r.p.kappa2) / (1.0 + r.p.lambda2)).abs() < 1e-15);
            assert!((v.psi(x) - (psi0.value(s.x_hash) + eta)).abs() < 1e-12);
        }
        // Value matching at the player-2 trigger.
        assert!((psi0.value(s.x_bar) - v.psi(s.x_bar)).abs() < 1e-8);
    }
}

/// ψ restricted to player 1's problem: ψ₀ below x_tilde, player 1's action branch above.
fn player_one_value(s: &ZeroSumSolution, p: &ZeroSumProblem, x_max: f64) -> impl Candidate {
    let psi0 = s.psi0();
    let (x_low, x_tilde, delta) = (s.x_low, s.x_tilde, p.delta);
    let (l1, k1) = (p.lambda1, p.kappa1);
    FnCandidate {
        domain: Domain {
            lower: vec![0.0],
            upper: vec![x_max],
        },
        f: move |t: f64, x: &[f64]| {
            let psi = if x[0] < x_tilde {
                psi0.value(x[0])
            } else {
                psi0.value(x_low) + (x[0] - x_low - k1) / (1.0 + l1)
            };
            (-delta * t).exp() * psi
        },
    }
}

#[test]
fn consumption_rule_attains_player_one_operator() {
    for r in references() {
        let s = zero_sum::solve_free_boundaries(&r.p).unwrap();
        let x_max = 2.0 * s.x_tilde + 1.0;
        let f = player_one_value(&s, &r.p, x_max);
        let obs = zero_sum::obstacles(&r.p, x_max, 401).maximizer;
        for &x in &[s.x_tilde + 1e-3, s.x_tilde + 0.2, s.x_tilde + 0.7] {
            let m = intervention_operator(&f, 0.0, &[x], &obs.cost, Mode::Sup, &obs.grid).unwrap();
            let xi = zero_sum::xi_hat(&s, &r.p, x).unwrap();
            assert!((m.argopt - xi).abs() < 1e-3, "argopt {} vs ξ̂ {}", m.argopt, xi);
            assert!((f.value(0.0, &[x]).unwrap() - m.value).abs() < 1e-6);
        }
    }
}

#[test]
fn player_one_clause_holds_for_player_one_value() {
    for r in references() {
        let s = zero_sum::solve_free_boundaries(&r.p).unwrap();
        let x_max = 2.0 * s.x_tilde + 1.0;
        let f = player_one_value(&s, &r.p, x_max);
        let obs = zero_sum::obstacles(&r.p, x_max, 401).maximizer;
        let model = r.p.model();
        let zero = |_: f64, _: &[f64]| 0.0;
        let opts = GeneratorOptions::default();
        for k in 1..40 {
            let x = 0.05 * k as f64;
            if (x - s.x_tilde).abs() < 1e-2 {
                continue;
            }
            let q = qvi_residual_nonzero_sum(&model, &f, &zero, 0.0, &[x], &obs, &opts).unwrap();
            assert!(q.residual.abs() < 1e-6, "x = {x}: {q:?}");
        }
    }
}

#[test]
fn continuation_branch_solves_the_pde() {
    for r in references() {
        let (s, v) = value(&r);
        let model = r.p.model();
        for k in 1..20 {
            let x = s.x_bar * k as f64 / 20.0;
            let g = generator_apply(&model, &v, 0.3, &[x], &GeneratorOptions::default()).unwrap();
            assert!(g.value.abs() < 1e-12, "x = {x}: {}", g.value);
        }
    }
}

#[test]
fn fixed_cost_must_be_positive() {
    let mut p = references()[0].p;
    p.kappa1 = 0.0;
    let e = zero_sum::solve_free_boundaries(&p).unwrap_err();
    assert!(matches!(e, Error::Input { .. }));
    assert!(e.to_string().contains("A.3"));
}

#[test]
fn negative_drift_is_regime_error() {
    let mut p = references()[0].p;
    p.alpha = -0.5;
    assert!(matches!(zero_sum::solve_free_boundaries(&p), Err(Error::Regime(_))));
}

#[test]
fn expensive_consumption_has_no_solution() {
    let p = ZeroSumProblem {
        alpha: 0.5,
        beta: 1.0,
        delta: 0.5,
        lambda1: 1.0,
        kappa1: 0.5,
        lambda2: 1.0,
        kappa2: 0.5,
    };
    let e = zero_sum::solve_free_boundaries(&p).unwrap_err();
    assert!(e.is_solver_failure(), "{e}");
}
