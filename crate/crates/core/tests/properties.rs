use proptest::prelude::*;

use impulse_core::duopoly::{self, JumpTerm};
use impulse_core::numerics::quadrature::GaussLegendre;
use impulse_core::numerics::roots::brent;
use impulse_core::numerics::{mean_and_se, pairwise_sum};
use impulse_core::qvi::{intervention_operator, CostSign, FnCandidate, ImpulseGrid, Mode};
use impulse_core::sde::apply_impulse;
use impulse_core::verification::{impulse_cost_sum, singular_representation};
use impulse_core::zero_sum::{self, ZeroSumProblem};
use impulse_core::{CostSpec, Direction, Domain, MarkLaw, ThresholdPolicy};

proptest! {
    #[test]
    fn exponents_are_roots_with_vieta_relations(
        alpha in 0.01f64..3.0,
        beta in 0.1f64..3.0,
        delta in 0.01f64..3.0,
    ) {
        let p = ZeroSumProblem { alpha, beta, delta, lambda1: 0.1, kappa1: 0.1, lambda2: 0.1, kappa2: 0.1 };
        let (b1, b2) = zero_sum::solve_exponents(&p).unwrap();
        prop_assert!(b1 > 0.0 && b2 < 0.0);
        let h = 0.5 * beta * beta;
        for b in [b1, b2] {
            let q = -delta + alpha * b + h * b * b;
            prop_assert!(q.abs() <= 1e-10 * (1.0 + delta + (alpha * b).abs()));
        }
        prop_assert!((b1 + b2 + alpha / h).abs() <= 1e-10 * (1.0 + alpha / h));
        prop_assert!((b1 * b2 + delta / h).abs() <= 1e-10 * (1.0 + delta / h));
    }

    #[test]
    fn duopoly_roots_straddle_zero_and_solve_q(
        mu in -0.5f64..0.5,
        sigma in 0.1f64..1.0,
        eps in 0.1f64..2.0,
        intensity in 0.0f64..3.0,
        sd in 0.05f64..0.5,
    ) {
        let jumps = [JumpTerm {
            intensity,
            marks: MarkLaw::TruncatedNormal { mean: 0.0, sd, lower: None, upper: None },
            theta: 1.0,
        }];
        let r = duopoly::roots_for(mu, sigma, eps, &jumps).unwrap();
        prop_assert!(r.r1 < 0.0 && r.r2 > 0.0);
        prop_assert!(r.q_residuals[0] < 1e-8 && r.q_residuals[1] < 1e-8);
        let (c1, c2) = duopoly::closed_form_roots(mu, sigma, eps);
        prop_assert!(r.r1 >= c1 - 1e-12 && r.r2 <= c2 + 1e-12);
    }

    #[test]
    fn retargeting_impulse_lands_on_retarget(x in -100.0f64..100.0, y in -100.0f64..100.0) {
        prop_assert!((apply_impulse(x, y - x) - y).abs() <= 1e-12 * (1.0 + x.abs() + y.abs()));
    }

    #[test]
    fn policy_band_orientation_is_enforced(trigger in -5.0f64..5.0, gap in 1e-6f64..5.0) {
        prop_assert!(ThresholdPolicy::new(0, trigger, trigger + gap, Direction::Below, 1.0, 0.1).is_ok());
        prop_assert!(ThresholdPolicy::new(0, trigger, trigger - gap, Direction::Below, 1.0, 0.1).is_err());
        prop_assert!(ThresholdPolicy::new(0, trigger, trigger - gap, Direction::Above, 1.0, 0.1).is_ok());
        prop_assert!(ThresholdPolicy::new(0, trigger, trigger, Direction::Above, 1.0, 0.1).is_err());
    }

    #[test]
    fn pairwise_sum_agrees_with_naive_sum(xs in prop::collection::vec(-1e3f64..1e3, 0..500)) {
        let naive: f64 = xs.iter().sum();
        let scale: f64 = xs.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
        prop_assert!((pairwise_sum(&xs) - naive).abs() <= 1e-12 * scale);
    }

    #[test]
    fn standard_error_is_nonnegative_and_shift_invariant(
        xs in prop::collection::vec(-10.0f64..10.0, 2..200),
        shift in -100.0f64..100.0,
    ) {
        let (m, se) = mean_and_se(&xs);
        let ys: Vec<f64> = xs.iter().map(|v| v + shift).collect();
        let (m2, se2) = mean_and_se(&ys);
        prop_assert!(se >= 0.0);
        prop_assert!((m2 - m - shift).abs() < 1e-9);
        prop_assert!((se2 - se).abs() < 1e-9);
    }

    #[test]
    fn singular_cost_equals_impulse_cost(
        raw in prop::collection::vec((0.01f64..1.0, -2.0f64..2.0), 0..40),
        lambda in 0.05f64..3.0,
        kappa in 0.01f64..1.0,
        tau in 0.0f64..30.0,
    ) {
        let mut t = 0.0;
        let events: Vec<(f64, f64)> = raw.iter().map(|&(dt, eta)| { t += dt; (t, eta) }).collect();
        let r = singular_representation(&events, lambda, kappa, tau).unwrap();
        let direct = impulse_cost_sum(&events, lambda, kappa, tau);
        prop_assert!((r.cost_integral - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
        let end = events.iter().filter(|e| e.0 <= tau).map(|e| e.1).sum::<f64>();
        prop_assert!((r.impulse_level(tau) - end).abs() <= 1e-9 * (1.0 + end.abs()));
    }

    #[test]
    fn inf_operator_is_bounded_by_the_zero_impulse(x in -2.0f64..2.0, lambda in 0.0f64..2.0, kappa in 0.01f64..1.0) {
        let f = FnCandidate {
            domain: Domain { lower: vec![-10.0], upper: vec![10.0] },
            f: |_: f64, x: &[f64]| (x[0] - 1.0).powi(2),
        };
        let c = CostSpec::additive(lambda, kappa, 0, CostSign::Added, 0.0);
        let m = intervention_operator(&f, 0.0, &[x], &c, Mode::Inf, &ImpulseGrid::new(0.0, 5.0, 101)).unwrap();
        prop_assert!(m.value <= (x - 1.0).powi(2) + kappa + 1e-12);
        prop_assert!(m.value >= kappa - 1e-12);
    }

    #[test]
    fn brent_finds_the_root_of_a_shifted_cubic(root in -5.0f64..5.0) {
        let r = brent(|x| (x - root) * (1.0 + (x - root).powi(2)), -10.0, 10.0, 1e-14, 200).unwrap();
        prop_assert!((r - root).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_is_exact_for_low_degree(c in prop::collection::vec(-3.0f64..3.0, 1..16), a in -2.0f64..0.0, b in 0.1f64..2.0) {
        let g = GaussLegendre::new(8);
        let poly = |x: f64| c.iter().rev().fold(0.0, |acc, k| acc * x + k);
        let anti = |x: f64| c.iter().enumerate().rev().fold(0.0, |acc, (i, k)| acc * x + k / (i as f64 + 1.0)) * x;
        let exact = anti(b) - anti(a);
        prop_assert!((g.integrate(a, b, poly) - exact).abs() <= 1e-11 * (1.0 + exact.abs()));
    }
}
