use impulse_core::duopoly::{self, DuopolyProblem, FirmParams};
use impulse_core::qvi::{
    classify_region, finite_difference_derivatives, generator_apply, intervention_operator, qvi_residual_nonzero_sum,
    qvi_residual_zero_sum, Branch, CostSign, Derivatives, DerivativeMode, FnCandidate, GeneratorOptions, ImpulseGrid,
    Mode, ZeroSumObstacles,
};
use impulse_core::zero_sum::{self, ZeroSumProblem};
use impulse_core::{Candidate, CostSpec, Domain, Error, JumpSource, MarkLaw, ModelSpec, Obstacle, RegionLabel};

fn line(lo: f64, hi: f64) -> Domain {
    Domain {
        lower: vec![lo],
        upper: vec![hi],
    }
}

/// `e^{−ρt}·Σ e^{bᵢxᵢ}` with analytic derivatives.
struct ExpCandidate {
    domain: Domain,
    rho: f64,
    b: Vec<f64>,
}

impl Candidate for ExpCandidate {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn value(&self, t: f64, x: &[f64]) -> impulse_core::Result<f64> {
        self.domain.check(x)?;
        let s: f64 = self.b.iter().zip(x).map(|(b, v)| (b * v).exp()).sum();
        Ok((-self.rho * t).exp() * s)
    }

    fn analytic_derivatives(&self, t: f64, x: &[f64]) -> Option<Derivatives> {
        let d = (-self.rho * t).exp();
        let n = x.len();
        let e: Vec<f64> = self.b.iter().zip(x).map(|(b, v)| (b * v).exp()).collect();
        let mut hess = vec![vec![0.0; n]; n];
        for i in 0..n {
            hess[i][i] = d * self.b[i] * self.b[i] * e[i];
        }
        Some(Derivatives {
            time: -self.rho * d * e.iter().sum::<f64>(),
            grad: (0..n).map(|i| d * self.b[i] * e[i]).collect(),
            hess,
        })
    }
}

#[test]
fn constants_are_annihilated_even_with_jumps() {
    let model = ModelSpec {
        drift: vec![0.4],
        volatility: vec![vec![0.7]],
        jumps: vec![JumpSource {
            intensity: 1.5,
            marks: MarkLaw::TruncatedNormal {
                mean: 0.1,
                sd: 0.3,
                lower: Some(-0.5),
                upper: Some(1.0),
            },
            loading: vec![0.8],
        }],
    };
    let f = FnCandidate {
        domain: line(-5.0, 5.0),
        f: |_: f64, _: &[f64]| 3.0,
    };
    for &x in &[-1.0, 0.0, 2.5] {
        let g = generator_apply(&model, &f, 0.0, &[x], &GeneratorOptions::default()).unwrap();
        assert!(g.value.abs() < 1e-12);
        assert_eq!(g.mode, DerivativeMode::FiniteDifference);
    }
}

#[test]
fn characteristic_exponential_is_harmonic() {
    let p = ZeroSumProblem {
        alpha: 0.5,
        beta: 1.0,
        delta: 0.5,
        lambda1: 0.1,
        kappa1: 0.1,
        lambda2: 0.1,
        kappa2: 0.1,
    };
    let (b1, b2) = zero_sum::solve_exponents(&p).unwrap();
    for b in [b1, b2] {
        let f = ExpCandidate {
            domain: line(0.0, 5.0),
            rho: p.delta,
            b: vec![b],
        };
        for &x in &[0.3, 1.0, 3.0] {
            let g = generator_apply(&p.model(), &f, 0.7, &[x], &GeneratorOptions::default()).unwrap();
            assert!(g.value.abs() < 1e-8, "b = {b}, x = {x}: {}", g.value);
            assert_eq!(g.mode, DerivativeMode::Analytic);
        }
    }
}

#[test]
fn duopoly_roots_make_exponentials_harmonic_with_and_without_jumps() {
    let firm = FirmParams {
        mu: 0.1,
        sigma: 0.3,
        alpha: 1.5,
        beta: 0.5,
        lambda: 1.0,
        kappa: 0.05,
        gamma: 0.0,
    };
    let mut p = DuopolyProblem::symmetric(firm, 1.0);
    for with_jumps in [false, true] {
        if with_jumps {
            p.jumps = vec![JumpSource {
                intensity: 2.0,
                marks: MarkLaw::TruncatedNormal {
                    mean: 0.05,
                    sd: 0.2,
                    lower: None,
                    upper: None,
                },
                loading: vec![1.0, 0.0],
            }];
        }
        let roots = duopoly::characteristic_roots(&p).unwrap();
        let box2 = Domain {
            lower: vec![-3.0, -3.0],
            upper: vec![3.0, 3.0],
        };
        for r in [roots[0].r1, roots[0].r2] {
            let f = ExpCandidate {
                domain: box2.clone(),
                rho: p.epsilon,
                b: vec![r, 0.0],
            };
            // The second summand e^{0·x₂} = 1 is not harmonic; subtract its generator, −ε·e^{−εt}.
            let g = generator_apply(&p.model(), &f, 0.0, &[0.4, 0.2], &GeneratorOptions::default()).unwrap();
            assert!((g.value + p.epsilon).abs() < 1e-8, "jumps {with_jumps}, r = {r}: {}", g.value);
            assert!(g.quadrature_warning.is_none());
        }
    }
}

fn zero_line() -> FnCandidate<impl Fn(f64, &[f64]) -> f64 + Sync> {
    FnCandidate {
        domain: line(-10.0, 10.0),
        f: |_: f64, _: &[f64]| 0.0,
    }
}

#[test]
fn operators_on_zero_function_return_the_fixed_cost() {
    let f = zero_line();
    let grid = ImpulseGrid::new(0.0, 2.0, 101);
    let add = CostSpec::additive(1.0, 0.1, 0, CostSign::Added, 0.0);
    let m = intervention_operator(&f, 0.0, &[0.0], &add, Mode::Inf, &grid).unwrap();
    assert!((m.value - 0.1).abs() < 1e-15 && m.argopt == 0.0);
    let sub = CostSpec::additive(1.0, 0.1, 0, CostSign::Subtracted, 0.0);
    let m = intervention_operator(&f, 0.0, &[0.0], &sub, Mode::Sup, &grid).unwrap();
    assert!((m.value + 0.1).abs() < 1e-15 && m.argopt == 0.0);
}

#[test]
fn discounted_cost_scales_with_time() {
    let f = zero_line();
    let grid = ImpulseGrid::new(0.0, 1.0, 11);
    let c = CostSpec::additive(0.0, 1.0, 0, CostSign::Added, 0.5);
    let m = intervention_operator(&f, 2.0, &[0.0], &c, Mode::Inf, &grid).unwrap();
    assert!((m.value - (-1.0f64).exp()).abs() < 1e-15);
}

#[test]
fn inf_operator_is_monotone() {
    let lower = FnCandidate {
        domain: line(-10.0, 10.0),
        f: |_: f64, x: &[f64]| (x[0] - 1.0).powi(2),
    };
    let upper = FnCandidate {
        domain: line(-10.0, 10.0),
        f: |_: f64, x: &[f64]| (x[0] - 1.0).powi(2) + 0.5 + x[0].sin().abs(),
    };
    let grid = ImpulseGrid::new(0.0, 5.0, 201);
    let c = CostSpec::additive(0.3, 0.1, 0, CostSign::Added, 0.0);
    for k in 0..20 {
        let x = -3.0 + 0.3 * k as f64;
        let a = intervention_operator(&lower, 0.0, &[x], &c, Mode::Inf, &grid).unwrap();
        let b = intervention_operator(&upper, 0.0, &[x], &c, Mode::Inf, &grid).unwrap();
        assert!(a.value <= b.value);
    }
}

#[test]
fn impulse_grid_outside_domain_is_domain_error() {
    let f = zero_line();
    let grid = ImpulseGrid::new(50.0, 60.0, 11);
    let c = CostSpec::additive(1.0, 0.1, 0, CostSign::Added, 0.0);
    assert!(matches!(
        intervention_operator(&f, 0.0, &[0.0], &c, Mode::Inf, &grid),
        Err(Error::Domain(_))
    ));
}

fn zero_sum_setup() -> (ZeroSumProblem, ZeroSumObstacles) {
    let p = ZeroSumProblem {
        alpha: 0.5,
        beta: 1.0,
        delta: 0.5,
        lambda1: 0.1,
        kappa1: 0.1,
        lambda2: 0.1,
        kappa2: 0.1,
    };
    let obs = zero_sum::obstacles(&p, 10.0, 51);
    (p, obs)
}

#[test]
fn zero_function_residuals() {
    let (p, _) = zero_sum_setup();
    let f = FnCandidate {
        domain: line(0.0, 10.0),
        f: |_: f64, _: &[f64]| 0.0,
    };
    let grid = ImpulseGrid::new(0.0, 5.0, 51);
    let obs = ZeroSumObstacles {
        maximizer: Obstacle {
            player: 1,
            cost: CostSpec::additive(0.1, 0.1, 0, CostSign::Subtracted, 0.0),
            mode: Mode::Sup,
            grid,
        },
        minimizer: Obstacle {
            player: 2,
            cost: CostSpec::additive(0.1, 0.1, 0, CostSign::Added, 0.0),
            mode: Mode::Inf,
            grid,
        },
    };
    let zero = |_: f64, _: &[f64]| 0.0;
    let opts = GeneratorOptions::default();
    // The maximizer's gap is κ > 0 and the minimizer's −κ < 0, so the PDE clause wins.
    let q = qvi_residual_zero_sum(&p.model(), &f, &zero, 0.0, &[1.0], &obs, &opts).unwrap();
    assert_eq!(q.residual, 0.0);
    assert_eq!(q.branch, Branch::Pde);
    let q = qvi_residual_nonzero_sum(&p.model(), &f, &zero, 0.0, &[1.0], &obs.maximizer, &opts).unwrap();
    assert_eq!(q.residual, 0.0);
}

#[test]
fn infinite_tolerance_labels_everything_player_one() {
    let (_, obs) = zero_sum_setup();
    let f = FnCandidate {
        domain: line(0.0, 10.0),
        f: |_: f64, x: &[f64]| x[0],
    };
    for &x in &[0.5, 2.0, 7.0] {
        let c = classify_region([&f, &f], 0.0, &[x], [&obs.maximizer, &obs.minimizer], f64::INFINITY).unwrap();
        assert_eq!(c.label, RegionLabel::I1);
        assert!(c.ambiguous);
    }
}

fn symmetric_duopoly() -> (DuopolyProblem, duopoly::DuopolySolution) {
    let firm = FirmParams {
        mu: 0.1,
        sigma: 0.3,
        alpha: 1.5,
        beta: 0.5,
        lambda: 1.0,
        kappa: 0.05,
        gamma: 0.0,
    };
    let p = DuopolyProblem::symmetric(firm, 1.0);
    let s = duopoly::solve_equilibrium(&p).unwrap();
    (p, s)
}

#[test]
fn duopoly_residual_branches_follow_the_band() {
    let (p, s) = symmetric_duopoly();
    let v = duopoly::build_firm_values(&s, &p).unwrap();
    let dom = duopoly::default_domain(&s);
    let obs = duopoly::obstacle(&p, 0, &dom, 201);
    let run = duopoly::running_reward(&p, 0);
    let disc_run = move |t: f64, x: &[f64]| (-p.epsilon * t).exp() * run(t, x);
    let opts = GeneratorOptions::default();
    let mid = 0.5 * (s.x_star[1] + s.x_hat[1]);

    let q = qvi_residual_nonzero_sum(&p.model(), &v[0], &disc_run, 0.0, &[1.1, mid], &obs, &opts).unwrap();
    assert_eq!(q.branch, Branch::Pde);
    assert!(q.residual.abs() < 1e-8);

    let x = [s.x_star[0] - 0.2, mid];
    let q = qvi_residual_nonzero_sum(&p.model(), &v[0], &disc_run, 0.0, &x, &obs, &opts).unwrap();
    assert_eq!(q.branch, Branch::Obstacle(1));
    assert!(q.residual.abs() <= 1e-6 * (1.0 + v[0].value(0.0, &x).unwrap().abs()));
}

#[test]
fn duopoly_region_labels() {
    let (p, s) = symmetric_duopoly();
    let v = duopoly::build_firm_values(&s, &p).unwrap();
    let dom = duopoly::default_domain(&s);
    let o1 = duopoly::obstacle(&p, 0, &dom, 201);
    let o2 = duopoly::obstacle(&p, 1, &dom, 201);
    let classify = |x: [f64; 2]| {
        classify_region([&v[0], &v[1]], 0.0, &x, [&o1, &o2], 1e-6).unwrap()
    };
    let (lo, hi) = (s.x_star[0] - 0.2, s.x_hat[0] + 0.1);
    assert_eq!(classify([lo, hi]).label, RegionLabel::I1);
    assert_eq!(classify([hi, lo]).label, RegionLabel::I2);
    assert_eq!(classify([hi, hi]).label, RegionLabel::I3);
    let both = classify([lo, lo]);
    assert_eq!(both.label, RegionLabel::I1);
    assert!(both.ambiguous);
}

#[test]
fn central_differences_are_second_order() {
    let f = FnCandidate {
        domain: line(-5.0, 5.0),
        f: |_: f64, x: &[f64]| (1.3 * x[0]).sin() + x[0].powi(3),
    };
    let x: f64 = 0.7;
    let exact_grad = 1.3 * (1.3 * x).cos() + 3.0 * x * x;
    let exact_hess = -1.69 * (1.3 * x).sin() + 6.0 * x;
    let err = |h: f64| {
        let d = finite_difference_derivatives(&f, 0.0, &[x], h).unwrap();
        ((d.grad[0] - exact_grad).abs(), (d.hess[0][0] - exact_hess).abs())
    };
    let (g1, h1) = err(1e-2);
    let (g2, h2) = err(5e-3);
    assert!((3.5..4.5).contains(&(g1 / g2)), "gradient ratio {}", g1 / g2);
    assert!((3.5..4.5).contains(&(h1 / h2)), "hessian ratio {}", h1 / h2);
}

#[test]
fn stencil_leaving_domain_is_domain_error() {
    let f = zero_line();
    assert!(matches!(
        finite_difference_derivatives(&f, 0.0, &[10.0], 1e-3),
        Err(Error::Domain(_))
    ));
}

#[test]
fn obstacle_without_feasible_impulse_never_binds() {
    let f = FnCandidate {
        domain: line(0.0, 1.0),
        f: |_: f64, _: &[f64]| 0.0,
    };
    let o = Obstacle {
        player: 1,
        cost: CostSpec::additive(1.0, 0.1, 0, CostSign::Subtracted, 0.0),
        mode: Mode::Sup,
        grid: ImpulseGrid::new(5.0, 6.0, 11),
    };
    assert_eq!(o.gap(&f, 0.0, &[0.5]).unwrap(), f64::INFINITY);
}
