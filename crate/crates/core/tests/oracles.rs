use multibin::*;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Beta, Continuous, ContinuousCDF};

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let mut s = f(a) + f(b);
    for i in 1..intervals {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `P(X > Y)` for independent Beta variables by quadrature.
fn beta_difference(e: (f64, f64), c: (f64, f64)) -> f64 {
    let be = Beta::new(e.0, e.1).unwrap();
    let bc = Beta::new(c.0, c.1).unwrap();
    simpson(|x| be.pdf(x) * bc.cdf(x), 0.0, 1.0, 20_000)
}

#[test]
fn one_outcome_matches_beta_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let draws = 200_000;
    for (e, c) in [((12.01, 8.01), (7.01, 13.01)), ((3.5, 3.5), (3.5, 3.5)), ((40.5, 10.5), (30.5, 20.5))] {
        let pe = DirichletParams::new(vec![e.0, e.1]).unwrap();
        let pc = DirichletParams::new(vec![c.0, c.1]).unwrap();
        let d = delta_draws(&sample_dirichlet(&pe, draws, &mut rng).unwrap(), &sample_dirichlet(&pc, draws, &mut rng).unwrap())
            .unwrap();
        let mc = superiority_probability(&DecisionRule::Single(0), &d).unwrap();
        let exact = beta_difference(e, c);
        let se = (exact * (1.0 - exact) / draws as f64).sqrt().max(1e-6);
        assert!((mc - exact).abs() < 4.0 * se, "{e:?} vs {c:?}: {mc} against {exact}");
    }
}

#[test]
fn bivariate_normal_matches_conditional_quadrature() {
    let grid: [f64; 5] = [-2.5, -1.0, 0.0, 0.7, 2.0];
    for &h in &grid {
        for &k in &grid {
            for r in [-0.99f64, -0.6, 0.0, 0.3, 0.8, 0.99] {
                let s = f64::sqrt(1.0 - r * r);
                let oracle = simpson(
                    |x| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt() * normal_cdf((k - r * x) / s),
                    -12.0,
                    h,
                    40_000,
                );
                let got = bvn_cdf(h, k, r);
                assert!((got - oracle).abs() < 1e-6, "h={h} k={k} r={r}: {got} vs {oracle}");
            }
        }
    }
}

#[test]
fn trivariate_orthant_probabilities() {
    let eye = DMatrix::<f64>::identity(3, 3);
    let p = mvn_cdf(&[0.3, -0.2, 1.1], &eye).unwrap();
    let product = normal_cdf(0.3) * normal_cdf(-0.2) * normal_cdf(1.1);
    assert!((p - product).abs() < 1e-5);

    // Equicorrelated orthant: 1/8 + 3 asin(r) / (4 pi).
    let r = 0.5;
    let corr = DMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { r });
    let exact = 0.125 + 3.0 * f64::asin(r) / (4.0 * std::f64::consts::PI);
    assert!((mvn_cdf(&[0.0; 3], &corr).unwrap() - exact).abs() < 1e-4);
}

#[test]
fn closed_form_moments_match_sampling() {
    let e = JointCounts::new(vec![30, 12, 9, 49]).unwrap();
    let c = JointCounts::new(vec![18, 15, 10, 57]).unwrap();
    let exact = posterior_moments(&e, &c).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mc = estimate_moments(&e, &c, 200_000, &mut rng).unwrap();
    for k in 0..2 {
        let sd = exact.cov[k][k].sqrt();
        assert!((exact.mu[k] - mc.mu[k]).abs() < 4.0 * sd / (200_000f64).sqrt());
        for l in 0..2 {
            assert!((exact.cov[k][l] - mc.cov[k][l]).abs() < 0.02 * exact.cov[k][k].max(exact.cov[l][l]));
        }
    }
}
