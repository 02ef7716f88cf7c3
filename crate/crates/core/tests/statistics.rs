//! Monte Carlo estimators against exact oracles, at fixed seeds.

use cocycle_lab::cocycle::{exterior_power, Cocycle, Mat, ProjectivePoint};
use cocycle_lab::deviations::{deviation_tail, deviation_tails, DeviationEvent, DeviationKind, LambdaRef};
use cocycle_lab::geometry::{exact_independence, u_s_separation_curve, Threshold};
use cocycle_lab::gibbs::{correlation_decay, equilibrium_markov, EdgePotential, MarkovMeasure};
use cocycle_lab::irreducibility::{find_invariant_family, Verdict, DEFAULT_TOL};
use cocycle_lab::lyapunov::{exact_log_det_average, lyapunov_spectrum, rho_growth_curve, xi_stabilization};
use cocycle_lab::rng::stream_rng;
use cocycle_lab::symbolic::{ShiftSpace, Word, DEFAULT_WORD_CAP};
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{Binomial, Discrete};

fn reference() -> (ShiftSpace, MarkovMeasure, Cocycle) {
    let shift = ShiftSpace::golden_mean();
    let measure = equilibrium_markov(&shift, &EdgePotential::zero(&shift)).unwrap();
    let r2 = 2f64.sqrt();
    let c = Cocycle::from_fn(&shift, 2, |a, b| match (a, b) {
        (0, 0) => Mat::from_row_slice(2, 2, &[2.0 * r2, r2, r2, r2]),
        (0, 1) => Mat::from_row_slice(2, 2, &[0.0, -1.0, 1.5, 0.0]),
        _ => Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.5, 0.5]),
    })
    .unwrap();
    (shift, measure, c)
}

fn gaussian_cocycle(shift: &ShiftSpace, d: usize, seed: u64) -> Cocycle {
    let mut rng = stream_rng(seed, 0);
    let edges = shift.edges().map(|e| (e, Mat::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng)))).collect();
    Cocycle::new(shift, d, edges).unwrap()
}

/// Full 2-shift with i.i.d. fair symbols; `A(a, b) = diag(e^{±1}, 1)` by `b`.
fn iid_diagonal() -> (MarkovMeasure, Cocycle) {
    let shift = ShiftSpace::full(2).unwrap();
    let measure = equilibrium_markov(&shift, &EdgePotential::bernoulli(&shift, &[0.5, 0.5]).unwrap()).unwrap();
    let e = std::f64::consts::E;
    let c = Cocycle::from_fn(&shift, 2, |_, b| Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![if b == 0 { e } else { 1.0 / e }, 1.0])))
        .unwrap();
    (measure, c)
}

/// `P(|2K − n| > εn)` for `K ~ Bin(n, 1/2)`.
fn binomial_two_sided(n: usize, eps: f64) -> f64 {
    let b = Binomial::new(0.5, n as u64).unwrap();
    (0..=n as u64).filter(|&k| (2.0 * k as f64 - n as f64).abs() > eps * n as f64).map(|k| b.pmf(k)).sum()
}

#[test]
fn sum_rule_against_determinant_average() {
    let shift = ShiftSpace::golden_mean();
    for seed in 0..3 {
        let c = gaussian_cocycle(&shift, 3, seed);
        let m = equilibrium_markov(&shift, &EdgePotential::zero(&shift)).unwrap();
        let est = lyapunov_spectrum(&c, &m, 1000, 100, seed).unwrap();
        let exact = exact_log_det_average(&c, &m);
        assert!((est.sum - exact).abs() <= 3.0 * est.sum_std_error, "{} vs {exact}", est.sum);
        let s: f64 = est.lambdas.iter().sum();
        assert!((s - est.sum).abs() < 1e-10);
        assert!(est.lambdas.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn top_exponent_matches_norm_growth() {
    let (_, m, c) = reference();
    let est = lyapunov_spectrum(&c, &m, 2000, 100, 3).unwrap();
    let curve = rho_growth_curve(&c, &m, &[2000], 100, 4).unwrap();
    assert!((curve.summary[0].norm.median - est.lambdas[0]).abs() < 0.02);
    assert!(est.lambdas[0] - est.lambdas[1] > 0.2);
}

#[test]
fn wedge_spectrum_is_the_top_pair_sum() {
    let shift = ShiftSpace::full(2).unwrap();
    let m = equilibrium_markov(&shift, &EdgePotential::bernoulli(&shift, &[0.3, 0.7]).unwrap()).unwrap();
    let c = gaussian_cocycle(&shift, 3, 11);
    let est = lyapunov_spectrum(&c, &m, 1000, 100, 5).unwrap();
    let wedge = lyapunov_spectrum(&exterior_power(&c, 2).unwrap(), &m, 1000, 100, 6).unwrap();
    let se = (est.std_errors[0].powi(2) + est.std_errors[1].powi(2) + wedge.std_errors[0].powi(2)).sqrt();
    assert!((wedge.lambdas[0] - est.lambdas[0] - est.lambdas[1]).abs() <= 3.0 * se);
}

#[test]
fn xi_stabilizes() {
    let (_, m, c) = reference();
    let d: Vec<f64> = [10, 20, 40].iter().map(|&n| xi_stabilization(&c, &m, n, 400, 9).unwrap()).collect();
    assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
    assert!(d[2] < 1e-6);
}

#[test]
fn iid_tail_matches_binomial() {
    let (m, c) = iid_diagonal();
    // εn is never an integer here, so no lattice ties at the boundary
    let eps = 0.1234;
    let event = DeviationEvent::with_vector(DeviationKind::VectorTwoSided, eps, ProjectivePoint::axis(2, 0));
    let ns = [20, 40, 80, 160];
    let curve = deviation_tail(&c, &m, &event, LambdaRef::top(0.0), &ns, 4000, 21).unwrap();
    for pt in &curve.points {
        let exact = binomial_two_sided(pt.n, eps);
        assert!(pt.probability.contains(exact), "n={}: {:?} vs {exact}", pt.n, pt.probability);
    }
}

#[test]
fn tails_nest_in_epsilon_and_event() {
    let (_, m, c) = reference();
    let lref = LambdaRef::pair(0.236, -0.196);
    let ns = [20, 40, 80];
    let event = DeviationEvent::new(DeviationKind::NormTwoSided, 0.0);
    let curves = deviation_tails(&c, &m, &event, &[0.05, 0.1, 0.2], lref, &ns, 500, 8).unwrap();
    for k in 0..ns.len() {
        let p: Vec<u64> = curves.iter().map(|cv| cv.points[k].probability.successes).collect();
        assert!(p[0] >= p[1] && p[1] >= p[2], "{p:?}");
    }
    let upper = deviation_tail(&c, &m, &DeviationEvent::new(DeviationKind::NormUpper, 0.1), lref, &ns, 500, 8).unwrap();
    for (u, t) in upper.points.iter().zip(&curves[1].points) {
        assert!(u.probability.successes <= t.probability.successes);
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let (_, m, c) = reference();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            (lyapunov_spectrum(&c, &m, 200, 30, 1).unwrap(), rho_growth_curve(&c, &m, &[10, 50], 30, 2).unwrap())
        })
    };
    assert_eq!(run(1), run(4));
    let other = lyapunov_spectrum(&c, &m, 200, 30, 2).unwrap();
    assert_ne!(run(1).0, other);
}

#[test]
fn iid_segments_are_exactly_independent() {
    let (m, c) = iid_diagonal();
    let c = Cocycle::from_fn(c.shift(), 2, |a, b| c.matrix(a, b) * Mat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])).unwrap();
    for n in [2, 4, 6] {
        let ex = exact_independence(&c, &m, Threshold::Constant { radius: 0.3 }, n, DEFAULT_WORD_CAP).unwrap();
        assert!((ex.joint - ex.product).abs() < 1e-12, "{ex:?}");
    }
}

#[test]
fn separation_probability_decreases() {
    let (_, m, c) = reference();
    let curve = u_s_separation_curve(&c, &m, 0.43 / 21.0, &[25, 50, 100, 200], 2000, 13).unwrap();
    let p = curve.probabilities();
    assert!(p.windows(2).all(|w| w[0] >= w[1]), "{p:?}");
}

#[test]
fn parry_correlations_decay() {
    let (shift, m, _) = reference();
    let curve =
        correlation_decay(&m, &shift, &Word::new(vec![0, 0]), &Word::new(vec![1]), &[2, 4, 6, 8], 50_000, 3).unwrap();
    let exact: Vec<f64> = curve.points.iter().map(|p| p.exact.abs()).collect();
    assert!(exact.windows(2).all(|w| w[0] > w[1]));
    // the second eigenvalue of the Parry chain is −1/φ²
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    assert!((curve.exact_decay_rate.unwrap() - 2.0 * phi.ln()).abs() < 1e-6);
    for p in &curve.points {
        assert!((p.estimate - p.exact.abs()).abs() <= p.half_width + 1e-3);
    }
}

#[test]
fn generic_cocycle_is_certified_under_doubled_bounds() {
    let shift = ShiftSpace::full(2).unwrap();
    let c = gaussian_cocycle(&shift, 3, 17);
    for (m_max, len) in [(4, 6), (8, 12)] {
        for l in 1..3 {
            let r = find_invariant_family(&c, l, m_max, len, DEFAULT_TOL).unwrap();
            assert_eq!(r.verdict, Verdict::CertifiedUpToBounds, "l={l} m={m_max} L={len}");
            assert!(r.certificate_log.seeds > 0);
        }
    }
}
