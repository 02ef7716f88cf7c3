use cocycle_lab::cocycle::{
    cocycle_product, exterior_matrix, gap_distance, operator_norm, right_increment_product, singular_data,
    spectral_radius, Cocycle, Mat, ProjectivePoint, ScaledMatrix,
};
use cocycle_lab::geometry::wedge_ratio;
use cocycle_lab::gibbs::{equilibrium_markov, EdgePotential};
use cocycle_lab::rng::stream_rng;
use cocycle_lab::stats::Proportion;
use cocycle_lab::symbolic::{ShiftSpace, Word};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn mat(d: usize, entries: &[f64]) -> Mat {
    Mat::from_row_slice(d, d, &entries[..d * d])
}

fn invertible(d: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-3.0..3.0f64, d * d)
        .prop_map(move |e| mat(d, &e))
        .prop_filter("well conditioned", |m| {
            let sv = m.singular_values();
            sv.min() > 1e-3 * sv.max()
        })
}

fn any_dim_invertible() -> impl Strategy<Value = Mat> {
    (2usize..=4).prop_flat_map(invertible)
}

fn unit_vector(d: usize) -> impl Strategy<Value = ProjectivePoint> {
    prop::collection::vec(-1.0..1.0f64, d)
        .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
        .prop_map(|v| ProjectivePoint::new(&v).unwrap())
}

fn same_point(p: &ProjectivePoint, q: &ProjectivePoint, tol: f64) -> bool {
    gap_distance(p, q) <= tol
}

fn gaussian(d: usize, rng: &mut impl Rng) -> Mat {
    Mat::from_fn(d, d, |_, _| StandardNormal.sample(rng))
}

fn random_cocycle(shift: &ShiftSpace, d: usize, seed: u64) -> Cocycle {
    let mut rng = stream_rng(seed, 0);
    let edges = shift
        .edges()
        .map(|e| loop {
            let g = gaussian(d, &mut rng);
            if g.determinant().abs() > 1e-2 {
                return (e, g);
            }
        })
        .collect();
    Cocycle::new(shift, d, edges).unwrap()
}

fn random_word(shift: &ShiftSpace, len: usize, seed: u64) -> Word {
    let measure = equilibrium_markov(shift, &EdgePotential::zero(shift)).unwrap();
    measure.sample_word(len, &mut stream_rng(seed, 1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn cocycle_law(seed in 0u64..10_000, n1 in 1usize..30, n2 in 1usize..30) {
        let shift = ShiftSpace::golden_mean();
        let c = random_cocycle(&shift, 3, seed);
        let w = random_word(&shift, n1 + n2 + 1, seed);
        let first = w.edge_window(0, n1);
        let second = w.edge_window(n1, n1 + n2);
        let whole = cocycle_product(&c, &w).unwrap();
        let split = cocycle_product(&c, &second).unwrap().compose(&cocycle_product(&c, &first).unwrap()).unwrap();
        let rel = (whole.to_matrix() - split.to_matrix()).norm() / whole.to_matrix().norm();
        prop_assert!(rel < 1e-10, "relative mismatch {rel}");
    }

    #[test]
    fn scaled_product_matches_naive(seed in 0u64..10_000, n in 1usize..12) {
        let shift = ShiftSpace::full(3).unwrap();
        let c = random_cocycle(&shift, 2, seed);
        let w = random_word(&shift, n + 1, seed);
        let mut naive = Mat::identity(2, 2);
        for (a, b) in w.edges() {
            naive = c.matrix(a, b) * naive;
        }
        let scaled = cocycle_product(&c, &w).unwrap().to_matrix();
        prop_assert!((scaled - &naive).norm() <= 1e-10 * naive.norm());
    }

    #[test]
    fn right_increment_is_the_transpose(seed in 0u64..10_000, n in 1usize..20) {
        let shift = ShiftSpace::full(2).unwrap();
        let c = random_cocycle(&shift, 3, seed);
        let w = random_word(&shift, n + 1, seed);
        let left = cocycle_product(&c, &w).unwrap();
        let right = right_increment_product(&c, &w).unwrap();
        prop_assert_eq!(right.to_matrix(), left.to_matrix().transpose());
        let (l, r) = (singular_data(&left).unwrap(), singular_data(&right).unwrap());
        if !l.degenerate_top {
            prop_assert!(same_point(&l.u, &r.s_normal, 1e-8));
            prop_assert!(same_point(&l.s_normal, &r.u, 1e-8));
        }
    }

    #[test]
    fn s_normal_is_u_of_adjoint(g in any_dim_invertible()) {
        let sd = singular_data(&ScaledMatrix::from_matrix(g.clone()).unwrap()).unwrap();
        let adj = singular_data(&ScaledMatrix::from_matrix(g.transpose()).unwrap()).unwrap();
        prop_assume!(!sd.degenerate_top);
        prop_assert!(same_point(&sd.s_normal, &adj.u, 1e-8));
        // g maps the top right singular direction onto u(g)
        let image = ProjectivePoint::from_vector(&(&g * sd.s_normal.to_vector())).unwrap();
        prop_assert!(same_point(&image, &sd.u, 1e-8));
        prop_assert!((sd.log_norm() - operator_norm(&g).ln()).abs() < 1e-10);
    }

    #[test]
    fn spectral_radius_below_norm(g in any_dim_invertible(), k in 1u32..6) {
        let p = g.pow(k);
        let rho = spectral_radius(&p).unwrap();
        prop_assert!(rho <= operator_norm(&p) * (1.0 + 1e-10));
        // Gelfand: ρ(gᵏ) = ρ(g)ᵏ
        let rho1 = spectral_radius(&g).unwrap();
        prop_assert!((rho - rho1.powi(k as i32)).abs() <= 1e-8 * rho.max(1.0));
        // ρ ≥ |det|^{1/d}
        let d = g.nrows() as f64;
        prop_assert!(rho >= p.determinant().abs().powf(1.0 / d) * (1.0 - 1e-10));
    }

    #[test]
    fn cauchy_binet(g in invertible(4), h in invertible(4), j in 1usize..=4) {
        let lhs = exterior_matrix(&(&g * &h), j).unwrap();
        let rhs = exterior_matrix(&g, j).unwrap() * exterior_matrix(&h, j).unwrap();
        prop_assert!((&lhs - &rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));
        if j == 4 {
            prop_assert!((lhs[(0, 0)] - (&g * &h).determinant()).abs() <= 1e-9 * lhs[(0, 0)].abs().max(1.0));
        }
    }

    #[test]
    fn exterior_norm_is_product_of_top_singular_values(g in any_dim_invertible()) {
        let sv = {
            let mut s: Vec<f64> = g.singular_values().iter().copied().collect();
            s.sort_by(|a, b| b.total_cmp(a));
            s
        };
        let wedge = operator_norm(&exterior_matrix(&g, 2).unwrap());
        prop_assert!((wedge - sv[0] * sv[1]).abs() <= 1e-10 * sv[0] * sv[1]);
        prop_assert!((wedge_ratio(&g).unwrap() - sv[1] / sv[0]).abs() <= 1e-10);
    }

    #[test]
    fn projective_canonicalization(p in unit_vector(3), c in prop_oneof![-5.0..-0.1f64, 0.1..5.0f64]) {
        let scaled: Vec<f64> = p.coords().iter().map(|x| x * c).collect();
        let q = ProjectivePoint::new(&scaled).unwrap();
        for (a, b) in p.coords().iter().zip(q.coords()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!(gap_distance(&p, &q) < 1e-12);
    }

    #[test]
    fn wilson_interval_brackets_estimate(k in 0u64..500, extra in 0u64..500) {
        let n = k + extra;
        prop_assume!(n > 0);
        let p = Proportion::wilson(k, n);
        prop_assert!(0.0 <= p.ci_lo && p.ci_lo <= p.estimate && p.estimate <= p.ci_hi && p.ci_hi <= 1.0);
    }

    #[test]
    fn equilibrium_is_stationary_and_stochastic(
        values in prop::collection::vec(-2.0..2.0f64, 9),
        mask in prop::collection::vec(prop::bool::weighted(0.7), 9),
    ) {
        let adjacency: Vec<Vec<u8>> = (0..3).map(|a| (0..3).map(|b| u8::from(mask[3 * a + b] || a == b || (a + 1) % 3 == b)).collect()).collect();
        let shift = ShiftSpace::new(adjacency).unwrap();
        let edges = shift.edges().map(|(a, b)| ((a, b), values[3 * a + b])).collect();
        let m = equilibrium_markov(&shift, &EdgePotential::from_edges(&shift, edges).unwrap()).unwrap();
        for a in 0..3 {
            prop_assert!((m.transition[a].iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let flow: f64 = (0..3).map(|b| m.stationary[b] * m.transition[b][a]).sum();
            prop_assert!((flow - m.stationary[a]).abs() < 1e-12);
        }
        let total: f64 = shift.enumerate_words(4, 1000).unwrap().iter().map(|w| m.cylinder_measure(w)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn gap_metric_axioms_on_random_triples() {
    let mut rng = stream_rng(2024, 0);
    let mut point = |d: usize| {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        ProjectivePoint::new(&v).unwrap()
    };
    for i in 0..100_000 {
        let d = 2 + i % 3;
        let (x, y, z) = (point(d), point(d), point(d));
        let (xy, yz, xz) = (gap_distance(&x, &y), gap_distance(&y, &z), gap_distance(&x, &z));
        assert!(xz <= xy + yz + 1e-12, "triangle inequality at {i}");
        assert!((xy - gap_distance(&y, &x)).abs() < 1e-15);
        assert!(gap_distance(&x, &x) < 1e-7);
        assert!((0.0..=1.0).contains(&xy));
        let flipped = ProjectivePoint::new(&x.coords().iter().map(|c| -c).collect::<Vec<_>>()).unwrap();
        assert!(gap_distance(&x, &flipped) < 1e-7);
    }
}

#[test]
fn wedge_ratio_on_gaussian_matrices() {
    let mut rng = stream_rng(7, 0);
    for i in 0..10_000 {
        let d = 2 + i % 3;
        let g = gaussian(d, &mut rng);
        let mut sv: Vec<f64> = g.singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        let r = wedge_ratio(&g).unwrap();
        assert!((r - sv[1] / sv[0]).abs() <= 1e-10 * (sv[1] / sv[0]).max(1e-300), "sample {i}");
    }
}
