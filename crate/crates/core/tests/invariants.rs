use fracseg_core::multiscale::{dwt2, leaders, LeaderStack, Wavelet};
use fracseg_core::proxcore::{
    grad, grad_adjoint, grad_norm_sq_estimate, order_pair, project_box01, project_hyperplane, project_ordered_pair,
    prox_dist, prox_l21, GradPair, HyperplaneSpec, GRAD_NORM_SQ_BOUND,
};
use fracseg_core::regression::{estimate_h, gaussian_smooth, ols_weights};
use fracseg_core::Field2D;
use proptest::prelude::*;

fn field(rows: usize, cols: usize) -> impl Strategy<Value = Field2D> {
    prop::collection::vec(-5.0f64..5.0, rows * cols).prop_map(move |d| Field2D::new(rows, cols, d).unwrap())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn pair_vec(p: &GradPair) -> Vec<f64> {
    p.g1.as_slice().iter().chain(p.g2.as_slice()).copied().collect()
}

fn grad_pair(rows: usize, cols: usize) -> impl Strategy<Value = GradPair> {
    (field(rows, cols), field(rows, cols)).prop_map(|(g1, g2)| GradPair { g1, g2 })
}

#[test]
fn ols_constraints_for_all_ranges() {
    for j1 in 1..12 {
        for j2 in j1 + 1..=12 {
            let (r1, r2) = ols_weights(j1, j2).unwrap().constraint_residuals();
            assert!(r1.abs() < 1e-12 && r2.abs() < 1e-12, "({j1},{j2}): {r1} {r2}");
        }
    }
}

#[test]
fn gradient_norm_bound_by_power_iteration() {
    for (r, c) in [(8, 8), (16, 9), (32, 32)] {
        let est = grad_norm_sq_estimate(r, c, 500);
        assert!(est <= GRAD_NORM_SQ_BOUND + 1e-6, "{r}x{c}: {est}");
        assert!(est > 6.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn grad_adjointness(h in field(8, 8), p in grad_pair(7, 7)) {
        let lhs = grad(&h).unwrap().dot(&p);
        let rhs = h.dot(&grad_adjoint(&p));
        let scale = norm(h.as_slice()) * norm(&pair_vec(&p));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn prox_l21_nonexpansive(a in grad_pair(3, 3), b in grad_pair(3, 3), t in 0.0f64..4.0) {
        let pa = pair_vec(&prox_l21(&a, t).unwrap());
        let pb = pair_vec(&prox_l21(&b, t).unwrap());
        prop_assert!(norm(&diff(&pa, &pb)) <= norm(&diff(&pair_vec(&a), &pair_vec(&b))) + 1e-10);
    }

    #[test]
    fn hyperplane_operators(
        u in prop::collection::vec(-5.0f64..5.0, 4),
        v in prop::collection::vec(-5.0f64..5.0, 4),
        eta in 0.0f64..10.0,
        which in 0usize..2,
    ) {
        let spec = if which == 0 { HyperplaneSpec::zero_sum(4).unwrap() } else { HyperplaneSpec::unit_slope(1, 4).unwrap() };
        let pu = project_hyperplane(&u, &spec).unwrap();
        let pv = project_hyperplane(&v, &spec).unwrap();
        prop_assert!(spec.residual(&pu).abs() < 1e-12);
        let again = project_hyperplane(&pu, &spec).unwrap();
        prop_assert!(norm(&diff(&again, &pu)) < 1e-12);
        prop_assert!(norm(&diff(&pu, &pv)) <= norm(&diff(&u, &v)) + 1e-10);
        let du = prox_dist(&u, &spec, eta).unwrap();
        let dv = prox_dist(&v, &spec, eta).unwrap();
        prop_assert!(norm(&diff(&du, &dv)) <= norm(&diff(&u, &v)) + 1e-10);
    }

    #[test]
    fn box_and_ordering_projections(a in field(4, 4), b in field(4, 4), c in field(4, 4), d in field(4, 4)) {
        let pa = project_box01(&a);
        prop_assert!(pa.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(project_box01(&pa), pa.clone());
        let pb = project_box01(&b);
        prop_assert!(norm(&diff(pa.as_slice(), pb.as_slice())) <= norm(&diff(a.as_slice(), b.as_slice())) + 1e-10);

        let (x, y) = project_ordered_pair(&a, &b).unwrap();
        prop_assert!(x.as_slice().iter().zip(y.as_slice()).all(|(p, q)| p >= q));
        let (x2, y2) = project_ordered_pair(&x, &y).unwrap();
        prop_assert!(norm(&diff(x2.as_slice(), x.as_slice())) < 1e-12 && norm(&diff(y2.as_slice(), y.as_slice())) < 1e-12);
        let (u, w) = project_ordered_pair(&c, &d).unwrap();
        let lhs: Vec<f64> = diff(x.as_slice(), u.as_slice()).into_iter().chain(diff(y.as_slice(), w.as_slice())).collect();
        let rhs: Vec<f64> = diff(a.as_slice(), c.as_slice()).into_iter().chain(diff(b.as_slice(), d.as_slice())).collect();
        prop_assert!(norm(&lhs) <= norm(&rhs) + 1e-10);
    }

    #[test]
    fn order_pair_is_feasible(a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let (x, y) = order_pair(a, b);
        prop_assert!(x >= y);
        prop_assert!((x + y - a - b).abs() < 1e-12);
    }
}

fn random_stack(seed: u64) -> LeaderStack {
    let mut s = seed;
    let f = Field2D::from_fn(64, 64, |_, _| {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    });
    leaders(&dwt2(&f, 4, Wavelet::default()).unwrap(), 1, 4, 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn estimate_is_linear_per_scale(seed in any::<u64>(), j in 1usize..=4, delta in -3.0f64..3.0) {
        let w = ols_weights(1, 4).unwrap();
        let mut stack = random_stack(seed);
        let before = estimate_h(&stack, &w).unwrap();
        stack.shift_scale(j, delta);
        let after = estimate_h(&stack, &w).unwrap();
        for (a, b) in after.as_slice().iter().zip(before.as_slice()) {
            prop_assert!((a - b - w.at(j) * delta).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothing_commutes_with_offsets(h in field(16, 16), c in -2.0f64..2.0, sigma in 0.5f64..3.0) {
        let a = gaussian_smooth(&h.map(|v| v + c), sigma).unwrap();
        let b = gaussian_smooth(&h, sigma).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y - c).abs() < 1e-12);
        }
    }
}
