use lmoopt_core::linalg::{combine, NormKind, ParamValue, Shape};
use lmoopt_core::lmo::{self, Geometry, LmoSet};
use lmoopt_core::optimizer::{
    group_distance, init_state, step_igt, step_nesterov, step_stochastic_lmo, step_unified,
    NesterovParams, UnifiedParams,
};
use lmoopt_core::problems::{
    make_logistic_finite_sum, make_matrix_quadratic, make_noisy_quadratic, make_nonconvex_smooth,
    NoiseModel, StochasticOracle,
};
use lmoopt_core::rng::SampleId;
use proptest::prelude::*;

fn matrix_strategy(max_dim: usize) -> impl Strategy<Value = ParamValue> {
    (1..=max_dim, 1..=max_dim).prop_flat_map(|(m, n)| {
        prop::collection::vec(-10.0..10.0f64, m * n)
            .prop_map(move |d| ParamValue::matrix(m, n, d).unwrap())
    })
}

fn vector_strategy(max_dim: usize) -> impl Strategy<Value = ParamValue> {
    (1..=max_dim).prop_flat_map(|n| {
        prop::collection::vec(-10.0..10.0f64, n).prop_map(|d| ParamValue::vector(d).unwrap())
    })
}

fn set_for(p: &ParamValue, which: u8, r: f64) -> LmoSet {
    match (which % 3, p.shape().is_matrix()) {
        (0, _) => LmoSet::euclidean(r).unwrap(),
        (1, _) | (2, false) => LmoSet::linf(r).unwrap(),
        (2, true) => LmoSet::operator_norm(r).unwrap(),
        _ => unreachable!(),
    }
}

fn any_param() -> impl Strategy<Value = ParamValue> {
    prop_oneof![vector_strategy(6), matrix_strategy(5)]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn svd_reconstructs_and_is_orthonormal(m in matrix_strategy(6)) {
        let svd = m.svd().unwrap();
        let back = svd.reconstruct().unwrap();
        let scale = m.l2().max(1.0);
        prop_assert!(back.distance(&m).unwrap() <= 1e-8 * scale);
        let r = svd.s.len();
        let utu = svd.u.transpose().unwrap().matmul(&svd.u).unwrap();
        let vtv = svd.v.transpose().unwrap().matmul(&svd.v).unwrap();
        prop_assert!(utu.distance(&ParamValue::identity(r)).unwrap() < 1e-10);
        prop_assert!(vtv.distance(&ParamValue::identity(r)).unwrap() < 1e-10);
        prop_assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(svd.s.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn matrix_norms_follow_singular_values(m in matrix_strategy(5)) {
        let s = m.svd().unwrap().s;
        let nuc = m.norm(NormKind::Nuclear).unwrap();
        let spec = m.norm(NormKind::Spectral).unwrap();
        prop_assert!((nuc - s.iter().sum::<f64>()).abs() <= 1e-12 * nuc.max(1.0));
        prop_assert!((spec - s[0]).abs() <= 1e-12 * spec.max(1.0));
        let fro = libm::sqrt(s.iter().map(|x| x * x).sum());
        prop_assert!((fro - m.l2()).abs() <= 1e-10 * fro.max(1.0));
        prop_assert!(spec <= m.l2() * (1.0 + 1e-12) && m.l2() <= nuc * (1.0 + 1e-12));
    }

    #[test]
    fn norms_are_norms(
        (a, b) in (1usize..5, 1usize..5).prop_flat_map(|(m, n)| (
            prop::collection::vec(-10.0..10.0f64, m * n),
            prop::collection::vec(-10.0..10.0f64, m * n),
        ).prop_map(move |(x, y)| (
            ParamValue::matrix(m, n, x).unwrap(),
            ParamValue::matrix(m, n, y).unwrap(),
        ))),
        c in -5.0..5.0f64,
    ) {
        let sum = a.add(&b).unwrap();
        let ca = a.scaled(c).unwrap();
        for kind in [NormKind::L1, NormKind::L2, NormKind::LInf, NormKind::Nuclear, NormKind::Spectral] {
            let na = a.norm(kind).unwrap();
            let nb = b.norm(kind).unwrap();
            prop_assert!(sum.norm(kind).unwrap() <= (na + nb) * (1.0 + 1e-12) + 1e-12);
            prop_assert!((ca.norm(kind).unwrap() - c.abs() * na).abs() <= 1e-10 * (1.0 + c.abs() * na));
        }
    }

    #[test]
    fn lmo_is_feasible_and_dual(g in any_param(), which in 0u8..3, r in 0.1..5.0f64) {
        let set = set_for(&g, which, r);
        let v = set.lmo(&g).unwrap();
        prop_assert!(set.contains(&v, 1e-10).unwrap());
        let h = set.support_value(&g).unwrap();
        prop_assert!((g.dot(&v).unwrap() + h).abs() <= 1e-10 * h.max(1.0));
    }

    #[test]
    fn lmo_beats_random_feasible_points(g in any_param(), which in 0u8..3, seed in any::<u64>()) {
        let set = set_for(&g, which, 1.0);
        let v = set.lmo(&g).unwrap();
        let sampled = lmo::lmo_bruteforce(&set, &g, 500, seed).unwrap();
        let tol = 1e-10 * g.l2().max(1.0);
        prop_assert!(g.dot(&v).unwrap() <= g.dot(&sampled).unwrap() + tol);
    }

    #[test]
    fn lmo_is_scale_invariant_in_g(g in any_param(), which in 0u8..3, c in 0.01..100.0f64) {
        let set = set_for(&g, which, 1.0);
        let a = set.lmo(&g).unwrap();
        let b = set.lmo(&g.scaled(c).unwrap()).unwrap();
        let us = set.support_value(&g).unwrap();
        // Compare objective values; ties (sign(0), rank deficiency) may pick
        // different minimizers with equal value.
        prop_assert!((g.dot(&a).unwrap() - g.dot(&b).unwrap()).abs() <= 1e-9 * us.max(1.0));
        if set.geometry() != Geometry::OperatorNorm {
            prop_assert!(a.distance(&b).unwrap() <= 1e-12 * a.l2().max(1.0));
        }
    }

    #[test]
    fn lmo_scales_with_radius(g in any_param(), which in 0u8..3, r in 0.1..10.0f64) {
        let unit = set_for(&g, which, 1.0);
        let big = set_for(&g, which, r);
        let a = unit.lmo(&g).unwrap().scaled(r).unwrap();
        let b = big.lmo(&g).unwrap();
        prop_assert!(a.distance(&b).unwrap() <= 1e-10 * r.max(1.0));
    }

    #[test]
    fn rsf_bounded_by_diameter_times_gradient(
        (w, grad) in (1usize..5, 1usize..5).prop_flat_map(|(m, n)| (
            prop::collection::vec(-1.0..1.0f64, m * n),
            prop::collection::vec(-10.0..10.0f64, m * n),
        ).prop_map(move |(x, y)| (
            ParamValue::matrix(m, n, x).unwrap(),
            ParamValue::matrix(m, n, y).unwrap(),
        ))),
        which in 0u8..3,
        lambda in 0.0..2.0f64,
    ) {
        let set = set_for(&w, which, 1.0);
        // Project λw into C so the point is feasible.
        let g0 = set.gauge(&w).unwrap() * lambda;
        let w = if g0 > 1.0 { w.scaled(1.0 / g0).unwrap() } else { w };
        let psi = lmo::rsf(&set, lambda, &w, &grad).unwrap();
        let r = set.diameter(w.shape()).unwrap();
        prop_assert!(psi.value >= -1e-10);
        prop_assert!(psi.value <= r * grad.l2() * (1.0 + 1e-12) + 1e-12);
        if lambda > 0.0 {
            let gap = lmo::frank_wolfe_gap(&set, lambda, &w, &grad).unwrap();
            prop_assert!((psi.value - lambda * gap).abs() <= 1e-10 * psi.value.abs().max(1.0));
        }
    }
}

fn quadratic(seed: u64, sigma: f64) -> lmoopt_core::problems::NoisyQuadratic {
    make_noisy_quadratic(4, &[0.5, 1.0, 2.0, 4.0], NoiseModel::Additive { sigma }, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn unified_reduces_to_stochastic_lmo(
        seed in any::<u64>(),
        b1 in 0.0..0.95f64,
        db in 0.0..0.04f64,
        eta in 0.001..0.3f64,
        lambda in 0.0..1.0f64,
        which in 0u8..2,
    ) {
        let q = quadratic(seed, 0.5);
        let p = UnifiedParams::stochastic_lmo(b1, b1 + db, lambda, eta).unwrap();
        let set = [set_for(&q.initial_point()[0], which, 1.0)];
        let mut a = init_state(q.initial_point(), &q, seed).unwrap();
        let mut b = init_state(q.initial_point(), &q, seed).unwrap();
        for _ in 0..30 {
            step_unified(&mut a, &p, &set, &q).unwrap();
            step_stochastic_lmo(&mut b, &p, &set, &q).unwrap();
            for (x, y) in a.w[0].data().iter().zip(b.w[0].data()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn igt_forms_agree_and_extrapolate(
        seed in any::<u64>(),
        b1 in 0.0..0.9f64,
        b2 in 0.0..0.9f64,
        eta in 0.001..0.1f64,
        lambda in 0.0..1.0f64,
    ) {
        let (b1, b2) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
        let q = quadratic(seed, 0.5);
        let p = UnifiedParams::igt(b1, b2, lambda, eta).unwrap();
        let set = [LmoSet::euclidean(1.0).unwrap()];
        let r = set[0].diameter(Shape::Vector(4)).unwrap();
        // The distance bound needs λw₀ ∈ C.
        let w0 = q.initial_point()[0].clone();
        let k = lambda * w0.l2();
        let w0 = vec![if k > 1.0 { w0.scaled(1.0 / k).unwrap() } else { w0 }];
        let mut a = init_state(w0.clone(), &q, seed).unwrap();
        let mut b = init_state(w0, &q, seed).unwrap();
        let c = b2 / (1.0 - b2);
        for _ in 0..30 {
            let w_prev = a.w.clone();
            step_unified(&mut a, &p, &set, &q).unwrap();
            step_igt(&mut b, &p, &set, &q).unwrap();
            prop_assert!(group_distance(&a.w, &b.w).unwrap() <= 1e-12);
            prop_assert!(group_distance(&a.x, &b.x).unwrap() <= 1e-12);
            let pred = combine(&[1.0 + c, -c], &[&a.w[0], &w_prev[0]]).unwrap();
            prop_assert!(a.x[0].distance(&pred).unwrap() <= 1e-10);
            prop_assert!(a.x[0].distance(&a.w[0]).unwrap() <= (p.eta1 - p.eta2) * r + 1e-12);
        }
    }

    #[test]
    fn nesterov_query_matches_two_momentum_query(
        seed in any::<u64>(),
        bar in 0.0..=1.0f64,
        b2 in 0.0..0.99f64,
        eta in 0.001..0.2f64,
    ) {
        let q = quadratic(seed, 0.8);
        let np = NesterovParams { beta1_bar: bar, beta2: b2, lambda: 0.0, eta1: eta, eta2: eta };
        let up = np.to_unified().unwrap();
        let set = [LmoSet::linf(1.0).unwrap()];
        let mut a = init_state(q.initial_point(), &q, seed).unwrap();
        let mut b = init_state(q.initial_point(), &q, seed).unwrap();
        for _ in 0..20 {
            let da = step_nesterov(&mut a, &np, &set, &q).unwrap();
            let db = step_unified(&mut b, &up, &set, &q).unwrap();
            for (x, y) in da.g[0].data().iter().zip(db.g[0].data()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
            // Exact ties in sign(g) could split the iterates; stop comparing if so.
            if a.w != b.w {
                break;
            }
        }
    }

    #[test]
    fn steps_are_short_and_stay_feasible(
        seed in any::<u64>(),
        b1 in 0.0..0.9f64,
        eta in 0.01..0.5f64,
        lambda in 0.1..2.0f64,
        which in 0u8..3,
        vr in any::<bool>(),
    ) {
        let q = make_matrix_quadratic(3, 2, seed, 0.3, seed ^ 1).unwrap();
        let set = [set_for(&q.initial_point()[0], which, 1.0)];
        let eta = eta.min(1.0 / lambda);
        let p = if vr {
            UnifiedParams::variance_reduced(b1, 0.95, b1, 0.95, lambda, eta).unwrap()
        } else {
            UnifiedParams::stochastic_lmo(b1, 0.95, lambda, eta).unwrap()
        };
        let r = set[0].diameter(Shape::Matrix(3, 2)).unwrap();
        let mut s = init_state(q.initial_point(), &q, seed).unwrap();
        for _ in 0..25 {
            let d = step_unified(&mut s, &p, &set, &q).unwrap();
            prop_assert!(d.step_norm <= eta * r + 1e-12);
            prop_assert!(set[0].contains(&s.w[0].scaled(lambda).unwrap(), 1e-10).unwrap());
        }
    }

    #[test]
    fn gradient_counter_per_step(seed in any::<u64>(), a1 in -1.0..1.0f64, steps in 1u64..12) {
        let q = quadratic(seed, 0.2);
        let set = [LmoSet::euclidean(1.0).unwrap()];
        let p = UnifiedParams::variance_reduced(0.5, 0.9, a1, 0.0, 0.0, 0.05).unwrap();
        let mut s = init_state(q.initial_point(), &q, seed).unwrap();
        let before = q.eval_count();
        for _ in 0..steps {
            step_unified(&mut s, &p, &set, &q).unwrap();
        }
        let per = if a1 == 0.0 { 1 } else { 2 };
        prop_assert_eq!(q.eval_count() - before, per * steps);
    }
}

fn central_difference_check(oracle: &dyn StochasticOracle, w: &[ParamValue], sample: SampleId) {
    let h = 1e-6;
    let g = oracle.sample_grad_uncounted(w, sample).unwrap();
    for (gi, (wi, gv)) in w.iter().zip(&g).enumerate() {
        for k in 0..wi.len() {
            let mut plus = w.to_vec();
            let mut minus = w.to_vec();
            let mut e = vec![0.0; wi.len()];
            e[k] = h;
            let e = ParamValue::new(wi.shape(), e).unwrap();
            plus[gi] = wi.add(&e).unwrap();
            minus[gi] = wi.sub(&e).unwrap();
            let fd = (oracle.sample_loss(&plus, sample).unwrap()
                - oracle.sample_loss(&minus, sample).unwrap())
                / (2.0 * h);
            let exact = gv.data()[k];
            let scale = exact.abs().max(1.0);
            assert!(
                (fd - exact).abs() <= 1e-5 * scale,
                "{}: coordinate {k}: fd {fd} vs {exact}",
                oracle.name()
            );
        }
    }
}

#[test]
fn sample_gradients_match_finite_differences() {
    let oracles: Vec<Box<dyn StochasticOracle>> = vec![
        Box::new(quadratic(1, 0.7)),
        Box::new(
            make_noisy_quadratic(3, &[1.0, 2.0, 3.0], NoiseModel::Coordinatewise { sigma: 0.9 }, 2)
                .unwrap(),
        ),
        Box::new(make_nonconvex_smooth(4, 0.3, 0.5, 3).unwrap()),
        Box::new(make_matrix_quadratic(2, 3, 7, 0.4, 4).unwrap()),
        Box::new(make_logistic_finite_sum(30, 4, 6, 5).unwrap()),
    ];
    for o in &oracles {
        let mut rng_pt = lmoopt_core::rng::NoiseKey::new(99).setup(1);
        for s in 0..5u64 {
            let w: Vec<ParamValue> = o
                .shapes()
                .iter()
                .map(|&shape| {
                    let d = lmoopt_core::rng::standard_normals(&mut rng_pt, shape.numel());
                    ParamValue::new(shape, d).unwrap()
                })
                .collect();
            central_difference_check(o.as_ref(), &w, SampleId(s * 7919 + 3));
        }
    }
}

#[test]
fn full_gradients_match_mean_of_many_samples() {
    // Unbiasedness: averaging ∇f over samples approaches ∇F at rate σ/√n.
    let q = make_nonconvex_smooth(3, 0.2, 1.0, 11).unwrap();
    let w = vec![ParamValue::vector(vec![0.3, -1.2, 2.0]).unwrap()];
    let n = 20_000u64;
    let mut acc = [0.0; 3];
    for s in 0..n {
        let g = q.sample_grad_uncounted(&w, SampleId(s)).unwrap();
        acc.iter_mut().zip(g[0].data()).for_each(|(a, b)| *a += b);
    }
    let full = q.full_grad(&w).unwrap();
    let err: f64 = acc
        .iter()
        .zip(full[0].data())
        .map(|(a, b)| (a / n as f64 - b).powi(2))
        .sum::<f64>()
        .sqrt();
    // E err² = σ²/n, so 5σ/√n is a generous envelope.
    assert!(err < 5.0 / (n as f64).sqrt(), "{err}");
}

#[test]
fn logistic_sigma_bounds_minibatch_variance() {
    let p = make_logistic_finite_sum(20, 3, 4, 21).unwrap();
    let sigma = p.regularity().sigma;
    let w = vec![ParamValue::vector(vec![0.5, -0.4, 1.0]).unwrap()];
    let full = p.full_grad(&w).unwrap();
    let n = 20_000u64;
    let mut var = 0.0;
    for s in 0..n {
        let d = p.sample_grad_uncounted(&w, SampleId(s)).unwrap()[0]
            .distance(&full[0])
            .unwrap();
        var += d * d;
    }
    var /= n as f64;
    assert!(var <= sigma * sigma * 1.05, "{var} vs {}", sigma * sigma);
}

#[test]
fn hessian_vector_products_match_gradient_differences() {
    let oracles: Vec<Box<dyn StochasticOracle>> = vec![
        Box::new(make_nonconvex_smooth(3, 0.1, 0.0, 0).unwrap()),
        Box::new(make_logistic_finite_sum(25, 3, 25, 2).unwrap()),
        Box::new(make_matrix_quadratic(2, 2, 3, 0.0, 0).unwrap()),
    ];
    for o in &oracles {
        let w: Vec<ParamValue> = o
            .shapes()
            .iter()
            .map(|&s| ParamValue::new(s, (0..s.numel()).map(|i| 0.3 * i as f64 - 0.4).collect()).unwrap())
            .collect();
        let dir: Vec<ParamValue> = o
            .shapes()
            .iter()
            .map(|&s| ParamValue::new(s, (0..s.numel()).map(|i| 1.0 - 0.5 * i as f64).collect()).unwrap())
            .collect();
        let h = 1e-5;
        let plus: Vec<_> = w.iter().zip(&dir).map(|(a, b)| combine(&[1.0, h], &[a, b]).unwrap()).collect();
        let minus: Vec<_> = w.iter().zip(&dir).map(|(a, b)| combine(&[1.0, -h], &[a, b]).unwrap()).collect();
        let gp = o.full_grad(&plus).unwrap();
        let gm = o.full_grad(&minus).unwrap();
        let hv = o.hessian_vec(&w, &dir).unwrap().unwrap();
        for ((a, b), c) in gp.iter().zip(&gm).zip(&hv) {
            for ((x, y), z) in a.data().iter().zip(b.data()).zip(c.data()) {
                assert!(((x - y) / (2.0 * h) - z).abs() < 1e-7, "{}", o.name());
            }
        }
    }
}
